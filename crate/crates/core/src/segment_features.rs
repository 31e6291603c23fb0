//! The 84 per-segment time-domain features, heart rate and the
//! last-seven-segments baseline vector.
//!
//! Column layout (x in samples, y in mV, x relative to the segment's Q):
//!
//! | columns | content |
//! |---|---|
//! | 0..10  | `Px, Py, Qx, Qy, Rx, Ry, Sx, Sy, Tx, Ty` |
//! | 10..14 | `OnQRS_x, OnQRS_y, OFFQRS_x, OFFQRS_y` |
//! | 14..35 | x distance for every landmark pair (21) |
//! | 35..56 | y difference for every landmark pair (21) |
//! | 56..63 | next segment minus this one, x, per landmark (`PP_interval`, `RR_interval`, ...) |
//! | 63..70 | next segment minus this one, y (`R-R_amplitude`, ...) |
//! | 70..77 | next-but-one segment, x (`RR2_interval`, ...) |
//! | 77..84 | next-but-one segment, y (`R-R2_amplitude`, ...) |
//!
//! Landmarks are ordered P, Q, R, S, T, OnQRS, OffQRS throughout.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::segmentation::{Beat, BeatSequence};

pub const N_SEGMENT_FEATURES: usize = 84;
/// Segments kept by the last-seconds baseline.
pub const LLF_SEGMENTS: usize = 7;
pub const N_LLF: usize = N_SEGMENT_FEATURES * LLF_SEGMENTS;

const LANDMARKS: [&str; 7] = ["P", "Q", "R", "S", "T", "OnQRS", "OffQRS"];

/// Canonical names of the 84 columns, in order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = ["P", "Q", "R", "S", "T"]
            .iter()
            .flat_map(|l| [format!("{l}x"), format!("{l}y")])
            .collect();
        names.extend(["OnQRS_x", "OnQRS_y", "OFFQRS_x", "OFFQRS_y"].map(String::from));
        let pairs: Vec<(usize, usize)> = (0..7)
            .flat_map(|a| (a + 1..7).map(move |b| (a, b)))
            .collect();
        names.extend(pairs.iter().map(|&(a, b)| format!("dx_{}_{}", LANDMARKS[a], LANDMARKS[b])));
        names.extend(pairs.iter().map(|&(a, b)| format!("dy_{}_{}", LANDMARKS[a], LANDMARKS[b])));
        let short = |l: &str| if l.len() == 1 { l.to_string() } else { format!("{l}_") };
        names.extend(LANDMARKS.iter().map(|l| format!("{}{l}_interval", short(l))));
        names.extend(LANDMARKS.iter().map(|l| format!("{l}-{l}_amplitude")));
        names.extend(LANDMARKS.iter().map(|l| format!("{}{l}2_interval", short(l))));
        names.extend(LANDMARKS.iter().map(|l| format!("{l}-{l}2_amplitude")));
        names
    })
}

/// Index of a named column.
pub fn column_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatureMatrix {
    pub record_name: String,
    pub rows: Matrix,
}

impl SegmentFeatureMatrix {
    pub fn empty(record_name: &str) -> Self {
        Self {
            record_name: record_name.to_string(),
            rows: Matrix::empty(N_SEGMENT_FEATURES),
        }
    }

    pub fn feature_names(&self) -> &'static [String] {
        feature_names()
    }

    pub fn n_segments(&self) -> usize {
        self.rows.n_rows()
    }

    /// CSV export with the canonical column names.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(feature_names())?;
        for row in self.rows.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<segment features>", e))?;
        Ok(())
    }
}

fn coords(b: &Beat) -> ([f64; 7], [f64; 7]) {
    let l = b.landmarks();
    (l.map(|m| m.x as f64), l.map(|m| m.y))
}

/// One row per beat that has two successors; the last two beats only serve
/// as successors.
pub fn segment_features(beats: &BeatSequence) -> Result<SegmentFeatureMatrix> {
    if beats.is_empty() {
        return Err(Error::EmptyBeats);
    }
    let b = &beats.beats;
    let mut rows = Matrix::empty(N_SEGMENT_FEATURES);
    let mut row = Vec::with_capacity(N_SEGMENT_FEATURES);
    for i in 0..b.len().saturating_sub(2) {
        let (x, y) = coords(&b[i]);
        let (x1, y1) = coords(&b[i + 1]);
        let (x2, y2) = coords(&b[i + 2]);
        let q = x[1];

        row.clear();
        for k in 0..7 {
            row.push(x[k] - q);
            row.push(y[k]);
        }
        for a in 0..7 {
            for c in a + 1..7 {
                row.push(x[c] - x[a]);
            }
        }
        for a in 0..7 {
            for c in a + 1..7 {
                row.push(y[c] - y[a]);
            }
        }
        row.extend((0..7).map(|k| x1[k] - x[k]));
        row.extend((0..7).map(|k| y1[k] - y[k]));
        row.extend((0..7).map(|k| x2[k] - x[k]));
        row.extend((0..7).map(|k| y2[k] - y[k]));
        debug_assert_eq!(row.len(), N_SEGMENT_FEATURES);
        rows.push_row(&row)?;
    }
    Ok(SegmentFeatureMatrix {
        record_name: beats.record_name.clone(),
        rows,
    })
}

/// Mean heart rate in bpm from successive R-to-R gaps, 0 with fewer than two
/// beats.
pub fn heart_rate(beats: &BeatSequence) -> f64 {
    let b = &beats.beats;
    if b.len() < 2 {
        return 0.0;
    }
    let span = (b[b.len() - 1].r.x - b[0].r.x) as f64;
    let mean_rr = span / (b.len() - 1) as f64;
    60.0 * beats.sampling_rate / mean_rr
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlfVector {
    pub record_name: String,
    pub values: Vec<f64>,
}

/// The last seven rows, oldest first, left-padded with zero rows.
pub fn llf_tail(matrix: &SegmentFeatureMatrix) -> LlfVector {
    let n = matrix.n_segments();
    let take = n.min(LLF_SEGMENTS);
    let mut values = vec![0.0; (LLF_SEGMENTS - take) * N_SEGMENT_FEATURES];
    for i in n - take..n {
        values.extend_from_slice(matrix.rows.row(i));
    }
    LlfVector {
        record_name: matrix.record_name.clone(),
        values,
    }
}

/// Column names of the LLF vector: `s1_Px ... s7_R-R2_amplitude`, s7 newest.
pub fn llf_names() -> Vec<String> {
    (1..=LLF_SEGMENTS)
        .flat_map(|s| feature_names().iter().map(move |n| format!("s{s}_{n}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::Landmark;

    /// Beat with landmarks at `r + offsets`, amplitudes `ys`.
    fn beat(r: usize, offsets: [i64; 5], ys: [f64; 5]) -> Beat {
        let lm = |k: usize| Landmark {
            x: (r as i64 + offsets[k]) as usize,
            y: ys[k],
        };
        let (p, q, s, t) = (lm(0), lm(1), lm(3), lm(4));
        Beat {
            p,
            q,
            r: lm(2),
            s,
            t,
            on_qrs: Landmark { x: (p.x + q.x).div_ceil(2), y: 0.0 },
            off_qrs: Landmark { x: (s.x + t.x).div_ceil(2), y: 0.0 },
        }
    }

    const OFF: [i64; 5] = [-50, -10, 0, 8, 70];
    const YS: [f64; 5] = [0.1, -0.2, 1.0, -0.3, 0.3];

    fn seq(rs: &[usize]) -> BeatSequence {
        BeatSequence {
            record_name: "t".into(),
            beats: rs.iter().map(|&r| beat(r, OFF, YS)).collect(),
            sampling_rate: 250.0,
        }
    }

    fn col(name: &str) -> usize {
        column_index(name).unwrap_or_else(|| panic!("no column {name}"))
    }

    #[test]
    fn layout_has_84_unique_names() {
        let names = feature_names();
        assert_eq!(names.len(), 84);
        let mut sorted = names.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 84);
        for n in [
            "Px", "Py", "Qx", "Qy", "Rx", "Ry", "Sx", "Sy", "Tx", "Ty", "OnQRS_x", "OnQRS_y",
            "OFFQRS_x", "OFFQRS_y", "PP_interval", "RR_interval", "RR2_interval",
            "R-R_amplitude", "R-R2_amplitude",
        ] {
            assert!(column_index(n).is_some(), "{n}");
        }
        assert_eq!(col("Px"), 0);
        assert_eq!(col("OFFQRS_y"), 13);
    }

    #[test]
    fn q_is_reference_and_identical_beats_give_zero_amplitude_change() {
        let m = segment_features(&seq(&[1000, 1200, 1400, 1600])).unwrap();
        assert_eq!(m.n_segments(), 2);
        for row in m.rows.rows() {
            assert_eq!(row[col("Qx")], 0.0);
            assert_eq!(row[col("RR_interval")], 200.0);
            assert_eq!(row[col("RR2_interval")], 400.0);
            assert_eq!(row[col("PP_interval")], 200.0);
            assert_eq!(row[col("R-R_amplitude")], 0.0);
            assert_eq!(row[col("Rx")], 10.0);
            assert_eq!(row[col("dx_P_Q")], 40.0);
        }
    }

    #[test]
    fn on_qrs_is_pq_midpoint() {
        let mut s = seq(&[1000, 1200, 1400]);
        s.beats[0] = beat(1000, [-50, 0, 10, 15, 60], YS);
        let m = segment_features(&s).unwrap();
        assert_eq!(m.rows.get(0, col("Px")), -50.0);
        assert_eq!(m.rows.get(0, col("OnQRS_x")), -25.0);
    }

    #[test]
    fn empty_beats_is_error_and_short_sequences_are_empty() {
        assert!(matches!(segment_features(&seq(&[])), Err(Error::EmptyBeats)));
        assert_eq!(segment_features(&seq(&[500, 700])).unwrap().n_segments(), 0);
    }

    #[test]
    fn heart_rate_from_rr() {
        assert_eq!(heart_rate(&seq(&[100, 350, 600, 850])), 60.0);
        assert_eq!(heart_rate(&seq(&[100, 225, 350])), 120.0);
        assert_eq!(heart_rate(&seq(&[100])), 0.0);
    }

    #[test]
    fn llf_slicing_and_padding() {
        let rs: Vec<usize> = (0..12).map(|i| 100 + 200 * i).collect();
        let m = segment_features(&seq(&rs)).unwrap();
        assert_eq!(m.n_segments(), 10);
        let v = llf_tail(&m);
        assert_eq!(v.values.len(), 588);
        assert_eq!(&v.values[..84], m.rows.row(3));
        assert_eq!(&v.values[504..], m.rows.row(9));

        let m3 = segment_features(&seq(&rs[..5])).unwrap();
        let v3 = llf_tail(&m3);
        assert_eq!(v3.values.len(), 588);
        assert!(v3.values[..4 * 84].iter().all(|&x| x == 0.0));
        assert_eq!(&v3.values[4 * 84..5 * 84], m3.rows.row(0));

        let v0 = llf_tail(&SegmentFeatureMatrix::empty("z"));
        assert_eq!(v0.values, vec![0.0; 588]);
        assert_eq!(llf_names().len(), 588);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn jittered(rs: &[usize], jitter: &[(i64, f64)], shift: usize, scale: f64) -> BeatSequence {
            BeatSequence {
                record_name: "p".into(),
                beats: rs
                    .iter()
                    .zip(jitter)
                    .map(|(&r, &(dx, dy))| {
                        let mut off = OFF;
                        off[4] += dx;
                        let ys = YS.map(|y| (y + dy) * scale);
                        let mut b = beat(r + shift, off, ys);
                        b.on_qrs.y = dy * scale;
                        b.off_qrs.y = -dy * scale;
                        b
                    })
                    .collect(),
                sampling_rate: 250.0,
            }
        }

        proptest! {
            #[test]
            fn shift_invariance_and_amplitude_scaling(
                gaps in proptest::collection::vec(150usize..300, 4..10),
                jitter in proptest::collection::vec((-5i64..5, -0.2f64..0.2), 10),
                shift in 0usize..10_000,
                scale in 0.1f64..10.0,
            ) {
                let rs: Vec<usize> = gaps.iter().scan(200usize, |acc, g| { *acc += g; Some(*acc) }).collect();
                let base = segment_features(&jittered(&rs, &jitter, 0, 1.0)).unwrap();
                let moved = segment_features(&jittered(&rs, &jitter, shift, 1.0)).unwrap();
                prop_assert_eq!(&base.rows, &moved.rows);

                let scaled = segment_features(&jittered(&rs, &jitter, 0, scale)).unwrap();
                let is_y = |name: &str| name.ends_with('y') || name.starts_with("dy_") || name.contains("amplitude");
                for (a, b) in base.rows.rows().zip(scaled.rows.rows()) {
                    for (j, name) in feature_names().iter().enumerate() {
                        if is_y(name) {
                            prop_assert!((a[j] * scale - b[j]).abs() <= 1e-9 * (1.0 + a[j].abs() * scale));
                        } else {
                            prop_assert_eq!(a[j], b[j]);
                        }
                    }
                }
            }
        }
    }
}
