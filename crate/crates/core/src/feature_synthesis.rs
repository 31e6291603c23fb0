//! High-level per-patient features built from a beat clustering.
//!
//! Layout (`hlf-v1`, 31 values, 0-based):
//!
//! | index | content |
//! |---|---|
//! | 0 | heart rate, bpm |
//! | 1..6 | alarm one-hot: ASY, EBR, ETC, VTA, VFB |
//! | 6..11 | cluster sizes, ascending |
//! | 11..16 | normalised centroid sum / cluster size |
//! | 16..21 | normalised centroid sum / total segments |
//! | 21..31 | pairwise centroid distances (1,2) (1,3) ... (4,5) |
//!
//! Clusters appear in ascending size order, ties broken by normalised
//! centroid sum and then original index. Records with fewer than five
//! clusters are padded with empty clusters that contribute zeros and sort
//! first.

use crate::clustering::{distance, Clustering, Metric, DEFAULT_K};
use crate::error::{Error, Result};
use crate::record_io::{AlarmType, Label};

pub const N_HLF: usize = 31;
pub const HLF_LAYOUT_VERSION: &str = "hlf-v1";

pub const HR: usize = 0;
pub const ALARM: usize = 1;
pub const SIZES: usize = 6;
pub const PER_SIZE: usize = 11;
pub const PER_TOTAL: usize = 16;
pub const DISTANCES: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct HlfVector {
    pub record_name: String,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

/// Column names `f1..f31`.
pub fn hlf_names() -> Vec<String> {
    (1..=N_HLF).map(|i| format!("f{i}")).collect()
}

/// Min-max scales one centroid over its own entries; a constant centroid maps
/// to zeros.
pub fn normalize_centroid(centroid: &[f64]) -> Vec<f64> {
    let (lo, hi) = centroid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; centroid.len()];
    }
    centroid.iter().map(|&v| (v - lo) / range).collect()
}

/// `(sum / size, sum / total)` for one cluster; zero for an empty cluster.
pub fn centroid_ratios(normalized_sum: f64, size: usize, total: usize) -> (f64, f64) {
    let per = |d: usize| if d == 0 { 0.0 } else { normalized_sum / d as f64 };
    (per(size), per(total))
}

struct Cluster {
    size: usize,
    normalized: Vec<f64>,
    sum: f64,
}

/// Builds the 31-value vector of one record.
pub fn synthesize(
    record_name: &str,
    clustering: &Clustering,
    heart_rate: f64,
    alarm_type: AlarmType,
    label: Option<Label>,
) -> Result<HlfVector> {
    if clustering.k > DEFAULT_K {
        return Err(Error::Dimension {
            expected: DEFAULT_K,
            actual: clustering.k,
        });
    }
    let mut clusters: Vec<(usize, Cluster)> = (0..clustering.k)
        .map(|c| {
            let normalized = normalize_centroid(clustering.centroids.row(c));
            let sum = normalized.iter().sum();
            (
                c,
                Cluster {
                    size: clustering.sizes[c],
                    normalized,
                    sum,
                },
            )
        })
        .collect();
    clusters.sort_by(|(ia, a), (ib, b)| {
        a.size
            .cmp(&b.size)
            .then(a.sum.total_cmp(&b.sum))
            .then(ia.cmp(ib))
    });
    let padding = DEFAULT_K - clusters.len();
    let total: usize = clustering.sizes.iter().sum();

    let mut values = vec![0.0; N_HLF];
    values[HR] = heart_rate;
    values[ALARM + alarm_type.index()] = 1.0;
    for (slot, (_, c)) in clusters.iter().enumerate() {
        let at = padding + slot;
        let (per_size, per_total) = centroid_ratios(c.sum, c.size, total);
        values[SIZES + at] = c.size as f64;
        values[PER_SIZE + at] = per_size;
        values[PER_TOTAL + at] = per_total;
    }
    let metric: Metric = clustering.metric;
    let mut d = DISTANCES;
    for a in 0..DEFAULT_K {
        for b in a + 1..DEFAULT_K {
            if a >= padding {
                let ca = &clusters[a - padding].1;
                let cb = &clusters[b - padding].1;
                values[d] = distance(&ca.normalized, &cb.normalized, metric)?;
            }
            d += 1;
        }
    }
    Ok(HlfVector {
        record_name: record_name.to_string(),
        values,
        label,
    })
}
