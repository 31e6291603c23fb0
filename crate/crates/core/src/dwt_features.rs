//! Wavelet baseline: six-level db8 decomposition of the whole record and 20
//! summary statistics per detail band.

use crate::error::{Error, Result};
use crate::record_io::Label;

pub const DWT_LEVELS: usize = 6;
pub const N_BAND_STATS: usize = 20;
pub const N_DWT: usize = DWT_LEVELS * N_BAND_STATS;
pub const DWT_LAYOUT_VERSION: &str = "dwt-v1";

/// Shannon and log-energy entropy guard.
pub const ENTROPY_EPS: f64 = 1e-12;

pub const STAT_NAMES: [&str; N_BAND_STATS] = [
    "mean",
    "median",
    "std",
    "variance",
    "skewness",
    "kurtosis",
    "min",
    "max",
    "rms",
    "mean_abs_dev",
    "iqr",
    "p5",
    "p95",
    "energy",
    "shannon_entropy",
    "log_energy_entropy",
    "threshold_count",
    "zero_crossings",
    "local_maxima",
    "energy_ratio",
];

/// db8 decomposition low-pass filter (8 vanishing moments, 16 taps).
pub const DB8_DEC_LO: [f64; 16] = [
    -0.00011747678412476953,
    0.0006754494064505693,
    -0.00039174037337694705,
    -0.004870352993451574,
    0.008746094047405777,
    0.013981027917398282,
    -0.044088253930794755,
    -0.017369301001807547,
    0.12874742662047847,
    0.0004724845739132828,
    -0.2840155429615469,
    -0.015829105256349306,
    0.5853546836542067,
    0.6756307362972898,
    0.31287159091429995,
    0.05441584224310401,
];

const TAPS: usize = DB8_DEC_LO.len();

fn dec_hi() -> [f64; TAPS] {
    let mut g = [0.0; TAPS];
    for (k, gk) in g.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        *gk = sign * DB8_DEC_LO[TAPS - 1 - k];
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Half-sample symmetric extension.
    #[default]
    Symmetric,
    /// Circular extension; orthogonal on even lengths.
    Periodization,
}

/// Half-sample symmetric index into a signal of length `n`.
fn reflect(k: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let k = k.rem_euclid(period) as usize;
    if k < n {
        k
    } else {
        2 * n - 1 - k
    }
}

/// One analysis step. Returns (approximation, detail).
pub fn dwt(x: &[f64], mode: Mode) -> (Vec<f64>, Vec<f64>) {
    let h = DB8_DEC_LO;
    let g = dec_hi();
    let n = x.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    match mode {
        Mode::Symmetric => {
            let len = (n + TAPS - 1) / 2;
            let mut ca = vec![0.0; len];
            let mut cd = vec![0.0; len];
            for i in 0..len {
                let (mut a, mut d) = (0.0, 0.0);
                for j in 0..TAPS {
                    let v = x[reflect(2 * i as isize + 1 - j as isize, n)];
                    a += h[j] * v;
                    d += g[j] * v;
                }
                ca[i] = a;
                cd[i] = d;
            }
            (ca, cd)
        }
        Mode::Periodization => {
            let ext = n + n % 2;
            let at = |k: usize| x[k.min(n - 1)];
            let len = ext / 2;
            let mut ca = vec![0.0; len];
            let mut cd = vec![0.0; len];
            for i in 0..len {
                let (mut a, mut d) = (0.0, 0.0);
                for j in 0..TAPS {
                    let k = (2 * i + TAPS / 2 + ext * TAPS - j) % ext;
                    a += h[j] * at(k);
                    d += g[j] * at(k);
                }
                ca[i] = a;
                cd[i] = d;
            }
            (ca, cd)
        }
    }
}

/// One synthesis step producing `out_len` samples.
pub fn idwt(ca: &[f64], cd: &[f64], mode: Mode, out_len: usize) -> Vec<f64> {
    let h = DB8_DEC_LO;
    let g = dec_hi();
    let m = ca.len().min(cd.len());
    match mode {
        Mode::Symmetric => (0..out_len)
            .map(|t| {
                let mut v = 0.0;
                // taps with 0 <= 2i + 1 - t < TAPS
                let lo = (t + 1).saturating_sub(TAPS).div_ceil(2);
                for i in lo..m {
                    let j = 2 * i + 1;
                    if j < t {
                        continue;
                    }
                    let j = j - t;
                    if j >= TAPS {
                        break;
                    }
                    v += h[j] * ca[i] + g[j] * cd[i];
                }
                v
            })
            .collect(),
        Mode::Periodization => {
            let ext = 2 * m;
            let mut x = vec![0.0; ext];
            if ext == 0 {
                return vec![0.0; out_len];
            }
            for i in 0..m {
                for j in 0..TAPS {
                    let k = (2 * i + TAPS / 2 + ext * TAPS - j) % ext;
                    x[k] += h[j] * ca[i] + g[j] * cd[i];
                }
            }
            x.resize(out_len, 0.0);
            x
        }
    }
}

/// Multi-level decomposition. `details[0]` is D1 (finest).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
    /// Input length at each level, `lengths[0]` being the signal length.
    pub lengths: Vec<usize>,
    pub mode: Mode,
}

pub fn wavedec(x: &[f64], levels: usize, mode: Mode) -> Result<Decomposition> {
    let min = 1usize << levels;
    if x.len() < min || levels == 0 {
        return Err(Error::SignalTooShort {
            len: x.len(),
            min: min.max(2),
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    let mut a = x.to_vec();
    for _ in 0..levels {
        lengths.push(a.len());
        let (ca, cd) = dwt(&a, mode);
        details.push(cd);
        a = ca;
    }
    Ok(Decomposition {
        details,
        approx: a,
        lengths,
        mode,
    })
}

pub fn waverec(dec: &Decomposition) -> Vec<f64> {
    let mut a = dec.approx.clone();
    for level in (0..dec.details.len()).rev() {
        a = idwt(&a, &dec.details[level], dec.mode, dec.lengths[level]);
    }
    a
}

fn sum_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 1].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// The 20 band statistics in [`STAT_NAMES`] order. `total_energy` is the
/// denominator of the energy ratio; pass `None` to use the band's own energy.
pub fn band_stats(band: &[f64], total_energy: Option<f64>) -> Result<[f64; N_BAND_STATS]> {
    if band.is_empty() {
        return Err(Error::EmptyBand);
    }
    let n = band.len() as f64;
    let mean = band.iter().sum::<f64>() / n;
    let moment = |p: i32| band.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let var = moment(2);
    let std = var.sqrt();
    let (skew, kurt) = if var > 0.0 {
        (moment(3) / var.powf(1.5), moment(4) / (var * var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let energy = sum_sq(band);
    let max_abs = band.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shannon = if energy > 0.0 {
        -band
            .iter()
            .map(|v| {
                let p = v * v / energy;
                p * (p + ENTROPY_EPS).ln()
            })
            .sum::<f64>()
    } else {
        0.0
    };
    let log_energy = band.iter().map(|v| (v * v + ENTROPY_EPS).ln()).sum::<f64>();
    let above = band.iter().filter(|v| v.abs() > 0.2 * max_abs).count();
    let crossings = band.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let maxima = band
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count();
    let total = total_energy.unwrap_or(energy);
    let ratio = if total > 0.0 { energy / total } else { 0.0 };
    Ok([
        mean,
        percentile(&sorted, 0.5),
        std,
        var,
        skew,
        kurt,
        sorted[0],
        sorted[sorted.len() - 1],
        (energy / n).sqrt(),
        band.iter().map(|v| (v - mean).abs()).sum::<f64>() / n,
        percentile(&sorted, 0.75) - percentile(&sorted, 0.25),
        percentile(&sorted, 0.05),
        percentile(&sorted, 0.95),
        energy,
        shannon,
        log_energy,
        above as f64,
        crossings as f64,
        maxima as f64,
        ratio,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwtFeatureVector {
    pub record_name: String,
    pub values: Vec<f64>,
    pub label: Option<Label>,
}

/// `d1_f1 .. d6_f20`.
pub fn dwt_feature_names() -> Vec<String> {
    (1..=DWT_LEVELS)
        .flat_map(|l| (1..=N_BAND_STATS).map(move |j| format!("d{l}_f{j}")))
        .collect()
}

/// 120 features: band statistics of D1..D6, energy ratios relative to the
/// summed detail energy.
pub fn dwt_features(record_name: &str, signal: &[f64], label: Option<Label>) -> Result<DwtFeatureVector> {
    let dec = wavedec(signal, DWT_LEVELS, Mode::Symmetric)?;
    let total: f64 = dec.details.iter().map(|d| sum_sq(d)).sum();
    let mut values = Vec::with_capacity(N_DWT);
    for band in &dec.details {
        values.extend(band_stats(band, Some(total))?);
    }
    Ok(DwtFeatureVector {
        record_name: record_name.to_string(),
        values,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn random_signal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn filter_is_orthonormal() {
        let h = DB8_DEC_LO;
        let g = dec_hi();
        assert!(close(h.iter().sum::<f64>(), 2f64.sqrt(), 1e-12));
        assert!(close(sum_sq(&h), 1.0, 1e-12));
        for shift in (2..TAPS).step_by(2) {
            let dot: f64 = (0..TAPS - shift).map(|k| h[k] * h[k + shift]).sum();
            assert!(dot.abs() < 1e-12, "shift {shift}: {dot}");
        }
        let cross: f64 = (0..TAPS).map(|k| h[k] * g[k]).sum();
        assert!(cross.abs() < 1e-12);
    }

    // Frozen output of pywt.wavedec(x, 'db8', mode='symmetric', level=3)
    #[test]
    fn matches_reference_symmetric() {
        let x: Vec<f64> = (0..100)
            .map(|i| {
                let i = i as f64;
                (0.3 * i).sin() + 0.5 * (0.002 * i * i).cos()
            })
            .collect();
        let dec = wavedec(&x, 3, Mode::Symmetric).unwrap();
        let lens: Vec<usize> = dec.details.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![57, 36, 25]);
        assert_eq!(dec.approx.len(), 25);
        let check = |v: &[f64], first: f64, fifth: f64, last: f64| {
            assert!(close(v[0], first, 1e-12), "{} vs {first}", v[0]);
            assert!(close(v[5], fifth, 1e-12), "{} vs {fifth}", v[5]);
            assert!(close(v[v.len() - 1], last, 1e-12), "{} vs {last}", v[v.len() - 1]);
        };
        check(&dec.approx, 2.6110813073703354, 2.608780553077763, -1.847490862684543);
        check(&dec.details[2], 0.8797151807739925, 1.4774777880604786, 0.2636466301781431);
        check(&dec.details[1], 0.032680330878780924, 0.22519817472843529, -0.006143465197399323);
        check(&dec.details[0], 0.04562864335446537, -3.602394226487449e-05, -0.00011336592717163185);
    }

    #[test]
    fn matches_reference_periodization() {
        let x: Vec<f64> = (0..64).map(|i| (0.2 * i as f64).sin() * i as f64).collect();
        let dec = wavedec(&x, 2, Mode::Periodization).unwrap();
        assert_eq!(dec.approx.len(), 16);
        assert_eq!(dec.details[1].len(), 16);
        assert_eq!(dec.details[0].len(), 32);
        assert!(close(dec.approx[3], -47.26178675168056, 1e-12));
        assert!(close(dec.details[1][3], 0.04298426894330212, 1e-10));
        assert!(close(dec.details[0][3], -0.00023625230740468558, 1e-9));
    }

    #[test]
    fn round_trip() {
        for (n, seed) in [(4096, 1), (75_000, 2), (75_001, 3)] {
            let x = random_signal(n, seed);
            for mode in [Mode::Symmetric, Mode::Periodization] {
                let dec = wavedec(&x, DWT_LEVELS, mode).unwrap();
                let y = waverec(&dec);
                assert_eq!(y.len(), n);
                let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-8, "n={n} {mode:?} err={err}");
            }
        }
    }

    #[test]
    fn periodization_preserves_energy() {
        for (n, seed) in [(4096, 4), (65_536, 5)] {
            let x = random_signal(n, seed);
            let dec = wavedec(&x, DWT_LEVELS, Mode::Periodization).unwrap();
            let e: f64 = dec.details.iter().map(|d| sum_sq(d)).sum::<f64>() + sum_sq(&dec.approx);
            assert!(close(e, sum_sq(&x), 1e-6));
        }
    }

    #[test]
    fn impulse_energy_sums_to_one() {
        let mut x = vec![0.0; 1024];
        x[500] = 1.0;
        let dec = wavedec(&x, DWT_LEVELS, Mode::Periodization).unwrap();
        let e: f64 = dec.details.iter().map(|d| sum_sq(d)).sum::<f64>() + sum_sq(&dec.approx);
        assert!((e - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_no_detail() {
        let dec = wavedec(&[3.7; 2000], DWT_LEVELS, Mode::Symmetric).unwrap();
        for d in &dec.details {
            assert!(d.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            wavedec(&[1.0; 63], DWT_LEVELS, Mode::Symmetric),
            Err(Error::SignalTooShort { len: 63, min: 64 })
        ));
    }

    #[test]
    fn stats_examples() {
        let s = band_stats(&[1.0; 4], None).unwrap();
        assert_eq!(s[0], 1.0);
        assert_eq!(s[2], 0.0);
        assert!((s[14] - 4f64.ln()).abs() < 1e-9);

        let s = band_stats(&[0.0, 0.0, 0.0, 5.0], None).unwrap();
        assert_eq!(s[17], 0.0);
        assert_eq!(s[7], 5.0);
        assert_eq!(s[13], 25.0);
        assert_eq!(s[16], 1.0);

        let s = band_stats(&[-1.0, 1.0, -1.0, 1.0], None).unwrap();
        assert_eq!(s[17], 3.0);
        assert_eq!(s[0], 0.0);
        assert_eq!(s[8], 1.0);
        assert_eq!(s[18], 1.0);

        assert!(matches!(band_stats(&[], None), Err(Error::EmptyBand)));
    }

    #[test]
    fn percentiles_interpolate() {
        let s = band_stats(&[4.0, 1.0, 3.0, 2.0, 5.0], None).unwrap();
        assert_eq!(s[1], 3.0);
        assert_eq!(s[10], 2.0);
        assert!((s[11] - 1.2).abs() < 1e-12);
        assert!((s[12] - 4.8).abs() < 1e-12);
    }

    #[test]
    fn feature_vector_shape() {
        let x = random_signal(75_000, 9);
        let f = dwt_features("r", &x, None).unwrap();
        assert_eq!(f.values.len(), 120);
        assert!(f.values.iter().all(|v| v.is_finite()));
        let ratio_sum: f64 = (0..DWT_LEVELS).map(|l| f.values[l * 20 + 19]).sum();
        assert!((ratio_sum - 1.0).abs() < 1e-12);
        assert_eq!(f, dwt_features("r", &x, None).unwrap());
        assert_eq!(dwt_feature_names().len(), 120);
        assert_eq!(dwt_feature_names()[20], "d2_f1");
    }
}
