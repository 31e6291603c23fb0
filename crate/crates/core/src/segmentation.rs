//! Pan-Tompkins R-peak detection and window-based P/Q/S/T delineation.

use std::io::Write;

use crate::error::{Error, Result};

/// Converts a duration in milliseconds to a whole number of samples.
pub fn ms(millis: f64, fs: f64) -> usize {
    (millis * fs / 1000.0).round() as usize
}

/// Mean of `x` over `[n - before, n + after]`, replicating edge samples.
fn centered_mean(x: &[f64], before: usize, after: usize) -> Vec<f64> {
    let n = x.len();
    let len = before + after + 1;
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    let mut sum: f64 = (-(before as isize)..=after as isize).map(at).sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        out.push(sum / len as f64);
        sum += at(i + after as isize + 1) - at(i - before as isize);
    }
    out
}

/// Zero-phase 5-15 Hz band-pass built from the Pan-Tompkins moving-sum
/// recursions, rescaled to `fs`. The low-pass is two cascaded boxcars of
/// 32 ms, the high-pass subtracts a 164 ms boxcar; both are centred so the
/// output is aligned with the input.
pub fn bandpass(samples: &[f64], fs: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    let lp_len = ms(32.0, fs).max(1);
    let stage1 = centered_mean(samples, lp_len / 2, lp_len - 1 - lp_len / 2);
    let lowpassed = centered_mean(&stage1, lp_len - 1 - lp_len / 2, lp_len / 2);
    let half = ms(164.0, fs) / 2;
    let trend = centered_mean(&lowpassed, half, half);
    Ok(lowpassed.iter().zip(&trend).map(|(a, b)| a - b).collect())
}

/// Five-point derivative of the band-passed signal.
fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len() as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    (0..n)
        .map(|i| fs / 8.0 * (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct DetectorParams {
    refractory: usize,
    t_wave_window: usize,
    integration: usize,
    search_radius: usize,
    learning: usize,
}

impl DetectorParams {
    fn at(fs: f64) -> Self {
        Self {
            refractory: ms(200.0, fs),
            t_wave_window: ms(360.0, fs),
            integration: ms(150.0, fs).max(1),
            // the integrator plateau spans one window; its local maximum can
            // sit anywhere on it
            search_radius: ms(40.0, fs).max(ms(150.0, fs) / 2),
            learning: (2.0 * fs).round() as usize,
        }
    }
}

/// Adaptive threshold pair on the integrated waveform.
#[derive(Debug, Clone, Copy)]
struct Thresholds {
    signal: f64,
    noise: f64,
}

impl Thresholds {
    fn primary(&self) -> f64 {
        self.noise + 0.25 * (self.signal - self.noise)
    }

    fn secondary(&self) -> f64 {
        0.5 * self.primary()
    }
}

/// R-peak sample indices, strictly increasing and at least 200 ms apart.
/// A flat or empty signal yields no peaks.
pub fn detect_r_peaks(samples: &[f64], fs: f64) -> Vec<usize> {
    let Ok(filtered) = bandpass(samples, fs) else {
        return Vec::new();
    };
    let p = DetectorParams::at(fs);
    let slope = derivative(&filtered, fs);
    let squared: Vec<f64> = slope.iter().map(|d| d * d).collect();
    let integrated = centered_mean(
        &squared,
        p.integration / 2,
        p.integration - 1 - p.integration / 2,
    );
    let n = integrated.len();

    let learn = &integrated[..p.learning.min(n)];
    let peak = learn.iter().copied().fold(0.0, f64::max);
    let mean = learn.iter().sum::<f64>() / learn.len() as f64;
    let mut th = Thresholds {
        signal: peak / 3.0,
        noise: mean / 2.0,
    };

    let max_slope = |c: usize| {
        let lo = c.saturating_sub(p.integration / 2);
        let hi = (c + p.integration / 2).min(n - 1);
        slope[lo..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };

    let candidates = (1..n.saturating_sub(1))
        .filter(|&i| integrated[i] > 0.0 && integrated[i] > integrated[i - 1] && integrated[i] >= integrated[i + 1]);

    let mut qrs: Vec<usize> = Vec::new();
    let mut last_slope = 0.0;
    let mut rr_history: Vec<usize> = Vec::new();
    let mut pending_noise: Vec<usize> = Vec::new();

    let accept = |c: usize, qrs: &mut Vec<usize>, rr_history: &mut Vec<usize>| {
        if let Some(&last) = qrs.last() {
            rr_history.push(c - last);
            if rr_history.len() > 8 {
                rr_history.remove(0);
            }
        }
        qrs.push(c);
    };

    for c in candidates {
        let v = integrated[c];

        if let (Some(&last), false) = (qrs.last(), rr_history.is_empty()) {
            let rr_avg = rr_history.iter().sum::<usize>() as f64 / rr_history.len() as f64;
            if (c - last) as f64 > 1.66 * rr_avg {
                let th2 = th.secondary();
                let missed = pending_noise
                    .iter()
                    .copied()
                    .filter(|&m| m - last > p.refractory && c - m > p.refractory && integrated[m] > th2)
                    .fold(None, |best: Option<usize>, m| match best {
                        Some(b) if integrated[b] >= integrated[m] => Some(b),
                        _ => Some(m),
                    });
                if let Some(m) = missed {
                    th.signal = 0.25 * integrated[m] + 0.75 * th.signal;
                    last_slope = max_slope(m);
                    accept(m, &mut qrs, &mut rr_history);
                    pending_noise.clear();
                }
            }
        }

        if v > th.primary() {
            let since = qrs.last().map(|&l| c - l);
            if since.is_some_and(|d| d < p.refractory) {
                continue;
            }
            let s = max_slope(c);
            if since.is_some_and(|d| d < p.t_wave_window) && s < 0.5 * last_slope {
                th.noise = 0.125 * v + 0.875 * th.noise;
                pending_noise.push(c);
                continue;
            }
            th.signal = 0.125 * v + 0.875 * th.signal;
            last_slope = s;
            accept(c, &mut qrs, &mut rr_history);
            pending_noise.clear();
        } else {
            th.noise = 0.125 * v + 0.875 * th.noise;
            pending_noise.push(c);
        }
    }

    // R is the positive band-passed maximum near each integrator peak. The
    // absolute value would lock onto the filter's side lobes next to Q/S.
    let mut peaks: Vec<usize> = Vec::with_capacity(qrs.len());
    for c in qrs {
        let lo = c.saturating_sub(p.search_radius);
        let hi = (c + p.search_radius).min(n - 1);
        let r = (lo..=hi).fold(lo, |best, i| if filtered[i] > filtered[best] { i } else { best });
        match peaks.last_mut() {
            Some(prev) if r <= *prev || r - *prev < p.refractory => {
                if filtered[r] > filtered[*prev] && r > *prev {
                    *prev = r;
                }
            }
            _ => peaks.push(r),
        }
    }
    peaks
}

/// One delineated landmark: sample index and raw amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub x: usize,
    pub y: f64,
}

/// Landmarks of a single cardiac cycle, absolute sample indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beat {
    pub p: Landmark,
    pub q: Landmark,
    pub r: Landmark,
    pub s: Landmark,
    pub t: Landmark,
    pub on_qrs: Landmark,
    pub off_qrs: Landmark,
}

impl Beat {
    pub fn r_index(&self) -> usize {
        self.r.x
    }

    /// P, Q, R, S, T, OnQRS, OffQRS.
    pub fn landmarks(&self) -> [Landmark; 7] {
        [self.p, self.q, self.r, self.s, self.t, self.on_qrs, self.off_qrs]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatSequence {
    pub record_name: String,
    pub beats: Vec<Beat>,
    pub sampling_rate: f64,
}

impl BeatSequence {
    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    /// Debug dump: `beat_idx,P_x,P_y,Q_x,Q_y,R_x,R_y,S_x,S_y,T_x,T_y`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "beat_idx", "P_x", "P_y", "Q_x", "Q_y", "R_x", "R_y", "S_x", "S_y", "T_x", "T_y",
        ])?;
        for (i, b) in self.beats.iter().enumerate() {
            let mut row = vec![i.to_string()];
            for l in [b.p, b.q, b.r, b.s, b.t] {
                row.push(l.x.to_string());
                row.push(l.y.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<beats>", e))?;
        Ok(())
    }
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi).fold(lo, |best, i| if x[i] > x[best] { i } else { best })
}

fn argmin(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi).fold(lo, |best, i| if x[i] < x[best] { i } else { best })
}

/// Half-open search windows `[lo, hi)` for one beat, or `None` when any of
/// them is empty after clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Windows {
    p: (usize, usize),
    q: (usize, usize),
    s: (usize, usize),
    t: (usize, usize),
}

fn windows(r: usize, prev: Option<usize>, next: Option<usize>, n: usize, fs: f64) -> Option<Windows> {
    let (w60, w80, w240, w400) = (ms(60.0, fs), ms(80.0, fs), ms(240.0, fs), ms(400.0, fs));
    // The previous beat's T window owns the first two thirds of the RR
    // interval, so P may only look back over the last third.
    let floor = prev.map_or(0, |p| r - (r - p) / 3);
    let last = n - 1;

    let q = (r.saturating_sub(w60).max(floor), r);
    let p = (r.saturating_sub(w240).max(floor), r.saturating_sub(w60));
    let s = (r + 1, (r + w60).min(last) + 1);
    let mut t_end = (r + w400).min(last);
    if let Some(nx) = next {
        t_end = t_end.min(r + (2 * (nx - r)) / 3);
    }
    let t = (r + w80 + 1, t_end + 1);

    let non_empty = |(a, b): (usize, usize)| a < b;
    (r >= w60 && non_empty(p) && non_empty(q) && non_empty(s) && non_empty(t))
        .then_some(Windows { p, q, s, t })
}

/// Delineates every R peak. Beats whose windows clip to nothing at the record
/// edges are dropped.
pub fn delineate(record_name: &str, samples: &[f64], fs: f64, r_peaks: &[usize]) -> BeatSequence {
    let n = samples.len();
    let at = |x: usize| Landmark { x, y: samples[x] };
    let beats = r_peaks
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r < n)
        .filter_map(|(i, &r)| {
            let prev = i.checked_sub(1).map(|j| r_peaks[j]);
            let next = r_peaks.get(i + 1).copied();
            let w = windows(r, prev, next, n, fs)?;
            let p = argmax(samples, w.p.0, w.p.1);
            let q = argmin(samples, w.q.0, w.q.1);
            let s = argmin(samples, w.s.0, w.s.1);
            let t = argmax(samples, w.t.0, w.t.1);
            Some(Beat {
                p: at(p),
                q: at(q),
                r: at(r),
                s: at(s),
                t: at(t),
                on_qrs: at((p + q).div_ceil(2)),
                off_qrs: at((s + t).div_ceil(2)),
            })
        })
        .collect();
    BeatSequence {
        record_name: record_name.to_string(),
        beats,
        sampling_rate: fs,
    }
}

/// Detection followed by delineation.
pub fn segment(record_name: &str, samples: &[f64], fs: f64) -> BeatSequence {
    let peaks = detect_r_peaks(samples, fs);
    delineate(record_name, samples, fs, &peaks)
}
