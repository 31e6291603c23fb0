//! Synthetic ECG generator with ground-truth landmark positions.
//!
//! Each cycle is a sum of five Gaussian bumps (P, Q, R, S, T). Landmark
//! truth is known by construction, which makes the generator an oracle for
//! the detector and delineator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::record_io::{encode_format16, AlarmType, Label};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    /// Centre relative to the R peak, seconds.
    pub offset: f64,
    /// Peak amplitude, mV (negative for Q and S).
    pub amplitude: f64,
    /// Gaussian standard deviation, seconds.
    pub width: f64,
}

impl Wave {
    pub const fn new(offset: f64, amplitude: f64, width: f64) -> Self {
        Self {
            offset,
            amplitude,
            width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEcg {
    pub fs: f64,
    pub duration: f64,
    pub bpm: f64,
    /// Time of the first R peak, seconds.
    pub first_beat: f64,
    pub waves: [Wave; 5],
    /// White Gaussian noise relative to the clean signal power.
    pub snr_db: Option<f64>,
    pub seed: u64,
    /// Beat indices omitted from the output.
    pub dropped: Vec<usize>,
    /// Per-beat amplitude multiplier applied to every wave.
    pub amplitude_scale: f64,
}

/// Ground-truth sample positions of one generated beat, ordered P Q R S T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatTruth {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

impl Default for SyntheticEcg {
    fn default() -> Self {
        Self::at_bpm(60.0)
    }
}

impl SyntheticEcg {
    /// Five-minute 250 Hz recording at `bpm`. T timing scales with the square
    /// root of the RR interval (normal QT relation), the PR interval shortens
    /// linearly with RR.
    pub fn at_bpm(bpm: f64) -> Self {
        let rr = 60.0 / bpm;
        let k = rr.sqrt();
        Self {
            fs: 250.0,
            duration: 300.0,
            bpm,
            first_beat: 0.5,
            waves: [
                Wave::new(-(0.05 + 0.15 * rr), 0.15, 0.020 * k),
                Wave::new(-0.035, -0.12, 0.008),
                Wave::new(0.0, 1.2, 0.010),
                Wave::new(0.035, -0.25, 0.010),
                Wave::new(0.30 * k, 0.35, 0.030 * k),
            ],
            snr_db: None,
            seed: 0,
            dropped: Vec::new(),
            amplitude_scale: 1.0,
        }
    }

    pub fn with_snr(mut self, snr_db: f64, seed: u64) -> Self {
        self.snr_db = Some(snr_db);
        self.seed = seed;
        self
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.duration = seconds;
        self
    }

    fn beat_times(&self) -> Vec<f64> {
        let rr = 60.0 / self.bpm;
        let mut out = Vec::new();
        let mut t = self.first_beat;
        let mut i = 0;
        // keep the last T wave inside the recording
        while t + self.waves[4].offset + 3.0 * self.waves[4].width < self.duration {
            if !self.dropped.contains(&i) {
                out.push(t);
            }
            t += rr;
            i += 1;
        }
        out
    }

    /// Returns the samples (mV) and the truth for every emitted beat.
    pub fn generate(&self) -> (Vec<f64>, Vec<BeatTruth>) {
        let n = (self.duration * self.fs).round() as usize;
        let mut x = vec![0.0; n];
        let times = self.beat_times();
        for &t0 in &times {
            for w in &self.waves {
                let centre = (t0 + w.offset) * self.fs;
                let sd = w.width * self.fs;
                let lo = (centre - 6.0 * sd).floor().max(0.0) as usize;
                let hi = ((centre + 6.0 * sd).ceil() as usize).min(n.saturating_sub(1));
                for (i, xi) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
                    let z = (i as f64 - centre) / sd;
                    *xi += self.amplitude_scale * w.amplitude * (-0.5 * z * z).exp();
                }
            }
        }
        if let Some(snr) = self.snr_db {
            let power = x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
            let sd = (power / 10f64.powf(snr / 10.0)).sqrt();
            if sd > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let normal = Normal::new(0.0, sd).expect("finite noise level");
                for v in &mut x {
                    *v += normal.sample(&mut rng);
                }
            }
        }
        let truth = times
            .iter()
            .map(|&t0| {
                let at = |w: &Wave| (t0 + w.offset) * self.fs;
                BeatTruth {
                    p: at(&self.waves[0]),
                    q: at(&self.waves[1]),
                    r: at(&self.waves[2]),
                    s: at(&self.waves[3]),
                    t: at(&self.waves[4]),
                }
            })
            .collect();
        (x, truth)
    }
}

/// A synthetic record laid out like the 2015 challenge files: a `.hea`
/// header and a format-16 `.mat` signal file with a 24-byte prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub name: String,
    pub alarm_type: AlarmType,
    pub label: Label,
    pub ecg: SyntheticEcg,
    /// When false the first channel is named `I` instead of `II`.
    pub has_lead_ii: bool,
}

const ADC_GAIN: f64 = 200.0;

impl SyntheticRecord {
    /// Writes `<name>.hea` and `<name>.mat` into `dir`.
    pub fn write_wfdb(&self, dir: &Path) -> Result<()> {
        let (ecg, _) = self.ecg.generate();
        let n = ecg.len();
        let adc = |v: f64| (v * ADC_GAIN).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
        let lead: Vec<i16> = ecg.iter().map(|&v| adc(v)).collect();
        let v_lead: Vec<i16> = ecg.iter().map(|&v| adc(-0.6 * v)).collect();
        let pleth: Vec<i16> = (0..n)
            .map(|i| (2000.0 * (2.0 * std::f64::consts::PI * i as f64 / self.ecg.fs).sin()) as i16)
            .collect();
        let bytes = encode_format16(&[0u8; 24], &[lead, v_lead, pleth])?;
        let mat = dir.join(format!("{}.mat", self.name));
        fs::write(&mat, bytes).map_err(|e| Error::io(&mat, e))?;

        let first = if self.has_lead_ii { "II" } else { "I" };
        let mut h = String::new();
        let _ = writeln!(h, "{} 3 {} {}", self.name, self.ecg.fs, n);
        let _ = writeln!(h, "{}.mat 16+24 {ADC_GAIN}/mV 16 0 0 0 0 {first}", self.name);
        let _ = writeln!(h, "{}.mat 16+24 {ADC_GAIN}/mV 16 0 0 0 0 V", self.name);
        let _ = writeln!(h, "{}.mat 16+24 7247/NU 16 0 0 0 0 PLETH", self.name);
        let _ = writeln!(h, "#{}", comment_name(self.alarm_type));
        let _ = writeln!(h, "#{}", if self.label.is_positive() { "True alarm" } else { "False alarm" });
        let hea = dir.join(format!("{}.hea", self.name));
        fs::write(&hea, h).map_err(|e| Error::io(&hea, e))
    }
}

fn comment_name(a: AlarmType) -> &'static str {
    match a {
        AlarmType::Asystole => "Asystole",
        AlarmType::ExtremeBradycardia => "Bradycardia",
        AlarmType::ExtremeTachycardia => "Tachycardia",
        AlarmType::VentricularTachycardia => "Ventricular_Tachycardia",
        AlarmType::VentricularFlutterFib => "Ventricular_Flutter_Fib",
    }
}

/// `record,label` truth file.
pub fn write_labels(path: &Path, records: &[SyntheticRecord]) -> Result<()> {
    let mut s = String::from("record,label\n");
    for r in records {
        let _ = writeln!(s, "{},{}", r.name, r.label);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// A small labelled corpus in which true alarms carry the rhythm their alarm
/// names and false alarms are noisy sinus rhythm. Every tenth record lacks
/// lead II.
pub fn demo_corpus(n: usize, duration: f64, seed: u64) -> Vec<SyntheticRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prefix = |a: AlarmType| match a {
        AlarmType::Asystole => 'a',
        AlarmType::ExtremeBradycardia => 'b',
        AlarmType::ExtremeTachycardia => 't',
        AlarmType::VentricularTachycardia => 'v',
        AlarmType::VentricularFlutterFib => 'f',
    };
    (0..n)
        .map(|i| {
            let alarm_type = AlarmType::ALL[i % 5];
            let label = if rng.random_bool(0.5) { Label::TrueAlarm } else { Label::FalseAlarm };
            let bpm = if label.is_positive() {
                match alarm_type {
                    AlarmType::Asystole => rng.random_range(30.0..40.0),
                    AlarmType::ExtremeBradycardia => rng.random_range(35.0..45.0),
                    AlarmType::ExtremeTachycardia => rng.random_range(145.0..170.0),
                    AlarmType::VentricularTachycardia => rng.random_range(120.0..150.0),
                    AlarmType::VentricularFlutterFib => rng.random_range(170.0..200.0),
                }
            } else {
                rng.random_range(60.0..95.0)
            };
            let mut ecg = SyntheticEcg::at_bpm(bpm)
                .with_duration(duration)
                .with_snr(if label.is_positive() { 18.0 } else { 12.0 }, rng.random());
            if label.is_positive()
                && matches!(
                    alarm_type,
                    AlarmType::VentricularTachycardia | AlarmType::VentricularFlutterFib
                )
            {
                // broad complexes without a P wave
                ecg.waves[0].amplitude = 0.0;
                ecg.waves[2].width *= 3.0;
                ecg.waves[3].width *= 3.0;
            }
            if label.is_positive() && alarm_type == AlarmType::Asystole {
                ecg.dropped = (3..200).step_by(2).collect();
            }
            ecg.amplitude_scale = rng.random_range(0.7..1.3);
            SyntheticRecord {
                name: format!("{}{:03}{}", prefix(alarm_type), 100 + i, if i % 2 == 0 { 'l' } else { 's' }),
                alarm_type,
                label,
                ecg,
                has_lead_ii: i % 10 != 9,
            }
        })
        .collect()
}

/// Writes the corpus and `labels.csv` into `dir`.
pub fn write_corpus(dir: &Path, records: &[SyntheticRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in records {
        r.write_wfdb(dir)?;
    }
    write_labels(&dir.join("labels.csv"), records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_bpm_five_minutes_has_about_300_beats() {
        let (x, truth) = SyntheticEcg::at_bpm(60.0).generate();
        assert_eq!(x.len(), 75_000);
        assert!((299..=301).contains(&truth.len()), "{}", truth.len());
        let r = truth[10].r.round() as usize;
        assert!((x[r] - 1.2).abs() < 1e-3);
    }

    #[test]
    fn dropping_a_beat_removes_it() {
        let mut g = SyntheticEcg::at_bpm(60.0);
        let full = g.generate().1.len();
        g.dropped = vec![100];
        assert_eq!(g.generate().1.len(), full - 1);
    }

    #[test]
    fn corpus_loads_back() {
        use crate::record_io::{load_record, LoadOutcome, Labels};
        let dir = tempfile::tempdir().unwrap();
        let corpus = demo_corpus(10, 20.0, 1);
        write_corpus(dir.path(), &corpus).unwrap();
        let labels = Labels::from_path(&dir.path().join("labels.csv")).unwrap();
        let mut loaded = 0;
        for r in &corpus {
            match load_record(&dir.path().join(format!("{}.hea", r.name)), &labels).unwrap() {
                LoadOutcome::Record(rec) => {
                    loaded += 1;
                    assert_eq!(rec.alarm_type, r.alarm_type);
                    assert_eq!(rec.label, r.label);
                    assert_eq!(rec.samples.len(), 5000);
                    let (x, _) = r.ecg.generate();
                    assert!(rec.samples.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 0.5 / ADC_GAIN + 1e-12));
                }
                LoadOutcome::Skip { .. } => assert!(!r.has_lead_ii),
            }
        }
        assert_eq!(loaded, 9);
    }

    #[test]
    fn noise_is_seeded() {
        let g = SyntheticEcg::at_bpm(60.0).with_duration(10.0).with_snr(20.0, 3);
        assert_eq!(g.generate().0, g.generate().0);
    }
}
