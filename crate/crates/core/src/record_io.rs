//! WFDB header / format-16 decoding and record ingestion.
//!
//! Only the pieces of the WFDB format family used by the 2015 alarm
//! challenge are implemented: text headers and format 16 (little-endian
//! signed 16-bit, multiplexed per file) with an optional byte offset.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling rate every record is brought to on ingestion.
pub const TARGET_FS: f64 = 250.0;

/// Name of the ECG channel the pipeline consumes.
pub const LEAD_II: &str = "II";

/// The five life-threatening alarm categories of the challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlarmType {
    #[serde(rename = "ASY")]
    Asystole,
    #[serde(rename = "EBR")]
    ExtremeBradycardia,
    #[serde(rename = "ETC")]
    ExtremeTachycardia,
    #[serde(rename = "VTA")]
    VentricularTachycardia,
    #[serde(rename = "VFB")]
    VentricularFlutterFib,
}

impl AlarmType {
    /// One-hot order used by the high-level feature vector.
    pub const ALL: [AlarmType; 5] = [
        AlarmType::Asystole,
        AlarmType::ExtremeBradycardia,
        AlarmType::ExtremeTachycardia,
        AlarmType::VentricularTachycardia,
        AlarmType::VentricularFlutterFib,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AlarmType::Asystole => "ASY",
            AlarmType::ExtremeBradycardia => "EBR",
            AlarmType::ExtremeTachycardia => "ETC",
            AlarmType::VentricularTachycardia => "VTA",
            AlarmType::VentricularFlutterFib => "VFB",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap()
    }

    /// Challenge record names start with a letter encoding the alarm.
    pub fn from_record_name(name: &str) -> Option<Self> {
        match name.chars().next()?.to_ascii_lowercase() {
            'a' => Some(AlarmType::Asystole),
            'b' => Some(AlarmType::ExtremeBradycardia),
            't' => Some(AlarmType::ExtremeTachycardia),
            'v' => Some(AlarmType::VentricularTachycardia),
            'f' => Some(AlarmType::VentricularFlutterFib),
            _ => None,
        }
    }

    /// Parses a header comment such as `#Ventricular_Tachycardia`.
    pub fn from_comment(comment: &str) -> Option<Self> {
        let c = comment
            .trim_start_matches('#')
            .trim()
            .to_ascii_lowercase()
            .replace(['_', '-'], " ");
        if c.contains("asystole") {
            Some(AlarmType::Asystole)
        } else if c.contains("bradycardia") {
            Some(AlarmType::ExtremeBradycardia)
        } else if c.contains("flutter") || c.contains("fib") {
            Some(AlarmType::VentricularFlutterFib)
        } else if c.contains("ventricular tachycardia") || c == "vtach" {
            Some(AlarmType::VentricularTachycardia)
        } else if c.contains("tachycardia") {
            Some(AlarmType::ExtremeTachycardia)
        } else {
            None
        }
    }
}

impl fmt::Display for AlarmType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AlarmType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlarmType::ALL
            .into_iter()
            .find(|a| a.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown alarm type {s:?}")))
    }
}

/// Ground truth of an alarm. `TrueAlarm` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[serde(rename = "true")]
    TrueAlarm,
    #[serde(rename = "false")]
    FalseAlarm,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::TrueAlarm
    }

    /// +1 for a true alarm, -1 for a false one.
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::TrueAlarm => "true",
            Label::FalseAlarm => "false",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => Ok(Label::TrueAlarm),
            "false" | "0" => Ok(Label::FalseAlarm),
            other => Err(Error::Config(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub storage_format: u16,
    pub byte_offset: u64,
    /// ADC units per physical unit (mV for ECG channels).
    pub adc_gain: f64,
    pub baseline: i32,
    pub units: Option<String>,
    pub signal_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_rate: f64,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
    /// `#` lines, verbatim and in file order.
    pub comments: Vec<String>,
}

impl RecordHeader {
    pub fn find_signal(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.signal_name == name)
    }

    /// Alarm type from the comments, falling back to the record-name prefix.
    pub fn alarm_type(&self) -> Option<AlarmType> {
        self.comments
            .iter()
            .find_map(|c| AlarmType::from_comment(c))
            .or_else(|| AlarmType::from_record_name(&self.record_name))
    }

    /// (stride, position) of a signal within the file it is multiplexed in.
    fn frame_layout(&self, signal_index: usize) -> (usize, usize) {
        let file = &self.signals[signal_index].file_name;
        let stride = self.signals.iter().filter(|s| &s.file_name == file).count();
        let position = self.signals[..signal_index]
            .iter()
            .filter(|s| &s.file_name == file)
            .count();
        (stride, position)
    }

    fn group_offset(&self, signal_index: usize) -> u64 {
        let file = &self.signals[signal_index].file_name;
        self.signals
            .iter()
            .find(|s| &s.file_name == file)
            .map(|s| s.byte_offset)
            .unwrap_or(0)
    }
}

pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut comments = Vec::new();
    let mut body: Vec<(usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            comments.push(line.to_string());
        } else if !trimmed.is_empty() {
            body.push((i + 1, trimmed));
        }
    }

    let (first_no, first) = *body
        .first()
        .ok_or_else(|| Error::parse(1, "header has no record line"))?;
    let tokens: Vec<&str> = first.split_whitespace().collect();
    if tokens.len() < 4 {
        return Err(Error::parse(
            first_no,
            "record line needs name, signal count, sampling rate and sample count",
        ));
    }
    let record_name = tokens[0].split('/').next().unwrap_or_default().to_string();
    let n_signals: usize = tokens[1]
        .parse()
        .map_err(|_| Error::parse(first_no, format!("bad signal count {:?}", tokens[1])))?;
    let fs_token = tokens[2].split(['/', '(']).next().unwrap_or_default();
    let sampling_rate: f64 = fs_token
        .parse()
        .map_err(|_| Error::parse(first_no, format!("bad sampling rate {:?}", tokens[2])))?;
    let n_samples: usize = tokens[3]
        .parse()
        .map_err(|_| Error::parse(first_no, format!("bad sample count {:?}", tokens[3])))?;
    if n_signals == 0 {
        return Err(Error::parse(first_no, "record declares no signals"));
    }
    if !(sampling_rate > 0.0) || !sampling_rate.is_finite() {
        return Err(Error::parse(first_no, "sampling rate must be positive"));
    }
    if n_samples == 0 {
        return Err(Error::parse(first_no, "sample count must be positive"));
    }

    let signal_lines = &body[1..];
    if signal_lines.len() != n_signals {
        let line = signal_lines.last().map_or(first_no, |l| l.0);
        return Err(Error::parse(
            line,
            format!(
                "record declares {n_signals} signals but {} signal lines follow",
                signal_lines.len()
            ),
        ));
    }
    let signals = signal_lines
        .iter()
        .map(|&(no, line)| parse_signal_line(no, line))
        .collect::<Result<Vec<_>>>()?;

    Ok(RecordHeader {
        record_name,
        n_signals,
        sampling_rate,
        n_samples,
        signals,
        comments,
    })
}

fn parse_signal_line(line_no: usize, line: &str) -> Result<SignalSpec> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 2 {
        return Err(Error::parse(line_no, "signal line needs file name and format"));
    }
    let file_name = tokens[0].to_string();

    // format[xSPF][:skew][+offset]
    let fmt_token = tokens[1];
    let digits: String = fmt_token.chars().take_while(|c| c.is_ascii_digit()).collect();
    let storage_format: u16 = digits
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad storage format {fmt_token:?}")))?;
    let byte_offset = match fmt_token.split_once('+') {
        Some((_, off)) => off
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad byte offset in {fmt_token:?}")))?,
        None => 0,
    };

    let adc_zero: i32 = match tokens.get(4) {
        Some(t) => t
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad ADC zero {t:?}")))?,
        None => 0,
    };

    // gain[(baseline)][/units]
    let (mut adc_gain, mut baseline, mut units): (f64, i32, Option<String>) = (200.0, adc_zero, None);
    if let Some(gain_token) = tokens.get(2) {
        let (head, unit) = match gain_token.split_once('/') {
            Some((h, u)) => (h, Some(u.to_string())),
            None => (*gain_token, None),
        };
        units = unit;
        let gain_str = match head.split_once('(') {
            Some((g, rest)) => {
                let b = rest.trim_end_matches(')');
                baseline = b
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad baseline {b:?}")))?;
                g
            }
            None => head,
        };
        adc_gain = gain_str
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad ADC gain {gain_str:?}")))?;
    }
    if adc_gain == 0.0 || !adc_gain.is_finite() {
        return Err(Error::parse(line_no, "ADC gain must be non-zero"));
    }

    let signal_name = tokens.get(8..).map(|d| d.join(" ")).unwrap_or_default();

    Ok(SignalSpec {
        file_name,
        storage_format,
        byte_offset,
        adc_gain,
        baseline,
        units,
        signal_name,
    })
}

/// Raw ADC values of one channel of a format-16 file.
pub fn read_adc(header: &RecordHeader, bytes: &[u8], signal_index: usize) -> Result<Vec<i16>> {
    let spec = header.signals.get(signal_index).ok_or(Error::Dimension {
        expected: header.signals.len(),
        actual: signal_index,
    })?;
    if spec.storage_format != 16 {
        return Err(Error::UnsupportedFormat(spec.storage_format));
    }
    let (stride, position) = header.frame_layout(signal_index);
    let offset = header.group_offset(signal_index) as usize;
    let expected = offset + 2 * stride * header.n_samples;
    if bytes.len() < expected {
        return Err(Error::TruncatedSignal {
            expected,
            actual: bytes.len(),
        });
    }
    Ok((0..header.n_samples)
        .map(|j| {
            let at = offset + 2 * (j * stride + position);
            i16::from_le_bytes([bytes[at], bytes[at + 1]])
        })
        .collect())
}

/// Physical values `(adc - baseline) / gain` of one channel.
pub fn read_signal(header: &RecordHeader, bytes: &[u8], signal_index: usize) -> Result<Vec<f64>> {
    let spec = &header.signals.get(signal_index).ok_or(Error::Dimension {
        expected: header.signals.len(),
        actual: signal_index,
    })?;
    let (baseline, gain) = (f64::from(spec.baseline), spec.adc_gain);
    Ok(read_adc(header, bytes, signal_index)?
        .into_iter()
        .map(|v| (f64::from(v) - baseline) / gain)
        .collect())
}

/// Multiplexes channels into format-16 bytes after `prefix` (the byte-offset
/// region). Inverse of [`read_adc`] for a single-file record.
pub fn encode_format16(prefix: &[u8], channels: &[Vec<i16>]) -> Result<Vec<u8>> {
    let n = channels.first().map_or(0, Vec::len);
    if let Some(bad) = channels.iter().find(|c| c.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            actual: bad.len(),
        });
    }
    let mut out = Vec::with_capacity(prefix.len() + 2 * n * channels.len());
    out.extend_from_slice(prefix);
    for j in 0..n {
        for ch in channels {
            out.extend_from_slice(&ch[j].to_le_bytes());
        }
    }
    Ok(out)
}

/// Physical mV to ADC units for a given signal spec, saturating at i16.
pub fn to_adc(spec: &SignalSpec, mv: f64) -> i16 {
    let v = (mv * spec.adc_gain + f64::from(spec.baseline)).round();
    v.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub record_name: String,
    /// Lead II in mV.
    pub samples: Vec<f64>,
    pub sampling_rate: f64,
    pub alarm_type: AlarmType,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadOutcome {
    Record(EcgRecord),
    Skip { record_name: String, reason: String },
}

/// Truth labels keyed by record name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labels(HashMap<String, Label>);

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: impl Into<String>, label: Label) {
        self.0.insert(record.into(), label);
    }

    pub fn get(&self, record: &str) -> Option<Label> {
        self.0.get(record).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads `record,label` rows. The header row is optional so the
    /// challenge's headerless answer file (`a103l,0`) also loads.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut labels = Labels::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let (Some(name), Some(label)) = (row.get(0), row.get(1)) else {
                return Err(Error::parse(i + 1, "labels row needs record,label"));
            };
            if i == 0 && name.eq_ignore_ascii_case("record") {
                continue;
            }
            let label = label
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad label {label:?}")))?;
            labels.insert(name, label);
        }
        Ok(labels)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }
}

/// Loads lead II of a WFDB record. Records without lead II are skipped, not
/// errors.
pub fn load_record(header_path: &Path, labels: &Labels) -> Result<LoadOutcome> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = parse_header(&text)?;

    let Some(lead) = header.find_signal(LEAD_II) else {
        return Ok(LoadOutcome::Skip {
            record_name: header.record_name,
            reason: "no ECG lead II".into(),
        });
    };
    let label = labels
        .get(&header.record_name)
        .ok_or_else(|| Error::MissingLabel(header.record_name.clone()))?;
    let alarm_type = header
        .alarm_type()
        .ok_or_else(|| Error::UnknownAlarmType(header.record_name.clone()))?;

    let dir = header_path.parent().unwrap_or(Path::new("."));
    let signal_path = dir.join(&header.signals[lead].file_name);
    let bytes = fs::read(&signal_path).map_err(|e| Error::io(&signal_path, e))?;
    let samples = read_signal(&header, &bytes, lead)?;

    Ok(LoadOutcome::Record(EcgRecord {
        record_name: header.record_name,
        samples: resample(&samples, header.sampling_rate, TARGET_FS),
        sampling_rate: TARGET_FS,
        alarm_type,
        label,
    }))
}

/// Linear-interpolation resampling; identity when the rates match.
pub fn resample(samples: &[f64], from_fs: f64, to_fs: f64) -> Vec<f64> {
    if from_fs == to_fs || samples.len() < 2 {
        return samples.to_vec();
    }
    let n_out = ((samples.len() as f64) * to_fs / from_fs).round() as usize;
    let last = samples.len() - 1;
    (0..n_out)
        .map(|i| {
            let t = i as f64 * from_fs / to_fs;
            let lo = (t.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = t - lo as f64;
            samples[lo] + (samples[hi] - samples[lo]) * frac
        })
        .collect()
}

/// Sidecar metadata of a CSV fixture record (`<name>.json` next to `<name>.csv`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureMeta {
    pub sampling_rate: f64,
    pub alarm_type: AlarmType,
}

#[derive(Debug, Deserialize)]
struct FixtureRow {
    i: usize,
    mv: f64,
}

/// Reads an `i,mv` fixture. Rows must be indexed 0, 1, 2, ...
pub fn read_fixture_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (n, row) in rdr.deserialize::<FixtureRow>().enumerate() {
        let row = row?;
        if row.i != n {
            return Err(Error::parse(n + 2, format!("expected index {n}, found {}", row.i)));
        }
        out.push(row.mv);
    }
    Ok(out)
}

pub fn write_fixture_csv<W: std::io::Write>(writer: W, samples: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "mv"])?;
    for (i, v) in samples.iter().enumerate() {
        wtr.write_record([i.to_string(), v.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<fixture>", e))?;
    Ok(())
}

pub fn fixture_meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Loads a CSV fixture record plus its JSON sidecar.
pub fn load_fixture(csv_path: &Path, labels: &Labels) -> Result<EcgRecord> {
    let record_name = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let meta_path = fixture_meta_path(csv_path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: FixtureMeta = serde_json::from_str(&meta_text)?;
    let file = fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let samples = read_fixture_csv(file)?;
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    let label = labels
        .get(&record_name)
        .ok_or_else(|| Error::MissingLabel(record_name.clone()))?;
    Ok(EcgRecord {
        record_name,
        samples: resample(&samples, meta.sampling_rate, TARGET_FS),
        sampling_rate: TARGET_FS,
        alarm_type: meta.alarm_type,
        label,
    })
}
