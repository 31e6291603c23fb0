//! End-to-end orchestration: ingest → featurize → evaluate → report.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! manifest.csv                 record,alarm_type,label,n_samples,skipped_reason
//! cache/<record>.f64           decoded lead II, little-endian f64
//! features/llf.csv             588 columns
//! features/hlf_cityblock.csv   31 columns
//! features/hlf_euclidean.csv   31 columns
//! features/dwt.csv             120 columns
//! report/report.json, report/report.md, report/roc/*.csv
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_best_of, record_seed, Clustering, Metric, DEFAULT_K};
use crate::dwt_features::{dwt_feature_names, dwt_features, DWT_LAYOUT_VERSION};
use crate::ensemble::{Algorithm, BoostParams};
use crate::error::{Error, Result};
use crate::evaluation::{self, Dataset, FeatureSet, MatrixConfig, MetricsReport, Scenario};
use crate::feature_synthesis::{hlf_names, synthesize, HLF_LAYOUT_VERSION};
use crate::feature_table::FeatureTable;
use crate::record_io::{load_fixture, load_record, AlarmType, EcgRecord, Label, Labels, LoadOutcome, TARGET_FS};
use crate::segment_features::{heart_rate, llf_names, llf_tail, segment_features, SegmentFeatureMatrix, N_SEGMENT_FEATURES};
use crate::segmentation::segment;

pub const MANIFEST: &str = "manifest.csv";
pub const CACHE_DIR: &str = "cache";
pub const FEATURES_DIR: &str = "features";
pub const REPORT_DIR: &str = "report";
pub const LLF_LAYOUT_VERSION: &str = "llf-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CachePolicy {
    #[default]
    Reuse,
    Rebuild,
}

impl std::str::FromStr for CachePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reuse" => Ok(CachePolicy::Reuse),
            "rebuild" => Ok(CachePolicy::Rebuild),
            _ => Err(Error::Config(format!("unknown cache policy {s:?}"))),
        }
    }
}

/// JSON configuration. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: Option<PathBuf>,
    /// Defaults to `<data_dir>/labels.csv`.
    pub labels_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub k_clusters: usize,
    pub kmeans_restarts: usize,
    pub folds: usize,
    pub scenarios: Vec<String>,
    pub classifiers: Vec<String>,
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_splits: usize,
    pub target_ratio: f64,
    pub cache: CachePolicy,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let b = BoostParams::default();
        Self {
            data_dir: None,
            labels_path: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            k_clusters: DEFAULT_K,
            kmeans_restarts: 1,
            folds: evaluation::DEFAULT_FOLDS,
            scenarios: Scenario::ALL.iter().map(|s| s.name().to_string()).collect(),
            classifiers: vec![Algorithm::AdaBoostM1.name().into(), Algorithm::RusBoost.name().into()],
            rounds: b.rounds,
            learning_rate: b.learning_rate,
            max_splits: b.max_splits,
            target_ratio: b.target_ratio,
            cache: CachePolicy::Reuse,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_clusters == 0 || self.k_clusters > DEFAULT_K {
            return Err(Error::Config(format!("k_clusters must be in 1..={DEFAULT_K}")));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.scenario_list()?;
        self.classifier_list()?;
        Ok(())
    }

    pub fn scenario_list(&self) -> Result<Vec<Scenario>> {
        let mut out: Vec<Scenario> = self.scenarios.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("no scenarios selected".into()));
        }
        Ok(out)
    }

    pub fn classifier_list(&self) -> Result<Vec<Algorithm>> {
        let mut out: Vec<Algorithm> = Vec::new();
        for c in &self.classifiers {
            let a: Algorithm = c.parse()?;
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out.sort_by_key(|a| *a as u8);
        if out.is_empty() {
            return Err(Error::Config("no classifiers selected".into()));
        }
        Ok(out)
    }

    pub fn boost_params(&self) -> BoostParams {
        BoostParams {
            rounds: self.rounds,
            learning_rate: self.learning_rate,
            max_splits: self.max_splits,
            target_ratio: self.target_ratio,
            seed: self.seed,
        }
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::Config("data_dir is not set".into()))
    }

    pub fn labels_path(&self) -> Result<PathBuf> {
        match &self.labels_path {
            Some(p) => Ok(p.clone()),
            None => Ok(self.data_dir()?.join("labels.csv")),
        }
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record: String,
    pub alarm_type: Option<AlarmType>,
    pub label: Option<Label>,
    pub n_samples: usize,
    /// Empty for usable records.
    pub skipped_reason: String,
}

impl ManifestEntry {
    pub fn is_usable(&self) -> bool {
        self.skipped_reason.is_empty()
    }
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|e| e.map_err(Error::from)).collect()
}

/// Per alarm type: (records, false alarms, true alarms) over usable records.
pub fn alarm_counts(entries: &[ManifestEntry]) -> BTreeMap<AlarmType, (usize, usize, usize)> {
    let mut out = BTreeMap::new();
    for e in entries.iter().filter(|e| e.is_usable()) {
        if let (Some(a), Some(l)) = (e.alarm_type, e.label) {
            let c = out.entry(a).or_insert((0, 0, 0));
            c.0 += 1;
            if l.is_positive() {
                c.2 += 1;
            } else {
                c.1 += 1;
            }
        }
    }
    out
}

pub fn format_counts(entries: &[ManifestEntry]) -> String {
    let counts = alarm_counts(entries);
    let mut s = String::from("type  records  false  true\n");
    let mut total = (0, 0, 0);
    for a in AlarmType::ALL {
        let (n, f, t) = counts.get(&a).copied().unwrap_or_default();
        s += &format!("{:<5} {:>7} {:>6} {:>5}\n", a.code(), n, f, t);
        total = (total.0 + n, total.1 + f, total.2 + t);
    }
    s += &format!("{:<5} {:>7} {:>6} {:>5}\n", "all", total.0, total.1, total.2);
    let skipped = entries.iter().filter(|e| !e.is_usable()).count();
    s += &format!("skipped {skipped}\n");
    s
}

fn cache_path(out: &Path, record: &str) -> PathBuf {
    out.join(CACHE_DIR).join(format!("{record}.f64"))
}

pub fn write_cached_signal(path: &Path, samples: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_cached_signal(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::TruncatedSignal {
            expected: bytes.len().div_ceil(8) * 8,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

enum Source {
    Wfdb(PathBuf),
    Fixture(PathBuf),
}

impl Source {
    fn record_name(&self) -> String {
        let p = match self {
            Source::Wfdb(p) | Source::Fixture(p) => p,
        };
        p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
    }
}

/// `.hea` headers plus `.csv` fixtures that have a `.json` sidecar.
fn discover(dir: &Path) -> Result<Vec<Source>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("hea") => out.push(Source::Wfdb(path)),
            Some("csv") if path.with_extension("json").exists() => out.push(Source::Fixture(path)),
            _ => {}
        }
    }
    out.sort_by_key(|s| s.record_name());
    Ok(out)
}

fn decode(source: &Source, labels: &Labels) -> Result<LoadOutcome> {
    match source {
        Source::Wfdb(p) => load_record(p, labels),
        Source::Fixture(p) => load_fixture(p, labels).map(LoadOutcome::Record),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub entries: Vec<ManifestEntry>,
    pub decoded: usize,
    pub reused: usize,
}

impl IngestSummary {
    pub fn usable(&self) -> usize {
        self.entries.iter().filter(|e| e.is_usable()).count()
    }
}

pub fn ingest(config: &PipelineConfig) -> Result<IngestSummary> {
    let dir = config.data_dir()?;
    let labels_path = config.labels_path()?;
    let labels = Labels::from_path(&labels_path)?;
    let sources = discover(dir)?;
    let out = &config.output_dir;
    let cache = out.join(CACHE_DIR);
    fs::create_dir_all(&cache).map_err(|e| Error::io(&cache, e))?;

    let previous: HashMap<String, ManifestEntry> = match config.cache {
        CachePolicy::Reuse if out.join(MANIFEST).exists() => read_manifest(&out.join(MANIFEST))?
            .into_iter()
            .map(|e| (e.record.clone(), e))
            .collect(),
        _ => HashMap::new(),
    };

    let pool = config.thread_pool()?;
    let results: Vec<(ManifestEntry, bool)> = pool.install(|| {
        sources
            .par_iter()
            .map(|src| {
                let name = src.record_name();
                if let Some(prev) = previous.get(&name) {
                    if !prev.is_usable() || cache_path(out, &name).exists() {
                        return Ok((prev.clone(), false));
                    }
                }
                let entry = match decode(src, &labels) {
                    Ok(LoadOutcome::Record(rec)) => {
                        write_cached_signal(&cache_path(out, &rec.record_name), &rec.samples)?;
                        ManifestEntry {
                            record: name,
                            alarm_type: Some(rec.alarm_type),
                            label: Some(rec.label),
                            n_samples: rec.samples.len(),
                            skipped_reason: String::new(),
                        }
                    }
                    Ok(LoadOutcome::Skip { reason, .. }) => ManifestEntry {
                        label: labels.get(&name),
                        alarm_type: AlarmType::from_record_name(&name),
                        record: name,
                        n_samples: 0,
                        skipped_reason: reason,
                    },
                    Err(e) => {
                        log::warn!("{name}: {e}");
                        ManifestEntry {
                            label: labels.get(&name),
                            alarm_type: AlarmType::from_record_name(&name),
                            record: name,
                            n_samples: 0,
                            skipped_reason: format!("error: {e}"),
                        }
                    }
                };
                Ok((entry, true))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let decoded = results.iter().filter(|r| r.1).count();
    let entries: Vec<ManifestEntry> = results.into_iter().map(|r| r.0).collect();
    let summary = IngestSummary {
        reused: entries.len() - decoded,
        decoded,
        entries,
    };
    write_manifest(&out.join(MANIFEST), &summary.entries)?;
    if summary.usable() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(summary)
}

/// Feature rows of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFeatures {
    pub record: String,
    pub label: Option<Label>,
    pub llf: Vec<f64>,
    pub hlf_cityblock: Vec<f64>,
    pub hlf_euclidean: Vec<f64>,
    /// `None` when the signal is too short for the wavelet bank.
    pub dwt: Option<Vec<f64>>,
    pub n_beats: usize,
}

/// Segments one record and computes all of its feature vectors. A record
/// without usable beats yields the padding HLF vector and an all-zero LLF.
pub fn record_features(rec: &EcgRecord, k: usize, restarts: usize, seed: u64) -> Result<RecordFeatures> {
    let name = &rec.record_name;
    let beats = segment(name, &rec.samples, rec.sampling_rate);
    let segs = match segment_features(&beats) {
        Ok(m) => m,
        Err(Error::EmptyBeats) => SegmentFeatureMatrix::empty(name),
        Err(e) => return Err(e),
    };
    let hr = heart_rate(&beats);
    let rseed = record_seed(seed, name);
    let mut hlf = Vec::with_capacity(2);
    for metric in [Metric::Cityblock, Metric::SqEuclidean] {
        let clustering = if segs.n_segments() == 0 {
            Clustering::empty(metric, N_SEGMENT_FEATURES, rseed)
        } else {
            kmeans_best_of(&segs.rows, k, metric, rseed, restarts)?
        };
        hlf.push(synthesize(name, &clustering, hr, rec.alarm_type, Some(rec.label))?.values);
    }
    let dwt = match dwt_features(name, &rec.samples, Some(rec.label)) {
        Ok(v) => Some(v.values),
        Err(e) => {
            log::warn!("{name}: wavelet features skipped: {e}");
            None
        }
    };
    let hlf_euclidean = hlf.pop().expect("two metrics");
    let hlf_cityblock = hlf.pop().expect("two metrics");
    Ok(RecordFeatures {
        record: name.clone(),
        label: Some(rec.label),
        llf: llf_tail(&segs).values,
        hlf_cityblock,
        hlf_euclidean,
        dwt,
        n_beats: beats.len(),
    })
}

pub fn features_dir(config: &PipelineConfig) -> PathBuf {
    config.output_dir.join(FEATURES_DIR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeSummary {
    pub rows: usize,
    pub failed: Vec<(String, String)>,
}

pub fn featurize(config: &PipelineConfig) -> Result<FeaturizeSummary> {
    config.validate()?;
    let out = &config.output_dir;
    let entries = read_manifest(&out.join(MANIFEST))?;
    let usable: Vec<&ManifestEntry> = entries.iter().filter(|e| e.is_usable()).collect();
    let pool = config.thread_pool()?;
    let results: Vec<std::result::Result<RecordFeatures, (String, String)>> = pool.install(|| {
        usable
            .par_iter()
            .map(|e| {
                let run = || -> Result<RecordFeatures> {
                    let samples = read_cached_signal(&cache_path(out, &e.record))?;
                    let rec = EcgRecord {
                        record_name: e.record.clone(),
                        samples,
                        sampling_rate: TARGET_FS,
                        alarm_type: e.alarm_type.ok_or_else(|| Error::UnknownAlarmType(e.record.clone()))?,
                        label: e.label.ok_or_else(|| Error::MissingLabel(e.record.clone()))?,
                    };
                    record_features(&rec, config.k_clusters, config.kmeans_restarts, config.seed)
                };
                run().map_err(|err| {
                    log::warn!("{}: featurization failed: {err}", e.record);
                    (e.record.clone(), err.to_string())
                })
            })
            .collect()
    });

    let mut llf = FeatureTable::new(LLF_LAYOUT_VERSION, llf_names());
    let mut hlf_c = FeatureTable::new(&format!("{HLF_LAYOUT_VERSION};cityblock"), hlf_names());
    let mut hlf_e = FeatureTable::new(&format!("{HLF_LAYOUT_VERSION};sqeuclidean"), hlf_names());
    let mut dwt = FeatureTable::new(DWT_LAYOUT_VERSION, dwt_feature_names());
    let mut failed = Vec::new();
    let mut rows = 0;
    for r in results {
        match r {
            Ok(f) => {
                llf.push(&f.record, f.label, &f.llf)?;
                hlf_c.push(&f.record, f.label, &f.hlf_cityblock)?;
                hlf_e.push(&f.record, f.label, &f.hlf_euclidean)?;
                if let Some(d) = &f.dwt {
                    dwt.push(&f.record, f.label, d)?;
                }
                rows += 1;
            }
            Err(fail) => failed.push(fail),
        }
    }
    let dir = features_dir(config);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (set, table) in [
        (FeatureSet::Llf, &mut llf),
        (FeatureSet::HlfCityblock, &mut hlf_c),
        (FeatureSet::HlfEuclidean, &mut hlf_e),
        (FeatureSet::Dwt, &mut dwt),
    ] {
        table.sort_by_record();
        table.write_path(&dir.join(set.file_name()))?;
    }
    Ok(FeaturizeSummary { rows, failed })
}

pub fn report_dir(config: &PipelineConfig) -> PathBuf {
    config.output_dir.join(REPORT_DIR)
}

/// Loads the manifest and the feature files the selected scenarios need.
pub fn load_dataset(config: &PipelineConfig, scenarios: &[Scenario]) -> Result<Dataset> {
    let entries = read_manifest(&config.output_dir.join(MANIFEST))?;
    let records: Vec<(String, AlarmType, Label)> = entries
        .iter()
        .filter(|e| e.is_usable())
        .filter_map(|e| Some((e.record.clone(), e.alarm_type?, e.label?)))
        .collect();
    let mut sets: Vec<FeatureSet> = scenarios.iter().flat_map(|s| s.inputs().iter().copied()).collect();
    sets.sort();
    sets.dedup();
    let dir = features_dir(config);
    let mut tables = Vec::new();
    for set in sets {
        let path = dir.join(set.file_name());
        if !path.exists() {
            return Err(Error::MissingInput(path.display().to_string()));
        }
        tables.push((set, FeatureTable::read_path(&path)?));
    }
    Dataset::new(&records, tables)
}

pub fn evaluate(config: &PipelineConfig) -> Result<MetricsReport> {
    config.validate()?;
    let scenarios = config.scenario_list()?;
    let data = load_dataset(config, &scenarios)?;
    let matrix = MatrixConfig {
        scenarios,
        classifiers: config.classifier_list()?,
        folds: config.folds,
        seed: config.seed,
        params: config.boost_params(),
    };
    let pool = config.thread_pool()?;
    let report = pool.install(|| evaluation::run_matrix(&data, &matrix))?;
    evaluation::write_report(&report, &report_dir(config))?;
    Ok(report)
}

/// Re-renders `report.md` and the ROC files from `report.json`.
pub fn report(config: &PipelineConfig) -> Result<String> {
    let dir = report_dir(config);
    let path = dir.join(evaluation::REPORT_JSON);
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: MetricsReport = serde_json::from_str(&text)?;
    evaluation::write_report(&report, &dir)?;
    Ok(evaluation::render_markdown(&report))
}
