//! Stratified cross-validation and the scenario × classifier experiment
//! matrix. Metrics are pooled over all test folds; a true alarm is the
//! positive class.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dwt_features::N_DWT;
use crate::ensemble::{self, label_of, Algorithm, BoostParams};
use crate::error::{Error, Result};
use crate::feature_synthesis::N_HLF;
use crate::feature_table::FeatureTable;
use crate::matrix::Matrix;
use crate::record_io::{AlarmType, Label};
use crate::segment_features::N_LLF;

pub const DEFAULT_FOLDS: usize = 5;

/// One per-record feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSet {
    Llf,
    Dwt,
    HlfCityblock,
    HlfEuclidean,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [
        FeatureSet::Llf,
        FeatureSet::HlfCityblock,
        FeatureSet::HlfEuclidean,
        FeatureSet::Dwt,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            FeatureSet::Llf => "llf.csv",
            FeatureSet::Dwt => "dwt.csv",
            FeatureSet::HlfCityblock => "hlf_cityblock.csv",
            FeatureSet::HlfEuclidean => "hlf_euclidean.csv",
        }
    }

    pub fn width(self) -> usize {
        match self {
            FeatureSet::Llf => N_LLF,
            FeatureSet::Dwt => N_DWT,
            FeatureSet::HlfCityblock | FeatureSet::HlfEuclidean => N_HLF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Llf,
    Dwt,
    HlfCityblock,
    HlfEuclidean,
    DwtHlfCityblock,
    DwtHlfEuclidean,
}

impl Scenario {
    /// Report column order.
    pub const ALL: [Scenario; 6] = [
        Scenario::Llf,
        Scenario::Dwt,
        Scenario::HlfCityblock,
        Scenario::HlfEuclidean,
        Scenario::DwtHlfCityblock,
        Scenario::DwtHlfEuclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Llf => "LLF",
            Scenario::Dwt => "DWT",
            Scenario::HlfCityblock => "HLF_cityblock",
            Scenario::HlfEuclidean => "HLF_Euclidean",
            Scenario::DwtHlfCityblock => "DWT+HLF_cityblock",
            Scenario::DwtHlfEuclidean => "DWT+HLF_Euclidean",
        }
    }

    /// Feature files concatenated column-wise, in order.
    pub fn inputs(self) -> &'static [FeatureSet] {
        match self {
            Scenario::Llf => &[FeatureSet::Llf],
            Scenario::Dwt => &[FeatureSet::Dwt],
            Scenario::HlfCityblock => &[FeatureSet::HlfCityblock],
            Scenario::HlfEuclidean => &[FeatureSet::HlfEuclidean],
            Scenario::DwtHlfCityblock => &[FeatureSet::Dwt, FeatureSet::HlfCityblock],
            Scenario::DwtHlfEuclidean => &[FeatureSet::Dwt, FeatureSet::HlfEuclidean],
        }
    }

    pub fn width(self) -> usize {
        self.inputs().iter().map(|s| s.width()).sum()
    }

    fn slug(self) -> String {
        self.name().to_ascii_lowercase().replace('+', "_")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let want = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().to_ascii_lowercase() == want || sc.slug() == want)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fold index of every record. Records are grouped by (alarm type, label);
/// each group is shuffled and dealt round-robin, the dealer position carrying
/// over from one group to the next.
pub fn stratified_folds(strata: &[(AlarmType, Label)], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > strata.len() {
        return Err(Error::Config(format!(
            "cannot split {} records into {k} folds",
            strata.len()
        )));
    }
    let mut groups: BTreeMap<(usize, bool), Vec<usize>> = BTreeMap::new();
    for (i, (a, l)) in strata.iter().enumerate() {
        groups.entry((a.index(), l.is_positive())).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; strata.len()];
    let mut dealer = 0;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = dealer % k;
            dealer += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl From<Confusion> for Metrics {
    fn from(c: Confusion) -> Self {
        Metrics {
            accuracy: ratio(c.tp + c.tn, c.total()),
            sensitivity: ratio(c.tp, c.tp + c.fn_),
            specificity: ratio(c.tn, c.tn + c.fp),
        }
    }
}

/// Counts and rates; a rate with an empty denominator is reported as 0.
pub fn confusion_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<(Confusion, Metrics)> {
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let mut c = Confusion::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t.is_positive(), p.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
        }
    }
    Ok((c, c.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive. The first point
    /// uses +inf, stored as `null` in JSON.
    #[serde(with = "inf_as_null")]
    pub threshold: f64,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub auc: f64,
    pub auc_mann_whitney: f64,
    pub points: Vec<RocPoint>,
}

/// ROC curve with one step per distinct score, trapezoidal AUC and the
/// normalised Mann-Whitney statistic.
pub fn roc_auc(y_true: &[Label], scores: &[f64]) -> Result<Roc> {
    if y_true.len() != scores.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: scores.len(),
        });
    }
    let n_pos = y_true.iter().filter(|l| l.is_positive()).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // twice the area in count units, exact for realistic sizes
    let (mut tp, mut fp, mut area2) = (0usize, 0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
    }
    let auc = area2 as f64 / (2 * n_pos * n_neg) as f64;

    // rank-sum form with mid-ranks for ties
    let mut rank_sum = 0.0;
    let mut j = order.len();
    while j > 0 {
        let s = scores[order[j - 1]];
        let hi = j;
        while j > 0 && scores[order[j - 1]] == s {
            j -= 1;
        }
        // ascending ranks of positions j..hi (1-based) are n-hi+1 ..= n-j
        let n = order.len();
        let mid = ((n - hi + 1) + (n - j)) as f64 / 2.0;
        let pos_here = order[j..hi].iter().filter(|&&k| y_true[k].is_positive()).count();
        rank_sum += mid * pos_here as f64;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let auc_mann_whitney = u / (n_pos * n_neg) as f64;

    Ok(Roc {
        auc,
        auc_mann_whitney,
        points,
    })
}

/// Records, their strata and the loaded feature matrices, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<String>,
    pub alarm_types: Vec<AlarmType>,
    pub labels: Vec<Label>,
    tables: BTreeMap<FeatureSet, Matrix>,
}

impl Dataset {
    /// Keeps the records that appear in every table, in the given order.
    pub fn new(records: &[(String, AlarmType, Label)], tables: Vec<(FeatureSet, FeatureTable)>) -> Result<Self> {
        let mut keep = Vec::new();
        for (name, a, l) in records {
            let missing: Vec<&str> = tables
                .iter()
                .filter(|(_, t)| t.position(name).is_none())
                .map(|(s, _)| s.file_name())
                .collect();
            if missing.is_empty() {
                keep.push((name.clone(), *a, *l));
            } else {
                log::warn!("{name}: no row in {}; left out", missing.join(", "));
            }
        }
        let mut out = Dataset {
            records: keep.iter().map(|r| r.0.clone()).collect(),
            alarm_types: keep.iter().map(|r| r.1).collect(),
            labels: keep.iter().map(|r| r.2).collect(),
            tables: BTreeMap::new(),
        };
        for (set, table) in tables {
            if table.names.len() != set.width() {
                return Err(Error::Dimension {
                    expected: set.width(),
                    actual: table.names.len(),
                });
            }
            let idx: Vec<usize> = out
                .records
                .iter()
                .map(|r| table.position(r).expect("filtered above"))
                .collect();
            out.tables.insert(set, table.rows.select_rows(&idx));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has(&self, set: FeatureSet) -> bool {
        self.tables.contains_key(&set)
    }

    pub fn strata(&self) -> Vec<(AlarmType, Label)> {
        self.alarm_types.iter().copied().zip(self.labels.iter().copied()).collect()
    }

    /// Column-wise concatenation of the scenario's feature sets.
    pub fn matrix(&self, scenario: Scenario) -> Result<Matrix> {
        let parts: Vec<&Matrix> = scenario
            .inputs()
            .iter()
            .map(|s| {
                self.tables
                    .get(s)
                    .ok_or_else(|| Error::MissingInput(format!("{} (needed by {scenario})", s.file_name())))
            })
            .collect::<Result<_>>()?;
        let mut m = Matrix::empty(scenario.width());
        let mut row = Vec::with_capacity(scenario.width());
        for i in 0..self.len() {
            row.clear();
            for p in &parts {
                row.extend_from_slice(p.row(i));
            }
            m.push_row(&row)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    pub scenarios: Vec<Scenario>,
    pub classifiers: Vec<Algorithm>,
    pub folds: usize,
    pub seed: u64,
    pub params: BoostParams,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            classifiers: vec![Algorithm::AdaBoostM1, Algorithm::RusBoost],
            folds: DEFAULT_FOLDS,
            seed: 0,
            params: BoostParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
    /// Absent when the test fold holds a single class.
    pub auc: Option<f64>,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: Scenario,
    pub classifier: String,
    pub n_features: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
    pub auc_mann_whitney: f64,
    pub per_fold: Vec<FoldReport>,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_records: usize,
    pub folds: usize,
    pub seed: u64,
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_splits: usize,
    pub target_ratio: f64,
    pub cells: Vec<CellReport>,
}

impl MetricsReport {
    pub fn cell(&self, scenario: Scenario, classifier: Algorithm) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.classifier == classifier.name())
    }
}

struct FoldOutcome {
    test: Vec<usize>,
    scores: Vec<f64>,
    rounds: usize,
}

/// Trains on every fold but `fold` and scores `fold`. Normalisation lives
/// inside the ensemble and is fitted on the training rows only.
fn run_fold(x: &Matrix, y: &[Label], folds: &[usize], fold: usize, algorithm: Algorithm, params: BoostParams) -> Result<(ensemble::BoostedEnsemble, FoldOutcome)> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
    let xt = x.select_rows(&train);
    let yt: Vec<Label> = train.iter().map(|&i| y[i]).collect();
    let params = BoostParams {
        seed: params.seed.wrapping_add(fold as u64),
        ..params
    };
    let model = ensemble::fit(algorithm, &xt, &yt, params, "")?;
    let scores = test
        .iter()
        .map(|&i| model.score(x.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let rounds = model.trees.len();
    Ok((model, FoldOutcome { test, scores, rounds }))
}

fn assemble(scenario: Scenario, algorithm: Algorithm, y: &[Label], k: usize, outcomes: Vec<FoldOutcome>) -> Result<CellReport> {
    let mut pooled = vec![0.0; y.len()];
    let mut per_fold = Vec::with_capacity(k);
    for (fold, o) in outcomes.into_iter().enumerate() {
        let truth: Vec<Label> = o.test.iter().map(|&i| y[i]).collect();
        let pred: Vec<Label> = o.scores.iter().map(|&s| label_of(s)).collect();
        let (confusion, metrics) = confusion_metrics(&truth, &pred)?;
        per_fold.push(FoldReport {
            fold,
            n_test: o.test.len(),
            confusion,
            metrics,
            auc: roc_auc(&truth, &o.scores).ok().map(|r| r.auc),
            rounds: o.rounds,
        });
        for (&i, &s) in o.test.iter().zip(&o.scores) {
            pooled[i] = s;
        }
    }
    let pred: Vec<Label> = pooled.iter().map(|&s| label_of(s)).collect();
    let (confusion, m) = confusion_metrics(y, &pred)?;
    let roc = roc_auc(y, &pooled)?;
    Ok(CellReport {
        scenario,
        classifier: algorithm.name().to_string(),
        n_features: scenario.width(),
        confusion,
        accuracy: m.accuracy,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        auc: roc.auc,
        auc_mann_whitney: roc.auc_mann_whitney,
        per_fold,
        roc: roc.points,
    })
}

/// Runs every (scenario, classifier) cell with shared folds. Cells and folds
/// train in parallel; the report does not depend on scheduling.
pub fn run_matrix(data: &Dataset, config: &MatrixConfig) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let folds = stratified_folds(&data.strata(), config.folds, config.seed)?;
    let matrices: Vec<(Scenario, Matrix)> = config
        .scenarios
        .iter()
        .map(|&s| Ok((s, data.matrix(s)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Algorithm, usize)> = (0..matrices.len())
        .flat_map(|m| {
            config
                .classifiers
                .iter()
                .flat_map(move |&a| (0..config.folds).map(move |f| (m, a, f)))
        })
        .collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(m, a, f)| run_fold(&matrices[m].1, &data.labels, &folds, f, a, config.params).map(|r| r.1))
        .collect::<Result<_>>()?;

    let mut outcomes = outcomes.into_iter();
    let mut cells = Vec::new();
    for (scenario, _) in &matrices {
        for &a in &config.classifiers {
            let chunk: Vec<FoldOutcome> = outcomes.by_ref().take(config.folds).collect();
            cells.push(assemble(*scenario, a, &data.labels, config.folds, chunk)?);
        }
    }
    let p = config.params;
    Ok(MetricsReport {
        n_records: data.len(),
        folds: config.folds,
        seed: config.seed,
        rounds: p.rounds,
        learning_rate: p.learning_rate,
        max_splits: p.max_splits,
        target_ratio: p.target_ratio,
        cells,
    })
}

/// One table per classifier: Accuracy, Specificity, Sensitivity and AUC rows,
/// one column per scenario.
pub fn render_markdown(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# Alarm classification results\n\n{} records, {}-fold stratified cross-validation, seed {}, pooled metrics.\n",
        report.n_records, report.folds, report.seed
    );
    let mut classifiers: Vec<&str> = Vec::new();
    for c in &report.cells {
        if !classifiers.contains(&c.classifier.as_str()) {
            classifiers.push(&c.classifier);
        }
    }
    for name in classifiers {
        let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.classifier == name).collect();
        let title = name
            .parse::<Algorithm>()
            .map(|a| a.display_name().to_string())
            .unwrap_or_else(|_| name.to_string());
        let _ = writeln!(s, "## {title}\n");
        let _ = write!(s, "| Scenario |");
        for c in &cells {
            let _ = write!(s, " {} |", c.scenario);
        }
        let _ = write!(s, "\n|---|");
        for _ in &cells {
            let _ = write!(s, "---|");
        }
        s.push('\n');
        let rows: [(&str, fn(&CellReport) -> f64); 4] = [
            ("Accuracy", |c| c.accuracy),
            ("Specificity", |c| c.specificity),
            ("Sensitivity", |c| c.sensitivity),
            ("AUC", |c| c.auc),
        ];
        for (label, get) in rows {
            let _ = write!(s, "| {label} |");
            for c in &cells {
                let _ = write!(s, " {:.3} |", get(c));
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

pub fn write_roc_csv<W: std::io::Write>(writer: W, points: &[RocPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fpr", "tpr", "threshold"])?;
    for p in points {
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<roc>", e))?;
    Ok(())
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const ROC_DIR: &str = "roc";

/// `report.json`, `report.md` and `roc/<scenario>__<classifier>.csv`.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    let roc_dir = dir.join(ROC_DIR);
    std::fs::create_dir_all(&roc_dir).map_err(|e| Error::io(&roc_dir, e))?;
    let json = serde_json::to_string_pretty(report)? + "\n";
    let path = dir.join(REPORT_JSON);
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(REPORT_MD);
    std::fs::write(&path, render_markdown(report)).map_err(|e| Error::io(&path, e))?;
    for c in &report.cells {
        let path = roc_dir.join(format!("{}__{}.csv", c.scenario.slug(), c.classifier.to_ascii_lowercase()));
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_roc_csv(std::io::BufWriter::new(f), &c.roc)?;
    }
    Ok(())
}
