//! Shallow CART trees boosted with AdaBoost.M1 or RUSBoost.
//!
//! Trees split on `x[feature] < threshold` (left) with thresholds at the
//! midpoint between adjacent observed values. Growth is best-first by
//! weighted Gini decrease until `max_splits` internal nodes exist or no split
//! helps. Samples with zero weight are invisible to the tree.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::record_io::Label;

pub const DEFAULT_ROUNDS: usize = 30;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_MAX_SPLITS: usize = 20;
pub const DEFAULT_TARGET_RATIO: f64 = 1.0;
/// Error floor used when a round classifies the training set perfectly.
pub const MIN_ERROR: f64 = 1e-10;

const MODEL_MAGIC: &str = "ecgalarm-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Weighted class mass that reached the leaf during training.
    Leaf { pos: f64, neg: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
    pub max_splits: usize,
}

impl DecisionTree {
    /// +1 or -1.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] < threshold { left } else { right },
                Node::Leaf { pos, neg } => return if pos >= neg { 1.0 } else { -1.0 },
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }
}

/// Column orderings shared by every tree of one boosting run.
struct Presorted {
    by_feature: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &Matrix) -> Self {
        let by_feature = (0..x.n_cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, f)
                        .total_cmp(&x.get(b as usize, f))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self { by_feature }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Open {
    node: usize,
    lists: Vec<Vec<u32>>,
    best: Option<Candidate>,
}

fn gini_mass(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w > 0.0 {
        2.0 * pos * neg / w
    } else {
        0.0
    }
}

fn best_split(x: &Matrix, y: &[f64], w: &[f64], lists: &[Vec<u32>], pos: f64, neg: f64) -> Option<Candidate> {
    let parent = gini_mass(pos, neg);
    let floor = 1e-12 * (pos + neg);
    let mut best: Option<Candidate> = None;
    for (f, list) in lists.iter().enumerate() {
        let (mut lp, mut ln) = (0.0, 0.0);
        for k in 0..list.len().saturating_sub(1) {
            let i = list[k] as usize;
            if y[i] > 0.0 {
                lp += w[i];
            } else {
                ln += w[i];
            }
            let v = x.get(i, f);
            let next = x.get(list[k + 1] as usize, f);
            if !(v < next) {
                continue;
            }
            let gain = parent - gini_mass(lp, ln) - gini_mass(pos - lp, neg - ln);
            if gain > floor && best.is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    feature: f,
                    threshold: v + (next - v) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

fn mass(y: &[f64], w: &[f64], list: &[u32]) -> (f64, f64) {
    list.iter().fold((0.0, 0.0), |(p, n), &i| {
        let i = i as usize;
        if y[i] > 0.0 {
            (p + w[i], n)
        } else {
            (p, n + w[i])
        }
    })
}

fn grow(x: &Matrix, pre: &Presorted, y: &[f64], w: &[f64], max_splits: usize) -> DecisionTree {
    let root_lists: Vec<Vec<u32>> = pre
        .by_feature
        .iter()
        .map(|l| l.iter().copied().filter(|&i| w[i as usize] > 0.0).collect())
        .collect();
    let (pos, neg) = mass(y, w, root_lists.first().map_or(&[][..], |l| l));
    let mut nodes = vec![Node::Leaf { pos, neg }];
    let best = best_split(x, y, w, &root_lists, pos, neg);
    let mut open = vec![Open {
        node: 0,
        lists: root_lists,
        best,
    }];
    let mut splits = 0;
    let mut goes_left = vec![false; x.n_rows()];
    while splits < max_splits {
        // largest gain, earliest node on ties
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(k, o)| o.best.map(|b| (k, b.gain, o.node)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
        let Some((k, _, _)) = pick else { break };
        let parent = open.swap_remove(k);
        let split = parent.best.expect("picked node has a split");
        for &i in &parent.lists[split.feature] {
            let i = i as usize;
            goes_left[i] = x.get(i, split.feature) < split.threshold;
        }
        let (mut left_lists, mut right_lists) = (Vec::new(), Vec::new());
        for list in parent.lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| goes_left[i as usize]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let left = nodes.len();
        let right = left + 1;
        for lists in [left_lists, right_lists] {
            let (p, n) = mass(y, w, &lists[0]);
            let node = nodes.len();
            nodes.push(Node::Leaf { pos: p, neg: n });
            let best = best_split(x, y, w, &lists, p, n);
            open.push(Open { node, lists, best });
        }
        nodes[parent.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        splits += 1;
    }
    DecisionTree { nodes, max_splits }
}

fn signs(y: &[Label]) -> Vec<f64> {
    y.iter().map(|l| l.sign()).collect()
}

/// Fits one weighted CART tree.
pub fn fit_tree(x: &Matrix, y: &[Label], w: &[f64], max_splits: usize) -> Result<DecisionTree> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    for len in [y.len(), w.len()] {
        if len != x.n_rows() {
            return Err(Error::Dimension {
                expected: x.n_rows(),
                actual: len,
            });
        }
    }
    if w.iter().any(|&v| !(v >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::Config("tree weights must be non-negative with a positive sum".into()));
    }
    Ok(grow(x, &Presorted::new(x), &signs(y), w, max_splits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    AdaBoostM1,
    RusBoost,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AdaBoostM1 => "AdaBoostM1",
            Algorithm::RusBoost => "RUSBoost",
        }
    }

    /// Table heading used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::AdaBoostM1 => "Boosted Trees",
            Algorithm::RusBoost => "RUSBoosted Trees",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaboostm1" | "adaboost" | "boosted" => Ok(Algorithm::AdaBoostM1),
            "rusboost" | "rusboosted" => Ok(Algorithm::RusBoost),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_splits: usize,
    /// Minority:majority ratio of each RUSBoost round.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            learning_rate: DEFAULT_LEARNING_RATE,
            max_splits: DEFAULT_MAX_SPLITS,
            target_ratio: DEFAULT_TARGET_RATIO,
            seed: 0,
        }
    }
}

/// Per-column min-max scaling; a constant column maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(x: &Matrix) -> Self {
        let d = x.n_cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        if x.n_rows() == 0 {
            min.fill(0.0);
            max.fill(0.0);
        }
        Self { min, max }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (v - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::empty(x.n_cols());
        for row in x.rows() {
            out.push_row(&self.apply_row(row)).expect("same width");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble {
    pub algorithm: Algorithm,
    pub params: BoostParams,
    pub feature_layout_version: String,
    pub normalization: MinMax,
    pub trees: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
    /// Weighted training error of each kept round.
    pub round_errors: Vec<f64>,
}

impl BoostedEnsemble {
    pub fn n_features(&self) -> usize {
        self.normalization.min.len()
    }

    /// `Σ α_t h_t(x)` on the normalised input.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        let z = self.normalization.apply_row(x);
        Ok(self.score_normalized(&z))
    }

    fn score_normalized(&self, z: &[f64]) -> f64 {
        self.trees
            .iter()
            .zip(&self.alphas)
            .map(|(t, a)| a * t.predict(z))
            .sum()
    }

    pub fn score_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.score(r)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(label_of(self.score(x)?))
    }

    /// Number of splits on each feature across the ensemble.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_features()];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, .. } = n {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Positive score means true alarm.
pub fn label_of(score: f64) -> Label {
    if score > 0.0 {
        Label::TrueAlarm
    } else {
        Label::FalseAlarm
    }
}

/// Called after every kept round with the round index and the renormalised
/// sample weights.
type RoundHook<'a> = &'a mut dyn FnMut(usize, &[f64]);

fn validate(x: &Matrix, y: &[Label]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if y.len() != x.n_rows() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// All of `minority` plus `keep` members of `majority` drawn without
/// replacement, ascending.
fn undersample(rng: &mut ChaCha8Rng, minority: &[usize], majority: &[usize], keep: usize) -> Vec<usize> {
    let mut out: Vec<usize> = minority.to_vec();
    out.extend(sample(rng, majority.len(), keep).into_iter().map(|k| majority[k]));
    out.sort_unstable();
    out
}

fn boost(
    x: &Matrix,
    y: &[Label],
    params: BoostParams,
    algorithm: Algorithm,
    layout: &str,
    hook: Option<RoundHook<'_>>,
) -> Result<BoostedEnsemble> {
    validate(x, y)?;
    if algorithm == Algorithm::RusBoost && !(params.target_ratio > 0.0) {
        return Err(Error::Config("target ratio must be positive".into()));
    }
    let normalization = MinMax::fit(x);
    let z = normalization.apply(x);
    let pre = Presorted::new(&z);
    let ys = signs(y);
    let n = y.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut hook = hook;

    let pos: Vec<usize> = (0..n).filter(|&i| ys[i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&i| ys[i] < 0.0).collect();
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let keep = ((minority.len() as f64 / params.target_ratio).round() as usize).clamp(1, majority.len());

    let mut ens = BoostedEnsemble {
        algorithm,
        params,
        feature_layout_version: layout.to_string(),
        normalization,
        trees: Vec::new(),
        alphas: Vec::new(),
        round_errors: Vec::new(),
    };
    let mut subset_w = vec![0.0; n];
    for round in 0..params.rounds {
        let tree = match algorithm {
            Algorithm::AdaBoostM1 => grow(&z, &pre, &ys, &w, params.max_splits),
            Algorithm::RusBoost if keep == majority.len() => grow(&z, &pre, &ys, &w, params.max_splits),
            Algorithm::RusBoost => {
                subset_w.fill(0.0);
                for i in undersample(&mut rng, &minority, &majority, keep) {
                    subset_w[i] = w[i];
                }
                let total: f64 = subset_w.iter().sum();
                if total > 0.0 {
                    subset_w.iter_mut().for_each(|v| *v /= total);
                }
                grow(&z, &pre, &ys, &subset_w, params.max_splits)
            }
        };
        let h: Vec<f64> = z.rows().map(|r| tree.predict(r)).collect();
        let mut eps: f64 = (0..n).filter(|&i| h[i] != ys[i]).map(|i| w[i]).sum();
        if eps >= 0.5 {
            break;
        }
        let perfect = eps <= 0.0;
        if perfect {
            eps = MIN_ERROR;
        }
        let alpha = params.learning_rate * 0.5 * ((1.0 - eps) / eps).ln();
        for i in 0..n {
            w[i] *= (-alpha * ys[i] * h[i]).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        ens.trees.push(tree);
        ens.alphas.push(alpha);
        ens.round_errors.push(eps);
        if let Some(hook) = hook.as_mut() {
            hook(round, &w);
        }
        if perfect {
            break;
        }
    }
    Ok(ens)
}

pub fn fit_adaboost(x: &Matrix, y: &[Label], params: BoostParams, layout: &str) -> Result<BoostedEnsemble> {
    boost(x, y, params, Algorithm::AdaBoostM1, layout, None)
}

pub fn fit_rusboost(x: &Matrix, y: &[Label], params: BoostParams, layout: &str) -> Result<BoostedEnsemble> {
    boost(x, y, params, Algorithm::RusBoost, layout, None)
}

pub fn fit(algorithm: Algorithm, x: &Matrix, y: &[Label], params: BoostParams, layout: &str) -> Result<BoostedEnsemble> {
    boost(x, y, params, algorithm, layout, None)
}

// Model file: line-oriented text, floats in shortest round-trip form.
//
//   ecgalarm-model 1
//   algorithm <AdaBoostM1|RUSBoost>
//   layout <feature layout version>
//   params <rounds> <learning_rate> <max_splits> <target_ratio> <seed>
//   features <d>
//   min <d floats>
//   max <d floats>
//   trees <t>
//   tree <alpha> <round_error> <max_splits> <n_nodes>
//   S <feature> <threshold> <left> <right>   |   L <pos> <neg>
//   ...
//   end

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl BoostedEnsemble {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(s, "algorithm {}", self.algorithm);
        let _ = writeln!(s, "layout {}", self.feature_layout_version);
        let _ = writeln!(
            s,
            "params {} {} {} {} {}",
            p.rounds, p.learning_rate, p.max_splits, p.target_ratio, p.seed
        );
        let _ = writeln!(s, "features {}", self.n_features());
        let _ = writeln!(s, "min {}", join(&self.normalization.min));
        let _ = writeln!(s, "max {}", join(&self.normalization.max));
        let _ = writeln!(s, "trees {}", self.trees.len());
        for ((t, a), e) in self.trees.iter().zip(&self.alphas).zip(&self.round_errors) {
            let _ = writeln!(s, "tree {a} {e} {} {}", t.max_splits, t.nodes.len());
            for n in &t.nodes {
                let _ = match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "S {feature} {threshold} {left} {right}"),
                    Node::Leaf { pos, neg } => writeln!(s, "L {pos} {neg}"),
                };
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        fn keyed<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            key: &str,
        ) -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::Model(format!("unexpected end of file, wanted {key}")))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok((no, parts.map(str::to_string).collect())),
                other => Err(Error::Model(format!("line {no}: expected {key}, found {other:?}"))),
            }
        }
        fn num<T: FromStr>(no: usize, s: Option<&String>) -> Result<T> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Model(format!("line {no}: bad number {s:?}")))
        }
        fn floats(no: usize, v: &[String], len: usize) -> Result<Vec<f64>> {
            if v.len() != len {
                return Err(Error::Model(format!("line {no}: expected {len} values, got {}", v.len())));
            }
            v.iter().map(|s| num(no, Some(s))).collect()
        }

        let (no, v) = keyed(&mut lines, MODEL_MAGIC)?;
        let version: u32 = num(no, v.first())?;
        if version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {version}")));
        }
        let (_, v) = keyed(&mut lines, "algorithm")?;
        let algorithm: Algorithm = v.first().map_or("", |s| s.as_str()).parse()?;
        let (_, v) = keyed(&mut lines, "layout")?;
        let feature_layout_version = v.join(" ");
        let (no, v) = keyed(&mut lines, "params")?;
        let params = BoostParams {
            rounds: num(no, v.first())?,
            learning_rate: num(no, v.get(1))?,
            max_splits: num(no, v.get(2))?,
            target_ratio: num(no, v.get(3))?,
            seed: num(no, v.get(4))?,
        };
        let (no, v) = keyed(&mut lines, "features")?;
        let d: usize = num(no, v.first())?;
        let (no, v) = keyed(&mut lines, "min")?;
        let min = floats(no, &v, d)?;
        let (no, v) = keyed(&mut lines, "max")?;
        let max = floats(no, &v, d)?;
        let (no, v) = keyed(&mut lines, "trees")?;
        let n_trees: usize = num(no, v.first())?;
        let mut trees = Vec::with_capacity(n_trees);
        let mut alphas = Vec::with_capacity(n_trees);
        let mut round_errors = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (no, v) = keyed(&mut lines, "tree")?;
            alphas.push(num(no, v.first())?);
            round_errors.push(num(no, v.get(1))?);
            let max_splits = num(no, v.get(2))?;
            let n_nodes: usize = num(no, v.get(3))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let (no, line) = lines
                    .next()
                    .ok_or_else(|| Error::Model("unexpected end of file in tree".into()))?;
                let v: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                let node = match v.first().map(String::as_str) {
                    Some("S") => Node::Split {
                        feature: num(no, v.get(1))?,
                        threshold: num(no, v.get(2))?,
                        left: num(no, v.get(3))?,
                        right: num(no, v.get(4))?,
                    },
                    Some("L") => Node::Leaf {
                        pos: num(no, v.get(1))?,
                        neg: num(no, v.get(2))?,
                    },
                    _ => return Err(Error::Model(format!("line {no}: expected node"))),
                };
                nodes.push(node);
            }
            check_tree(&nodes, d)?;
            trees.push(DecisionTree { nodes, max_splits });
        }
        keyed(&mut lines, "end")?;
        Ok(BoostedEnsemble {
            algorithm,
            params,
            feature_layout_version,
            normalization: MinMax { min, max },
            trees,
            alphas,
            round_errors,
        })
    }
}

// Children must point forward so prediction always terminates.
fn check_tree(nodes: &[Node], d: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Model("tree without nodes".into()));
    }
    for (i, n) in nodes.iter().enumerate() {
        if let Node::Split {
            feature, left, right, ..
        } = *n
        {
            if feature >= d || left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                return Err(Error::Model(format!("malformed split at node {i}")));
            }
        }
    }
    Ok(())
}
