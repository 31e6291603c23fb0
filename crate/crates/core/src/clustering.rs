//! Per-patient k-means over segment feature rows.
//!
//! Lloyd iterations with k-means++ seeding. The update step uses the
//! per-dimension median under the cityblock metric and the mean under
//! squared Euclidean, so each step minimises the objective it is paired
//! with and the recorded objective never increases.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_K: usize = 5;
pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cityblock,
    #[serde(rename = "sqeuclidean")]
    SqEuclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cityblock => "cityblock",
            Metric::SqEuclidean => "sqeuclidean",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cityblock" | "l1" => Ok(Metric::Cityblock),
            "sqeuclidean" | "euclidean" => Ok(Metric::SqEuclidean),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Cityblock (L1) or squared Euclidean distance.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dist(a, b, metric))
}

#[inline]
fn dist(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    let it = a.iter().zip(b);
    match metric {
        Metric::Cityblock => it.map(|(x, y)| (x - y).abs()).sum(),
        Metric::SqEuclidean => it.map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub metric: Metric,
    /// `k` rows, one centroid each.
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Objective after every update step, first to last.
    pub objective_history: Vec<f64>,
}

impl Clustering {
    /// Clustering of a record with no segments.
    pub fn empty(metric: Metric, n_cols: usize, seed: u64) -> Self {
        Self {
            k: 0,
            metric,
            centroids: Matrix::empty(n_cols),
            assignments: Vec::new(),
            sizes: Vec::new(),
            seed,
            objective_history: Vec::new(),
        }
    }

    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    /// Dump: one centroid row per line, then `sizes,<n1>,...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        for row in self.centroids.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        let mut sizes = vec!["sizes".to_string()];
        sizes.extend(self.sizes.iter().map(|s| s.to_string()));
        w.write_record(&sizes)?;
        w.flush().map_err(|e| Error::io("<clustering>", e))?;
        Ok(())
    }
}

fn objective(data: &Matrix, centroids: &Matrix, assign: &[usize], metric: Metric) -> f64 {
    data.rows()
        .zip(assign)
        .map(|(x, &c)| dist(x, centroids.row(c), metric))
        .sum()
}

/// k-means++ seeding: each further centre is drawn with probability
/// proportional to its distance (under `metric`) from the nearest chosen one.
fn seed_centroids(data: &Matrix, k: usize, metric: Metric, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.n_rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = data
        .rows()
        .map(|x| dist(x, data.row(chosen[0]), metric))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can leave `pick` on an already chosen point
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every point coincides with a centre; take an unused index
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, x) in data.rows().enumerate() {
            nearest[i] = nearest[i].min(dist(x, data.row(next), metric));
        }
    }
    chosen
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn update_centroids(data: &Matrix, assign: &[usize], k: usize, metric: Metric, centroids: &mut Matrix) {
    let d = data.n_cols();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assign.iter().enumerate() {
        members[c].push(i);
    }
    let mut rows = Vec::with_capacity(k);
    let mut scratch = Vec::new();
    for (c, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            rows.push(centroids.row(c).to_vec());
            continue;
        }
        let row: Vec<f64> = (0..d)
            .map(|j| match metric {
                Metric::SqEuclidean => idx.iter().map(|&i| data.get(i, j)).sum::<f64>() / idx.len() as f64,
                Metric::Cityblock => {
                    scratch.clear();
                    scratch.extend(idx.iter().map(|&i| data.get(i, j)));
                    median(&mut scratch)
                }
            })
            .collect();
        rows.push(row);
    }
    *centroids = Matrix::from_rows(&rows).expect("uniform centroid width");
}

/// Moves the point farthest from its centroid into each empty cluster as a
/// singleton. Returns whether anything changed.
fn repair_empty(data: &Matrix, assign: &mut [usize], k: usize, metric: Metric, centroids: &mut Matrix) -> bool {
    let mut changed = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assign.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return changed;
        };
        let far = (0..assign.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .map(|i| (i, dist(data.row(i), centroids.row(assign[i]), metric)))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else {
            return changed;
        };
        assign[i] = empty;
        let mut rows: Vec<Vec<f64>> = centroids.rows().map(<[f64]>::to_vec).collect();
        rows[empty] = data.row(i).to_vec();
        *centroids = Matrix::from_rows(&rows).expect("uniform centroid width");
        changed = true;
    }
}

/// Assigns every row to its nearest centroid, keeping the current cluster on
/// ties so the iteration cannot cycle between equal-cost labelings.
fn assign_step(data: &Matrix, centroids: &Matrix, metric: Metric, assign: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, x) in data.rows().enumerate() {
        let current = assign[i];
        let mut best = current;
        let mut best_d = dist(x, centroids.row(current), metric);
        for c in 0..centroids.n_rows() {
            let d = dist(x, centroids.row(c), metric);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        if best != current {
            assign[i] = best;
            changed = true;
        }
    }
    changed
}

/// Lloyd's k-means. `k` is reduced to the row count when there are fewer
/// rows than clusters.
pub fn kmeans(data: &Matrix, k: usize, metric: Metric, seed: u64) -> Result<Clustering> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = seed_centroids(data, k, metric, &mut rng);
    let mut centroids = data.select_rows(&init);

    // initial assignment: nearest centre, lowest index on ties
    let mut assign: Vec<usize> = data
        .rows()
        .map(|x| {
            (0..k)
                .map(|c| (c, dist(x, centroids.row(c), metric)))
                .fold((0, f64::INFINITY), |b, (c, d)| if d < b.1 { (c, d) } else { b })
                .0
        })
        .collect();
    repair_empty(data, &mut assign, k, metric, &mut centroids);

    let mut history = Vec::new();
    for iter in 0..MAX_ITERATIONS {
        if iter > 0 && !assign_step(data, &centroids, metric, &mut assign) {
            break;
        }
        update_centroids(data, &assign, k, metric, &mut centroids);
        repair_empty(data, &mut assign, k, metric, &mut centroids);
        history.push(objective(data, &centroids, &assign, metric));
    }

    let mut sizes = vec![0; k];
    for &c in &assign {
        sizes[c] += 1;
    }
    Ok(Clustering {
        k,
        metric,
        centroids,
        assignments: assign,
        sizes,
        seed,
        objective_history: history,
    })
}

/// Best (lowest objective) of `restarts` seeded runs.
pub fn kmeans_best_of(data: &Matrix, k: usize, metric: Metric, seed: u64, restarts: usize) -> Result<Clustering> {
    let mut best: Option<Clustering> = None;
    for r in 0..restarts.max(1) {
        let c = kmeans(data, k, metric, seed.wrapping_add(r as u64))?;
        if best.as_ref().is_none_or(|b| c.objective() < b.objective()) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed used for one record's clustering.
pub fn record_seed(global_seed: u64, record_name: &str) -> u64 {
    global_seed ^ fnv1a(record_name.as_bytes())
}
