//! Embedding probes: logistic regression and a linear SVM trained from
//! scratch to distinguish two embedding sources, repeated over seeds with
//! mean / standard deviation / 95% confidence intervals.
//!
//! Probes are bias-free linear models, so the decision rule is invariant
//! under any uniform positive scaling of the embeddings.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::DatasetSplit;
use crate::error::{Error, Result};
use crate::grad::{Tape, Var};
use crate::maybe_par_iter;
#[cfg(feature = "parallel")]
use crate::par::*;

/// Which probing classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeKind {
    LogisticRegression,
    LinearSvm,
}

impl ProbeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ProbeKind::LogisticRegression),
            "svm" => Ok(ProbeKind::LinearSvm),
            other => Err(Error::Config(format!("unknown probe kind {other:?}"))),
        }
    }
}

/// Training hyperparameters shared by both probes.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeConfig {
    /// L2 regularization strength (the SVM uses it as its λ).
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2: 1e-3,
            epochs: 200,
            learning_rate: 0.5,
        }
    }
}

fn validate_inputs(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::schema("probe training set is empty"));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "{} embeddings vs {} labels",
            x.len(),
            y.len()
        )));
    }
    if y.iter().all(|&b| b == 0) || y.iter().all(|&b| b == 1) {
        return Err(Error::schema("probe training set has a single class"));
    }
    let width = x[0].len();
    if x.iter().any(|row| row.len() != width) {
        return Err(Error::shape("embedding rows have mixed widths"));
    }
    Ok(width)
}

fn init_weights(width: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..width).map(|_| 0.01 * rng.gen_range(-1.0..1.0)).collect()
}

fn flatten(x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().flatten().copied().collect()
}

/// Full-batch gradient descent on BCE-with-logits plus l2·‖w‖².
pub fn logistic_probe(
    x: &[Vec<f64>],
    y: &[u8],
    l2: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let width = validate_inputs(x, y)?;
    let n = x.len();
    let mut weights = init_weights(width, seed);
    for _ in 0..epochs {
        let tape = Tape::new();
        let w = tape.leaf(weights.clone(), &[width, 1])?;
        let xv = tape.constant(flatten(x), &[n, width])?;
        let yv = tape.constant(y.iter().map(|&b| b as f64).collect(), &[n])?;
        let logits = xv.matmul(&w)?.reshape(&[n])?;
        // BCE with logits: softplus(z) − y·z.
        let bce = logits.softplus().sub(&yv.mul(&logits)?)?.mean();
        let reg = w.mul(&w)?.sum().scale(l2);
        let loss = bce.add(&reg)?;
        loss.backward()?;
        let grad = w.grad();
        for (wi, gi) in weights.iter_mut().zip(grad) {
            *wi -= lr * gi;
        }
    }
    Ok(weights)
}

/// Full-batch subgradient descent on the hinge loss plus l2·‖w‖².
pub fn svm_probe(
    x: &[Vec<f64>],
    y: &[u8],
    l2: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let width = validate_inputs(x, y)?;
    let n = x.len();
    let mut weights = init_weights(width, seed);
    for _ in 0..epochs {
        let tape = Tape::new();
        let w = tape.leaf(weights.clone(), &[width, 1])?;
        let xv = tape.constant(flatten(x), &[n, width])?;
        // Signed labels ±1.
        let sv = tape.constant(y.iter().map(|&b| 2.0 * b as f64 - 1.0).collect(), &[n])?;
        let margins = xv.matmul(&w)?.reshape(&[n])?.mul(&sv)?;
        let hinge = margins.neg().add_scalar(1.0).clamp_min(0.0).mean();
        let reg = w.mul(&w)?.sum().scale(l2);
        let loss = hinge.add(&reg)?;
        loss.backward()?;
        let grad = w.grad();
        for (wi, gi) in weights.iter_mut().zip(grad) {
            *wi -= lr * gi;
        }
    }
    Ok(weights)
}

/// Predicted class of one embedding under a trained probe.
pub fn probe_predict(weights: &[f64], row: &[f64]) -> u8 {
    let score: f64 = weights.iter().zip(row).map(|(w, x)| w * x).sum();
    u8::from(score > 0.0)
}

/// One seeded run's per-class accuracies, in percent.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeRun {
    pub kind: ProbeKind,
    pub seed: u64,
    /// Recall on the class-0 ("−") rows, percent.
    pub accuracy_minus: f64,
    /// Recall on the class-1 ("+") rows, percent.
    pub accuracy_plus: f64,
}

/// Aggregate over seeds: mean, std, and 95% CI per class (normal
/// approximation, z = 1.96).
#[derive(Debug, Clone, Serialize)]
pub struct ProbeSummary {
    pub kind: ProbeKind,
    pub runs: Vec<ProbeRun>,
    pub mean_minus: f64,
    pub mean_plus: f64,
    pub std_minus: f64,
    pub std_plus: f64,
    pub ci_minus: (f64, f64),
    pub ci_plus: (f64, f64),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One class of probe inputs: (group id, embedding) rows. A group may
/// contribute several rows (one per language); split membership is
/// decided by the group id, so parallel rows never straddle splits.
pub type EmbeddingSet = BTreeMap<String, Vec<f64>>;

/// Rows of one probe class, keyed by group id for split assignment.
pub type ClassRows = Vec<(String, Vec<f64>)>;

/// Trains one probe per seed on the train-split groups of both classes
/// and scores per-class accuracy on the test split. The same split is
/// used for every configuration. Seeds run in parallel under the
/// `parallel` feature.
pub fn run_probe_suite(
    minus_class: &EmbeddingSet,
    plus_class: &EmbeddingSet,
    split: &DatasetSplit,
    kind: ProbeKind,
    cfg: &ProbeConfig,
    seeds: &[u64],
) -> Result<ProbeSummary> {
    let to_rows = |set: &EmbeddingSet| -> ClassRows {
        set.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    run_probe_suite_rows(&to_rows(minus_class), &to_rows(plus_class), split, kind, cfg, seeds)
}

/// [`run_probe_suite`] over explicit per-row inputs.
pub fn run_probe_suite_rows(
    minus_class: &ClassRows,
    plus_class: &ClassRows,
    split: &DatasetSplit,
    kind: ProbeKind,
    cfg: &ProbeConfig,
    seeds: &[u64],
) -> Result<ProbeSummary> {
    if seeds.len() < 2 {
        return Err(Error::Config("probe suite needs at least two seeds".into()));
    }
    let gather = |ids: &[String]| -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
        let members: std::collections::BTreeSet<&str> = ids.iter().map(|s| s.as_str()).collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (gid, e) in minus_class {
            if members.contains(gid.as_str()) {
                x.push(e.clone());
                y.push(0);
            }
        }
        for (gid, e) in plus_class {
            if members.contains(gid.as_str()) {
                x.push(e.clone());
                y.push(1);
            }
        }
        Ok((x, y))
    };
    let (train_x, train_y) = gather(&split.train)?;
    let (test_x, test_y) = gather(&split.test)?;
    if test_y.iter().all(|&b| b == 0) || test_y.iter().all(|&b| b == 1) {
        return Err(Error::schema("probe test split has a single class"));
    }

    let run_one = |&seed: &u64| -> Result<ProbeRun> {
        let weights = match kind {
            ProbeKind::LogisticRegression => {
                logistic_probe(&train_x, &train_y, cfg.l2, cfg.epochs, cfg.learning_rate, seed)?
            }
            ProbeKind::LinearSvm => {
                svm_probe(&train_x, &train_y, cfg.l2, cfg.epochs, cfg.learning_rate, seed)?
            }
        };
        let mut correct = [0usize; 2];
        let mut total = [0usize; 2];
        for (row, &label) in test_x.iter().zip(&test_y) {
            let pred = probe_predict(&weights, row);
            total[label as usize] += 1;
            if pred == label {
                correct[label as usize] += 1;
            }
        }
        Ok(ProbeRun {
            kind,
            seed,
            accuracy_minus: 100.0 * correct[0] as f64 / total[0].max(1) as f64,
            accuracy_plus: 100.0 * correct[1] as f64 / total[1].max(1) as f64,
        })
    };

    let runs: Vec<ProbeRun> = maybe_par_iter!(seeds)
        .map(run_one)
        .collect::<Result<Vec<_>>>()?;

    let minus: Vec<f64> = runs.iter().map(|r| r.accuracy_minus).collect();
    let plus: Vec<f64> = runs.iter().map(|r| r.accuracy_plus).collect();
    let (mean_minus, std_minus) = mean_std(&minus);
    let (mean_plus, std_plus) = mean_std(&plus);
    let half = |std: f64| 1.96 * std / (runs.len() as f64).sqrt();
    Ok(ProbeSummary {
        kind,
        mean_minus,
        mean_plus,
        std_minus,
        std_plus,
        ci_minus: (mean_minus - half(std_minus), mean_minus + half(std_minus)),
        ci_plus: (mean_plus - half(std_plus), mean_plus + half(std_plus)),
        runs,
    })
}

/// A deterministic group-id split for standalone probe runs where no
/// corpus split exists: 70/15/15 by seeded shuffle.
pub fn probe_split(group_ids: &[String], seed: u64) -> Result<DatasetSplit> {
    use rand::seq::SliceRandom;
    if group_ids.len() < 3 {
        return Err(Error::Config("need at least three groups to split".into()));
    }
    let mut ids = group_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = (n as f64 * 0.7).round() as usize;
    let n_val = (n as f64 * 0.15).round() as usize;
    let train = ids[..n_train].to_vec();
    let validation = ids[n_train..n_train + n_val].to_vec();
    let test = ids[n_train + n_val..].to_vec();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        ratios: (0.7, 0.15, 0.15),
    })
}
