//! Optimization loop, evaluation, checkpointing, synthetic data, and the
//! ablation / generalization protocols.

mod checkpoint;
mod optim;
mod protocols;
mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelSpec, CHECKPOINT_VERSION};
pub use optim::{Adam, AdamConfig};
pub use protocols::{
    evaluate_model, leave_one_language_out, prediction_set_average_ba, run_ablation,
    standard_ablation_combos, zero_shot_crosslingual, AblationRow, AblationTable, HeldOutResult,
};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticConfig, SyntheticData};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clad::{
    build_group_examples, clad_loss, CladModel, EmbeddingStore, LossConfig, PairContext,
    TeacherBundle,
};
use crate::corpus::{Dataset, DatasetSplit, LanguageCode, VariantTag};
use crate::error::{Error, Result};
use crate::grad::{Tape, Var};

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Groups per optimization step; all language variants of a group
    /// travel together so contrastive pairs are always in-batch.
    pub batch_groups: usize,
    pub max_epochs: usize,
    /// Early-stop patience on validation average balanced accuracy.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_groups: 16,
            max_epochs: 60,
            patience: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be ≥ 1".into()));
        }
        if self.batch_groups == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// What the loop optimizes: the combined objective or the weighted
/// per-sample BCE baseline.
#[derive(Debug, Clone)]
pub enum Objective {
    Clad(LossConfig),
    WeightedBce,
}

impl Objective {
    pub fn tag(&self) -> String {
        match self {
            Objective::Clad(cfg) => format!("clad[{}]", cfg.ablation.tag()),
            Objective::WeightedBce => "weighted-bce".into(),
        }
    }
}

/// Everything a training run reads.
pub struct TrainData<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a DatasetSplit,
    pub teacher: &'a TeacherBundle,
    pub embeddings: &'a EmbeddingStore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub kl: f64,
    pub al: f64,
    pub cl: f64,
    pub val_avg_ba: f64,
    pub val_undefined_cells: usize,
}

/// Per-epoch losses, validation scores, and the selected epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_ba: f64,
    /// Validation BA per "language:dimension" cell at the best epoch.
    pub cells: BTreeMap<String, f64>,
}

/// Inverse-frequency class weights per dimension over the regular
/// training samples.
fn bce_class_weights(dataset: &Dataset, train_ids: &[String]) -> (Vec<f64>, Vec<f64>) {
    let dims = dataset.scheme().dimension_count();
    let ids: std::collections::BTreeSet<&str> = train_ids.iter().map(|s| s.as_str()).collect();
    let mut pos = vec![0usize; dims];
    let mut total = 0usize;
    for s in dataset.samples() {
        if s.variant == VariantTag::Regular && ids.contains(s.group_id.as_str()) {
            total += 1;
            for (j, &b) in s.labels.bits().iter().enumerate() {
                pos[j] += b as usize;
            }
        }
    }
    let n = total.max(1) as f64;
    let w_pos: Vec<f64> = pos.iter().map(|&p| n / (2.0 * (p.max(1)) as f64)).collect();
    let w_neg: Vec<f64> = pos
        .iter()
        .map(|&p| n / (2.0 * ((total - p).max(1)) as f64))
        .collect();
    (w_pos, w_neg)
}

/// Weighted per-sample BCE over a group's regular samples, on the tape.
fn wbce_group_loss(
    tape: &Tape,
    bound: &crate::clad::BoundModel,
    ctx: &PairContext<'_>,
    store: &EmbeddingStore,
    gid: &str,
    weights: &(Vec<f64>, Vec<f64>),
) -> Result<Var> {
    let group = ctx
        .groups
        .get(gid)
        .ok_or_else(|| Error::schema(format!("unknown group id {gid:?}")))?;
    let mut total: Option<Var> = None;
    let mut count = 0usize;
    for (lang, sample) in &group.regular {
        let emb = store
            .get(gid, *lang, VariantTag::Regular)
            .ok_or_else(|| Error::schema(format!("no student embedding for ({gid}, {lang})")))?;
        let (_, logits) = bound.student_path(emb)?;
        let bits = sample.labels.bits();
        let d = bits.len();
        let y = tape.constant(bits.iter().map(|&b| b as f64).collect(), &[d])?;
        let w = tape.constant(
            bits.iter()
                .enumerate()
                .map(|(j, &b)| if b == 1 { weights.0[j] } else { weights.1[j] })
                .collect(),
            &[d],
        )?;
        // BCE with logits: softplus(z) − y·z.
        let bce = logits.softplus().sub(&y.mul(&logits)?)?;
        let term = w.mul(&bce)?.mean();
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
        count += 1;
    }
    let total = total.ok_or_else(|| Error::schema(format!("group {gid:?} has no samples")))?;
    Ok(total.scale(1.0 / count as f64))
}

/// Trains the model in place. Deterministic for a fixed seed; early
/// stopping restores the best-validation parameters.
pub fn train(
    model: &mut CladModel,
    data: &TrainData<'_>,
    objective: &Objective,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if let Objective::Clad(loss_cfg) = objective {
        loss_cfg.validate()?;
        for gid in &data.split.train {
            if data.teacher.anchor(gid).is_none() {
                return Err(Error::schema(format!(
                    "teacher bundle does not cover training group {gid:?}"
                )));
            }
        }
    }

    let ctx = PairContext::new(data.dataset);
    let weights = bce_class_weights(data.dataset, &data.split.train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(
        cfg.adam(),
        &model
            .named_params()
            .iter()
            .map(|(_, t)| t.len())
            .collect::<Vec<_>>(),
    );

    let mut report = TrainReport {
        objective: objective.tag(),
        epochs: Vec::new(),
        best_epoch: None,
        best_val_ba: f64::NEG_INFINITY,
        cells: BTreeMap::new(),
    };
    let mut best_params: Option<Vec<crate::grad::Tensor>> = None;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut order = data.split.train.clone();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_parts = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_groups) {
            let tape = Tape::new();
            let bound = model.bind(&tape)?;
            let mut batch_total: Option<Var> = None;
            let mut batch_parts = (0.0, 0.0, 0.0);
            for gid in chunk {
                let term = match objective {
                    Objective::Clad(loss_cfg) => {
                        let examples = build_group_examples(
                            &ctx,
                            data.teacher,
                            data.embeddings,
                            std::slice::from_ref(gid),
                            &data.split.train,
                            &mut rng,
                        )?;
                        let (term, parts) = clad_loss(&tape, &bound, &examples[0], loss_cfg)?;
                        batch_parts.0 += parts.kl;
                        batch_parts.1 += parts.al;
                        batch_parts.2 += parts.cl;
                        term
                    }
                    Objective::WeightedBce => {
                        wbce_group_loss(&tape, &bound, &ctx, data.embeddings, gid, &weights)?
                    }
                };
                batch_total = Some(match batch_total {
                    Some(t) => t.add(&term)?,
                    None => term,
                });
            }
            let loss = batch_total
                .expect("chunks are nonempty")
                .scale(1.0 / chunk.len() as f64);
            let loss_value = loss.scalar_value();
            if !loss_value.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, batch {batches}"
                )));
            }
            loss.backward()?;
            let grads = bound.gradients();
            let mut params = model.named_params_mut();
            adam.step(&mut params, &grads)?;
            epoch_loss += loss_value;
            epoch_parts.0 += batch_parts.0 / chunk.len() as f64;
            epoch_parts.1 += batch_parts.1 / chunk.len() as f64;
            epoch_parts.2 += batch_parts.2 / chunk.len() as f64;
            batches += 1;
        }

        let set = evaluate_model(
            model,
            data.dataset,
            data.embeddings,
            &data.split.validation,
            None,
        )?;
        let (val_ba, undefined) = prediction_set_average_ba(&set)?;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / batches.max(1) as f64,
            kl: epoch_parts.0 / batches.max(1) as f64,
            al: epoch_parts.1 / batches.max(1) as f64,
            cl: epoch_parts.2 / batches.max(1) as f64,
            val_avg_ba: val_ba,
            val_undefined_cells: undefined,
        });

        if val_ba > report.best_val_ba {
            report.best_val_ba = val_ba;
            report.best_epoch = Some(epoch);
            best_params = Some(
                model
                    .named_params()
                    .into_iter()
                    .map(|(_, t)| t.clone())
                    .collect(),
            );
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }

    if let Some(best) = best_params {
        for ((_, param), saved) in model.named_params_mut().into_iter().zip(best) {
            *param = saved;
        }
    }

    // Validation cells at the restored parameters.
    let set = evaluate_model(
        model,
        data.dataset,
        data.embeddings,
        &data.split.validation,
        None,
    )?;
    for ((lang, dim), cell) in &set {
        if let Ok(c) = crate::eval::confusion(&cell.y_true, &cell.y_pred) {
            if let Ok(ba) = crate::eval::balanced_accuracy(&c) {
                report.cells.insert(format!("{lang}:{dim}"), ba);
            }
        }
    }
    Ok(report)
}

/// Keeps only samples in the given languages; used by the zero-shot and
/// leave-one-language-out protocols.
pub fn filter_languages(dataset: &Dataset, keep: &[LanguageCode]) -> Result<Dataset> {
    let samples: Vec<_> = dataset
        .samples()
        .iter()
        .filter(|s| keep.contains(&s.language))
        .cloned()
        .collect();
    Dataset::new(dataset.scheme().clone(), samples)
}
