//! Evaluation over prediction cells plus the ablation, zero-shot, and
//! leave-one-language-out protocols.

use std::fmt::Write as _;

use serde::Serialize;

use crate::clad::{AblationFlags, CladModel, EmbeddingStore, LossConfig, ModelDims};
use crate::corpus::{Dataset, LanguageCode, VariantTag};
use crate::error::{Error, Result};
use crate::eval::{balanced_accuracy, confusion, PredictionCell, PredictionSet};
use crate::maybe_par_iter;
#[cfg(feature = "parallel")]
use crate::par::*;
use crate::train::{filter_languages, train, GroundTruth, Objective, TrainConfig, TrainData};

/// Runs the frozen model over the regular samples of the given groups and
/// collects per-(language, dimension) predictions. Truth labels come from
/// `truth` when given (synthetic ground truth), otherwise from the stored
/// sample labels. Parallel over samples under the `parallel` feature;
/// output order is independent of scheduling.
pub fn evaluate_model(
    model: &CladModel,
    dataset: &Dataset,
    embeddings: &EmbeddingStore,
    group_ids: &[String],
    truth: Option<&GroundTruth>,
) -> Result<PredictionSet> {
    let ids: std::collections::BTreeSet<&str> = group_ids.iter().map(|s| s.as_str()).collect();
    let mut jobs = Vec::new();
    for s in dataset.samples() {
        if s.variant != VariantTag::Regular || !ids.contains(s.group_id.as_str()) {
            continue;
        }
        let emb = embeddings
            .get(&s.group_id, s.language, VariantTag::Regular)
            .ok_or_else(|| {
                Error::schema(format!(
                    "no student embedding for ({}, {})",
                    s.group_id, s.language
                ))
            })?;
        let labels = match truth {
            Some(t) => t
                .labels
                .get(&s.group_id)
                .ok_or_else(|| {
                    Error::schema(format!("ground truth is missing group {:?}", s.group_id))
                })?
                .clone(),
            None => s.labels.bits().to_vec(),
        };
        jobs.push((s.language, emb, labels));
    }

    let rows: Vec<(LanguageCode, Vec<u8>, Vec<u8>)> = maybe_par_iter!(jobs)
        .map(|(lang, emb, labels)| (*lang, model.predict_bits(emb), labels.clone()))
        .collect();

    let mut set = PredictionSet::new();
    for (lang, pred, labels) in rows {
        for (dim, (&p, &t)) in pred.iter().zip(&labels).enumerate() {
            let cell = set.entry((lang, dim)).or_insert_with(PredictionCell::default);
            cell.y_pred.push(p);
            cell.y_true.push(t);
        }
    }
    Ok(set)
}

/// Average balanced accuracy over the defined cells of a prediction set,
/// with the count of undefined (single-class) cells.
pub fn prediction_set_average_ba(set: &PredictionSet) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut defined = 0usize;
    let mut undefined = 0usize;
    for cell in set.values() {
        let c = confusion(&cell.y_true, &cell.y_pred)?;
        match balanced_accuracy(&c) {
            Ok(ba) => {
                total += ba;
                defined += 1;
            }
            Err(_) => undefined += 1,
        }
    }
    if defined == 0 {
        return Err(Error::UndefinedMetric(
            "no prediction cell has both classes".into(),
        ));
    }
    Ok((total / defined as f64, undefined))
}

/// One trained configuration of the ablation grid.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub combo: String,
    pub average_ba: f64,
    pub per_language_ba: Vec<(LanguageCode, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("combo,average_ba");
        if let Some(first) = self.rows.first() {
            for (lang, _) in &first.per_language_ba {
                let _ = write!(out, ",{lang}");
            }
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{:.6}", row.combo, row.average_ba);
            for (_, ba) in &row.per_language_ba {
                let _ = write!(out, ",{ba:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// The six standard single/pair ablations plus the full model.
pub fn standard_ablation_combos() -> Vec<AblationFlags> {
    let f = |kl, al, cl| AblationFlags {
        use_kl: kl,
        use_al: al,
        use_cl: cl,
    };
    vec![
        f(true, false, false),
        f(false, true, false),
        f(false, false, true),
        f(false, true, true),
        f(true, true, false),
        f(true, false, true),
        f(true, true, true),
    ]
}

fn per_language_ba(set: &PredictionSet) -> Vec<(LanguageCode, f64)> {
    let mut out = Vec::new();
    for lang in LanguageCode::ALL {
        let cells: Vec<_> = set
            .iter()
            .filter(|((l, _), _)| *l == lang)
            .map(|(_, c)| c)
            .collect();
        if cells.is_empty() {
            continue;
        }
        let mut total = 0.0;
        let mut n = 0usize;
        for cell in cells {
            if let Ok(c) = confusion(&cell.y_true, &cell.y_pred) {
                if let Ok(ba) = balanced_accuracy(&c) {
                    total += ba;
                    n += 1;
                }
            }
        }
        if n > 0 {
            out.push((lang, total / n as f64));
        }
    }
    out
}

/// Trains one model per flag combination (same init seed for fairness)
/// and reports test-split balanced accuracy.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    data: &TrainData<'_>,
    combos: &[AblationFlags],
    base_loss: &LossConfig,
    dims: ModelDims,
    trainable_encoder: bool,
    cfg: &TrainConfig,
    truth: Option<&GroundTruth>,
) -> Result<AblationTable> {
    if combos.is_empty() {
        return Err(Error::Config("ablation needs at least one combo".into()));
    }
    let mut rows = Vec::new();
    for flags in combos {
        let loss_cfg = LossConfig {
            ablation: *flags,
            ..base_loss.clone()
        };
        let mut model = CladModel::init(dims, trainable_encoder, cfg.seed);
        train(&mut model, data, &Objective::Clad(loss_cfg), cfg)?;
        let set = evaluate_model(
            &model,
            data.dataset,
            data.embeddings,
            &data.split.test,
            truth,
        )?;
        let (avg, _) = prediction_set_average_ba(&set)?;
        rows.push(AblationRow {
            combo: flags.tag(),
            average_ba: avg,
            per_language_ba: per_language_ba(&set),
        });
    }
    Ok(AblationTable { rows })
}

/// Result of one held-out-language run.
#[derive(Debug, Clone, Serialize)]
pub struct HeldOutResult {
    pub language: LanguageCode,
    pub average_ba: f64,
}

/// Trains on |s|−1 languages and evaluates only on the held-out one,
/// once per language present in the dataset.
pub fn leave_one_language_out(
    data: &TrainData<'_>,
    objective: &Objective,
    dims: ModelDims,
    trainable_encoder: bool,
    cfg: &TrainConfig,
    truth: Option<&GroundTruth>,
) -> Result<Vec<HeldOutResult>> {
    let present: Vec<LanguageCode> = {
        let mut langs: Vec<LanguageCode> = data
            .dataset
            .samples()
            .iter()
            .map(|s| s.language)
            .collect();
        langs.sort_by_key(|l| l.index());
        langs.dedup();
        langs
    };
    if present.len() < 2 {
        return Err(Error::Config(
            "leave-one-language-out needs at least two languages".into(),
        ));
    }
    let mut out = Vec::new();
    for &held in &present {
        let keep: Vec<LanguageCode> = present.iter().copied().filter(|&l| l != held).collect();
        let train_dataset = filter_languages(data.dataset, &keep)?;
        let mut model = CladModel::init(dims, trainable_encoder, cfg.seed);
        train(
            &mut model,
            &TrainData {
                dataset: &train_dataset,
                split: data.split,
                teacher: data.teacher,
                embeddings: data.embeddings,
            },
            objective,
            cfg,
        )?;
        // Evaluate only the held-out language on the test split.
        let eval_dataset = filter_languages(data.dataset, &[held])?;
        let set = evaluate_model(
            &model,
            &eval_dataset,
            data.embeddings,
            &data.split.test,
            truth,
        )?;
        let (avg, _) = prediction_set_average_ba(&set)?;
        out.push(HeldOutResult {
            language: held,
            average_ba: avg,
        });
    }
    Ok(out)
}

/// Trains on English only and evaluates every other language.
pub fn zero_shot_crosslingual(
    data: &TrainData<'_>,
    objective: &Objective,
    dims: ModelDims,
    trainable_encoder: bool,
    cfg: &TrainConfig,
    truth: Option<&GroundTruth>,
) -> Result<Vec<HeldOutResult>> {
    let has_en = data
        .dataset
        .samples()
        .iter()
        .any(|s| s.language == LanguageCode::En);
    if !has_en {
        return Err(Error::Config("zero-shot training needs English data".into()));
    }
    let train_dataset = filter_languages(data.dataset, &[LanguageCode::En])?;
    let mut model = CladModel::init(dims, trainable_encoder, cfg.seed);
    train(
        &mut model,
        &TrainData {
            dataset: &train_dataset,
            split: data.split,
            teacher: data.teacher,
            embeddings: data.embeddings,
        },
        objective,
        cfg,
    )?;
    let mut out = Vec::new();
    for lang in LanguageCode::ALL.into_iter().filter(|&l| l != LanguageCode::En) {
        let eval_dataset = filter_languages(data.dataset, &[lang])?;
        if eval_dataset.is_empty() {
            continue;
        }
        let set = evaluate_model(
            &model,
            &eval_dataset,
            data.embeddings,
            &data.split.test,
            truth,
        )?;
        let (avg, _) = prediction_set_average_ba(&set)?;
        out.push(HeldOutResult {
            language: lang,
            average_ba: avg,
        });
    }
    Ok(out)
}
