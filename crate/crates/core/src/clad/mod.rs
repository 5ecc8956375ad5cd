//! The CLAD composite objective: a learnable two-dimensional attention
//! loss over languages and trait dimensions, a margin contrastive loss on
//! projected embeddings, and a per-trait binary KL distillation loss,
//! combined as φ·KL + ψ·AL + ρ·CL with ablation flags.

mod losses;
mod model;
mod pairs;

pub use losses::{attention_weights, clad_loss, loss_al, loss_cl, loss_kl, LossBreakdown};
pub use model::{Affine, AttentionParams, BoundModel, CladModel, ModelDims};
pub use pairs::{build_group_examples, GroupExample, PairContext, PartnerSample};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageCode, VariantTag};
use crate::error::{Error, Result};

/// How negative-pair terms of the contrastive loss are scored.
/// `Corrected` hinges on cosine distance (the default); `Literal` scores
/// raw similarity on positive pairs and hinges it on negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastiveMode {
    Corrected,
    Literal,
}

/// Which loss components participate in the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_kl: bool,
    pub use_al: bool,
    pub use_cl: bool,
}

impl AblationFlags {
    pub fn all() -> Self {
        AblationFlags {
            use_kl: true,
            use_al: true,
            use_cl: true,
        }
    }

    pub fn none_set(&self) -> bool {
        !(self.use_kl || self.use_al || self.use_cl)
    }

    /// Short tag like "kl+al" used in reports.
    pub fn tag(&self) -> String {
        let mut parts = Vec::new();
        if self.use_kl {
            parts.push("kl");
        }
        if self.use_al {
            parts.push("al");
        }
        if self.use_cl {
            parts.push("cl");
        }
        parts.join("+")
    }
}

/// Weights and knobs of the combined objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossConfig {
    pub phi: f64,
    pub psi: f64,
    pub rho: f64,
    pub tau: f64,
    pub margin: f64,
    pub contrastive_mode: ContrastiveMode,
    /// Use the strictly literal attention scaling ŷ[j] = A_D[j]·Σᵢ A_L[i]·X[i,j]
    /// instead of the default language pooling + |d|·A_D dimension weights.
    pub attention_literal: bool,
    pub ablation: AblationFlags,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            phi: 2.0,
            psi: 2.0,
            rho: 1.0,
            tau: 2.0,
            margin: 0.5,
            contrastive_mode: ContrastiveMode::Corrected,
            attention_literal: false,
            ablation: AblationFlags::all(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ablation.none_set() {
            return Err(Error::Config("all loss components are disabled".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("temperature {} must be > 0", self.tau)));
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(Error::Config(format!(
                "margin {} must be in (0, 1]",
                self.margin
            )));
        }
        if self.phi < 0.0 || self.psi < 0.0 || self.rho < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One teacher-side record: frozen embedding plus per-trait probabilities
/// in the open unit interval.
#[derive(Debug, Clone)]
pub struct TeacherEntry {
    pub embedding: Vec<f64>,
    pub trait_probs: Vec<f64>,
}

/// Frozen teacher outputs keyed by (group, language).
#[derive(Debug, Clone, Default)]
pub struct TeacherBundle {
    entries: BTreeMap<(String, LanguageCode), TeacherEntry>,
    /// How many probabilities were clamped into [1e-7, 1−1e-7] at load.
    pub clamp_warnings: usize,
}

/// Clamps probabilities into the open unit interval, counting adjustments.
pub fn clamp_probs(probs: &mut [f64]) -> usize {
    let mut clamped = 0;
    for p in probs.iter_mut() {
        let c = p.clamp(1e-7, 1.0 - 1e-7);
        if c != *p {
            clamped += 1;
            *p = c;
        }
    }
    clamped
}

#[derive(Serialize, Deserialize)]
struct BundleRow {
    group_id: String,
    language: LanguageCode,
    #[serde(default)]
    variant: Option<VariantTag>,
    embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trait_probs: Option<Vec<f64>>,
}

impl TeacherBundle {
    pub fn insert(&mut self, group_id: String, language: LanguageCode, mut entry: TeacherEntry) {
        self.clamp_warnings += clamp_probs(&mut entry.trait_probs);
        self.entries.insert((group_id, language), entry);
    }

    pub fn get(&self, group_id: &str, language: LanguageCode) -> Option<&TeacherEntry> {
        self.entries.get(&(group_id.to_string(), language))
    }

    /// The anchor entry of a group: `en` when present, otherwise the
    /// lowest language code.
    pub fn anchor(&self, group_id: &str) -> Option<&TeacherEntry> {
        for lang in LanguageCode::ALL {
            if let Some(e) = self.entries.get(&(group_id.to_string(), lang)) {
                return Some(e);
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, LanguageCode), &TeacherEntry)> {
        self.entries.iter()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut bundle = TeacherBundle::default();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: BundleRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let probs = row.trait_probs.ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: "teacher bundle row is missing trait_probs".into(),
            })?;
            bundle.insert(
                row.group_id,
                row.language,
                TeacherEntry {
                    embedding: row.embedding,
                    trait_probs: probs,
                },
            );
        }
        if bundle.clamp_warnings > 0 {
            log::warn!(
                "clamped {} teacher probabilities into the open unit interval",
                bundle.clamp_warnings
            );
        }
        Ok(bundle)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for ((group_id, language), e) in &self.entries {
            let row = BundleRow {
                group_id: group_id.clone(),
                language: *language,
                variant: None,
                embedding: e.embedding.clone(),
                trait_probs: Some(e.trait_probs.clone()),
            };
            writeln!(file, "{}", serde_json::to_string(&row).expect("row serializes"))?;
        }
        Ok(())
    }
}

/// Student-side embeddings keyed by (group, language, variant).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    entries: BTreeMap<(String, LanguageCode, VariantTag), Vec<f64>>,
}

impl EmbeddingStore {
    pub fn insert(
        &mut self,
        group_id: String,
        language: LanguageCode,
        variant: VariantTag,
        embedding: Vec<f64>,
    ) {
        self.entries.insert((group_id, language, variant), embedding);
    }

    pub fn get(
        &self,
        group_id: &str,
        language: LanguageCode,
        variant: VariantTag,
    ) -> Option<&Vec<f64>> {
        self.entries
            .get(&(group_id.to_string(), language, variant))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(
        &self,
    ) -> impl Iterator<Item = (&(String, LanguageCode, VariantTag), &Vec<f64>)> {
        self.entries.iter()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut store = EmbeddingStore::default();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: BundleRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            store.insert(
                row.group_id,
                row.language,
                row.variant.unwrap_or(VariantTag::Regular),
                row.embedding,
            );
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for ((group_id, language, variant), embedding) in &self.entries {
            let row = BundleRow {
                group_id: group_id.clone(),
                language: *language,
                variant: Some(*variant),
                embedding: embedding.clone(),
                trait_probs: None,
            };
            writeln!(file, "{}", serde_json::to_string(&row).expect("row serializes"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let mut bad = LossConfig::default();
        bad.ablation = AblationFlags {
            use_kl: false,
            use_al: false,
            use_cl: false,
        };
        assert!(bad.validate().is_err());
        let mut bad = LossConfig::default();
        bad.tau = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = LossConfig::default();
        bad.margin = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn teacher_probs_are_clamped_with_warning_count() {
        let mut bundle = TeacherBundle::default();
        bundle.insert(
            "g1".into(),
            LanguageCode::En,
            TeacherEntry {
                embedding: vec![0.0; 4],
                trait_probs: vec![0.0, 1.0, 0.5],
            },
        );
        assert_eq!(bundle.clamp_warnings, 2);
        let probs = &bundle.get("g1", LanguageCode::En).unwrap().trait_probs;
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("teacher.jsonl");
        let mut bundle = TeacherBundle::default();
        bundle.insert(
            "g1".into(),
            LanguageCode::En,
            TeacherEntry {
                embedding: vec![0.25, -1.5],
                trait_probs: vec![0.75, 0.125],
            },
        );
        bundle.write(&path).unwrap();
        let loaded = TeacherBundle::load(&path).unwrap();
        let e = loaded.get("g1", LanguageCode::En).unwrap();
        assert_eq!(e.embedding, vec![0.25, -1.5]);
        assert_eq!(e.trait_probs, vec![0.75, 0.125]);
    }

    #[test]
    fn embedding_store_defaults_variant_to_regular() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        std::fs::write(
            &path,
            r#"{"group_id": "g1", "language": "fr", "embedding": [1.0, 2.0]}"#,
        )
        .unwrap();
        let store = EmbeddingStore::load(&path).unwrap();
        assert!(store
            .get("g1", LanguageCode::Fr, VariantTag::Regular)
            .is_some());
    }
}
