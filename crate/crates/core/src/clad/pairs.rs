//! Pair construction for the combined loss.
//!
//! Positives are the regular (and identical) variants of one group across
//! languages; negatives are the group's opposite variants plus one random
//! different-group sample per anchor.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::clad::{EmbeddingStore, TeacherBundle};
use crate::corpus::{Dataset, LanguageCode, ParallelGroup, TraitLabels, VariantTag};
use crate::error::{Error, Result};

/// One contrastive partner: a student-side embedding and whether it
/// matches the anchor's personality.
#[derive(Debug, Clone)]
pub struct PartnerSample {
    pub language: LanguageCode,
    pub embedding: Vec<f64>,
    pub y_sim: bool,
}

/// Everything the combined loss needs for one group.
#[derive(Debug, Clone)]
pub struct GroupExample {
    pub group_id: String,
    pub teacher_embedding: Vec<f64>,
    pub teacher_probs: Vec<f64>,
    /// Anchor labels (the canonical group labels).
    pub labels: Vec<u8>,
    /// Per-language regular student embeddings, language order.
    pub regulars: Vec<(LanguageCode, Vec<f64>)>,
    /// Contrastive partners with match flags.
    pub contrastive: Vec<PartnerSample>,
}

/// Precomputed per-group views, built once per dataset and shared across
/// batches.
pub struct PairContext<'a> {
    pub groups: BTreeMap<&'a str, ParallelGroup<'a>>,
    pub labels: BTreeMap<&'a str, &'a TraitLabels>,
}

impl<'a> PairContext<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        PairContext {
            groups: dataset.parallel_groups(),
            labels: dataset.group_label_map(),
        }
    }
}

/// Builds loss-ready examples for `group_ids`. Negative partners are
/// drawn from `negative_pool` (one random different-group regular sample
/// per anchor) with the caller's RNG, so batch composition stays
/// deterministic under a fixed seed.
pub fn build_group_examples(
    ctx: &PairContext<'_>,
    teacher: &TeacherBundle,
    store: &EmbeddingStore,
    group_ids: &[String],
    negative_pool: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GroupExample>> {
    let mut out = Vec::with_capacity(group_ids.len());
    for gid in group_ids {
        let group = ctx
            .groups
            .get(gid.as_str())
            .ok_or_else(|| Error::schema(format!("unknown group id {gid:?}")))?;
        let anchor = teacher
            .anchor(gid)
            .ok_or_else(|| Error::schema(format!("teacher bundle has no entry for {gid:?}")))?;
        let labels = ctx
            .labels
            .get(gid.as_str())
            .ok_or_else(|| Error::schema(format!("group {gid:?} has no samples")))?
            .bits()
            .to_vec();

        let mut regulars = Vec::new();
        let mut contrastive = Vec::new();
        for lang in LanguageCode::ALL {
            if let Some(s) = group.regular.get(&lang) {
                let emb = store
                    .get(&s.group_id, lang, VariantTag::Regular)
                    .ok_or_else(|| {
                        Error::schema(format!("no student embedding for ({gid}, {lang}, regular)"))
                    })?;
                regulars.push((lang, emb.clone()));
                contrastive.push(PartnerSample {
                    language: lang,
                    embedding: emb.clone(),
                    y_sim: true,
                });
            }
            if group.identical.contains_key(&lang) {
                if let Some(emb) = store.get(gid, lang, VariantTag::Identical) {
                    contrastive.push(PartnerSample {
                        language: lang,
                        embedding: emb.clone(),
                        y_sim: true,
                    });
                }
            }
            if group.opposite.contains_key(&lang) {
                if let Some(emb) = store.get(gid, lang, VariantTag::Opposite) {
                    contrastive.push(PartnerSample {
                        language: lang,
                        embedding: emb.clone(),
                        y_sim: false,
                    });
                }
            }
        }
        if regulars.is_empty() {
            return Err(Error::schema(format!(
                "group {gid:?} has no regular samples with embeddings"
            )));
        }

        // One random different-group negative per anchor.
        if negative_pool.len() > 1 {
            for _ in 0..8 {
                let other = &negative_pool[rng.gen_range(0..negative_pool.len())];
                if other == gid {
                    continue;
                }
                if let Some(og) = ctx.groups.get(other.as_str()) {
                    if let Some((&lang, s)) = og.regular.iter().next() {
                        if let Some(emb) = store.get(&s.group_id, lang, VariantTag::Regular) {
                            contrastive.push(PartnerSample {
                                language: lang,
                                embedding: emb.clone(),
                                y_sim: false,
                            });
                            break;
                        }
                    }
                }
            }
        }

        out.push(GroupExample {
            group_id: gid.clone(),
            teacher_embedding: anchor.embedding.clone(),
            teacher_probs: anchor.trait_probs.clone(),
            labels,
            regulars,
            contrastive,
        });
    }
    Ok(out)
}
