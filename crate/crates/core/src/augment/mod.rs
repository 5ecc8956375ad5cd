//! TOGA/PIGA prompt rendering, completion-provider orchestration with
//! caching and bounded concurrency, and the label-leakage judges.

mod cache;
mod judge;
pub mod prompts;
mod provider;

pub use cache::{cache_key, AugmentCache};
pub use judge::{judge_csp, judge_tcp, leakage_venn, JudgeKind, JudgeVerdict, VennCounts};
pub use prompts::{render_csp, render_prompt, render_tcp, PromptPair, PROMPT_TEMPLATE_VERSION};
pub use provider::{
    CompletionProvider, HttpProvider, HttpProviderConfig, InflightLimiter, MockProvider,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageCode, Sample, VariantTag};
use crate::error::{Error, Result};

/// Augmentation flavor. `OppositeEn` rewrites English content under the
/// complemented personality labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentationMode {
    Toga,
    Piga,
    OppositeEn,
}

impl AugmentationMode {
    pub fn code(self) -> &'static str {
        match self {
            AugmentationMode::Toga => "toga",
            AugmentationMode::Piga => "piga",
            AugmentationMode::OppositeEn => "opposite-en",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "toga" => Ok(AugmentationMode::Toga),
            "piga" => Ok(AugmentationMode::Piga),
            "opposite-en" => Ok(AugmentationMode::OppositeEn),
            other => Err(Error::Config(format!("unknown augmentation mode {other:?}"))),
        }
    }
}

/// One cached augmentation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub group_id: String,
    pub mode: AugmentationMode,
    pub target: LanguageCode,
    pub completion: String,
    pub provider_identity: String,
    /// Unix seconds at completion time; cached replays keep the original.
    pub timestamp: u64,
    pub cache_key: String,
}

/// Runs one augmentation request through the cache: the provider is
/// invoked only on a miss, and the produced record is persisted. Returns
/// the record plus the augmented sample (opposite-mode output carries
/// flipped labels).
pub fn augment_sample(
    provider: &dyn CompletionProvider,
    mode: AugmentationMode,
    sample: &Sample,
    target: LanguageCode,
    cache: &AugmentCache,
) -> Result<(AugmentationRecord, Sample)> {
    let key = cache_key(
        mode.code(),
        &sample.group_id,
        target.code(),
        provider.identity(),
        PROMPT_TEMPLATE_VERSION,
    );
    let record = match cache.get(&key)? {
        Some(record) => record,
        None => {
            let prompt = render_prompt(mode, sample, target)?;
            let completion = provider.complete(&prompt.system, &prompt.user)?;
            if completion.trim().is_empty() {
                return Err(Error::Provider(format!(
                    "empty completion for group {:?}",
                    sample.group_id
                )));
            }
            let record = AugmentationRecord {
                group_id: sample.group_id.clone(),
                mode,
                target,
                completion,
                provider_identity: provider.identity().to_string(),
                timestamp: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                cache_key: key.clone(),
            };
            cache.put(&record)?;
            record
        }
    };

    let (variant, labels) = match mode {
        AugmentationMode::OppositeEn => (VariantTag::Opposite, sample.labels.complement()),
        _ => (VariantTag::Regular, sample.labels.clone()),
    };
    let augmented = Sample {
        group_id: sample.group_id.clone(),
        language: target,
        variant,
        text: record.completion.clone(),
        labels,
    };
    Ok((record, augmented))
}

/// Augments every sample in order, running provider calls under the
/// in-flight limiter. Output order matches input order regardless of
/// completion order.
pub fn augment_all(
    provider: &dyn CompletionProvider,
    mode: AugmentationMode,
    samples: &[Sample],
    target: LanguageCode,
    cache: &AugmentCache,
    max_inflight: usize,
) -> Result<Vec<(AugmentationRecord, Sample)>> {
    let limiter = InflightLimiter::new(max_inflight);
    let mut slots: Vec<Option<Result<(AugmentationRecord, Sample)>>> =
        (0..samples.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, sample) in samples.iter().enumerate() {
            let limiter = &limiter;
            let cache_ref = &cache;
            handles.push((
                i,
                scope.spawn(move || {
                    limiter.run(|| augment_sample(provider, mode, sample, target, cache_ref))
                }),
            ));
        }
        for (i, handle) in handles {
            slots[i] = Some(handle.join().expect("augmentation worker panicked"));
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every slot filled"))
        .collect()
}
