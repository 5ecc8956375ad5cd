//! Seeded synthetic corpus with a planted linear signal.
//!
//! Teacher embeddings carry the clean signal; per-language student
//! embeddings are random linear images of it plus Gaussian noise; labels
//! come from the sign of the signal. Designated languages receive label
//! flips at a configured fraction, modeling low-quality augmentation.
//! Every draw is keyed to one seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clad::{EmbeddingStore, TeacherBundle, TeacherEntry};
use crate::corpus::{Dataset, LanguageCode, Sample, TraitLabels, TraitScheme, VariantTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub languages: usize,
    pub dims: usize,
    /// Groups to generate; each group yields one sample per language per
    /// variant.
    pub groups: usize,
    /// Sharpness of the teacher probabilities. The teacher is an
    /// imperfect model: its probabilities read the signal through fixed
    /// observation noise at 35% of the signal scale.
    pub signal_strength: f64,
    /// Blind the teacher on the last trait dimension: it emits
    /// unconfident near-chance probabilities there. Mirrors a teacher
    /// whose label scheme lacks the dimension (the MBTI side of the
    /// correspondence has no neuroticism counterpart), so distillation
    /// alone cannot recover every label.
    pub teacher_blind_last_dim: bool,
    /// How far each language's embedding map drifts from the shared one.
    /// Languages share one base mixing (a multilingual encoder aligns its
    /// embedding spaces); this adds per-language deviation on top.
    pub language_spread: f64,
    /// Per-language embedding noise levels.
    pub noise: Vec<f64>,
    /// Per-language fraction of regular samples whose content flips: the
    /// embedding is drawn from the negated signal while the stored label
    /// keeps the group's labels, so the sample no longer expresses the
    /// personality it is labeled with (low-quality augmentation).
    pub flip_fraction: Vec<f64>,
    pub teacher_width: usize,
    pub student_width: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            languages: 5,
            dims: 5,
            groups: 500,
            signal_strength: 2.0,
            teacher_blind_last_dim: false,
            language_spread: 0.25,
            noise: vec![0.1; 5],
            flip_fraction: vec![0.0; 5],
            teacher_width: 12,
            student_width: 16,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.languages == 0 || self.languages > LanguageCode::ALL.len() {
            return Err(Error::Config(format!(
                "languages must be 1..=5, got {}",
                self.languages
            )));
        }
        if self.dims == 0 || self.dims > 5 {
            return Err(Error::Config(format!("dims must be 1..=5, got {}", self.dims)));
        }
        if self.noise.len() != self.languages || self.flip_fraction.len() != self.languages {
            return Err(Error::Config(
                "noise and flip_fraction must list one value per language".into(),
            ));
        }
        if self
            .flip_fraction
            .iter()
            .chain(&self.noise)
            .any(|&v| !(0.0..=1.0).contains(&v) && v.is_sign_negative())
        {
            return Err(Error::Config("noise and flip fractions must be ≥ 0".into()));
        }
        if self.flip_fraction.iter().any(|&v| v > 1.0) {
            return Err(Error::Config("flip fractions must be ≤ 1".into()));
        }
        Ok(())
    }

    pub fn scheme(&self) -> TraitScheme {
        if self.dims == 4 {
            TraitScheme::mbti4()
        } else {
            TraitScheme::big5()
        }
    }
}

/// True group labels plus the list of content-flipped samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: BTreeMap<String, Vec<u8>>,
    /// (group, language) pairs whose regular sample was content-flipped.
    #[serde(default)]
    pub corrupted: Vec<(String, LanguageCode)>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub embeddings: EmbeddingStore,
    pub teacher: TeacherBundle,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; fully deterministic given the stream position.
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let langs = &LanguageCode::ALL[..cfg.languages];
    let scheme = cfg.scheme();

    // Per-dimension signal directions.
    let weights: Vec<Vec<f64>> = (0..cfg.dims)
        .map(|_| gaussian_vec(&mut rng, cfg.teacher_width))
        .collect();
    // Shared base mixing plus a per-language deviation (teacher_width ×
    // student_width).
    let scale = 1.0 / (cfg.teacher_width as f64).sqrt();
    let base: Vec<f64> = gaussian_vec(&mut rng, cfg.teacher_width * cfg.student_width)
        .into_iter()
        .map(|v| v * scale)
        .collect();
    let mixers: Vec<Vec<f64>> = (0..cfg.languages)
        .map(|_| {
            let dev = gaussian_vec(&mut rng, cfg.teacher_width * cfg.student_width);
            base.iter()
                .zip(dev)
                .map(|(&b, d)| b + cfg.language_spread * d * scale)
                .collect()
        })
        .collect();

    let mix = |mixer: &[f64], t: &[f64], noise: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut out = vec![0.0; cfg.student_width];
        for (i, &ti) in t.iter().enumerate() {
            let row = &mixer[i * cfg.student_width..(i + 1) * cfg.student_width];
            for (j, &m) in row.iter().enumerate() {
                out[j] += ti * m;
            }
        }
        for o in out.iter_mut() {
            *o += noise * gaussian(rng);
        }
        out
    };

    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());

    let mut samples = Vec::new();
    let mut embeddings = EmbeddingStore::default();
    let mut teacher = TeacherBundle::default();
    let mut truth = BTreeMap::new();
    let mut corrupted = Vec::new();

    // Teacher observation noise relative to the signal scale.
    let teacher_noise = 0.35 * (cfg.teacher_width as f64).sqrt();
    let blind_dim = cfg.teacher_blind_last_dim.then_some(cfg.dims - 1);

    for g in 0..cfg.groups {
        let gid = format!("g{g:05}");
        let t = gaussian_vec(&mut rng, cfg.teacher_width);
        let signals: Vec<f64> = weights
            .iter()
            .map(|w| w.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let true_bits: Vec<u8> = signals.iter().map(|&s| u8::from(s > 0.0)).collect();
        let probs: Vec<f64> = signals
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                // The blind dimension sees no signal and only a sliver of
                // noise: an ignorant teacher stays near 0.5 rather than
                // guessing confidently.
                let (seen, noise_scale) = if blind_dim == Some(j) {
                    (0.0, 0.25)
                } else {
                    (s, 1.0)
                };
                let observed = seen + noise_scale * teacher_noise * gaussian(&mut rng);
                sigmoid(cfg.signal_strength * observed)
            })
            .collect();
        teacher.insert(
            gid.clone(),
            LanguageCode::En,
            TeacherEntry {
                embedding: t.clone(),
                trait_probs: probs,
            },
        );
        truth.insert(gid.clone(), true_bits.clone());

        let neg_t: Vec<f64> = t.iter().map(|v| -v).collect();
        for (li, &lang) in langs.iter().enumerate() {
            let flip = cfg.flip_fraction[li] > 0.0 && rng.gen_bool(cfg.flip_fraction[li]);
            let regular_source = if flip { &neg_t } else { &t };
            if flip {
                corrupted.push((gid.clone(), lang));
            }
            let regular_emb = mix(&mixers[li], regular_source, cfg.noise[li], &mut rng);
            let opposite_emb = mix(&mixers[li], &neg_t, cfg.noise[li], &mut rng);
            embeddings.insert(gid.clone(), lang, VariantTag::Regular, regular_emb);
            embeddings.insert(gid.clone(), lang, VariantTag::Opposite, opposite_emb);
            samples.push(Sample {
                group_id: gid.clone(),
                language: lang,
                variant: VariantTag::Regular,
                text: format!("synthetic {gid} {lang} regular"),
                labels: TraitLabels::new(true_bits.clone())?,
            });
            samples.push(Sample {
                group_id: gid.clone(),
                language: lang,
                variant: VariantTag::Opposite,
                text: format!("synthetic {gid} {lang} opposite"),
                labels: TraitLabels::new(true_bits.iter().map(|&b| 1 - b).collect())?,
            });
        }
    }

    Ok(SyntheticData {
        dataset: Dataset::new(scheme, samples)?,
        embeddings,
        teacher,
        truth: GroundTruth {
            labels: truth,
            corrupted,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = SyntheticConfig {
            groups: 20,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.dataset.samples(), b.dataset.samples());
        let ea: Vec<_> = a.embeddings.iter().collect();
        let eb: Vec<_> = b.embeddings.iter().collect();
        assert_eq!(ea, eb);
        let c = generate_synthetic(&SyntheticConfig {
            seed: 1,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(
            a.dataset.samples()[0].labels,
            c.dataset.samples()[0].labels
        );
    }

    #[test]
    fn labels_always_match_truth() {
        let cfg = SyntheticConfig {
            groups: 30,
            flip_fraction: vec![0.0, 0.4, 0.0, 0.0, 0.0],
            ..SyntheticConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for s in data.dataset.samples() {
            if s.variant == VariantTag::Regular {
                assert_eq!(s.labels.bits(), data.truth.labels[&s.group_id]);
            }
        }
    }

    #[test]
    fn flips_only_touch_designated_languages() {
        let cfg = SyntheticConfig {
            groups: 200,
            flip_fraction: vec![0.0, 0.5, 0.0, 0.0, 0.0],
            ..SyntheticConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let mut per_lang = BTreeMap::new();
        for (_, lang) in &data.truth.corrupted {
            *per_lang.entry(*lang).or_insert(0usize) += 1;
        }
        assert!(!per_lang.contains_key(&LanguageCode::En));
        assert!(!per_lang.contains_key(&LanguageCode::Zh));
        let fr = per_lang[&LanguageCode::Fr];
        assert!((60..=140).contains(&fr), "≈ half of 200 groups, got {fr}");
    }

    #[test]
    fn corrupted_samples_carry_negated_signal() {
        // A content-flipped sample's embedding correlates with the
        // negated clean embedding of its own language.
        let cfg = SyntheticConfig {
            groups: 50,
            noise: vec![0.0; 5],
            flip_fraction: vec![0.0, 1.0, 0.0, 0.0, 0.0],
            ..SyntheticConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        assert_eq!(data.truth.corrupted.len(), 50);
        for gid in data.dataset.group_ids() {
            let regular = data
                .embeddings
                .get(gid, LanguageCode::Fr, VariantTag::Regular)
                .unwrap();
            let opposite = data
                .embeddings
                .get(gid, LanguageCode::Fr, VariantTag::Opposite)
                .unwrap();
            // With zero noise and full corruption, regular == opposite.
            for (a, b) in regular.iter().zip(opposite) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn teacher_covers_every_group() {
        let cfg = SyntheticConfig {
            groups: 25,
            ..SyntheticConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for gid in data.dataset.group_ids() {
            assert!(data.teacher.anchor(gid).is_some());
        }
    }
}
