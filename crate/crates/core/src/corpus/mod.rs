//! Data model, JSONL ingestion, stratified splitting, and parallel
//! cross-language grouping.
//!
//! Records on disk are line-delimited JSON, one sample per line:
//! `{"group_id": str, "language": "en|fr|bm|jp|zh", "variant":
//! "regular|identical|opposite", "text": str, "labels": [0|1, ...]}`.
//! All translations of one source text share a `group_id`; splits operate
//! on group ids so parallel texts never straddle splits.

mod split;

pub use split::{stratified_split, DatasetSplit};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five supported language codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageCode {
    En,
    Fr,
    Bm,
    Jp,
    Zh,
}

impl LanguageCode {
    /// Canonical ordering used everywhere results are aggregated.
    pub const ALL: [LanguageCode; 5] = [
        LanguageCode::En,
        LanguageCode::Fr,
        LanguageCode::Bm,
        LanguageCode::Jp,
        LanguageCode::Zh,
    ];

    pub fn code(self) -> &'static str {
        match self {
            LanguageCode::En => "en",
            LanguageCode::Fr => "fr",
            LanguageCode::Bm => "bm",
            LanguageCode::Jp => "jp",
            LanguageCode::Zh => "zh",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            LanguageCode::En => "English",
            LanguageCode::Fr => "French",
            LanguageCode::Bm => "Malay",
            LanguageCode::Jp => "Japanese",
            LanguageCode::Zh => "Chinese",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(LanguageCode::En),
            "fr" => Ok(LanguageCode::Fr),
            "bm" => Ok(LanguageCode::Bm),
            "jp" => Ok(LanguageCode::Jp),
            "zh" => Ok(LanguageCode::Zh),
            other => Err(Error::schema(format!("unknown language code {other:?}"))),
        }
    }

    /// Index into [`LanguageCode::ALL`].
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).expect("listed")
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Sample variant relative to the regular source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantTag {
    Regular,
    Identical,
    Opposite,
}

impl VariantTag {
    pub fn code(self) -> &'static str {
        match self {
            VariantTag::Regular => "regular",
            VariantTag::Identical => "identical",
            VariantTag::Opposite => "opposite",
        }
    }
}

/// Label scheme: Big Five (5 binary dimensions) or the four mapped MBTI
/// dichotomies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeName {
    Big5,
    Mbti4,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitScheme {
    name: SchemeName,
    dimension_names: Vec<String>,
}

impl TraitScheme {
    pub fn big5() -> Self {
        TraitScheme {
            name: SchemeName::Big5,
            dimension_names: ["O", "C", "E", "A", "N"].map(String::from).to_vec(),
        }
    }

    pub fn mbti4() -> Self {
        TraitScheme {
            name: SchemeName::Mbti4,
            dimension_names: ["O", "C", "E", "A"].map(String::from).to_vec(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "big5" => Ok(TraitScheme::big5()),
            "mbti4" => Ok(TraitScheme::mbti4()),
            other => Err(Error::Config(format!("unknown trait scheme {other:?}"))),
        }
    }

    pub fn name(&self) -> SchemeName {
        self.name
    }

    pub fn dimension_count(&self) -> usize {
        self.dimension_names.len()
    }

    pub fn dimension_names(&self) -> &[String] {
        &self.dimension_names
    }

    /// Long dimension names as rendered in prompts.
    pub fn long_dimension_names(&self) -> &'static [&'static str] {
        const LONG: [&str; 5] = [
            "openness",
            "conscientiousness",
            "extroversion",
            "agreeableness",
            "neuroticism",
        ];
        &LONG[..self.dimension_count()]
    }
}

/// Binary trait labels, one bit per scheme dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraitLabels(Vec<u8>);

impl TraitLabels {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::schema(format!("label {bad} is not 0 or 1")));
        }
        Ok(TraitLabels(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn complement(&self) -> TraitLabels {
        TraitLabels(self.0.iter().map(|&b| 1 - b).collect())
    }
}

/// One text with language, variant tag, and binary trait labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub group_id: String,
    pub language: LanguageCode,
    pub variant: VariantTag,
    pub text: String,
    pub labels: TraitLabels,
}

impl Sample {
    fn validate(&self, scheme: &TraitScheme) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::schema(format!(
                "sample {}/{} has empty text",
                self.group_id, self.language
            )));
        }
        if self.labels.len() != scheme.dimension_count() {
            return Err(Error::schema(format!(
                "sample {} has {} labels, scheme {:?} needs {}",
                self.group_id,
                self.labels.len(),
                scheme.name(),
                scheme.dimension_count()
            )));
        }
        Ok(())
    }
}

/// Validated in-memory corpus. Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    scheme: TraitScheme,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(scheme: TraitScheme, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            s.validate(&scheme)?;
            if !seen.insert((s.group_id.clone(), s.language, s.variant)) {
                return Err(Error::schema(format!(
                    "duplicate sample ({}, {}, {})",
                    s.group_id,
                    s.language,
                    s.variant.code()
                )));
            }
        }
        let ds = Dataset { scheme, samples };
        ds.check_opposite_consistency()?;
        Ok(ds)
    }

    /// Opposite variants must carry the elementwise complement of the
    /// regular sample with the same (group, language).
    fn check_opposite_consistency(&self) -> Result<()> {
        let mut regular: BTreeMap<(&str, LanguageCode), &TraitLabels> = BTreeMap::new();
        for s in &self.samples {
            if s.variant == VariantTag::Regular {
                regular.insert((s.group_id.as_str(), s.language), &s.labels);
            }
        }
        for s in &self.samples {
            if s.variant == VariantTag::Opposite {
                if let Some(reg) = regular.get(&(s.group_id.as_str(), s.language)) {
                    if s.labels != reg.complement() {
                        return Err(Error::schema(format!(
                            "opposite variant of ({}, {}) does not complement its regular labels",
                            s.group_id, s.language
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn scheme(&self) -> &TraitScheme {
        &self.scheme
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Group ids in first-appearance order, deduplicated.
    pub fn group_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in &self.samples {
            if seen.insert(s.group_id.as_str()) {
                out.push(s.group_id.as_str());
            }
        }
        out
    }

    /// Canonical labels of a group: the `en` regular sample when present,
    /// otherwise the regular sample with the lowest language code,
    /// otherwise the first sample of the group.
    pub fn group_labels(&self, group_id: &str) -> Option<&TraitLabels> {
        let mut best: Option<&Sample> = None;
        for s in self.samples.iter().filter(|s| s.group_id == group_id) {
            best = Some(match best {
                None => s,
                Some(cur) => {
                    let rank = |x: &Sample| (x.variant != VariantTag::Regular, x.language);
                    if rank(s) < rank(cur) {
                        s
                    } else {
                        cur
                    }
                }
            });
        }
        best.map(|s| &s.labels)
    }

    /// Canonical labels for every group in one pass.
    pub fn group_label_map(&self) -> BTreeMap<&str, &TraitLabels> {
        let mut best: BTreeMap<&str, &Sample> = BTreeMap::new();
        let rank = |x: &Sample| (x.variant != VariantTag::Regular, x.language);
        for s in &self.samples {
            match best.entry(s.group_id.as_str()) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(s);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    if rank(s) < rank(e.get()) {
                        e.insert(s);
                    }
                }
            }
        }
        best.into_iter().map(|(k, s)| (k, &s.labels)).collect()
    }

    /// Per-language views of every group's samples; used to build
    /// contrastive pairs. Missing languages are simply absent.
    pub fn parallel_groups(&self) -> BTreeMap<&str, ParallelGroup<'_>> {
        let mut out: BTreeMap<&str, ParallelGroup<'_>> = BTreeMap::new();
        for s in &self.samples {
            let g = out.entry(s.group_id.as_str()).or_default();
            let slot = match s.variant {
                VariantTag::Regular => &mut g.regular,
                VariantTag::Identical => &mut g.identical,
                VariantTag::Opposite => &mut g.opposite,
            };
            slot.insert(s.language, s);
        }
        out
    }
}

/// One group's samples keyed by language, split by variant.
#[derive(Debug, Default)]
pub struct ParallelGroup<'a> {
    pub regular: BTreeMap<LanguageCode, &'a Sample>,
    pub identical: BTreeMap<LanguageCode, &'a Sample>,
    pub opposite: BTreeMap<LanguageCode, &'a Sample>,
}

/// Loads and validates a JSONL corpus file.
pub fn load_dataset(path: &Path, scheme: &TraitScheme) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_dataset_from(BufReader::new(file), scheme)
}

pub fn load_dataset_from(reader: impl BufRead, scheme: &TraitScheme) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        sample.validate(scheme).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Dataset::new(scheme.clone(), samples)
}

/// Serializes samples back to the JSONL wire format.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    for s in dataset.samples() {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Direction of the MBTI ↔ Big Five correspondence lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingDirection {
    Big5ToMbti,
    MbtiToBig5,
}

/// Conceptual correspondence between Big Five dimensions and MBTI
/// dichotomies: O↔S/N, C↔P/J, E↔I/E, A↔T/F. Neuroticism has no MBTI
/// counterpart and maps to `None`.
pub fn mbti_big5_correspondence(
    dimension: &str,
    direction: MappingDirection,
) -> Result<Option<&'static str>> {
    const PAIRS: [(&str, &str); 4] = [("O", "S/N"), ("C", "P/J"), ("E", "I/E"), ("A", "T/F")];
    match direction {
        MappingDirection::Big5ToMbti => {
            if dimension == "N" {
                return Ok(None);
            }
            PAIRS
                .iter()
                .find(|(b5, _)| *b5 == dimension)
                .map(|(_, m)| Some(*m))
                .ok_or_else(|| Error::schema(format!("unknown Big Five code {dimension:?}")))
        }
        MappingDirection::MbtiToBig5 => PAIRS
            .iter()
            .find(|(_, m)| *m == dimension)
            .map(|(b5, _)| Some(*b5))
            .ok_or_else(|| Error::schema(format!("unknown MBTI dichotomy {dimension:?}"))),
    }
}

/// Per-split, per-dimension positive-label rates over group labels.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub dataset_rates: Vec<f64>,
    pub split_rates: BTreeMap<String, Vec<f64>>,
}

pub fn label_balance_report(split: &DatasetSplit, dataset: &Dataset) -> Result<BalanceReport> {
    let dims = dataset.scheme().dimension_count();
    let rates_of = |ids: &[String]| -> Result<Vec<f64>> {
        let mut pos = vec![0usize; dims];
        for id in ids {
            let labels = dataset
                .group_labels(id)
                .ok_or_else(|| Error::schema(format!("split references unknown group {id:?}")))?;
            for (j, &b) in labels.bits().iter().enumerate() {
                pos[j] += b as usize;
            }
        }
        let n = ids.len().max(1) as f64;
        Ok(pos.iter().map(|&p| p as f64 / n).collect())
    };
    let all: Vec<String> = dataset.group_ids().iter().map(|s| s.to_string()).collect();
    let mut split_rates = BTreeMap::new();
    split_rates.insert("train".to_string(), rates_of(&split.train)?);
    split_rates.insert("validation".to_string(), rates_of(&split.validation)?);
    split_rates.insert("test".to_string(), rates_of(&split.test)?);
    Ok(BalanceReport {
        dataset_rates: rates_of(&all)?,
        split_rates,
    })
}
