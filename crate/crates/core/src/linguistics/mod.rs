//! Linguistic metrics: syllable count, Herdan's C, and lexical density,
//! with per-language tokenization and distribution reports.
//!
//! All metrics are pure functions of (text, language). The rules are
//! pinned for reproducibility:
//!
//! - en/fr/bm tokenize on Unicode alphanumeric runs, lowercased; zh is one
//!   token per Han character; jp is one token per Han run plus one token
//!   per kana character.
//! - Syllables in Latin-script text count maximal vowel groups per word
//!   (French adds accented vowels), minimum one per word containing a
//!   letter; zh counts Han characters; jp approximates morae as non-small
//!   kana plus two per Han character.
//! - Lexical density divides non-stopword tokens by all tokens, against
//!   the versioned stopword lists shipped with the crate.

mod stopwords;

pub use stopwords::stopword_list;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Dataset, LanguageCode};
use crate::error::{Error, Result};
use crate::maybe_par_iter;
#[cfg(feature = "parallel")]
use crate::par::*;

fn is_han(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{F900}'..='\u{FAFF}')
}

fn is_kana(c: char) -> bool {
    matches!(c, '\u{3040}'..='\u{309F}' | '\u{30A0}'..='\u{30FF}')
}

/// Small kana do not add a mora of their own.
fn is_small_kana(c: char) -> bool {
    const SMALL: &[char] = &[
        'ぁ', 'ぃ', 'ぅ', 'ぇ', 'ぉ', 'ゃ', 'ゅ', 'ょ', 'っ', 'ゎ', 'ァ', 'ィ', 'ゥ', 'ェ', 'ォ',
        'ャ', 'ュ', 'ョ', 'ッ', 'ヮ', 'ヵ', 'ヶ',
    ];
    SMALL.contains(&c)
}

fn is_latin_vowel(c: char, lang: LanguageCode) -> bool {
    const BASE: &str = "aeiouy";
    const FRENCH: &str = "àâäéèêëîïôöùûüÿ";
    BASE.contains(c) || (lang == LanguageCode::Fr && FRENCH.contains(c))
}

/// Language-aware tokenization. Empty text yields an empty list.
pub fn tokenize(text: &str, lang: LanguageCode) -> Vec<String> {
    match lang {
        LanguageCode::En | LanguageCode::Fr | LanguageCode::Bm => {
            let mut tokens = Vec::new();
            let mut current = String::new();
            for c in text.chars() {
                if c.is_alphanumeric() {
                    current.extend(c.to_lowercase());
                } else if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            if !current.is_empty() {
                tokens.push(current);
            }
            tokens
        }
        LanguageCode::Zh => text.chars().filter(|&c| is_han(c)).map(String::from).collect(),
        LanguageCode::Jp => {
            let mut tokens = Vec::new();
            let mut han_run = String::new();
            let mut latin_run = String::new();
            for c in text.chars() {
                if is_han(c) {
                    if !latin_run.is_empty() {
                        tokens.push(std::mem::take(&mut latin_run));
                    }
                    han_run.push(c);
                } else if is_kana(c) {
                    if !han_run.is_empty() {
                        tokens.push(std::mem::take(&mut han_run));
                    }
                    if !latin_run.is_empty() {
                        tokens.push(std::mem::take(&mut latin_run));
                    }
                    tokens.push(String::from(c));
                } else if c.is_alphanumeric() {
                    if !han_run.is_empty() {
                        tokens.push(std::mem::take(&mut han_run));
                    }
                    latin_run.extend(c.to_lowercase());
                } else {
                    if !han_run.is_empty() {
                        tokens.push(std::mem::take(&mut han_run));
                    }
                    if !latin_run.is_empty() {
                        tokens.push(std::mem::take(&mut latin_run));
                    }
                }
            }
            if !han_run.is_empty() {
                tokens.push(han_run);
            }
            if !latin_run.is_empty() {
                tokens.push(latin_run);
            }
            tokens
        }
    }
}

fn latin_word_syllables(word: &str, lang: LanguageCode) -> usize {
    let mut groups = 0;
    let mut in_group = false;
    let mut has_letter = false;
    for c in word.chars() {
        if c.is_alphabetic() {
            has_letter = true;
        }
        let vowel = is_latin_vowel(c, lang);
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
    }
    if groups == 0 && has_letter {
        1
    } else {
        groups
    }
}

/// Estimated syllable count of a whole text.
pub fn syllable_count(text: &str, lang: LanguageCode) -> usize {
    match lang {
        LanguageCode::En | LanguageCode::Fr | LanguageCode::Bm => tokenize(text, lang)
            .iter()
            .map(|w| latin_word_syllables(w, lang))
            .sum(),
        LanguageCode::Zh => text.chars().filter(|&c| is_han(c)).count(),
        LanguageCode::Jp => {
            // Mora approximation: non-small kana count one, Han characters
            // count two.
            let kana = text
                .chars()
                .filter(|&c| is_kana(c) && !is_small_kana(c))
                .count();
            let han = text.chars().filter(|&c| is_han(c)).count();
            kana + 2 * han
        }
    }
}

/// Herdan's C = ln(V) / ln(N) over tokens; requires at least two tokens.
pub fn herdan_c(text: &str, lang: LanguageCode) -> Result<f64> {
    let tokens = tokenize(text, lang);
    let n = tokens.len();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!(
            "Herdan's C needs at least 2 tokens, got {n}"
        )));
    }
    let types: BTreeSet<&String> = tokens.iter().collect();
    Ok((types.len() as f64).ln() / (n as f64).ln())
}

/// Fraction of tokens that are not stopwords; requires at least one token.
pub fn lexical_density(text: &str, lang: LanguageCode) -> Result<f64> {
    let tokens = tokenize(text, lang);
    if tokens.is_empty() {
        return Err(Error::UndefinedMetric(
            "lexical density of an empty token list".into(),
        ));
    }
    let stops = stopword_list(lang);
    let content = tokens.iter().filter(|t| !stops.contains(t.as_str())).count();
    Ok(content as f64 / tokens.len() as f64)
}

/// Per-sample metric row.
#[derive(Debug, Clone, Serialize)]
pub struct SampleMetrics {
    pub group_id: String,
    pub language: LanguageCode,
    pub syllables: usize,
    pub herdan_c: Option<f64>,
    pub lexical_density: Option<f64>,
}

/// Five-number-ish distribution summary.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl DistributionSummary {
    fn from_values(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
        let quantile = |p: f64| -> f64 {
            // Linear interpolation between closest ranks.
            let pos = p * (values.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            values[lo] * (1.0 - frac) + values[hi] * frac
        };
        Some(DistributionSummary {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(0.5),
            q1: quantile(0.25),
            q3: quantile(0.75),
        })
    }
}

/// Distribution summaries of the three metrics for one language.
#[derive(Debug, Clone, Serialize)]
pub struct LanguageSummary {
    pub syllables: Option<DistributionSummary>,
    pub herdan_c: Option<DistributionSummary>,
    pub lexical_density: Option<DistributionSummary>,
}

/// The full per-method report: per-sample rows plus per-language
/// distribution summaries.
#[derive(Debug, Clone, Serialize)]
pub struct LinguisticReport {
    pub method: String,
    pub per_sample: Vec<SampleMetrics>,
    pub summaries: BTreeMap<String, LanguageSummary>,
}

/// Computes metrics for every sample of a dataset under one method tag.
/// Samples are processed in parallel when the `parallel` feature is on;
/// output order always follows the dataset.
pub fn corpus_report(dataset: &Dataset, method: &str) -> LinguisticReport {
    let samples = dataset.samples();
    let per_sample: Vec<SampleMetrics> = maybe_par_iter!(samples)
        .map(|s| SampleMetrics {
            group_id: s.group_id.clone(),
            language: s.language,
            syllables: syllable_count(&s.text, s.language),
            herdan_c: herdan_c(&s.text, s.language).ok(),
            lexical_density: lexical_density(&s.text, s.language).ok(),
        })
        .collect();

    let mut summaries = BTreeMap::new();
    for lang in LanguageCode::ALL {
        let rows: Vec<&SampleMetrics> =
            per_sample.iter().filter(|m| m.language == lang).collect();
        if rows.is_empty() {
            continue;
        }
        summaries.insert(
            lang.code().to_string(),
            LanguageSummary {
                syllables: DistributionSummary::from_values(
                    rows.iter().map(|m| m.syllables as f64).collect(),
                ),
                herdan_c: DistributionSummary::from_values(
                    rows.iter().filter_map(|m| m.herdan_c).collect(),
                ),
                lexical_density: DistributionSummary::from_values(
                    rows.iter().filter_map(|m| m.lexical_density).collect(),
                ),
            },
        );
    }
    LinguisticReport {
        method: method.to_string(),
        per_sample,
        summaries,
    }
}

impl LinguisticReport {
    /// CSV with columns (group_id, language, method, syllables, herdan_c,
    /// lexical_density); undefined metrics render as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group_id,language,method,syllables,herdan_c,lexical_density\n");
        for m in &self.per_sample {
            let hc = m.herdan_c.map(|v| format!("{v:.6}")).unwrap_or_default();
            let ld = m
                .lexical_density
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                m.group_id, m.language, self.method, m.syllables, hc, ld
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summaries).expect("summaries serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syllables_hello_world() {
        // hel-lo = 2 vowel groups, world = 1.
        assert_eq!(syllable_count("hello world", LanguageCode::En), 3);
    }

    #[test]
    fn syllables_empty_text() {
        assert_eq!(syllable_count("", LanguageCode::En), 0);
    }

    #[test]
    fn syllables_han_characters() {
        assert_eq!(syllable_count("你好", LanguageCode::Zh), 2);
    }

    #[test]
    fn herdan_examples() {
        // [a, a, b] → ln2/ln3, exactly.
        let c = herdan_c("a a b", LanguageCode::En).unwrap();
        assert_eq!(c, 2.0f64.ln() / 3.0f64.ln());
        // All distinct → 1.
        assert_eq!(herdan_c("one two three", LanguageCode::En).unwrap(), 1.0);
        // Single repeated token → 0.
        assert_eq!(herdan_c("a a a a", LanguageCode::En).unwrap(), 0.0);
    }

    #[test]
    fn herdan_needs_two_tokens() {
        assert!(herdan_c("word", LanguageCode::En).is_err());
        assert!(herdan_c("", LanguageCode::En).is_err());
    }

    #[test]
    fn lexical_density_examples() {
        // {the} is a stopword → 2/3.
        let d = lexical_density("the cat sat", LanguageCode::En).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        // All stopwords → 0.
        assert_eq!(lexical_density("the of and", LanguageCode::En).unwrap(), 0.0);
        // No stopwords → 1.
        assert_eq!(
            lexical_density("cat dog fish", LanguageCode::En).unwrap(),
            1.0
        );
        assert!(lexical_density("", LanguageCode::En).is_err());
    }

    #[test]
    fn appending_tokens_never_decreases_syllables() {
        let base = "some words here";
        let mut count = syllable_count(base, LanguageCode::En);
        for extra in ["and", "more", "syllables", "beautiful"] {
            let text = format!("{base} {extra}");
            let next = syllable_count(&text, LanguageCode::En);
            assert!(next >= count);
            count = next;
        }
    }

    #[test]
    fn density_is_scale_free() {
        let text = "the quick brown fox jumps";
        let doubled = format!("{text} {text}");
        assert_eq!(
            lexical_density(text, LanguageCode::En).unwrap(),
            lexical_density(&doubled, LanguageCode::En).unwrap()
        );
    }

    #[test]
    fn japanese_tokenization_splits_scripts() {
        // Han run stays one token, kana split per character.
        let tokens = tokenize("日本語を勉強します", LanguageCode::Jp);
        assert_eq!(tokens, vec!["日本語", "を", "勉強", "し", "ま", "す"]);
    }

    #[test]
    fn japanese_mora_counting() {
        // Non-small kana を/し/ま/す = 4, Han 日本語勉強 = 5 × 2.
        assert_eq!(syllable_count("日本語を勉強します", LanguageCode::Jp), 14);
        // Small kana ょ/っ do not count: ち+と+て = 3, 待 = 2.
        assert_eq!(syllable_count("ちょっと待って", LanguageCode::Jp), 5);
    }

    #[test]
    fn report_is_deterministic() {
        use crate::corpus::{load_dataset_from, TraitScheme};
        use std::io::Cursor;
        let mut data = String::new();
        for (i, (lang, text)) in [
            ("en", "hello world again"),
            ("fr", "c'est très joli"),
            ("zh", "你好 世界"),
            ("jp", "こんにちは"),
            ("bm", "saya suka makan"),
        ]
        .iter()
        .cycle()
        .take(40)
        .enumerate()
        {
            data.push_str(&format!(
                r#"{{"group_id": "g{i}", "language": "{lang}", "variant": "regular", "text": "{text}", "labels": [1,0,1,0,1]}}"#
            ));
            data.push('\n');
        }
        let ds = load_dataset_from(Cursor::new(data), &TraitScheme::big5()).unwrap();
        let a = corpus_report(&ds, "toga");
        let b = corpus_report(&ds, "toga");
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary_json(), b.summary_json());
    }
}
