//! Label-leakage judges and Venn accounting over their verdicts.

use serde::{Deserialize, Serialize};

use crate::augment::prompts::{render_csp, render_tcp};
use crate::augment::CompletionProvider;
use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Which audit prompt produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeKind {
    /// Content Screening Prompt: trait cues in the translated text alone.
    Csp,
    /// Translation Comparison Prompt: trait-aligned additions relative to
    /// the original.
    Tcp,
}

impl JudgeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csp" => Ok(JudgeKind::Csp),
            "tcp" => Ok(JudgeKind::Tcp),
            other => Err(Error::Config(format!("unknown judge kind {other:?}"))),
        }
    }
}

/// One judge decision with the raw provider response retained for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub kind: JudgeKind,
    pub flagged: bool,
    pub raw_response: String,
}

/// Parse rule: the first response line must equal YES or NO
/// (case-insensitive). Anything else is an error, never a silent
/// default.
fn parse_verdict(kind: JudgeKind, raw: String) -> Result<JudgeVerdict> {
    let first = raw.lines().next().unwrap_or("").trim();
    let flagged = if first.eq_ignore_ascii_case("yes") {
        true
    } else if first.eq_ignore_ascii_case("no") {
        false
    } else {
        return Err(Error::Provider(format!(
            "unparseable judge response {first:?}"
        )));
    };
    Ok(JudgeVerdict {
        kind,
        flagged,
        raw_response: raw,
    })
}

/// Runs the Content Screening Prompt on one translated sample.
pub fn judge_csp(provider: &dyn CompletionProvider, translated: &Sample) -> Result<JudgeVerdict> {
    let prompt = render_csp(translated)?;
    parse_verdict(JudgeKind::Csp, provider.complete(&prompt.system, &prompt.user)?)
}

/// Runs the Translation Comparison Prompt on an (original, translated)
/// pair sharing one group id.
pub fn judge_tcp(
    provider: &dyn CompletionProvider,
    original: &Sample,
    translated: &Sample,
) -> Result<JudgeVerdict> {
    let prompt = render_tcp(original, translated)?;
    parse_verdict(JudgeKind::Tcp, provider.complete(&prompt.system, &prompt.user)?)
}

/// Disjoint flag counts over rows judged in both the TOGA and PIGA
/// datasets; the four counts always sum to the row count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennCounts {
    pub toga_only: usize,
    pub piga_only: usize,
    pub common: usize,
    pub neither: usize,
}

impl VennCounts {
    pub fn total(&self) -> usize {
        self.toga_only + self.piga_only + self.common + self.neither
    }
}

/// Partitions aligned verdict lists (same rows, same order) into the
/// four Venn regions.
pub fn leakage_venn(toga: &[JudgeVerdict], piga: &[JudgeVerdict]) -> Result<VennCounts> {
    if toga.len() != piga.len() {
        return Err(Error::shape(format!(
            "venn over {} TOGA and {} PIGA verdicts",
            toga.len(),
            piga.len()
        )));
    }
    let mut counts = VennCounts {
        toga_only: 0,
        piga_only: 0,
        common: 0,
        neither: 0,
    };
    for (t, p) in toga.iter().zip(piga) {
        match (t.flagged, p.flagged) {
            (true, true) => counts.common += 1,
            (true, false) => counts.toga_only += 1,
            (false, true) => counts.piga_only += 1,
            (false, false) => counts.neither += 1,
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::MockProvider;
    use crate::corpus::{LanguageCode, TraitLabels, VariantTag};

    fn verdict(flagged: bool) -> JudgeVerdict {
        JudgeVerdict {
            kind: JudgeKind::Csp,
            flagged,
            raw_response: String::new(),
        }
    }

    fn sample(gid: &str, text: &str) -> Sample {
        Sample {
            group_id: gid.into(),
            language: LanguageCode::Fr,
            variant: VariantTag::Regular,
            text: text.into(),
            labels: TraitLabels::new(vec![1, 0, 1, 0, 1]).unwrap(),
        }
    }

    #[test]
    fn parse_rule_accepts_only_yes_no() {
        assert!(parse_verdict(JudgeKind::Csp, "YES".into()).unwrap().flagged);
        assert!(!parse_verdict(JudgeKind::Csp, "no\nmore text".into())
            .unwrap()
            .flagged);
        assert!(parse_verdict(JudgeKind::Csp, "Yes".into()).unwrap().flagged);
        assert!(parse_verdict(JudgeKind::Csp, "maybe".into()).is_err());
        assert!(parse_verdict(JudgeKind::Csp, String::new()).is_err());
    }

    #[test]
    fn all_unflagged_is_all_neither() {
        let t: Vec<_> = (0..4).map(|_| verdict(false)).collect();
        let p: Vec<_> = (0..4).map(|_| verdict(false)).collect();
        let v = leakage_venn(&t, &p).unwrap();
        assert_eq!(
            v,
            VennCounts {
                toga_only: 0,
                piga_only: 0,
                common: 0,
                neither: 4
            }
        );
    }

    #[test]
    fn set_algebra_example() {
        // TOGA flags rows {1,2}, PIGA flags {2,3} of 4 rows.
        let t = vec![verdict(false), verdict(true), verdict(true), verdict(false)];
        let p = vec![verdict(false), verdict(false), verdict(true), verdict(true)];
        let v = leakage_venn(&t, &p).unwrap();
        assert_eq!(
            v,
            VennCounts {
                toga_only: 1,
                piga_only: 1,
                common: 1,
                neither: 1
            }
        );
        assert_eq!(v.total(), 4);
    }

    #[test]
    fn mock_audit_matches_independent_set_algebra() {
        // Keyword rule over texts; the oracle recomputes the regions with
        // plain set operations over the same verdicts.
        use std::collections::BTreeSet;
        let provider = MockProvider::default();
        let texts_toga = [
            "the weather is nice",
            "I am an introvert at heart",
            "an extrovert walks in",
            "nothing to see",
            "quiet introvert evenings",
        ];
        let texts_piga = [
            "the weather is nice",
            "plain text here",
            "an extrovert walks in",
            "extrovert energy all day",
            "quiet introvert evenings",
        ];
        let toga: Vec<JudgeVerdict> = texts_toga
            .iter()
            .enumerate()
            .map(|(i, t)| judge_csp(&provider, &sample(&format!("g{i}"), t)).unwrap())
            .collect();
        let piga: Vec<JudgeVerdict> = texts_piga
            .iter()
            .enumerate()
            .map(|(i, t)| judge_csp(&provider, &sample(&format!("g{i}"), t)).unwrap())
            .collect();
        let v = leakage_venn(&toga, &piga).unwrap();

        let tf: BTreeSet<usize> = toga
            .iter()
            .enumerate()
            .filter(|(_, x)| x.flagged)
            .map(|(i, _)| i)
            .collect();
        let pf: BTreeSet<usize> = piga
            .iter()
            .enumerate()
            .filter(|(_, x)| x.flagged)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(v.common, tf.intersection(&pf).count());
        assert_eq!(v.toga_only, tf.difference(&pf).count());
        assert_eq!(v.piga_only, pf.difference(&tf).count());
        assert_eq!(v.neither, texts_toga.len() - tf.union(&pf).count());
        assert_eq!(v.total(), texts_toga.len());
    }

    #[test]
    fn tcp_requires_matching_group() {
        let provider = MockProvider::default();
        let orig = sample("g1", "original text");
        let trans = sample("g2", "translated text");
        assert!(judge_tcp(&provider, &orig, &trans).is_err());
    }
}
