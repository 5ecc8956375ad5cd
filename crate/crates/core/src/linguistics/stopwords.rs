//! Versioned per-language stopword lists, embedded at compile time.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::corpus::LanguageCode;

const EN: &str = include_str!("../../data/stopwords/en.txt");
const FR: &str = include_str!("../../data/stopwords/fr.txt");
const BM: &str = include_str!("../../data/stopwords/bm.txt");
const JP: &str = include_str!("../../data/stopwords/jp.txt");
const ZH: &str = include_str!("../../data/stopwords/zh.txt");

fn parse(raw: &'static str) -> BTreeSet<&'static str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// The frozen stopword set for a language.
pub fn stopword_list(lang: LanguageCode) -> &'static BTreeSet<&'static str> {
    static LISTS: OnceLock<[BTreeSet<&'static str>; 5]> = OnceLock::new();
    let lists = LISTS.get_or_init(|| [parse(EN), parse(FR), parse(BM), parse(JP), parse(ZH)]);
    &lists[lang.index()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_are_nonempty_and_comment_free() {
        for lang in LanguageCode::ALL {
            let list = stopword_list(lang);
            assert!(!list.is_empty(), "{lang} list empty");
            assert!(list.iter().all(|w| !w.starts_with('#')));
        }
    }
}
