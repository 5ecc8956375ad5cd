//! Balanced accuracy, F1, McNemar's test, pooled aggregation across
//! languages and dimensions, and results-table emission.
//!
//! Undefined metrics raise errors rather than returning sentinel values;
//! silent zeros would corrupt averaged tables.

mod special;

pub use special::{chi2_cdf_df1, erf};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::LanguageCode;
use crate::error::{Error, Result};

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tallies exact confusion counts from aligned bit vectors.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "confusion over {} truths and {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut c = Confusion::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::schema("labels must be 0 or 1")),
        }
    }
    Ok(c)
}

/// Mean of sensitivity and specificity. Errors when either class is empty.
pub fn balanced_accuracy(c: &Confusion) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric(
            "balanced accuracy with no positive examples".into(),
        ));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::UndefinedMetric(
            "balanced accuracy with no negative examples".into(),
        ));
    }
    let sens = c.tp as f64 / (c.tp + c.fn_) as f64;
    let spec = c.tn as f64 / (c.tn + c.fp) as f64;
    Ok(0.5 * (sens + spec))
}

/// F1 = 2·TP / (2·TP + FP + FN). Errors when the denominator is zero.
pub fn f1(c: &Confusion) -> Result<f64> {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return Err(Error::UndefinedMetric("F1 with no positive activity".into()));
    }
    Ok(2.0 * c.tp as f64 / denom as f64)
}

/// Outcome of McNemar's paired test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McNemarResult {
    /// Model A correct where model B is wrong.
    pub b: usize,
    /// Model A wrong where model B is correct.
    pub c: usize,
    pub chi2: f64,
    pub p: f64,
}

impl McNemarResult {
    pub fn significant(&self) -> bool {
        self.p < 0.05
    }
}

/// McNemar's test over the two models' disagreement counts; no continuity
/// correction is applied. b + c = 0 yields p = 1 by convention.
pub fn mcnemar(pred_a: &[u8], pred_b: &[u8], y_true: &[u8]) -> Result<McNemarResult> {
    if pred_a.len() != y_true.len() || pred_b.len() != y_true.len() {
        return Err(Error::shape(format!(
            "mcnemar over lengths {}, {}, {}",
            pred_a.len(),
            pred_b.len(),
            y_true.len()
        )));
    }
    let mut b = 0usize;
    let mut c = 0usize;
    for i in 0..y_true.len() {
        let a_ok = pred_a[i] == y_true[i];
        let b_ok = pred_b[i] == y_true[i];
        match (a_ok, b_ok) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    if b + c == 0 {
        return Ok(McNemarResult {
            b,
            c,
            chi2: 0.0,
            p: 1.0,
        });
    }
    let diff = b as f64 - c as f64;
    let chi2 = diff * diff / (b + c) as f64;
    let p = 1.0 - chi2_cdf_df1(chi2)?;
    Ok(McNemarResult { b, c, chi2, p })
}

/// Per-(language, dimension) prediction cell.
#[derive(Debug, Clone, Default)]
pub struct PredictionCell {
    pub y_true: Vec<u8>,
    pub y_pred: Vec<u8>,
}

/// Predictions organized by (language, dimension index).
pub type PredictionSet = BTreeMap<(LanguageCode, usize), PredictionCell>;

/// Flattens a prediction set into aligned (truth, prediction) vectors.
/// Concatenation order is fixed: language in (en, fr, bm, jp, zh), then
/// dimension in scheme order, then sample order.
pub fn pooled_aggregate(set: &PredictionSet) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut truths = Vec::new();
    let mut preds = Vec::new();
    let dims: Vec<usize> = {
        let mut d: Vec<usize> = set.keys().map(|&(_, j)| j).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    for lang in LanguageCode::ALL {
        for &dim in &dims {
            if let Some(cell) = set.get(&(lang, dim)) {
                if cell.y_true.len() != cell.y_pred.len() {
                    return Err(Error::shape(format!(
                        "cell ({lang}, {dim}) holds {} truths and {} predictions",
                        cell.y_true.len(),
                        cell.y_pred.len()
                    )));
                }
                truths.extend_from_slice(&cell.y_true);
                preds.extend_from_slice(&cell.y_pred);
            }
        }
    }
    Ok((truths, preds))
}

/// One row cell of a results table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CellMetrics {
    pub ba: f64,
    pub f1: f64,
}

/// Per-language × per-dimension BA/F1 table.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsTable {
    pub algorithm: String,
    pub dataset: String,
    pub dimension_names: Vec<String>,
    pub rows: BTreeMap<LanguageCode, Vec<CellMetrics>>,
}

impl MetricsTable {
    /// Builds the table from a prediction set; every present cell must be
    /// well-defined.
    pub fn from_predictions(
        algorithm: &str,
        dataset: &str,
        dimension_names: &[String],
        set: &PredictionSet,
    ) -> Result<MetricsTable> {
        let mut rows: BTreeMap<LanguageCode, Vec<CellMetrics>> = BTreeMap::new();
        let mut langs: Vec<LanguageCode> = set.keys().map(|&(l, _)| l).collect();
        langs.sort_by_key(|l| l.index());
        langs.dedup();
        for lang in langs {
            let mut cells = Vec::new();
            for dim in 0..dimension_names.len() {
                let cell = set.get(&(lang, dim)).ok_or_else(|| {
                    Error::schema(format!("missing prediction cell ({lang}, {dim})"))
                })?;
                let c = confusion(&cell.y_true, &cell.y_pred)?;
                cells.push(CellMetrics {
                    ba: balanced_accuracy(&c)?,
                    f1: f1(&c)?,
                });
            }
            rows.insert(lang, cells);
        }
        Ok(MetricsTable {
            algorithm: algorithm.to_string(),
            dataset: dataset.to_string(),
            dimension_names: dimension_names.to_vec(),
            rows,
        })
    }

    pub fn language_average(&self, lang: LanguageCode) -> Option<CellMetrics> {
        let cells = self.rows.get(&lang)?;
        let n = cells.len() as f64;
        Some(CellMetrics {
            ba: cells.iter().map(|c| c.ba).sum::<f64>() / n,
            f1: cells.iter().map(|c| c.f1).sum::<f64>() / n,
        })
    }

    pub fn overall_average(&self) -> Option<CellMetrics> {
        if self.rows.is_empty() {
            return None;
        }
        let mut ba = 0.0;
        let mut f1v = 0.0;
        let mut n = 0.0;
        for cells in self.rows.values() {
            for c in cells {
                ba += c.ba;
                f1v += c.f1;
                n += 1.0;
            }
        }
        Some(CellMetrics {
            ba: ba / n,
            f1: f1v / n,
        })
    }

    /// CSV rows (algorithm, dataset, language, dimension, ba, f1) in a
    /// stable order, with an `avg` dimension row per language and an
    /// `all`-language summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,dataset,language,dimension,ba,f1\n");
        let mut langs: Vec<&LanguageCode> = self.rows.keys().collect();
        langs.sort_by_key(|l| l.index());
        for &lang in &langs {
            for (j, cell) in self.rows[lang].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6}",
                    self.algorithm, self.dataset, lang, self.dimension_names[j], cell.ba, cell.f1
                );
            }
            if let Some(avg) = self.language_average(*lang) {
                let _ = writeln!(
                    out,
                    "{},{},{},avg,{:.6},{:.6}",
                    self.algorithm, self.dataset, lang, avg.ba, avg.f1
                );
            }
        }
        if let Some(avg) = self.overall_average() {
            let _ = writeln!(
                out,
                "{},{},all,avg,{:.6},{:.6}",
                self.algorithm, self.dataset, avg.ba, avg.f1
            );
        }
        out
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} on {}", self.algorithm, self.dataset);
        let mut header = format!("{:<6}", "lang");
        for name in &self.dimension_names {
            header.push_str(&format!("{:>8}BA{:>8}F1", name, ""));
        }
        header.push_str(&format!("{:>9}{:>9}", "avgBA", "avgF1"));
        let _ = writeln!(out, "{header}");
        let mut langs: Vec<&LanguageCode> = self.rows.keys().collect();
        langs.sort_by_key(|l| l.index());
        for &lang in &langs {
            let mut row = format!("{:<6}", lang.code());
            for cell in &self.rows[lang] {
                row.push_str(&format!("{:>10.4}{:>10.4}", cell.ba, cell.f1));
            }
            if let Some(avg) = self.language_average(*lang) {
                row.push_str(&format!("{:>9.4}{:>9.4}", avg.ba, avg.f1));
            }
            let _ = writeln!(out, "{row}");
        }
        if let Some(avg) = self.overall_average() {
            let _ = writeln!(out, "overall avg BA {:.4}  F1 {:.4}", avg.ba, avg.f1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_accuracy_examples() {
        // Perfect predictor.
        let c = Confusion {
            tp: 4,
            fp: 0,
            tn: 3,
            fn_: 0,
        };
        assert_eq!(balanced_accuracy(&c).unwrap(), 1.0);
        // 0.5·(3/4 + 2/4) = 0.625.
        let c = Confusion {
            tp: 3,
            fn_: 1,
            tn: 2,
            fp: 2,
        };
        assert!((balanced_accuracy(&c).unwrap() - 0.625).abs() < 1e-15);
        // Constant-positive predictor on balanced labels: sensitivity 1,
        // specificity 0.
        let c = Confusion {
            tp: 5,
            fn_: 0,
            tn: 0,
            fp: 5,
        };
        assert!((balanced_accuracy(&c).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn undefined_metrics_error() {
        // No negative examples at all.
        let c = Confusion {
            tp: 3,
            fp: 0,
            tn: 0,
            fn_: 1,
        };
        assert!(balanced_accuracy(&c).is_err());
        let c = Confusion::default();
        assert!(f1(&c).is_err());
    }

    #[test]
    fn f1_examples() {
        let c = Confusion {
            tp: 3,
            fp: 0,
            tn: 1,
            fn_: 0,
        };
        assert_eq!(f1(&c).unwrap(), 1.0);
        let c = Confusion {
            tp: 0,
            fp: 2,
            tn: 0,
            fn_: 1,
        };
        assert_eq!(f1(&c).unwrap(), 0.0);
        let c = Confusion {
            tp: 3,
            fp: 2,
            tn: 0,
            fn_: 1,
        };
        assert!((f1(&c).unwrap() - 6.0 / 9.0).abs() < 1e-15);
    }

    /// Independent brute-force evaluator used as the oracle for the
    /// exhaustive confusion sweep: recomputes BA and F1 from per-example
    /// materialized predictions rather than from the count formulas.
    fn brute_force(c: &Confusion) -> Option<(f64, f64)> {
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        for _ in 0..c.tp {
            y_true.push(1);
            y_pred.push(1);
        }
        for _ in 0..c.fp {
            y_true.push(0);
            y_pred.push(1);
        }
        for _ in 0..c.tn {
            y_true.push(0);
            y_pred.push(0);
        }
        for _ in 0..c.fn_ {
            y_true.push(1);
            y_pred.push(0);
        }
        let pos: Vec<usize> = (0..y_true.len()).filter(|&i| y_true[i] == 1).collect();
        let neg: Vec<usize> = (0..y_true.len()).filter(|&i| y_true[i] == 0).collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let recall_pos =
            pos.iter().filter(|&&i| y_pred[i] == 1).count() as f64 / pos.len() as f64;
        let recall_neg =
            neg.iter().filter(|&&i| y_pred[i] == 0).count() as f64 / neg.len() as f64;
        let ba = (recall_pos + recall_neg) / 2.0;
        let pred_pos = y_pred.iter().filter(|&&p| p == 1).count();
        let true_pos = pos.len();
        let tp = pos.iter().filter(|&&i| y_pred[i] == 1).count();
        if pred_pos + true_pos == 0 {
            return None;
        }
        let f1v = 2.0 * tp as f64 / (pred_pos + true_pos) as f64;
        Some((ba, f1v))
    }

    #[test]
    fn exhaustive_confusions_match_brute_force() {
        // All 1,296 confusions with counts ≤ 5.
        let mut checked = 0;
        for tp in 0..=5 {
            for fp in 0..=5 {
                for tn in 0..=5 {
                    for fn_ in 0..=5 {
                        let c = Confusion { tp, fp, tn, fn_ };
                        match brute_force(&c) {
                            Some((ba_o, f1_o)) => {
                                assert!((balanced_accuracy(&c).unwrap() - ba_o).abs() <= 1e-12);
                                assert!((f1(&c).unwrap() - f1_o).abs() <= 1e-12);
                                checked += 1;
                            }
                            None => {
                                assert!(
                                    balanced_accuracy(&c).is_err(),
                                    "BA should be undefined for {c:?}"
                                );
                            }
                        }
                    }
                }
            }
        }
        // 35·35 of the 1,296 count combinations have both classes present.
        assert_eq!(checked, 1225);
    }

    #[test]
    fn ba_symmetric_under_label_swap() {
        for tp in 0..=4 {
            for fp in 0..=4 {
                for tn in 1..=4 {
                    for fn_ in 1..=4 {
                        let c = Confusion { tp, fp, tn, fn_ };
                        let swapped = Confusion {
                            tp: c.tn,
                            fp: c.fn_,
                            tn: c.tp,
                            fn_: c.fp,
                        };
                        if let (Ok(a), Ok(b)) =
                            (balanced_accuracy(&c), balanced_accuracy(&swapped))
                        {
                            assert!((a - b).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mcnemar_zero_statistic() {
        // b = c = 10 → chi2 = 0, p = 1.
        let y = vec![1u8; 40];
        let mut a = vec![1u8; 40];
        let mut b = vec![1u8; 40];
        for i in 0..10 {
            b[i] = 0; // a correct, b wrong
        }
        for i in 10..20 {
            a[i] = 0; // a wrong, b correct
        }
        let r = mcnemar(&a, &b, &y).unwrap();
        assert_eq!((r.b, r.c), (10, 10));
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn mcnemar_identical_predictions_convention() {
        let y = vec![0u8, 1, 0, 1];
        let p = vec![1u8, 1, 0, 0];
        let r = mcnemar(&p, &p, &y).unwrap();
        assert_eq!((r.b, r.c), (0, 0));
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn mcnemar_b15_c5() {
        // chi2 = (15−5)²/20 = 5; p = 1 − erf(√2.5) ≈ 0.02535.
        let n = 40;
        let y = vec![1u8; n];
        let mut a = vec![1u8; n];
        let mut b = vec![1u8; n];
        for i in 0..15 {
            b[i] = 0;
        }
        for i in 15..20 {
            a[i] = 0;
        }
        let r = mcnemar(&a, &b, &y).unwrap();
        assert_eq!((r.b, r.c), (15, 5));
        assert!((r.chi2 - 5.0).abs() < 1e-12);
        assert!((r.p - 0.02535).abs() <= 1e-3, "p = {}", r.p);
        assert!(r.significant());
    }

    #[test]
    fn mcnemar_swap_symmetry() {
        let y = vec![1u8, 1, 0, 0, 1, 0, 1, 1];
        let a = vec![1u8, 0, 0, 1, 1, 0, 0, 1];
        let b = vec![0u8, 1, 1, 0, 1, 0, 1, 0];
        let r1 = mcnemar(&a, &b, &y).unwrap();
        let r2 = mcnemar(&b, &a, &y).unwrap();
        assert_eq!((r1.b, r1.c), (r2.c, r2.b));
        assert_eq!(r1.chi2, r2.chi2);
        assert_eq!(r1.p, r2.p);
    }

    #[test]
    fn pooled_order_is_language_then_dimension() {
        let mut set = PredictionSet::new();
        set.insert(
            (LanguageCode::Fr, 0),
            PredictionCell {
                y_true: vec![1, 1],
                y_pred: vec![1, 0],
            },
        );
        set.insert(
            (LanguageCode::En, 1),
            PredictionCell {
                y_true: vec![0],
                y_pred: vec![0],
            },
        );
        set.insert(
            (LanguageCode::En, 0),
            PredictionCell {
                y_true: vec![1],
                y_pred: vec![1],
            },
        );
        let (t, p) = pooled_aggregate(&set).unwrap();
        // en dim0, en dim1, fr dim0
        assert_eq!(t, vec![1, 0, 1, 1]);
        assert_eq!(p, vec![1, 0, 1, 0]);
    }
}
