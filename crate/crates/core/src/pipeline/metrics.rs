//! Accuracy, macro-averaged F1 and the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::data::Label;
use crate::error::{Error, Result};

fn check_lengths(preds: &[Label], golds: &[Label]) -> Result<()> {
    if preds.is_empty() || golds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if preds.len() != golds.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    Ok(())
}

pub fn accuracy(preds: &[Label], golds: &[Label]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// `confusion[gold][pred]`.
pub fn confusion(preds: &[Label], golds: &[Label]) -> Result<[[u64; 3]; 3]> {
    check_lengths(preds, golds)?;
    let mut m = [[0u64; 3]; 3];
    for (p, g) in preds.iter().zip(golds) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Precision, recall and F1 for each class. A zero denominator yields 0.
pub fn per_class(confusion: &[[u64; 3]; 3]) -> Vec<ClassMetrics> {
    Label::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = confusion[c][c] as f64;
            let predicted: u64 = (0..3).map(|g| confusion[g][c]).sum();
            let support: u64 = confusion[c].iter().sum();
            let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

/// Unweighted mean of the three per-class F1 scores. A class absent from
/// both predictions and gold labels contributes 0.
pub fn macro_f1(preds: &[Label], golds: &[Label]) -> Result<f64> {
    let m = confusion(preds, golds)?;
    Ok(per_class(&m).iter().map(|c| c.f1).sum::<f64>() / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Rows are gold labels, columns predictions, both in
    /// (positive, negative, neutral) order.
    pub confusion: [[u64; 3]; 3],
    pub total: u64,
}

impl EvalReport {
    pub fn new(preds: &[Label], golds: &[Label]) -> Result<Self> {
        let confusion = confusion(preds, golds)?;
        let per_class = per_class(&confusion);
        let trace: u64 = (0..3).map(|i| confusion[i][i]).sum();
        let total = preds.len() as u64;
        Ok(Self {
            accuracy: trace as f64 / total as f64,
            macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0,
            per_class,
            confusion,
            total,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Config(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        df,
        mean_diff: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[Positive, Negative], &[Positive, Negative]).unwrap(), 1.0);
        assert_eq!(accuracy(&[Positive, Negative], &[Neutral, Positive]).unwrap(), 0.0);
        let golds = [Positive; 10];
        let mut preds = [Positive; 10];
        preds[..3].fill(Negative);
        assert_eq!(accuracy(&preds, &golds).unwrap(), 0.7);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn macro_f1_hand_example() {
        // P: tp 2, fp 1, fn 1; N: tp 1; O: tp 0, fp 1, fn 1
        let golds = [Positive, Positive, Positive, Negative, Neutral];
        let preds = [Positive, Positive, Neutral, Negative, Positive];
        let f = macro_f1(&preds, &golds).unwrap();
        assert!((f - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_perfect_and_absent_class() {
        let all = [Positive, Negative, Neutral];
        assert_eq!(macro_f1(&all, &all).unwrap(), 1.0);
        let two = [Positive, Negative];
        assert!((macro_f1(&two, &two).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_consistency() {
        let golds = [Positive, Positive, Negative, Neutral, Neutral];
        let preds = [Positive, Negative, Negative, Neutral, Positive];
        let r = EvalReport::new(&preds, &golds).unwrap();
        assert_eq!(r.accuracy, accuracy(&preds, &golds).unwrap());
        assert_eq!(r.macro_f1, macro_f1(&preds, &golds).unwrap());
        assert_eq!(r.total, 5);
    }

    #[test]
    fn t_test_symmetric_differences() {
        let t = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(t.t, 0.0);
        assert_eq!(t.p, 1.0);
    }

    #[test]
    fn t_test_three_differences() {
        // mean 0.6, sd 0.1 → t = 6√3; df = 2 has the closed-form
        // two-sided p = 1 − |t| / √(t² + 2)
        let t = paired_t_test(&[1.5, 1.7, 1.6], &[1.0, 1.0, 1.0]).unwrap();
        let expect_t = 6.0 * 3f64.sqrt();
        assert!((t.t - expect_t).abs() < 1e-9);
        let expect_p = 1.0 - expect_t / (expect_t * expect_t + 2.0).sqrt();
        assert!((t.p - expect_p).abs() < 1e-9, "{} vs {}", t.p, expect_p);
        assert_eq!(t.df, 2);
    }

    #[test]
    fn t_test_constant_shift_is_degenerate() {
        let a = [0.71, 0.73, 0.70, 0.75, 0.74];
        let b: Vec<f64> = a.iter().map(|x| x - 0.02).collect();
        assert!(matches!(paired_t_test(&a, &b), Err(Error::Degenerate(_))));
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
    }
}
