//! SemEval-style macro F1 and binary micro P/R/F1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{LabelSchema, Task, OTHER, SEMEVAL_FAMILIES};
use crate::error::{Error, Result};

/// Counts and scores for one row of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScores {
    fn new(label: impl Into<String>, correct: usize, predicted: usize, gold: usize) -> Self {
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        ClassScores {
            label: label.into(),
            correct,
            predicted,
            gold,
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Zero when the denominator is zero.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, zero when `p + r = 0`.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    /// Name of `aggregate`, e.g. `macro_f1` or `f1(Lives_In)`.
    pub metric: String,
    pub aggregate: f64,
    pub accuracy: f64,
    pub total: usize,
    pub rows: Vec<ClassScores>,
    pub labels: Vec<String>,
    /// `confusion[gold][pred]` over `labels`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&ClassScores> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Fixed-width table for terminals.
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(8);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}",
            "class", "P", "R", "F1", "correct", "pred", "gold"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7}  {:>7}  {:>7}",
                r.label, r.precision, r.recall, r.f1, r.correct, r.predicted, r.gold
            );
        }
        let _ = writeln!(s, "{:<width$}  {:>7.4}", self.metric, self.aggregate);
        let _ = writeln!(s, "{:<width$}  {:>7.4}  ({} instances)", "accuracy", self.accuracy, self.total);
        s
    }
}

fn indices(schema: &LabelSchema, labels: &[impl AsRef<str>], which: &str) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            schema
                .index(l.as_ref())
                .ok_or_else(|| Error::Data(format!("unknown {which} label {:?} for {}", l.as_ref(), schema.task)))
        })
        .collect()
}

fn confusion(schema: &LabelSchema, gold: &[usize], pred: &[usize]) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; schema.len()]; schema.len()];
    for (&g, &p) in gold.iter().zip(pred) {
        m[g][p] += 1;
    }
    m
}

fn check_lengths(gold: usize, pred: usize) -> Result<()> {
    if gold != pred {
        return Err(Error::Data(format!("{gold} gold labels but {pred} predictions")));
    }
    Ok(())
}

fn family(label: &str) -> &str {
    label.split('(').next().unwrap_or(label)
}

/// Direction-sensitive macro F1 over the nine relation families.
///
/// A family's precision denominator counts predictions of either direction
/// and its recall denominator counts gold instances of either direction; a
/// hit requires the exact directed label. The average runs over the
/// families occurring in gold or predictions; `Other` gets its own row but
/// is left out of the average. When every label on both sides is `Other`
/// the score is 1.
pub fn semeval_macro_f1(gold: &[impl AsRef<str>], pred: &[impl AsRef<str>]) -> Result<EvalReport> {
    check_lengths(gold.len(), pred.len())?;
    let schema = LabelSchema::semeval();
    let g = indices(&schema, gold, "gold")?;
    let p = indices(&schema, pred, "predicted")?;

    let mut rows = Vec::with_capacity(10);
    for fam in SEMEVAL_FAMILIES {
        let mut correct = 0;
        let mut predicted = 0;
        let mut in_gold = 0;
        for (&gi, &pi) in g.iter().zip(&p) {
            let gl = &schema.labels[gi];
            let pl = &schema.labels[pi];
            let g_in = family(gl) == fam;
            let p_in = family(pl) == fam;
            in_gold += g_in as usize;
            predicted += p_in as usize;
            correct += (g_in && gi == pi) as usize;
        }
        rows.push(ClassScores::new(fam, correct, predicted, in_gold));
    }
    let present: Vec<&ClassScores> = rows.iter().filter(|r| r.gold + r.predicted > 0).collect();
    let macro_f1 = if present.is_empty() {
        1.0
    } else {
        present.iter().map(|r| r.f1).sum::<f64>() / present.len() as f64
    };
    let other = schema.index(OTHER).expect("Other is in the schema");
    rows.push(ClassScores::new(
        OTHER,
        g.iter().zip(&p).filter(|(a, b)| **a == other && **b == other).count(),
        p.iter().filter(|&&x| x == other).count(),
        g.iter().filter(|&&x| x == other).count(),
    ));
    let hits = g.iter().zip(&p).filter(|(a, b)| a == b).count();
    Ok(EvalReport {
        task: Task::Semeval,
        metric: "macro_f1".into(),
        aggregate: macro_f1,
        accuracy: ratio(hits, g.len()),
        total: g.len(),
        confusion: confusion(&schema, &g, &p),
        labels: schema.labels,
        rows,
    })
}

/// Micro precision/recall/F1 of `positive` under `schema`.
pub fn micro_prf(
    schema: &LabelSchema,
    gold: &[impl AsRef<str>],
    pred: &[impl AsRef<str>],
    positive: &str,
) -> Result<EvalReport> {
    check_lengths(gold.len(), pred.len())?;
    let pos = schema
        .index(positive)
        .ok_or_else(|| Error::Data(format!("unknown positive label {positive:?}")))?;
    let g = indices(schema, gold, "gold")?;
    let p = indices(schema, pred, "predicted")?;
    let tp = g.iter().zip(&p).filter(|(a, b)| **a == pos && **b == pos).count();
    let predicted = p.iter().filter(|&&x| x == pos).count();
    let in_gold = g.iter().filter(|&&x| x == pos).count();
    let row = ClassScores::new(positive, tp, predicted, in_gold);
    let hits = g.iter().zip(&p).filter(|(a, b)| a == b).count();
    Ok(EvalReport {
        task: schema.task,
        metric: format!("f1({positive})"),
        aggregate: row.f1,
        accuracy: ratio(hits, g.len()),
        total: g.len(),
        confusion: confusion(schema, &g, &p),
        labels: schema.labels.clone(),
        rows: vec![row],
    })
}

/// The development metric of a task.
pub fn evaluate(task: Task, gold: &[impl AsRef<str>], pred: &[impl AsRef<str>]) -> Result<EvalReport> {
    match task {
        Task::Semeval => semeval_macro_f1(gold, pred),
        Task::Bb3 => micro_prf(&LabelSchema::bb3(), gold, pred, crate::data::LIVES_IN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_semeval() {
        let g = ["Cause-Effect(e1,e2)", "Other", "Message-Topic(e2,e1)"];
        let r = semeval_macro_f1(&g, &g).unwrap();
        assert_eq!(r.aggregate, 1.0);
        let r = semeval_macro_f1(&["Other"], &["Other"]).unwrap();
        assert_eq!(r.aggregate, 1.0);
        let all: Vec<String> = LabelSchema::semeval().labels;
        let r = semeval_macro_f1(&all, &all).unwrap();
        assert!((r.aggregate - 1.0).abs() < 1e-12);
        assert_eq!(r.rows.len(), 10);
    }

    #[test]
    fn all_other_predictions_score_zero() {
        let g = ["Cause-Effect(e1,e2)", "Entity-Origin(e2,e1)"];
        let p = ["Other", "Other"];
        let r = semeval_macro_f1(&g, &p).unwrap();
        assert_eq!(r.aggregate, 0.0);
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 2);
    }

    #[test]
    fn direction_error_fixture() {
        let g = ["Cause-Effect(e1,e2)", "Cause-Effect(e1,e2)", "Component-Whole(e1,e2)", "Other"];
        let p = ["Cause-Effect(e1,e2)", "Cause-Effect(e2,e1)", "Component-Whole(e1,e2)", "Other"];
        let r = semeval_macro_f1(&g, &p).unwrap();
        let ce = r.row("Cause-Effect").unwrap();
        assert_eq!((ce.correct, ce.predicted, ce.gold), (1, 2, 2));
        // Cause-Effect P = R = 1/2, Component-Whole 1; no other family occurs.
        assert!((r.aggregate - 0.75).abs() < 1e-12);
    }

    #[test]
    fn unknown_labels_and_lengths() {
        assert!(semeval_macro_f1(&["Nope"], &["Other"]).is_err());
        assert!(semeval_macro_f1(&["Other"], &["Other", "Other"]).is_err());
        assert!(micro_prf(&LabelSchema::bb3(), &["Other"], &["None"], "Lives_In").is_err());
    }

    #[test]
    fn micro_hand_values() {
        let s = LabelSchema::bb3();
        let r = micro_prf(&s, &["Lives_In", "None"], &["Lives_In", "Lives_In"], "Lives_In").unwrap();
        let row = &r.rows[0];
        assert_eq!(row.precision, 0.5);
        assert_eq!(row.recall, 1.0);
        assert!((row.f1 - 2.0 / 3.0).abs() < 1e-15);
        let r = micro_prf(&s, &["Lives_In", "None"], &["None", "None"], "Lives_In").unwrap();
        assert_eq!((r.rows[0].precision, r.rows[0].recall, r.rows[0].f1), (0.0, 0.0, 0.0));
        let r = micro_prf(&s, &["Lives_In", "None"], &["Lives_In", "None"], "Lives_In").unwrap();
        assert_eq!((r.rows[0].precision, r.rows[0].recall, r.rows[0].f1), (1.0, 1.0, 1.0));
    }

    fn semeval_label() -> impl Strategy<Value = String> {
        proptest::sample::select(LabelSchema::semeval().labels)
    }

    fn swap_direction(l: &str, fam: &str) -> String {
        if family(l) != fam {
            return l.to_string();
        }
        if l.ends_with("(e1,e2)") {
            format!("{fam}(e2,e1)")
        } else {
            format!("{fam}(e1,e2)")
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in proptest::collection::vec((semeval_label(), semeval_label()), 1..30), rot in 0usize..30) {
            let (g, p): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let mut shuffled = pairs.clone();
            shuffled.rotate_left(rot % pairs.len());
            shuffled.reverse();
            let (g2, p2): (Vec<String>, Vec<String>) = shuffled.into_iter().unzip();
            let a = semeval_macro_f1(&g, &p).unwrap();
            let b = semeval_macro_f1(&g2, &p2).unwrap();
            prop_assert!((a.aggregate - b.aggregate).abs() < 1e-12);
        }

        #[test]
        fn direction_swap_symmetry(pairs in proptest::collection::vec((semeval_label(), semeval_label()), 1..30), f in 0usize..9) {
            let fam = SEMEVAL_FAMILIES[f];
            let (g, p): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let g2: Vec<String> = g.iter().map(|l| swap_direction(l, fam)).collect();
            let p2: Vec<String> = p.iter().map(|l| swap_direction(l, fam)).collect();
            let a = semeval_macro_f1(&g, &p).unwrap();
            let b = semeval_macro_f1(&g2, &p2).unwrap();
            prop_assert_eq!(a.rows, b.rows);
            prop_assert_eq!(a.aggregate, b.aggregate);
        }

        #[test]
        fn micro_f1_between_p_and_r(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
            let lab = |b: bool| if b { "Lives_In" } else { "None" };
            let g: Vec<&str> = pairs.iter().map(|(a, _)| lab(*a)).collect();
            let p: Vec<&str> = pairs.iter().map(|(_, b)| lab(*b)).collect();
            let r = micro_prf(&LabelSchema::bb3(), &g, &p, "Lives_In").unwrap();
            let row = &r.rows[0];
            if row.f1 > 0.0 {
                prop_assert!(row.f1 >= row.precision.min(row.recall) - 1e-15);
                prop_assert!(row.f1 <= row.precision.max(row.recall) + 1e-15);
            }
            prop_assert_eq!(r.confusion.iter().flatten().sum::<usize>(), pairs.len());
        }
    }
}
