//! Classification metrics over the two relationship classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Label;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold instances of the class.
    pub support: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub positive: ClassScores,
    pub negative: ClassScores,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_scores(pred: &[Label], gold: &[Label], class: Label) -> ClassScores {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p == class && **g == class).count();
    let predicted = pred.iter().filter(|p| **p == class).count();
    let support = gold.iter().filter(|g| **g == class).count();
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, support);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores {
        precision,
        recall,
        f1,
        support,
    }
}

/// Per-class and macro-averaged scores; undefined ratios count as 0.
pub fn evaluate(pred: &[Label], gold: &[Label]) -> Result<Metrics> {
    if pred.len() != gold.len() {
        return Err(Error::dim("predictions", gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let positive = class_scores(pred, gold, Label::Pos);
    let negative = class_scores(pred, gold, Label::Neg);
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(Metrics {
        positive,
        negative,
        macro_precision: (positive.precision + negative.precision) / 2.0,
        macro_recall: (positive.recall + negative.recall) / 2.0,
        macro_f1: (positive.f1 + negative.f1) / 2.0,
        accuracy: ratio(correct, gold.len()),
        total: gold.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(signs: &[i32]) -> Vec<Label> {
        signs.iter().map(|&s| if s > 0 { Label::Pos } else { Label::Neg }).collect()
    }

    #[test]
    fn perfect_predictor() {
        let g = labels(&[1, -1, 1, 1]);
        let m = evaluate(&g, &g).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn majority_predictor() {
        let mut gold = vec![Label::Pos; 52];
        gold.extend(vec![Label::Neg; 48]);
        let m = evaluate(&[Label::Pos; 100], &gold).unwrap();
        assert!((m.accuracy - 0.520).abs() < 1e-12);
        assert_eq!(m.negative.precision, 0.0);
        assert_eq!(m.negative.f1, 0.0);
        assert_eq!(m.positive.recall, 1.0);
        assert_eq!((m.positive.support, m.negative.support), (52, 48));
    }

    #[test]
    fn hand_computed_confusion() {
        let m = evaluate(&labels(&[1, 1, -1, -1]), &labels(&[1, -1, 1, -1])).unwrap();
        assert_eq!(m.accuracy, 0.5);
        for c in [m.positive, m.negative] {
            assert_eq!((c.precision, c.recall, c.f1), (0.5, 0.5, 0.5));
        }
        assert_eq!((m.macro_precision, m.macro_recall, m.macro_f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn input_errors() {
        assert!(evaluate(&labels(&[1]), &labels(&[1, 1])).is_err());
        assert!(evaluate(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let pred: Vec<Label> = pairs.iter().map(|p| if p.0 { Label::Pos } else { Label::Neg }).collect();
            let gold: Vec<Label> = pairs.iter().map(|p| if p.1 { Label::Pos } else { Label::Neg }).collect();
            let m = evaluate(&pred, &gold).unwrap();
            for v in [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1,
                      m.positive.precision, m.positive.recall, m.positive.f1,
                      m.negative.precision, m.negative.recall, m.negative.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let correct = pairs.iter().filter(|p| p.0 == p.1).count();
            prop_assert_eq!(m.accuracy, correct as f64 / pairs.len() as f64);
            prop_assert_eq!(m.positive.support + m.negative.support, pairs.len());
        }
    }
}
