//! Set-based retrieval metrics.
//!
//! Conventions for empty sets: precision is 1 when both the prediction and
//! the truth are empty and 0 when only the prediction is empty; recall
//! mirrors this. IoU of two empty sets is 1. F1 is 0 when P + R = 0.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize, other_side: usize) -> f64 {
    match (den, other_side) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => num as f64 / den as f64,
    }
}

/// True-positive, predicted and true counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub predicted: usize,
    pub actual: usize,
}

impl Counts {
    pub fn of<T: Ord>(pred: &BTreeSet<T>, truth: &BTreeSet<T>) -> Self {
        Self {
            tp: pred.intersection(truth).count(),
            predicted: pred.len(),
            actual: truth.len(),
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.predicted += other.predicted;
        self.actual += other.actual;
    }

    pub fn metrics(&self) -> Metrics {
        let precision = ratio(self.tp, self.predicted, self.actual);
        let recall = ratio(self.tp, self.actual, self.predicted);
        let union = self.predicted + self.actual - self.tp;
        Metrics {
            precision,
            recall,
            f1: f1(precision, recall),
            iou: if union == 0 { 1.0 } else { self.tp as f64 / union as f64 },
        }
    }
}

pub fn set_metrics<T: Ord>(pred: &BTreeSet<T>, truth: &BTreeSet<T>) -> Metrics {
    Counts::of(pred, truth).metrics()
}

/// Accumulates both micro (pooled counts) and macro (mean of per-item
/// metrics) averages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    counts: Counts,
    sums: [f64; 4],
    items: usize,
}

impl Accumulator {
    pub fn add<T: Ord>(&mut self, pred: &BTreeSet<T>, truth: &BTreeSet<T>) {
        let c = Counts::of(pred, truth);
        let m = c.metrics();
        self.counts.add(c);
        for (s, v) in self.sums.iter_mut().zip([m.precision, m.recall, m.f1, m.iou]) {
            *s += v;
        }
        self.items += 1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.counts.add(other.counts);
        for (s, v) in self.sums.iter_mut().zip(other.sums) {
            *s += v;
        }
        self.items += other.items;
    }

    pub fn counts(&self) -> Counts {
        self.counts
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn micro(&self) -> Metrics {
        self.counts.metrics()
    }

    pub fn macro_avg(&self) -> Metrics {
        if self.items == 0 {
            return Counts::default().metrics();
        }
        let n = self.items as f64;
        Metrics {
            precision: self.sums[0] / n,
            recall: self.sums[1] / n,
            f1: self.sums[2] / n,
            iou: self.sums[3] / n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_arithmetic() {
        let m = set_metrics(&set(&["a", "b"]), &set(&["b", "c"]));
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        assert!((m.iou - 1.0 / 3.0).abs() < 1e-12);
        let m = set_metrics(&set(&["a"]), &set(&["a"]));
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_conventions() {
        let e = set(&[]);
        assert_eq!(set_metrics(&e, &e), Metrics { precision: 1.0, recall: 1.0, f1: 1.0, iou: 1.0 });
        let m = set_metrics(&e, &set(&["a"]));
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (0.0, 0.0, 0.0, 0.0));
        let m = set_metrics(&set(&["a"]), &e);
        assert_eq!((m.precision, m.recall, m.f1, m.iou), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn table_two_direct_row_is_consistent() {
        assert!((f1(0.947, 0.896) - 0.921).abs() <= 0.001);
    }

    proptest! {
        #[test]
        fn bounded(pairs in proptest::collection::vec((proptest::collection::btree_set(0u8..6, 0..5), proptest::collection::btree_set(0u8..6, 0..5)), 0..12)) {
            let mut acc = Accumulator::default();
            for (p, t) in &pairs {
                acc.add(p, t);
            }
            for m in [acc.micro(), acc.macro_avg()] {
                for v in [m.precision, m.recall, m.f1, m.iou] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert!(m.iou <= m.f1 + 1e-12);
            }
        }
    }
}
