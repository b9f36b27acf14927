//! Segmentation metrics: pixel accuracy and mean intersection-over-union.

use crate::error::{Error, Result};

/// Streaming confusion counts for accuracy and IoU over any number of
/// prediction/mask pairs.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    num_classes: usize,
    correct: u64,
    total: u64,
    intersection: Vec<u64>,
    union: Vec<u64>,
    in_ground_truth: Vec<bool>,
}

impl MetricAccumulator {
    pub fn new(num_classes: usize) -> MetricAccumulator {
        MetricAccumulator {
            num_classes,
            correct: 0,
            total: 0,
            intersection: vec![0; num_classes],
            union: vec![0; num_classes],
            in_ground_truth: vec![false; num_classes],
        }
    }

    pub fn update(&mut self, pred: &[u8], mask: &[u8]) -> Result<()> {
        if pred.len() != mask.len() {
            return Err(Error::shape(format!(
                "prediction has {} pixels, mask {}",
                pred.len(),
                mask.len()
            )));
        }
        for (&p, &m) in pred.iter().zip(mask) {
            let (p, m) = (p as usize, m as usize);
            if p >= self.num_classes || m >= self.num_classes {
                return Err(Error::shape(format!(
                    "label {} outside {} classes",
                    p.max(m),
                    self.num_classes
                )));
            }
            self.total += 1;
            self.in_ground_truth[m] = true;
            if p == m {
                self.correct += 1;
                self.intersection[p] += 1;
                self.union[p] += 1;
            } else {
                self.union[p] += 1;
                self.union[m] += 1;
            }
        }
        Ok(())
    }

    /// Fraction of pixels labeled correctly.
    pub fn pixel_accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.correct as f64 / self.total as f64
    }

    /// Mean IoU over the classes that appear in the ground truth; classes
    /// only ever predicted (never labeled) are ignored.
    pub fn mean_iou(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in 0..self.num_classes {
            if !self.in_ground_truth[c] {
                continue;
            }
            sum += self.intersection[c] as f64 / self.union[c] as f64;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// One-shot mean IoU for a single prediction/mask pair.
pub fn mean_iou(pred: &[u8], mask: &[u8], num_classes: usize) -> Result<f64> {
    let mut acc = MetricAccumulator::new(num_classes);
    acc.update(pred, mask)?;
    Ok(acc.mean_iou())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_two_by_two_example() {
        // pred [[0,0],[1,1]] vs mask [[0,1],[1,1]]:
        // class 0: inter 1, union 2 -> 1/2; class 1: inter 2, union 3 -> 2/3.
        let pred = [0, 0, 1, 1];
        let mask = [0, 1, 1, 1];
        let got = mean_iou(&pred, &mask, 2).unwrap();
        assert!((got - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_are_ignored_and_bounds_hold() {
        let mut acc = MetricAccumulator::new(5);
        // Class 4 never appears in the mask; class 3 is predicted wrongly.
        acc.update(&[0, 3, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((acc.pixel_accuracy() - 0.75).abs() < 1e-15);
        // IoU: class 0 -> 1/1, class 1 -> 2/3; classes 2..4 ignored.
        assert!((acc.mean_iou() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!(acc.pixel_accuracy() >= 0.0 && acc.pixel_accuracy() <= 1.0);
        assert!(acc.mean_iou() >= 0.0 && acc.mean_iou() <= 1.0);
    }

    #[test]
    fn accumulation_matches_concatenation() {
        let mut split = MetricAccumulator::new(3);
        split.update(&[0, 1], &[0, 2]).unwrap();
        split.update(&[2, 2], &[2, 1]).unwrap();
        let mut joint = MetricAccumulator::new(3);
        joint.update(&[0, 1, 2, 2], &[0, 2, 2, 1]).unwrap();
        assert_eq!(split.pixel_accuracy(), joint.pixel_accuracy());
        assert_eq!(split.mean_iou(), joint.mean_iou());
    }

    #[test]
    fn rejects_bad_labels_and_lengths() {
        let mut acc = MetricAccumulator::new(2);
        assert!(acc.update(&[0, 1], &[0]).is_err());
        assert!(acc.update(&[0, 2], &[0, 1]).is_err());
    }
}
