use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[predicted][true]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(truth: &[u32], predicted: &[u32], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::domain(format!(
            "{} truths vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t as usize >= n_classes || p as usize >= n_classes {
            return Err(Error::domain(format!(
                "label out of range: true {t}, predicted {p}, {n_classes} classes"
            )));
        }
        counts[p as usize][t as usize] += 1;
    }
    Ok(ConfusionMatrix {
        labels: (0..n_classes).map(|c| c.to_string()).collect(),
        counts,
    })
}

/// Fraction on the diagonal; 0 for an empty matrix.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    (0..cm.n_classes()).map(|i| cm.counts[i][i]).sum::<u64>() as f64 / total as f64
}

impl ConfusionMatrix {
    /// Build from raw counts, e.g. a published table.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::domain("confusion counts must be square"));
        }
        Ok(Self {
            labels: (0..n).map(|c| c.to_string()).collect(),
            counts,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_classes() {
            return Err(Error::domain(format!(
                "{} labels for {} classes",
                labels.len(),
                self.n_classes()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Instances whose true class is `j`.
    pub fn true_count(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Per-class recall: correct predictions over the true count of each
    /// class. A class that never occurs gets 0.
    pub fn class_rates(&self) -> Vec<f64> {
        (0..self.n_classes())
            .map(|j| match self.true_count(j) {
                0 => 0.0,
                n => self.counts[j][j] as f64 / n as f64,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_is_diagonal() {
        let cm = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert_eq!(accuracy(&cm), 1.0);
    }

    #[test]
    fn two_of_three() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((accuracy(&cm) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.counts[1][0], 1);
    }

    #[test]
    fn falling_table_rates() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1246, 68], vec![16, 1189]]).unwrap();
        let r = cm.class_rates();
        assert_eq!((r[0] * 10000.0).round() / 100.0, 98.73);
        assert_eq!((r[1] * 10000.0).round() / 100.0, 94.59);
    }

    #[test]
    fn out_of_range() {
        assert!(confusion(&[3], &[0], 3).is_err());
        assert!(confusion(&[0], &[0, 1], 3).is_err());
        assert_eq!(accuracy(&confusion(&[], &[], 2).unwrap()), 0.0);
    }

    proptest! {
        #[test]
        fn totals_conserved(pairs in proptest::collection::vec((0u32..4, 0u32..4), 0..200)) {
            let (t, p): (Vec<u32>, Vec<u32>) = pairs.iter().copied().unzip();
            let cm = confusion(&t, &p, 4).unwrap();
            prop_assert_eq!(cm.total(), t.len() as u64);
            for j in 0..4 {
                prop_assert_eq!(cm.true_count(j), t.iter().filter(|&&c| c == j as u32).count() as u64);
            }
            let a = accuracy(&cm);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
