use serde::{Deserialize, Serialize};

use crate::error::{HsiError, Result};

/// `counts[i][j]` = test pixels of true class `i+1` predicted as class `j+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Producer's accuracy per class in percent; `None` for classes without
    /// test pixels.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| 100.0 * row[i] as f64 / n as f64)
            })
            .collect()
    }
}

/// Tallies predictions against truth at `test` pixel indices.
pub fn confusion_matrix(
    pred: &[u16],
    truth: &[u16],
    test: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for &p in test {
        let len = truth.len().min(pred.len());
        if p >= len {
            return Err(HsiError::IndexOutOfRange { index: p, len });
        }
        let (t, y) = (truth[p], pred[p]);
        for label in [t, y] {
            if label == 0 || label as usize > n_classes {
                return Err(HsiError::LabelOutOfRange { label, n_classes });
            }
        }
        counts[t as usize - 1][y as usize - 1] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// `100 * trace / total`.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(HsiError::EmptyTestSet);
    }
    Ok(100.0 * cm.trace() as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_diagonal() {
        let truth = [1u16, 2, 2, 3, 0, 3];
        let test = [0, 1, 2, 3, 5];
        let cm = confusion_matrix(&truth, &truth, &test, 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        assert_eq!(overall_accuracy(&cm).unwrap(), 100.0);
    }

    #[test]
    fn all_class_one() {
        let truth = [1u16, 2, 3, 2];
        let cm = confusion_matrix(&[1; 4], &truth, &[0, 1, 2, 3], 3).unwrap();
        assert_eq!(cm.counts.iter().map(|r| r[0]).sum::<u64>(), 4);
        assert_eq!(cm.row_sums(), vec![1, 2, 1]);
    }

    #[test]
    fn oa_arithmetic() {
        let cm = ConfusionMatrix {
            counts: vec![vec![3, 1], vec![1, 3]],
        };
        assert_eq!(overall_accuracy(&cm).unwrap(), 75.0);
        assert_eq!(cm.per_class_accuracy(), vec![Some(75.0), Some(75.0)]);
    }

    #[test]
    fn empty_and_invalid() {
        let cm = confusion_matrix(&[1], &[1], &[], 2).unwrap();
        assert!(matches!(overall_accuracy(&cm), Err(HsiError::EmptyTestSet)));
        assert!(matches!(
            confusion_matrix(&[1], &[0], &[0], 2),
            Err(HsiError::LabelOutOfRange { label: 0, .. })
        ));
    }
}
