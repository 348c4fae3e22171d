use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabelMap;
use crate::error::{HsiError, Result};

const MIN_CLASS_PIXELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.1,
            val: 0.1,
            test: 0.8,
        }
    }
}

impl SplitFractions {
    /// Fractions reproducing explicit per-set pixel totals; the test set takes
    /// whatever remains after train and val.
    pub fn from_counts(train: usize, val: usize, labeled_total: usize) -> Result<Self> {
        if labeled_total == 0 || train + val > labeled_total {
            return Err(HsiError::InvalidConfig(format!(
                "split counts {train}+{val} exceed {labeled_total} labeled pixels"
            )));
        }
        let t = labeled_total as f64;
        let train = train as f64 / t;
        let val = val as f64 / t;
        Ok(Self {
            train,
            val,
            test: 1.0 - train - val,
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.train, self.val, self.test]
            .iter()
            .all(|f| (0.0..=1.0).contains(f));
        if !ok || (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(HsiError::InvalidConfig(format!(
                "split fractions {self:?} must lie in [0,1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Disjoint train/val/test pixel index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn round_half_up(x: f64) -> usize {
    // tolerance absorbs products such as 0.1 * 1005 = 100.49999...
    (x + 0.5 + 1e-9).floor() as usize
}

/// Per-class shuffled split of the labeled pixels. Train count per class is
/// `round(train_frac * size)`, val likewise from what remains, test takes the rest.
pub fn stratified_split(
    labels: &LabelMap,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment> {
    fractions.validate()?;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); labels.n_classes() + 1];
    for p in labels.labeled_pixels() {
        per_class[labels.get(p) as usize].push(p);
    }
    for (class, members) in per_class.iter().enumerate().skip(1) {
        if !members.is_empty() && members.len() < MIN_CLASS_PIXELS {
            return Err(HsiError::ClassTooSmall {
                class: class as u16,
                count: members.len(),
                min: MIN_CLASS_PIXELS,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for members in per_class.iter_mut().skip(1) {
        let size = members.len();
        members.shuffle(&mut rng);
        let n_train = round_half_up(fractions.train * size as f64).min(size);
        let n_val = round_half_up(fractions.val * size as f64).min(size - n_train);
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment {
        seed,
        fractions,
        train,
        val,
        test,
    })
}
