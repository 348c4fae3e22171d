//! Mixed-pixel training augmentation.
//!
//! For every class a fraction of its training spectra is paired one-to-one with
//! spectra drawn from the pooled remaining classes, and each pair is mixed at
//! every ratio on the grid `{k * ratio_step : min_abundance < k * ratio_step < 1}`,
//! always keeping the class as the majority component.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HsiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixParams {
    pub select_frac: f64,
    pub ratio_step: f64,
    /// Strict lower bound on the majority abundance.
    pub min_abundance: f64,
    pub seed: u64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            select_frac: 0.25,
            ratio_step: 0.1,
            min_abundance: 0.55,
            seed: 0,
        }
    }
}

impl MixParams {
    /// The realized set of majority abundances, ascending.
    pub fn ratios(&self) -> Vec<f64> {
        let inv = 1.0 / self.ratio_step;
        // divide by an integral step count when possible so 0.6 is the double nearest 0.6
        let exact_grid = (inv - inv.round()).abs() < 1e-9;
        let at = |k: usize| {
            if exact_grid {
                k as f64 / inv.round()
            } else {
                k as f64 * self.ratio_step
            }
        };
        (1..)
            .map(at)
            .take_while(|&a| a < 1.0 - 1e-12)
            .filter(|&a| a > self.min_abundance + 1e-12)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.select_frac > 0.0 && self.select_frac <= 1.0) {
            return Err(HsiError::InvalidConfig(format!(
                "select_frac {} outside (0, 1]",
                self.select_frac
            )));
        }
        if !(self.min_abundance > 0.5 && self.min_abundance < 1.0) {
            return Err(HsiError::InvalidConfig(format!(
                "min_abundance {} outside (0.5, 1)",
                self.min_abundance
            )));
        }
        if self.ratio_step.is_nan() || self.ratio_step <= 0.0 || self.ratios().is_empty() {
            return Err(HsiError::InvalidConfig(format!(
                "ratio_step {} yields no admissible mixing ratio",
                self.ratio_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub spectrum: Vec<f64>,
    pub label: u16,
    pub alpha: f64,
    /// Column of the majority component in the training matrix.
    pub source_a: usize,
    /// Column of the minority component.
    pub source_b: usize,
}

/// Elementwise `alpha * a + (1 - alpha) * b` for `alpha` in (0.5, 1), evaluated
/// as `b + alpha * (a - b)` so equal inputs mix to themselves exactly.
pub fn mix_pair(a: &[f64], b: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(HsiError::AlphaOutOfRange(alpha));
    }
    if a.len() != b.len() {
        return Err(HsiError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| y + alpha * (x - y))
        .collect())
}

/// Number of spectra selected from a class of `size` training pixels.
pub fn selection_count(select_frac: f64, size: usize) -> usize {
    ((select_frac * size as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Builds the augmented set from the columns of `train_spectra` (`B x n`).
/// Output is ordered by class, then pair, then ascending ratio.
pub fn build_augmented_set(
    train_spectra: &DMatrix<f64>,
    train_labels: &[u16],
    params: &MixParams,
) -> Result<Vec<AugmentedSample>> {
    params.validate()?;
    if train_spectra.ncols() != train_labels.len() {
        return Err(HsiError::LengthMismatch {
            expected: train_spectra.ncols(),
            got: train_labels.len(),
        });
    }
    let mut classes: Vec<u16> = train_labels.iter().copied().filter(|&l| l > 0).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(HsiError::SingleClassTrainingSet);
    }

    let ratios = params.ratios();
    let column = |j: usize| -> Vec<f64> { train_spectra.column(j).iter().copied().collect() };
    let mut out = Vec::new();
    for &class in &classes {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(class as u64));
        let mut members: Vec<usize> = (0..train_labels.len())
            .filter(|&j| train_labels[j] == class)
            .collect();
        let others: Vec<usize> = (0..train_labels.len())
            .filter(|&j| train_labels[j] != class && train_labels[j] > 0)
            .collect();
        let count = selection_count(params.select_frac, members.len());

        members.shuffle(&mut rng);
        let majority = &members[..count];
        let mut minority = Vec::with_capacity(count);
        while minority.len() < count {
            let mut pool = others.clone();
            pool.shuffle(&mut rng);
            let take = (count - minority.len()).min(pool.len());
            minority.extend_from_slice(&pool[..take]);
        }

        for (&a, &b) in majority.iter().zip(&minority) {
            let (sa, sb) = (column(a), column(b));
            for &alpha in &ratios {
                out.push(AugmentedSample {
                    spectrum: mix_pair(&sa, &sb, alpha)?,
                    label: class,
                    alpha,
                    source_a: a,
                    source_b: b,
                });
            }
        }
    }
    Ok(out)
}

/// Writes `class,source_a,source_b,alpha` rows. When `pixel_ids` is given,
/// training-matrix columns are translated to image pixel indices.
pub fn write_audit_csv<W: Write>(
    mut w: W,
    samples: &[AugmentedSample],
    pixel_ids: Option<&[usize]>,
) -> Result<()> {
    let map = |j: usize| pixel_ids.map_or(j, |ids| ids[j]);
    writeln!(w, "class,source_a,source_b,alpha")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{}",
            s.label,
            map(s.source_a),
            map(s.source_b),
            s.alpha
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ratio_grid() {
        assert_eq!(MixParams::default().ratios(), vec![0.6, 0.7, 0.8, 0.9]);
    }

    #[test]
    fn mix_arithmetic() {
        let m = mix_pair(&[1.0, 0.0], &[0.0, 1.0], 0.6).unwrap();
        assert!((m[0] - 0.6).abs() < 1e-15 && (m[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mixing_equal_spectra_is_identity() {
        let a = [0.3, 0.9, 0.0];
        for alpha in [0.51, 0.6, 0.75, 0.99] {
            assert_eq!(mix_pair(&a, &a, alpha).unwrap(), a.to_vec());
        }
    }

    #[test]
    fn near_one_limit() {
        let (a, b) = ([0.2, 0.8], [0.9, 0.1]);
        let eps = 1e-7;
        let m = mix_pair(&a, &b, 1.0 - eps).unwrap();
        for i in 0..2 {
            assert!((m[i] - a[i]).abs() <= eps * 0.7 + 1e-15);
        }
    }

    #[test]
    fn alpha_out_of_range() {
        for alpha in [0.5, 1.0, 0.2, f64::NAN] {
            assert!(matches!(
                mix_pair(&[0.0], &[1.0], alpha),
                Err(HsiError::AlphaOutOfRange(_))
            ));
        }
    }

    #[test]
    fn two_classes_of_eight() {
        let spectra = DMatrix::from_fn(3, 16, |i, j| (i + j) as f64 / 20.0);
        let labels: Vec<u16> = (0..16).map(|j| if j < 8 { 1 } else { 2 }).collect();
        let out = build_augmented_set(&spectra, &labels, &MixParams::default()).unwrap();
        assert_eq!(out.len(), 16);
        assert!(out[..8].iter().all(|s| s.label == 1));
        assert!(out[8..].iter().all(|s| s.label == 2));
        for s in &out {
            assert!(s.alpha > 0.55);
            assert_eq!(labels[s.source_a], s.label);
            assert_ne!(labels[s.source_b], s.label);
        }
    }

    #[test]
    fn single_class_rejected() {
        let spectra = DMatrix::zeros(3, 4);
        assert!(matches!(
            build_augmented_set(&spectra, &[2; 4], &MixParams::default()),
            Err(HsiError::SingleClassTrainingSet)
        ));
    }

    #[test]
    fn small_complement_pool_is_reused() {
        // class 1 selects 3, only 1 spectrum elsewhere
        let spectra = DMatrix::from_fn(2, 11, |_, j| j as f64 / 10.0);
        let mut labels = vec![1u16; 10];
        labels.push(2);
        let out = build_augmented_set(&spectra, &labels, &MixParams::default()).unwrap();
        let class1: Vec<_> = out.iter().filter(|s| s.label == 1).collect();
        assert_eq!(class1.len(), 3 * 4);
        assert!(class1.iter().all(|s| s.source_b == 10));
    }

    #[test]
    fn audit_csv_maps_pixels() {
        let s = AugmentedSample {
            spectrum: vec![],
            label: 3,
            alpha: 0.7,
            source_a: 0,
            source_b: 1,
        };
        let mut buf = Vec::new();
        write_audit_csv(&mut buf, &[s], Some(&[40, 77])).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "class,source_a,source_b,alpha\n3,40,77,0.7\n"
        );
    }
}
