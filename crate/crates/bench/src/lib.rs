//! Seeded inputs shared by the benchmarks.

use hsi_core::mdae::train_all;
use hsi_core::{Mask, MdaeModel, MdaeParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Salinas band count after water-band removal.
pub const BANDS: usize = 204;
pub const CLASSES: usize = 16;

pub fn spectra(bands: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(bands, n, |_, _| rng.random::<f64>())
}

/// Random mask with the given foreground density.
pub fn mask(rows: usize, cols: usize, density: f64, seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_bool(density)).collect();
    Mask::new(rows, cols, data).expect("mask dimensions")
}

/// `CLASSES + 1` cheaply trained models over random spectra.
pub fn models(bands: usize, seed: u64) -> Vec<MdaeModel> {
    let n = CLASSES * 40;
    let x = spectra(bands, n, seed);
    let labels: Vec<u16> = (0..n).map(|j| (j % CLASSES) as u16 + 1).collect();
    let params = MdaeParams {
        m_copies: 2,
        ..MdaeParams::default()
    };
    train_all(&x, &labels, CLASSES, &params).expect("model training")
}
