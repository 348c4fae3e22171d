mod common;

use common::oracles::mse_bruteforce;
use hsi_core::features::{assemble, assemble_spectra, FeatureSource, SpectralFeatures};
use hsi_core::mdae::train_all;
use hsi_core::{FeatureConfig, MdaeModel, MdaeParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trained(bands: usize, n_classes: usize, n: usize) -> (DMatrix<f64>, Vec<MdaeModel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = DMatrix::from_fn(bands, n, |_, _| rng.random::<f64>());
    let labels: Vec<u16> = (0..n).map(|j| (j % n_classes) as u16 + 1).collect();
    let params = MdaeParams {
        n_noise_bands: bands.min(4),
        m_copies: 3,
        ..MdaeParams::default()
    };
    let models = train_all(&x, &labels, n_classes, &params).unwrap();
    (x, models)
}

#[test]
fn batch_columns_equal_single_assembly() {
    let (x, models) = trained(10, 3, 40);
    let config = FeatureConfig::full(3);
    let batch = assemble_spectra(&x, &models, &config).unwrap();
    assert_eq!(batch.nrows(), config.dim(10));
    for j in 0..x.ncols() {
        let single = assemble(x.column(j).as_slice(), &models, &config).unwrap();
        for (i, v) in single.iter().enumerate() {
            assert!((batch[(i, j)] - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn block_layout_raw_then_outputs_then_mse() {
    let (x, models) = trained(8, 2, 30);
    let config = FeatureConfig::full(2);
    let v = x.column(4).iter().copied().collect::<Vec<_>>();
    let f = assemble(&v, &models, &config).unwrap();
    assert_eq!(f.len(), 8 + 3 * 8 + 3);
    assert_eq!(&f[..8], v.as_slice());
    for (k, m) in models.iter().enumerate() {
        let y = m.encode(&v).unwrap();
        assert_eq!(&f[8 + 8 * k..16 + 8 * k], y.as_slice());
        assert!((f[32 + k] - mse_bruteforce(&v, &y)).abs() <= 1e-12);
        assert!((f[32 + k] - m.reconstruction_mse(&v).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn raw_only_is_identity() {
    let (x, _) = trained(6, 2, 10);
    let f = assemble_spectra(&x, &[], &FeatureConfig::raw_only(2)).unwrap();
    assert_eq!(f, x);
}

#[test]
fn salinas_sized_batch_shape() {
    let (_, models) = trained(204, 16, 16 * 220);
    let config = FeatureConfig::full(16);
    assert_eq!(config.dim(204), 3689);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spectra = DMatrix::from_fn(204, 512, |_, _| rng.random::<f64>());
    let source = SpectralFeatures::new(spectra, &models, config).unwrap();
    let idx: Vec<usize> = (0..256).map(|i| i * 2).collect();
    let batch = source.batch(&idx).unwrap();
    assert_eq!(batch.shape(), (3689, 256));
    assert!(batch.iter().all(|v| v.is_finite()));
}
