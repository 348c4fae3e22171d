//! Classifier input assembly.
//!
//! Layout: `[raw (B)] [MDAE 1 (B)] .. [MDAE N (B)] [MDAE All (B)] [MSE 1 .. MSE N, MSE All]`,
//! with disabled blocks omitted.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datacube::HsiCube;
use crate::error::{HsiError, Result};
use crate::mdae::MdaeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub use_raw: bool,
    pub use_mdae_outputs: bool,
    pub use_mse: bool,
    /// Whether the all-class model contributes an MSE entry.
    #[serde(default = "default_true")]
    pub mse_include_all: bool,
    pub n_classes: usize,
}

fn default_true() -> bool {
    true
}

impl FeatureConfig {
    pub fn raw_only(n_classes: usize) -> Self {
        Self {
            use_raw: true,
            use_mdae_outputs: false,
            use_mse: false,
            mse_include_all: true,
            n_classes,
        }
    }

    pub fn full(n_classes: usize) -> Self {
        Self {
            use_mdae_outputs: true,
            use_mse: true,
            ..Self::raw_only(n_classes)
        }
    }

    pub fn needs_models(&self) -> bool {
        self.use_mdae_outputs || self.use_mse
    }

    fn n_mse(&self) -> usize {
        self.n_classes + usize::from(self.mse_include_all)
    }

    /// Feature dimensionality for `bands` input bands.
    pub fn dim(&self, bands: usize) -> usize {
        let models = self.n_classes + 1;
        bands * usize::from(self.use_raw)
            + models * bands * usize::from(self.use_mdae_outputs)
            + self.n_mse() * usize::from(self.use_mse)
    }

    fn validate(&self, models: &[MdaeModel], bands: usize) -> Result<()> {
        if !(self.use_raw || self.use_mdae_outputs || self.use_mse) {
            return Err(HsiError::InvalidConfig("every feature block is disabled".into()));
        }
        if self.needs_models() {
            let expected = self.n_classes + 1;
            if models.len() != expected {
                return Err(HsiError::ModelCountMismatch {
                    expected,
                    got: models.len(),
                });
            }
            if let Some(m) = models.iter().find(|m| m.bands() != bands) {
                return Err(HsiError::LengthMismatch {
                    expected: bands,
                    got: m.bands(),
                });
            }
        }
        Ok(())
    }
}

/// Feature vector of a single normalized spectrum.
pub fn assemble(x: &[f64], models: &[MdaeModel], config: &FeatureConfig) -> Result<Vec<f64>> {
    config.validate(models, x.len())?;
    let mut out = Vec::with_capacity(config.dim(x.len()));
    if config.use_raw {
        out.extend_from_slice(x);
    }
    if !config.needs_models() {
        return Ok(out);
    }
    let recon: Vec<Vec<f64>> = models.iter().map(|m| m.encode(x)).collect::<Result<_>>()?;
    if config.use_mdae_outputs {
        for r in &recon {
            out.extend_from_slice(r);
        }
    }
    if config.use_mse {
        for r in recon.iter().take(config.n_mse()) {
            out.push(crate::mdae::mse(x, r));
        }
    }
    Ok(out)
}

/// Column-wise [`assemble`] over a `B x k` spectra matrix.
pub fn assemble_spectra(
    spectra: &DMatrix<f64>,
    models: &[MdaeModel],
    config: &FeatureConfig,
) -> Result<DMatrix<f64>> {
    let (bands, k) = spectra.shape();
    config.validate(models, bands)?;
    let mut out = DMatrix::zeros(config.dim(bands), k);
    let mut row = 0;
    if config.use_raw {
        out.rows_mut(0, bands).copy_from(spectra);
        row = bands;
    }
    if !config.needs_models() || k == 0 {
        return Ok(out);
    }
    let recon: Vec<DMatrix<f64>> = models
        .par_iter()
        .map(|m| m.encode_batch(spectra))
        .collect::<Result<_>>()?;
    if config.use_mdae_outputs {
        for r in &recon {
            out.rows_mut(row, bands).copy_from(r);
            row += bands;
        }
    }
    if config.use_mse {
        for r in recon.iter().take(config.n_mse()) {
            for j in 0..k {
                let mut acc = 0.0;
                for b in 0..bands {
                    let d = spectra[(b, j)] - r[(b, j)];
                    acc += d * d;
                }
                out[(row, j)] = acc / bands as f64;
            }
            row += 1;
        }
    }
    Ok(out)
}

/// Feature matrix (`D x |pixels|`) for the given pixels of a normalized cube.
pub fn assemble_batch(
    pixels: &[usize],
    cube: &HsiCube,
    models: &[MdaeModel],
    config: &FeatureConfig,
) -> Result<DMatrix<f64>> {
    let spectra = cube.spectra(pixels)?;
    assemble_spectra(&spectra, models, config)
}

/// Random-access provider of feature columns, so training can assemble one
/// mini-batch at a time instead of materializing the whole design matrix.
pub trait FeatureSource: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn batch(&self, indices: &[usize]) -> Result<DMatrix<f64>>;
}

impl FeatureSource for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn len(&self) -> usize {
        self.ncols()
    }

    fn batch(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.ncols()) {
            return Err(HsiError::IndexOutOfRange {
                index: bad,
                len: self.ncols(),
            });
        }
        Ok(self.select_columns(indices))
    }
}

/// Features computed on demand from stored spectra.
pub struct SpectralFeatures<'a> {
    spectra: DMatrix<f64>,
    models: &'a [MdaeModel],
    config: FeatureConfig,
}

impl<'a> SpectralFeatures<'a> {
    pub fn new(spectra: DMatrix<f64>, models: &'a [MdaeModel], config: FeatureConfig) -> Result<Self> {
        config.validate(models, spectra.nrows())?;
        Ok(Self {
            spectra,
            models,
            config,
        })
    }
}

impl FeatureSource for SpectralFeatures<'_> {
    fn dim(&self) -> usize {
        self.config.dim(self.spectra.nrows())
    }

    fn len(&self) -> usize {
        self.spectra.ncols()
    }

    fn batch(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        let cols = FeatureSource::batch(&self.spectra, indices)?;
        assemble_spectra(&cols, self.models, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdae::MdaeParams;

    fn identity_models(n: usize, bands: usize) -> Vec<MdaeModel> {
        (1..=n as u16)
            .chain([0])
            .map(|c| {
                MdaeModel::from_weights(DMatrix::identity(bands + 1, bands + 1), c, MdaeParams::default(), 0.0)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn salinas_dimensions() {
        assert_eq!(FeatureConfig::raw_only(16).dim(204), 204);
        assert_eq!(FeatureConfig::full(16).dim(204), 3689);
    }

    #[test]
    fn raw_only_is_the_spectrum() {
        let x = [0.1, 0.5, 0.9, 0.2];
        let v = assemble(&x, &[], &FeatureConfig::raw_only(3)).unwrap();
        assert_eq!(v, x.to_vec());
    }

    #[test]
    fn identity_models_copy_input() {
        let x = [0.1, 0.5, 0.9, 0.2];
        let models = identity_models(2, 4);
        let v = assemble(&x, &models, &FeatureConfig::full(2)).unwrap();
        assert_eq!(v.len(), 4 + 3 * 4 + 3);
        for block in v[..16].chunks(4) {
            assert_eq!(block, &x);
        }
        assert!(v[16..].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn wrong_model_count() {
        let models = identity_models(2, 4);
        assert!(matches!(
            assemble(&[0.0; 4], &models, &FeatureConfig::full(3)),
            Err(HsiError::ModelCountMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn all_disabled_rejected() {
        let cfg = FeatureConfig {
            use_raw: false,
            ..FeatureConfig::raw_only(2)
        };
        assert!(assemble(&[0.0; 4], &[], &cfg).is_err());
    }

    #[test]
    fn mse_block_can_drop_all_model() {
        let cfg = FeatureConfig {
            mse_include_all: false,
            use_mdae_outputs: false,
            ..FeatureConfig::full(2)
        };
        assert_eq!(cfg.dim(4), 4 + 2);
        let v = assemble(&[0.3; 4], &identity_models(2, 4), &cfg).unwrap();
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn empty_batch() {
        let cube = HsiCube::new(2, 2, 4, vec![0.5; 16]).unwrap();
        let m = assemble_batch(&[], &cube, &identity_models(2, 4), &FeatureConfig::full(2)).unwrap();
        assert_eq!(m.shape(), (4 + 12 + 3, 0));
        assert!(matches!(
            assemble_batch(&[4], &cube, &[], &FeatureConfig::raw_only(2)),
            Err(HsiError::IndexOutOfRange { index: 4, len: 4 })
        ));
    }
}
