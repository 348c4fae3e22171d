//! Hyperspectral cube and label data model.
//!
//! Cubes are stored band-sequential: all of band 0 in row-major pixel order,
//! then band 1, and so on. Pixel indices are always row-major `row * cols + col`.

mod io;
mod split;
mod synth;

pub use io::{load_cube, load_dataset, save_dataset, DatasetMeta};
pub use split::{stratified_split, SplitAssignment, SplitFractions};
pub use synth::{synth_scene, SceneSpec};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HsiError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f32>,
    band_names: Option<Vec<String>>,
}

impl HsiCube {
    /// Builds a cube from band-sequential data, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(HsiError::DimensionMismatch(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        let expected = rows * cols * bands;
        if data.len() != expected {
            return Err(HsiError::DimensionMismatch(format!(
                "{rows}x{cols}x{bands} cube needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(HsiError::NonFiniteValue(i));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
            band_names: None,
        })
    }

    pub fn with_band_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.bands {
            return Err(HsiError::DimensionMismatch(format!(
                "{} band names for {} bands",
                names.len(),
                self.bands
            )));
        }
        self.band_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn band_names(&self) -> Option<&[String]> {
        self.band_names.as_deref()
    }

    /// Raw band-sequential buffer.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn value(&self, pixel: usize, band: usize) -> f32 {
        self.data[band * self.n_pixels() + pixel]
    }

    pub fn spectrum(&self, pixel: usize) -> Vec<f64> {
        let plane = self.n_pixels();
        (0..self.bands)
            .map(|b| self.data[b * plane + pixel] as f64)
            .collect()
    }

    /// Gathers the spectra of `pixels` as the columns of a `bands x n` matrix.
    pub fn spectra(&self, pixels: &[usize]) -> Result<DMatrix<f64>> {
        let plane = self.n_pixels();
        if let Some(&bad) = pixels.iter().find(|&&p| p >= plane) {
            return Err(HsiError::IndexOutOfRange {
                index: bad,
                len: plane,
            });
        }
        Ok(DMatrix::from_fn(self.bands, pixels.len(), |b, j| {
            self.data[b * plane + pixels[j]] as f64
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    labels: Vec<u16>,
    n_classes: usize,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>, n_classes: usize) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(HsiError::DimensionMismatch(format!(
                "{rows}x{cols} label map needs {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > n_classes) {
            return Err(HsiError::LabelOutOfRange {
                label: bad,
                n_classes,
            });
        }
        Ok(Self {
            rows,
            cols,
            labels,
            n_classes,
        })
    }

    /// Like [`LabelMap::new`] with `n_classes` taken as the maximum label present.
    pub fn from_labels(rows: usize, cols: usize, labels: Vec<u16>) -> Result<Self> {
        let n_classes = labels.iter().copied().max().unwrap_or(0) as usize;
        Self::new(rows, cols, labels, n_classes)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, pixel: usize) -> u16 {
        self.labels[pixel]
    }

    pub fn labeled_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(|(i, _)| i)
    }

    /// Count of pixels per label; index 0 counts unlabeled pixels.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.n_classes + 1];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Global max-scaling statistics. Never apply twice to the same cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub scale: f64,
}

/// Scale = max absolute value over the training pixels' spectra, or 1 when
/// that maximum is zero.
pub fn fit_normalizer(cube: &HsiCube, train_indices: &[usize]) -> Result<NormStats> {
    if train_indices.is_empty() {
        return Err(HsiError::EmptyIndexSet);
    }
    let plane = cube.n_pixels();
    let mut max = 0.0f64;
    for &p in train_indices {
        if p >= plane {
            return Err(HsiError::IndexOutOfRange {
                index: p,
                len: plane,
            });
        }
        for b in 0..cube.bands {
            max = max.max((cube.data[b * plane + p] as f64).abs());
        }
    }
    Ok(NormStats {
        scale: if max > 0.0 { max } else { 1.0 },
    })
}

/// Divides every value by `stats.scale` and clamps into [0, 1].
pub fn apply_normalizer(cube: &HsiCube, stats: NormStats) -> HsiCube {
    let scale = stats.scale;
    let data = cube
        .data
        .iter()
        .map(|&v| ((v as f64) / scale).clamp(0.0, 1.0) as f32)
        .collect();
    HsiCube {
        rows: cube.rows,
        cols: cube.cols,
        bands: cube.bands,
        data,
        band_names: cube.band_names.clone(),
    }
}
