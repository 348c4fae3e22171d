//! Synthetic linear-mixing scenes for self-contained testing.
//!
//! The image is tiled by a grid of rectangular blocks, each carrying a class
//! id (0 marks unlabeled background). Interior pixels take their class
//! endmember plus Gaussian noise. A pixel `k` steps from a boundary with a
//! different-class block, `k < mix_width`, is the linear mixture
//! `alpha * own + (1 - alpha) * neighbour` with `alpha = 0.5 + 0.5 * k / mix_width`,
//! and keeps its own (majority) label.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HsiCube, LabelMap};
use crate::error::{HsiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub n_classes: usize,
    /// Block layout, `grid[i][j]` is the class of block row `i`, column `j`.
    pub grid: Vec<Vec<u16>>,
    /// One spectrum per class; generated from the seed when absent.
    #[serde(default)]
    pub endmembers: Option<Vec<Vec<f64>>>,
    /// Spectrum of class-0 blocks; defaults to the mean endmember.
    #[serde(default)]
    pub background: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub mix_width: usize,
}

impl SceneSpec {
    /// Square scene with an `n x n` checkerboard-like layout cycling through
    /// the classes.
    pub fn tiled(size: usize, bands: usize, n_classes: usize, blocks: usize) -> Self {
        let grid = (0..blocks)
            .map(|i| {
                (0..blocks)
                    .map(|j| ((i * blocks + j + i) % n_classes) as u16 + 1)
                    .collect()
            })
            .collect();
        Self {
            rows: size,
            cols: size,
            bands,
            n_classes,
            grid,
            endmembers: None,
            background: None,
            noise_sigma: 0.0,
            mix_width: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HsiError::InvalidSpec(m));
        if self.n_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.bands < 4 {
            return fail(format!("need at least 4 bands, got {}", self.bands));
        }
        let grid_rows = self.grid.len();
        let grid_cols = self.grid.first().map_or(0, Vec::len);
        if grid_rows == 0 || grid_cols == 0 {
            return fail("empty grid".into());
        }
        if self.grid.iter().any(|r| r.len() != grid_cols) {
            return fail("grid rows have unequal lengths".into());
        }
        if grid_rows > self.rows || grid_cols > self.cols {
            return fail("grid has more blocks than pixels".into());
        }
        if self
            .grid
            .iter()
            .flatten()
            .any(|&c| c as usize > self.n_classes)
        {
            return fail("grid class id exceeds n_classes".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        if let Some(e) = &self.endmembers {
            if e.len() != self.n_classes || e.iter().any(|s| s.len() != self.bands) {
                return fail("endmembers must be n_classes spectra of length bands".into());
            }
        }
        if let Some(bg) = &self.background {
            if bg.len() != self.bands {
                return fail("background spectrum length must equal bands".into());
            }
        }
        Ok(())
    }
}

/// Smooth random spectra in roughly [0.1, 0.9].
fn random_endmembers(n: usize, bands: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let f1 = rng.random_range(0.5..3.0);
            let f2 = rng.random_range(0.5..3.0);
            let p1 = rng.random_range(0.0..2.0 * PI);
            let p2 = rng.random_range(0.0..2.0 * PI);
            let offset = rng.random_range(0.35..0.65);
            (0..bands)
                .map(|b| {
                    let t = b as f64 / bands as f64;
                    offset
                        + 0.15 * (2.0 * PI * f1 * t + p1).sin()
                        + 0.1 * (2.0 * PI * f2 * t + p2).sin()
                })
                .collect()
        })
        .collect()
}

/// Start offset of block `i` when `n` pixels are cut into `blocks` pieces.
fn block_start(i: usize, n: usize, blocks: usize) -> usize {
    i * n / blocks
}

pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<(HsiCube, LabelMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let endmembers = match &spec.endmembers {
        Some(e) => e.clone(),
        None => random_endmembers(spec.n_classes, spec.bands, &mut rng),
    };
    let background = spec.background.clone().unwrap_or_else(|| {
        (0..spec.bands)
            .map(|b| endmembers.iter().map(|e| e[b]).sum::<f64>() / spec.n_classes as f64)
            .collect()
    });
    let spectrum_of = |class: u16| -> &[f64] {
        if class == 0 {
            &background
        } else {
            &endmembers[class as usize - 1]
        }
    };

    let (rows, cols, bands) = (spec.rows, spec.cols, spec.bands);
    let grid_rows = spec.grid.len();
    let grid_cols = spec.grid[0].len();
    let row_block: Vec<usize> = (0..rows).map(|r| r * grid_rows / rows).collect();
    let col_block: Vec<usize> = (0..cols).map(|c| c * grid_cols / cols).collect();

    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| HsiError::InvalidSpec(e.to_string()))?;
    let plane = rows * cols;
    let mut data = vec![0f32; plane * bands];
    let mut labels = vec![0u16; plane];

    for (r, &bi) in row_block.iter().enumerate() {
        for (c, &bj) in col_block.iter().enumerate() {
            let own = spec.grid[bi][bj];
            // steps to each block edge and the class across it
            let top = r - block_start(bi, rows, grid_rows);
            let bottom = block_start(bi + 1, rows, grid_rows) - 1 - r;
            let left = c - block_start(bj, cols, grid_cols);
            let right = block_start(bj + 1, cols, grid_cols) - 1 - c;
            let candidates = [
                (bi > 0).then(|| (top, spec.grid[bi - 1][bj])),
                (bi + 1 < grid_rows).then(|| (bottom, spec.grid[bi + 1][bj])),
                (bj > 0).then(|| (left, spec.grid[bi][bj - 1])),
                (bj + 1 < grid_cols).then(|| (right, spec.grid[bi][bj + 1])),
            ];
            let neighbour = candidates
                .into_iter()
                .flatten()
                .filter(|&(k, other)| other != own && k < spec.mix_width)
                .min_by_key(|&(k, _)| k);

            let p = r * cols + c;
            labels[p] = own;
            let a = spectrum_of(own);
            for b in 0..bands {
                let mut v = match neighbour {
                    Some((k, other)) => {
                        let alpha = 0.5 + 0.5 * k as f64 / spec.mix_width as f64;
                        alpha * a[b] + (1.0 - alpha) * spectrum_of(other)[b]
                    }
                    None => a[b],
                };
                if spec.noise_sigma > 0.0 {
                    v += normal.sample(&mut rng);
                }
                data[b * plane + p] = v as f32;
            }
        }
    }

    let cube = HsiCube::new(rows, cols, bands, data)?;
    let labels = LabelMap::new(rows, cols, labels, spec.n_classes)?;
    Ok((cube, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(mix_width: usize, sigma: f64) -> SceneSpec {
        SceneSpec {
            rows: 8,
            cols: 8,
            bands: 4,
            n_classes: 2,
            grid: vec![vec![1, 2]],
            endmembers: Some(vec![vec![0.2, 0.4, 0.6, 0.8], vec![0.9, 0.7, 0.5, 0.3]]),
            background: None,
            noise_sigma: sigma,
            mix_width,
        }
    }

    #[test]
    fn noiseless_unmixed_pixels_equal_endmembers() {
        let spec = two_class(0, 0.0);
        let (cube, labels) = synth_scene(&spec, 3).unwrap();
        let e = spec.endmembers.as_ref().unwrap();
        for p in 0..cube.n_pixels() {
            let want: Vec<f64> = e[labels.get(p) as usize - 1]
                .iter()
                .map(|&v| v as f32 as f64)
                .collect();
            assert_eq!(cube.spectrum(p), want);
        }
    }

    #[test]
    fn boundary_pixel_is_even_mixture() {
        let spec = two_class(2, 0.0);
        let (cube, labels) = synth_scene(&spec, 3).unwrap();
        let e = spec.endmembers.as_ref().unwrap();
        // column 3 is the last class-1 column, adjacent to class 2
        let p = 3;
        assert_eq!(labels.get(p), 1);
        for (b, v) in cube.spectrum(p).into_iter().enumerate() {
            let want = (0.5 * e[0][b] + 0.5 * e[1][b]) as f32 as f64;
            assert_eq!(v, want);
        }
        // one step further in: alpha = 0.75
        let p = 2;
        for (b, v) in cube.spectrum(p).into_iter().enumerate() {
            let want = (0.75 * e[0][b] + 0.25 * e[1][b]) as f32 as f64;
            assert_eq!(v, want);
        }
        // two steps in: pure
        assert_eq!(cube.value(1, 0), e[0][0] as f32);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = two_class(0, 0.0);
        s.n_classes = 1;
        s.endmembers = None;
        s.grid = vec![vec![1]];
        assert!(matches!(synth_scene(&s, 0), Err(HsiError::InvalidSpec(_))));
        let mut s = two_class(0, 0.0);
        s.bands = 3;
        assert!(matches!(synth_scene(&s, 0), Err(HsiError::InvalidSpec(_))));
        let mut s = two_class(0, 0.0);
        s.grid = vec![vec![1, 2], vec![1]];
        assert!(matches!(synth_scene(&s, 0), Err(HsiError::InvalidSpec(_))));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let spec = SceneSpec {
            noise_sigma: 0.02,
            mix_width: 3,
            ..SceneSpec::tiled(24, 8, 3, 3)
        };
        let a = synth_scene(&spec, 99).unwrap();
        let b = synth_scene(&spec, 99).unwrap();
        assert_eq!(a, b);
        let c = synth_scene(&spec, 100).unwrap();
        assert_ne!(a.0, c.0);
    }
}
