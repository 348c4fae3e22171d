//! Closed-form marginalized denoising autoencoder.
//!
//! The training spectra `X` (bands x n) are replicated `m_copies` times into
//! `Xbar`, and each replica is corrupted into `Xtilde`: additive Gaussian noise
//! on a random subset of bands (one draw of the subset per replica), then
//! entrywise zeroing with probability `p`. Both are augmented with a constant-1
//! row and the reconstruction map is
//!
//! ```text
//! W = (Xbar Xtilde^T) (Xtilde Xtilde^T + ridge I)^-1
//! ```
//!
//! which minimizes `||Xbar - W Xtilde||_F^2 + ridge ||W||_F^2`. Training never
//! materializes the replicated matrices; the two Gram products are accumulated
//! one replica at a time.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HsiError, Result};

const MAGIC: &[u8; 4] = b"MDAE";
const FORMAT_VERSION: u32 = 1;

/// Class id used for the model trained on every class.
pub const ALL_CLASSES: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdaeParams {
    /// Probability that a corrupted entry is set to zero.
    pub p: f64,
    pub n_noise_bands: usize,
    pub noise_variance: f64,
    pub m_copies: usize,
    pub ridge: f64,
    pub n_layers: usize,
    pub seed: u64,
}

impl Default for MdaeParams {
    fn default() -> Self {
        Self {
            p: 0.001,
            n_noise_bands: 40,
            noise_variance: 0.01,
            m_copies: 20,
            ridge: 1e-6,
            n_layers: 1,
            seed: 0,
        }
    }
}

impl MdaeParams {
    /// No corruption at all: `Xtilde == Xbar`.
    pub fn clean() -> Self {
        Self {
            p: 0.0,
            n_noise_bands: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self, bands: usize) -> Result<()> {
        if self.n_noise_bands > bands {
            return Err(HsiError::NoiseBandsExceedB {
                n_noise_bands: self.n_noise_bands,
                bands,
            });
        }
        if self.n_layers != 1 {
            return Err(HsiError::InvalidConfig(format!(
                "only single-layer MDAEs are supported, got n_layers = {}",
                self.n_layers
            )));
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(HsiError::InvalidConfig(format!("p = {} outside [0, 1)", self.p)));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(HsiError::InvalidConfig(format!(
                "noise variance {} must be positive",
                self.noise_variance
            )));
        }
        if self.m_copies == 0 {
            return Err(HsiError::InvalidConfig("m_copies must be >= 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(HsiError::InvalidConfig(format!("ridge {} must be >= 0", self.ridge)));
        }
        Ok(())
    }
}

/// Produces corrupted replicas of a fixed data block, one per call.
struct Corruptor {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    p: f64,
    n_noise_bands: usize,
}

impl Corruptor {
    fn new(params: &MdaeParams, seed: u64) -> Result<Self> {
        let noise = Normal::new(0.0, params.noise_variance.sqrt())
            .map_err(|e| HsiError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            p: params.p,
            n_noise_bands: params.n_noise_bands,
        })
    }

    fn next_replica(&mut self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let bands = x.nrows();
        let mut out = x.clone();
        if self.n_noise_bands > 0 {
            let chosen = index::sample(&mut self.rng, bands, self.n_noise_bands).into_vec();
            for j in 0..out.ncols() {
                for &b in &chosen {
                    out[(b, j)] += self.noise.sample(&mut self.rng);
                }
            }
        }
        if self.p > 0.0 {
            for v in out.iter_mut() {
                if self.rng.random::<f64>() < self.p {
                    *v = 0.0;
                }
            }
        }
        out
    }
}

/// Appends a constant-1 row.
pub fn augment_bias(x: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = x.nrows();
    x.clone().insert_row(rows, 1.0)
}

/// Returns `(Xbar, Xtilde)`, both `bands x (n * m_copies)`, without bias rows.
/// Replica `r` occupies columns `r*n .. (r+1)*n`.
pub fn replicate_and_corrupt(
    x: &DMatrix<f64>,
    params: &MdaeParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    params.validate(x.nrows())?;
    let (bands, n) = x.shape();
    let m = params.m_copies;
    let mut corruptor = Corruptor::new(params, params.seed)?;
    let mut xbar = DMatrix::zeros(bands, n * m);
    let mut xtilde = DMatrix::zeros(bands, n * m);
    for r in 0..m {
        xbar.columns_mut(r * n, n).copy_from(x);
        xtilde
            .columns_mut(r * n, n)
            .copy_from(&corruptor.next_replica(x));
    }
    Ok((xbar, xtilde))
}

/// Solves `Q W^T = P^T` by Cholesky, where `P = Xbar Xtilde^T` and
/// `Q = Xtilde Xtilde^T + ridge I`.
fn solve_from_grams(p: &DMatrix<f64>, q: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let max_diag = q.diagonal().max();
    let chol = q.cholesky().ok_or(HsiError::SingularSystem)?;
    let min_pivot = chol.l_dirty().diagonal().map(|v| v * v).min();
    if max_diag.is_nan() || max_diag <= 0.0 || min_pivot <= 1e-14 * max_diag {
        return Err(HsiError::SingularSystem);
    }
    let wt = chol.solve(&p.transpose());
    let w = wt.transpose();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(HsiError::SingularSystem);
    }
    Ok(w)
}

fn with_ridge(mut q: DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    for i in 0..q.nrows() {
        q[(i, i)] += ridge;
    }
    q
}

/// Closed-form minimizer of `||Xbar - W Xtilde||_F^2 + ridge ||W||_F^2`.
/// Inputs must already carry their bias rows. Returns `W` and the
/// reconstruction loss `||Xbar - W Xtilde||_F^2` it achieves.
pub fn solve_mdae(
    xbar: &DMatrix<f64>,
    xtilde: &DMatrix<f64>,
    ridge: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if xbar.shape() != xtilde.shape() {
        return Err(HsiError::ShapeMismatch(format!(
            "Xbar is {:?}, Xtilde is {:?}",
            xbar.shape(),
            xtilde.shape()
        )));
    }
    let p = xbar * xtilde.transpose();
    let q = with_ridge(xtilde * xtilde.transpose(), ridge);
    let w = solve_from_grams(&p, q)?;
    let loss = reconstruction_loss(&w, xbar, xtilde);
    Ok((w, loss))
}

/// `trace((Xbar - W Xtilde)^T (Xbar - W Xtilde))`.
pub fn reconstruction_loss(w: &DMatrix<f64>, xbar: &DMatrix<f64>, xtilde: &DMatrix<f64>) -> f64 {
    (xbar - w * xtilde).norm_squared()
}

/// A trained single-layer MDAE acting on bias-augmented spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct MdaeModel {
    weights: DMatrix<f64>,
    class_id: u16,
    params: MdaeParams,
    training_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    params: MdaeParams,
    training_loss: f64,
}

impl MdaeModel {
    /// Wraps an existing `(B+1) x (B+1)` weight matrix.
    pub fn from_weights(
        weights: DMatrix<f64>,
        class_id: u16,
        params: MdaeParams,
        training_loss: f64,
    ) -> Result<Self> {
        if weights.nrows() != weights.ncols() || weights.nrows() < 2 {
            return Err(HsiError::ShapeMismatch(format!(
                "MDAE weights must be square (B+1)x(B+1), got {:?}",
                weights.shape()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) || training_loss.is_nan() || training_loss < 0.0 {
            return Err(HsiError::Format {
                what: "MDAE model",
                reason: "non-finite weights or negative loss".into(),
            });
        }
        Ok(Self {
            weights,
            class_id,
            params,
            training_loss,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn class_id(&self) -> u16 {
        self.class_id
    }

    pub fn params(&self) -> &MdaeParams {
        &self.params
    }

    pub fn training_loss(&self) -> f64 {
        self.training_loss
    }

    pub fn bands(&self) -> usize {
        self.weights.nrows() - 1
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.bands() {
            return Err(HsiError::LengthMismatch {
                expected: self.bands(),
                got: len,
            });
        }
        Ok(())
    }

    /// First `B` coordinates of `W [x; 1]`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let b = self.bands();
        Ok((0..b)
            .map(|i| {
                let row = self.weights.row(i);
                x.iter().enumerate().map(|(j, v)| row[j] * v).sum::<f64>() + row[b]
            })
            .collect())
    }

    /// Encodes every column of a `B x k` matrix.
    pub fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x.nrows())?;
        let b = self.bands();
        let linear = self.weights.view((0, 0), (b, b));
        let bias: DVector<f64> = self.weights.view((0, b), (b, 1)).column(0).into_owned();
        let mut out = linear * x;
        for mut col in out.column_iter_mut() {
            col += &bias;
        }
        Ok(out)
    }

    /// `(1/B) * sum_b (x_b - encode(x)_b)^2`.
    pub fn reconstruction_mse(&self, x: &[f64]) -> Result<f64> {
        let y = self.encode(x)?;
        Ok(mse(x, &y))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let b = self.bands() as u32;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.class_id as u32).to_le_bytes())?;
        w.write_all(&b.to_le_bytes())?;
        for i in 0..self.weights.nrows() {
            for j in 0..self.weights.ncols() {
                w.write_all(&self.weights[(i, j)].to_le_bytes())?;
            }
        }
        let trailer = Trailer {
            params: self.params,
            training_loss: self.training_loss,
        };
        serde_json::to_writer(&mut w, &trailer)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: &str| HsiError::Format {
            what: "MDAE model",
            reason: reason.to_string(),
        };
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() < 16 || &buf[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        if u32_at(4) != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let class_id = u16::try_from(u32_at(8)).map_err(|_| bad("class id out of range"))?;
        let dim = u32_at(12) as usize + 1;
        let body_end = 16 + dim * dim * 8;
        if buf.len() < body_end {
            return Err(bad("truncated weights"));
        }
        let weights = DMatrix::from_row_iterator(
            dim,
            dim,
            buf[16..body_end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        );
        let trailer: Trailer = serde_json::from_slice(&buf[body_end..])?;
        Self::from_weights(weights, class_id, trailer.params, trailer.training_loss)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let file = fs::File::create(dir.join(model_file_name(self.class_id)))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(HsiError::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(fs::File::open(path)?))
    }
}

pub fn model_file_name(class_id: u16) -> String {
    format!("mdae_{class_id}.bin")
}

pub(crate) fn mse(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// Trains the MDAE for `class_id` on the matching columns of `spectra`
/// (`B x n`), or on every column when `class_id` is [`ALL_CLASSES`]. The
/// corruption stream is seeded with `params.seed + class_id`.
pub fn train_class_mdae(
    spectra: &DMatrix<f64>,
    labels: &[u16],
    class_id: u16,
    params: &MdaeParams,
) -> Result<MdaeModel> {
    if spectra.ncols() != labels.len() {
        return Err(HsiError::LengthMismatch {
            expected: spectra.ncols(),
            got: labels.len(),
        });
    }
    params.validate(spectra.nrows())?;
    let columns: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| class_id == ALL_CLASSES || l == class_id)
        .map(|(i, _)| i)
        .collect();
    if columns.len() < 2 {
        return Err(HsiError::EmptyClass(class_id));
    }
    let x = spectra.select_columns(&columns);
    let seed = params.seed.wrapping_add(class_id as u64);
    let (weights, loss) = train_streaming(&x, params, seed)?;
    MdaeModel::from_weights(weights, class_id, *params, loss)
}

fn train_streaming(x: &DMatrix<f64>, params: &MdaeParams, seed: u64) -> Result<(DMatrix<f64>, f64)> {
    let clean = augment_bias(x);
    let dim = clean.nrows();
    let mut p = DMatrix::zeros(dim, dim);
    let mut q = DMatrix::zeros(dim, dim);
    let mut corruptor = Corruptor::new(params, seed)?;
    for _ in 0..params.m_copies {
        let noisy = augment_bias(&corruptor.next_replica(x));
        p.gemm(1.0, &clean, &noisy.transpose(), 1.0);
        q.gemm(1.0, &noisy, &noisy.transpose(), 1.0);
    }
    let w = solve_from_grams(&p, with_ridge(q, params.ridge))?;

    // replay the identical corruption stream to measure the achieved loss
    let mut corruptor = Corruptor::new(params, seed)?;
    let loss = (0..params.m_copies)
        .map(|_| {
            let noisy = augment_bias(&corruptor.next_replica(x));
            reconstruction_loss(&w, &clean, &noisy)
        })
        .sum();
    Ok((w, loss))
}

/// Trains the per-class models `1..=n_classes` followed by the all-class
/// model, in parallel on the current rayon pool. Output order is fixed.
pub fn train_all(
    spectra: &DMatrix<f64>,
    labels: &[u16],
    n_classes: usize,
    params: &MdaeParams,
) -> Result<Vec<MdaeModel>> {
    let ids: Vec<u16> = (1..=n_classes as u16).chain([ALL_CLASSES]).collect();
    ids.par_iter()
        .map(|&c| train_class_mdae(spectra, labels, c, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(bands: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(bands, n, |_, _| rng.random::<f64>())
    }

    #[test]
    fn no_corruption_means_identical_copies() {
        let x = toy(6, 2, 1);
        let (xbar, xtilde) = replicate_and_corrupt(&x, &MdaeParams::clean()).unwrap();
        assert_eq!(xbar, xtilde);
        assert_eq!(xbar.ncols(), 40);
    }

    #[test]
    fn replication_layout() {
        let x = toy(4, 2, 2);
        let params = MdaeParams {
            m_copies: 3,
            ..MdaeParams::clean()
        };
        let (xbar, _) = replicate_and_corrupt(&x, &params).unwrap();
        assert_eq!(xbar.ncols(), 6);
        for r in 0..3 {
            assert_eq!(xbar.columns(2 * r, 2), x.columns(0, 2));
        }
    }

    #[test]
    fn too_many_noise_bands() {
        let x = toy(4, 3, 2);
        let params = MdaeParams {
            n_noise_bands: 5,
            ..MdaeParams::default()
        };
        assert!(matches!(
            replicate_and_corrupt(&x, &params),
            Err(HsiError::NoiseBandsExceedB { n_noise_bands: 5, bands: 4 })
        ));
    }

    #[test]
    fn rejects_stacked_layers() {
        let params = MdaeParams {
            n_layers: 2,
            ..MdaeParams::default()
        };
        assert!(params.validate(50).is_err());
    }

    #[test]
    fn noise_touches_exactly_the_chosen_bands_per_replica() {
        let x = toy(10, 5, 3);
        let params = MdaeParams {
            p: 0.0,
            n_noise_bands: 3,
            m_copies: 4,
            ..MdaeParams::default()
        };
        let (xbar, xtilde) = replicate_and_corrupt(&x, &params).unwrap();
        let diff = &xtilde - &xbar;
        for r in 0..4 {
            let block = diff.columns(r * 5, 5);
            let touched: Vec<usize> = (0..10)
                .filter(|&b| block.row(b).iter().any(|v| *v != 0.0))
                .collect();
            assert_eq!(touched.len(), 3);
            for &b in &touched {
                assert!(block.row(b).iter().all(|v| *v != 0.0));
            }
        }
    }

    #[test]
    fn identity_when_uncorrupted() {
        let x = augment_bias(&toy(5, 12, 4));
        let (w, loss) = solve_mdae(&x, &x, 0.0).unwrap();
        let eye = DMatrix::<f64>::identity(6, 6);
        assert!((&w - &eye).amax() < 1e-6);
        assert!(loss < 1e-8);
    }

    #[test]
    fn singular_without_ridge() {
        // fewer samples than dimensions
        let x = augment_bias(&toy(6, 3, 5));
        assert!(matches!(solve_mdae(&x, &x, 0.0), Err(HsiError::SingularSystem)));
        assert!(solve_mdae(&x, &x, 1e-6).is_ok());
    }

    #[test]
    fn encode_affine_structure() {
        let mut w = DMatrix::<f64>::identity(4, 4);
        let model = MdaeModel::from_weights(w.clone(), 1, MdaeParams::default(), 0.0).unwrap();
        assert_eq!(model.encode(&[0.1, 0.2, 0.3]).unwrap(), vec![0.1, 0.2, 0.3]);
        w[(0, 3)] = 0.5;
        w[(1, 3)] = -0.25;
        w[(2, 3)] = 1.0;
        let model = MdaeModel::from_weights(w, 1, MdaeParams::default(), 0.0).unwrap();
        assert_eq!(model.encode(&[0.0; 3]).unwrap(), vec![0.5, -0.25, 1.0]);
        assert!(matches!(
            model.encode(&[0.0; 4]),
            Err(HsiError::LengthMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn mse_arithmetic() {
        assert!((mse(&[0.0, 0.0], &[0.1, -0.1]) - 0.01).abs() < 1e-15);
        let model =
            MdaeModel::from_weights(DMatrix::identity(3, 3), 0, MdaeParams::default(), 0.0).unwrap();
        assert_eq!(model.reconstruction_mse(&[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn empty_class() {
        let x = toy(4, 6, 6);
        let labels = [1, 1, 2, 2, 2, 1];
        assert!(matches!(
            train_class_mdae(&x, &labels, 7, &MdaeParams { n_noise_bands: 2, ..Default::default() }),
            Err(HsiError::EmptyClass(7))
        ));
    }

    #[test]
    fn identical_pixels_reconstruct_exactly() {
        let col = toy(6, 1, 7);
        let x = DMatrix::from_fn(6, 10, |i, _| col[(i, 0)]);
        let labels = [3u16; 10];
        let model = train_class_mdae(&x, &labels, 3, &MdaeParams::clean()).unwrap();
        let v: Vec<f64> = col.iter().copied().collect();
        assert!(model.reconstruction_mse(&v).unwrap().sqrt() < 1e-6);
        let y = model.encode(&v).unwrap();
        for (a, b) in v.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn streaming_matches_materialized_solve() {
        let x = toy(7, 9, 8);
        let labels = [1u16; 9];
        let params = MdaeParams {
            p: 0.05,
            n_noise_bands: 3,
            m_copies: 5,
            seed: 11,
            ..MdaeParams::default()
        };
        let model = train_class_mdae(&x, &labels, 1, &params).unwrap();
        let shifted = MdaeParams {
            seed: 12,
            ..params
        };
        let (xbar, xtilde) = replicate_and_corrupt(&x, &shifted).unwrap();
        let (w, loss) = solve_mdae(&augment_bias(&xbar), &augment_bias(&xtilde), params.ridge).unwrap();
        assert!((model.weights() - &w).amax() < 1e-8);
        assert!((model.training_loss() - loss).abs() < 1e-9 * (1.0 + loss));
    }

    #[test]
    fn encode_batch_matches_encode() {
        let x = toy(5, 8, 9);
        let model = train_class_mdae(
            &x,
            &[0; 8],
            ALL_CLASSES,
            &MdaeParams { n_noise_bands: 2, m_copies: 3, ..Default::default() },
        )
        .unwrap();
        let batch = model.encode_batch(&x).unwrap();
        for j in 0..8 {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let single = model.encode(&col).unwrap();
            for i in 0..5 {
                assert!((batch[(i, j)] - single[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let x = toy(6, 10, 10);
        let model = train_class_mdae(
            &x,
            &[4; 10],
            4,
            &MdaeParams { n_noise_bands: 2, m_copies: 3, seed: 77, ..Default::default() },
        )
        .unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MDAE");
        let back = MdaeModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
        assert!(MdaeModel::read_from(&buf[..20]).is_err());
    }
}
