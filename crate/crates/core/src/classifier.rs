//! Feedforward rectifier network with a softmax head, trained by mini-batch
//! SGD with classical momentum on mean categorical cross-entropy.
//!
//! Feature batches are `D x k` matrices (one column per sample); class labels
//! are `1..=N` and map to output rows `0..N`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HsiError, Result};
use crate::features::FeatureSource;

const MAGIC: &[u8; 4] = b"MLPN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpTopology {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpTopology {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
        }
    }

    pub fn default_hidden() -> Vec<usize> {
        vec![512, 256, 128]
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(self.output_dim);
        d
    }

    fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(HsiError::InvalidTopology(format!(
                "all widths must be positive: {:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.04,
            momentum: 0.92,
            batch_size: 256,
            epochs: 20,
            seed: 0,
        }
    }
}

impl SgdHyper {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || !(0.0..1.0).contains(&self.momentum)
            || self.batch_size == 0
            || self.epochs == 0
        {
            return Err(HsiError::InvalidConfig(format!("invalid SGD settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Self {
            weights: DMatrix::zeros(self.weights.nrows(), self.weights.ncols()),
            bias: DVector::zeros(self.bias.len()),
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.weights.len();
        if i < nw {
            &mut self.weights.as_mut_slice()[i]
        } else {
            &mut self.bias[i - nw]
        }
    }

    fn param(&self, i: usize) -> f64 {
        let nw = self.weights.len();
        if i < nw {
            self.weights.as_slice()[i]
        } else {
            self.bias[i - nw]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    topology: MlpTopology,
    layers: Vec<Layer>,
    velocity: Vec<Layer>,
}

/// Parameter gradients, one entry per layer.
pub type Gradients = Vec<Layer>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Glorot-uniform weights, zero biases and velocities.
pub fn init_network(topology: &MlpTopology, seed: u64) -> Result<MlpNetwork> {
    topology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = topology.dims();
    let layers: Vec<Layer> = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..=limit)),
                bias: DVector::zeros(fan_out),
            }
        })
        .collect();
    let velocity = layers.iter().map(Layer::zeros_like).collect();
    Ok(MlpNetwork {
        topology: topology.clone(),
        layers,
        velocity,
    })
}

fn softmax_columns(z: &mut DMatrix<f64>) {
    for mut col in z.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
}

fn class_index(label: u16, n_classes: usize) -> Result<usize> {
    if label == 0 || label as usize > n_classes {
        return Err(HsiError::LabelOutOfRange { label, n_classes });
    }
    Ok(label as usize - 1)
}

impl MlpNetwork {
    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_classes(&self) -> usize {
        self.topology.output_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    fn check_input(&self, batch: &DMatrix<f64>) -> Result<()> {
        if batch.nrows() != self.topology.input_dim {
            return Err(HsiError::ShapeMismatch(format!(
                "network expects {} input rows, batch has {}",
                self.topology.input_dim,
                batch.nrows()
            )));
        }
        Ok(())
    }

    /// Pre-softmax output and every layer's input activation.
    fn forward_cached(&self, batch: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut a = batch.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(a);
            a = z;
        }
        (activations, a)
    }

    /// Pre-softmax scores, `N x k`.
    pub fn logits(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(batch)?;
        Ok(self.forward_cached(batch).1)
    }

    /// Class probabilities, `N x k`; each column sums to one.
    pub fn forward(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut z = self.logits(batch)?;
        softmax_columns(&mut z);
        Ok(z)
    }

    /// Mean cross-entropy of the batch and its gradient w.r.t. every parameter.
    pub fn loss_and_gradients(&self, batch: &DMatrix<f64>, labels: &[u16]) -> Result<(f64, Gradients)> {
        self.check_input(batch)?;
        let k = batch.ncols();
        if labels.len() != k || k == 0 {
            return Err(HsiError::ShapeMismatch(format!(
                "{} labels for a batch of {k}",
                labels.len()
            )));
        }
        let n = self.n_classes();
        let targets: Vec<usize> = labels.iter().map(|&l| class_index(l, n)).collect::<Result<_>>()?;

        let (activations, mut delta) = self.forward_cached(batch);
        let mut loss = 0.0;
        for (j, mut col) in delta.column_iter_mut().enumerate() {
            let max = col.max();
            let log_sum = col.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += log_sum - col[targets[j]];
            col.apply(|v| *v = (*v - log_sum).exp());
            col[targets[j]] -= 1.0;
        }
        let scale = 1.0 / k as f64;
        loss *= scale;
        delta *= scale;

        let mut grads: Gradients = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &activations[i];
            let g = Layer {
                weights: &delta * input.transpose(),
                bias: delta.column_sum(),
            };
            if i > 0 {
                let mut back = self.layers[i].weights.tr_mul(&delta);
                // rectifier derivative, read off the post-activation values
                back.zip_apply(input, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
            grads.push(g);
        }
        grads.reverse();
        Ok((loss, grads))
    }

    /// One heavy-ball step: `v <- momentum * v - lr * g`, `theta <- theta + v`.
    pub fn apply_update(&mut self, grads: &Gradients, learning_rate: f64, momentum: f64) {
        for ((layer, vel), g) in self.layers.iter_mut().zip(&mut self.velocity).zip(grads) {
            vel.weights *= momentum;
            vel.weights.zip_apply(&g.weights, |v, gw| *v -= learning_rate * gw);
            vel.bias *= momentum;
            vel.bias.axpy(-learning_rate, &g.bias, 1.0);
            layer.weights += &vel.weights;
            layer.bias += &vel.bias;
        }
    }

    fn param(&self, flat: usize) -> f64 {
        let (l, i) = self.locate(flat);
        self.layers[l].param(i)
    }

    fn param_mut(&mut self, flat: usize) -> &mut f64 {
        let (l, i) = self.locate(flat);
        self.layers[l].param_mut(i)
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if flat < layer.n_params() {
                return (l, flat);
            }
            flat -= layer.n_params();
        }
        panic!("parameter index out of range");
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = self.topology.dims();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for layer in &self.layers {
            for i in 0..layer.weights.nrows() {
                for j in 0..layer.weights.ncols() {
                    w.write_all(&layer.weights[(i, j)].to_le_bytes())?;
                }
            }
            for v in layer.bias.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.bytes(4)? != MAGIC {
            return Err(Cursor::bad("bad magic"));
        }
        if cur.u32()? != FORMAT_VERSION as usize {
            return Err(Cursor::bad("unsupported version"));
        }
        let n_dims = cur.u32()?;
        if n_dims < 2 {
            return Err(Cursor::bad("topology needs at least two widths"));
        }
        let dims = (0..n_dims).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let topology = MlpTopology::new(dims[0], dims[1..n_dims - 1].to_vec(), dims[n_dims - 1]);
        topology.validate()?;
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = DMatrix::from_row_slice(fan_out, fan_in, &cur.f64s(fan_in * fan_out)?);
            let bias = DVector::from_vec(cur.f64s(fan_out)?);
            layers.push(Layer { weights, bias });
        }
        if cur.pos != buf.len() {
            return Err(Cursor::bad("trailing bytes"));
        }
        let velocity = layers.iter().map(Layer::zeros_like).collect();
        Ok(Self {
            topology,
            layers,
            velocity,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(HsiError::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(fs::File::open(path)?))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bad(reason: &str) -> HsiError {
        HsiError::Format {
            what: "MLP network",
            reason: reason.to_string(),
        }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Self::bad("truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .bytes(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Argmax per column of a probability (or logit) matrix, ties to the lowest
/// class. Returns labels in `1..=N`.
pub fn argmax_labels(scores: &DMatrix<f64>) -> Vec<u16> {
    scores
        .column_iter()
        .map(|col| {
            let mut best = 0;
            for i in 1..col.len() {
                if col[i] > col[best] {
                    best = i;
                }
            }
            best as u16 + 1
        })
        .collect()
}

pub fn predict(net: &MlpNetwork, features: &DMatrix<f64>) -> Result<Vec<u16>> {
    Ok(argmax_labels(&net.forward(features)?))
}

/// Streaming prediction over every column of a feature source.
pub fn predict_source(net: &MlpNetwork, source: &dyn FeatureSource, batch_size: usize) -> Result<Vec<u16>> {
    let n = source.len();
    let mut out = Vec::with_capacity(n);
    let step = batch_size.max(1);
    for start in (0..n).step_by(step) {
        let idx: Vec<usize> = (start..(start + step).min(n)).collect();
        out.extend(predict(net, &source.batch(&idx)?)?);
    }
    Ok(out)
}

fn accuracy(pred: &[u16], truth: &[u16]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Runs `hyper.epochs` epochs of mini-batch SGD. Samples are reshuffled each
/// epoch with seed `hyper.seed + epoch`. No early stopping; validation
/// accuracy is recorded only.
pub fn train(
    net: &mut MlpNetwork,
    features: &dyn FeatureSource,
    labels: &[u16],
    hyper: &SgdHyper,
    validation: Option<(&dyn FeatureSource, &[u16])>,
) -> Result<Vec<EpochStats>> {
    hyper.validate()?;
    if features.len() != labels.len() {
        return Err(HsiError::ShapeMismatch(format!(
            "{} feature columns, {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.dim() != net.topology.input_dim {
        return Err(HsiError::ShapeMismatch(format!(
            "features have {} rows, network expects {}",
            features.dim(),
            net.topology.input_dim
        )));
    }
    if features.is_empty() {
        return Err(HsiError::EmptyIndexSet);
    }
    let n_classes = net.n_classes();
    for &l in labels {
        class_index(l, n_classes)?;
    }

    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let batch = features.batch(chunk)?;
            let batch_labels: Vec<u16> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = net.loss_and_gradients(&batch, &batch_labels)?;
            if !loss.is_finite() {
                return Err(HsiError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * chunk.len() as f64;
            let pred = predict(net, &batch)?;
            hits += pred.iter().zip(&batch_labels).filter(|(p, t)| p == t).count();
            net.apply_update(&grads, hyper.learning_rate, hyper.momentum);
            if net.layers.iter().any(|l| l.weights.iter().any(|v| !v.is_finite())) {
                return Err(HsiError::NonFiniteLoss { epoch, batch: b });
            }
        }
        let val_accuracy = match validation {
            Some((vf, vl)) if !vl.is_empty() => {
                let pred = predict_source(net, vf, hyper.batch_size)?;
                Some(accuracy(&pred, vl))
            }
            _ => None,
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy: hits as f64 / n as f64,
            val_accuracy,
        };
        log::debug!("{stats:?}");
        trace.push(stats);
    }
    Ok(trace)
}

/// Compares analytic gradients with central differences (`h = 1e-5`) on
/// `n_samples` randomly chosen parameters (all of them if fewer exist) and
/// returns the largest relative error `|a - f| / max(|a| + |f|, 1e-8)`.
pub fn gradient_check(
    net: &MlpNetwork,
    batch: &DMatrix<f64>,
    labels: &[u16],
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let (_, grads) = net.loss_and_gradients(batch, labels)?;
    let mut analytic = Vec::with_capacity(net.n_params());
    for g in &grads {
        analytic.extend_from_slice(g.weights.as_slice());
        analytic.extend(g.bias.iter().copied());
    }
    let total = net.n_params();
    let picks: Vec<usize> = if n_samples >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, total, n_samples).into_vec()
    };

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for idx in picks {
        let orig = probe.param(idx);
        *probe.param_mut(idx) = orig + H;
        let plus = probe.loss_and_gradients(batch, labels)?.0;
        *probe.param_mut(idx) = orig - H;
        let minus = probe.loss_and_gradients(batch, labels)?.0;
        *probe.param_mut(idx) = orig;
        let numeric = (plus - minus) / (2.0 * H);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
