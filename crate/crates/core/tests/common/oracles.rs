//! Reference implementations used only by tests. Each one takes a different
//! route from the library code it checks.
#![allow(dead_code)]

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard Salinas ground-truth class sizes (16 classes, 54,129 pixels).
pub const SALINAS_HISTOGRAM: [usize; 16] = [
    2009, 3726, 1976, 1394, 2678, 3959, 3579, 11271, 6203, 3278, 1068, 1927, 916, 1070, 7268, 1807,
];

/// Objective `||Xbar - W Xtilde||_F^2 + ridge ||W||_F^2`.
pub fn mdae_objective(w: &DMatrix<f64>, xbar: &DMatrix<f64>, xtilde: &DMatrix<f64>, ridge: f64) -> f64 {
    (xbar - w * xtilde).norm_squared() + ridge * w.norm_squared()
}

/// Gradient of [`mdae_objective`] computed directly from the residual.
pub fn mdae_gradient(w: &DMatrix<f64>, xbar: &DMatrix<f64>, xtilde: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let residual = xbar - w * xtilde;
    residual * xtilde.transpose() * -2.0 + w * (2.0 * ridge)
}

fn largest_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    let n = sym.nrows();
    let mut v = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = sym * &v;
        lambda = w.norm();
        v = w / lambda;
    }
    lambda
}

/// Minimizes the MDAE objective by accelerated gradient descent with
/// adaptive restart, starting from zero. First-order only.
pub fn gd_minimize(xbar: &DMatrix<f64>, xtilde: &DMatrix<f64>, ridge: f64, max_iter: usize) -> DMatrix<f64> {
    let d = xbar.nrows();
    let gram = xtilde * xtilde.transpose();
    let lipschitz = 2.0 * (largest_eigenvalue(&gram) + ridge);
    let step = 1.0 / lipschitz;
    let mut w = DMatrix::zeros(d, xtilde.nrows());
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut prev_obj = f64::INFINITY;
    for _ in 0..max_iter {
        let g = mdae_gradient(&y, xbar, xtilde, ridge);
        if g.norm() < 1e-13 * lipschitz {
            return y;
        }
        let next = &y - g * step;
        let obj = mdae_objective(&next, xbar, xtilde, ridge);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj > prev_obj {
            // restart momentum
            t = 1.0;
            y = w.clone();
            continue;
        }
        y = &next + (&next - &w) * ((t - 1.0) / t_next);
        w = next;
        t = t_next;
        prev_obj = obj;
    }
    w
}

/// Random bias-augmented MDAE instance `(Xbar, Xtilde)` with
/// `bands <= 8` and `n <= 20` pixels replicated `m` times.
pub fn random_mdae_instance(seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = rng.random_range(3..=8);
    let n = rng.random_range(bands + 2..=20);
    let m = 3;
    let x = DMatrix::from_fn(bands, n, |_, _| rng.random::<f64>());
    let mut xbar = DMatrix::from_element(bands + 1, n * m, 1.0);
    let mut xtilde = xbar.clone();
    for r in 0..m {
        for j in 0..n {
            for b in 0..bands {
                let v = x[(b, j)];
                xbar[(b, r * n + j)] = v;
                let noisy = v + 0.1 * (rng.random::<f64>() - 0.5);
                xtilde[(b, r * n + j)] = if rng.random::<f64>() < 0.05 { 0.0 } else { noisy };
            }
        }
    }
    (xbar, xtilde)
}

/// Border-seeded breadth-first flood fill of background, then inversion:
/// anything not reached from the frame becomes foreground.
pub fn fill_holes_bfs(rows: usize, cols: usize, mask: &[bool]) -> Vec<bool> {
    let mut reached = vec![false; rows * cols];
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            let on_frame = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
            let p = r * cols + c;
            if on_frame && !mask[p] {
                reached[p] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let steps: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        for (dr, dc) in steps {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                continue;
            }
            let q = nr as usize * cols + nc as usize;
            if !mask[q] && !reached[q] {
                reached[q] = true;
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    reached.iter().map(|&r| !r).collect()
}

/// Nested-loop confusion tally over classes `1..=n`.
pub fn confusion_bruteforce(pred: &[u16], truth: &[u16], test: &[usize], n: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64; n]; n];
    for i in 1..=n as u16 {
        for j in 1..=n as u16 {
            out[i as usize - 1][j as usize - 1] =
                test.iter().filter(|&&p| truth[p] == i && pred[p] == j).count() as u64;
        }
    }
    out
}

/// Per-band squared-error mean by explicit summation.
pub fn mse_bruteforce(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for b in 0..x.len() {
        acc += (x[b] - y[b]).powi(2);
    }
    acc / x.len() as f64
}
