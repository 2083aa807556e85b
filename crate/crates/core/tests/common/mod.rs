#![allow(dead_code)]

use unicam_core::testkit::SplitMix;
use unicam_core::Tensor;

pub fn normal_tensor(rng: &mut SplitMix, shape: Vec<usize>) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.normal()).collect()).unwrap()
}

pub fn uniform_tensor(rng: &mut SplitMix, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.range(lo, hi)).collect()).unwrap()
}

/// Per-sample rows of a tensor, as the oracles expect them.
pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.batch()).map(|i| t.sample(i).to_vec()).collect()
}

pub fn matrix(n: usize, values: &[f64]) -> Vec<Vec<f64>> {
    values.chunks(n).map(|r| r.to_vec()).collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random orthogonal d x d matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut SplitMix, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

/// Applies `x -> scale * Q x + shift` to every row of a 2-D tensor.
pub fn affine_rows(x: &Tensor, q: &[Vec<f64>], scale: f64, shift: &[f64]) -> Tensor {
    let d = x.shape()[1];
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.batch() {
        let row = x.sample(i);
        for r in 0..d {
            let v: f64 = (0..d).map(|c| q[r][c] * row[c]).sum();
            out.push(scale * v + shift[r]);
        }
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}
