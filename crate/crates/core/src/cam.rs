//! Unique-feature class activation maps.
//!
//! The student's and base model's activations at one layer are turned into
//! U-centered distance matrices; the part of the mapped model's matrix that
//! is orthogonal to the other model's is its *unique* relational structure.
//! The squared Frobenius energy of that part is differentiated back onto the
//! activations, collapsed into per-channel uniqueness weights, and those
//! weights modulate a Grad-CAM style map built from the class-score
//! gradients.

use crate::distcorr::{self, distances_from_rows, sample_rows, u_center, UCenteredMatrix};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default smoothing added under the square root of the differentiable
/// distances.
pub const DEFAULT_EPS: f64 = 1e-9;

/// One batch of activations at a named layer, with the gradients of the
/// target class score and the integer labels when available.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBundle {
    pub layer: String,
    acts: Tensor,
    grads: Option<Tensor>,
    labels: Option<Tensor>,
}

impl ActivationBundle {
    pub fn new(layer: impl Into<String>, acts: Tensor, grads: Option<Tensor>, labels: Option<Tensor>) -> Result<Self> {
        if acts.rank() != 4 {
            return Err(Error::Shape(format!(
                "activations must be [n, C, H, W], got {:?}",
                acts.shape()
            )));
        }
        if let Some(g) = &grads {
            if g.shape() != acts.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "grads {:?} vs acts {:?}",
                    g.shape(),
                    acts.shape()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.shape() != [acts.batch()] {
                return Err(Error::ShapeMismatch(format!(
                    "labels {:?} for a batch of {}",
                    l.shape(),
                    acts.batch()
                )));
            }
            if let Some(bad) = l.data().iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "labels must be nonnegative integers, found {bad}"
                )));
            }
        }
        Ok(ActivationBundle {
            layer: layer.into(),
            acts,
            grads,
            labels,
        })
    }

    pub fn acts(&self) -> &Tensor {
        &self.acts
    }

    pub fn grads(&self) -> Option<&Tensor> {
        self.grads.as_ref()
    }

    pub fn labels(&self) -> Option<&Tensor> {
        self.labels.as_ref()
    }

    pub fn batch(&self) -> usize {
        self.acts.batch()
    }
}

/// Which model's unique knowledge a map shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Features of the student that the base model lacks.
    Distilled,
    /// Features of the base model that the student dropped.
    Residual,
}

/// Per-sample nonnegative saliency maps, `[n, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    maps: Tensor,
    normalized: bool,
}

impl Heatmap {
    /// Wraps `[n, H, W]` maps. With `normalized` set, each map must lie in
    /// `[0, 1]` with a maximum of exactly 0 or 1.
    pub fn new(maps: Tensor, normalized: bool) -> Result<Self> {
        if maps.rank() != 3 {
            return Err(Error::Shape(format!(
                "heatmaps must be [n, H, W], got {:?}",
                maps.shape()
            )));
        }
        if let Some(v) = maps.data().iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidArgument(format!("heatmap value {v} is negative")));
        }
        if normalized {
            if let Some(i) = (0..maps.batch()).find(|&i| !is_normalized_map(maps.sample(i))) {
                return Err(Error::Unnormalized(format!(
                    "map {i} is outside [0, 1] or has a maximum other than 0 or 1"
                )));
            }
        }
        Ok(Heatmap { maps, normalized })
    }

    /// Wraps maps read from disk, marking them normalized when every map
    /// satisfies the normalization contract.
    pub fn detect(maps: Tensor) -> Result<Self> {
        let normalized = maps.rank() == 3 && (0..maps.batch()).all(|i| is_normalized_map(maps.sample(i)));
        Heatmap::new(maps, normalized)
    }

    pub fn maps(&self) -> &Tensor {
        &self.maps
    }

    pub fn into_tensor(self) -> Tensor {
        self.maps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.maps.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.maps.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.maps.shape()[2]
    }

    pub fn map(&self, i: usize) -> &[f64] {
        self.maps.sample(i)
    }
}

fn is_normalized_map(m: &[f64]) -> bool {
    let max = m.iter().fold(0.0f64, |a, b| a.max(*b));
    m.iter().all(|v| (0.0..=1.0).contains(v)) && (max == 0.0 || max == 1.0)
}

/// `P_s - c * P_b` with `c = <P_s, P_b> / <P_b, P_b>` (0 when `P_b` is zero).
pub fn unique_matrix(p_s: &UCenteredMatrix, p_b: &UCenteredMatrix) -> Result<(UCenteredMatrix, f64)> {
    let c = distcorr::projection_coefficient(p_s, p_b)?;
    Ok((p_s.sub_scaled(c, p_b)?, c))
}

/// Unique energy of one model relative to another and its gradient.
#[derive(Debug, Clone)]
pub struct UniqueEnergy {
    /// `E = sum_i e_i`.
    pub total: f64,
    /// `e_i = sum_j X_ij^2` for the unique matrix `X`.
    pub per_sample: Vec<f64>,
    /// `dE / d acts`, same shape as the mapped model's activations.
    pub grad: Tensor,
    pub unique: UCenteredMatrix,
    pub coef: f64,
    /// `|<X, P_other>|`, zero up to rounding.
    pub orthogonality_residual: f64,
    /// `||P_mapped|| * ||P_other||`, the scale for `orthogonality_residual`.
    pub orthogonality_scale: f64,
}

fn check_relational_pair(a: &Tensor, b: &Tensor) -> Result<usize> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(Error::Shape(format!(
            "activations need a batch axis and features, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.batch() != b.batch() {
        return Err(Error::BatchMismatch {
            left: a.batch(),
            right: b.batch(),
        });
    }
    if a.batch() < 4 {
        return Err(Error::TooFewSamples {
            op: "unique energy",
            min: 4,
            got: a.batch(),
        });
    }
    Ok(a.batch())
}

/// Computes the unique energy of `a_s` against `a_b` and its gradient with
/// respect to `a_s` by reverse-mode through projection, U-centering and the
/// `eps`-smoothed distances.
///
/// Only the batch sizes have to agree; the feature sizes of the two models
/// may differ.
pub fn unique_energy_with_grad(a_s: &Tensor, a_b: &Tensor, eps: f64) -> Result<UniqueEnergy> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be finite and >= 0, got {eps}"
        )));
    }
    let n = check_relational_pair(a_s, a_b)?;
    let (_, d_s, rows_s) = sample_rows(a_s);
    let (_, d_b, rows_b) = sample_rows(a_b);
    let dist_s = distances_from_rows(n, d_s, rows_s, eps);
    let dist_b = distances_from_rows(n, d_b, rows_b, eps);
    let p_s = u_center(&dist_s)?;
    let p_b = u_center(&dist_b)?;
    let (x, coef) = unique_matrix(&p_s, &p_b)?;

    let xv = x.values();
    let pb = p_b.values();
    let per_sample: Vec<f64> = (0..n)
        .map(|i| xv[i * n..(i + 1) * n].iter().map(|v| v * v).sum())
        .collect();
    let total: f64 = per_sample.iter().sum();

    // Raw (unnormalized) off-diagonal sums; the diagonals are exactly 0.
    let s_xb: f64 = xv.iter().zip(pb).map(|(a, b)| a * b).sum();
    let s_bb: f64 = pb.iter().map(|b| b * b).sum();
    let nf = n as f64;
    let orthogonality_residual = (s_xb / (nf * (nf - 3.0))).abs();
    let orthogonality_scale = p_s.norm() * p_b.norm();
    debug_assert!(
        orthogonality_residual <= 1e-10 * orthogonality_scale,
        "unique matrix not orthogonal: {orthogonality_residual} vs scale {orthogonality_scale}"
    );

    // dE/dP: 2X from the energy, minus the path through the coefficient,
    // which vanishes with <X, P_b>.
    let through_coef = if s_bb > 0.0 { 2.0 * s_xb / s_bb } else { 0.0 };
    let mut g_p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                g_p[i * n + j] = 2.0 * xv[i * n + j] - through_coef * pb[i * n + j];
            }
        }
    }

    let g_d = u_center_adjoint(n, &g_p);

    let mut grad = vec![0.0; n * d_s];
    for i in 0..n {
        for j in i + 1..n {
            let dij = dist_s.get(i, j);
            if dij == 0.0 {
                continue;
            }
            let w = (g_d[i * n + j] + g_d[j * n + i]) / dij;
            for k in 0..d_s {
                let diff = rows_s[i * d_s + k] - rows_s[j * d_s + k];
                grad[i * d_s + k] += w * diff;
                grad[j * d_s + k] -= w * diff;
            }
        }
    }
    if !total.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("unique energy gradient"));
    }

    Ok(UniqueEnergy {
        total,
        per_sample,
        grad: Tensor::from_raw(a_s.shape().to_vec(), grad),
        unique: x,
        coef,
        orthogonality_residual,
        orthogonality_scale,
    })
}

/// Adjoint of U-centering: maps `dL/dP` (zero diagonal) to `dL/dD` for every
/// entry of the distance matrix.
fn u_center_adjoint(n: usize, g: &[f64]) -> Vec<f64> {
    let nf = n as f64;
    let row: Vec<f64> = (0..n).map(|k| g[k * n..(k + 1) * n].iter().sum()).collect();
    let col: Vec<f64> = (0..n).map(|l| (0..n).map(|i| g[i * n + l]).sum()).collect();
    let total_term = g.iter().sum::<f64>() / ((nf - 1.0) * (nf - 2.0));
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            out[k * n + l] = g[k * n + l] - row[k] / (nf - 2.0) - col[l] / (nf - 2.0) + total_term;
        }
    }
    out
}

/// Per-channel L1 mass of a gradient field, scaled so each sample's largest
/// channel is 1. Samples with an all-zero gradient stay all-zero.
pub fn channel_uniqueness(g: &Tensor) -> Result<Tensor> {
    if g.rank() < 2 {
        return Err(Error::Shape(format!("expected [n, C, ...], got {:?}", g.shape())));
    }
    let n = g.batch();
    let c = g.shape()[1];
    let spatial: usize = g.shape()[2..].iter().product();
    let mut u = vec![0.0; n * c];
    for i in 0..n {
        let sample = g.sample(i);
        for k in 0..c {
            u[i * c + k] = sample[k * spatial..(k + 1) * spatial].iter().map(|v| v.abs()).sum();
        }
        let row = &mut u[i * c..(i + 1) * c];
        let max = row.iter().fold(0.0f64, |a, b| a.max(*b));
        if max > 0.0 {
            row.iter_mut().for_each(|v| *v /= max);
        }
    }
    Ok(Tensor::from_raw(vec![n, c], u))
}

/// Gradient-weighted channel sum with a rectifier:
/// `ReLU(sum_k beta_k * u_k * A_k)` where `beta_k` is the spatial mean of the
/// class-score gradient on channel `k` and `u` defaults to all ones.
pub fn cam_assemble(acts: &Tensor, grads: &Tensor, chan_uniq: Option<&Tensor>) -> Result<Heatmap> {
    if acts.rank() != 4 {
        return Err(Error::Shape(format!(
            "activations must be [n, C, H, W], got {:?}",
            acts.shape()
        )));
    }
    if grads.shape() != acts.shape() {
        return Err(Error::ShapeMismatch(format!(
            "grads {:?} vs acts {:?}",
            grads.shape(),
            acts.shape()
        )));
    }
    let (n, c, h, w) = (acts.shape()[0], acts.shape()[1], acts.shape()[2], acts.shape()[3]);
    if let Some(u) = chan_uniq {
        if u.shape() != [n, c] {
            return Err(Error::ShapeMismatch(format!(
                "channel weights {:?}, expected [{n}, {c}]",
                u.shape()
            )));
        }
    }
    let hw = h * w;
    let mut maps = vec![0.0; n * hw];
    for i in 0..n {
        let a = acts.sample(i);
        let g = grads.sample(i);
        let out = &mut maps[i * hw..(i + 1) * hw];
        for k in 0..c {
            let beta = g[k * hw..(k + 1) * hw].iter().sum::<f64>() / hw as f64;
            let weight = beta * chan_uniq.map_or(1.0, |u| u.data()[i * c + k]);
            for (o, v) in out.iter_mut().zip(&a[k * hw..(k + 1) * hw]) {
                *o += weight * v;
            }
        }
        out.iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 });
    }
    Heatmap::new(Tensor::from_raw(vec![n, h, w], maps), false)
}

/// The Grad-CAM baseline: [`cam_assemble`] with every channel weight 1.
pub fn grad_cam(acts: &Tensor, grads: &Tensor) -> Result<Heatmap> {
    cam_assemble(acts, grads, None)
}

/// Everything a UniCAM run produces besides the map.
#[derive(Debug, Clone)]
pub struct UniqueDecomposition {
    pub unique: UCenteredMatrix,
    pub coef: f64,
    pub total_energy: f64,
    pub sample_energy: Vec<f64>,
    /// `[n, C]` channel weights in `[0, 1]`.
    pub chan_uniq: Tensor,
}

#[derive(Debug, Clone)]
pub struct UnicamOutput {
    pub heatmap: Heatmap,
    pub decomposition: UniqueDecomposition,
}

/// Saliency of the knowledge unique to one model: the student for
/// [`Mode::Distilled`], the base model for [`Mode::Residual`]. The mapped
/// model's bundle must carry gradients; the other only contributes
/// activations.
pub fn unicam(student: &ActivationBundle, base: &ActivationBundle, mode: Mode, eps: f64) -> Result<UnicamOutput> {
    let (mapped, other, side) = match mode {
        Mode::Distilled => (student, base, "student"),
        Mode::Residual => (base, student, "base"),
    };
    let grads = mapped.grads().ok_or(Error::MissingGrads(side))?;
    let energy = unique_energy_with_grad(mapped.acts(), other.acts(), eps)?;
    let chan_uniq = channel_uniqueness(&energy.grad)?;
    let heatmap = cam_assemble(mapped.acts(), grads, Some(&chan_uniq))?;
    Ok(UnicamOutput {
        heatmap,
        decomposition: UniqueDecomposition {
            unique: energy.unique,
            coef: energy.coef,
            total_energy: energy.total,
            sample_energy: energy.per_sample,
            chan_uniq,
        },
    })
}

/// Corner-aligned bilinear resize to `out_h x out_w`, then per-map min-max
/// scaling to `[0, 1]`. Constant maps become all-zero.
pub fn postprocess(h: &Heatmap, out_h: usize, out_w: usize) -> Result<Heatmap> {
    if out_h < 1 || out_w < 1 {
        return Err(Error::InvalidArgument(format!(
            "output size {out_h}x{out_w} must be at least 1x1"
        )));
    }
    let (src_h, src_w) = (h.height(), h.width());
    let coords = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|o| {
                let pos = if out == 1 {
                    0.0
                } else {
                    (o * (src - 1)) as f64 / (out - 1) as f64
                };
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = coords(out_h, src_h);
    let xs = coords(out_w, src_w);
    let mut out = Vec::with_capacity(h.len() * out_h * out_w);
    for i in 0..h.len() {
        let m = h.map(i);
        let start = out.len();
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = (1.0 - fx) * m[y0 * src_w + x0] + fx * m[y0 * src_w + x1];
                let bottom = (1.0 - fx) * m[y1 * src_w + x0] + fx * m[y1 * src_w + x1];
                out.push((1.0 - fy) * top + fy * bottom);
            }
        }
        let resized = &mut out[start..];
        let min = resized.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        let max = resized.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        if max > min {
            resized.iter_mut().for_each(|v| *v = (*v - min) / (max - min));
        } else {
            resized.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Heatmap::new(Tensor::from_raw(vec![h.len(), out_h, out_w], out), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distcorr::{hilbert_inner, pairwise_distance};

    fn ramp(shape: Vec<usize>, seed: u64) -> Tensor {
        let len: usize = shape.iter().product();
        let mut s = seed;
        let data = (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    fn ucenter(t: &Tensor) -> UCenteredMatrix {
        u_center(&pairwise_distance(t, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn unique_matrix_degenerate_cases() {
        let p = ucenter(&ramp(vec![6, 3], 1));
        let (x, c) = unique_matrix(&p, &p).unwrap();
        assert_eq!(c, 1.0);
        assert!(x.values().iter().all(|v| *v == 0.0));
        let zero = UCenteredMatrix::zeros(6).unwrap();
        let (x, c) = unique_matrix(&p, &zero).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(x, p);
        let q = ucenter(&ramp(vec![6, 2], 2));
        let (x, _) = unique_matrix(&p, &q).unwrap();
        assert!(hilbert_inner(&x, &q).unwrap().abs() <= 1e-12 * p.norm() * q.norm());
    }

    #[test]
    fn identical_inputs_have_no_unique_energy() {
        let a = ramp(vec![5, 2, 3, 3], 3);
        let e = unique_energy_with_grad(&a, &a, DEFAULT_EPS).unwrap();
        assert_eq!(e.total, 0.0);
        assert!(e.per_sample.iter().all(|v| *v == 0.0));
        assert!(e.grad.data().iter().all(|v| *v == 0.0));
        assert_eq!(e.grad.shape(), a.shape());
    }

    #[test]
    fn energy_requires_four_samples() {
        let a = ramp(vec![3, 2], 4);
        assert!(matches!(
            unique_energy_with_grad(&a, &a, DEFAULT_EPS),
            Err(Error::TooFewSamples { min: 4, got: 3, .. })
        ));
        assert!(unique_energy_with_grad(&ramp(vec![5, 2], 1), &ramp(vec![6, 2], 1), 1e-9).is_err());
        assert!(unique_energy_with_grad(&ramp(vec![5, 2], 1), &ramp(vec![5, 2], 2), -1.0).is_err());
    }

    #[test]
    fn uniqueness_weights() {
        let zero = Tensor::zeros(vec![2, 3, 2, 2]).unwrap();
        assert!(channel_uniqueness(&zero).unwrap().data().iter().all(|v| *v == 0.0));

        let mut data = vec![0.0; 2 * 3 * 4];
        data[4 + 1] = -3.0;
        data[12 + 8 + 2] = 0.5;
        let single = Tensor::new(vec![2, 3, 2, 2], data).unwrap();
        let u = channel_uniqueness(&single).unwrap();
        assert_eq!(u.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

        let g = ramp(vec![3, 4, 2, 2], 5);
        let scaled = Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| v * 7.5).collect()).unwrap();
        let (a, b) = (channel_uniqueness(&g).unwrap(), channel_uniqueness(&scaled).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn cam_hand_computation() {
        let acts = Tensor::filled(vec![1, 1, 2, 3], 1.0).unwrap();
        let grads = Tensor::filled(vec![1, 1, 2, 3], 1.0).unwrap();
        let h = grad_cam(&acts, &grads).unwrap();
        assert_eq!(h.maps().data(), &[1.0; 6]);
        let zero_u = Tensor::zeros(vec![1, 1]).unwrap();
        let z = cam_assemble(&acts, &grads, Some(&zero_u)).unwrap();
        assert!(z.maps().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ones_weights_reproduce_grad_cam_bitwise() {
        let acts = ramp(vec![4, 3, 5, 5], 6);
        let grads = ramp(vec![4, 3, 5, 5], 7);
        let ones = Tensor::filled(vec![4, 3], 1.0).unwrap();
        assert_eq!(
            cam_assemble(&acts, &grads, Some(&ones)).unwrap(),
            grad_cam(&acts, &grads).unwrap()
        );
        assert!(cam_assemble(&acts, &ramp(vec![4, 3, 5, 4], 1), None).is_err());
        assert!(cam_assemble(&acts, &grads, Some(&Tensor::zeros(vec![4, 2]).unwrap())).is_err());
    }

    #[test]
    fn unicam_requires_grads_on_mapped_side() {
        let acts = ramp(vec![4, 2, 3, 3], 8);
        let s = ActivationBundle::new("L1", acts.clone(), None, None).unwrap();
        let b = ActivationBundle::new("L1", acts.clone(), Some(acts), None).unwrap();
        assert!(matches!(
            unicam(&s, &b, Mode::Distilled, DEFAULT_EPS),
            Err(Error::MissingGrads("student"))
        ));
        assert!(unicam(&s, &b, Mode::Residual, DEFAULT_EPS).is_ok());
    }

    #[test]
    fn bundle_validation() {
        let acts = ramp(vec![4, 2, 3, 3], 8);
        assert!(ActivationBundle::new("x", ramp(vec![4, 2], 1), None, None).is_err());
        assert!(ActivationBundle::new("x", acts.clone(), Some(ramp(vec![4, 2, 3, 2], 1)), None).is_err());
        let frac = Tensor::new(vec![4], vec![0.0, 1.0, 1.5, 0.0]).unwrap();
        assert!(ActivationBundle::new("x", acts.clone(), None, Some(frac)).is_err());
        let good = Tensor::new(vec![4], vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(ActivationBundle::new("x", acts, None, Some(good)).is_ok());
    }

    #[test]
    fn postprocess_cases() {
        let constant = Heatmap::new(Tensor::filled(vec![1, 3, 3], 2.0).unwrap(), false).unwrap();
        let p = postprocess(&constant, 4, 4).unwrap();
        assert!(p.maps().data().iter().all(|v| *v == 0.0));
        assert!(p.is_normalized());

        let columns = Heatmap::new(Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap(), false).unwrap();
        let up = postprocess(&columns, 2, 4).unwrap();
        for row in 0..2 {
            for (k, want) in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].iter().enumerate() {
                assert!((up.map(0)[row * 4 + k] - want).abs() <= 1e-15);
            }
        }

        let maps = Heatmap::new(
            ramp(vec![2, 4, 5], 9)
                .reshape(vec![2, 4, 5])
                .map(|t| Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v.abs()).collect()).unwrap())
                .unwrap(),
            false,
        )
        .unwrap();
        let once = postprocess(&maps, 4, 5).unwrap();
        let twice = postprocess(&once, 4, 5).unwrap();
        assert_eq!(once, twice);
        assert!(postprocess(&maps, 0, 3).is_err());
    }

    #[test]
    fn heatmap_contracts() {
        assert!(Heatmap::new(Tensor::filled(vec![1, 2, 2], -1.0).unwrap(), false).is_err());
        assert!(Heatmap::new(Tensor::filled(vec![1, 2, 2], 0.5).unwrap(), true).is_err());
        assert!(Heatmap::new(Tensor::zeros(vec![1, 2, 2]).unwrap(), true).is_ok());
        assert!(!Heatmap::detect(Tensor::filled(vec![1, 2, 2], 2.0).unwrap())
            .unwrap()
            .is_normalized());
        assert!(Heatmap::detect(Tensor::filled(vec![1, 2, 2], 1.0).unwrap())
            .unwrap()
            .is_normalized());
    }
}
