//! Distance covariance, distance correlation and the U-centered Hilbert space
//! used for partial distance correlation.
//!
//! Samples are the leading axis of a [`Tensor`]; every remaining axis is
//! flattened into the feature vector. A rank-1 tensor is read as `n` scalar
//! samples. All reductions run in a fixed row-major order, so results do not
//! depend on how callers schedule work.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    n: usize,
    values: Vec<f64>,
}

/// Double-centered distance matrix: every row, column and the grand mean is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix {
    n: usize,
    values: Vec<f64>,
}

/// U-centered matrix: symmetric, zero diagonal, zero row and column sums.
///
/// These form a Hilbert space under [`hilbert_inner`].
#[derive(Debug, Clone, PartialEq)]
pub struct UCenteredMatrix {
    n: usize,
    values: Vec<f64>,
}

macro_rules! square_accessors {
    ($ty:ty) => {
        impl $ty {
            pub fn n(&self) -> usize {
                self.n
            }

            /// Row-major `n * n` entries.
            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.values[i * self.n + j]
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn row_sum(&self, i: usize) -> f64 {
                self.values[i * self.n..(i + 1) * self.n].iter().sum()
            }

            pub fn col_sum(&self, j: usize) -> f64 {
                (0..self.n).map(|i| self.get(i, j)).sum()
            }
        }
    };
}

square_accessors!(DistMatrix);
square_accessors!(CenteredMatrix);
square_accessors!(UCenteredMatrix);

impl DistMatrix {
    /// Wraps precomputed distances after checking symmetry, sign and diagonal.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        check_square(n, &values)?;
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "distance diagonal ({i},{i}) is nonzero"
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 || v != values[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "distance entry ({i},{j}) breaks symmetry or nonnegativity"
                    )));
                }
            }
        }
        Ok(DistMatrix { n, values })
    }
}

impl UCenteredMatrix {
    pub fn zeros(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(too_few("U-centering", 4, n));
        }
        Ok(UCenteredMatrix {
            n,
            values: vec![0.0; n * n],
        })
    }

    /// Norm induced by [`hilbert_inner`].
    pub fn norm(&self) -> f64 {
        self_inner(self).sqrt()
    }

    /// `self - coef * other`; the result stays in the U-centered subspace.
    pub fn sub_scaled(&self, coef: f64, other: &UCenteredMatrix) -> Result<UCenteredMatrix> {
        same_n(self.n, other.n)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - coef * b)
            .collect();
        Ok(UCenteredMatrix { n: self.n, values })
    }
}

fn check_square(n: usize, values: &[f64]) -> Result<()> {
    if values.len() != n * n {
        return Err(Error::Shape(format!(
            "{} values cannot form a {n}x{n} matrix",
            values.len()
        )));
    }
    Ok(())
}

fn too_few(op: &'static str, min: usize, got: usize) -> Error {
    Error::TooFewSamples { op, min, got }
}

fn same_n(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::BatchMismatch { left: a, right: b });
    }
    Ok(())
}

/// `(n, d, rows)` view of a tensor whose leading axis indexes samples.
pub(crate) fn sample_rows(x: &Tensor) -> (usize, usize, &[f64]) {
    let n = x.batch();
    let d = if x.rank() == 1 { 1 } else { x.sample_len() };
    (n, d, x.data())
}

pub(crate) fn distances_from_rows(n: usize, d: usize, rows: &[f64], eps: f64) -> DistMatrix {
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        let xi = &rows[i * d..(i + 1) * d];
        for j in i + 1..n {
            let xj = &rows[j * d..(j + 1) * d];
            let sq: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = (sq + eps).sqrt();
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    DistMatrix { n, values }
}

/// Euclidean distances between samples, `sqrt(|x_i - x_j|^2 + eps)` off the
/// diagonal. The diagonal is exactly 0 whatever `eps` is.
pub fn pairwise_distance(x: &Tensor, eps: f64) -> Result<DistMatrix> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be finite and >= 0, got {eps}"
        )));
    }
    let (n, d, rows) = sample_rows(x);
    if n < 2 {
        return Err(too_few("pairwise_distance", 2, n));
    }
    Ok(distances_from_rows(n, d, rows, eps))
}

pub fn double_center(d: &DistMatrix) -> CenteredMatrix {
    let n = d.n;
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| d.row_sum(i) / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| d.col_sum(j) / nf).collect();
    let grand = d.values.iter().sum::<f64>() / (nf * nf);
    let mut values = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            values[j * n + k] = d.values[j * n + k] - row_means[j] - col_means[k] + grand;
        }
    }
    CenteredMatrix { n, values }
}

/// U-centering: off-diagonal entries lose `1/(n-2)` of their row and column
/// sums and regain `1/((n-1)(n-2))` of the total; the diagonal is 0.
pub fn u_center(d: &DistMatrix) -> Result<UCenteredMatrix> {
    let n = d.n;
    if n < 4 {
        return Err(too_few("U-centering", 4, n));
    }
    let nf = n as f64;
    // U-centering annihilates constant off-diagonal matrices, so removing
    // the off-diagonal mean first changes nothing but the rounding, which
    // then scales with the result instead of with the distances.
    let mean = d.values.iter().sum::<f64>() / (nf * (nf - 1.0));
    let shifted: Vec<f64> = d
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| if k % (n + 1) == 0 { 0.0 } else { v - mean })
        .collect();
    // symmetric, so row sums double as column sums
    let row_sums: Vec<f64> = shifted.chunks(n).map(|r| r.iter().sum()).collect();
    let total: f64 = shifted.iter().sum();
    let total_term = total / ((nf - 1.0) * (nf - 2.0));
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = shifted[i * n + j] - row_sums[i] / (nf - 2.0) - row_sums[j] / (nf - 2.0) + total_term;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(UCenteredMatrix { n, values })
}

fn self_inner(p: &UCenteredMatrix) -> f64 {
    inner_unchecked(p, p)
}

fn inner_unchecked(p: &UCenteredMatrix, q: &UCenteredMatrix) -> f64 {
    let n = p.n;
    let mut sum = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                sum += p.values[j * n + k] * q.values[j * n + k];
            }
        }
    }
    let nf = n as f64;
    sum / (nf * (nf - 3.0))
}

/// `1/(n(n-3)) * sum_{j != k} p_jk q_jk`.
pub fn hilbert_inner(p: &UCenteredMatrix, q: &UCenteredMatrix) -> Result<f64> {
    same_n(p.n, q.n)?;
    if p.n < 4 {
        return Err(too_few("hilbert_inner", 4, p.n));
    }
    Ok(inner_unchecked(p, q))
}

/// Coefficient of `p` along `q`, or 0 when `q` is the zero matrix.
pub fn projection_coefficient(p: &UCenteredMatrix, q: &UCenteredMatrix) -> Result<f64> {
    let qq = hilbert_inner(q, q)?;
    if qq == 0.0 {
        return Ok(0.0);
    }
    Ok(inner_unchecked(p, q) / qq)
}

/// Component of `p` orthogonal to `q`. Projecting out the zero matrix is the
/// identity.
pub fn project_out(p: &UCenteredMatrix, q: &UCenteredMatrix) -> Result<UCenteredMatrix> {
    let c = projection_coefficient(p, q)?;
    if c == 0.0 {
        return Ok(p.clone());
    }
    p.sub_scaled(c, q)
}

/// The quantities behind one distance-correlation evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcorStats {
    pub dcov2: f64,
    pub dvar2_x: f64,
    pub dvar2_y: f64,
    pub dcor2: f64,
    /// Set when `dvar2_x * dvar2_y == 0` and the value is 0 by convention.
    pub degenerate: bool,
}

fn centered_exact(x: &Tensor) -> Result<CenteredMatrix> {
    Ok(double_center(&pairwise_distance(x, 0.0)?))
}

fn mean_product(a: &CenteredMatrix, b: &CenteredMatrix) -> f64 {
    let n = a.n as f64;
    let sum: f64 = a.values.iter().zip(&b.values).map(|(u, v)| u * v).sum();
    sum / (n * n)
}

fn check_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    same_n(x.batch(), y.batch())
}

/// Squared sample distance covariance `V_n^2(x, y)`, from exact distances.
pub fn dcov2(x: &Tensor, y: &Tensor) -> Result<f64> {
    check_pair(x, y)?;
    let a = centered_exact(x)?;
    let b = centered_exact(y)?;
    Ok(mean_product(&a, &b))
}

pub fn dvar2(x: &Tensor) -> Result<f64> {
    let a = centered_exact(x)?;
    Ok(mean_product(&a, &a))
}

/// Squared distance correlation `R_n^2(x, y)` in `[0, 1]`; 0 when either
/// sample has zero distance variance.
pub fn dcor(x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(dcor_stats(x, y)?.dcor2)
}

pub fn dcor_stats(x: &Tensor, y: &Tensor) -> Result<DcorStats> {
    check_pair(x, y)?;
    let a = centered_exact(x)?;
    let b = centered_exact(y)?;
    let dcov2 = mean_product(&a, &b);
    let dvar2_x = mean_product(&a, &a);
    let dvar2_y = mean_product(&b, &b);
    let denom = dvar2_x * dvar2_y;
    let (dcor2, degenerate) = if denom > 0.0 {
        ((dcov2 / denom.sqrt()).clamp(0.0, 1.0), false)
    } else {
        (0.0, true)
    };
    Ok(DcorStats {
        dcov2,
        dvar2_x,
        dvar2_y,
        dcor2,
        degenerate,
    })
}

fn u_centered_exact(x: &Tensor, op: &'static str) -> Result<UCenteredMatrix> {
    if x.batch() < 4 {
        return Err(too_few(op, 4, x.batch()));
    }
    u_center(&pairwise_distance(x, 0.0)?)
}

/// Squared partial distance correlation of `x` and `y` given `z`, in
/// `[-1, 1]`; 0 when either projected matrix vanishes.
pub fn pdcor2(x: &Tensor, y: &Tensor, z: &Tensor) -> Result<f64> {
    check_pair(x, y)?;
    check_pair(x, z)?;
    let a = u_centered_exact(x, "pdcor2")?;
    let b = u_centered_exact(y, "pdcor2")?;
    let c = u_centered_exact(z, "pdcor2")?;
    let px = project_out(&a, &c)?;
    let py = project_out(&b, &c)?;
    let denom = px.norm() * py.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((inner_unchecked(&px, &py) / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    fn lcg_tensor(n: usize, d: usize, seed: u64) -> Tensor {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..n * d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        Tensor::new(vec![n, d], data).unwrap()
    }

    #[test]
    fn one_dimensional_distances() {
        let d = pairwise_distance(&col(&[0.0, 3.0, 4.0]), 0.0).unwrap();
        assert_eq!(d.values(), &[0.0, 3.0, 4.0, 3.0, 0.0, 1.0, 4.0, 1.0, 0.0]);
        let same = pairwise_distance(&col(&[2.0; 5]), 0.0).unwrap();
        assert!(same.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eps_never_touches_the_diagonal() {
        let d = pairwise_distance(&col(&[1.0, 1.0, 2.0]), 1e-2).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 1), 0.1);
        assert!(pairwise_distance(&col(&[1.0]), 0.0).is_err());
        assert!(pairwise_distance(&col(&[1.0, 2.0]), -1.0).is_err());
    }

    #[test]
    fn u_centering_constant_off_diagonal_vanishes() {
        for n in 4..9 {
            let values = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 2.5 }).collect();
            let d = DistMatrix::from_values(n, values).unwrap();
            let u = u_center(&d).unwrap();
            assert!(u.values().iter().all(|v| v.abs() < 1e-14), "n={n}");
        }
        let d3 = pairwise_distance(&col(&[0.0, 1.0, 2.0]), 0.0).unwrap();
        let err = u_center(&d3).unwrap_err();
        assert!(err.to_string().contains("n >= 4"));
    }

    #[test]
    fn centering_sums_vanish() {
        let x = lcg_tensor(9, 3, 7);
        let d = pairwise_distance(&x, 0.0).unwrap();
        let a = double_center(&d);
        let u = u_center(&d).unwrap();
        for i in 0..9 {
            assert!(a.row_sum(i).abs() / 9.0 <= 1e-12 * a.max_abs());
            assert!(a.col_sum(i).abs() / 9.0 <= 1e-12 * a.max_abs());
            assert!(u.row_sum(i).abs() <= 1e-10 * 9.0 * u.max_abs());
            assert!(u.col_sum(i).abs() <= 1e-10 * 9.0 * u.max_abs());
            assert_eq!(u.get(i, i), 0.0);
        }
    }

    #[test]
    fn dcor_basic_cases() {
        let x = lcg_tensor(10, 3, 1);
        assert!((dcor(&x, &x).unwrap() - 1.0).abs() <= 1e-12);
        let constant = Tensor::filled(vec![10, 2], 4.0).unwrap();
        let s = dcor_stats(&x, &constant).unwrap();
        assert_eq!(s.dcor2, 0.0);
        assert!(s.degenerate);
        let affine = Tensor::new(vec![10, 3], x.data().iter().map(|v| 2.0 * v + 1.0).collect()).unwrap();
        assert!((dcor(&x, &affine).unwrap() - 1.0).abs() <= 1e-10);
        assert_eq!(dcov2(&x, &x).unwrap(), dvar2(&x).unwrap());
        assert!(matches!(
            dcor(&x, &lcg_tensor(9, 3, 2)),
            Err(Error::BatchMismatch { left: 10, right: 9 })
        ));
    }

    #[test]
    fn translation_leaves_dvar_unchanged() {
        let x = lcg_tensor(8, 2, 3);
        let shifted = Tensor::new(vec![8, 2], x.data().iter().map(|v| v + 10.0).collect()).unwrap();
        assert!((dvar2(&x).unwrap() - dvar2(&shifted).unwrap()).abs() <= 1e-12);
        assert_eq!(dvar2(&Tensor::filled(vec![6, 3], -1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn projection_edge_cases() {
        let p = u_center(&pairwise_distance(&lcg_tensor(6, 2, 4), 0.0).unwrap()).unwrap();
        let zero = UCenteredMatrix::zeros(6).unwrap();
        assert_eq!(project_out(&p, &zero).unwrap(), p);
        assert!(project_out(&p, &p).unwrap().values().iter().all(|v| *v == 0.0));
        assert_eq!(hilbert_inner(&p, &zero).unwrap(), 0.0);
        assert!(hilbert_inner(&p, &p).unwrap() >= 0.0);
        let small = UCenteredMatrix::zeros(5).unwrap();
        assert!(hilbert_inner(&p, &small).is_err());
    }

    #[test]
    fn pdcor_given_y_is_zero() {
        let x = lcg_tensor(12, 3, 5);
        let y = lcg_tensor(12, 2, 6);
        assert_eq!(pdcor2(&x, &y, &y).unwrap(), 0.0);
        let constant = Tensor::filled(vec![12, 1], 1.0).unwrap();
        assert_eq!(pdcor2(&x, &constant, &y).unwrap(), 0.0);
        assert!(pdcor2(&lcg_tensor(3, 1, 1), &lcg_tensor(3, 1, 2), &lcg_tensor(3, 1, 3)).is_err());
    }
}
