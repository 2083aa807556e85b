//! Slow, definitional reference implementations used only by tests.
//!
//! Everything here works on plain `Vec<Vec<f64>>` rows and shares no code with
//! `unicam-core`. Loops are written out literally; speed is not a goal.

#![allow(clippy::needless_range_loop)]

pub type Matrix = Vec<Vec<f64>>;

/// Euclidean distance matrix with an explicit zero diagonal.
pub fn distances(rows: &[Vec<f64>], eps: f64) -> Matrix {
    let n = rows.len();
    let mut d = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let mut s = 0.0;
            for t in 0..rows[j].len() {
                let diff = rows[j][t] - rows[k][t];
                s += diff * diff;
            }
            d[j][k] = (s + eps).sqrt();
        }
    }
    d
}

/// Row sums, column sums and the total of a square matrix.
fn margins(a: &Matrix) -> (Vec<f64>, Vec<f64>, f64) {
    let n = a.len();
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        for k in 0..n {
            row[j] += a[j][k];
            col[k] += a[j][k];
            total += a[j][k];
        }
    }
    (row, col, total)
}

/// A_jk = a_jk - mean of row j - mean of column k + grand mean.
pub fn double_center(a: &Matrix) -> Matrix {
    let n = a.len();
    let nf = n as f64;
    let (row, col, total) = margins(a);
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            out[j][k] = a[j][k] - row[j] / nf - col[k] / nf + total / (nf * nf);
        }
    }
    out
}

/// V^2(x, y): the average of the products of double-centred distances.
pub fn dcov2(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let a = double_center(&distances(x, 0.0));
    let b = double_center(&distances(y, 0.0));
    let mut s = 0.0;
    for j in 0..n {
        for k in 0..n {
            s += a[j][k] * b[j][k];
        }
    }
    s / (n * n) as f64
}

pub fn dvar2(x: &[Vec<f64>]) -> f64 {
    dcov2(x, x)
}

/// Squared distance correlation, zero when either variance vanishes.
pub fn dcor2(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let vxy = dcov2(x, y);
    let vxx = dvar2(x);
    let vyy = dvar2(y);
    if vxx * vyy > 0.0 {
        vxy / (vxx * vyy).sqrt()
    } else {
        0.0
    }
}

/// U-centred matrix with a zero diagonal.
pub fn u_center(a: &Matrix) -> Matrix {
    let n = a.len();
    let nf = n as f64;
    let (row, col, total) = margins(a);
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            if j != k {
                out[j][k] = a[j][k] - row[j] / (nf - 2.0) - col[k] / (nf - 2.0) + total / ((nf - 1.0) * (nf - 2.0));
            }
        }
    }
    out
}

/// (1 / (n (n - 3))) * sum over j != k of p_jk q_jk.
pub fn hilbert_inner(p: &Matrix, q: &Matrix) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                s += p[j][k] * q[j][k];
            }
        }
    }
    s / (n as f64 * (n as f64 - 3.0))
}

pub fn project_out(p: &Matrix, q: &Matrix) -> Matrix {
    let qq = hilbert_inner(q, q);
    if qq == 0.0 {
        return p.clone();
    }
    let c = hilbert_inner(p, q) / qq;
    let n = p.len();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            out[j][k] = p[j][k] - c * q[j][k];
        }
    }
    out
}

/// Partial distance correlation of x and y given z.
pub fn pdcor2(x: &[Vec<f64>], y: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    let a = u_center(&distances(x, 0.0));
    let b = u_center(&distances(y, 0.0));
    let c = u_center(&distances(z, 0.0));
    let pa = project_out(&a, &c);
    let pb = project_out(&b, &c);
    let na = hilbert_inner(&pa, &pa).sqrt();
    let nb = hilbert_inner(&pb, &pb).sqrt();
    if na * nb > 0.0 {
        hilbert_inner(&pa, &pb) / (na * nb)
    } else {
        0.0
    }
}

/// Sum of squared entries of the projected student matrix, written without
/// any adjoint machinery. Used as the scalar for finite-difference checks.
pub fn unique_energy(student: &[Vec<f64>], base: &[Vec<f64>], eps: f64) -> f64 {
    let ps = u_center(&distances(student, eps));
    let pb = u_center(&distances(base, eps));
    let xu = project_out(&ps, &pb);
    let mut e = 0.0;
    for row in &xu {
        for v in row {
            e += v * v;
        }
    }
    e
}

#[derive(Debug, PartialEq)]
pub enum FiniteDiffError {
    NonFinite { coord: usize, value: f64 },
}

impl std::fmt::Display for FiniteDiffError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FiniteDiffError::NonFinite { coord, value } => {
                write!(f, "non-finite evaluation {value} at coordinate {coord}")
            }
        }
    }
}

impl std::error::Error for FiniteDiffError {}

/// Central differences (f(x + h e) - f(x - h e)) / 2h at each listed coordinate.
pub fn finite_diff<F>(f: F, point: &[f64], coords: &[usize], step: f64) -> Result<Vec<f64>, FiniteDiffError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        for v in [up, down] {
            if !v.is_finite() {
                return Err(FiniteDiffError::NonFinite { coord: i, value: v });
            }
        }
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Grad-CAM style map for one sample: ReLU(sum_k mean(grads_k) * w_k * acts_k).
/// `acts` and `grads` are indexed [channel][row][col].
pub fn cam_map(acts: &[Matrix], grads: &[Matrix], weights: &[f64]) -> Matrix {
    let h = acts[0].len();
    let w = acts[0][0].len();
    let mut out = vec![vec![0.0; w]; h];
    for k in 0..acts.len() {
        let mut beta = 0.0;
        for r in 0..h {
            for c in 0..w {
                beta += grads[k][r][c];
            }
        }
        beta /= (h * w) as f64;
        for r in 0..h {
            for c in 0..w {
                out[r][c] += beta * weights[k] * acts[k][r][c];
            }
        }
    }
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out
}
