//! Brute-force reference implementations used by the acceptance checks. They
//! share no code with the library beyond the matrix container.

#![allow(dead_code)]

use geostream::matrix::DenseMatrix;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit_queries(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let v = gaussian_vec(&mut r, d);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

pub fn to_na(rows: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

pub fn matrix_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a.get(i, j))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn products(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| dot(a.row(i), x)).collect()
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn lp(v: &[f64], p: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Moore-Penrose pseudoinverse with a relative singular value cutoff.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(1e-10 * smax.max(f64::MIN_POSITIVE)).unwrap()
}

/// `a^T (B^T B)^+ a`.
pub fn quadratic_pinv(b: &DMatrix<f64>, a: &[f64]) -> f64 {
    let g = b.transpose() * b;
    let gi = pinv(&g);
    let v = DVector::from_column_slice(a);
    (v.transpose() * gi * &v)[(0, 0)]
}

/// Squared row norms of an orthonormal basis for the column space.
pub fn leverage(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&j| svd.singular_values[j] > 1e-10 * smax).collect();
    (0..m.nrows()).map(|i| keep.iter().map(|&j| u[(i, j)].powi(2)).sum()).collect()
}

/// `max_i |w_i - tau_i(W^{1/2-1/p} A)|`.
pub fn lewis_residual(a: &DenseMatrix, w: &[f64], p: f64) -> f64 {
    let m = matrix_na(a);
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| w[i].powf(0.5 - 1.0 / p) * m[(i, j)]);
    let tau = leverage(&scaled);
    w.iter().zip(&tau).map(|(x, t)| (x - t).abs()).fold(0.0, f64::max)
}

/// Log of the k-dimensional volume spanned by `rows`, via `det(R R^T)`.
pub fn log_volume_det(rows: &[&[f64]]) -> f64 {
    let k = rows.len();
    let g = DMatrix::from_fn(k, k, |i, j| dot(rows[i], rows[j]));
    let det = g.determinant();
    if det <= 0.0 {
        f64::NEG_INFINITY
    } else {
        0.5 * det.ln()
    }
}

pub fn brute_max_log_volume(a: &DenseMatrix, k: usize) -> f64 {
    fn rec(a: &DenseMatrix, k: usize, start: usize, cur: &mut Vec<usize>, best: &mut f64) {
        if cur.len() == k {
            let rows: Vec<&[f64]> = cur.iter().map(|&i| a.row(i)).collect();
            *best = best.max(log_volume_det(&rows));
            return;
        }
        for i in start..a.nrows() {
            cur.push(i);
            rec(a, k, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(a, k, 0, &mut vec![], &mut best);
    best
}

/// `max <c, x>` s.t. `|<a_i, x>| <= 1` in three dimensions by enumerating
/// every vertex of the polytope.
pub fn vertex_lp3(a: &DenseMatrix, c: &[f64]) -> f64 {
    let n = a.nrows();
    let feasible = |x: &Vector3<f64>| (0..n).all(|i| dot(a.row(i), x.as_slice()).abs() <= 1.0 + 1e-9);
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = Matrix3::from_fn(|r, col| a.row([i, j, k][r])[col]);
                let Some(inv) = m.try_inverse() else { continue };
                if m.determinant().abs() < 1e-12 {
                    continue;
                }
                for s in 0..8u8 {
                    let rhs = Vector3::from_fn(|r, _| if s >> r & 1 == 1 { 1.0 } else { -1.0 });
                    let x = inv * rhs;
                    if feasible(&x) {
                        best = best.max(c[0] * x[0] + c[1] * x[1] + c[2] * x[2]);
                    }
                }
            }
        }
    }
    best
}

/// `min_c (max_i |a_i - c| - min_i |a_i - c|)` over a grid covering the
/// bounding box of planar points.
pub fn shell_grid(a: &DenseMatrix, steps: usize) -> f64 {
    let xs = a.column(0);
    let ys = a.column(1);
    let (x0, x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let mut best = f64::INFINITY;
    for gx in 0..=steps {
        for gy in 0..=steps {
            let cx = x0 + (x1 - x0) * gx as f64 / steps as f64;
            let cy = y0 + (y1 - y0) * gy as f64 / steps as f64;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..a.nrows() {
                let r = ((xs[i] - cx).powi(2) + (ys[i] - cy).powi(2)).sqrt();
                lo = lo.min(r);
                hi = hi.max(r);
            }
            best = best.min(hi - lo);
        }
    }
    best
}

/// `min_x ||Bx - c||_p` for `p >= 2` by damped Newton on `sum |r_i|^p`.
pub fn lp_regression(b: &DMatrix<f64>, c: &[f64], p: f64) -> f64 {
    let d = b.ncols();
    let cv = DVector::from_column_slice(c);
    let obj = |x: &DVector<f64>| -> f64 { (b * x - &cv).iter().map(|r| r.abs().powf(p)).sum() };
    let mut x = pinv(b) * &cv;
    let mut f = obj(&x);
    for _ in 0..500 {
        let r = b * &x - &cv;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..b.nrows() {
            let bi = b.row(i).transpose();
            let a = r[i].abs();
            grad += &bi * (p * a.powf(p - 2.0) * r[i]);
            hess += &bi * bi.transpose() * (p * (p - 1.0) * a.powf(p - 2.0));
        }
        let ridge = 1e-14 * hess.diagonal().max().max(f64::MIN_POSITIVE);
        for j in 0..d {
            hess[(j, j)] += ridge;
        }
        let Some(step) = hess.lu().solve(&grad) else { break };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = &x - &step * t;
            let fc = obj(&cand);
            if fc < f {
                x = cand;
                moved = f - fc > 1e-15 * f;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    f.powf(1.0 / p)
}

/// Kolmogorov-Smirnov distance between a sample and the Exp(1) law.
pub fn ks_exp1(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = 1.0 - (-x).exp();
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Eigenvalues of `G^{-1/2} H G^{-1/2}` for positive definite `G`.
pub fn relative_spectrum(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Vec<f64> {
    let eig = g.clone().symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let m = &inv_sqrt * h * &inv_sqrt;
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigen().eigenvalues.iter().copied().collect()
}
