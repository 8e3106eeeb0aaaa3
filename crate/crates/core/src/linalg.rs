//! Dense kernels: leverage scores, sensitivities, pseudodeterminants,
//! orthogonal residuals, tensor lifts, and an incremental Gram tracker used by
//! every streaming structure.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_finite, norm2, DenseMatrix, QuadraticForm};

/// Numerical cutoffs shared by all span and rank decisions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Singular value `s` is kept iff `s > rank * s_max`.
    pub rank: f64,
    /// `a` is in a span iff the orthogonal residual is at most `span * |a|`.
    pub span: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rank: 1e-10, span: 1e-9 }
    }
}

/// Result of a span-aware sensitivity computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sensitivity {
    InSpan(f64),
    OutOfSpan,
}

impl Sensitivity {
    /// Online-score convention: out-of-span rows score 1, others are capped at 1.
    pub fn capped(self) -> f64 {
        match self {
            Sensitivity::InSpan(s) => s.min(1.0),
            Sensitivity::OutOfSpan => 1.0,
        }
    }

    pub fn is_out_of_span(self) -> bool {
        matches!(self, Sensitivity::OutOfSpan)
    }
}

/// Truncated SVD `A = U diag(sigma) V^T` with a relative rank cutoff.
#[derive(Clone, Debug)]
pub struct SpectralFactorization {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
    pub rank: usize,
}

impl SpectralFactorization {
    pub fn new(a: &DenseMatrix, tol: Tolerances) -> Result<Self> {
        check_finite(a.data())?;
        Ok(Self::from_nalgebra(a.to_nalgebra(), tol))
    }

    pub fn from_nalgebra(m: DMatrix<f64>, tol: Tolerances) -> Self {
        let (n, d) = m.shape();
        if n == 0 || d == 0 {
            return Self { u: DMatrix::zeros(n, 0), sigma: vec![], v: DMatrix::zeros(d, 0), rank: 0 };
        }
        let svd = SVD::new(m, true, true);
        let u_all = svd.u.expect("requested U");
        let vt_all = svd.v_t.expect("requested V^T");
        let s = svd.singular_values;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let smax = order.first().map(|&i| s[i]).unwrap_or(0.0);
        let keep: Vec<usize> =
            order.into_iter().filter(|&i| smax > 0.0 && s[i] > tol.rank * smax).collect();
        let r = keep.len();
        let u = DMatrix::from_fn(n, r, |i, j| u_all[(i, keep[j])]);
        let v = DMatrix::from_fn(d, r, |i, j| vt_all[(keep[j], i)]);
        let sigma = keep.iter().map(|&i| s[i]).collect();
        Self { u, sigma, v, rank: r }
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let s = DMatrix::from_diagonal(&DVector::from_vec(self.sigma.clone()));
        DenseMatrix::from_nalgebra(&(&self.u * s * self.v.transpose()))
    }

    /// Moore-Penrose pseudo-inverse `V diag(1/sigma) U^T`.
    pub fn pinv(&self) -> DMatrix<f64> {
        let inv = DMatrix::from_diagonal(&DVector::from_iterator(
            self.rank,
            self.sigma.iter().map(|s| 1.0 / s),
        ));
        &self.v * inv * self.u.transpose()
    }
}

/// Eigen-factorization of a PSD form restricted to its numerical range.
#[derive(Clone, Debug)]
pub struct PsdFactor {
    /// d x r orthonormal eigenvectors spanning the range.
    pub vecs: DMatrix<f64>,
    pub vals: Vec<f64>,
}

impl PsdFactor {
    pub fn new(q: &QuadraticForm, tol: Tolerances) -> Self {
        Self::from_matrix(q.matrix().clone(), tol)
    }

    pub fn from_matrix(m: DMatrix<f64>, tol: Tolerances) -> Self {
        let d = m.nrows();
        if d == 0 {
            return Self { vecs: DMatrix::zeros(0, 0), vals: vec![] };
        }
        let eig = SymmetricEigen::new(m);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut keep: Vec<usize> = (0..d)
            .filter(|&i| lmax > 0.0 && eig.eigenvalues[i] > tol.rank * lmax)
            .collect();
        keep.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let vecs = DMatrix::from_fn(d, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
        let vals = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
        Self { vecs, vals }
    }

    pub fn rank(&self) -> usize {
        self.vals.len()
    }

    /// `a^T Q^+ a`.
    pub fn inverse_form(&self, a: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.rank() {
            let c: f64 = self.vecs.column(j).iter().zip(a).map(|(v, x)| v * x).sum();
            s += c * c / self.vals[j];
        }
        s
    }

    /// Residual of `a` after projecting onto the range.
    pub fn range_residual(&self, a: &[f64]) -> f64 {
        let mut perp = a.to_vec();
        for _ in 0..2 {
            for j in 0..self.rank() {
                let col = self.vecs.column(j);
                let c: f64 = col.iter().zip(&perp).map(|(v, x)| v * x).sum();
                for (p, v) in perp.iter_mut().zip(col.iter()) {
                    *p -= c * v;
                }
            }
        }
        norm2(&perp)
    }

    /// Pseudo-inverse form `Q^+` as a dense matrix.
    pub fn pinv(&self) -> DMatrix<f64> {
        let d = self.vecs.nrows();
        let mut out = DMatrix::zeros(d, d);
        for j in 0..self.rank() {
            let v = self.vecs.column(j);
            out += (&v * v.transpose()) / self.vals[j];
        }
        out
    }

    pub fn log_pdet(&self) -> f64 {
        self.vals.iter().map(|v| v.ln()).sum()
    }
}

/// `tau_i(A) = a_i^T (A^T A)^- a_i`, via the thin SVD.
pub fn leverage_scores(a: &DenseMatrix) -> Result<Vec<f64>> {
    leverage_scores_with(a, Tolerances::default())
}

pub fn leverage_scores_with(a: &DenseMatrix, tol: Tolerances) -> Result<Vec<f64>> {
    let f = SpectralFactorization::new(a, tol)?;
    Ok((0..a.nrows()).map(|i| f.u.row(i).iter().map(|x| x * x).sum()).collect())
}

/// `a^T (B^T B)^- a` if `a` lies in the row span of `B`, else `OutOfSpan`.
pub fn generalized_sensitivity(a: &[f64], b: &DenseMatrix) -> Result<Sensitivity> {
    generalized_sensitivity_with(a, b, Tolerances::default())
}

pub fn generalized_sensitivity_with(
    a: &[f64],
    b: &DenseMatrix,
    tol: Tolerances,
) -> Result<Sensitivity> {
    check_finite(a)?;
    if a.len() != b.ncols() {
        return Err(Error::ShapeMismatch("vector length differs from column count".into()));
    }
    let f = SpectralFactorization::new(b, tol)?;
    let (_, perp) = project_onto(&f.v, a);
    if norm2(&perp) > tol.span * norm2(a) {
        return Ok(Sensitivity::OutOfSpan);
    }
    let mut s = 0.0;
    for j in 0..f.rank {
        let c: f64 = f.v.column(j).iter().zip(a).map(|(v, x)| v * x).sum();
        s += (c / f.sigma[j]).powi(2);
    }
    Ok(Sensitivity::InSpan(s))
}

/// Sum of log eigenvalues above the rank cutoff.
pub fn log_pseudodet(g: &QuadraticForm) -> Result<f64> {
    log_pseudodet_with(g, Tolerances::default())
}

pub fn log_pseudodet_with(g: &QuadraticForm, tol: Tolerances) -> Result<f64> {
    let f = PsdFactor::new(g, tol);
    if f.rank() == 0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(f.log_pdet())
}

/// Splits `a` into its projection onto `rowspan(B)` and the orthogonal rest.
pub fn orthogonal_residual(a: &[f64], b: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    check_finite(a)?;
    if a.len() != b.ncols() {
        return Err(Error::ShapeMismatch("vector length differs from column count".into()));
    }
    let f = SpectralFactorization::new(b, Tolerances::default())?;
    Ok(project_onto(&f.v, a))
}

/// Membership rule matching [`orthogonal_residual`].
pub fn in_rowspan(a: &[f64], b: &DenseMatrix, tol: Tolerances) -> Result<bool> {
    let (_, perp) = orthogonal_residual(a, b)?;
    Ok(norm2(&perp) <= tol.span * norm2(a))
}

/// Projection onto the span of orthonormal columns, applied twice for stability.
fn project_onto(basis: &DMatrix<f64>, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut perp = a.to_vec();
    let mut par = vec![0.0; a.len()];
    for _ in 0..2 {
        for j in 0..basis.ncols() {
            let col = basis.column(j);
            let c: f64 = col.iter().zip(&perp).map(|(v, x)| v * x).sum();
            for ((p, q), v) in perp.iter_mut().zip(par.iter_mut()).zip(col.iter()) {
                *p -= c * v;
                *q += c * v;
            }
        }
    }
    (par, perp)
}

pub const KHATRI_RAO_LIMIT: usize = 10_000;

/// Row-wise k-fold tensor power.
pub fn khatri_rao_lift(a: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    khatri_rao_lift_with_limit(a, k, KHATRI_RAO_LIMIT)
}

pub fn khatri_rao_lift_with_limit(a: &DenseMatrix, k: usize, limit: usize) -> Result<DenseMatrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let d = a.ncols();
    let dk = (0..k).try_fold(1usize, |acc, _| acc.checked_mul(d));
    let dk = match dk {
        Some(v) if v <= limit => v,
        _ => return Err(Error::SizeLimit(format!("{d}^{k} exceeds {limit}"))),
    };
    let mut data = Vec::with_capacity(a.nrows() * dk);
    for r in a.rows() {
        data.extend(tensor_power(r, k));
    }
    DenseMatrix::new(a.nrows(), dk, data)
}

/// `x ⊗ ... ⊗ x` with the first factor varying slowest.
pub fn tensor_power(x: &[f64], k: usize) -> Vec<f64> {
    let mut cur = vec![1.0];
    for _ in 0..k {
        let mut next = Vec::with_capacity(cur.len() * x.len());
        for &c in &cur {
            next.extend(x.iter().map(|v| c * v));
        }
        cur = next;
    }
    cur
}

/// Incrementally maintained `G = sum c_i a_i a_i^T` with an orthonormal basis of
/// its range and a Cholesky factor of `Q^T G Q`, giving `a^T G^+ a` and the span
/// test in `O(d r)` per query.
#[derive(Clone, Debug)]
pub struct GramTracker {
    d: usize,
    tol: Tolerances,
    basis: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    pending: usize,
    refactor_every: usize,
}

impl GramTracker {
    pub const DEFAULT_REFACTOR_EVERY: usize = 128;

    pub fn new(d: usize, tol: Tolerances) -> Self {
        Self {
            d,
            tol,
            basis: DMatrix::zeros(d, 0),
            gram: DMatrix::zeros(d, d),
            chol: None,
            pending: 0,
            refactor_every: Self::DEFAULT_REFACTOR_EVERY,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn gram(&self) -> QuadraticForm {
        QuadraticForm::from_matrix(self.gram.clone()).expect("gram stays finite")
    }

    pub fn gram_matrix(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn residual(&self, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        project_onto(&self.basis, a)
    }

    pub fn in_span(&self, a: &[f64]) -> bool {
        let (_, perp) = self.residual(a);
        norm2(&perp) <= self.tol.span * norm2(a)
    }

    pub fn sensitivity(&self, a: &[f64]) -> Sensitivity {
        let (_, perp) = self.residual(a);
        if norm2(&perp) > self.tol.span * norm2(a) {
            return Sensitivity::OutOfSpan;
        }
        Sensitivity::InSpan(self.inverse_form_in_span(a))
    }

    /// `a^T G^+ a`, assuming `a` is in the range.
    fn inverse_form_in_span(&self, a: &[f64]) -> f64 {
        let Some(chol) = &self.chol else { return 0.0 };
        let u = self.basis.transpose() * DVector::from_column_slice(a);
        match chol.l_dirty().solve_lower_triangular(&u) {
            Some(y) => y.norm_squared(),
            None => f64::INFINITY,
        }
    }

    /// `G += c a a^T`.
    pub fn add(&mut self, a: &[f64], c: f64) {
        if c == 0.0 || a.iter().all(|&v| v == 0.0) {
            return;
        }
        for i in 0..self.d {
            let ci = c * a[i];
            if ci != 0.0 {
                for j in 0..self.d {
                    self.gram[(i, j)] += ci * a[j];
                }
            }
        }
        let (_, perp) = self.residual(a);
        let pn = norm2(&perp);
        if pn > self.tol.span * norm2(a) && self.rank() < self.d {
            let r = self.rank();
            let mut nb = DMatrix::zeros(self.d, r + 1);
            nb.view_mut((0, 0), (self.d, r)).copy_from(&self.basis);
            for i in 0..self.d {
                nb[(i, r)] = perp[i] / pn;
            }
            self.basis = nb;
            self.refactor();
            return;
        }
        self.pending += 1;
        if self.pending >= self.refactor_every {
            self.refactor();
            return;
        }
        let u = self.basis.transpose() * DVector::from_column_slice(a) * c.abs().sqrt();
        match &mut self.chol {
            Some(ch) => ch.rank_one_update(&u, c.signum()),
            None => self.refactor(),
        }
    }

    /// Rebuilds the reduced Cholesky factor from the dense Gram.
    pub fn refactor(&mut self) {
        self.pending = 0;
        if self.rank() == 0 {
            self.chol = None;
            return;
        }
        let b = self.basis.transpose() * &self.gram * &self.basis;
        let b = (&b + b.transpose()) * 0.5;
        if let Some(ch) = Cholesky::new(b.clone()) {
            self.chol = Some(ch);
            return;
        }
        // Eigenvalues below the rank cutoff are lifted to it; this only happens
        // when a nearly dependent direction was admitted to the basis.
        let eig = SymmetricEigen::new(b);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v)).max(f64::MIN_POSITIVE);
        let floor = self.tol.rank * lmax;
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        self.chol = Cholesky::new((&fixed + fixed.transpose()) * 0.5);
    }
}
