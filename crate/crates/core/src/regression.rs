//! ℓp regression: an IRLS solver, sketch-and-solve through the ℓp→ℓq
//! embedding, a streaming coreset route and ℓ∞ regression from a coreset.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linf_coreset::Coreset;
use crate::lp::minimize_linf_residual;
use crate::lp_stream::LpQuadraticSketch;
use crate::matrix::{check_finite, dot, norm_p, DenseMatrix};
use crate::sampling::{lp_to_lq_embed, OnlineSpectralSampler, SampledMatrix};

pub const IRLS_MAX_ITERS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Offline,
    StreamingCoreset,
    LinfLp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub x: Vec<f64>,
    /// `||Ax - b||_p` over the full input, when it was retained.
    pub residual_p: Option<f64>,
    /// Residual measured on the sketch or coreset.
    pub sketch_residual: f64,
    pub certified_factor: f64,
    pub route: Route,
    pub p: f64,
    pub rows_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrlsResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// `||Bx - c||_q` after every accepted iterate, starting with least squares.
    pub history: Vec<f64>,
}

fn residual(b: &DenseMatrix, c: &[f64], x: &[f64]) -> Vec<f64> {
    b.rows().zip(c).map(|(r, ci)| dot(r, x) - ci).collect()
}

/// `argmin ||diag(sqrt w) (Bx - c)||_2` by SVD.
fn weighted_ls(b: &DenseMatrix, c: &[f64], w: Option<&[f64]>) -> Result<Vec<f64>> {
    let (n, d) = (b.nrows(), b.ncols());
    let s: Vec<f64> = match w {
        Some(w) => w.iter().map(|v| v.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let m = DMatrix::from_fn(n, d, |i, j| s[i] * b.get(i, j));
    let rhs = DVector::from_fn(n, |i, _| s[i] * c[i]);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(&rhs, 1e-12 * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::DegenerateInput(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Minimizes `||Bx - c||_q` for `q >= 2`. Each step is the IRLS step divided by
/// `q - 1` (a Newton step on `||Bx - c||_q^q`) with backtracking, so the
/// residual never increases.
pub fn irls_solve(b: &DenseMatrix, c: &[f64], q: f64, eps: f64) -> Result<IrlsResult> {
    check_finite(c)?;
    if c.len() != b.nrows() {
        return Err(Error::ShapeMismatch("right-hand side length".into()));
    }
    if !(q >= 2.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("IRLS needs finite q >= 2, got {q}")));
    }
    let mut x = weighted_ls(b, c, None)?;
    let mut f = norm_p(&residual(b, c, &x), q);
    let mut history = vec![f];
    if q == 2.0 {
        return Ok(IrlsResult { x, residual: f, iterations: 0, history });
    }
    let scale = norm_p(c, q).max(f64::MIN_POSITIVE);
    let mut it = 0;
    while it < IRLS_MAX_ITERS {
        if f <= 1e-15 * scale {
            break;
        }
        let r = residual(b, c, &x);
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 1e-12 * rmax.powf(q - 2.0);
        let w: Vec<f64> = r.iter().map(|v| v.abs().powf(q - 2.0).max(floor)).collect();
        let xi = weighted_ls(b, c, Some(&w))?;
        let step: Vec<f64> = xi.iter().zip(&x).map(|(a, b)| (a - b) / (q - 1.0)).collect();
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let fc = norm_p(&residual(b, c, &cand), q);
            if fc <= f {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        it += 1;
        let Some((cand, fc)) = accepted else { break };
        let gain = f - fc;
        x = cand;
        f = fc;
        history.push(f);
        if gain <= 1e-3 * eps * f {
            break;
        }
    }
    if !f.is_finite() {
        return Err(Error::NoConvergence { iterations: it, residual: f });
    }
    Ok(IrlsResult { x, residual: f, iterations: it, history })
}

/// Splits `[SA Sb]` into `SA` and `Sb`.
fn split_last(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let d = m.ncols() - 1;
    let cols: Vec<usize> = (0..d).collect();
    Ok((m.select_columns(&cols), m.column(d)))
}

/// Sketch-and-solve: embeds `[A b]` from ℓp into ℓq, solves the small ℓq
/// problem by IRLS, and reports the embedding's `kappa_total` as the factor.
pub fn sketch_solve_regression(
    a: &DenseMatrix,
    b: &[f64],
    p: f64,
    q: f64,
    eps: f64,
    budget: Option<usize>,
    seed: u64,
) -> Result<RegressionResult> {
    let ab = a.append_column(b)?;
    let emb = lp_to_lq_embed(&ab, p, q, eps, budget, seed)?;
    let (sa, sb) = split_last(&emb.sample.to_matrix())?;
    let sol = irls_solve(&sa, &sb, q, 1e-9)?;
    Ok(RegressionResult {
        residual_p: Some(norm_p(&residual(a, b, &sol.x), p)),
        x: sol.x,
        sketch_residual: sol.residual,
        certified_factor: emb.kappa_total,
        route: Route::Offline,
        p,
        rows_used: emb.sample.len(),
    })
}

/// Online coreset for ℓp regression over streamed `[a b]` rows: the quadratic
/// sketch supplies weights `w'_i`, online spectral sampling picks rows of
/// `W[A b]`, and weighted least squares solves on the kept rows.
#[derive(Clone, Debug)]
pub struct StreamingRegression {
    p: f64,
    eps: f64,
    sketch: LpQuadraticSketch,
    sampler: OnlineSpectralSampler,
}

impl StreamingRegression {
    /// `d` counts the columns of `A` only.
    pub fn new(d: usize, p: f64, eps: f64, n_declared: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            p,
            eps,
            sketch: LpQuadraticSketch::new(d + 1, p, n_declared)?,
            sampler: OnlineSpectralSampler::new(d + 1, eps, seed)?,
        })
    }

    pub fn ingest(&mut self, a: &[f64], b: f64) -> Result<()> {
        let mut row = a.to_vec();
        row.push(b);
        let i = self.sketch.rows_seen();
        let w = self.sketch.ingest(&row)?;
        self.sampler.ingest_at(i, &row, w)?;
        Ok(())
    }

    pub fn sample(&self) -> &SampledMatrix {
        self.sampler.sample()
    }

    /// `delta_p sqrt((1+eps)/(1-eps))`.
    pub fn certified_factor(&self) -> f64 {
        self.sketch.delta() * ((1.0 + self.eps) / (1.0 - self.eps)).sqrt()
    }

    pub fn solve(&self) -> Result<RegressionResult> {
        let s = self.sampler.sample();
        if s.is_empty() {
            return Err(Error::EmptyCoreset);
        }
        let (sa, sb) = split_last(&s.to_matrix())?;
        let x = weighted_ls(&sa, &sb, None)?;
        let sr = norm_p(&residual(&sa, &sb, &x), 2.0);
        Ok(RegressionResult {
            x,
            residual_p: None,
            sketch_residual: sr,
            certified_factor: self.certified_factor(),
            route: Route::StreamingCoreset,
            p: self.p,
            rows_used: s.len(),
        })
    }
}

pub fn streaming_regression_coreset(a: &DenseMatrix, b: &[f64], p: f64, eps: f64, seed: u64) -> Result<RegressionResult> {
    if b.len() != a.nrows() {
        return Err(Error::ShapeMismatch("right-hand side length".into()));
    }
    let mut s = StreamingRegression::new(a.ncols(), p, eps, a.nrows().max(1), seed)?;
    for (r, &bi) in a.rows().zip(b) {
        s.ingest(r, bi)?;
    }
    let mut out = s.solve()?;
    out.residual_p = Some(norm_p(&residual(a, b, &out.x), p));
    Ok(out)
}

/// `min_x ||A_S x - b_S||_inf` over a coreset of `[a b]` rows, factor
/// `sqrt(|S|)`.
pub fn linf_regression(c: &Coreset) -> Result<RegressionResult> {
    if c.is_empty() {
        return Err(Error::EmptyCoreset);
    }
    let (sa, sb) = split_last(&c.weighted_rows())?;
    let (x, r) = minimize_linf_residual(&sa, &sb)?;
    Ok(RegressionResult {
        x,
        residual_p: None,
        sketch_residual: r,
        certified_factor: c.delta(),
        route: Route::LinfLp,
        p: f64::INFINITY,
        rows_used: c.len(),
    })
}

/// Builds the coreset of `[A b]` and solves; the full residual is filled in.
pub fn linf_regression_stream(a: &DenseMatrix, b: &[f64]) -> Result<RegressionResult> {
    let ab = a.append_column(b)?;
    let c = crate::linf_coreset::build_coreset(&ab)?;
    let mut out = linf_regression(&c)?;
    out.residual_p = Some(norm_p(&residual(a, b, &out.x), f64::INFINITY));
    Ok(out)
}
