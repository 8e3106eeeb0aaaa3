//! ℓp Lewis weights: offline fixed point, averaged iterate, multi-pass
//! streaming drivers, weight switching and change of density.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{khatri_rao_lift, PsdFactor, Tolerances};
use crate::matrix::{check_finite, norm2, DenseMatrix, QuadraticForm};
use crate::parallel::par_map;
use crate::source::{MatrixSource, ReplayableRowSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Exact,
    OneSided,
    Overestimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LewisWeights {
    pub p: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub kind: WeightKind,
    pub w: Vec<f64>,
}

impl LewisWeights {
    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// `M = A^T W^{1-2/p} A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LewisQuadratic {
    pub m: QuadraticForm,
    pub p: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// `None` means `ceil(log2 log2 n) + 8`.
    pub iterations: Option<usize>,
    pub gamma: f64,
    /// Stop early once the residual drops to this value.
    pub tol: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { iterations: None, gamma: 0.0, tol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub weights: LewisWeights,
    pub quadratic: LewisQuadratic,
    pub iterations: usize,
    pub residual: f64,
}

pub fn default_iterations(n: usize) -> usize {
    let l = (n.max(4) as f64).log2().log2();
    l.ceil() as usize + 8
}

/// Step size for the log-space damped update used when `p >= 4`, where the
/// plain map stops contracting. It balances the two ends of the Jacobian
/// spectrum, giving rate `(p-2)/(p+2)`.
fn damping(p: f64) -> f64 {
    if p < 4.0 { 1.0 } else { 4.0 / (p + 2.0) }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must be positive and finite, got {p}")));
    }
    Ok(())
}

/// `w^{1-2/p}` with the convention that a zero weight contributes nothing.
fn density(w: f64, p: f64) -> f64 {
    if w <= 0.0 { 0.0 } else { w.powf(1.0 - 2.0 / p) }
}

fn weighted_gram(a: &DenseMatrix, coef: &[f64]) -> DMatrix<f64> {
    let mut q = QuadraticForm::zeros(a.ncols());
    for (r, &c) in a.rows().zip(coef) {
        if c != 0.0 {
            q.add_outer(r, c);
        }
    }
    q.matrix().clone()
}

fn factor(m: DMatrix<f64>) -> Result<PsdFactor> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularQuadratic);
    }
    let f = PsdFactor::from_matrix(m, Tolerances::default());
    if f.rank() == 0 {
        return Err(Error::SingularQuadratic);
    }
    Ok(f)
}

fn inverse_forms(a: &DenseMatrix, f: &PsdFactor) -> Vec<f64> {
    a.rows().map(|r| f.inverse_form(r)).collect()
}

/// `max_i |w_i - tau_i(W^{1/2-1/p} A)|`, or the thresholded-map residual when
/// `gamma > 0`.
pub fn fixed_point_residual(a: &DenseMatrix, w: &[f64], p: f64, gamma: f64) -> Result<f64> {
    let coef: Vec<f64> = w.iter().map(|&v| density(v, p)).collect();
    let f = factor(weighted_gram(a, &coef))?;
    let lev = inverse_forms(a, &f);
    Ok(residual_from(w, &coef, &lev, p, gamma))
}

fn residual_from(w: &[f64], coef: &[f64], lev: &[f64], p: f64, gamma: f64) -> f64 {
    w.iter()
        .zip(coef)
        .zip(lev)
        .map(|((&wi, &ci), &li)| {
            if gamma > 0.0 {
                (wi - gamma.max(li.powf(p / 2.0))).abs()
            } else {
                (wi - ci * li).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Iterates `w_i <- max(gamma, (a_i^T (A^T W^{1-2/p} A)^- a_i)^{p/2})` from all
/// ones. For `p >= 4` the update is damped in log space.
pub fn lewis_fixed_point(a: &DenseMatrix, p: f64, cfg: &FixedPointConfig) -> Result<FixedPointSolution> {
    check_p(p)?;
    check_finite(a.data())?;
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EmptyStream);
    }
    let iters = cfg.iterations.unwrap_or_else(|| default_iterations(n));
    let eta = damping(p);
    let mut w: Vec<f64> = a.rows().map(|r| if norm2(r) > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut done = 0;
    let mut residual;
    loop {
        let coef: Vec<f64> = w.iter().map(|&v| density(v, p)).collect();
        let f = factor(weighted_gram(a, &coef))?;
        let lev = inverse_forms(a, &f);
        residual = residual_from(&w, &coef, &lev, p, cfg.gamma);
        if residual <= cfg.tol || done == iters {
            break;
        }
        for (wi, li) in w.iter_mut().zip(&lev) {
            let target = cfg.gamma.max(li.powf(p / 2.0));
            *wi = if eta == 1.0 || *wi <= 0.0 || target <= 0.0 {
                target
            } else {
                wi.powf(1.0 - eta) * target.powf(eta)
            };
        }
        done += 1;
    }
    let coef: Vec<f64> = w.iter().map(|&v| density(v, p)).collect();
    let m = QuadraticForm::from_matrix(weighted_gram(a, &coef))?;
    Ok(FixedPointSolution {
        weights: LewisWeights { p, gamma: cfg.gamma, alpha: 1.0, kind: WeightKind::Exact, w },
        quadratic: LewisQuadratic { m, p, gamma: cfg.gamma },
        iterations: done,
        residual,
    })
}

/// `round_delta(x) = delta * ceil(x / delta)`.
pub fn round_up(x: f64, delta: f64) -> f64 {
    delta * (x / delta).ceil()
}

/// Largest power of two at most `level / 16`.
pub fn rounding_quantum(level: f64) -> f64 {
    2f64.powi((level / 16.0).log2().floor() as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassMode {
    FewPass,
    LogPass,
}

/// Output of a streaming driver. Only `d x d` forms and scalars are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamLewis {
    pub mode: PassMode,
    pub quadratic: LewisQuadratic,
    /// `Q_(0), ..., Q_(T-1)` for LogPass; empty for FewPass.
    pub rounds: Vec<QuadraticForm>,
    pub passes: usize,
    pub rounds_run: usize,
    pub n: usize,
    pub d: usize,
    pub floor: f64,
    pub delta: f64,
}

impl StreamLewis {
    /// `max(gamma, (a^T M^- a)^{p/2})`.
    pub fn recover(&self, a: &[f64]) -> Result<f64> {
        recover_weights(&self.quadratic, a)
    }

    /// Averaged LogPass weight `(3 / 2T) sum_t w_(t)` for row `a`.
    pub fn recover_averaged(&self, a: &[f64]) -> Result<f64> {
        if self.mode != PassMode::LogPass {
            return Err(Error::InvalidArgument("averaged weights need LogPass".into()));
        }
        let factors: Vec<PsdFactor> = self
            .rounds
            .iter()
            .map(|q| factor(q.matrix().clone()))
            .collect::<Result<_>>()?;
        let chain = log_chain(a, &factors, self.quadratic.p, self.floor, self.delta);
        let t = chain.len() as f64;
        Ok(1.5 / t * chain.iter().sum::<f64>())
    }
}

/// `w_(1..=t)` for one row from the frozen round quadratics.
fn log_chain(a: &[f64], rounds: &[PsdFactor], p: f64, floor: f64, delta: f64) -> Vec<f64> {
    let mut w = floor;
    rounds
        .iter()
        .map(|f| {
            let tau = density(w, p) * f.inverse_form(a);
            w = round_up(floor.max(tau), delta);
            w
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// FewPass rounds; `None` means `ceil(log2 log2 n) + 8`. LogPass always
    /// runs `ceil(log2(n/d)) + 4` rounds.
    pub rounds: Option<usize>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { rounds: None }
    }
}

/// Computes a Lewis quadratic by replaying `src`.
///
/// FewPass: one pass for `A^T A`, then `T` passes of
/// `Q <- sum round_delta(max(d/n, (a^T M^- a)^{p/2})^{1-2/p}) a a^T`, `M <- Q`.
/// LogPass: one pass for `Q_(0)`, then one pass per round recomputing each row's
/// weight chain from the stored quadratics.
pub fn stream_lewis_quadratic(
    src: &mut dyn ReplayableRowSource,
    p: f64,
    mode: PassMode,
    cfg: &StreamConfig,
) -> Result<StreamLewis> {
    check_p(p)?;
    let d = src.dim();
    let start = src.passes();
    let mut gram = QuadraticForm::zeros(d);
    let n = src.pass(&mut |_, r| {
        check_finite(r)?;
        gram.add_outer(r, 1.0);
        Ok(())
    })?;
    if n == 0 {
        return Err(Error::EmptyStream);
    }
    let floor = (d as f64 / n as f64).min(1.0);
    match mode {
        PassMode::FewPass => {
            if p >= 4.0 {
                return Err(Error::InvalidArgument("FewPass needs p < 4".into()));
            }
            let level = if p >= 2.0 { floor.powf(1.0 - 2.0 / p) } else { 1.0 };
            let delta = rounding_quantum(level);
            let rounds = cfg.rounds.unwrap_or_else(|| default_iterations(n));
            let mut m = gram;
            for _ in 0..rounds {
                let f = factor(m.matrix().clone())?;
                let mut q = QuadraticForm::zeros(d);
                src.pass(&mut |_, r| {
                    let w = floor.max(f.inverse_form(r).powf(p / 2.0));
                    q.add_outer(r, round_up(density(w, p), delta));
                    Ok(())
                })?;
                m = q;
            }
            let gamma = 1.0 / (n as f64 * n as f64);
            Ok(StreamLewis {
                mode,
                quadratic: LewisQuadratic { m, p, gamma },
                rounds: vec![],
                passes: src.passes() - start,
                rounds_run: rounds,
                n,
                d,
                floor,
                delta,
            })
        }
        PassMode::LogPass => {
            if p < 2.0 {
                return Err(Error::InvalidArgument("LogPass needs p >= 2".into()));
            }
            let delta = rounding_quantum(floor);
            let t = ((n as f64 / d as f64).log2().ceil().max(0.0) as usize) + 4;
            let q0 = QuadraticForm::from_matrix(gram.matrix() * density(floor, p))?;
            let mut forms = vec![q0];
            let mut factors = vec![factor(forms[0].matrix().clone())?];
            for _ in 1..t {
                let mut q = QuadraticForm::zeros(d);
                src.pass(&mut |_, r| {
                    let chain = log_chain(r, &factors, p, floor, delta);
                    q.add_outer(r, density(*chain.last().expect("nonempty"), p));
                    Ok(())
                })?;
                factors.push(factor(q.matrix().clone())?);
                forms.push(q);
            }
            let last = forms.last().expect("nonempty").clone();
            Ok(StreamLewis {
                mode,
                quadratic: LewisQuadratic { m: last, p, gamma: floor },
                rounds: forms,
                passes: src.passes() - start,
                rounds_run: t,
                n,
                d,
                floor,
                delta,
            })
        }
    }
}

/// `max(gamma, (a^T M^- a)^{p/2})`.
pub fn recover_weights(q: &LewisQuadratic, a: &[f64]) -> Result<f64> {
    check_finite(a)?;
    if a.iter().all(|&v| v == 0.0) {
        return Ok(q.gamma);
    }
    let f = factor(q.m.matrix().clone())?;
    if f.range_residual(a) > Tolerances::default().span * norm2(a) {
        return Err(Error::SingularQuadratic);
    }
    Ok(q.gamma.max(f.inverse_form(a).powf(q.p / 2.0)))
}

/// Averaged-iterate overestimates for `p >= 2`: `w = (3/2T) sum_t w_(t)` with
/// `w_(t) = round_delta(max(d/n, w_(t-1)^{1-2/p} a^T Q_(t-1)^- a))`.
pub fn lewis_averaged(a: &DenseMatrix, p: f64) -> Result<LewisWeights> {
    let mut src = MatrixSource::new(a);
    let s = stream_lewis_quadratic(&mut src, p, PassMode::LogPass, &StreamConfig::default())?;
    let factors: Vec<PsdFactor> =
        s.rounds.iter().map(|q| factor(q.matrix().clone())).collect::<Result<_>>()?;
    let rows: Vec<&[f64]> = a.rows().collect();
    let t = s.rounds_run as f64;
    let w: Vec<f64> = par_map(&rows, |r| {
        1.5 / t * log_chain(r, &factors, p, s.floor, s.delta).iter().sum::<f64>()
    });
    let alpha = (w.iter().sum::<f64>() / a.ncols() as f64).max(1.0);
    Ok(LewisWeights { p, gamma: s.floor, alpha, kind: WeightKind::Overestimate, w })
}

/// `tau_i(W^{1/2-1/p} A)` for every row.
pub fn lewis_leverage(a: &DenseMatrix, w: &[f64], p: f64) -> Result<Vec<f64>> {
    let coef: Vec<f64> = w.iter().map(|&v| density(v, p)).collect();
    let f = factor(weighted_gram(a, &coef))?;
    Ok(inverse_forms(a, &f).iter().zip(&coef).map(|(l, c)| l * c).collect())
}

/// `R = (A^T W^{1-2/p} A)^{-1/2}` on the range; `||e_i^T A R||_2^p <= w_i` for
/// one-sided weights.
pub fn lewis_basis(a: &DenseMatrix, w: &[f64], p: f64) -> Result<DMatrix<f64>> {
    let coef: Vec<f64> = w.iter().map(|&v| density(v, p)).collect();
    let f = factor(weighted_gram(a, &coef))?;
    let d = a.ncols();
    let mut r = DMatrix::zeros(d, d);
    for j in 0..f.rank() {
        let v = f.vecs.column(j);
        r += (&v * v.transpose()) / f.vals[j].sqrt();
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub p: f64,
    pub q: f64,
    /// `max_i |v_i - w_i| / w_i` over rows with `w_i > 0`.
    pub max_relative: f64,
    pub max_absolute: f64,
    /// `max_i (tau_i(W^{1/2-1/q} B) - w_i)^+`, the one-sided check at index q.
    pub one_sided_violation: f64,
}

fn precise() -> FixedPointConfig {
    FixedPointConfig { iterations: Some(500), gamma: 0.0, tol: 1e-14 }
}

/// Checks `w^q(W^{1/q-1/p} A) = w^p(A)` numerically.
pub fn switch_weights(a: &DenseMatrix, p: f64, q: f64) -> Result<SwitchReport> {
    check_p(q)?;
    let wp = lewis_fixed_point(a, p, &precise())?.weights.w;
    let b = reweight(a, &wp, 1.0 / q - 1.0 / p);
    let wq = lewis_fixed_point(&b, q, &precise())?.weights.w;
    let mut max_relative: f64 = 0.0;
    let mut max_absolute: f64 = 0.0;
    for (x, y) in wp.iter().zip(&wq) {
        max_absolute = max_absolute.max((x - y).abs());
        if *x > 0.0 {
            max_relative = max_relative.max((x - y).abs() / x);
        }
    }
    let tau = lewis_leverage(&b, &wp, q)?;
    let one_sided_violation = tau.iter().zip(&wp).map(|(t, w)| (t - w).max(0.0)).fold(0.0, f64::max);
    Ok(SwitchReport { p, q, max_relative, max_absolute, one_sided_violation })
}

/// `diag(w^e) A`, zero rows where `w = 0`.
fn reweight(a: &DenseMatrix, w: &[f64], e: f64) -> DenseMatrix {
    let s: Vec<f64> = w.iter().map(|&v| if v > 0.0 { v.powf(e) } else { 0.0 }).collect();
    a.scale_rows(&s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfDensity {
    pub b: DenseMatrix,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub lambda: f64,
    /// `lambda` when `p >= q`, `kappa` when `q >= p`; `multiplier * ||Bx||_q`
    /// is the lower-bounding estimator of `||Ax||_p`.
    pub multiplier: f64,
}

impl ChangeOfDensity {
    /// Total distortion `kappa * lambda`.
    pub fn distortion(&self) -> f64 {
        self.kappa * self.lambda
    }
}

/// `B = W^{1/q-1/p} A` with the sandwich
/// `||Ax||_p <= multiplier ||Bx||_q <= kappa lambda ||Ax||_p`.
pub fn change_of_density(
    a: &DenseMatrix,
    q: f64,
    w: &LewisWeights,
    alpha: f64,
) -> Result<ChangeOfDensity> {
    let p = w.p;
    check_p(p)?;
    check_p(q)?;
    if w.w.len() != a.nrows() {
        return Err(Error::ShapeMismatch("one weight per row".into()));
    }
    if !(alpha >= 1.0) {
        return Err(Error::InvalidArgument("alpha must be >= 1".into()));
    }
    let d = a.ncols() as f64;
    let mass = w.sum();
    if mass > alpha * d * (1.0 + 1e-9) + 1e-9 {
        return Err(Error::KindMismatch(format!(
            "weights sum to {mass}, above alpha d = {}",
            alpha * d
        )));
    }
    let ad = alpha * d;
    let (kappa, lambda, multiplier) = if p >= q {
        let kappa = ad.powf(1.0 / q - 1.0 / p);
        let lambda = ad.powf((0.5 - 1.0 / q).max(0.0) * (p - q) / p);
        (kappa, lambda, lambda)
    } else {
        let kappa = ad.powf(1.0 / p - 1.0 / q);
        let lambda = ad.powf((0.5 - 1.0 / p).max(0.0) * (q - p) / q);
        (kappa, lambda, kappa)
    };
    Ok(ChangeOfDensity {
        b: reweight(a, &w.w, 1.0 / q - 1.0 / p),
        p,
        q,
        alpha,
        kappa,
        lambda,
        multiplier,
    })
}

/// Lewis weights at index `p/k` on the row-wise `k`-fold tensor lift.
pub fn lifted_lewis_weights(a: &DenseMatrix, p: f64, k: usize) -> Result<(DenseMatrix, FixedPointSolution)> {
    let lifted = khatri_rao_lift(a, k)?;
    let sol = lewis_fixed_point(&lifted, p / k as f64, &FixedPointConfig::default())?;
    Ok((lifted, sol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_are_ones() {
        for p in [1.0, 3.0, 6.0] {
            let s = lewis_fixed_point(&DenseMatrix::identity(4), p, &FixedPointConfig::default()).unwrap();
            for w in &s.weights.w {
                assert!((w - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p2_gives_leverage_in_one_step() {
        let a = crate::data::gaussian(40, 3, 5).unwrap();
        let cfg = FixedPointConfig { iterations: Some(1), ..Default::default() };
        let s = lewis_fixed_point(&a, 2.0, &cfg).unwrap();
        let lev = crate::linalg::leverage_scores(&a).unwrap();
        for (w, l) in s.weights.w.iter().zip(lev) {
            assert!((w - l).abs() < 1e-10);
        }
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(round_up(0.3, 0.25), 0.5);
        assert_eq!(round_up(0.5, 0.25), 0.5);
        assert_eq!(rounding_quantum(1.0), 1.0 / 16.0);
        assert_eq!(rounding_quantum(0.1), 1.0 / 256.0);
    }

    #[test]
    fn change_of_density_constants() {
        let a = DenseMatrix::identity(16);
        let w = LewisWeights { p: 4.0, gamma: 0.0, alpha: 1.0, kind: WeightKind::Exact, w: vec![1.0; 16] };
        let c = change_of_density(&a, 2.0, &w, 1.0).unwrap();
        assert!((c.distortion() - 2.0).abs() < 1e-12);
        let same = change_of_density(&a, 4.0, &w, 1.0).unwrap();
        assert_eq!((same.kappa, same.lambda), (1.0, 1.0));
        assert_eq!(same.b, a);
    }

    #[test]
    fn recover_zero_row_gives_gamma() {
        let q = LewisQuadratic { m: QuadraticForm::identity(2), p: 3.0, gamma: 0.01 };
        assert_eq!(recover_weights(&q, &[0.0, 0.0]).unwrap(), 0.01);
    }
}
