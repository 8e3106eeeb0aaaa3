//! Geometry on top of the ℓ∞ coreset: symmetrization, hull support and width
//! queries, ellipsoids, volume maximization, spherical shells and LPs.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{PsdFactor, Tolerances};
use crate::linf_coreset::{Coreset, Norm};
use crate::lp::{maximize_over_box, minimize_linf_residual};
use crate::matrix::{check_finite, dot, norm2, DenseMatrix, QuadraticForm};
use crate::parallel::par_map;
use crate::rng::substream;

/// Streams `±(a_i - a_1)` for `i >= 2` after storing `a_1`.
#[derive(Clone, Debug, Default)]
pub struct Symmetrizer {
    first: Option<Vec<f64>>,
}

impl Symmetrizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.first.as_deref()
    }

    /// `None` for the first row, else the pair `(a - a_1, a_1 - a)`.
    pub fn push(&mut self, a: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        check_finite(a)?;
        match &self.first {
            None => {
                self.first = Some(a.to_vec());
                Ok(None)
            }
            Some(f) => {
                if f.len() != a.len() {
                    return Err(Error::ShapeMismatch("row length".into()));
                }
                let plus: Vec<f64> = a.iter().zip(f).map(|(x, y)| x - y).collect();
                let minus = plus.iter().map(|v| -v).collect();
                Ok(Some((plus, minus)))
            }
        }
    }
}

/// Rows `±(a_i - a_1)`, `i >= 2`, in stream order.
pub fn symmetrize(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.nrows() == 0 {
        return Err(Error::EmptyStream);
    }
    let mut s = Symmetrizer::new();
    let mut out = DenseMatrix::zeros(0, a.ncols());
    for r in a.rows() {
        if let Some((p, m)) = s.push(r)? {
            out.push_row(&p)?;
            out.push_row(&m)?;
        }
    }
    Ok(out)
}

/// `max_i |<a_i, x>|`.
pub fn directional_height(a: &DenseMatrix, x: &[f64]) -> f64 {
    a.rows().fold(0.0, |m, r| m.max(dot(r, x).abs()))
}

/// `max_i <a_i, x> - min_i <a_i, x>`.
pub fn directional_width(a: &DenseMatrix, x: &[f64]) -> f64 {
    let (lo, hi) = a.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        let v = dot(r, x);
        (lo.min(v), hi.max(v))
    });
    if lo > hi { 0.0 } else { hi - lo }
}

/// `h_S(u) = max_{i in S} |<a_i, u>|`.
pub fn hull_support_query(c: &Coreset, u: &[f64]) -> Result<f64> {
    if c.is_empty() {
        return Err(Error::EmptyCoreset);
    }
    if u.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    c.query(u, Norm::Linf)
}

/// `{x : x^T H x <= 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub h: QuadraticForm,
}

impl Ellipsoid {
    /// `sqrt(x^T H x)`.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        self.h.eval(x).max(0.0).sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.h.eval(x) <= 1.0 + tol
    }

    /// Polar body, the inverse form on the range.
    pub fn polar(&self) -> Ellipsoid {
        let f = PsdFactor::new(&self.h, Tolerances::default());
        Ellipsoid { h: QuadraticForm::from_matrix(f.pinv()).expect("finite") }
    }

    /// Support function `max_{x in E} <u, x> = sqrt(u^T H^+ u)`.
    pub fn support(&self, u: &[f64]) -> f64 {
        PsdFactor::new(&self.h, Tolerances::default()).inverse_form(u).max(0.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipsoidTarget {
    /// `K = {x : ||Ax||_inf <= 1}`.
    Polytope,
    /// `K = conv(±a_i)`.
    Hull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidResult {
    pub target: EllipsoidTarget,
    pub ellipsoid: Ellipsoid,
    pub delta: f64,
    pub rank: usize,
}

/// Polytope: `E = {x : ||A_S x||_2 <= 1}` with `E ⊆ K ⊆ delta E`.
/// Hull: the polar of that, with `E/delta ⊆ K ⊆ E`, restricted to the span of
/// the coreset when it is rank deficient.
pub fn ellipsoid_from_coreset(c: &Coreset, target: EllipsoidTarget) -> Result<EllipsoidResult> {
    if c.is_empty() {
        return Err(Error::EmptyCoreset);
    }
    let g = c.gram();
    let rank = PsdFactor::new(&g, Tolerances::default()).rank();
    let e = Ellipsoid { h: g };
    let ellipsoid = match target {
        EllipsoidTarget::Polytope => e,
        EllipsoidTarget::Hull => e.polar(),
    };
    Ok(EllipsoidResult { target, ellipsoid, delta: c.delta(), rank })
}

/// `log vol` of the parallelepiped spanned by `rows`, via Gram–Schmidt:
/// `sum_i log ||row_i^perp||`. `-inf` when dependent.
pub fn log_volume(rows: &[&[f64]]) -> f64 {
    let mut basis: Vec<Vec<f64>> = vec![];
    let mut total = 0.0;
    for r in rows {
        let mut v = r.to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let n = norm2(&v);
        if n == 0.0 {
            return f64::NEG_INFINITY;
        }
        total += n.ln();
        basis.push(v.iter().map(|x| x / n).collect());
    }
    total
}

/// `(1/2) log det(R R^T)`, the same quantity through the Gram determinant.
pub fn log_volume_gram(rows: &[&[f64]]) -> f64 {
    let k = rows.len();
    let g = DMatrix::from_fn(k, k, |i, j| dot(rows[i], rows[j]));
    match g.cholesky() {
        Some(ch) => ch.l().diagonal().iter().map(|v| v.ln()).sum(),
        None => f64::NEG_INFINITY,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolmaxMode {
    Exact,
    Greedy,
}

pub const EXACT_VOLMAX_LIMIT: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolmaxResult {
    pub indices: Vec<usize>,
    pub log_volume: f64,
    pub coreset_size: usize,
    pub delta: f64,
    pub sketched: bool,
}

fn combinations(m: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, f);
            cur.pop();
        }
    }
    rec(0, m, k, &mut Vec::with_capacity(k), f);
}

/// Best `k`-subset of `rows` by volume, exhaustively.
pub fn exact_max_volume(rows: &[&[f64]], k: usize) -> (Vec<usize>, f64) {
    let mut best = (vec![], f64::NEG_INFINITY);
    combinations(rows.len(), k, &mut |s| {
        let pick: Vec<&[f64]> = s.iter().map(|&i| rows[i]).collect();
        let v = log_volume(&pick);
        if v > best.1 || best.0.is_empty() {
            best = (s.to_vec(), v);
        }
    });
    best
}

/// Pivoted Gram–Schmidt: repeatedly takes the largest residual.
pub fn greedy_max_volume(rows: &[&[f64]], k: usize) -> (Vec<usize>, f64) {
    let mut res: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let mut chosen = vec![];
    let mut total = 0.0;
    for _ in 0..k.min(rows.len()) {
        let (j, n) = res
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, r)| (i, norm2(r)))
            .fold((usize::MAX, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        chosen.push(j);
        if n <= 0.0 {
            total = f64::NEG_INFINITY;
            continue;
        }
        total += n.ln();
        let q: Vec<f64> = res[j].iter().map(|v| v / n).collect();
        for r in res.iter_mut() {
            let c = dot(&q, r);
            for (x, y) in r.iter_mut().zip(&q) {
                *x -= c * y;
            }
        }
    }
    (chosen, total)
}

/// Selects `k` stream rows of large volume: an ℓ∞ coreset of `AG` with
/// `G ~ N(0, 1/r)^{d x r}` (skipped when `r >= d`), then max volume among the
/// stored original rows.
pub fn volmax_select(a: &DenseMatrix, k: usize, r: usize, seed: u64, mode: VolmaxMode) -> Result<VolmaxResult> {
    let d = a.ncols();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let sketched = r < d;
    let g = if sketched {
        let mut rng = substream(seed, &[0x601]);
        let nd = Normal::new(0.0, (1.0 / r as f64).sqrt()).expect("valid variance");
        Some(DMatrix::from_fn(d, r, |_, _| nd.sample(&mut rng)))
    } else {
        None
    };
    let dim = if sketched { r } else { d };
    let mut core = Coreset::new(dim);
    let mut stored: Vec<usize> = vec![];
    for (i, row) in a.rows().enumerate() {
        let lifted: Vec<f64> = match &g {
            Some(g) => (0..r).map(|j| (0..d).map(|l| row[l] * g[(l, j)]).sum()).collect(),
            None => row.to_vec(),
        };
        if core.ingest_at(i, &lifted, 1.0)? == crate::linf_coreset::Decision::Kept {
            stored.push(i);
        }
    }
    let rows: Vec<&[f64]> = stored.iter().map(|&i| a.row(i)).collect();
    if rows.len() < k {
        return Err(Error::InsufficientRows { k, have: rows.len() });
    }
    let (pick, lv) = match mode {
        VolmaxMode::Exact => {
            if rows.len() > EXACT_VOLMAX_LIMIT {
                return Err(Error::SizeLimit(format!(
                    "coreset has {} rows, exact mode allows {EXACT_VOLMAX_LIMIT}",
                    rows.len()
                )));
            }
            exact_max_volume(&rows, k)
        }
        VolmaxMode::Greedy => greedy_max_volume(&rows, k),
    };
    let mut indices: Vec<usize> = pick.iter().map(|&j| stored[j]).collect();
    indices.sort_unstable();
    Ok(VolmaxResult { indices, log_volume: lv, coreset_size: core.len(), delta: core.delta(), sketched })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellResult {
    pub center: Vec<f64>,
    pub r_inner: f64,
    pub r_outer: f64,
    /// True when radii were recomputed against every streamed point.
    pub exact: bool,
    pub delta: f64,
    pub coreset_sizes: (usize, usize),
}

impl ShellResult {
    pub fn width(&self) -> f64 {
        self.r_outer - self.r_inner
    }
}

pub const SHELL_STARTS: usize = 16;
pub const SHELL_EVALS: usize = 500;

/// One-pass shell sketch. With `delta_i = a_i - a_1`, the rows
/// `b_i = (-2 delta_i, ||delta_i||^2)` and `b''_i = (b_i, 1)` satisfy
/// `<b_i, (c, 1)> = ||delta_i - c||^2 - ||c||^2` and
/// `<b''_i, (c, 1, ||c||^2)> = ||delta_i - c||^2`.
#[derive(Clone, Debug)]
pub struct ShellSketch {
    d: usize,
    anchor: Option<Vec<f64>>,
    lin: Coreset,
    quad: Coreset,
    n_seen: usize,
    distinct: bool,
}

impl ShellSketch {
    pub fn new(d: usize) -> Self {
        let mut quad = Coreset::new(d + 2);
        let mut e = vec![0.0; d + 2];
        e[d + 1] = 1.0;
        // b''_1 = (0, 0, 1) stands for the anchor itself.
        quad.ingest_at(0, &e, 1.0).expect("finite");
        Self { d, anchor: None, lin: Coreset::new(d + 1), quad, n_seen: 0, distinct: false }
    }

    pub fn ingest(&mut self, a: &[f64]) -> Result<()> {
        check_finite(a)?;
        if a.len() != self.d {
            return Err(Error::ShapeMismatch("row length".into()));
        }
        let i = self.n_seen;
        self.n_seen += 1;
        let Some(anchor) = &self.anchor else {
            self.anchor = Some(a.to_vec());
            return Ok(());
        };
        let delta: Vec<f64> = a.iter().zip(anchor).map(|(x, y)| x - y).collect();
        let sq = dot(&delta, &delta);
        if sq > 0.0 {
            self.distinct = true;
        }
        let mut b: Vec<f64> = delta.iter().map(|v| -2.0 * v).collect();
        b.push(sq);
        self.lin.ingest_at(i, &b, 1.0)?;
        b.push(1.0);
        self.quad.ingest_at(i, &b, 1.0)?;
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.lin.delta().max(self.quad.delta())
    }

    /// Stored points relative to the anchor, anchor included.
    fn stored_offsets(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.d]];
        for c in [&self.lin, &self.quad] {
            for r in c.rows() {
                if r[..self.d].iter().any(|&v| v != 0.0) {
                    out.push(r[..self.d].iter().map(|v| -0.5 * v).collect());
                }
            }
        }
        out
    }

    fn lift_lin(c: &[f64]) -> Vec<f64> {
        let mut v = c.to_vec();
        v.push(1.0);
        v
    }

    fn lift_quad(c: &[f64]) -> Vec<f64> {
        let mut v = Self::lift_lin(c);
        v.push(dot(c, c));
        v
    }

    /// `est(R^2 - r^2) / est(R)` at offset center `c`.
    fn objective(&self, c: &[f64]) -> f64 {
        let w = if self.lin.is_empty() { 0.0 } else { self.lin.query(&Self::lift_lin(c), Norm::Linf).unwrap_or(0.0) };
        let r2 = self.quad.query(&Self::lift_quad(c), Norm::Linf).unwrap_or(0.0);
        if r2 <= 0.0 {
            return 0.0;
        }
        w / r2.sqrt()
    }

    fn descend(&self, mut c: Vec<f64>, step0: f64) -> (f64, Vec<f64>) {
        let mut f = self.objective(&c);
        let mut step = step0;
        let mut evals = 1;
        while evals < SHELL_EVALS && step > 1e-14 * step0.max(1e-300) {
            let mut improved = false;
            for j in 0..self.d {
                for s in [step, -step] {
                    if evals >= SHELL_EVALS {
                        break;
                    }
                    let mut t = c.clone();
                    t[j] += s;
                    let ft = self.objective(&t);
                    evals += 1;
                    if ft < f {
                        f = ft;
                        c = t;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (f, c)
    }

    /// Center minimizing the coreset estimate of `R^2 - r^2` by LP, used as an
    /// extra start.
    fn lp_start(&self) -> Option<Vec<f64>> {
        if self.lin.is_empty() {
            return None;
        }
        let rows: Vec<Vec<f64>> = self.lin.rows().iter().map(|r| r[..self.d].to_vec()).collect();
        let rhs: Vec<f64> = self.lin.rows().iter().map(|r| -r[self.d]).collect();
        let m = DenseMatrix::from_rows(&rows).ok()?;
        minimize_linf_residual(&m, &rhs).ok().map(|(x, _)| x)
    }

    /// Optimizes the center; radii are exact over `retained` when given, and
    /// otherwise certified from the coresets.
    pub fn solve(&self, retained: Option<&DenseMatrix>) -> Result<ShellResult> {
        let Some(anchor) = &self.anchor else {
            return Err(Error::EmptyStream);
        };
        if !self.distinct {
            return Err(Error::DegenerateInput("all points coincide".into()));
        }
        let pts = self.stored_offsets();
        let m = pts.len() as f64;
        let centroid: Vec<f64> = (0..self.d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / m).collect();
        let spread = (pts.iter().map(|p| p.iter().zip(&centroid).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sum::<f64>() / m)
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let mut starts = vec![centroid.clone()];
        if let Some(c) = self.lp_start() {
            starts.push(c);
        }
        let mut rng = substream(0, &[0x5e11]);
        while starts.len() < SHELL_STARTS {
            starts.push(
                centroid
                    .iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        v + spread * z
                    })
                    .collect(),
            );
        }
        let runs = par_map(&starts, |s| self.descend(s.clone(), spread));
        let best = runs
            .into_iter()
            .fold((f64::INFINITY, centroid), |b, r| if r.0 < b.0 { r } else { b });
        let c_off = best.1;
        let center: Vec<f64> = c_off.iter().zip(anchor).map(|(x, y)| x + y).collect();
        let sizes = (self.lin.len(), self.quad.len());
        let delta = self.delta();
        if let Some(all) = retained {
            let (lo, hi) = all.rows().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                let dd: f64 = r.iter().zip(&center).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                (lo.min(dd), hi.max(dd))
            });
            return Ok(ShellResult { center, r_inner: lo, r_outer: hi, exact: true, delta, coreset_sizes: sizes });
        }
        let cc = dot(&c_off, &c_off);
        let h = if self.lin.is_empty() { 0.0 } else { self.lin.query(&Self::lift_lin(&c_off), Norm::Linf)? };
        let rq = self.quad.query(&Self::lift_quad(&c_off), Norm::Linf)?;
        let outer2 = (self.quad.delta() * rq).min(cc + self.lin.delta() * h);
        let inner2 = (cc - self.lin.delta() * h).max(0.0);
        Ok(ShellResult {
            center,
            r_inner: inner2.sqrt(),
            r_outer: outer2.sqrt(),
            exact: false,
            delta,
            coreset_sizes: sizes,
        })
    }
}

/// Shell for a retained point set; radii are exact over all points.
pub fn shell_solve(a: &DenseMatrix) -> Result<ShellResult> {
    if a.nrows() < 2 {
        return Err(Error::DegenerateInput("need at least two points".into()));
    }
    let mut s = ShellSketch::new(a.ncols());
    for r in a.rows() {
        s.ingest(r)?;
    }
    s.solve(Some(a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub x_hat: Vec<f64>,
    pub value: f64,
    /// Optimum over the coreset polytope, an upper bound on the true optimum.
    pub coreset_value: f64,
    pub delta: f64,
}

/// `max <c, x>` over `K = {||Ax||_inf <= 1}` from the coreset: solves over
/// `K_S ⊇ K` and scales by `1/delta`, so `x_hat ∈ K` and
/// `max_K <c, x> <= delta <c, x_hat>`.
pub fn lp_maximize(c_obj: &[f64], c: &Coreset) -> Result<LpResult> {
    if c.is_empty() {
        return Err(Error::EmptyCoreset);
    }
    let (x, v) = maximize_over_box(c_obj, &c.weighted_rows())?;
    let delta = c.delta();
    let x_hat: Vec<f64> = x.iter().map(|v| v / delta).collect();
    Ok(LpResult { value: dot(c_obj, &x_hat), x_hat, coreset_value: v, delta })
}
