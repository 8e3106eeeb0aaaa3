//! One-pass ℓp subspace sketches: the ℓ2-quadratic sketch, the ℓq trade-off
//! sketch, and the exponential-variable ℓp→ℓ∞ embedding.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{GramTracker, PsdFactor, Sensitivity, Tolerances};
use crate::linf_coreset::{Coreset, Decision, Norm};
use crate::matrix::{check_finite, DenseMatrix, QuadraticForm};
use crate::rng::exponential;
use crate::sampling::MergeTreeSummary;
use crate::sensitivity::{lq_sensitivity_ascent, lq_sensitivity_net, AscentConfig};

/// `2^{ceil(log2 w)}`.
pub fn round_pow2(w: f64) -> f64 {
    2f64.powi(w.log2().ceil() as i32)
}

fn check_row(a: &[f64], d: usize) -> Result<()> {
    check_finite(a)?;
    if a.len() != d {
        return Err(Error::ShapeMismatch(format!("row of length {} in dimension {d}", a.len())));
    }
    Ok(())
}

/// Rebuilds a tracker holding the PSD form `q`.
fn tracker_from(q: &QuadraticForm) -> GramTracker {
    let mut t = GramTracker::new(q.dim(), Tolerances::default());
    let f = PsdFactor::new(q, Tolerances::default());
    for j in 0..f.rank() {
        let v: Vec<f64> = f.vecs.column(j).iter().copied().collect();
        t.add(&v, f.vals[j]);
    }
    t
}

/// Deterministic sketch `Q = sum w'_i^2 a_i a_i^T` with
/// `||Ax||_p <= sqrt(x^T Q x) <= delta_p ||Ax||_p`.
#[derive(Clone, Debug)]
pub struct LpQuadraticSketch {
    d: usize,
    p: f64,
    n_declared: usize,
    rows_seen: usize,
    tracker: GramTracker,
    weight_log: Vec<f64>,
    /// `sum s_i^{p/2}`.
    s_sum: f64,
    /// `sum w'_i^{2p/(p-2)}`.
    holder_sum: f64,
}

impl LpQuadraticSketch {
    pub fn new(d: usize, p: f64, n_declared: usize) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("p must be finite and >= 2, got {p}")));
        }
        if n_declared == 0 {
            return Err(Error::InvalidArgument("n_declared must be positive".into()));
        }
        Ok(Self {
            d,
            p,
            n_declared,
            rows_seen: 0,
            tracker: GramTracker::new(d, Tolerances::default()),
            weight_log: vec![],
            s_sum: 0.0,
            holder_sum: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_declared(&self) -> usize {
        self.n_declared
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn weight_log(&self) -> &[f64] {
        &self.weight_log
    }

    pub fn form(&self) -> QuadraticForm {
        self.tracker.gram()
    }

    pub fn s_sum(&self) -> f64 {
        self.s_sum
    }

    /// Thresholded sensitivity `max(min(a^T Q^+ a, 1), 1/n)`; 1 out of span.
    pub fn threshold_sensitivity(&self, a: &[f64]) -> f64 {
        match self.tracker.sensitivity(a) {
            Sensitivity::OutOfSpan => 1.0,
            Sensitivity::InSpan(s) => s.min(1.0).max(1.0 / self.n_declared as f64),
        }
    }

    /// Applies row `a` with weight `w' = 2^{ceil(log2 s^{p/4-1/2})}`.
    pub fn ingest(&mut self, a: &[f64]) -> Result<f64> {
        check_row(a, self.d)?;
        if self.rows_seen == self.n_declared {
            return Err(Error::StreamOverflow(self.n_declared));
        }
        self.rows_seen += 1;
        if a.iter().all(|&v| v == 0.0) {
            return Ok(1.0);
        }
        let s = self.threshold_sensitivity(a);
        let w = s.powf(self.p / 4.0 - 0.5);
        let wr = round_pow2(w);
        self.tracker.add(a, wr * wr);
        self.weight_log.push(wr);
        self.s_sum += s.powf(self.p / 2.0);
        if self.p > 2.0 {
            self.holder_sum += wr.powf(2.0 * self.p / (self.p - 2.0));
        }
        Ok(wr)
    }

    /// `sqrt(x^T Q x)`.
    pub fn query(&self, x: &[f64]) -> f64 {
        self.tracker.gram().eval(x).max(0.0).sqrt()
    }

    /// Certified upper distortion from Hölder:
    /// `(sum w'^{2p/(p-2)})^{(1/2)(1-2/p)}`; exactly 1 at `p = 2`.
    pub fn delta(&self) -> f64 {
        if self.p == 2.0 {
            return 1.0;
        }
        self.holder_sum.powf(0.5 * (1.0 - 2.0 / self.p))
    }

    /// `sqrt(2 (1 + sum s_i^{p/2}))^{1-2/p}`, the chain-formula value. Rounding
    /// up to powers of two can exceed it, so it is informational only.
    pub fn chain_delta(&self) -> f64 {
        (2.0 * (1.0 + self.s_sum)).sqrt().powf(1.0 - 2.0 / self.p)
    }

    pub fn merge(&self, other: &LpQuadraticSketch) -> Result<Self> {
        if self.d != other.d || self.p != other.p || self.n_declared != other.n_declared {
            return Err(Error::ShapeMismatch("sketches differ in d, p or n_declared".into()));
        }
        let q = self.form().add(&other.form())?;
        let mut out = self.clone();
        out.tracker = tracker_from(&q);
        out.rows_seen += other.rows_seen;
        out.weight_log.extend_from_slice(&other.weight_log);
        out.s_sum += other.s_sum;
        out.holder_sum += other.holder_sum;
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct QuadraticRepr {
    p: f64,
    d: usize,
    n_declared: usize,
    rows_seen: usize,
    #[serde(rename = "Q")]
    q: QuadraticForm,
    weight_log: Vec<f64>,
    s_sum: f64,
    holder_sum: f64,
}

impl Serialize for LpQuadraticSketch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QuadraticRepr {
            p: self.p,
            d: self.d,
            n_declared: self.n_declared,
            rows_seen: self.rows_seen,
            q: self.form(),
            weight_log: self.weight_log.clone(),
            s_sum: self.s_sum,
            holder_sum: self.holder_sum,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LpQuadraticSketch {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = QuadraticRepr::deserialize(de)?;
        if r.q.dim() != r.d {
            return Err(serde::de::Error::custom("Q dimension differs from d"));
        }
        Ok(Self {
            d: r.d,
            p: r.p,
            n_declared: r.n_declared,
            rows_seen: r.rows_seen,
            tracker: tracker_from(&r.q),
            weight_log: r.weight_log,
            s_sum: r.s_sum,
            holder_sum: r.holder_sum,
        })
    }
}

/// Trade-off sketch for `2 <= q < p`: rows are weighted by
/// `w = s^{(p/q-1)/q}` (rounded up to a power of two) and fed to an inner
/// ℓq merge-and-reduce summary.
#[derive(Clone, Debug)]
pub struct LqTradeoffSketch {
    d: usize,
    p: f64,
    q: f64,
    n_declared: usize,
    rows_seen: usize,
    inflation: f64,
    weighted: GramTracker,
    inner: MergeTreeSummary,
    ascent: AscentConfig,
    weight_log: Vec<f64>,
    holder_sum: f64,
}

impl LqTradeoffSketch {
    /// Inflation 2 for `q > 2`; at `q = 2` the sensitivity is exact and no
    /// inflation is applied.
    pub fn new(d: usize, p: f64, q: f64, n_declared: usize, block: usize, seed: u64) -> Result<Self> {
        if !(q >= 2.0 && q < p && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("need 2 <= q < p, got q = {q}, p = {p}")));
        }
        if n_declared == 0 {
            return Err(Error::InvalidArgument("n_declared must be positive".into()));
        }
        let inflation = if q == 2.0 { 1.0 } else { 2.0 };
        Ok(Self {
            d,
            p,
            q,
            n_declared,
            rows_seen: 0,
            inflation,
            weighted: GramTracker::new(d, Tolerances::default()),
            inner: MergeTreeSummary::new(d, q, 0.5, block, seed)?,
            ascent: AscentConfig { seed, ..AscentConfig::default() },
            weight_log: vec![],
            holder_sum: 0.0,
        })
    }

    pub fn with_inflation(mut self, inflation: f64) -> Self {
        self.inflation = inflation;
        self
    }

    pub fn weight_log(&self) -> &[f64] {
        &self.weight_log
    }

    pub fn summary(&self) -> &MergeTreeSummary {
        &self.inner
    }

    /// Sensitivity of `a` against the current weighted summary, estimated by
    /// ascent (closed form at `q = 2`).
    pub fn estimate_sensitivity(&self, a: &[f64]) -> Result<Sensitivity> {
        if !self.weighted.in_span(a) {
            return Ok(Sensitivity::OutOfSpan);
        }
        if self.q == 2.0 {
            return Ok(self.weighted.sensitivity(a));
        }
        let b = self.inner.summary().to_matrix();
        let cfg = AscentConfig { seed: self.ascent.seed ^ self.rows_seen as u64, ..self.ascent };
        lq_sensitivity_ascent(a, &b, self.q, &cfg)
    }

    /// Sphere-net value of the same quantity; `d <= 3` only.
    pub fn oracle_sensitivity(&self, a: &[f64], points: usize) -> Result<Sensitivity> {
        if !self.weighted.in_span(a) {
            return Ok(Sensitivity::OutOfSpan);
        }
        lq_sensitivity_net(a, &self.inner.summary().to_matrix(), self.q, points)
    }

    pub fn ingest(&mut self, a: &[f64]) -> Result<f64> {
        check_row(a, self.d)?;
        if self.rows_seen == self.n_declared {
            return Err(Error::StreamOverflow(self.n_declared));
        }
        let idx = self.rows_seen;
        if a.iter().all(|&v| v == 0.0) {
            self.rows_seen += 1;
            return Ok(1.0);
        }
        let s = match self.estimate_sensitivity(a)? {
            Sensitivity::OutOfSpan => 1.0,
            Sensitivity::InSpan(v) => {
                (self.inflation * v.max(1.0 / self.n_declared as f64)).min(1.0)
            }
        };
        let w = round_pow2(s.powf((self.p / self.q - 1.0) / self.q));
        self.weighted.add(a, w * w);
        self.inner.ingest_at(idx, a, w)?;
        self.weight_log.push(w);
        self.holder_sum += w.powf(self.q * self.p / (self.p - self.q));
        self.rows_seen += 1;
        Ok(w)
    }

    /// `||S W A x||_q` from the inner summary.
    pub fn query(&self, x: &[f64]) -> f64 {
        self.inner.summary().norm(x, self.q)
    }

    /// Hölder factor `(sum w^{qp/(p-q)})^{1/q-1/p}` for the exact weighted
    /// matrix; the inner summary adds its own O(1) distortion.
    pub fn holder_delta(&self) -> f64 {
        self.holder_sum.powf(1.0 / self.q - 1.0 / self.p)
    }
}

/// Factors used by the for-all median estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFactors {
    pub lower: f64,
    pub upper: f64,
    pub failure: f64,
}

/// `R` independent ℓ∞ coresets over rows rescaled by `E^{-1/p}`, `E ~ Exp(1)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpEmbedSketch {
    pub d: usize,
    /// `f64::INFINITY` gives weight 1, i.e. a plain ℓ∞ coreset.
    pub p: f64,
    pub seed: u64,
    n_seen: usize,
    replicas: Vec<Coreset>,
}

pub const DEFAULT_REPLICAS: usize = 11;

impl ExpEmbedSketch {
    pub fn new(d: usize, p: f64, replicas: usize, seed: u64) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::InvalidArgument("need at least one replica".into()));
        }
        if !(p > 0.0) {
            return Err(Error::InvalidArgument("p must be positive".into()));
        }
        Ok(Self { d, p, seed, n_seen: 0, replicas: (0..replicas).map(|_| Coreset::new(d)).collect() })
    }

    pub fn replicas(&self) -> &[Coreset] {
        &self.replicas
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    /// Weight `E^{-1/p}` for replica `r` and row `i`.
    pub fn weight(&self, r: usize, i: usize) -> f64 {
        if self.p.is_infinite() {
            return 1.0;
        }
        exponential(self.seed, &[r as u64, i as u64]).powf(-1.0 / self.p)
    }

    pub fn ingest(&mut self, a: &[f64]) -> Result<Vec<Decision>> {
        check_row(a, self.d)?;
        let i = self.n_seen;
        self.n_seen += 1;
        let weights: Vec<f64> = (0..self.replicas.len()).map(|r| self.weight(r, i)).collect();
        self.replicas
            .iter_mut()
            .zip(weights)
            .map(|(c, w)| c.ingest_at(i, a, w))
            .collect()
    }

    /// Per-replica ℓ∞ values `max_{i in S_r} w_i |<a_i, x>|`.
    pub fn replica_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.replicas.iter().map(|c| c.query(x, Norm::Linf)).collect()
    }

    /// Median of the replica values.
    pub fn query(&self, x: &[f64]) -> Result<f64> {
        let mut v = self.replica_values(x)?;
        v.sort_by(f64::total_cmp);
        let m = v.len();
        Ok(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
    }

    pub fn max_delta(&self) -> f64 {
        self.replicas.iter().map(Coreset::delta).fold(0.0, f64::max)
    }

    /// Each replica lies in `[lower, upper] * ||Ax||_p` with probability at
    /// least `1 - failure`, where `failure = 1/4`:
    /// `P(E > ln(2/f)) = P(E < f/2) <= f/2`.
    pub fn factors(&self) -> ExpFactors {
        let f: f64 = 0.25;
        if self.p.is_infinite() {
            return ExpFactors { lower: 1.0 / self.max_delta(), upper: 1.0, failure: 0.0 };
        }
        ExpFactors {
            lower: 1.0 / (self.max_delta() * (2.0 / f).ln().powf(1.0 / self.p)),
            upper: (2.0 / f).powf(1.0 / self.p),
            failure: f,
        }
    }
}

/// Runs the quadratic sketch over a whole matrix.
pub fn quadratic_sketch(a: &DenseMatrix, p: f64) -> Result<LpQuadraticSketch> {
    let mut s = LpQuadraticSketch::new(a.ncols(), p, a.nrows().max(1))?;
    for r in a.rows() {
        s.ingest(r)?;
    }
    Ok(s)
}
