//! Row-sampling embeddings: Lewis-weight sampling, merge-and-reduce summaries,
//! online spectral sampling and the composed ℓp→ℓq embedding.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lewis::{change_of_density, lewis_fixed_point, FixedPointConfig, LewisWeights};
use crate::linalg::{GramTracker, Sensitivity, Tolerances};
use crate::matrix::{check_finite, dot, norm_p, DenseMatrix};
use crate::rng::{substream, unit_uniform};

/// Sampled rows kept as source rows plus cumulative scales, so every row
/// traces back to its stream position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledMatrix {
    pub d: usize,
    pub p: f64,
    pub seed: u64,
    pub source_indices: Vec<usize>,
    pub scales: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl SampledMatrix {
    pub fn empty(d: usize, p: f64, seed: u64) -> Self {
        Self { d, p, seed, source_indices: vec![], scales: vec![], rows: vec![] }
    }

    /// Unscaled copy of rows with their indices.
    pub fn raw(d: usize, p: f64, rows: Vec<(usize, Vec<f64>)>) -> Self {
        let (source_indices, rows): (Vec<usize>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        Self { d, p, seed: 0, scales: vec![1.0; rows.len()], source_indices, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, index: usize, row: &[f64], scale: f64) {
        self.source_indices.push(index);
        self.rows.push(row.to_vec());
        self.scales.push(scale);
    }

    pub fn extend(&mut self, other: &SampledMatrix) {
        self.source_indices.extend_from_slice(&other.source_indices);
        self.rows.extend(other.rows.iter().cloned());
        self.scales.extend_from_slice(&other.scales);
    }

    /// The scaled matrix `SA`.
    pub fn to_matrix(&self) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .zip(&self.scales)
            .map(|(r, s)| r.iter().map(|v| v * s).collect())
            .collect();
        DenseMatrix::from_rows_with_dim(&rows, self.d).expect("rows share d")
    }

    /// `SAx` entrywise.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().zip(&self.scales).map(|(r, s)| s * dot(r, x)).collect()
    }

    /// `||SAx||_q`.
    pub fn norm(&self, x: &[f64], q: f64) -> f64 {
        norm_p(&self.apply(x), q)
    }
}

/// `s` iid draws with probability proportional to `w`, each rescaled by
/// `1/(s w_i/||w||_1)^{1/p}` on top of `base_scales`.
fn sample_rows(
    rows: &[&[f64]],
    indices: &[usize],
    base_scales: &[f64],
    w: &[f64],
    d: usize,
    p: f64,
    s: usize,
    seed: u64,
    tags: &[u64],
) -> Result<SampledMatrix> {
    if s == 0 {
        return Err(Error::InvalidArgument("sample budget must be positive".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let dist = WeightedIndex::new(w).map_err(|_| Error::DegenerateWeights)?;
    let mut rng = substream(seed, tags);
    let mut out = SampledMatrix::empty(d, p, seed);
    for _ in 0..s {
        let i = dist.sample(&mut rng);
        let scale = base_scales[i] / (s as f64 * w[i] / total).powf(1.0 / p);
        out.push(indices[i], rows[i], scale);
    }
    Ok(out)
}

/// Lewis-weight sampling of the rows of `a`.
pub fn lewis_sample(a: &DenseMatrix, w: &LewisWeights, s: usize, seed: u64) -> Result<SampledMatrix> {
    if w.w.len() != a.nrows() {
        return Err(Error::ShapeMismatch("one weight per row".into()));
    }
    let rows: Vec<&[f64]> = a.rows().collect();
    let idx: Vec<usize> = (0..a.nrows()).collect();
    sample_rows(&rows, &idx, &vec![1.0; rows.len()], &w.w, a.ncols(), w.p, s, seed, &[0x1e15])
}

/// Exact Lewis weights of the scaled rows of `m`, floored so that every row
/// keeps a positive probability.
fn block_weights(m: &SampledMatrix) -> Result<Vec<f64>> {
    let sol = lewis_fixed_point(
        &m.to_matrix(),
        m.p,
        &FixedPointConfig { iterations: Some(50), gamma: 0.0, tol: 1e-10 },
    )?;
    Ok(sol.weights.w)
}

/// One-pass binary merge-and-reduce summary. Full buffers of `B` rows become
/// level-0 blocks; two blocks on the same level are merged and reduced back
/// to `B` rows by Lewis sampling and carried up.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MergeTreeSummary {
    pub d: usize,
    pub p: f64,
    pub eps: f64,
    pub block: usize,
    pub seed: u64,
    buffer: Vec<(usize, Vec<f64>)>,
    levels: Vec<Option<SampledMatrix>>,
    n_seen: usize,
    reductions: u64,
    max_inventory: usize,
}

impl MergeTreeSummary {
    pub fn new(d: usize, p: f64, eps: f64, block: usize, seed: u64) -> Result<Self> {
        if block < d.max(1) {
            return Err(Error::InvalidArgument(format!("block size {block} below dimension {d}")));
        }
        Ok(Self {
            d,
            p,
            eps,
            block,
            seed,
            buffer: vec![],
            levels: vec![],
            n_seen: 0,
            reductions: 0,
            max_inventory: 0,
        })
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    /// Accuracy used per reduction, `eps / ceil(log2 n)`.
    pub fn eps_level(&self) -> f64 {
        let l = (self.n_seen.max(2) as f64).log2().ceil();
        self.eps / l
    }

    /// Blocks currently held, counting a nonempty buffer.
    pub fn inventory(&self) -> usize {
        self.levels.iter().filter(|l| l.is_some()).count() + usize::from(!self.buffer.is_empty())
    }

    /// Largest inventory seen, including blocks in flight during a carry.
    pub fn max_inventory(&self) -> usize {
        self.max_inventory
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn ingest(&mut self, a: &[f64]) -> Result<()> {
        let idx = self.n_seen;
        self.ingest_at(idx, a, 1.0)
    }

    /// Adds row `a` with stream index `index`; `scale` multiplies the row.
    pub fn ingest_at(&mut self, index: usize, a: &[f64], scale: f64) -> Result<()> {
        check_finite(a)?;
        if a.len() != self.d {
            return Err(Error::ShapeMismatch("row length".into()));
        }
        self.n_seen = self.n_seen.max(index + 1);
        let row: Vec<f64> = a.iter().map(|v| v * scale).collect();
        self.buffer.push((index, row));
        self.max_inventory = self.max_inventory.max(self.inventory());
        if self.buffer.len() == self.block {
            let block = SampledMatrix::raw(self.d, self.p, std::mem::take(&mut self.buffer));
            self.carry(block, 0)?;
        }
        Ok(())
    }

    fn carry(&mut self, mut block: SampledMatrix, mut level: usize) -> Result<()> {
        loop {
            if self.levels.len() <= level {
                self.levels.resize(level + 1, None);
            }
            let held = self.inventory() + 1;
            self.max_inventory = self.max_inventory.max(held);
            match self.levels[level].take() {
                None => {
                    self.levels[level] = Some(block);
                    return Ok(());
                }
                Some(mut other) => {
                    other.extend(&block);
                    block = self.reduce(&other)?;
                    level += 1;
                }
            }
        }
    }

    fn reduce(&mut self, m: &SampledMatrix) -> Result<SampledMatrix> {
        let w = block_weights(m)?;
        let rows: Vec<&[f64]> = m.rows.iter().map(Vec::as_slice).collect();
        self.reductions += 1;
        let mut out = sample_rows(
            &rows,
            &m.source_indices,
            &m.scales,
            &w,
            self.d,
            self.p,
            self.block,
            self.seed,
            &[0x3e4e, self.reductions],
        )?;
        out.seed = self.seed;
        Ok(out)
    }

    /// All held rows with their scales.
    pub fn summary(&self) -> SampledMatrix {
        let mut out = SampledMatrix::empty(self.d, self.p, self.seed);
        for b in self.levels.iter().flatten() {
            out.extend(b);
        }
        for (i, r) in &self.buffer {
            out.push(*i, r, 1.0);
        }
        out
    }

    /// Folds `other` in, as if its stream followed this one. Its indices are
    /// kept as they are; callers offset them when needed.
    pub fn merge(mut self, other: &MergeTreeSummary) -> Result<Self> {
        if other.d != self.d || other.p != self.p || other.block != self.block {
            return Err(Error::ShapeMismatch("summaries differ in d, p or block size".into()));
        }
        for (l, b) in other.levels.iter().enumerate() {
            if let Some(b) = b {
                self.carry(b.clone(), l)?;
            }
        }
        let seen = self.n_seen;
        for (i, r) in &other.buffer {
            self.ingest_at(*i, r, 1.0)?;
        }
        self.n_seen = seen.max(other.n_seen);
        Ok(self)
    }
}

/// Online leverage-score sampler for spectral approximation.
#[derive(Clone, Debug)]
pub struct OnlineSpectralSampler {
    d: usize,
    eps: f64,
    seed: u64,
    c: f64,
    tracker: GramTracker,
    kept: SampledMatrix,
    n_seen: usize,
}

impl OnlineSpectralSampler {
    pub fn new(d: usize, eps: f64, seed: u64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument("eps must lie in (0, 1)".into()));
        }
        // ln d vanishes at d = 1; the guard keeps c positive there.
        let c = 8.0 * (d as f64).ln().max(1.0) / (eps * eps);
        Ok(Self {
            d,
            eps,
            seed,
            c,
            tracker: GramTracker::new(d, Tolerances::default()),
            kept: SampledMatrix::empty(d, 2.0, seed),
            n_seen: 0,
        })
    }

    pub fn oversampling(&self) -> f64 {
        self.c
    }

    pub fn ingest(&mut self, a: &[f64]) -> Result<bool> {
        let i = self.n_seen;
        self.ingest_at(i, a, 1.0)
    }

    /// Offers row `scale * a`; the decision depends only on the seed, the index
    /// and the prefix.
    pub fn ingest_at(&mut self, index: usize, a: &[f64], scale: f64) -> Result<bool> {
        check_finite(a)?;
        if a.len() != self.d {
            return Err(Error::ShapeMismatch("row length".into()));
        }
        self.n_seen = self.n_seen.max(index + 1);
        let row: Vec<f64> = a.iter().map(|v| v * scale).collect();
        if row.iter().all(|&v| v == 0.0) {
            return Ok(false);
        }
        let lt = match self.tracker.sensitivity(&row) {
            Sensitivity::OutOfSpan => 1.0,
            Sensitivity::InSpan(s) => ((1.0 + self.eps) * s).min(1.0),
        };
        let prob = (self.c * lt).min(1.0);
        if unit_uniform(self.seed, &[0x0551, index as u64]) > prob {
            return Ok(false);
        }
        self.tracker.add(&row, 1.0 / prob);
        self.kept.push(index, a, scale / prob.sqrt());
        Ok(true)
    }

    pub fn sample(&self) -> &SampledMatrix {
        &self.kept
    }

    pub fn into_sample(self) -> SampledMatrix {
        self.kept
    }
}

pub fn online_spectral_sample(a: &DenseMatrix, eps: f64, seed: u64) -> Result<SampledMatrix> {
    let mut s = OnlineSpectralSampler::new(a.ncols(), eps, seed)?;
    for r in a.rows() {
        s.ingest(r)?;
    }
    Ok(s.into_sample())
}

/// Sampled ℓp→ℓq embedding with its certificate:
/// `||Ax||_p <= ||SAx||_q <= kappa_total ||Ax||_p` when the sampling step
/// achieves `(1 +- eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpLqEmbedding {
    pub sample: SampledMatrix,
    pub p: f64,
    pub q: f64,
    pub eps: f64,
    pub budget: usize,
    pub alpha: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub kappa_total: f64,
}

/// `ceil(4 d^{max(1, q/2)} max(ln d, 1) / eps^2)`.
pub fn default_budget(d: usize, q: f64, eps: f64) -> usize {
    let d = d as f64;
    (4.0 * d.powf((q / 2.0).max(1.0)) * d.ln().max(1.0) / (eps * eps)).ceil() as usize
}

/// `S = lambda/(1-eps) R D` with `D = W^{1/q-1/p}` from exact ℓp Lewis weights
/// and `R` sampling those same weights at index q (they are the ℓq weights of
/// `DA`).
pub fn lp_to_lq_embed(
    a: &DenseMatrix,
    p: f64,
    q: f64,
    eps: f64,
    budget: Option<usize>,
    seed: u64,
) -> Result<LpLqEmbedding> {
    if !(q >= 2.0 && p >= q) {
        return Err(Error::InvalidArgument(format!("need p >= q >= 2, got p = {p}, q = {q}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument("eps must lie in (0, 1)".into()));
    }
    let d = a.ncols();
    let sol = lewis_fixed_point(a, p, &FixedPointConfig { iterations: Some(200), gamma: 0.0, tol: 1e-10 })?;
    let w = sol.weights;
    let alpha = (w.sum() / d as f64).max(1.0);
    let cod = change_of_density(a, q, &w, alpha)?;
    let s = budget.unwrap_or_else(|| default_budget(d, q, eps));
    let qw = LewisWeights { p: q, ..w.clone() };
    let mut sample = lewis_sample(&cod.b, &qw, s, seed)?;
    let boost = cod.lambda / (1.0 - eps);
    for v in &mut sample.scales {
        *v *= boost;
    }
    // Report rows of A, folding D into the scales.
    for (k, &i) in sample.source_indices.iter().enumerate() {
        let di = if w.w[i] > 0.0 { w.w[i].powf(1.0 / q - 1.0 / p) } else { 0.0 };
        sample.rows[k] = a.row(i).to_vec();
        sample.scales[k] *= di;
    }
    let kappa_total = cod.kappa * cod.lambda * (1.0 + eps) / (1.0 - eps);
    Ok(LpLqEmbedding {
        sample,
        p,
        q,
        eps,
        budget: s,
        alpha,
        kappa: cod.kappa,
        lambda: cod.lambda,
        kappa_total,
    })
}
