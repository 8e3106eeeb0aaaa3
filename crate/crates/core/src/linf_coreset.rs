//! One-pass online coreset for ℓ∞ subspace sketching, its k-robust cascade,
//! and the restricted angular variant.
//!
//! A row is kept iff it leaves the span of the stored rows or some direction
//! `x` has `<a,x>^2 >= ||A_S x||_2^2`, i.e. its generalized sensitivity against
//! the stored Gram is at least one. Every stored row then certifies
//! `||A_S x||_inf <= ||A x||_inf <= sqrt(|S|) ||A_S x||_inf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{GramTracker, Sensitivity, Tolerances};
use crate::matrix::{check_finite, dot, norm2, DenseMatrix, QuadraticForm};

/// Default constant in the audited coreset size bound.
pub const SIZE_CONSTANT: f64 = 20.0;

/// Sensitivities within this relative distance below 1 count as ties, so an
/// exact duplicate of a lone stored row is kept regardless of rounding.
pub const TIE_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Kept,
    Discarded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Linf,
    L2,
}

#[derive(Clone, Debug)]
pub struct Coreset {
    d: usize,
    indices: Vec<usize>,
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    tracker: GramTracker,
    n_seen: usize,
}

#[derive(Serialize, Deserialize)]
struct CoresetRepr {
    d: usize,
    n_seen: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Serialize for Coreset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CoresetRepr {
            d: self.d,
            n_seen: self.n_seen,
            indices: self.indices.clone(),
            weights: self.weights.clone(),
            rows: self.rows.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coreset {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = CoresetRepr::deserialize(de)?;
        if r.rows.len() != r.indices.len() || r.rows.len() != r.weights.len() {
            return Err(serde::de::Error::custom("indices, weights and rows differ in length"));
        }
        let mut c = Coreset::new(r.d);
        for ((i, row), w) in r.indices.iter().zip(&r.rows).zip(&r.weights) {
            if row.len() != r.d {
                return Err(serde::de::Error::custom("row length differs from d"));
            }
            c.store(*i, row, *w);
        }
        c.n_seen = r.n_seen;
        Ok(c)
    }
}

/// Outcome of [`Coreset::certified_size_bound`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub size: usize,
    pub bound: f64,
    pub constant: f64,
    pub pass: bool,
}

/// What the size bound is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SizeBasis {
    /// Integer entries bounded in magnitude by the given value.
    IntegerBounded(f64),
    /// Online condition number of the stream.
    OnlineCondition(f64),
}

impl Coreset {
    pub fn new(d: usize) -> Self {
        Self::with_tolerances(d, Tolerances::default())
    }

    pub fn with_tolerances(d: usize, tol: Tolerances) -> Self {
        Self {
            d,
            indices: vec![],
            rows: vec![],
            weights: vec![],
            tracker: GramTracker::new(d, tol),
            n_seen: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stored rows with their weights applied.
    pub fn weighted_rows(&self) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| r.iter().map(|v| v * w).collect())
            .collect();
        DenseMatrix::from_rows_with_dim(&rows, self.d).expect("stored rows are consistent")
    }

    pub fn gram(&self) -> QuadraticForm {
        self.tracker.gram()
    }

    /// Certified distortion `sqrt(|S|)`.
    pub fn delta(&self) -> f64 {
        (self.len() as f64).sqrt()
    }

    fn store(&mut self, index: usize, a: &[f64], w: f64) {
        self.tracker.add(a, w * w);
        self.indices.push(index);
        self.rows.push(a.to_vec());
        self.weights.push(w);
        self.n_seen = self.n_seen.max(index + 1);
    }

    /// Sensitivity of the weighted row `w a` against the stored Gram.
    pub fn sensitivity(&self, a: &[f64], w: f64) -> Sensitivity {
        let wa: Vec<f64> = a.iter().map(|v| v * w).collect();
        self.tracker.sensitivity(&wa)
    }

    /// Tests the next stream row (index `n_seen`) with weight 1.
    pub fn ingest_row(&mut self, a: &[f64]) -> Result<Decision> {
        let idx = self.n_seen;
        self.ingest_at(idx, a, 1.0)
    }

    /// Tests row `a` carrying stream index `index` and weight `w`.
    pub fn ingest_at(&mut self, index: usize, a: &[f64], w: f64) -> Result<Decision> {
        check_finite(a)?;
        if a.len() != self.d {
            return Err(Error::ShapeMismatch(format!("row of length {} in dimension {}", a.len(), self.d)));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
        if self.indices.last().is_some_and(|&last| index <= last) {
            return Err(Error::InvalidArgument("stream indices must increase".into()));
        }
        self.n_seen = self.n_seen.max(index + 1);
        if a.iter().all(|&v| v == 0.0) {
            return Ok(Decision::Discarded);
        }
        let keep = match self.sensitivity(a, w) {
            Sensitivity::OutOfSpan => true,
            Sensitivity::InSpan(s) => s >= 1.0 - TIE_SLACK,
        };
        if keep {
            self.store(index, a, w);
            Ok(Decision::Kept)
        } else {
            Ok(Decision::Discarded)
        }
    }

    pub fn query(&self, x: &[f64], norm: Norm) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyCoreset);
        }
        if x.len() != self.d {
            return Err(Error::ShapeMismatch("query length".into()));
        }
        let vals = self.rows.iter().zip(&self.weights).map(|(r, w)| w * dot(r, x));
        Ok(match norm {
            Norm::Linf => vals.fold(0.0, |m, v| m.max(v.abs())),
            Norm::L2 => vals.map(|v| v * v).sum::<f64>().sqrt(),
        })
    }

    /// `C d ln n` for integer input or `C d ln(n kappa)` otherwise.
    pub fn certified_size_bound(&self, basis: SizeBasis) -> SizeReport {
        self.certified_size_bound_with(basis, SIZE_CONSTANT)
    }

    pub fn certified_size_bound_with(&self, basis: SizeBasis, c: f64) -> SizeReport {
        let n = self.n_seen.max(2) as f64;
        let log_term = match basis {
            SizeBasis::IntegerBounded(_) => n.ln(),
            SizeBasis::OnlineCondition(k) => (n * k.max(1.0)).ln(),
        };
        let bound = c * self.d as f64 * log_term;
        SizeReport { size: self.len(), bound, constant: c, pass: self.len() as f64 <= bound }
    }
}

/// Builds a coreset over every row of `a`.
pub fn build_coreset(a: &DenseMatrix) -> Result<Coreset> {
    let mut c = Coreset::new(a.ncols());
    for r in a.rows() {
        c.ingest_row(r)?;
    }
    Ok(c)
}

/// `k+1` chained coresets; level `i` sees the rows rejected by levels `< i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KRobustCascade {
    k: usize,
    levels: Vec<Coreset>,
    n_seen: usize,
}

impl KRobustCascade {
    pub fn new(d: usize, k: usize) -> Self {
        Self { k, levels: (0..=k).map(|_| Coreset::new(d)).collect(), n_seen: 0 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn levels(&self) -> &[Coreset] {
        &self.levels
    }

    /// Returns the level that kept the row, if any.
    pub fn ingest_row(&mut self, a: &[f64]) -> Result<Option<usize>> {
        let idx = self.n_seen;
        self.n_seen += 1;
        for (l, c) in self.levels.iter_mut().enumerate() {
            if c.ingest_at(idx, a, 1.0)? == Decision::Kept {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    pub fn union_size(&self) -> usize {
        self.levels.iter().map(Coreset::len).sum()
    }

    /// `sqrt` of the largest level size.
    pub fn delta(&self) -> f64 {
        (self.levels.iter().map(Coreset::len).max().unwrap_or(0) as f64).sqrt()
    }

    /// The `(k+1)`-st largest `|<a,x>|` over the union of all levels.
    pub fn query(&self, x: &[f64]) -> Result<f64> {
        let have = self.union_size();
        if have <= self.k {
            return Err(Error::InsufficientRows { k: self.k, have });
        }
        let mut vals: Vec<f64> = self
            .levels
            .iter()
            .flat_map(|c| c.rows().iter().map(|r| dot(r, x).abs()))
            .collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        Ok(vals[self.k])
    }
}

/// Keeps a row iff its angle to every stored row has `|cos| < 1/sqrt(2d-1)`.
/// The Welch bound limits the stored set to `2d - 1` rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestrictedCoreset {
    d: usize,
    band: (f64, f64),
    indices: Vec<usize>,
    rows: Vec<Vec<f64>>,
    n_seen: usize,
}

impl RestrictedCoreset {
    pub const DEFAULT_BAND: (f64, f64) = (0.5, 2.0);

    pub fn new(d: usize) -> Self {
        Self::with_band(d, Self::DEFAULT_BAND)
    }

    pub fn with_band(d: usize, band: (f64, f64)) -> Self {
        Self { d, band, indices: vec![], rows: vec![], n_seen: 0 }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn threshold(&self) -> f64 {
        1.0 / ((2 * self.d) as f64 - 1.0).sqrt()
    }

    pub fn ingest(&mut self, a: &[f64]) -> Result<Decision> {
        check_finite(a)?;
        if a.len() != self.d {
            return Err(Error::ShapeMismatch("row length".into()));
        }
        let norm = norm2(a);
        let (lo, hi) = self.band;
        if norm < lo || norm > hi {
            return Err(Error::NormBand { norm, lo, hi });
        }
        let idx = self.n_seen;
        self.n_seen += 1;
        let t = self.threshold();
        let close = self.rows.iter().any(|r| (dot(r, a) / (norm2(r) * norm)).abs() >= t);
        if close {
            return Ok(Decision::Discarded);
        }
        self.indices.push(idx);
        self.rows.push(a.to_vec());
        Ok(Decision::Kept)
    }

    pub fn query(&self, x: &[f64]) -> Result<f64> {
        if self.rows.is_empty() {
            return Err(Error::EmptyCoreset);
        }
        Ok(self.rows.iter().fold(0.0, |m, r| m.max(dot(r, x).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_decisions() {
        let mut c = Coreset::new(2);
        assert_eq!(c.ingest_row(&[1.0, 0.0]).unwrap(), Decision::Kept);
        assert_eq!(c.ingest_row(&[0.5, 0.0]).unwrap(), Decision::Discarded);
        assert_eq!(c.ingest_row(&[2.0, 0.0]).unwrap(), Decision::Kept);
        assert_eq!(c.ingest_row(&[0.0, 0.0]).unwrap(), Decision::Discarded);
        assert_eq!(c.indices(), &[0, 2]);
        assert_eq!(c.n_seen(), 4);
    }

    #[test]
    fn tie_at_one_is_kept() {
        let mut c = Coreset::new(1);
        c.ingest_row(&[1.0]).unwrap();
        // a^T G^- a = 1 exactly for a duplicate of a single stored row
        assert_eq!(c.ingest_row(&[1.0]).unwrap(), Decision::Kept);
    }

    #[test]
    fn identity_stream() {
        let c = build_coreset(&DenseMatrix::identity(5)).unwrap();
        assert_eq!(c.len(), 5);
        assert!((c.delta() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.query(&[1.0, 0.0, 0.0, 0.0, 0.0], Norm::Linf).unwrap(), 1.0);
    }

    #[test]
    fn duplicates_keep_tie_then_stop() {
        // the second copy ties at sensitivity 1 and is kept; later copies score 1/2 or less
        let rows = vec![vec![1.0, -2.0, 3.0]; 50];
        let c = build_coreset(&DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(c.indices(), &[0, 1]);
        assert_eq!(c.query(&[1.0, 1.0, 1.0], Norm::Linf).unwrap(), 2.0);
    }

    #[test]
    fn empty_query_errors() {
        assert_eq!(Coreset::new(2).query(&[1.0, 0.0], Norm::Linf), Err(Error::EmptyCoreset));
    }

    #[test]
    fn json_round_trip_rebuilds_gram() {
        let a = crate::data::random_int(30, 3, 5, 1).unwrap();
        let c = build_coreset(&a).unwrap();
        let back: Coreset = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.indices(), c.indices());
        assert!(back.gram().frobenius_distance(&c.gram()) < 1e-9);
    }

    #[test]
    fn krobust_small_example() {
        let mut k = KRobustCascade::new(2, 1);
        for r in [[2.0, 0.0], [1.0, 0.0], [0.0, 1.0]] {
            k.ingest_row(&r).unwrap();
        }
        assert_eq!(k.query(&[1.0, 0.0]).unwrap(), 1.0);
        let mut k0 = KRobustCascade::new(2, 5);
        k0.ingest_row(&[1.0, 0.0]).unwrap();
        assert!(matches!(k0.query(&[1.0, 0.0]), Err(Error::InsufficientRows { .. })));
    }

    #[test]
    fn restricted_examples() {
        let mut r = RestrictedCoreset::new(3);
        for e in DenseMatrix::identity(3).rows() {
            assert_eq!(r.ingest(e).unwrap(), Decision::Kept);
        }
        assert_eq!(r.ingest(&[1.0, 0.0, 0.0]).unwrap(), Decision::Discarded);
        assert!(matches!(r.ingest(&[5.0, 0.0, 0.0]), Err(Error::NormBand { .. })));
    }
}
