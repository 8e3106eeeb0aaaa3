use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major dense matrix. Rows are the unit of streaming.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {n}x{d} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { n, d, data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows; an empty slice needs `d` from elsewhere, so use
    /// [`DenseMatrix::zeros`] with zero rows for that case.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn from_rows_with_dim<R: AsRef<[f64]>>(rows: &[R], d: usize) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Self::zeros(0, d));
        }
        let m = Self::from_rows(rows)?;
        if m.d != d {
            return Err(Error::ShapeMismatch(format!("expected {d} columns, got {}", m.d)));
        }
        Ok(m)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Self { n, d, data }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            for &j in cols {
                data.push(self.get(i, j));
            }
        }
        Self { n: self.n, d: cols.len(), data }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self { n: rows.len(), d: self.d, data }
    }

    /// `[A b]`, used for regression.
    pub fn append_column(&self, b: &[f64]) -> Result<Self> {
        if b.len() != self.n {
            return Err(Error::ShapeMismatch("column length".into()));
        }
        let mut data = Vec::with_capacity(self.n * (self.d + 1));
        for i in 0..self.n {
            data.extend_from_slice(self.row(i));
            data.push(b[i]);
        }
        Self::new(self.n, self.d + 1, data)
    }

    pub fn scale_rows(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for v in &mut out.data[i * self.d..(i + 1) * self.d] {
                *v *= s[i];
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows().map(|r| dot(r, x)).collect()
    }

    pub fn gram(&self) -> QuadraticForm {
        let mut q = QuadraticForm::zeros(self.d);
        for r in self.rows() {
            q.add_outer(r, 1.0);
        }
        q
    }

    pub fn is_integer_bounded(&self, m: f64) -> bool {
        self.data.iter().all(|v| v.fract() == 0.0 && v.abs() <= m)
    }

    pub fn push_row(&mut self, r: &[f64]) -> Result<()> {
        if self.n > 0 && r.len() != self.d {
            return Err(Error::ShapeMismatch("row length".into()));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.n == 0 {
            self.d = r.len();
        }
        self.data.extend_from_slice(r);
        self.n += 1;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DenseMatrixRepr {
    n: usize,
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DenseMatrixRepr { n: self.n, d: self.d, rows: self.rows().map(|r| r.to_vec()).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = DenseMatrixRepr::deserialize(de)?;
        DenseMatrix::from_rows_with_dim(&r.rows, r.d).map_err(serde::de::Error::custom)
    }
}

/// Symmetric PSD form `x -> x^T Q x`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    m: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    /// Symmetrizes the input so later eigen-solves see an exactly symmetric matrix.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch("quadratic form must be square".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let s = (&m + m.transpose()) * 0.5;
        Ok(Self { m: s })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn add_outer(&mut self, a: &[f64], c: f64) {
        let d = self.dim();
        for i in 0..d {
            let ci = c * a[i];
            if ci == 0.0 {
                continue;
            }
            for j in 0..d {
                self.m[(i, j)] += ci * a[j];
            }
        }
    }

    pub fn add(&self, other: &QuadraticForm) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch("form dimensions differ".into()));
        }
        Ok(Self { m: &self.m + &other.m })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        (v.transpose() * &self.m * &v)[(0, 0)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.m.row(i).iter().copied().collect()).collect()
    }

    pub fn frobenius_distance(&self, other: &QuadraticForm) -> f64 {
        (&self.m - &other.m).norm()
    }
}

impl Serialize for QuadraticForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuadraticForm {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(serde::de::Error::custom("quadratic form must be square"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        QuadraticForm::from_matrix(m).map_err(serde::de::Error::custom)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_p(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    // Scale by the max entry so large p does not overflow.
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

pub fn check_finite(a: &[f64]) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert_eq!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]), Err(Error::NonFinite));
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.5]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: DenseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let q = m.gram();
        let back: QuadraticForm = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn p_norm_matches_definition() {
        let v = [3.0, -4.0];
        assert!((norm_p(&v, 2.0) - 5.0).abs() < 1e-12);
        assert!((norm_p(&v, 1.0) - 7.0).abs() < 1e-12);
        assert_eq!(norm_p(&v, f64::INFINITY), 4.0);
        assert!((norm_p(&v, 4.0) - (81.0f64 + 256.0).powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn append_and_select() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let a = m.append_column(&[5.0, 6.0]).unwrap();
        assert_eq!(a.row(1), &[3.0, 4.0, 6.0]);
        assert_eq!(a.select_columns(&[2, 0]).row(0), &[5.0, 1.0]);
    }
}
