//! Synthetic inputs. All generators are deterministic in the seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    /// Uniform integers in `[-m, m]`.
    RandomInt { n: usize, d: usize, m: i64 },
    /// `levels` stacked copies of `base^l * I_d`, `l = 0..levels`.
    ScaledIdentity { d: usize, levels: usize, base: f64 },
    /// Uniform points on the unit sphere.
    Sphere { n: usize, d: usize },
    /// Gaussian blobs around `clusters` random centers.
    Clustered { n: usize, d: usize, clusters: usize },
    /// Standard Gaussian entries.
    Gaussian { n: usize, d: usize },
}

pub fn generate(kind: &DatasetKind, seed: u64) -> Result<DenseMatrix> {
    match *kind {
        DatasetKind::RandomInt { n, d, m } => random_int(n, d, m, seed),
        DatasetKind::ScaledIdentity { d, levels, base } => scaled_identity(d, levels, base),
        DatasetKind::Sphere { n, d } => sphere(n, d, seed),
        DatasetKind::Clustered { n, d, clusters } => clustered(n, d, clusters, seed),
        DatasetKind::Gaussian { n, d } => gaussian(n, d, seed),
    }
}

fn positive(v: usize, what: &str) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidArgument(format!("{what} must be positive")));
    }
    Ok(())
}

pub fn random_int(n: usize, d: usize, m: i64, seed: u64) -> Result<DenseMatrix> {
    positive(n, "n")?;
    positive(d, "d")?;
    if m < 0 {
        return Err(Error::InvalidArgument("entry bound must be nonnegative".into()));
    }
    let mut rng = substream(seed, &[0x1]);
    let data = (0..n * d).map(|_| rng.random_range(-m..=m) as f64).collect();
    DenseMatrix::new(n, d, data)
}

pub fn scaled_identity(d: usize, levels: usize, base: f64) -> Result<DenseMatrix> {
    positive(d, "d")?;
    positive(levels, "levels")?;
    let mut m = DenseMatrix::zeros(d * levels, d);
    for l in 0..levels {
        let s = base.powi(l as i32);
        for j in 0..d {
            m.set(l * d + j, j, s);
        }
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m)
}

pub fn gaussian(n: usize, d: usize, seed: u64) -> Result<DenseMatrix> {
    positive(n, "n")?;
    positive(d, "d")?;
    let mut rng = substream(seed, &[0x2]);
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    DenseMatrix::new(n, d, data)
}

pub fn sphere(n: usize, d: usize, seed: u64) -> Result<DenseMatrix> {
    let mut g = gaussian(n, d, seed ^ 0x5EED)?;
    for i in 0..n {
        let norm = crate::matrix::norm2(g.row(i));
        for j in 0..d {
            let v = g.get(i, j) / norm;
            g.set(i, j, v);
        }
    }
    Ok(g)
}

pub fn clustered(n: usize, d: usize, clusters: usize, seed: u64) -> Result<DenseMatrix> {
    positive(n, "n")?;
    positive(d, "d")?;
    positive(clusters, "clusters")?;
    let mut rng = substream(seed, &[0x3]);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 10.0 * z }).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..clusters)];
        for v in c {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(v + z);
        }
    }
    DenseMatrix::new(n, d, data)
}
