//! ℓq sensitivity `sup_x |<a,x>|^q / ||Bx||_q^q` over `x` in the row span of `B`.
//!
//! No polynomial-time exact method is known for q > 2, so [`lq_sensitivity_ascent`]
//! is a multi-start local search (a lower estimate of the supremum). For rank
//! at most 3, [`lq_sensitivity_net`] enumerates a fine sphere net and polishes
//! the best point.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Sensitivity, SpectralFactorization, Tolerances};
use crate::matrix::{check_finite, norm2, DenseMatrix};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub starts: usize,
    pub iters: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { starts: 8, iters: 200, step: 0.1, seed: 0 }
    }
}

/// The problem expressed in coordinates of an orthonormal basis of `rowspan(B)`.
struct Reduced {
    a: DVector<f64>,
    b: DMatrix<f64>,
    q: f64,
}

impl Reduced {
    fn new(a: &[f64], b: &DenseMatrix, q: f64, tol: Tolerances) -> Result<Option<Self>> {
        check_finite(a)?;
        if a.len() != b.ncols() {
            return Err(Error::ShapeMismatch("vector length differs from column count".into()));
        }
        if !(q >= 1.0) {
            return Err(Error::InvalidArgument(format!("q must be >= 1, got {q}")));
        }
        let f = SpectralFactorization::new(b, tol)?;
        let av = DVector::from_column_slice(a);
        let ar = f.v.transpose() * &av;
        let perp = &av - &f.v * &ar;
        if perp.norm() > tol.span * norm2(a) {
            return Ok(None);
        }
        let br = b.to_nalgebra() * &f.v;
        Ok(Some(Self { a: ar, b: br, q }))
    }

    fn dim(&self) -> usize {
        self.a.len()
    }

    /// `q (ln|<a,y>| - ln ||By||_q)`; `-inf` where `<a,y> = 0`.
    fn objective(&self, y: &DVector<f64>) -> f64 {
        let t = self.a.dot(y).abs();
        if t == 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = &self.b * y;
        let nq = crate::matrix::norm_p(z.as_slice(), self.q);
        if nq == 0.0 {
            return f64::INFINITY;
        }
        self.q * (t.ln() - nq.ln())
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        let t = self.a.dot(y);
        let z = &self.b * y;
        let zmax = z.amax();
        if zmax == 0.0 || t == 0.0 {
            return DVector::zeros(y.len());
        }
        // Scale by zmax to keep |z|^(q-1) finite for large q.
        let w = z.map(|v| (v / zmax).signum() * (v.abs() / zmax).powf(self.q - 1.0));
        let s: f64 = z.iter().map(|v| (v.abs() / zmax).powf(self.q)).sum();
        let g2 = self.b.transpose() * w / (s * zmax);
        (&self.a / t - g2) * self.q
    }

    fn ascend(&self, mut y: DVector<f64>, cfg: &AscentConfig) -> (f64, DVector<f64>) {
        y /= y.norm();
        let mut f = self.objective(&y);
        for _ in 0..cfg.iters {
            let g = self.gradient(&y);
            let tangent = &g - &y * g.dot(&y);
            let gn = tangent.norm();
            if !(gn > 1e-13) {
                break;
            }
            let dir = tangent / gn;
            let mut eta = cfg.step;
            let mut moved = false;
            while eta > 1e-10 {
                let mut cand = &y + &dir * eta;
                cand /= cand.norm();
                let fc = self.objective(&cand);
                if fc > f {
                    y = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (f, y)
    }

    fn ascent_best(&self, cfg: &AscentConfig) -> f64 {
        let r = self.dim();
        let mut starts = Vec::with_capacity(cfg.starts.max(2));
        let gram = self.b.transpose() * &self.b;
        if let Some(ch) = gram.clone().cholesky() {
            starts.push(ch.solve(&self.a));
        }
        starts.push(self.a.clone());
        let mut rng = substream(cfg.seed, &[0x5e45]);
        while starts.len() < cfg.starts.max(2) {
            starts.push(DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng)));
        }
        starts
            .into_iter()
            .filter(|y| y.norm() > 0.0)
            .map(|y| self.ascend(y, cfg).0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Multi-start projected gradient ascent estimate.
pub fn lq_sensitivity_ascent(
    a: &[f64],
    b: &DenseMatrix,
    q: f64,
    cfg: &AscentConfig,
) -> Result<Sensitivity> {
    let Some(red) = Reduced::new(a, b, q, Tolerances::default())? else {
        return Ok(Sensitivity::OutOfSpan);
    };
    if red.dim() == 0 || red.a.norm() == 0.0 {
        return Ok(Sensitivity::InSpan(0.0));
    }
    Ok(Sensitivity::InSpan(red.ascent_best(cfg).exp()))
}

/// Sphere-net enumeration over the row span (rank <= 3), polished by ascent.
pub fn lq_sensitivity_net(a: &[f64], b: &DenseMatrix, q: f64, points: usize) -> Result<Sensitivity> {
    let Some(red) = Reduced::new(a, b, q, Tolerances::default())? else {
        return Ok(Sensitivity::OutOfSpan);
    };
    let r = red.dim();
    if r > 3 {
        return Err(Error::OracleLimit(r));
    }
    if r == 0 || red.a.norm() == 0.0 {
        return Ok(Sensitivity::InSpan(0.0));
    }
    let mut best = (f64::NEG_INFINITY, DVector::from_element(r, 1.0));
    let mut consider = |y: DVector<f64>| {
        let f = red.objective(&y);
        if f > best.0 {
            best = (f, y);
        }
    };
    match r {
        1 => consider(DVector::from_element(1, 1.0)),
        2 => {
            for k in 0..points {
                let t = std::f64::consts::PI * k as f64 / points as f64;
                consider(DVector::from_vec(vec![t.cos(), t.sin()]));
            }
        }
        _ => {
            // Fibonacci lattice on the sphere.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..points {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / points as f64;
                let rad = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                consider(DVector::from_vec(vec![rad * phi.cos(), rad * phi.sin(), z]));
            }
        }
    }
    let cfg = AscentConfig { starts: 1, iters: 500, step: 0.01, seed: 0 };
    let (f, _) = red.ascend(best.1.clone(), &cfg);
    Ok(Sensitivity::InSpan(f.max(best.0).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q2_matches_closed_form() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, 0.7]]).unwrap();
        let a = [0.4, -1.1];
        let exact = match crate::linalg::generalized_sensitivity(&a, &b).unwrap() {
            Sensitivity::InSpan(s) => s,
            _ => panic!(),
        };
        for s in [
            lq_sensitivity_ascent(&a, &b, 2.0, &AscentConfig::default()).unwrap(),
            lq_sensitivity_net(&a, &b, 2.0, 20_000).unwrap(),
        ] {
            match s {
                Sensitivity::InSpan(v) => assert!((v - exact).abs() < 1e-8 * exact, "{v} {exact}"),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn repeated_row_gives_reciprocal_count() {
        let b = DenseMatrix::from_rows(&vec![vec![1.0, 0.0]; 5]).unwrap();
        match lq_sensitivity_ascent(&[1.0, 0.0], &b, 4.0, &AscentConfig::default()).unwrap() {
            Sensitivity::InSpan(v) => assert!((v - 0.2).abs() < 1e-12),
            _ => panic!(),
        }
        assert_eq!(
            lq_sensitivity_ascent(&[0.0, 1.0], &b, 4.0, &AscentConfig::default()).unwrap(),
            Sensitivity::OutOfSpan
        );
    }

    #[test]
    fn net_refuses_rank_above_three() {
        let b = DenseMatrix::identity(4);
        assert_eq!(lq_sensitivity_net(&[1.0, 0.0, 0.0, 0.0], &b, 3.0, 100), Err(Error::OracleLimit(4)));
    }
}
