//! ℓp column subset selection by repeated random covering rounds.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SpectralFactorization, Tolerances};
use crate::matrix::{dot, norm_p, DenseMatrix};
use crate::parallel::par_map;
use crate::regression::{irls_solve, sketch_solve_regression};
use crate::rng::{mix, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CssConfig {
    pub kappa: f64,
    pub guesses: usize,
    pub max_draws: usize,
    pub eps: f64,
    /// Fraction of remaining columns a round must cover.
    pub cover_fraction: f64,
}

impl Default for CssConfig {
    fn default() -> Self {
        Self { kappa: 2.0, guesses: 12, max_draws: 50, eps: 0.5, cover_fraction: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessReport {
    pub guess: f64,
    pub completed: bool,
    pub rounds: usize,
    pub columns: Vec<usize>,
    pub cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CssResult {
    pub columns: Vec<usize>,
    /// `min_x ||A_S x - A_i||_p^p` for every column `i`.
    pub column_costs: Vec<f64>,
    /// Sum of `column_costs`.
    pub cost: f64,
    pub kappa: f64,
    pub guess: f64,
    pub guesses: Vec<GuessReport>,
}

/// `min_x ||A_S x - A_i||_p^p` for every column, solved by IRLS at index p.
pub fn column_costs(a: &DenseMatrix, selected: &[usize], p: f64) -> Result<Vec<f64>> {
    let cols: Vec<usize> = (0..a.ncols()).collect();
    if selected.is_empty() {
        return Ok(cols.iter().map(|&i| norm_p(&a.column(i), p).powf(p)).collect());
    }
    let b = a.select_columns(selected);
    let out = par_map(&cols, |&i| -> Result<f64> {
        if selected.contains(&i) {
            return Ok(0.0);
        }
        Ok(irls_solve(&b, &a.column(i), p, 1e-9)?.residual.powf(p))
    });
    out.into_iter().collect()
}

/// Entrywise `||A - A_k||_p^p` for the best Frobenius rank-k approximation.
pub fn svd_rank_k_cost(a: &DenseMatrix, k: usize, p: f64) -> Result<f64> {
    let f = SpectralFactorization::new(a, Tolerances::default())?;
    let r = k.min(f.rank);
    let mut total = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let approx: f64 = (0..r).map(|t| f.u[(i, t)] * f.sigma[t] * f.v[(j, t)]).sum();
            total += (a.get(i, j) - approx).abs().powf(p);
        }
    }
    Ok(total)
}

fn run_guess(a: &DenseMatrix, p: f64, k: usize, q: f64, seed: u64, g: usize, guess: f64, cfg: &CssConfig) -> Result<GuessReport> {
    let mut remaining: Vec<usize> = (0..a.ncols()).collect();
    let mut selected: Vec<usize> = vec![];
    let mut round = 0;
    loop {
        if remaining.len() <= 2 * k {
            selected.extend_from_slice(&remaining);
            break;
        }
        let d_cur = remaining.len();
        let threshold = cfg.kappa.powf(p) * ((k + 1) as f64).powf(p - 1.0) / d_cur as f64 * guess;
        let need = (cfg.cover_fraction * d_cur as f64).ceil() as usize;
        let mut accepted = None;
        for draw in 0..cfg.max_draws {
            let mut rng = substream(seed, &[g as u64, round as u64, draw as u64]);
            let pick: Vec<usize> = sample(&mut rng, d_cur, 2 * k).into_iter().map(|j| remaining[j]).collect();
            let b = a.select_columns(&pick);
            let others: Vec<usize> = remaining.iter().copied().filter(|i| !pick.contains(i)).collect();
            let tests = par_map(&others, |&i| -> Result<bool> {
                let col = a.column(i);
                let s = mix(seed, &[g as u64, round as u64, draw as u64, i as u64]);
                let r = sketch_solve_regression(&b, &col, p, q, cfg.eps, None, s)?;
                let res: Vec<f64> = b.rows().zip(&col).map(|(row, c)| dot(row, &r.x) - c).collect();
                Ok(norm_p(&res, p).powf(p) <= threshold)
            });
            let covered: Vec<bool> = tests.into_iter().collect::<Result<_>>()?;
            let count = covered.iter().filter(|&&c| c).count();
            if count >= need {
                let left: Vec<usize> = others.iter().zip(&covered).filter(|(_, &c)| !c).map(|(&i, _)| i).collect();
                accepted = Some((pick, left));
                break;
            }
        }
        let Some((pick, left)) = accepted else {
            return Ok(GuessReport { guess, completed: false, rounds: round, columns: selected, cost: None });
        };
        selected.extend_from_slice(&pick);
        remaining = left;
        round += 1;
    }
    selected.sort_unstable();
    let cost = column_costs(a, &selected, p)?.iter().sum();
    Ok(GuessReport { guess, completed: true, rounds: round, columns: selected, cost: Some(cost) })
}

/// Tries geometric guesses of the optimal residual mass between a quarter of
/// the SVD rank-k cost and `||A||_p^p`, keeping the cheapest completed run.
pub fn css_select(a: &DenseMatrix, p: f64, k: usize, q: f64, seed: u64, cfg: &CssConfig) -> Result<CssResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if !(p >= 2.0 && q >= 2.0 && q <= p) {
        return Err(Error::InvalidArgument(format!("need 2 <= q <= p, got p = {p}, q = {q}")));
    }
    let d = a.ncols();
    if d <= 2 * k {
        let columns: Vec<usize> = (0..d).collect();
        return Ok(CssResult {
            column_costs: vec![0.0; d],
            columns,
            cost: 0.0,
            kappa: cfg.kappa,
            guess: 0.0,
            guesses: vec![],
        });
    }
    let hi = norm_p(a.data(), p).powf(p);
    if hi == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let lo = (svd_rank_k_cost(a, k, p)? / 4.0).max(hi * 1e-12).min(hi);
    let m = cfg.guesses.max(1);
    let mut reports = vec![];
    for g in 0..m {
        let t = if m == 1 { 1.0 } else { g as f64 / (m - 1) as f64 };
        let guess = lo * (hi / lo).powf(t);
        reports.push(run_guess(a, p, k, q, seed, g, guess, cfg)?);
    }
    let best = reports
        .iter()
        .filter(|r| r.completed)
        .min_by(|x, y| {
            x.cost
                .unwrap_or(f64::INFINITY)
                .total_cmp(&y.cost.unwrap_or(f64::INFINITY))
                .then(x.columns.len().cmp(&y.columns.len()))
        })
        .cloned();
    let Some(best) = best else {
        return Err(Error::RetryBudget(cfg.max_draws));
    };
    let costs = column_costs(a, &best.columns, p)?;
    Ok(CssResult {
        cost: costs.iter().sum(),
        column_costs: costs,
        columns: best.columns,
        kappa: cfg.kappa,
        guess: best.guess,
        guesses: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_columns_returns_all() {
        let a = crate::data::gaussian(10, 4, 1).unwrap();
        let r = css_select(&a, 4.0, 2, 2.0, 0, &CssConfig::default()).unwrap();
        assert_eq!(r.columns, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rank_k_matrix_has_zero_cost() {
        let u = crate::data::gaussian(20, 2, 1).unwrap();
        let v = crate::data::gaussian(2, 10, 2).unwrap();
        let a = DenseMatrix::from_nalgebra(&(u.to_nalgebra() * v.to_nalgebra()));
        let r = css_select(&a, 4.0, 2, 2.0, 3, &CssConfig::default()).unwrap();
        assert!(r.cost < 1e-12 * norm_p(a.data(), 4.0).powi(4), "{}", r.cost);
    }
}
