//! Small LP front ends over `microlp`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::linalg::{SpectralFactorization, Tolerances};
use crate::matrix::{dot, norm2, DenseMatrix};

fn map_err(e: microlp::Error) -> Error {
    match e {
        microlp::Error::Unbounded => Error::Unbounded,
        microlp::Error::Infeasible => Error::Infeasible,
        other => Error::DegenerateInput(format!("LP solver: {other:?}")),
    }
}

fn solve(p: &Problem) -> Result<microlp::Solution> {
    p.solve()
        .map_err(map_err)?
        .into_solution()
        .map_err(|_| Error::DegenerateInput("LP solver interrupted".into()))
}

/// `max <c, x>` subject to `|<a_i, x>| <= 1` for every row. `x` is restricted
/// to the row span (the objective must lie in it, else `Unbounded`).
pub fn maximize_over_box(c: &[f64], a: &DenseMatrix) -> Result<(Vec<f64>, f64)> {
    if c.len() != a.ncols() {
        return Err(Error::ShapeMismatch("objective length".into()));
    }
    let d = a.ncols();
    if c.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; d], 0.0));
    }
    if a.nrows() == 0 {
        return Err(Error::Unbounded);
    }
    let tol = Tolerances::default();
    let f = SpectralFactorization::new(a, tol)?;
    let v = &f.v;
    let r = f.rank;
    let cy: Vec<f64> = (0..r).map(|j| dot(v.column(j).as_slice(), c)).collect();
    let resid: Vec<f64> = (0..d).map(|i| c[i] - (0..r).map(|j| v[(i, j)] * cy[j]).sum::<f64>()).collect();
    if norm2(&resid) > tol.span * norm2(c) {
        return Err(Error::Unbounded);
    }
    // Full rank: work in the original coordinates, whose coefficients are the
    // input entries. Otherwise x = V y over the row span; |y_j| <= sqrt(m) / sigma_j
    // is implied by the constraints and bounds the variables.
    let full = r == d;
    let m = (a.nrows() as f64).sqrt();
    let mut prob = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = if full {
        c.iter().map(|&o| prob.add_var(o, (f64::NEG_INFINITY, f64::INFINITY))).collect()
    } else {
        cy.iter()
            .enumerate()
            .map(|(j, &o)| {
                let b = 2.0 * m / f.sigma[j];
                prob.add_var(o, (-b, b))
            })
            .collect()
    };
    for row in a.rows() {
        let coef: Vec<(microlp::Variable, f64)> = if full {
            vars.iter().copied().zip(row.iter().copied()).collect()
        } else {
            (0..r).map(|j| (vars[j], dot(v.column(j).as_slice(), row))).collect()
        };
        prob.add_constraint(coef.clone(), ComparisonOp::Le, 1.0);
        prob.add_constraint(coef, ComparisonOp::Ge, -1.0);
    }
    let sol = solve(&prob)?;
    let y: Vec<f64> = vars.iter().map(|&x| sol.var_value(x)).collect();
    let x: Vec<f64> = if full { y } else { (0..d).map(|i| (0..r).map(|j| v[(i, j)] * y[j]).sum()).collect() };
    Ok((x.clone(), dot(c, &x)))
}

/// `min_x ||Ax - b||_inf` as an LP in `(x, t)`.
pub fn minimize_linf_residual(a: &DenseMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    if b.len() != a.nrows() {
        return Err(Error::ShapeMismatch("right-hand side length".into()));
    }
    let d = a.ncols();
    if a.nrows() == 0 {
        return Ok((vec![0.0; d], 0.0));
    }
    // Rank-deficient input: x = V y over the row span. x = 0 is feasible with
    // t = ||b||_inf, so an optimum has ||Ax||_inf <= 2 ||b||_inf and
    // |y_j| <= 2 sqrt(m) ||b||_inf / sigma_j.
    let f = SpectralFactorization::new(a, Tolerances::default())?;
    let full = f.rank == d;
    let r = f.rank;
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let m = (a.nrows() as f64).sqrt();
    let mut prob = Problem::new(OptimizationDirection::Minimize);
    let ys: Vec<_> = if full {
        (0..d).map(|_| prob.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect()
    } else {
        (0..r)
            .map(|j| {
                let lim = 4.0 * m * bmax / f.sigma[j] + 1.0;
                prob.add_var(0.0, (-lim, lim))
            })
            .collect()
    };
    let t = prob.add_var(1.0, (0.0, f64::INFINITY));
    for (row, &bi) in a.rows().zip(b) {
        let mut coef: Vec<(microlp::Variable, f64)> = if full {
            ys.iter().copied().zip(row.iter().copied()).collect()
        } else {
            (0..r).map(|j| (ys[j], dot(f.v.column(j).as_slice(), row))).collect()
        };
        coef.push((t, -1.0));
        prob.add_constraint(coef.clone(), ComparisonOp::Le, bi);
        let last = coef.len() - 1;
        coef[last].1 = 1.0;
        prob.add_constraint(coef, ComparisonOp::Ge, bi);
    }
    let sol = solve(&prob)?;
    let y: Vec<f64> = ys.iter().map(|&v| sol.var_value(v)).collect();
    let x: Vec<f64> = if full { y } else { (0..d).map(|i| (0..r).map(|j| f.v[(i, j)] * y[j]).sum()).collect() };
    let res = a.rows().zip(b).map(|(r, bi)| (dot(r, &x) - bi).abs()).fold(0.0, f64::max);
    Ok((x, res))
}
