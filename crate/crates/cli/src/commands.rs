use std::io::Write;

use geostream::css::{css_select, CssConfig};
use geostream::data::{self, DatasetKind};
use geostream::error::Error;
use geostream::geometry::{
    ellipsoid_from_coreset, hull_support_query, lp_maximize, shell_solve, volmax_select, EllipsoidTarget, ShellSketch,
    Symmetrizer, VolmaxMode,
};
use geostream::io::{self, FileRowSource};
use geostream::lewis::{lewis_fixed_point, stream_lewis_quadratic, FixedPointConfig, PassMode, StreamConfig};
use geostream::linf_coreset::{Coreset, KRobustCascade, RestrictedCoreset, SizeBasis};
use geostream::lp_stream::{ExpEmbedSketch, LpQuadraticSketch, LqTradeoffSketch};
use geostream::matrix::{dot, norm2, DenseMatrix};
use geostream::online_scores::{audit_sums, OnlineScoreState};
use geostream::regression::{linf_regression_stream, sketch_solve_regression, streaming_regression_coreset};
use geostream::sampling::{lewis_sample, lp_to_lq_embed, MergeTreeSummary, OnlineSpectralSampler, SampledMatrix};
use geostream::source::ReplayableRowSource;
use serde_json::{json, Value};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    /// 2 for configuration errors, 3 for bad input data, 4 for algorithmic failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(Error::InvalidArgument(_)) => 2,
            CliError::Lib(e) if e.is_data_error() => 3,
            CliError::Lib(_) => 4,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Config(m) => ("Config", m.clone()),
            CliError::Lib(e) => (e.kind(), e.to_string()),
        };
        json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } })
    }
}

type Out = Result<Value, CliError>;

fn seed(s: Option<u64>, cmd: &str) -> Result<u64, CliError> {
    s.ok_or_else(|| CliError::Config(format!("{cmd} is randomized and needs an explicit --seed")))
}

fn parse_vec(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad number {t:?} in --{what}"))))
        .collect()
}

fn source(i: &Input) -> Result<FileRowSource, CliError> {
    Ok(FileRowSource::open(&i.input, i.format.map(Into::into))?.with_cap(i.passes))
}

fn for_each_row(src: &mut FileRowSource, mut f: impl FnMut(usize, &[f64]) -> geostream::error::Result<()>) -> Result<usize, CliError> {
    Ok(src.pass(&mut |i, r| f(i, r))?)
}

/// Reads the whole input in one counted pass.
fn load(src: &mut FileRowSource) -> Result<DenseMatrix, CliError> {
    let mut m = DenseMatrix::zeros(0, src.dim());
    for_each_row(src, |_, r| m.push_row(r))?;
    if m.nrows() == 0 {
        return Err(Error::EmptyStream.into());
    }
    Ok(m)
}

/// `n_declared` from the flag, or from a counting pass.
fn declared(i: &Input, src: &mut FileRowSource) -> Result<usize, CliError> {
    match i.n_declared {
        Some(n) => Ok(n),
        None => for_each_row(src, |_, _| Ok(())),
    }
}

fn sample_json(s: &SampledMatrix) -> Value {
    json!({ "rows": s.len(), "indices": s.source_indices, "scales": s.scales })
}

fn matrix_json(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::from((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

/// Tracks whether every entry is an integer and the largest magnitude.
#[derive(Default)]
struct Integrality {
    all_integer: bool,
    max_abs: f64,
    seen: bool,
}

impl Integrality {
    fn observe(&mut self, r: &[f64]) {
        if !self.seen {
            self.all_integer = true;
            self.seen = true;
        }
        for v in r {
            self.all_integer &= v.fract() == 0.0;
            self.max_abs = self.max_abs.max(v.abs());
        }
    }

    fn bound(&self) -> Option<f64> {
        (self.seen && self.all_integer).then_some(self.max_abs.max(1.0))
    }
}

pub fn generate(cmd: &Cmd) -> Out {
    let Cmd::Generate { kind, n, d, m, levels, base, clusters, seed: s, out, format } = cmd else { unreachable!() };
    let need_n = || n.ok_or_else(|| CliError::Config("--n is required for this kind".into()));
    let dataset = match kind {
        Kind::RandomInt => DatasetKind::RandomInt { n: need_n()?, d: *d, m: *m },
        Kind::ScaledIdentity => DatasetKind::ScaledIdentity { d: *d, levels: *levels, base: *base },
        Kind::Sphere => DatasetKind::Sphere { n: need_n()?, d: *d },
        Kind::Clustered => DatasetKind::Clustered { n: need_n()?, d: *d, clusters: *clusters },
        Kind::Gaussian => DatasetKind::Gaussian { n: need_n()?, d: *d },
    };
    let sd = match kind {
        Kind::ScaledIdentity => s.unwrap_or(0),
        _ => seed(*s, "generate")?,
    };
    let mat = data::generate(&dataset, sd)?;
    match out {
        Some(path) => {
            io::write_matrix(path, &mat, (*format).into())?;
            Ok(json!({ "dataset": dataset, "rows": mat.nrows(), "cols": mat.ncols(), "path": path }))
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = std::io::BufWriter::new(stdout.lock());
            match format {
                FormatArg::Text => io::write_text(&mut w, &mat)?,
                FormatArg::Binary => io::write_binary(&mut w, &mat)?,
            }
            w.flush().map_err(Error::from)?;
            Ok(Value::Null)
        }
    }
}

pub fn sketch_linf(cmd: &Cmd) -> Out {
    let Cmd::SketchLinf { input, k, restricted } = cmd else { unreachable!() };
    let mut src = source(input)?;
    let d = src.dim();
    if *restricted {
        let mut c = RestrictedCoreset::new(d);
        for_each_row(&mut src, |_, r| c.ingest(r).map(|_| ()))?;
        return Ok(json!({
            "kind": "restricted",
            "size": c.len(),
            "size_bound": 2 * d - 1,
            "threshold": c.threshold(),
            "indices": c.indices(),
            "passes": src.passes(),
        }));
    }
    if let Some(k) = k {
        let mut c = KRobustCascade::new(d, *k);
        for_each_row(&mut src, |_, r| c.ingest_row(r).map(|_| ()))?;
        let levels: Vec<Value> =
            c.levels().iter().map(|l| json!({ "size": l.len(), "indices": l.indices() })).collect();
        return Ok(json!({
            "kind": "k_robust",
            "k": k,
            "union_size": c.union_size(),
            "delta": c.delta(),
            "levels": levels,
            "passes": src.passes(),
        }));
    }
    let mut c = Coreset::new(d);
    let mut st = OnlineScoreState::new(d);
    let mut ints = Integrality::default();
    for_each_row(&mut src, |_, r| {
        ints.observe(r);
        st.observe_online_leverage(r)?;
        c.ingest_row(r).map(|_| ())
    })?;
    let basis = match ints.bound() {
        Some(m) => SizeBasis::IntegerBounded(m),
        None => SizeBasis::OnlineCondition(st.online_cond_log().exp()),
    };
    Ok(json!({
        "kind": "coreset",
        "n_seen": c.n_seen(),
        "size": c.len(),
        "delta": c.delta(),
        "indices": c.indices(),
        "weights": c.weights(),
        "size_report": c.certified_size_bound(basis),
        "passes": src.passes(),
    }))
}

pub fn sketch_lp(cmd: &Cmd) -> Out {
    let Cmd::SketchLp { input, p, method, q, block, replicas, seed: s } = cmd else { unreachable!() };
    let mut src = source(input)?;
    let d = src.dim();
    match method {
        LpMethod::Quadratic => {
            let n = declared(input, &mut src)?;
            let mut sk = LpQuadraticSketch::new(d, *p, n)?;
            for_each_row(&mut src, |_, r| sk.ingest(r).map(|_| ()))?;
            let w = sk.weight_log();
            Ok(json!({
                "method": "quadratic",
                "rows_seen": sk.rows_seen(),
                "delta": sk.delta(),
                "chain_delta": sk.chain_delta(),
                "s_sum": sk.s_sum(),
                "weight_range": [w.iter().cloned().fold(f64::INFINITY, f64::min), w.iter().cloned().fold(0.0, f64::max)],
                "form": matrix_json(sk.form().matrix()),
                "passes": src.passes(),
            }))
        }
        LpMethod::Tradeoff => {
            let q = q.ok_or_else(|| CliError::Config("--q is required for the trade-off sketch".into()))?;
            let sd = seed(*s, "sketch-lp --method tradeoff")?;
            let n = declared(input, &mut src)?;
            let mut sk = LqTradeoffSketch::new(d, *p, q, n, *block, sd)?;
            for_each_row(&mut src, |_, r| sk.ingest(r).map(|_| ()))?;
            Ok(json!({
                "method": "tradeoff",
                "q": q,
                "holder_delta": sk.holder_delta(),
                "summary": sample_json(&sk.summary().summary()),
                "max_inventory": sk.summary().max_inventory(),
                "passes": src.passes(),
            }))
        }
        LpMethod::Exp => {
            let sd = seed(*s, "sketch-lp --method exp")?;
            let mut sk = ExpEmbedSketch::new(d, *p, *replicas, sd)?;
            for_each_row(&mut src, |_, r| sk.ingest(r).map(|_| ()))?;
            let sizes: Vec<usize> = sk.replicas().iter().map(Coreset::len).collect();
            Ok(json!({
                "method": "exp",
                "replicas": replicas,
                "replica_sizes": sizes,
                "max_delta": sk.max_delta(),
                "factors": sk.factors(),
                "passes": src.passes(),
            }))
        }
    }
}

/// Iteration cap for offline Lewis weights; the solver stops early at its tolerance.
const CLI_LEWIS_ITERATIONS: usize = 200;

pub fn lewis(cmd: &Cmd) -> Out {
    let Cmd::Lewis { input, p, mode, iterations } = cmd else { unreachable!() };
    let mut src = source(input)?;
    if *mode == LewisMode::Offline {
        let a = load(&mut src)?;
        // run to the tolerance unless a budget is given
        let cfg = FixedPointConfig { iterations: Some(iterations.unwrap_or(CLI_LEWIS_ITERATIONS)), ..FixedPointConfig::default() };
        let s = lewis_fixed_point(&a, *p, &cfg)?;
        return Ok(json!({
            "mode": "offline",
            "sum": s.weights.sum(),
            "iterations": s.iterations,
            "residual": s.residual,
            "weights": s.weights.w,
            "passes": src.passes(),
        }));
    }
    let pm = if *mode == LewisMode::FewPass { PassMode::FewPass } else { PassMode::LogPass };
    let cfg = StreamConfig { rounds: *iterations };
    let out = stream_lewis_quadratic(&mut src, *p, pm, &cfg)?;
    let driver = out.passes;
    let mut w = vec![];
    for_each_row(&mut src, |_, r| {
        w.push(if *mode == LewisMode::Averaged { out.recover_averaged(r)? } else { out.recover(r)? });
        Ok(())
    })?;
    let name = match mode {
        LewisMode::FewPass => "few_pass",
        LewisMode::LogPass => "log_pass",
        _ => "averaged",
    };
    Ok(json!({
        "mode": name,
        "rounds": out.rounds_run,
        "driver_passes": driver,
        "sum": w.iter().sum::<f64>(),
        "weights": w,
        "passes": src.passes(),
    }))
}

pub fn embed(cmd: &Cmd) -> Out {
    let Cmd::Embed { input, p, q, eps, budget, seed: s } = cmd else { unreachable!() };
    let sd = seed(*s, "embed")?;
    let mut src = source(input)?;
    let a = load(&mut src)?;
    let e = lp_to_lq_embed(&a, *p, *q, *eps, *budget, sd)?;
    Ok(json!({
        "budget": e.budget,
        "alpha": e.alpha,
        "kappa": e.kappa,
        "lambda": e.lambda,
        "kappa_total": e.kappa_total,
        "sample": sample_json(&e.sample),
        "passes": src.passes(),
    }))
}

pub fn sample(cmd: &Cmd) -> Out {
    let Cmd::Sample { input, method, p, size, eps, block, seed: s } = cmd else { unreachable!() };
    let sd = seed(*s, "sample")?;
    let mut src = source(input)?;
    let d = src.dim();
    match method {
        SampleMethod::Lewis => {
            let size = size.ok_or_else(|| CliError::Config("--size is required for Lewis sampling".into()))?;
            let a = load(&mut src)?;
            let w = lewis_fixed_point(&a, *p, &FixedPointConfig { iterations: Some(CLI_LEWIS_ITERATIONS), ..FixedPointConfig::default() })?;
            let smp = lewis_sample(&a, &w.weights, size, sd)?;
            Ok(json!({ "method": "lewis", "p": p, "sample": sample_json(&smp), "passes": src.passes() }))
        }
        SampleMethod::Online => {
            let mut smp = OnlineSpectralSampler::new(d, *eps, sd)?;
            for_each_row(&mut src, |_, r| smp.ingest(r).map(|_| ()))?;
            Ok(json!({
                "method": "online",
                "oversampling": smp.oversampling(),
                "sample": sample_json(smp.sample()),
                "passes": src.passes(),
            }))
        }
        SampleMethod::Merge => {
            let mut m = MergeTreeSummary::new(d, *p, *eps, *block, sd)?;
            for_each_row(&mut src, |_, r| m.ingest(r))?;
            Ok(json!({
                "method": "merge",
                "depth": m.depth(),
                "max_inventory": m.max_inventory(),
                "eps_level": m.eps_level(),
                "sample": sample_json(&m.summary()),
                "passes": src.passes(),
            }))
        }
    }
}

pub fn regress(cmd: &Cmd) -> Out {
    let Cmd::Regress { input, p, q, eps, route, budget, seed: s } = cmd else { unreachable!() };
    let route = route.unwrap_or(if p.is_infinite() { RouteArg::Linf } else { RouteArg::Offline });
    let mut src = source(input)?;
    let ab = load(&mut src)?;
    if ab.ncols() < 2 {
        return Err(CliError::Config("regression input needs at least two columns".into()));
    }
    let d = ab.ncols() - 1;
    let a = ab.select_columns(&(0..d).collect::<Vec<_>>());
    let b = ab.column(d);
    let res = match route {
        RouteArg::Offline => sketch_solve_regression(&a, &b, *p, *q, *eps, *budget, seed(*s, "regress")?)?,
        RouteArg::Streaming => streaming_regression_coreset(&a, &b, *p, *eps, seed(*s, "regress")?)?,
        RouteArg::Linf => linf_regression_stream(&a, &b)?,
    };
    Ok(json!({ "regression": res, "passes": src.passes() }))
}

pub fn css(cmd: &Cmd) -> Out {
    let Cmd::Css { input, p, k, q, seed: s } = cmd else { unreachable!() };
    let sd = seed(*s, "css")?;
    let mut src = source(input)?;
    let a = load(&mut src)?;
    let r = css_select(&a, *p, *k, *q, sd, &CssConfig::default())?;
    let guesses: Vec<Value> = r
        .guesses
        .iter()
        .map(|g| json!({ "guess": g.guess, "completed": g.completed, "rounds": g.rounds, "cost": g.cost }))
        .collect();
    Ok(json!({
        "columns": r.columns,
        "cost": r.cost,
        "norm": r.cost.powf(1.0 / p),
        "column_costs": r.column_costs,
        "kappa": r.kappa,
        "guess": r.guess,
        "guesses": guesses,
        "passes": src.passes(),
    }))
}

/// Coreset over the rows, or over `±(a_i - a_1)` when symmetrizing.
fn coreset_pass(src: &mut FileRowSource, symmetrize: bool) -> Result<Coreset, CliError> {
    let d = src.dim();
    let mut c = Coreset::new(d);
    let mut sym = Symmetrizer::new();
    for_each_row(src, |i, r| {
        if symmetrize {
            if let Some((plus, minus)) = sym.push(r)? {
                c.ingest_at(2 * i, &plus, 1.0)?;
                c.ingest_at(2 * i + 1, &minus, 1.0)?;
            }
            Ok(())
        } else {
            c.ingest_at(i, r, 1.0).map(|_| ())
        }
    })?;
    if c.n_seen() == 0 {
        return Err(Error::EmptyStream.into());
    }
    Ok(c)
}

pub fn hull(cmd: &Cmd) -> Out {
    let Cmd::Hull { input, direction, symmetrize } = cmd else { unreachable!() };
    let mut src = source(input)?;
    let c = coreset_pass(&mut src, *symmetrize)?;
    let mut out = json!({
        "symmetrized": symmetrize,
        "size": c.len(),
        "delta": c.delta(),
        "indices": c.indices(),
        "passes": src.passes(),
    });
    if let Some(dir) = direction {
        let u = parse_vec(dir, "direction")?;
        if u.len() != c.dim() {
            return Err(Error::ShapeMismatch(format!("direction has length {}, input has {} columns", u.len(), c.dim())).into());
        }
        let h = hull_support_query(&c, &u)?;
        out["support"] = json!(h);
        out["support_bounds"] = json!([h, c.delta() * h]);
        if *symmetrize {
            out["width_bounds"] = json!([h, 2.0 * c.delta() * h]);
        }
    }
    Ok(out)
}

pub fn ellipsoid(cmd: &Cmd) -> Out {
    let Cmd::Ellipsoid { input, target } = cmd else { unreachable!() };
    let mut src = source(input)?;
    let c = coreset_pass(&mut src, false)?;
    let t = match target {
        TargetArg::Polytope => EllipsoidTarget::Polytope,
        TargetArg::Hull => EllipsoidTarget::Hull,
    };
    let e = ellipsoid_from_coreset(&c, t)?;
    Ok(json!({
        "target": e.target,
        "delta": e.delta,
        "rank": e.rank,
        "coreset_size": c.len(),
        "matrix": matrix_json(e.ellipsoid.h.matrix()),
        "passes": src.passes(),
    }))
}

pub fn volmax(cmd: &Cmd) -> Out {
    let Cmd::Volmax { input, k, r, mode, seed: s } = cmd else { unreachable!() };
    let sd = seed(*s, "volmax")?;
    let mut src = source(input)?;
    let a = load(&mut src)?;
    let r = r.unwrap_or(a.ncols());
    let res = match mode {
        VolmaxArg::Exact => volmax_select(&a, *k, r, sd, VolmaxMode::Exact)?,
        VolmaxArg::Greedy => volmax_select(&a, *k, r, sd, VolmaxMode::Greedy)?,
        VolmaxArg::Auto => match volmax_select(&a, *k, r, sd, VolmaxMode::Exact) {
            Err(Error::SizeLimit(_)) => volmax_select(&a, *k, r, sd, VolmaxMode::Greedy)?,
            other => other?,
        },
    };
    Ok(json!({ "volmax": res, "passes": src.passes() }))
}

pub fn shell(cmd: &Cmd) -> Out {
    let Cmd::Shell { input, stream } = cmd else { unreachable!() };
    let mut src = source(input)?;
    let res = if *stream {
        let mut sk = ShellSketch::new(src.dim());
        for_each_row(&mut src, |_, r| sk.ingest(r))?;
        sk.solve(None)?
    } else {
        shell_solve(&load(&mut src)?)?
    };
    Ok(json!({ "shell": res, "width": res.width(), "passes": src.passes() }))
}

pub fn lp_solve(cmd: &Cmd) -> Out {
    let Cmd::LpSolve { input, objective } = cmd else { unreachable!() };
    let obj = parse_vec(objective, "objective")?;
    let mut src = source(input)?;
    if obj.len() != src.dim() {
        return Err(Error::ShapeMismatch(format!("objective has length {}, input has {} columns", obj.len(), src.dim())).into());
    }
    let c = coreset_pass(&mut src, false)?;
    let r = lp_maximize(&obj, &c)?;
    Ok(json!({ "lp": r, "coreset_size": c.len(), "passes": src.passes() }))
}

/// Number of stored rows reused as audit query directions.
const AUDIT_ROW_QUERIES: usize = 64;

pub fn audit(cmd: &Cmd) -> Out {
    let Cmd::Audit { input, p, no_sandwich } = cmd else { unreachable!() };
    let mut src = source(input)?;
    let d = src.dim();
    let mut st = match p {
        Some(p) => OnlineScoreState::with_prefix(d, *p),
        None => OnlineScoreState::new(d),
    };
    let mut c = Coreset::new(d);
    let mut ints = Integrality::default();
    let mut queries: Vec<Vec<f64>> = (0..d).map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let n = for_each_row(&mut src, |_, r| {
        ints.observe(r);
        match p {
            Some(p) => st.observe_online_lp_sensitivity(r, *p, false)?,
            None => st.observe_online_leverage(r)?,
        };
        if queries.len() < d + AUDIT_ROW_QUERIES {
            let nr = norm2(r);
            if nr > 0.0 {
                queries.push(r.iter().map(|v| v / nr).collect());
            }
        }
        c.ingest_row(r).map(|_| ())
    })?;
    if n == 0 {
        return Err(Error::EmptyStream.into());
    }
    let report = audit_sums(&st, n, d, ints.bound());
    let basis = match ints.bound() {
        Some(m) => SizeBasis::IntegerBounded(m),
        None => SizeBasis::OnlineCondition(st.online_cond_log().exp()),
    };
    let size = c.certified_size_bound(basis);
    let mut pass = report.pass && size.pass && report.lp.as_ref().is_none_or(|l| l.pass);
    let mut out = json!({
        "rows": n,
        "sum_audit": report,
        "coreset_size": size,
    });
    if !no_sandwich {
        let mut full = vec![0.0f64; queries.len()];
        for_each_row(&mut src, |_, r| {
            for (f, x) in full.iter_mut().zip(&queries) {
                *f = f.max(dot(r, x).abs());
            }
            Ok(())
        })?;
        let delta = c.delta();
        let mut violations = 0;
        for (x, f) in queries.iter().zip(&full) {
            let s = c.query(x, geostream::linf_coreset::Norm::Linf)?;
            if s > f * (1.0 + 1e-9) || *f > delta * s * (1.0 + 1e-9) {
                violations += 1;
            }
        }
        pass &= violations == 0;
        out["sandwich"] = json!({ "queries": queries.len(), "violations": violations, "delta": delta });
    }
    out["pass"] = json!(pass);
    out["passes"] = json!(src.passes());
    Ok(out)
}
