use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "geostream", version, about = "Streaming coresets, Lewis weights and geometry sketches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for geostream::io::Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => geostream::io::Format::Text,
            FormatArg::Binary => geostream::io::Format::Binary,
        }
    }
}

/// Options shared by every command that reads a matrix.
#[derive(Args, Debug, Clone)]
pub struct Input {
    /// Matrix file, one row per line or GSTRM1 binary.
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; detected from the file header when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Maximum number of passes over the input.
    #[arg(long)]
    pub passes: Option<usize>,
    /// Declared stream length for sketches that need it up front.
    #[arg(long)]
    pub n_declared: Option<usize>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    RandomInt,
    ScaledIdentity,
    Sphere,
    Clustered,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LpMethod {
    Quadratic,
    Tradeoff,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LewisMode {
    Offline,
    FewPass,
    LogPass,
    Averaged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SampleMethod {
    Lewis,
    Online,
    Merge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    Offline,
    Streaming,
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Polytope,
    Hull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VolmaxArg {
    Auto,
    Exact,
    Greedy,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate a synthetic matrix.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: usize,
        /// Entry bound for random-int.
        #[arg(long, default_value_t = 100)]
        m: i64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 2.0)]
        base: f64,
        #[arg(long, default_value_t = 4)]
        clusters: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; the matrix goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Online ℓ∞ coreset (optionally k-robust or angle-restricted).
    SketchLinf {
        #[command(flatten)]
        input: Input,
        /// Build a k-robust cascade instead of a single coreset.
        #[arg(long)]
        k: Option<usize>,
        /// Keep only rows at a large angle to every kept row.
        #[arg(long)]
        restricted: bool,
    },
    /// One-pass ℓp subspace sketch.
    SketchLp {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value = "quadratic")]
        method: LpMethod,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 256)]
        block: usize,
        #[arg(long, default_value_t = geostream::lp_stream::DEFAULT_REPLICAS)]
        replicas: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Lewis weights, offline or by replaying the stream.
    Lewis {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value = "offline")]
        mode: LewisMode,
        /// Fixed-point iterations or FewPass rounds.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Sampled ℓp to ℓq embedding.
    Embed {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Row sampling: Lewis, online spectral or merge-and-reduce.
    Sample {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "lewis")]
        method: SampleMethod,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 256)]
        block: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// ℓp regression; the last input column is the target.
    Regress {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, value_enum)]
        route: Option<RouteArg>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// ℓp column subset selection.
    Css {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Symmetric hull support from the ℓ∞ coreset.
    Hull {
        #[command(flatten)]
        input: Input,
        /// Comma-separated query direction.
        #[arg(long)]
        direction: Option<String>,
        /// Use differences to the first point, for widths of a point set.
        #[arg(long)]
        symmetrize: bool,
    },
    /// Ellipsoid rounding of the polytope or the symmetric hull.
    Ellipsoid {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "polytope")]
        target: TargetArg,
    },
    /// Large-volume subset of k rows.
    Volmax {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k: usize,
        /// Sketch dimension; the input dimension disables sketching.
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: VolmaxArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Thinnest spherical shell around the points.
    Shell {
        #[command(flatten)]
        input: Input,
        /// Keep only the coresets; radii are certified instead of exact.
        #[arg(long)]
        stream: bool,
    },
    /// `max <c, x>` subject to `||Ax||_inf <= 1`.
    LpSolve {
        #[command(flatten)]
        input: Input,
        /// Comma-separated objective.
        #[arg(long)]
        objective: String,
    },
    /// Online-score sum bound and coreset sandwich checks.
    Audit {
        #[command(flatten)]
        input: Input,
        /// Also audit online ℓp sensitivities at this p.
        #[arg(long)]
        p: Option<f64>,
        /// Skip the sandwich check (saves a pass).
        #[arg(long)]
        no_sandwich: bool,
    },
}
