use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::args::{Cmd, FormatArg, Input};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Text,
    Binary,
}

impl From<FormatArg> for FileFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => FileFormat::Text,
            FormatArg::Binary => FileFormat::Binary,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFlags {
    pub sandwich: bool,
    pub lp: bool,
}

/// Normalized view of one invocation, echoed into every result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub format: Option<FileFormat>,
    pub seed: Option<u64>,
    #[serde(with = "num")]
    pub p: Option<f64>,
    #[serde(with = "num")]
    pub q: Option<f64>,
    #[serde(with = "num")]
    pub eps: Option<f64>,
    pub k: Option<usize>,
    pub passes: Option<usize>,
    pub n_declared: Option<usize>,
    pub output: Option<PathBuf>,
    pub audit: Option<AuditFlags>,
}

/// JSON has no infinity; non-finite values are written as strings.
mod num {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(x),
            Some(x) => s.serialize_some(&x.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => t.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

impl RunConfig {
    fn blank(command: &str) -> Self {
        Self {
            command: command.into(),
            input: None,
            format: None,
            seed: None,
            p: None,
            q: None,
            eps: None,
            k: None,
            passes: None,
            n_declared: None,
            output: None,
            audit: None,
        }
    }

    fn with_input(command: &str, i: &Input) -> Self {
        Self {
            input: Some(i.input.clone()),
            format: i.format.map(Into::into),
            passes: i.passes,
            n_declared: i.n_declared,
            output: i.output.clone(),
            ..Self::blank(command)
        }
    }

    pub fn from_command(cmd: &Cmd) -> Self {
        match cmd {
            Cmd::Generate { seed, out, format, .. } => Self {
                seed: *seed,
                output: out.clone(),
                format: Some((*format).into()),
                ..Self::blank("generate")
            },
            Cmd::SketchLinf { input, k, .. } => Self { k: *k, ..Self::with_input("sketch-linf", input) },
            Cmd::SketchLp { input, p, q, seed, .. } => {
                Self { p: Some(*p), q: *q, seed: *seed, ..Self::with_input("sketch-lp", input) }
            }
            Cmd::Lewis { input, p, .. } => Self { p: Some(*p), ..Self::with_input("lewis", input) },
            Cmd::Embed { input, p, q, eps, seed, .. } => Self {
                p: Some(*p),
                q: Some(*q),
                eps: Some(*eps),
                seed: *seed,
                ..Self::with_input("embed", input)
            },
            Cmd::Sample { input, p, eps, seed, .. } => {
                Self { p: Some(*p), eps: Some(*eps), seed: *seed, ..Self::with_input("sample", input) }
            }
            Cmd::Regress { input, p, q, eps, seed, .. } => Self {
                p: Some(*p),
                q: Some(*q),
                eps: Some(*eps),
                seed: *seed,
                ..Self::with_input("regress", input)
            },
            Cmd::Css { input, p, k, q, seed } => Self {
                p: Some(*p),
                q: Some(*q),
                k: Some(*k),
                seed: *seed,
                ..Self::with_input("css", input)
            },
            Cmd::Hull { input, .. } => Self::with_input("hull", input),
            Cmd::Ellipsoid { input, .. } => Self::with_input("ellipsoid", input),
            Cmd::Volmax { input, k, seed, .. } => Self { k: Some(*k), seed: *seed, ..Self::with_input("volmax", input) },
            Cmd::Shell { input, .. } => Self::with_input("shell", input),
            Cmd::LpSolve { input, .. } => Self::with_input("lp-solve", input),
            Cmd::Audit { input, p, no_sandwich } => Self {
                p: *p,
                audit: Some(AuditFlags { sandwich: !no_sandwich, lp: p.is_some() }),
                ..Self::with_input("audit", input)
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Cli;
    use clap::Parser;

    fn parse(args: &[&str]) -> RunConfig {
        let cli = Cli::try_parse_from(std::iter::once("geostream").chain(args.iter().copied())).unwrap();
        RunConfig::from_command(&cli.command)
    }

    #[test]
    fn round_trips_through_json() {
        for args in [
            &["regress", "--input", "a.txt", "--p", "inf"][..],
            &["css", "--input", "a.txt", "--p", "4", "--k", "2", "--seed", "9", "--passes", "3"],
            &["audit", "--input", "a.bin", "--format", "binary", "--p", "3", "--no-sandwich"],
            &["generate", "--kind", "sphere", "--n", "10", "--d", "3", "--seed", "1"],
        ] {
            let c = parse(args);
            let s = serde_json::to_string(&c).unwrap();
            let back: RunConfig = serde_json::from_str(&s).unwrap();
            assert_eq!(back, c, "{s}");
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["geostream", "hull", "--input", "a", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["geostream", "teleport"]).is_err());
    }

    #[test]
    fn infinity_is_written_as_text() {
        let c = parse(&["regress", "--input", "a.txt", "--p", "inf"]);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["p"], "inf");
    }
}
