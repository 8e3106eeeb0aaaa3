mod args;
mod commands;
mod config;

use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Cmd};
use commands::CliError;
use config::RunConfig;

fn dispatch(cmd: &Cmd) -> Result<Value, CliError> {
    match cmd {
        Cmd::Generate { .. } => commands::generate(cmd),
        Cmd::SketchLinf { .. } => commands::sketch_linf(cmd),
        Cmd::SketchLp { .. } => commands::sketch_lp(cmd),
        Cmd::Lewis { .. } => commands::lewis(cmd),
        Cmd::Embed { .. } => commands::embed(cmd),
        Cmd::Sample { .. } => commands::sample(cmd),
        Cmd::Regress { .. } => commands::regress(cmd),
        Cmd::Css { .. } => commands::css(cmd),
        Cmd::Hull { .. } => commands::hull(cmd),
        Cmd::Ellipsoid { .. } => commands::ellipsoid(cmd),
        Cmd::Volmax { .. } => commands::volmax(cmd),
        Cmd::Shell { .. } => commands::shell(cmd),
        Cmd::LpSolve { .. } => commands::lp_solve(cmd),
        Cmd::Audit { .. } => commands::audit(cmd),
    }
}

fn emit(v: &Value, path: Option<&std::path::Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).expect("serializable") + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Lib(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            let _ = emit(&err.to_json(), None);
            return ExitCode::from(2);
        }
    };
    let config = RunConfig::from_command(&cli.command);
    let start = Instant::now();
    let result = dispatch(&cli.command);
    eprintln!("{}", json!({ "command": config.command, "elapsed_ms": start.elapsed().as_secs_f64() * 1e3 }));
    let out = match result {
        // generate without --out already wrote the matrix to stdout
        Ok(Value::Null) => return ExitCode::SUCCESS,
        Ok(v) => {
            // for generate the output path names the matrix file, not the report
            let dest = if matches!(cli.command, Cmd::Generate { .. }) { None } else { config.output.as_deref() };
            emit(&json!({ "command": config.command, "config": config, "result": v }), dest)
        }
        Err(e) => Err(e),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = emit(&e.to_json(), None);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
