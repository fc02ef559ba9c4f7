//! Batch front end for the `hybrid-iiss` toolkit.
//!
//! Subcommands exchange example definitions and results through files (or
//! standard streams). Exit status is 0 on success, 1 when a check finds
//! violations and 2 on usage or configuration errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
mod commands;
mod example;
mod format;

use std::io::{Read, Write};
use std::path::Path;

use clap::Parser;
use thiserror::Error;

use args::{Cli, ConfigFile, Format, Merge, SCHEMA_VERSION};

pub use example::{ExampleArtifact, Loaded};
pub use format::sig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hybrid_iiss::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Result of a subcommand: a body to write, and whether its check passed.
pub struct Outcome {
    pub body: String,
    pub passed: bool,
}

impl Outcome {
    fn ok(body: String) -> Self {
        Self { body, passed: true }
    }
}

/// Settings shared by all subcommands after merging flags with the file.
#[derive(Debug, Clone)]
pub struct Common {
    pub seed: u64,
    pub format: Option<Format>,
}

fn read_config(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: ConfigFile =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

/// Read an artifact path, with `-` meaning `stdin`.
pub(crate) fn read_source(path: &Path, stdin: &mut dyn Read) -> CliResult<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        stdin.read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
    }
}

fn execute(cli: Cli, stdin: &mut dyn Read) -> CliResult<(Outcome, Option<std::path::PathBuf>)> {
    let cfg = match &cli.config {
        Some(p) => read_config(p)?,
        None => ConfigFile {
            schema_version: SCHEMA_VERSION,
            ..Default::default()
        },
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let common = Common {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        format: cli.format.or(cfg.format),
    };
    let output = cli.output.or(cfg.output);
    use args::Command::*;
    let outcome = match cli.command {
        Simulate(a) => commands::simulate(a.merge(cfg.simulate.unwrap_or_default()), &common, stdin)?,
        CheckCert(a) => commands::check_cert(a.merge(cfg.check_cert.unwrap_or_default()), &common, stdin)?,
        Masp(a) => commands::masp(a.merge(cfg.masp.unwrap_or_default()), &common)?,
        Inflate(a) => commands::inflate(a.merge(cfg.inflate.unwrap_or_default()), &common, stdin)?,
        Example(a) => commands::example(a.merge(cfg.example.unwrap_or_default()), &common)?,
        FitEnvelope(a) => commands::fit_envelope(a.merge(cfg.fit_envelope.unwrap_or_default()), &common, stdin)?,
    };
    Ok((outcome, output))
}

/// Run with explicit arguments and streams; returns the exit status.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    match execute(cli, stdin) {
        Ok((outcome, output)) => {
            let written = match output {
                Some(path) => std::fs::write(&path, outcome.body.as_bytes()),
                None => stdout.write_all(outcome.body.as_bytes()),
            };
            if let Err(e) = written {
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    return i32::from(!outcome.passed);
                }
                let _ = writeln!(stderr, "error: cannot write output: {e}");
                return 2;
            }
            if outcome.passed {
                0
            } else {
                let _ = writeln!(stderr, "check failed: violations found");
                1
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}
