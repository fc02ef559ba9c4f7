//! Command-line and configuration-file arguments. Every subcommand's flags
//! double as the keys of its configuration-file table.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-iiss",
    version,
    about = "Hybrid-system iISS toolkit: simulation, certificate checks and MASP"
)]
pub struct Cli {
    /// Configuration file (TOML) with `schema_version` and per-command tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; runs are deterministic given the seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// Human-readable, 9 significant digits.
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Priority {
    JumpFirst,
    FlowFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertKind {
    /// iISS Lyapunov conditions (reset integrator).
    Iiss,
    /// Zero-input dissipation (reset integrator).
    ZeroInput,
    /// Storage dissipation with `ρ ≡ 0` (sampled-data integrator).
    Dissipativity,
    /// Emulation inequalities on `V`, `W` and `H` (sampled-data integrator).
    Bundle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an example artifact and write the hybrid arc.
    Simulate(SimulateArgs),
    /// Sample-check a certificate of an example artifact.
    CheckCert(CheckCertArgs),
    /// Maximum allowable sampling period, its extended form, or its inverse.
    Masp(MaspArgs),
    /// Compare nominal and σ-inflated solutions for closeness.
    Inflate(InflateArgs),
    /// Write an example artifact with optional parameter overrides.
    Example(ExampleArgs),
    /// Fit a KLL envelope to a zero-input ensemble.
    FitEnvelope(FitEnvelopeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::CheckCert(_) => "check-cert",
            Command::Masp(_) => "masp",
            Command::Inflate(_) => "inflate",
            Command::Example(_) => "example",
            Command::FitEnvelope(_) => "fit-envelope",
        }
    }
}

/// Fill unset fields of `self` from `other`.
pub trait Merge {
    fn merge(self, other: Self) -> Self;
}

macro_rules! merge_impl {
    ($ty:ident { $($field:ident),* $(,)? } $(, vec $vfield:ident)?) => {
        impl Merge for $ty {
            fn merge(self, other: Self) -> Self {
                Self {
                    $($field: self.$field.or(other.$field),)*
                    $($vfield: if self.$vfield.is_empty() { other.$vfield } else { self.$vfield },)?
                }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct MaspArgs {
    /// Lipschitz-type growth constant `L > 0`.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// L2-type gain `γ > 0`.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Extended period for `--c` and `--lambda`.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub extended: Option<bool>,
    /// `c > 1`, used with `--extended` or `--phi`.
    #[arg(long)]
    pub c: Option<f64>,
    /// `λ ∈ (0, 1)`, used with `--extended` or `--phi`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Find `(c, λ)` whose extended period equals `--tau`.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub invert: Option<bool>,
    /// Target period for `--invert`.
    #[arg(long)]
    pub tau: Option<f64>,
    /// `λ` held fixed while inverting.
    #[arg(long)]
    pub lambda_hint: Option<f64>,
    /// CSV of the `φ` trajectory for `--c` and `--lambda`.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub phi: Option<bool>,
    /// Integration steps of the `φ` trajectory.
    #[arg(long)]
    pub phi_steps: Option<usize>,
}
merge_impl!(MaspArgs {
    l,
    gamma,
    extended,
    c,
    lambda,
    invert,
    tau,
    lambda_hint,
    phi,
    phi_steps
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct ExampleArgs {
    /// `reset-integrator` or `sd-integrator`.
    #[arg(long)]
    pub name: Option<String>,
    /// Parameter override `KEY=VALUE`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}
merge_impl!(ExampleArgs { name }, vec set);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Example artifact written by `example`; `-` reads standard input.
    #[arg(long)]
    pub example: Option<PathBuf>,
    /// Flow-time horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Jump horizon.
    #[arg(long = "J")]
    #[serde(rename = "J")]
    pub j: Option<usize>,
    /// RK4 step.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub priority: Option<Priority>,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// `zero` or `constant:v1,v2,...`.
    #[arg(long)]
    pub input: Option<String>,
}
merge_impl!(SimulateArgs {
    example,
    t,
    j,
    dt,
    priority,
    x0,
    input
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct CheckCertArgs {
    /// Example artifact written by `example`; `-` reads standard input.
    #[arg(long)]
    pub example: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<CertKind>,
    /// Number of low-discrepancy samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Half-width of the state sampling box.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Half-width of the input sampling box.
    #[arg(long)]
    pub input_radius: Option<f64>,
}
merge_impl!(CheckCertArgs {
    example,
    kind,
    samples,
    radius,
    input_radius
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct InflateArgs {
    /// Example artifact written by `example`; `-` reads standard input.
    #[arg(long)]
    pub example: Option<PathBuf>,
    /// `σ(x) = k·ω(x)` with this `k`.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Constant value of every perturbation input component.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Closeness horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Closeness tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial state, comma separated; seeded random when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, value_enum)]
    pub priority: Option<Priority>,
}
merge_impl!(InflateArgs {
    example,
    sigma,
    delta,
    t,
    eps,
    x0,
    priority
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct FitEnvelopeArgs {
    /// Example artifact written by `example`; `-` reads standard input.
    #[arg(long)]
    pub example: Option<PathBuf>,
    /// Number of zero-input runs.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Flow-time horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Jump horizon.
    #[arg(long = "J")]
    #[serde(rename = "J")]
    pub j: Option<usize>,
    /// Radius of the initial-condition region.
    #[arg(long)]
    pub radius: Option<f64>,
    /// `linear` or `power:p`.
    #[arg(long)]
    pub rho1: Option<String>,
    /// `constant` or `reciprocal:a`.
    #[arg(long)]
    pub rho2: Option<String>,
}
merge_impl!(FitEnvelopeArgs {
    example,
    runs,
    t,
    j,
    radius,
    rho1,
    rho2
});

/// Contents of a configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    #[serde(rename = "schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub simulate: Option<SimulateArgs>,
    pub check_cert: Option<CheckCertArgs>,
    pub masp: Option<MaspArgs>,
    pub inflate: Option<InflateArgs>,
    pub example: Option<ExampleArgs>,
    pub fit_envelope: Option<FitEnvelopeArgs>,
}

pub const SCHEMA_VERSION: u32 = 1;

/// Keys accepted in the configuration table of `command`.
pub fn config_keys(command: &str) -> Option<Vec<String>> {
    let value = match command {
        "simulate" => serde_json::to_value(SimulateArgs::default()),
        "check-cert" => serde_json::to_value(CheckCertArgs::default()),
        "masp" => serde_json::to_value(MaspArgs::default()),
        "inflate" => serde_json::to_value(InflateArgs::default()),
        "example" => serde_json::to_value(ExampleArgs::default()),
        "fit-envelope" => serde_json::to_value(FitEnvelopeArgs::default()),
        _ => return None,
    }
    .ok()?;
    Some(value.as_object()?.keys().cloned().collect())
}

pub const COMMANDS: [&str; 6] = ["simulate", "check-cert", "masp", "inflate", "example", "fit-envelope"];
