use std::io::Read;

use hybrid_iiss::certificates::{
    check_dissipativity, check_iiss_lyapunov, check_zero_input_as, fit_kll_envelope, EnvelopeShape, FitOptions,
    RegionSampler, Rho1Family, Rho2Family, ViolationReport,
};
use hybrid_iiss::examples::{reset_integrator, reset_zero_input_certificate, sd_certificate, sd_integrator, sd_layout};
use hybrid_iiss::sampled_data::{
    check_assumption_bundle, invert_masp, masp as masp_value, masp_extended, phi_solve, ExtendedMaspParams, MaspParams,
    DEFAULT_LAMBDA_HINT,
};
use hybrid_iiss::sampling::{norm, BoxRegion};
use hybrid_iiss::simulator::{closeness, solve, solve_ensemble, InputSource, JumpPriority, SolverOptions};
use hybrid_iiss::system::{inflate as inflate_system, InflateOptions, PerturbedSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::args::{
    CertKind, CheckCertArgs, ExampleArgs, FitEnvelopeArgs, Format, InflateArgs, MaspArgs, Priority, SimulateArgs,
    SCHEMA_VERSION,
};
use crate::example::Loaded;
use crate::format::{json as to_json, sig, text_table};
use crate::{read_source, CliError, CliResult, Common, Outcome};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load(path: &Option<std::path::PathBuf>, stdin: &mut dyn Read) -> CliResult<Loaded> {
    let path = path
        .as_ref()
        .ok_or_else(|| usage("--example <FILE> is required (use - for standard input)"))?;
    Loaded::parse(&read_source(path, stdin)?)
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{what}: {v:?} is not a number")))
        })
        .collect()
}

fn parse_x0(s: &Option<String>, loaded: &Loaded, dim: usize) -> CliResult<Vec<f64>> {
    let x = match s {
        Some(s) => parse_list(s, "--x0")?,
        None => loaded.default_x0(),
    };
    if x.len() != dim {
        return Err(usage(format!("--x0 needs {dim} components, got {}", x.len())));
    }
    Ok(x)
}

fn parse_input(s: &Option<String>, dim: usize) -> CliResult<InputSource> {
    match s.as_deref() {
        None | Some("zero") => Ok(InputSource::Zero),
        Some(other) => {
            let values = other
                .strip_prefix("constant:")
                .ok_or_else(|| usage(format!("--input must be zero or constant:v1,..., got {other:?}")))?;
            let v = parse_list(values, "--input")?;
            if v.len() != dim {
                return Err(usage(format!("--input needs {dim} components, got {}", v.len())));
            }
            Ok(InputSource::Constant(v))
        }
    }
}

fn priority(p: Option<Priority>, default: JumpPriority) -> JumpPriority {
    match p {
        Some(Priority::JumpFirst) => JumpPriority::JumpFirst,
        Some(Priority::FlowFirst) => JumpPriority::FlowFirst,
        None => default,
    }
}

fn render(report: Value, format: Option<Format>, allowed_text: bool) -> CliResult<String> {
    match format.unwrap_or(Format::Json) {
        Format::Json => Ok(to_json(&report)),
        Format::Text if allowed_text => Ok(text_table(&report)),
        other => Err(usage(format!("format {other:?} is not available for this command"))),
    }
}

pub fn masp(a: MaspArgs, common: &Common) -> CliResult<Outcome> {
    let (l, gamma) = match (a.l, a.gamma) {
        (Some(l), Some(g)) => (l, g),
        _ => return Err(usage("masp needs --L and --gamma")),
    };
    let base = MaspParams::new(l, gamma).map_err(|e| usage(e.to_string()))?;
    let mut report = serde_json::Map::new();
    report.insert("schema_version".into(), json!(SCHEMA_VERSION));
    report.insert("command".into(), json!("masp"));
    report.insert("L".into(), json!(l));
    report.insert("gamma".into(), json!(gamma));
    let (extended, invert, phi) = (
        a.extended.unwrap_or(false),
        a.invert.unwrap_or(false),
        a.phi.unwrap_or(false),
    );
    if [extended, invert, phi].iter().filter(|f| **f).count() > 1 {
        return Err(usage("--extended, --invert and --phi are mutually exclusive"));
    }
    let c_lambda = || match (a.c, a.lambda) {
        (Some(c), Some(lambda)) => ExtendedMaspParams::new(c, lambda, l, gamma).map_err(|e| usage(e.to_string())),
        _ => Err(usage("--c and --lambda are both required")),
    };
    let headline = if invert {
        let tau = a.tau.ok_or_else(|| usage("--invert needs --tau"))?;
        if a.c.is_some() || a.lambda.is_some() {
            return Err(usage("--invert cannot be combined with --c/--lambda"));
        }
        let (c, lambda) = invert_masp(tau, l, gamma, a.lambda_hint.unwrap_or(DEFAULT_LAMBDA_HINT))?;
        let p = ExtendedMaspParams::new(c, lambda, l, gamma)?;
        let residual = (masp_extended(&p)? - tau).abs();
        report.insert("tau".into(), json!(tau));
        report.insert("c".into(), json!(c));
        report.insert("lambda".into(), json!(lambda));
        report.insert("residual".into(), json!(residual));
        vec![("c", c), ("lambda", lambda)]
    } else if extended {
        let p = c_lambda()?;
        let t = masp_extended(&p)?;
        report.insert("c".into(), json!(p.c));
        report.insert("lambda".into(), json!(p.lambda));
        report.insert("masp_extended".into(), json!(t));
        vec![("masp_extended", t)]
    } else if phi {
        let p = c_lambda()?;
        let traj = phi_solve(&p, a.phi_steps.unwrap_or(1000)).map_err(|e| usage(e.to_string()))?;
        let body = match common.format.unwrap_or(Format::Csv) {
            Format::Csv | Format::Text => traj.to_csv(),
            Format::Json => {
                report.insert("c".into(), json!(p.c));
                report.insert("lambda".into(), json!(p.lambda));
                report.insert("masp_extended".into(), json!(traj.horizon()));
                report.insert("tau".into(), json!(traj.taus));
                report.insert("phi".into(), json!(traj.values));
                to_json(&Value::Object(report))
            }
        };
        return Ok(Outcome::ok(body));
    } else {
        if a.c.is_some() || a.lambda.is_some() {
            return Err(usage("--c/--lambda need --extended or --phi"));
        }
        if a.tau.is_some() {
            return Err(usage("--tau needs --invert"));
        }
        let t = masp_value(&base)?;
        report.insert("masp".into(), json!(t));
        vec![("masp", t)]
    };
    let body = match common.format.unwrap_or(Format::Text) {
        Format::Text => headline.iter().map(|(_, v)| sig(*v, 9)).collect::<Vec<_>>().join(" ") + "\n",
        Format::Csv => {
            let keys: Vec<&String> = report.keys().filter(|k| *k != "command").collect();
            let header = keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",");
            let row = keys
                .iter()
                .map(|k| report[k.as_str()].to_string())
                .collect::<Vec<_>>()
                .join(",");
            format!("{header}\n{row}\n")
        }
        Format::Json => to_json(&Value::Object(report)),
    };
    Ok(Outcome::ok(body))
}

pub fn example(a: ExampleArgs, common: &Common) -> CliResult<Outcome> {
    let name = a.name.ok_or_else(|| {
        usage(format!(
            "example needs --name ({})",
            hybrid_iiss::examples::names().join("|")
        ))
    })?;
    let loaded = Loaded::from_overrides(&name, &a.set)?;
    if !matches!(common.format, None | Some(Format::Json)) {
        return Err(usage("example artifacts are JSON"));
    }
    let value = serde_json::to_value(loaded.artifact()).map_err(|e| usage(e.to_string()))?;
    Ok(Outcome::ok(to_json(&value)))
}

pub fn simulate(a: SimulateArgs, common: &Common, stdin: &mut dyn Read) -> CliResult<Outcome> {
    let loaded = load(&a.example, stdin)?;
    let sys = loaded.system()?;
    let x0 = parse_x0(&a.x0, &loaded, sys.state_dim())?;
    let input = parse_input(&a.input, sys.input_dim())?;
    let mut opts = SolverOptions::default()
        .with_horizon(a.t.unwrap_or(10.0), a.j.unwrap_or(100))
        .with_priority(priority(a.priority, JumpPriority::JumpFirst));
    if let Some(dt) = a.dt {
        opts = opts.with_dt(dt);
    }
    opts.validate().map_err(|e| usage(e.to_string()))?;
    let result = solve(&sys, &x0, &input, &opts)?;
    let body = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => result.arc.to_csv("x"),
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "simulate",
            "example": loaded.name(),
            "termination": result.termination,
            "diagnostics": result.diagnostics,
            "arc": result.arc.to_json_value(),
            "input": result.input_used.to_json_value(),
        })),
        Format::Text => return Err(usage("simulate writes csv or json")),
    };
    Ok(Outcome::ok(body))
}

fn report_json(example: &str, kind: &str, r: &ViolationReport) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": "check-cert",
        "example": example,
        "kind": kind,
        "passed": r.passed(),
        "checked": r.checked,
        "skipped": r.skipped,
        "excluded": r.excluded,
        "violation_count": r.violations.len(),
        "worst_margin": r.worst_margin,
        "witness": r.violations.first(),
    })
}

pub fn check_cert(a: CheckCertArgs, common: &Common, stdin: &mut dyn Read) -> CliResult<Outcome> {
    let loaded = load(&a.example, stdin)?;
    let (r_state, r_input) = loaded.default_radii();
    let r_state = a.radius.unwrap_or(r_state);
    let r_input = a.input_radius.unwrap_or(r_input);
    let samples = a.samples.unwrap_or(10_000);
    if samples == 0 || !(r_state > 0.0) || !(r_input >= 0.0) {
        return Err(usage(
            "--samples, --radius must be positive and --input-radius nonnegative",
        ));
    }
    let input_box = BoxRegion::symmetric(1, r_input);
    let (kind, report) = match (&loaded, a.kind) {
        (Loaded::Reset(p), None | Some(CertKind::Iiss)) => {
            let (sys, cert) = reset_integrator(p)?;
            let sampler = RegionSampler::new(loaded.state_box(r_state)?, input_box, samples).with_seed(common.seed);
            ("iiss", check_iiss_lyapunov(&cert, &sys, &loaded.omega(), &sampler)?)
        }
        (Loaded::Reset(p), Some(CertKind::ZeroInput)) => {
            let (sys, _) = reset_integrator(p)?;
            let cert = reset_zero_input_certificate(p)?;
            let sampler = RegionSampler::new(loaded.state_box(r_state)?, input_box, samples).with_seed(common.seed);
            (
                "zero-input",
                check_zero_input_as(&cert, &sys, &loaded.omega(), &sampler)?,
            )
        }
        (Loaded::Sd(p), None | Some(CertKind::Dissipativity)) => {
            let (sys, bundle) = sd_integrator(p)?;
            let cert = sd_certificate(p, &bundle)?;
            let sampler = RegionSampler::new(loaded.state_box(r_state)?, input_box, samples).with_seed(common.seed);
            (
                "dissipativity",
                check_dissipativity(&cert.certificate, &sys, &loaded.omega(), &sampler)?,
            )
        }
        (Loaded::Sd(p), Some(CertKind::Bundle)) => {
            let (sys, bundle) = sd_integrator(p)?;
            let sampler =
                RegionSampler::new(BoxRegion::symmetric(3, r_state), input_box, samples).with_seed(common.seed);
            (
                "bundle",
                check_assumption_bundle(&bundle, &sys, &sd_layout(), &sampler)?,
            )
        }
        (_, Some(k)) => {
            return Err(usage(format!(
                "certificate kind {k:?} does not apply to {}",
                loaded.name()
            )))
        }
    };
    let value = report_json(loaded.name(), kind, &report);
    Ok(Outcome {
        body: render(value, common.format, true)?,
        passed: report.passed(),
    })
}

pub fn inflate(a: InflateArgs, common: &Common, stdin: &mut dyn Read) -> CliResult<Outcome> {
    let loaded = load(&a.example, stdin)?;
    let sys = loaded.system()?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let k = a.sigma.unwrap_or(1e-3);
    let delta = a.delta.unwrap_or(0.5);
    let horizon = a.t.unwrap_or(10.0);
    let eps = a.eps.unwrap_or(0.05);
    if !(k > 0.0) || !(eps > 0.0) || !(horizon > 0.0) {
        return Err(usage("--sigma, --eps and --T must be positive"));
    }
    let x0 = match &a.x0 {
        Some(_) => parse_x0(&a.x0, &loaded, n)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            loaded.random_initial(&mut rng, 2.0)
        }
    };
    let (r_state, r_input) = loaded.default_radii();
    let probe = loaded.state_box(r_state)?.product(&BoxRegion::symmetric(m, r_input));
    let omega = loaded.omega();
    let at_zero = omega.clone();
    let perturbed = inflate_system(
        &sys,
        move |x| k * omega.eval(x),
        &InflateOptions::new(probe).with_attractor(move |x| at_zero.eval(x) == 0.0),
    )?;
    let opts = SolverOptions::default()
        .with_horizon(horizon, 10_000)
        .with_priority(priority(a.priority, JumpPriority::FlowFirst));
    let nominal = solve(&sys, &x0, &InputSource::Zero, &opts)?;
    let ext = PerturbedSystem::extended_input(&vec![0.0; m], &vec![delta; n], &vec![delta; n]);
    let inflated = solve(perturbed.system(), &x0, &InputSource::Constant(ext), &opts)?;
    let close = closeness(&nominal.arc, &inflated.arc, horizon, eps);
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "inflate",
        "example": loaded.name(),
        "sigma_coefficient": k,
        "delta": delta,
        "x0": x0,
        "T": horizon,
        "eps": eps,
        "nominal_jumps": nominal.diagnostics.jumps,
        "inflated_jumps": inflated.diagnostics.jumps,
        "final_gap": norm(&nominal.arc.last().1.iter().zip(inflated.arc.last().1).map(|(a, b)| a - b).collect::<Vec<_>>()),
        "close": close,
    });
    Ok(Outcome {
        body: render(value, common.format, true)?,
        passed: close,
    })
}

fn parse_rho1(s: &Option<String>) -> CliResult<Rho1Family> {
    match s.as_deref() {
        None | Some("linear") => Ok(Rho1Family::Linear),
        Some(other) => match other.strip_prefix("power:").map(str::parse::<f64>) {
            Some(Ok(p)) if p >= 1.0 => Ok(Rho1Family::Power { p }),
            _ => Err(usage(format!(
                "--rho1 must be linear or power:p with p ≥ 1, got {other:?}"
            ))),
        },
    }
}

fn parse_rho2(s: &Option<String>) -> CliResult<Rho2Family> {
    match s.as_deref() {
        None | Some("constant") => Ok(Rho2Family::Constant),
        Some(other) => match other.strip_prefix("reciprocal:").map(str::parse::<f64>) {
            Some(Ok(a)) if a > 0.0 => Ok(Rho2Family::Reciprocal { a }),
            _ => Err(usage(format!(
                "--rho2 must be constant or reciprocal:a with a > 0, got {other:?}"
            ))),
        },
    }
}

pub fn fit_envelope(a: FitEnvelopeArgs, common: &Common, stdin: &mut dyn Read) -> CliResult<Outcome> {
    let loaded = load(&a.example, stdin)?;
    let sys = loaded.system()?;
    let runs = a.runs.unwrap_or(20);
    let radius = a.radius.unwrap_or(2.0);
    if runs == 0 || !(radius > 0.0) {
        return Err(usage("--runs and --radius must be positive"));
    }
    let shape = EnvelopeShape {
        rho1: parse_rho1(&a.rho1)?,
        rho2: parse_rho2(&a.rho2)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let initial: Vec<Vec<f64>> = (0..runs).map(|_| loaded.random_initial(&mut rng, radius)).collect();
    let opts = SolverOptions::default().with_horizon(a.t.unwrap_or(20.0), a.j.unwrap_or(10_000));
    opts.validate().map_err(|e| usage(e.to_string()))?;
    let ensemble = solve_ensemble(&sys, &initial, |_| InputSource::Zero, &opts)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let fitted = fit_kll_envelope(&ensemble, &loaded.omega(), shape, &FitOptions::default())?;
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit-envelope",
        "example": loaded.name(),
        "runs": runs,
        "radius": radius,
        "shape": fitted.shape,
        "theta": fitted.theta,
    });
    Ok(Outcome::ok(render(value, common.format, true)?))
}
