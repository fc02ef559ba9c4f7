//! Acceptance criteria, one test each. Every test writes a single
//! `[PASS]`/`[FAIL]` line to stderr (bypassing output capture) before
//! asserting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::time::{Duration, Instant};

use hybrid_iiss::certificates::{
    check_dissipativity, check_iiss_estimate, check_iiss_lyapunov, fit_kll_envelope, EnvelopeShape, FitOptions,
    RegionSampler,
};
use hybrid_iiss::comparison::{factorize_pd, uniform_grid, FnClass, KlBound, KllBound, ScalarFn};
use hybrid_iiss::examples::{
    reset_integrator, sd_certificate, sd_integrator, ResetIntegratorParams, SdIntegratorParams,
};
use hybrid_iiss::sampled_data::{
    invert_masp, masp, masp_extended, masp_extended_case, monotonicity_probe, phi_rhs, phi_solve, ExtendedMaspParams,
    MaspCase, MaspParams, DEFAULT_LAMBDA_HINT,
};
use hybrid_iiss::sampling::{norm, BoxRegion};
use hybrid_iiss::simulator::{
    closeness, solve, solve_ensemble, InputSource, JumpPriority, SolveResult, SolverOptions, Termination,
};
use hybrid_iiss::system::{inflate, InflateOptions};
use hybrid_iiss::ProperIndicator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(id: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {id:02} {name}: {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    record(id, name, ok, detail);
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// `∫₀^∞ dφ / (γφ² + 2Lφ + γ)` by composite Simpson after `φ = s/(1 − s)`.
fn masp_by_quadrature(l: f64, gamma: f64) -> f64 {
    let n = 200_000;
    let h = 1.0 / n as f64;
    let g = |s: f64| {
        if s >= 1.0 {
            return 1.0 / gamma;
        }
        let phi = s / (1.0 - s);
        1.0 / ((gamma * phi * phi + 2.0 * l * phi + gamma) * (1.0 - s) * (1.0 - s))
    };
    let mut acc = g(0.0) + g(1.0);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k as f64 * h);
    }
    acc * h / 3.0
}

/// Time for `φ` to fall from `1/λ` to `λ`, by RK4 with step `h` and a final
/// linear interpolation.
fn hitting_time(p: &ExtendedMaspParams, h: f64) -> f64 {
    let f = |v: f64| phi_rhs(p, v);
    let mut phi = 1.0 / p.lambda;
    let mut t = 0.0;
    loop {
        let k1 = f(phi);
        let k2 = f(phi + 0.5 * h * k1);
        let k3 = f(phi + 0.5 * h * k2);
        let k4 = f(phi + h * k3);
        let next = phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if next <= p.lambda {
            return t + h * (phi - p.lambda) / (phi - next);
        }
        phi = next;
        t += h;
    }
}

#[test]
fn criterion_01_masp_reproduction() {
    let p = MaspParams::new(3.0, 10.0).unwrap();
    let start = Instant::now();
    let t = masp(&p).unwrap();
    let elapsed = start.elapsed();
    let oracle = masp_by_quadrature(3.0, 10.0);
    let ok = (t - 0.1327).abs() <= 5e-4 && (t - oracle).abs() < 1e-9 && elapsed < Duration::from_millis(1);
    report(
        1,
        "masp reproduction",
        ok,
        &format!("masp(3, 10) = {t:.10}, quadrature {oracle:.10}, {elapsed:?}"),
    );
}

/// The stated bound `|T − 1/L| ≤ 1e−5` is below the first-order change of
/// `T` itself: `atan(r)/r = 1 − r²/3 + O(r⁴)` with `r² ≈ 2·10⁻⁴` moves `T` by
/// about `6.7·10⁻⁵/L`. The line reports the stated bound; the assertion pins
/// both sides of the split to the series, which any discontinuity breaks.
#[test]
fn criterion_02_case_continuity() {
    let mut worst = 0.0_f64;
    let mut worst_series = 0.0_f64;
    let mut per_l = Vec::new();
    for l in [0.5, 1.0, 3.0, 10.0] {
        let mut dev = 0.0_f64;
        for g in [l * (1.0 - 1e-4), l * (1.0 + 1e-4)] {
            let t = masp(&MaspParams::new(l, g).unwrap()).unwrap();
            let u = g / l;
            let series = (1.0 - (u * u - 1.0) / 3.0) / l;
            worst_series = worst_series.max(l * (t - series).abs());
            dev = dev.max((t - 1.0 / l).abs());
        }
        per_l.push(format!("L={l}: {dev:.2e}"));
        worst = worst.max(dev);
    }
    record(
        2,
        "case continuity",
        worst <= 1e-5,
        &format!(
            "max |T − 1/L| = {worst:.3e} against 1e-5 [{}]; series residual ·L = {worst_series:.1e}",
            per_l.join(", ")
        ),
    );
    assert!(
        worst_series <= 1e-8,
        "masp departs from its expansion across the case split: {worst_series:e}"
    );
}

#[test]
fn criterion_03_phi_range() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_end = 0.0_f64;
    let mut count = 0;
    for c in [1.5, 2.0, 5.0] {
        for lambda in [0.1, 0.5, 0.9] {
            for l in [1.0, 3.0, 10.0] {
                for gamma in [1.0, 3.0, 10.0] {
                    count += 1;
                    let p = ExtendedMaspParams::new(c, lambda, l, gamma).unwrap();
                    let tol = 1e-6 / lambda;
                    match phi_solve(&p, 1000) {
                        Ok(traj) => {
                            let in_range = traj
                                .values
                                .iter()
                                .all(|v| *v >= lambda - tol && *v <= 1.0 / lambda + tol);
                            let dense_ok = (0..=500).all(|k| {
                                let v = traj.eval(traj.horizon() * k as f64 / 500.0).unwrap();
                                v >= lambda - tol && v <= 1.0 / lambda + tol
                            });
                            worst_end = worst_end.max((traj.values[traj.values.len() - 1] - lambda).abs());
                            if !(in_range && dense_ok) {
                                failures.push(format!("{p:?}"));
                            }
                        }
                        Err(e) => failures.push(format!("{p:?}: {e}")),
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = count == 81 && failures.is_empty() && worst_end < 1e-6 && elapsed < Duration::from_secs(10);
    report(
        3,
        "phi range property",
        ok,
        &format!(
            "{count} lattice points, {} out of range, max |φ(T̃) − λ| = {worst_end:.2e}, {elapsed:?}",
            failures.len()
        ),
    );
}

#[test]
fn criterion_04_monotonicity() {
    let cs = linspace(1.1, 10.0, 10);
    let lambdas = linspace(0.05, 0.95, 10);
    let mut total = 0;
    let mut violations = 0;
    for (l, g) in [(3.0, 10.0), (2.0, 2.0), (10.0, 3.0)] {
        let r = monotonicity_probe(&cs, &lambdas, l, g).unwrap();
        total += r.comparisons_c + r.comparisons_lambda;
        violations += r.violations.len() + usize::from(!r.passed() && r.violations.is_empty());
    }
    report(
        4,
        "T̃ monotonicity",
        violations == 0 && total == 3 * 180,
        &format!("{total} comparisons, {violations} violations"),
    );
}

#[test]
fn criterion_05_limit_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let l = rng.gen_range(0.5..10.0);
        let g = rng.gen_range(0.5..10.0);
        let ext = masp_extended(&ExtendedMaspParams::new(1.0 + 1e-6, 1e-6, l, g).unwrap()).unwrap();
        let base = masp(&MaspParams::new(l, g).unwrap()).unwrap();
        worst = worst.max((ext - base).abs());
    }
    report(
        5,
        "limit consistency",
        worst <= 1e-3,
        &format!("max deviation over 20 pairs = {worst:.3e}"),
    );
}

#[test]
fn criterion_06_inversion() {
    let m = masp(&MaspParams::new(3.0, 10.0).unwrap()).unwrap();
    let mut worst = 0.0_f64;
    let mut worst_oracle = 0.0_f64;
    let mut errors = Vec::new();
    for k in [0.1, 0.5, 0.9] {
        let tau = k * m;
        match invert_masp(tau, 3.0, 10.0, DEFAULT_LAMBDA_HINT) {
            Ok((c, lambda)) => {
                let p = ExtendedMaspParams::new(c, lambda, 3.0, 10.0).unwrap();
                worst = worst.max((masp_extended(&p).unwrap() - tau).abs());
                worst_oracle = worst_oracle.max((hitting_time(&p, tau * 1e-5) - tau).abs());
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let ok = errors.is_empty() && worst <= 1e-9 && worst_oracle < 1e-7;
    report(
        6,
        "masp inversion",
        ok,
        &format!("max residual {worst:.2e}, hitting-time oracle {worst_oracle:.2e}, errors {errors:?}"),
    );
}

fn reset_sampler() -> RegionSampler {
    RegionSampler::new(BoxRegion::symmetric(2, 5.0), BoxRegion::symmetric(1, 2.0), 10_000)
}

#[test]
fn criterion_07_reset_certificate() {
    let run = |p: &ResetIntegratorParams| {
        let (sys, cert) = reset_integrator(p).unwrap();
        let start = Instant::now();
        let r = check_iiss_lyapunov(&cert, &sys, &ProperIndicator::norm(), &reset_sampler()).unwrap();
        (r, start.elapsed())
    };
    let (good, t_good) = run(&ResetIntegratorParams::default());
    let weak = ResetIntegratorParams {
        lambda_p: -0.5,
        ..Default::default()
    };
    let (bad, t_bad) = run(&weak);
    let five = Duration::from_secs(5);
    let ok = good.passed() && good.checked > 0 && !bad.violations.is_empty() && t_good < five && t_bad < five;
    report(
        7,
        "reset-integrator certificate",
        ok,
        &format!(
            "nominal: {} checked, {} violations ({t_good:?}); λ_p = −0.5: {} violations ({t_bad:?})",
            good.checked,
            good.violations.len(),
            bad.violations.len()
        ),
    );
}

#[test]
fn criterion_08_zero_input_decrease() {
    let p = ResetIntegratorParams::default();
    let (sys, cert) = reset_integrator(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut initial = Vec::new();
    while initial.len() < 100 {
        let x = vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let n = norm(&x);
        if n <= 5.0 && n > 1e-3 {
            initial.push(x);
        }
    }
    let opts = SolverOptions::default().with_horizon(50.0, 100_000);
    let runs = solve_ensemble(&sys, &initial, |_| InputSource::Zero, &opts);
    let mut increases = 0;
    let mut converged = 0;
    let mut failures = 0;
    for (x0, run) in initial.iter().zip(&runs) {
        let Ok(run) = run else {
            failures += 1;
            continue;
        };
        if run.termination != Termination::Horizon {
            failures += 1;
        }
        let values: Vec<f64> = run.arc.iter().map(|(_, x)| cert.storage.eval(x)).collect();
        increases += values.windows(2).filter(|w| w[1] > w[0] + 1e-8).count();
        if norm(run.arc.last().1) <= 0.05 * norm(x0) {
            converged += 1;
        }
    }
    report(
        8,
        "zero-input decrease",
        increases == 0 && converged >= 95 && failures == 0,
        &format!("{increases} increases of V, {converged}/100 converged, {failures} incomplete runs"),
    );
}

#[test]
fn criterion_09_storage_dissipation() {
    let tau = 0.9 * 0.1327;
    let params = SdIntegratorParams {
        eps: 1e-2,
        tau_masp: tau,
        ..Default::default()
    };
    let (sys, bundle) = sd_integrator(&params).unwrap();
    let cert = sd_certificate(&params, &bundle).unwrap();
    let state_box = BoxRegion::new(vec![-3.0, -3.0, -3.0, 0.0], vec![3.0, 3.0, 3.0, tau]).unwrap();
    let sampler = RegionSampler::new(state_box, BoxRegion::symmetric(1, 1.0), 10_000);
    let omega = ProperIndicator::coordinates(vec![0, 1, 2]);
    let start = Instant::now();
    let r = check_dissipativity(&cert.certificate, &sys, &omega, &sampler).unwrap();
    let elapsed = start.elapsed();
    let ok = r.passed() && r.checked > 0 && (r.excluded as f64) < 0.01 * 10_000.0 && elapsed < Duration::from_secs(10);
    report(
        9,
        "sampled-data storage dissipation",
        ok,
        &format!(
            "c = {:.6}, λ = {}, {} checked, {} excluded, {} violations, {elapsed:?}",
            cert.c,
            cert.lambda,
            r.checked,
            r.excluded,
            r.violations.len()
        ),
    );
}

/// Gain found by the upward sweep in criterion 10, kept as a regression value.
const SD_ESTIMATE_GAIN: f64 = 1.0;

#[test]
fn criterion_10_sampled_data_convergence() {
    let params = SdIntegratorParams::with_period(0.9 * 0.1327);
    let (sys, _) = sd_integrator(&params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut initial = Vec::new();
    while initial.len() < 50 {
        let x = rng.gen_range(-2.0..2.0_f64);
        if x.abs() > 1e-3 {
            initial.push(vec![x, 0.0, 0.0, 0.0]);
        }
    }
    let opts = SolverOptions::default().with_horizon(200.0, 10_000);
    let runs: Vec<SolveResult> = solve_ensemble(&sys, &initial, |_| InputSource::Zero, &opts)
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    let converged = initial
        .iter()
        .zip(&runs)
        .filter(|(x0, r)| r.termination == Termination::Horizon && r.arc.last().1[0].abs() < 0.05 * x0[0].abs())
        .count();

    let omega = ProperIndicator::coordinates(vec![0, 1, 2]);
    let fitted = fit_kll_envelope(&runs, &omega, EnvelopeShape::default(), &FitOptions::default()).unwrap();
    let pulse = InputSource::signal(|t, _| vec![if t < 1.0 { 1.0 } else { 0.0 }]);
    let forced = solve(
        &sys,
        &[1.0, 0.0, 0.0, 0.0],
        &pulse,
        &SolverOptions::default().with_horizon(50.0, 10_000),
    )
    .unwrap();
    let alpha = ScalarFn::linear(1.0);
    let mut gain = None;
    let mut g = 1.0 / 64.0;
    while g <= 1024.0 {
        let lin = ScalarFn::linear(g);
        let est = check_iiss_estimate(&forced, &alpha, &fitted.bound, &lin, &lin, &omega, 1e-9).unwrap();
        if est.passed() {
            gain = Some(g);
            break;
        }
        g *= 2.0;
    }
    let ok = converged == 50 && gain == Some(SD_ESTIMATE_GAIN);
    report(
        10,
        "sampled-data convergence and estimate",
        ok,
        &format!(
            "{converged}/50 converged, fitted θ = {:.4}, passing gain {gain:?} (expected {SD_ESTIMATE_GAIN})",
            fitted.theta
        ),
    );
}

#[test]
fn criterion_11_comparison_machinery() {
    let mut worst_semigroup = 0.0_f64;
    let grid = linspace(0.0, 4.0, 5);
    for rho1 in [ScalarFn::linear(1.0), ScalarFn::power(1.0, 2.0)] {
        let kl = KlBound::from_ode(&rho1, 5.0, 10.0, 1e-3).unwrap();
        for r in linspace(0.5, 5.0, 5) {
            for &s1 in &grid {
                for &s2 in &grid {
                    let lhs = kl.flow(kl.flow(r, s1), s2);
                    worst_semigroup = worst_semigroup.max((lhs - kl.flow(r, s1 + s2)).abs());
                }
            }
        }
    }

    let lin = KlBound::from_ode(&ScalarFn::linear(1.0), 5.0, 10.0, 1e-3).unwrap();
    let quad = KlBound::from_ode(&ScalarFn::power(1.0, 2.0), 5.0, 10.0, 1e-3).unwrap();
    let mut worst_closed = 0.0_f64;
    for tau in linspace(0.0, 10.0, 41) {
        worst_closed = worst_closed.max((lin.flow(2.0, tau) - 2.0 * (-tau).exp()).abs());
        worst_closed = worst_closed.max((quad.flow(1.0, tau) - 1.0 / (1.0 + tau)).abs());
    }

    let kll = KllBound::new(lin.clone(), ScalarFn::reciprocal(1.0)).unwrap();
    let mut kll_exact = true;
    for r in linspace(0.0, 5.0, 11) {
        kll_exact &= kll.eval(r, 0.0, 0.0) == r;
        for s1 in [0.0, 0.3, 1.0, 2.5] {
            for s2 in [0.0, 0.7, 1.0, 4.0] {
                kll_exact &= kll.eval(r, s1, s2) == kll.eval(r, s2, s1);
            }
        }
    }

    let pd = ScalarFn::new("s/(1+s^2)", FnClass::PositiveDefinite, 100.0, |s| s / (1.0 + s * s));
    let pts = uniform_grid(100.0, 2001);
    let (k, l) = factorize_pd(&pd, &pts).unwrap();
    let product_bad = pts
        .iter()
        .filter(|s| !(pd.eval(**s) >= k.eval(**s) * l.eval(**s)))
        .count();

    let ok = worst_semigroup <= 1e-6 && worst_closed <= 1e-6 && kll_exact && product_bad == 0;
    report(
        11,
        "comparison machinery",
        ok,
        &format!(
            "semigroup {worst_semigroup:.2e}, closed forms {worst_closed:.2e}, KLL identities exact: {kll_exact}, product failures {product_bad}"
        ),
    );
}

#[test]
fn criterion_12_robustness_probe() {
    let (sys, _) = reset_integrator(&ResetIntegratorParams::default()).unwrap();
    let probe = BoxRegion::symmetric(3, 5.0);
    let opts = InflateOptions::new(probe).with_attractor(|x| norm(x) == 0.0);
    let perturbed = inflate(&sys, |x| 1e-3 * norm(x), &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x0 = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    let solver = SolverOptions::default()
        .with_horizon(10.0, 1000)
        .with_priority(JumpPriority::FlowFirst);
    let nominal = solve(&sys, &x0, &InputSource::Zero, &solver).unwrap();
    let delta = InputSource::Constant(vec![0.0, 0.5, 0.5, 0.5, 0.5]);
    let inflated = solve(perturbed.system(), &x0, &delta, &solver).unwrap();
    let close = closeness(&nominal.arc, &inflated.arc, 10.0, 0.05);
    report(
        12,
        "robustness probe",
        close,
        &format!(
            "x0 = ({:.3}, {:.3}), jumps {} vs {}, (10, 0.05)-close: {close}",
            x0[0], x0[1], nominal.diagnostics.jumps, inflated.diagnostics.jumps
        ),
    );
}

#[test]
fn case_assignment_matches_lattice() {
    let p = ExtendedMaspParams::new(1.5, 0.5, 10.0, 3.0).unwrap();
    assert_eq!(masp_extended_case(&p), MaspCase::Tanh);
}
