use hybrid_iiss::certificates::{check_detectability, check_zero_input_as, RegionSampler};
use hybrid_iiss::comparison::ScalarFn;
use hybrid_iiss::examples::{
    reset_integrator, reset_zero_input_certificate, sd_integrator, ResetIntegratorParams, SdIntegratorParams,
};
use hybrid_iiss::sampling::{norm, BoxRegion};
use hybrid_iiss::simulator::{solve, solve_ensemble, InputSource, JumpPriority, SolverOptions, Termination};
use hybrid_iiss::system::{inflate, restrict_input, InflateOptions};
use hybrid_iiss::{HybridTime, PerturbedSystem, ProperIndicator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sup_state(input: InputSource) -> f64 {
    let (sys, _) = reset_integrator(&ResetIntegratorParams::default()).unwrap();
    let run = solve(
        &sys,
        &[1.0, -1.0],
        &input,
        &SolverOptions::default().with_horizon(50.0, 100_000),
    )
    .unwrap();
    assert_eq!(run.termination, Termination::Horizon);
    let (end, _) = run.arc.last();
    run.arc.sup_norm(end).unwrap()
}

#[test]
fn reset_integrator_is_not_iss_under_large_constant_input() {
    let free = sup_state(InputSource::Zero);
    let forced = sup_state(InputSource::Constant(vec![10.0]));
    assert!(forced > 10.0 * free, "forced sup {forced}, free sup {free}");
}

#[test]
fn reset_jump_zeroes_the_controller() {
    let (sys, _) = reset_integrator(&ResetIntegratorParams::default()).unwrap();
    let opts = SolverOptions::default()
        .with_horizon(1.0, 10)
        .with_priority(JumpPriority::JumpFirst);
    let run = solve(&sys, &[1.0, 1.0], &InputSource::Zero, &opts).unwrap();
    assert_eq!(run.arc.value_at(HybridTime::new(0.0, 1)).unwrap(), vec![1.0, 0.0]);
    assert!(sys.in_jump_set(&[2.0, 3.0], &[0.0]));
    assert!(sys.in_flow_set(&[2.0, -3.0], &[0.0]));
}

#[test]
fn sampled_data_flow_with_zero_error() {
    let (sys, _) = sd_integrator(&SdIntegratorParams::default()).unwrap();
    for x in [-2.0, -0.5, 0.0, 0.3, 1.0, 4.0] {
        let f = sys.flow(&[x, 0.0, 0.0, 0.0], &[0.0]);
        let expected = -x / (1.0 + x * x);
        assert!((f[0] - expected).abs() <= 1e-12, "x = {x}: {} vs {expected}", f[0]);
        assert!((f[1] + f[0]).abs() <= 1e-12);
        assert_eq!(f[3], 1.0);
    }
}

#[test]
fn sampled_data_jump_resets_errors_and_clock() {
    let p = SdIntegratorParams::default();
    let (sys, _) = sd_integrator(&p).unwrap();
    let x = [0.7, -0.2, 0.1, p.tau_masp];
    assert!(sys.in_jump_set(&x, &[0.0]));
    assert!(!sys.in_jump_set(&[0.7, -0.2, 0.1, 0.5 * p.eps], &[0.0]));
    assert_eq!(sys.jump(&x, &[0.0]), vec![0.7, 0.0, 0.0, 0.0]);
}

#[test]
fn sampled_data_samples_periodically() {
    let p = SdIntegratorParams::default();
    let (sys, _) = sd_integrator(&p).unwrap();
    let run = solve(
        &sys,
        &[1.0, 0.0, 0.0, 0.0],
        &InputSource::Zero,
        &SolverOptions::default().with_horizon(1.0, 100),
    )
    .unwrap();
    let jumps = run.arc.domain().jump_points();
    assert_eq!(jumps.len(), (1.0 / p.tau_masp).floor() as usize);
    for (k, jp) in jumps.iter().enumerate() {
        assert!(
            (jp.t - (k + 1) as f64 * p.tau_masp).abs() <= 1e-6,
            "jump {k} at {}",
            jp.t
        );
    }
}

#[test]
fn inflation_with_zero_perturbation_recovers_the_base_system() {
    let (sys, _) = reset_integrator(&ResetIntegratorParams::default()).unwrap();
    let opts = InflateOptions::new(BoxRegion::symmetric(3, 5.0)).with_attractor(|x| norm(x) == 0.0);
    let perturbed = inflate(&sys, |x| 1e-3 * norm(x), &opts).unwrap();
    let hat = perturbed.system();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let zeros = [0.0, 0.0];
    for _ in 0..1000 {
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let u = [rng.gen_range(-2.0..2.0)];
        let ext = PerturbedSystem::extended_input(&u, &zeros, &zeros);
        if sys.in_flow_set(&x, &u) {
            assert!(hat.in_flow_set(&x, &ext));
            assert_eq!(hat.flow(&x, &ext), sys.flow(&x, &u));
        }
        if sys.in_jump_set(&x, &u) {
            assert!(hat.in_jump_set(&x, &ext));
            assert_eq!(hat.jump(&x, &ext), sys.jump(&x, &u));
        }
    }
}

#[test]
fn restricted_input_respects_its_bound() {
    let (sys, _) = reset_integrator(&ResetIntegratorParams::default()).unwrap();
    let aux = restrict_input(&sys, ScalarFn::linear(0.1), ProperIndicator::norm()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let d = [rng.gen_range(-3.0..3.0)];
        let u = aux.realized_input(&x, &d);
        assert!(
            norm(&u) <= 0.1 * norm(&x) * (1.0 + 1e-12),
            "x = {x:?}, d = {d:?}, u = {u:?}"
        );
    }
}

#[test]
fn zero_input_certificate_and_detectability() {
    let p = ResetIntegratorParams::default();
    let (sys, _) = reset_integrator(&p).unwrap();
    let cert = reset_zero_input_certificate(&p).unwrap();
    let sampler = RegionSampler::new(BoxRegion::symmetric(2, 5.0), BoxRegion::symmetric(1, 0.0), 5000);
    let report = check_zero_input_as(&cert, &sys, &ProperIndicator::norm(), &sampler).unwrap();
    assert!(report.passed(), "{:?}", report.violations.first());
    assert!(report.checked > 0);

    let initial: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            let a = k as f64 * std::f64::consts::FRAC_PI_4 + 0.1;
            vec![3.0 * a.cos(), 3.0 * a.sin()]
        })
        .collect();
    let opts = SolverOptions::default().with_horizon(30.0, 10_000);
    let runs: Vec<_> = solve_ensemble(&sys, &initial, |_| InputSource::Zero, &opts)
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    let det = check_detectability(&runs, |x| norm(x) <= 1e-12, &ProperIndicator::norm(), 0.2, 1e-6).unwrap();
    assert!(det.passed());
    assert_eq!(det.vacuous + det.checked, runs.len());
}
