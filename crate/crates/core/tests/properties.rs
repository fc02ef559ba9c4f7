use std::sync::OnceLock;

use hybrid_iiss::comparison::{KlBound, KllBound, ScalarFn};
use hybrid_iiss::hybrid_time::{HybridSignal, HybridTime, SignalBuilder};
use hybrid_iiss::sampled_data::{masp, masp_extended, phi_solve, ExtendedMaspParams, MaspParams};
use hybrid_iiss::sampling::norm;
use proptest::prelude::*;

/// Segments given as `(flow length, samples)`; a zero-length segment keeps
/// only its first sample.
fn signal_strategy() -> impl Strategy<Value = HybridSignal> {
    prop::collection::vec(
        (
            prop_oneof![Just(0.0), 0.05f64..2.0],
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6),
        ),
        1..6,
    )
    .prop_map(|segments| {
        let mut b = SignalBuilder::new(2);
        let mut t = 0.0;
        for (k, (len, values)) in segments.iter().enumerate() {
            if k > 0 {
                b.start_segment();
            }
            let values = if *len == 0.0 { &values[..1] } else { &values[..] };
            let n = values.len();
            let end = if n == 1 { t } else { t + len };
            for (i, v) in values.iter().enumerate() {
                let ti = if i + 1 == n {
                    end
                } else {
                    t + len * i as f64 / (n - 1) as f64
                };
                b.push(ti, v.clone());
            }
            t = end;
        }
        b.finish().expect("well-formed signal")
    })
}

fn kl_linear() -> &'static KlBound {
    static B: OnceLock<KlBound> = OnceLock::new();
    B.get_or_init(|| KlBound::from_ode(&ScalarFn::linear(1.0), 10.0, 20.0, 1e-3).unwrap())
}

fn kl_cubic() -> &'static KlBound {
    static B: OnceLock<KlBound> = OnceLock::new();
    B.get_or_init(|| KlBound::from_ode(&ScalarFn::power(1.0, 3.0), 10.0, 20.0, 1e-3).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_profile_agrees_with_pointwise_norm(sig in signal_strategy()) {
        let g1 = ScalarFn::power(1.0, 2.0);
        let g2 = ScalarFn::linear(1.0);
        let profile = sig.energy_profile(&g1, &g2);
        let points: Vec<HybridTime> = sig.iter().map(|(p, _)| p).collect();
        prop_assert_eq!(profile.len(), points.len());
        for (p, e) in points.iter().zip(&profile) {
            let direct = sig.energy_norm(&g1, &g2, *p).unwrap();
            prop_assert!((direct - e).abs() <= 1e-9 * (1.0 + direct), "{:?}: {} vs {}", p, direct, e);
        }
        for (a, b) in points.windows(2).zip(profile.windows(2)) {
            if a[0].j == a[1].j {
                prop_assert!(b[1] >= b[0] - 1e-12);
            }
        }
    }

    #[test]
    fn sup_norm_dominates_earlier_samples(sig in signal_strategy()) {
        let samples: Vec<(HybridTime, Vec<f64>)> = sig.iter().map(|(p, x)| (p, x.to_vec())).collect();
        for (k, (p, _)) in samples.iter().enumerate() {
            let sup = sig.sup_norm(*p).unwrap();
            let best = samples[..=k].iter().map(|(_, x)| norm(x)).fold(0.0, f64::max);
            prop_assert!(sup >= best - 1e-12);
        }
    }

    #[test]
    fn csv_and_json_round_trip(sig in signal_strategy()) {
        prop_assert_eq!(&HybridSignal::from_csv(&sig.to_csv("x")).unwrap(), &sig);
        prop_assert_eq!(&HybridSignal::from_json(&sig.to_json()).unwrap(), &sig);
    }

    #[test]
    fn truncation_zeroes_the_tail(sig in signal_strategy(), horizon in 0.0f64..8.0) {
        let cut = sig.truncate(horizon);
        prop_assert_eq!(cut.domain(), sig.domain());
        for (p, x) in cut.iter() {
            if p.length() > horizon {
                prop_assert!(x.iter().all(|v| *v == 0.0));
            } else {
                prop_assert_eq!(x.to_vec(), sig.value_at(p).unwrap());
            }
        }
    }

    #[test]
    fn kl_flow_is_monotone(r in 0.0f64..10.0, dr in 0.0f64..1.0, tau in 0.0f64..10.0, dt in 0.0f64..5.0) {
        for b in [kl_linear(), kl_cubic()] {
            let base = b.flow(r, tau);
            prop_assert!(base >= 0.0 && base <= r + 1e-12);
            prop_assert!(b.flow(r, tau + dt) <= base + 1e-12);
            if r + dr <= 10.0 {
                prop_assert!(b.flow(r + dr, tau) >= base - 1e-9);
            }
        }
    }

    #[test]
    fn kl_flow_matches_linear_closed_form(r in 0.0f64..10.0, tau in 0.0f64..15.0) {
        let exact = r * (-tau).exp();
        prop_assert!((kl_linear().flow(r, tau) - exact).abs() <= 1e-7 * (1.0 + r));
    }

    #[test]
    fn kll_with_reciprocal_rate_is_dominated_by_unit_rate(r in 0.0f64..10.0, t in 0.0f64..5.0, j in 0u32..5) {
        let unit = KllBound::new(kl_cubic().clone(), ScalarFn::constant(1.0)).unwrap();
        let slow = KllBound::new(kl_cubic().clone(), ScalarFn::reciprocal(1.0)).unwrap();
        let j = f64::from(j);
        prop_assert!((unit.eval(r, t, j) - kl_cubic().flow(r, t + j)).abs() <= 1e-12);
        prop_assert!(slow.eval(r, t, j) >= unit.eval(r, t, j) - 1e-12);
    }

    #[test]
    fn extended_period_is_below_the_limit_and_monotone(
        l in 0.5f64..10.0,
        gamma in 0.5f64..10.0,
        c in 1.01f64..10.0,
        dc in 0.01f64..2.0,
        lambda in 0.05f64..0.9,
        dl in 0.01f64..0.09,
    ) {
        let at = |c: f64, lambda: f64| masp_extended(&ExtendedMaspParams { c, lambda, l, gamma }).unwrap();
        let base = at(c, lambda);
        let limit = masp(&MaspParams { l, gamma }).unwrap();
        prop_assert!(base > 0.0 && base < limit * (1.0 + 1e-9));
        prop_assert!(at(c + dc, lambda) <= base + 1e-12);
        prop_assert!(at(c, lambda + dl) <= base + 1e-12);
    }

    #[test]
    fn phi_decreases_inside_its_band(
        l in 0.5f64..10.0,
        gamma in 0.5f64..10.0,
        c in 1.1f64..5.0,
        lambda in 0.1f64..0.9,
    ) {
        let p = ExtendedMaspParams { c, lambda, l, gamma };
        let traj = phi_solve(&p, 400).unwrap();
        let h = traj.horizon();
        prop_assert!((h - masp_extended(&p).unwrap()).abs() <= 1e-6 * h);
        let mut prev = f64::INFINITY;
        for k in 0..=50 {
            let v = traj.eval(h * f64::from(k) / 50.0).unwrap();
            prop_assert!(v >= lambda * (1.0 - 1e-9) && v <= (1.0 + 1e-9) / lambda);
            prop_assert!(v <= prev);
            prop_assert!(traj.derivative(h * f64::from(k) / 50.0).unwrap() < 0.0);
            prev = v;
        }
    }
}
