//! Hybrid systems `H = (f, g, C, D)` with state constraint `X`, their
//! σ-perturbations, input-restricted auxiliary systems and the sampled-data
//! closed-loop construction.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::comparison::{ensure_class, FnClass, ScalarFn};
use crate::error::{Error, Result};
use crate::hybrid_time::{HybridArc, HybridInput, HybridSignal, Sample, Segment};
use crate::indicator::ProperIndicator;
use crate::sampling::{halton, norm, unit_ball_points, BoxRegion};

/// `(state, input) → vector`.
pub type MapFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(state, input) → membership`.
pub type SetFn = Arc<dyn Fn(&[f64], &[f64]) -> bool + Send + Sync>;
/// `state → membership`.
pub type StatePredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
/// `state → [0, ∞)`.
pub type RadiusFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Membership test, map and label of one of `C`, `D` during probing.
type ProbedSet<'a> = (&'a dyn Fn(&[f64]) -> bool, &'a dyn Fn(&[f64]) -> Vec<f64>, &'a str);

/// A hybrid system with inputs.
#[derive(Clone)]
pub struct HybridSystem {
    name: String,
    state_dim: usize,
    input_dim: usize,
    flow: MapFn,
    jump: MapFn,
    in_c: SetFn,
    in_d: SetFn,
    constraint: Option<StatePredicate>,
}

impl fmt::Debug for HybridSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridSystem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .finish_non_exhaustive()
    }
}

impl HybridSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F, G, C, D>(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        flow: F,
        jump: G,
        in_c: C,
        in_d: D,
    ) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        C: Fn(&[f64], &[f64]) -> bool + Send + Sync + 'static,
        D: Fn(&[f64], &[f64]) -> bool + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            flow: Arc::new(flow),
            jump: Arc::new(jump),
            in_c: Arc::new(in_c),
            in_d: Arc::new(in_d),
            constraint: None,
        }
    }

    /// Restrict the state space to `X`.
    pub fn with_constraint<X>(mut self, x: X) -> Self
    where
        X: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.constraint = Some(Arc::new(x));
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn flow(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.flow)(x, u)
    }

    pub fn jump(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.jump)(x, u)
    }

    pub fn in_flow_set(&self, x: &[f64], u: &[f64]) -> bool {
        (self.in_c)(x, u)
    }

    pub fn in_jump_set(&self, x: &[f64], u: &[f64]) -> bool {
        (self.in_d)(x, u)
    }

    pub fn in_constraint(&self, x: &[f64]) -> bool {
        self.constraint.as_ref().is_none_or(|c| c(x))
    }

    /// `f(x, u)` with dimension and finiteness checks.
    pub fn flow_checked(&self, x: &[f64], u: &[f64], index: usize) -> Result<Vec<f64>> {
        let v = self.flow(x, u);
        self.check_value("flow map", x, u, index, v)
    }

    /// `g(x, u)` with dimension and finiteness checks.
    pub fn jump_checked(&self, x: &[f64], u: &[f64], index: usize) -> Result<Vec<f64>> {
        let v = self.jump(x, u);
        self.check_value("jump map", x, u, index, v)
    }

    fn check_value(&self, what: &str, x: &[f64], u: &[f64], index: usize, v: Vec<f64>) -> Result<Vec<f64>> {
        let message = if v.len() != self.state_dim {
            format!("{what} returned {} components, expected {}", v.len(), self.state_dim)
        } else if v.iter().any(|c| !c.is_finite()) {
            format!("{what} is not finite")
        } else {
            return Ok(v);
        };
        Err(Error::EvaluationFailure {
            index,
            point: x.iter().chain(u).copied().collect(),
            message,
        })
    }
}

/// Sampling plan for [`check_standing_assumptions`].
#[derive(Debug, Clone)]
pub struct AssumptionProbeSpec {
    pub state_box: BoxRegion,
    pub input_box: BoxRegion,
    pub samples: usize,
    /// Distance between the two points of a probing pair.
    pub pair_distance: f64,
    /// Halton index offset.
    pub seed: u64,
}

impl AssumptionProbeSpec {
    pub fn new(state_box: BoxRegion, input_box: BoxRegion, samples: usize) -> Self {
        Self {
            state_box,
            input_box,
            samples,
            pair_distance: 1e-2,
            seed: 0,
        }
    }
}

/// A pair of points at which a probe failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeFailure {
    pub point: Vec<f64>,
    pub other: Vec<f64>,
    pub message: String,
}

/// Outcome of one heuristic probe. `passed` means no counterexample was found
/// on the samples; it is never a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeVerdict {
    pub passed: bool,
    pub probed: usize,
    pub failures: Vec<ProbeFailure>,
    pub heuristic: bool,
}

impl ProbeVerdict {
    fn from(probed: usize, failures: Vec<ProbeFailure>) -> Self {
        Self {
            passed: failures.is_empty(),
            probed,
            failures,
            heuristic: true,
        }
    }
}

/// Verdicts for the three well-posedness conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `C` and `D` closed.
    pub closedness: ProbeVerdict,
    /// `f` continuous on `C`, `g` continuous on `D`.
    pub continuity: ProbeVerdict,
    /// `f(x, u)` convex for each sampled `(x, u)`.
    pub convexity: ProbeVerdict,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.closedness.passed && self.continuity.passed && self.convexity.passed
    }
}

const BISECTION_STEPS: usize = 64;

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Bisect towards a point where `map` jumps along the segment `[a, b]`,
/// staying inside `member`. Returns the final pair when the gap in values
/// refuses to shrink.
fn discontinuity_probe(
    map: &dyn Fn(&[f64]) -> Vec<f64>,
    member: &dyn Fn(&[f64]) -> bool,
    a: &[f64],
    b: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    let (mut fa, mut fb) = (map(&a), map(&b));
    for _ in 0..BISECTION_STEPS {
        let gap = dist(&fa, &fb);
        let tol = 1e-6 * (1.0 + norm(&fa) + norm(&fb));
        if !(gap > tol) {
            return None;
        }
        let m = lerp(&a, &b, 0.5);
        if m == a || m == b {
            break;
        }
        if !member(&m) {
            return None;
        }
        let fm = map(&m);
        if dist(&fa, &fm) >= dist(&fm, &fb) {
            b = m;
            fb = fm;
        } else {
            a = m;
            fa = fm;
        }
    }
    let gap = dist(&fa, &fb);
    (gap > 1e-6 * (1.0 + norm(&fa) + norm(&fb))).then_some((a, b, gap))
}

/// Bisect between `inside ∈ S` and `outside ∉ S`. When the outside end stops
/// moving while the inside end keeps approaching it, the outside end is a
/// limit of points of `S` that is not itself in `S`.
fn closedness_probe(member: &dyn Fn(&[f64]) -> bool, inside: &[f64], outside: &[f64]) -> Option<Vec<f64>> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut inside_moves_since_outside = 0usize;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if member(&lerp(inside, outside, mid)) {
            lo = mid;
            inside_moves_since_outside += 1;
        } else {
            hi = mid;
            inside_moves_since_outside = 0;
        }
    }
    (inside_moves_since_outside >= 30).then(|| lerp(inside, outside, hi))
}

/// Heuristic probes of the well-posedness conditions: closed flow and jump
/// sets, continuity of `f` on `C` and `g` on `D`, and convexity of the flow
/// values, on a deterministic low-discrepancy sample.
pub fn check_standing_assumptions(sys: &HybridSystem, spec: &AssumptionProbeSpec) -> Result<AssumptionReport> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if spec.state_box.dim() != n || spec.input_box.dim() != m {
        return Err(Error::InvalidArgument(format!(
            "probe boxes have dimensions ({}, {}), system has ({n}, {m})",
            spec.state_box.dim(),
            spec.input_box.dim()
        )));
    }
    if !(spec.pair_distance > 0.0) {
        return Err(Error::InvalidArgument("pair distance must be positive".into()));
    }
    let region = spec.state_box.product(&spec.input_box);
    let centre: Vec<f64> = region.map(&vec![0.5; n + m]);
    let points: Vec<Vec<f64>> = (0..spec.samples as u64)
        .map(|i| region.point(spec.seed + i + 1))
        .collect();

    // Hard evaluation failures first, in index order.
    for (i, p) in points.iter().enumerate() {
        let (x, u) = p.split_at(n);
        if sys.in_flow_set(x, u) {
            sys.flow_checked(x, u, i)?;
        }
        if sys.in_jump_set(x, u) {
            sys.jump_checked(x, u, i)?;
        }
    }

    let split = |p: &[f64]| -> (Vec<f64>, Vec<f64>) { (p[..n].to_vec(), p[n..].to_vec()) };
    let in_c = |p: &[f64]| {
        let (x, u) = split(p);
        sys.in_flow_set(&x, &u)
    };
    let in_d = |p: &[f64]| {
        let (x, u) = split(p);
        sys.in_jump_set(&x, &u)
    };
    let f = |p: &[f64]| {
        let (x, u) = split(p);
        sys.flow(&x, &u)
    };
    let g = |p: &[f64]| {
        let (x, u) = split(p);
        sys.jump(&x, &u)
    };

    let partner = |i: usize, p: &[f64]| -> Vec<f64> {
        let dir: Vec<f64> = halton(spec.seed + i as u64 + 1_000_003, n + m)
            .iter()
            .map(|v| 2.0 * v - 1.0)
            .collect();
        let len = norm(&dir).max(1e-12);
        p.iter()
            .zip(&dir)
            .map(|(a, d)| a + spec.pair_distance * d / len)
            .collect()
    };
    let mirror = |p: &[f64]| -> Vec<f64> { p.iter().zip(&centre).map(|(a, c)| 2.0 * c - a).collect() };

    struct Outcome {
        continuity: Vec<ProbeFailure>,
        closedness: Vec<ProbeFailure>,
        convexity: Vec<ProbeFailure>,
        probed_cont: usize,
        probed_closed: usize,
        probed_convex: usize,
    }

    let per_point: Vec<Outcome> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut out = Outcome {
                continuity: Vec::new(),
                closedness: Vec::new(),
                convexity: Vec::new(),
                probed_cont: 0,
                probed_closed: 0,
                probed_convex: 0,
            };
            let q = partner(i, p);
            let sets: [ProbedSet<'_>; 2] = [(&in_c, &f, "flow"), (&in_d, &g, "jump")];
            for (member, map, label) in sets {
                let (pm, qm) = (member(p), member(&q));
                if pm && qm {
                    out.probed_cont += 1;
                    if let Some((a, b, gap)) = discontinuity_probe(map, member, p, &q) {
                        out.continuity.push(ProbeFailure {
                            point: a,
                            other: b,
                            message: format!("{label} map jumps by {gap:.3e} across a vanishing gap"),
                        });
                    }
                }
                for other in [q.clone(), mirror(p)] {
                    let om = member(&other);
                    if pm != om {
                        out.probed_closed += 1;
                        let (inside, outside) = if pm {
                            (p.as_slice(), &other[..])
                        } else {
                            (&other[..], p.as_slice())
                        };
                        if let Some(limit) = closedness_probe(member, inside, outside) {
                            out.closedness.push(ProbeFailure {
                                point: limit,
                                other: inside.to_vec(),
                                message: format!("{label} set misses a limit of its own points"),
                            });
                        }
                    }
                }
            }
            if in_c(p) {
                out.probed_convex += 1;
                let first = f(p);
                if (0..2).any(|_| f(p) != first) {
                    out.convexity.push(ProbeFailure {
                        point: p.clone(),
                        other: p.clone(),
                        message: "flow map returned different values for the same argument".into(),
                    });
                }
            }
            out
        })
        .collect();

    let mut report = AssumptionReport {
        closedness: ProbeVerdict::from(0, Vec::new()),
        continuity: ProbeVerdict::from(0, Vec::new()),
        convexity: ProbeVerdict::from(0, Vec::new()),
    };
    let (mut c1, mut c2, mut c3) = (0, 0, 0);
    let (mut f1, mut f2, mut f3) = (Vec::new(), Vec::new(), Vec::new());
    for o in per_point {
        c1 += o.probed_closed;
        c2 += o.probed_cont;
        c3 += o.probed_convex;
        f1.extend(o.closedness);
        f2.extend(o.continuity);
        f3.extend(o.convexity);
    }
    report.closedness = ProbeVerdict::from(c1, f1);
    report.continuity = ProbeVerdict::from(c2, f2);
    report.convexity = ProbeVerdict::from(c3, f3);
    Ok(report)
}

/// Options for [`inflate`].
#[derive(Clone)]
pub struct InflateOptions {
    /// Box over `(state, input)` on which the radius is probed.
    pub probe_box: BoxRegion,
    pub probe_count: usize,
    /// Unit-ball samples used for the ∃-quantified set membership.
    pub ball_samples: usize,
    /// When given, `σ` must be positive at every probed state outside it.
    pub attractor: Option<StatePredicate>,
}

impl InflateOptions {
    pub fn new(probe_box: BoxRegion) -> Self {
        Self {
            probe_box,
            probe_count: 1000,
            ball_samples: 64,
            attractor: None,
        }
    }

    pub fn with_attractor<A>(mut self, a: A) -> Self
    where
        A: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.attractor = Some(Arc::new(a));
        self
    }
}

/// The σ-perturbation `H_σ` of a system, realized over the extended input
/// `(u, δ₁, δ₂)` with `δ₁, δ₂` in the closed unit ball.
#[derive(Clone)]
pub struct PerturbedSystem {
    base: HybridSystem,
    sigma: RadiusFn,
    system: HybridSystem,
}

impl fmt::Debug for PerturbedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbedSystem")
            .field("base", &self.base)
            .finish_non_exhaustive()
    }
}

fn clamp_ball(d: &[f64]) -> Vec<f64> {
    let r = norm(d);
    if r > 1.0 {
        d.iter().map(|v| v / r).collect()
    } else {
        d.to_vec()
    }
}

fn shifted(x: &[f64], radius: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + radius * b).collect()
}

impl PerturbedSystem {
    pub fn base(&self) -> &HybridSystem {
        &self.base
    }

    /// The inflated system; its input is `(u, δ₁, δ₂)`.
    pub fn system(&self) -> &HybridSystem {
        &self.system
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        (self.sigma)(x)
    }

    /// Pack `(u, δ₁, δ₂)` into an extended input.
    pub fn extended_input(u: &[f64], d1: &[f64], d2: &[f64]) -> Vec<f64> {
        u.iter().chain(d1).chain(d2).copied().collect()
    }
}

/// Build `H_σ`. Flow and jump sets are inflated by "some sampled `δ₁` puts
/// `(x + σ(x)δ₁, u)` in the base set"; the flow and jump values use the
/// supplied `δ₁` when it is admissible and the first admissible ball sample
/// otherwise.
pub fn inflate<S>(sys: &HybridSystem, sigma: S, opts: &InflateOptions) -> Result<PerturbedSystem>
where
    S: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    let n = sys.state_dim();
    let m = sys.input_dim();
    if opts.probe_box.dim() != n + m {
        return Err(Error::InvalidArgument(format!(
            "probe box has dimension {}, expected {}",
            opts.probe_box.dim(),
            n + m
        )));
    }
    let sigma: RadiusFn = Arc::new(sigma);
    let ball = Arc::new(unit_ball_points(n, opts.ball_samples.max(1)));

    let probe: Vec<Vec<f64>> = (1..=opts.probe_count as u64).map(|i| opts.probe_box.point(i)).collect();
    for p in &probe {
        let x = &p[..n];
        let s = sigma(x);
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidRadius(format!("σ({x:?}) = {s}")));
        }
        if let Some(attr) = &opts.attractor {
            if s == 0.0 && !attr(x) {
                return Err(Error::InvalidRadius(format!("σ vanishes at {x:?} off the attractor")));
            }
        }
        if sys.in_constraint(x) {
            if let Some(d) = ball.iter().find(|d| !sys.in_constraint(&shifted(x, s, d))) {
                return Err(Error::InvalidRadius(format!(
                    "x + σ(x)δ leaves the state constraint at x = {x:?}, δ = {d:?}"
                )));
            }
        }
    }
    let sigma_vec = |p: &[f64]| vec![sigma(&p[..n])];
    for (i, p) in probe.iter().enumerate() {
        let q = shifted(
            p,
            1e-3,
            &halton(i as u64 + 7, n + m)
                .iter()
                .map(|v| 2.0 * v - 1.0)
                .collect::<Vec<_>>(),
        );
        if let Some((a, _, gap)) = discontinuity_probe(&sigma_vec, &|_| true, p, &q) {
            return Err(Error::InvalidRadius(format!(
                "σ appears discontinuous near {:?} (jump {gap:.3e})",
                &a[..n]
            )));
        }
    }

    let split = move |v: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            v[..m].to_vec(),
            clamp_ball(&v[m..m + n]),
            clamp_ball(&v[m + n..m + 2 * n]),
        )
    };

    let pick = {
        let ball = Arc::clone(&ball);
        move |member: &SetFn, x: &[f64], u: &[f64], s: f64, d1: Vec<f64>| -> Vec<f64> {
            let y = shifted(x, s, &d1);
            if member(&y, u) {
                return y;
            }
            ball.iter()
                .map(|d| shifted(x, s, d))
                .find(|y| member(y, u))
                .unwrap_or(y)
        }
    };

    let base_c = Arc::clone(&sys.in_c);
    let base_d = Arc::clone(&sys.in_d);
    let exists = |member: SetFn, ball: Arc<Vec<Vec<f64>>>, sigma: RadiusFn| -> SetFn {
        Arc::new(move |x: &[f64], v: &[f64]| {
            let u = &v[..m];
            let s = sigma(x);
            ball.iter().any(|d| member(&shifted(x, s, d), u))
        })
    };
    let in_c = exists(Arc::clone(&base_c), Arc::clone(&ball), Arc::clone(&sigma));
    let in_d = exists(Arc::clone(&base_d), Arc::clone(&ball), Arc::clone(&sigma));

    let flow: MapFn = {
        let (f, sigma, pick, base_c) = (Arc::clone(&sys.flow), Arc::clone(&sigma), pick.clone(), base_c);
        Arc::new(move |x: &[f64], v: &[f64]| {
            let (u, d1, d2) = split(v);
            let s = sigma(x);
            let y = pick(&base_c, x, &u, s, d1);
            shifted(&f(&y, &u), s, &d2)
        })
    };
    let jump: MapFn = {
        let (g, sigma, base_d) = (Arc::clone(&sys.jump), Arc::clone(&sigma), base_d);
        Arc::new(move |x: &[f64], v: &[f64]| {
            let (u, d1, d2) = split(v);
            let s = sigma(x);
            let y = pick(&base_d, x, &u, s, d1);
            let gy = g(&y, &u);
            let s_after = sigma(&gy);
            shifted(&gy, s_after, &d2)
        })
    };

    let system = HybridSystem {
        name: format!("{}-inflated", sys.name),
        state_dim: n,
        input_dim: m + 2 * n,
        flow,
        jump,
        in_c,
        in_d,
        constraint: sys.constraint.clone(),
    };

    // The δ = 0 slice must reproduce the base dynamics exactly.
    let zeros = vec![0.0; n];
    for p in &probe {
        let (x, u) = p.split_at(n);
        let v = PerturbedSystem::extended_input(u, &zeros, &zeros);
        if sys.in_flow_set(x, u) && (!system.in_flow_set(x, &v) || system.flow(x, &v) != sys.flow(x, u)) {
            return Err(Error::InvalidRadius(format!(
                "δ = 0 flow slice differs from the base at {x:?}"
            )));
        }
        if sys.in_jump_set(x, u) && (!system.in_jump_set(x, &v) || system.jump(x, &v) != sys.jump(x, u)) {
            return Err(Error::InvalidRadius(format!(
                "δ = 0 jump slice differs from the base at {x:?}"
            )));
        }
    }

    Ok(PerturbedSystem {
        base: sys.clone(),
        sigma,
        system,
    })
}

/// The auxiliary system `Ĥ` whose input is a normalized disturbance `d`,
/// `|d| ≤ 1`, acting through `u = φ(ω(x))·d`.
#[derive(Clone)]
pub struct AuxiliarySystem {
    base: HybridSystem,
    phi: ScalarFn,
    omega: ProperIndicator,
    system: HybridSystem,
}

impl fmt::Debug for AuxiliarySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuxiliarySystem")
            .field("base", &self.base)
            .field("phi", &self.phi)
            .field("omega", &self.omega)
            .finish()
    }
}

impl AuxiliarySystem {
    pub fn base(&self) -> &HybridSystem {
        &self.base
    }

    /// The restricted system; its input is `d`.
    pub fn system(&self) -> &HybridSystem {
        &self.system
    }

    pub fn phi(&self) -> &ScalarFn {
        &self.phi
    }

    pub fn omega(&self) -> &ProperIndicator {
        &self.omega
    }

    /// `u = φ(ω(x))·d` with `d` clamped to the unit ball.
    pub fn realized_input(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        let k = self.phi.eval(self.omega.eval(x));
        clamp_ball(d).iter().map(|v| k * v).collect()
    }

    /// The input seen by the base system along a solution of `Ĥ`.
    pub fn realize(&self, arc: &HybridArc, d: &HybridInput) -> Result<HybridInput> {
        if arc.domain() != d.domain() || arc.sample_count() != d.sample_count() {
            return Err(Error::InvalidArgument(
                "arc and disturbance must share their samples".into(),
            ));
        }
        let segments = arc
            .segments()
            .iter()
            .zip(d.segments())
            .map(|(xs, ds)| Segment {
                j: xs.j,
                samples: xs
                    .samples
                    .iter()
                    .zip(&ds.samples)
                    .map(|(xa, da)| Sample {
                        t: xa.t,
                        value: self.realized_input(&xa.value, &da.value),
                    })
                    .collect(),
            })
            .collect();
        HybridSignal::from_segments(self.base.input_dim(), segments)
    }
}

/// Build `Ĥ` from `H`, `φ ∈ K∞` and a proper indicator.
pub fn restrict_input(sys: &HybridSystem, phi: ScalarFn, omega: ProperIndicator) -> Result<AuxiliarySystem> {
    if phi.class() != FnClass::KInfinity {
        return Err(Error::InvalidArgument(format!(
            "φ must be declared K∞, got {}",
            phi.class()
        )));
    }
    ensure_class(&phi, "φ")?;
    let gain = {
        let (phi, omega) = (phi.clone(), omega.clone());
        Arc::new(move |x: &[f64], d: &[f64]| -> Vec<f64> {
            let k = phi.eval(omega.eval(x));
            clamp_ball(d).iter().map(|v| k * v).collect()
        })
    };
    let wrap_map = |map: MapFn| -> MapFn {
        let gain = Arc::clone(&gain);
        Arc::new(move |x: &[f64], d: &[f64]| map(x, &gain(x, d)))
    };
    let wrap_set = |set: SetFn| -> SetFn {
        let gain = Arc::clone(&gain);
        Arc::new(move |x: &[f64], d: &[f64]| set(x, &gain(x, d)))
    };
    let system = HybridSystem {
        name: format!("{}-restricted", sys.name),
        state_dim: sys.state_dim,
        input_dim: sys.input_dim,
        flow: wrap_map(Arc::clone(&sys.flow)),
        jump: wrap_map(Arc::clone(&sys.jump)),
        in_c: wrap_set(Arc::clone(&sys.in_c)),
        in_d: wrap_set(Arc::clone(&sys.in_d)),
        constraint: sys.constraint.clone(),
    };
    Ok(AuxiliarySystem {
        base: sys.clone(),
        phi,
        omega,
        system,
    })
}

/// `(x_p, û, w) → ẋ_p`.
pub type PlantFlow = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `z → output`.
pub type OutputMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// `(z, ż) → d/dt output`.
pub type OutputRate = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x_c, ŷ) → vector`.
pub type ControllerMap = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x_c, ŷ, ẋ_c, dŷ/dt) → du/dt`.
pub type ControllerRate = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x_p, x_c, ŷ, û) → hold derivative`.
pub type HoldFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Continuous-time plant `ẋ_p = f_p(x_p, u, w)`, `y = g_p(x_p)`.
#[derive(Clone)]
pub struct Plant {
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub disturbance_dim: usize,
    pub flow: PlantFlow,
    pub output: OutputMap,
    /// `ẏ` given `(x_p, ẋ_p)`; a central difference of `output` when absent.
    pub output_rate: Option<OutputRate>,
}

/// Emulated controller `ẋ_c = f_c(x_c, y)`, `u = g_c(x_c, y)`.
#[derive(Clone)]
pub struct Controller {
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub flow: ControllerMap,
    pub output: ControllerMap,
    /// `u̇` given `(x_c, ŷ, ẋ_c, dŷ/dt)`; a central difference of `output`
    /// when absent.
    pub output_rate: Option<ControllerRate>,
}

/// Index ranges of the sampled-data state `(x_p, x_c, e_y, e_u, τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampledDataLayout {
    pub plant_dim: usize,
    pub controller_dim: usize,
    pub output_error_dim: usize,
    pub input_error_dim: usize,
}

impl SampledDataLayout {
    pub fn new(plant: &Plant, controller: &Controller) -> Self {
        Self {
            plant_dim: plant.state_dim,
            controller_dim: controller.state_dim,
            output_error_dim: plant.output_dim,
            input_error_dim: plant.input_dim,
        }
    }

    /// `n_x = n_p + n_c`.
    pub fn x_dim(&self) -> usize {
        self.plant_dim + self.controller_dim
    }

    /// `n_e = n_y + n_u`.
    pub fn e_dim(&self) -> usize {
        self.output_error_dim + self.input_error_dim
    }

    pub fn tau_index(&self) -> usize {
        self.x_dim() + self.e_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.tau_index() + 1
    }

    pub fn x<'a>(&self, xi: &'a [f64]) -> &'a [f64] {
        &xi[..self.x_dim()]
    }

    pub fn e<'a>(&self, xi: &'a [f64]) -> &'a [f64] {
        &xi[self.x_dim()..self.tau_index()]
    }

    pub fn tau(&self, xi: &[f64]) -> f64 {
        xi[self.tau_index()]
    }
}

/// Central difference of `map` at `z` along `v`; exactly zero when `v = 0`.
fn directional_derivative(map: &dyn Fn(&[f64]) -> Vec<f64>, z: &[f64], v: &[f64], out_dim: usize) -> Vec<f64> {
    let vn = norm(v);
    if vn == 0.0 {
        return vec![0.0; out_dim];
    }
    let h = 1e-6 * (1.0 + norm(z)) / vn;
    let plus: Vec<f64> = z.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = z.iter().zip(v).map(|(a, b)| a - h * b).collect();
    map(&plus)
        .iter()
        .zip(map(&minus))
        .map(|(p, q)| (p - q) / (2.0 * h))
        .collect()
}

/// Slack on clock comparisons in [`build_sampled_data`]. It exceeds the
/// default event tolerance so that localisation can land on a jump set that
/// is the single instant `τ = τ_MASP`.
pub const CLOCK_TOL: f64 = 1e-8;

/// The emulated sampled-data closed loop with state `(x_p, x_c, e_y, e_u, τ)`
/// and disturbance input `w`. It flows on `τ ∈ [0, τ_MASP]`, jumps on
/// `τ ∈ [ε, τ_MASP]`, and a jump resets `e` and `τ` to zero. Hold devices
/// default to zero-order holds.
pub fn build_sampled_data(
    plant: &Plant,
    controller: &Controller,
    hold_p: Option<HoldFn>,
    hold_c: Option<HoldFn>,
    eps: f64,
    tau_masp: f64,
) -> Result<HybridSystem> {
    if !(eps > 0.0) || !tau_masp.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need 0 < ε ≤ τ_MASP, got ε = {eps}, τ_MASP = {tau_masp}"
        )));
    }
    if eps > tau_masp {
        return Err(Error::InvalidArgument(format!("ε = {eps} exceeds τ_MASP = {tau_masp}")));
    }
    if controller.input_dim != plant.output_dim || controller.output_dim != plant.input_dim {
        return Err(Error::InvalidArgument(format!(
            "controller maps R^{} to R^{} but the plant outputs R^{} and takes R^{}",
            controller.input_dim, controller.output_dim, plant.output_dim, plant.input_dim
        )));
    }
    let layout = SampledDataLayout::new(plant, controller);
    let (np, nc, ny, nu) = (plant.state_dim, controller.state_dim, plant.output_dim, plant.input_dim);
    let nw = plant.disturbance_dim;
    let plant = plant.clone();
    let controller = controller.clone();

    let flow = move |xi: &[f64], w: &[f64]| -> Vec<f64> {
        let xp = &xi[..np];
        let xc = &xi[np..np + nc];
        let ey = &xi[np + nc..np + nc + ny];
        let eu = &xi[np + nc + ny..np + nc + ny + nu];
        let y = (plant.output)(xp);
        let y_hat: Vec<f64> = y.iter().zip(ey).map(|(a, b)| a + b).collect();
        let u = (controller.output)(xc, &y_hat);
        let u_hat: Vec<f64> = u.iter().zip(eu).map(|(a, b)| a + b).collect();

        let xp_dot = (plant.flow)(xp, &u_hat, w);
        let xc_dot = (controller.flow)(xc, &y_hat);
        let y_hat_dot = hold_p
            .as_ref()
            .map_or_else(|| vec![0.0; ny], |h| h(xp, xc, &y_hat, &u_hat));
        let u_hat_dot = hold_c
            .as_ref()
            .map_or_else(|| vec![0.0; nu], |h| h(xp, xc, &y_hat, &u_hat));

        let y_dot = match &plant.output_rate {
            Some(rate) => rate(xp, &xp_dot),
            None => directional_derivative(&|z: &[f64]| (plant.output)(z), xp, &xp_dot, ny),
        };
        let u_dot = match &controller.output_rate {
            Some(rate) => rate(xc, &y_hat, &xc_dot, &y_hat_dot),
            None => {
                let joint: Vec<f64> = xc.iter().chain(&y_hat).copied().collect();
                let dir: Vec<f64> = xc_dot.iter().chain(&y_hat_dot).copied().collect();
                directional_derivative(&|z: &[f64]| (controller.output)(&z[..nc], &z[nc..]), &joint, &dir, nu)
            }
        };

        let mut out = Vec::with_capacity(layout.state_dim());
        out.extend_from_slice(&xp_dot);
        out.extend_from_slice(&xc_dot);
        out.extend(y_hat_dot.iter().zip(&y_dot).map(|(a, b)| a - b));
        out.extend(u_hat_dot.iter().zip(&u_dot).map(|(a, b)| a - b));
        out.push(1.0);
        out
    };
    let nx = layout.x_dim();
    let jump = move |xi: &[f64], _: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; xi.len()];
        out[..nx].copy_from_slice(&xi[..nx]);
        out
    };
    let tau_at = layout.tau_index();
    let in_c = move |xi: &[f64], _: &[f64]| (-CLOCK_TOL..=tau_masp + CLOCK_TOL).contains(&xi[tau_at]);
    let in_d = move |xi: &[f64], _: &[f64]| (eps - CLOCK_TOL..=tau_masp + CLOCK_TOL).contains(&xi[tau_at]);
    let name = "sampled-data";
    Ok(HybridSystem::new(name, layout.state_dim(), nw, flow, jump, in_c, in_d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_decay() -> HybridSystem {
        HybridSystem::new(
            "decay",
            1,
            1,
            |x, u| vec![-x[0] + u[0]],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| false,
        )
    }

    #[test]
    fn discontinuous_flow_is_caught() {
        let sys = HybridSystem::new(
            "step",
            1,
            1,
            |x, _| vec![if x[0] < 0.3 { -1.0 } else { 1.0 }],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| false,
        );
        let mut spec = AssumptionProbeSpec::new(BoxRegion::symmetric(1, 1.0), BoxRegion::symmetric(1, 1.0), 400);
        spec.pair_distance = 0.2;
        let report = check_standing_assumptions(&sys, &spec).unwrap();
        assert!(!report.continuity.passed);
        let f = &report.continuity.failures[0];
        assert!((f.point[0] - 0.3).abs() < 1e-9 && (f.other[0] - 0.3).abs() < 1e-9);
        assert!(report.convexity.passed);
    }

    #[test]
    fn open_flow_set_is_caught() {
        let sys = HybridSystem::new(
            "open",
            1,
            1,
            |_, _| vec![1.0],
            |x, _| x.to_vec(),
            |x, _| x[0] < 0.0,
            |x, _| x[0] >= 0.0,
        );
        let spec = AssumptionProbeSpec::new(BoxRegion::symmetric(1, 1.0), BoxRegion::symmetric(1, 1.0), 200);
        let report = check_standing_assumptions(&sys, &spec).unwrap();
        assert!(!report.closedness.passed);
        assert!(report.continuity.passed);
    }

    #[test]
    fn smooth_system_passes() {
        let spec = AssumptionProbeSpec::new(BoxRegion::symmetric(1, 2.0), BoxRegion::symmetric(1, 1.0), 500);
        assert!(check_standing_assumptions(&scalar_decay(), &spec).unwrap().passed());
    }

    #[test]
    fn evaluation_failure_has_location() {
        let sys = HybridSystem::new(
            "bad",
            1,
            1,
            |x, _| vec![1.0 / x[0].max(0.0)],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| false,
        );
        let spec = AssumptionProbeSpec::new(BoxRegion::symmetric(1, 1.0), BoxRegion::symmetric(1, 1.0), 50);
        match check_standing_assumptions(&sys, &spec) {
            Err(Error::EvaluationFailure { point, .. }) => assert!(point[0] <= 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_radius_inflation_is_identity() {
        let sys = scalar_decay();
        let opts = InflateOptions::new(BoxRegion::symmetric(2, 3.0));
        let p = inflate(&sys, |_| 0.0, &opts).unwrap();
        for i in 1..200 {
            let v = opts.probe_box.point(i);
            let (x, u) = v.split_at(1);
            let ext = PerturbedSystem::extended_input(u, &[0.7], &[-0.4]);
            assert_eq!(p.system().flow(x, &ext), sys.flow(x, u));
            assert_eq!(p.system().in_flow_set(x, &ext), sys.in_flow_set(x, u));
        }
    }

    #[test]
    fn constant_radius_deviation_bound() {
        let sys = scalar_decay();
        let eps = 0.01;
        let opts = InflateOptions::new(BoxRegion::symmetric(2, 3.0));
        let p = inflate(&sys, move |_| eps, &opts).unwrap();
        let deltas = unit_ball_points(1, 64);
        let mut worst: f64 = 0.0;
        for i in 1..300 {
            let x = [opts.probe_box.point(i)[0]];
            for d1 in &deltas {
                for d2 in &deltas {
                    let ext = PerturbedSystem::extended_input(&[0.0], d1, d2);
                    worst = worst.max((p.system().flow(&x, &ext)[0] + x[0]).abs());
                }
            }
        }
        assert!(worst <= 2.0 * eps + 1e-15, "deviation {worst}");
        assert!(worst > 1.5 * eps);
    }

    #[test]
    fn negative_radius_rejected() {
        let opts = InflateOptions::new(BoxRegion::symmetric(2, 1.0));
        assert!(matches!(
            inflate(&scalar_decay(), |x| x[0], &opts),
            Err(Error::InvalidRadius(_))
        ));
        let opts = opts.with_attractor(|x| x[0] == 0.0);
        assert!(matches!(
            inflate(&scalar_decay(), |_| 0.0, &opts),
            Err(Error::InvalidRadius(_))
        ));
    }

    #[test]
    fn restricted_input_respects_gain() {
        let aux = restrict_input(&scalar_decay(), ScalarFn::linear(0.1), ProperIndicator::norm()).unwrap();
        let u = aux.realized_input(&[2.0], &[5.0]);
        assert!((u[0] - 0.2).abs() < 1e-15);
        let zero = aux.system().flow(&[1.5], &[0.0]);
        assert_eq!(zero, vec![-1.5]);
        assert!(restrict_input(&scalar_decay(), ScalarFn::atan_scaled(1.0), ProperIndicator::norm()).is_err());
    }

    fn first_order_loop(eps: f64, tau: f64) -> Result<HybridSystem> {
        let plant = Plant {
            state_dim: 1,
            input_dim: 1,
            output_dim: 1,
            disturbance_dim: 1,
            flow: Arc::new(|x, u, w| vec![x[0] + u[0] + w[0]]),
            output: Arc::new(|x| x.to_vec()),
            output_rate: None,
        };
        let controller = Controller {
            state_dim: 0,
            input_dim: 1,
            output_dim: 1,
            flow: Arc::new(|_, _| Vec::new()),
            output: Arc::new(|_, y| vec![-2.0 * y[0]]),
            output_rate: None,
        };
        build_sampled_data(&plant, &controller, None, None, eps, tau)
    }

    #[test]
    fn sampled_data_structure() {
        let sys = first_order_loop(0.01, 0.1).unwrap();
        assert_eq!(sys.state_dim(), 4);
        let xi = [0.4, -0.2, 0.3, 0.05];
        assert_eq!(sys.jump(&xi, &[0.0]), vec![0.4, 0.0, 0.0, 0.0]);
        let f = sys.flow(&xi, &[0.1]);
        assert_eq!(f[3], 1.0);
        // ẋ = x + (-2(x + e_y) + e_u) + w; ė_y = -ẋ; ė_u = 0 under a static gain and zero-order holds.
        let xdot = 0.4 - 2.0 * (0.4 - 0.2) + 0.3 + 0.1;
        assert!((f[0] - xdot).abs() < 1e-15);
        assert!((f[1] + xdot).abs() < 1e-8);
        assert_eq!(f[2], 0.0);
        assert!(sys.in_flow_set(&[0.0, 0.0, 0.0, 0.0], &[0.0]));
        assert!(!sys.in_jump_set(&[0.0, 0.0, 0.0, 0.005], &[0.0]));
        assert!(sys.in_jump_set(&[0.0, 0.0, 0.0, 0.1], &[0.0]));
        assert!(sys.in_flow_set(&[0.0, 0.0, 0.0, 0.1 + 0.5 * CLOCK_TOL], &[0.0]));
        assert!(!sys.in_flow_set(&[0.0, 0.0, 0.0, 0.1 + 2.0 * CLOCK_TOL], &[0.0]));
        assert!(!sys.in_flow_set(&[0.0, 0.0, 0.0, -2.0 * CLOCK_TOL], &[0.0]));
        assert!(sys.in_jump_set(&[0.0, 0.0, 0.0, 0.01 - 0.5 * CLOCK_TOL], &[0.0]));
        assert!(!sys.in_jump_set(&[0.0, 0.0, 0.0, 0.01 - 2.0 * CLOCK_TOL], &[0.0]));
        assert!(matches!(first_order_loop(0.2, 0.1), Err(Error::InvalidArgument(_))));
    }
}
