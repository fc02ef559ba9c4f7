//! Solution pairs of hybrid systems: fixed-step RK4 flows, bisection event
//! localisation on the set-membership predicates, exact jumps.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_time::{HybridArc, HybridInput, HybridTime, SignalBuilder};
use crate::sampling::norm;
use crate::system::HybridSystem;

/// What to do on `C ∩ D`, where both flowing and jumping are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpPriority {
    #[default]
    JumpFirst,
    FlowFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub dt: f64,
    pub event_tol: f64,
    pub jump_priority: JumpPriority,
    pub t_max: f64,
    pub j_max: usize,
    /// Most consecutive jumps allowed without flow time in between.
    pub zeno_guard: usize,
    /// Terminate once `|x|` exceeds this.
    pub blowup: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            event_tol: 1e-9,
            jump_priority: JumpPriority::JumpFirst,
            t_max: 10.0,
            j_max: 10_000,
            zeno_guard: 100,
            blowup: 1e9,
        }
    }
}

impl SolverOptions {
    pub fn with_horizon(mut self, t_max: f64, j_max: usize) -> Self {
        self.t_max = t_max;
        self.j_max = j_max;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_priority(mut self, p: JumpPriority) -> Self {
        self.jump_priority = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.event_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "event_tol must be positive, got {}",
                self.event_tol
            )));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_max must be finite and nonnegative, got {}",
                self.t_max
            )));
        }
        if !(self.blowup > 0.0) {
            return Err(Error::InvalidArgument("blowup bound must be positive".into()));
        }
        Ok(())
    }
}

type SignalFn = Arc<dyn Fn(f64, usize) -> Vec<f64> + Send + Sync>;
type FeedbackFn = Arc<dyn Fn(f64, usize, &[f64]) -> Vec<f64> + Send + Sync>;

/// Where the input `u(t, j)` comes from.
#[derive(Clone)]
pub enum InputSource {
    Zero,
    Constant(Vec<f64>),
    Signal(SignalFn),
    /// `u = k(t, j, x)`.
    Feedback(FeedbackFn),
    /// A stored hybrid input, read at `(t, min(j, J))` with `t` clamped to the
    /// stored interval.
    Tabulated(HybridInput),
}

impl fmt::Debug for InputSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant(c) => write!(f, "Constant({c:?})"),
            Self::Signal(_) => write!(f, "Signal(..)"),
            Self::Feedback(_) => write!(f, "Feedback(..)"),
            Self::Tabulated(s) => write!(f, "Tabulated({} samples)", s.sample_count()),
        }
    }
}

impl InputSource {
    pub fn signal<F>(f: F) -> Self
    where
        F: Fn(f64, usize) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::Signal(Arc::new(f))
    }

    pub fn feedback<F>(f: F) -> Self
    where
        F: Fn(f64, usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::Feedback(Arc::new(f))
    }

    pub fn eval(&self, t: f64, j: usize, x: &[f64], dim: usize) -> Vec<f64> {
        match self {
            Self::Zero => vec![0.0; dim],
            Self::Constant(c) => c.clone(),
            Self::Signal(f) => f(t, j),
            Self::Feedback(f) => f(t, j, x),
            Self::Tabulated(s) => {
                let seg = &s.segments()[j.min(s.segments().len() - 1)];
                let t = t.clamp(seg.start(), seg.end());
                s.value_at(HybridTime::new(t, seg.j)).unwrap_or_else(|_| vec![0.0; dim])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    LeftCUnionD,
    ZenoGuard,
    SolverFailure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub flow_steps: usize,
    pub jumps: usize,
    pub bisections: usize,
    pub message: Option<String>,
}

/// A solution pair `(x, u)` on a common hybrid time domain.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub arc: HybridArc,
    pub input_used: HybridInput,
    pub termination: Termination,
    pub diagnostics: Diagnostics,
}

struct Stepper<'a> {
    sys: &'a HybridSystem,
    input: &'a InputSource,
    m: usize,
}

impl Stepper<'_> {
    fn u(&self, t: f64, j: usize, x: &[f64]) -> Vec<f64> {
        self.input.eval(t, j, x, self.m)
    }

    fn rhs(&self, t: f64, j: usize, x: &[f64]) -> Vec<f64> {
        self.sys.flow(x, &self.u(t, j, x))
    }

    fn rk4(&self, t: f64, j: usize, x: &[f64], h: f64) -> Vec<f64> {
        let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + s * y).collect() };
        let k1 = self.rhs(t, j, x);
        let k2 = self.rhs(t + 0.5 * h, j, &axpy(x, &k1, 0.5 * h));
        let k3 = self.rhs(t + 0.5 * h, j, &axpy(x, &k2, 0.5 * h));
        let k4 = self.rhs(t + h, j, &axpy(x, &k3, h));
        x.iter()
            .enumerate()
            .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Compute a maximal-up-to-horizon solution pair from `xi`.
pub fn solve(sys: &HybridSystem, xi: &[f64], input: &InputSource, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    let n = sys.state_dim();
    let m = sys.input_dim();
    if xi.len() != n || !finite(xi) {
        return Err(Error::InvalidInitialCondition(format!(
            "initial state {xi:?} is not a finite vector of dimension {n}"
        )));
    }
    if !sys.in_constraint(xi) {
        return Err(Error::InvalidInitialCondition(format!(
            "{xi:?} violates the state constraint"
        )));
    }
    let stepper = Stepper { sys, input, m };
    let u0 = stepper.u(0.0, 0, xi);
    if u0.len() != m {
        return Err(Error::InvalidArgument(format!(
            "input has {} components, system expects {m}",
            u0.len()
        )));
    }
    if !sys.in_flow_set(xi, &u0) && !sys.in_jump_set(xi, &u0) {
        return Err(Error::InvalidInitialCondition(format!(
            "{xi:?} with input {u0:?} is in neither C nor D"
        )));
    }

    let mut xs = SignalBuilder::new(n);
    let mut us = SignalBuilder::new(m);
    let mut diag = Diagnostics::default();
    let (mut t, mut j) = (0.0_f64, 0usize);
    let mut x = xi.to_vec();
    let mut u = u0;
    xs.push(t, x.clone());
    us.push(t, u.clone());
    let mut zero_flow_jumps = 0usize;
    let mut force_jump = false;
    let jump_first = opts.jump_priority == JumpPriority::JumpFirst;

    let event = |x: &[f64], u: &[f64]| !sys.in_flow_set(x, u) || (jump_first && sys.in_jump_set(x, u));

    let termination = loop {
        let in_c = sys.in_flow_set(&x, &u);
        let in_d = sys.in_jump_set(&x, &u);
        if in_d && (force_jump || jump_first || !in_c) {
            force_jump = false;
            if j >= opts.j_max {
                break Termination::Horizon;
            }
            if zero_flow_jumps >= opts.zeno_guard {
                diag.message = Some(format!("{} jumps without flow at t = {t}", zero_flow_jumps));
                break Termination::ZenoGuard;
            }
            let next = sys.jump(&x, &u);
            if next.len() != n || !finite(&next) {
                diag.message = Some(format!("jump map is not finite at {x:?}"));
                break Termination::SolverFailure;
            }
            j += 1;
            diag.jumps += 1;
            zero_flow_jumps += 1;
            x = next;
            u = stepper.u(t, j, &x);
            xs.start_segment();
            us.start_segment();
            xs.push(t, x.clone());
            us.push(t, u.clone());
            if norm(&x) > opts.blowup {
                diag.message = Some(format!("|x| exceeded {} after a jump", opts.blowup));
                break Termination::SolverFailure;
            }
            continue;
        }
        if !in_c {
            break Termination::LeftCUnionD;
        }
        if t >= opts.t_max {
            break Termination::Horizon;
        }

        let h = opts.dt.min(opts.t_max - t);
        let x1 = stepper.rk4(t, j, &x, h);
        if !finite(&x1) {
            diag.message = Some(format!("non-finite state after a flow step from t = {t}"));
            break Termination::SolverFailure;
        }
        let t1 = if h == opts.t_max - t { opts.t_max } else { t + h };
        let u1 = stepper.u(t1, j, &x1);
        diag.flow_steps += 1;
        if !event(&x1, &u1) {
            t = t1;
            x = x1;
            u = u1;
            zero_flow_jumps = 0;
            xs.push(t, x.clone());
            us.push(t, u.clone());
            if norm(&x) > opts.blowup {
                diag.message = Some(format!("|x| exceeded {} at t = {t}", opts.blowup));
                break Termination::SolverFailure;
            }
            continue;
        }

        // Localise the event in (lo, hi].
        let (mut lo, mut hi) = (0.0_f64, h);
        let (mut x_lo, mut x_hi) = (x.clone(), x1);
        while hi - lo > opts.event_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let xm = stepper.rk4(t, j, &x, mid);
            let um = stepper.u(t + mid, j, &xm);
            diag.bisections += 1;
            if event(&xm, &um) {
                hi = mid;
                x_hi = xm;
            } else {
                lo = mid;
                x_lo = xm;
            }
        }
        let u_hi = stepper.u(t + hi, j, &x_hi);
        let u_lo = stepper.u(t + lo, j, &x_lo);
        let hi_in_d = sys.in_jump_set(&x_hi, &u_hi);
        let hi_in_c = sys.in_flow_set(&x_hi, &u_hi);
        let lo_in_d = sys.in_jump_set(&x_lo, &u_lo);
        let (step, state, input, jump_next) = if hi_in_d && hi_in_c {
            (hi, x_hi, u_hi, true)
        } else if lo_in_d {
            (lo, x_lo, u_lo, true)
        } else if hi_in_d {
            (hi, x_hi, u_hi, true)
        } else {
            (lo, x_lo, u_lo, false)
        };
        if step > 0.0 {
            t += step;
            x = state;
            u = input;
            zero_flow_jumps = 0;
            xs.push(t, x.clone());
            us.push(t, u.clone());
        }
        if !jump_next {
            break Termination::LeftCUnionD;
        }
        force_jump = true;
    };

    Ok(SolveResult {
        arc: xs.finish()?,
        input_used: us.finish()?,
        termination,
        diagnostics: diag,
    })
}

/// Solve from each initial condition in parallel; `input` builds the input
/// for run `k`.
pub fn solve_ensemble<I>(
    sys: &HybridSystem,
    initial: &[Vec<f64>],
    input: I,
    opts: &SolverOptions,
) -> Vec<Result<SolveResult>>
where
    I: Fn(usize) -> InputSource + Sync,
{
    initial
        .par_iter()
        .enumerate()
        .map(|(k, xi)| solve(sys, xi, &input(k), opts))
        .collect()
}

fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let s = if len2 > 0.0 {
        (p.iter().zip(a).zip(&ab).map(|((pi, ai), d)| (pi - ai) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.iter()
        .zip(a)
        .zip(&ab)
        .map(|((pi, ai), d)| {
            let q = ai + s * d;
            (pi - q) * (pi - q)
        })
        .sum::<f64>()
        .sqrt()
}

/// Smallest `|p − y(s, j)|` over `s ∈ [t − eps, t + eps]` with `(s, j)` in
/// the domain of `y`, using linear interpolation between samples.
fn nearest_in_window(y: &HybridArc, j: usize, t: f64, eps: f64, p: &[f64]) -> Option<f64> {
    let seg = y.segments().get(j)?;
    let (a, b) = ((t - eps).max(seg.start()), (t + eps).min(seg.end()));
    if a > b {
        return None;
    }
    let value = |s: f64| y.value_at(HybridTime::new(s, j)).expect("time lies in the segment");
    let samples = &seg.samples;
    let mut best = f64::INFINITY;
    let start = samples.partition_point(|q| q.t < a);
    let mut nodes: Vec<(f64, Vec<f64>)> = vec![(a, value(a))];
    nodes.extend(
        samples[start..]
            .iter()
            .take_while(|q| q.t <= b)
            .map(|q| (q.t, q.value.clone())),
    );
    nodes.push((b, value(b)));
    for w in nodes.windows(2) {
        best = best.min(point_segment_distance(p, &w[0].1, &w[1].1));
    }
    Some(best)
}

fn one_sided_close(x: &HybridArc, y: &HybridArc, horizon: f64, eps: f64) -> bool {
    x.iter()
        .filter(|(p, _)| p.t + p.j as f64 <= horizon)
        .all(|(p, v)| nearest_in_window(y, p.j, p.t, eps, v).is_some_and(|d| d <= eps))
}

/// `(T, ε)`-closeness of two hybrid arcs.
pub fn closeness(x: &HybridArc, y: &HybridArc, horizon: f64, eps: f64) -> bool {
    one_sided_close(x, y, horizon, eps) && one_sided_close(y, x, horizon, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> HybridSystem {
        HybridSystem::new(
            "decay",
            1,
            0,
            |x, _| vec![-x[0]],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| false,
        )
    }

    #[test]
    fn constant_system_runs_to_horizon() {
        let sys = HybridSystem::new(
            "still",
            2,
            0,
            |_, _| vec![0.0, 0.0],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| false,
        );
        let r = solve(
            &sys,
            &[1.0, -2.0],
            &InputSource::Zero,
            &SolverOptions::default().with_horizon(3.0, 10),
        )
        .unwrap();
        assert_eq!(r.termination, Termination::Horizon);
        assert!(r.arc.iter().all(|(_, v)| v == [1.0, -2.0]));
        assert_eq!(r.arc.last().0.t, 3.0);
        assert_eq!(r.arc.domain(), r.input_used.domain());
    }

    #[test]
    fn rk4_has_fourth_order_error() {
        let sys = decay();
        let err = |dt: f64| {
            let opts = SolverOptions::default().with_dt(dt).with_horizon(1.0, 0);
            let r = solve(&sys, &[1.0], &InputSource::Zero, &opts).unwrap();
            (r.arc.last().1[0] - (-1.0_f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn bouncing_events_are_localised() {
        // Falling height with an elastic bounce at zero.
        let sys = HybridSystem::new(
            "ball",
            2,
            0,
            |x, _| vec![x[1], -9.81],
            |x, _| vec![0.0, -0.8 * x[1]],
            |x, _| x[0] >= 0.0,
            |x, _| x[0] <= 0.0 && x[1] <= 0.0,
        );
        let opts = SolverOptions::default().with_horizon(1.0, 10).with_dt(1e-2);
        let r = solve(&sys, &[1.0, 0.0], &InputSource::Zero, &opts).unwrap();
        let domain = r.arc.domain();
        let first = domain.intervals()[0].end;
        assert!((first - (2.0 / 9.81_f64).sqrt()).abs() < 1e-8, "first impact {first}");
        let seg0 = &r.arc.segments()[0];
        let before = &seg0.samples.last().unwrap().value;
        assert_eq!(r.arc.segments()[1].samples[0].value, vec![0.0, -0.8 * before[1]]);
    }

    #[test]
    fn zeno_guard_stops_jump_chains() {
        let sys = HybridSystem::new(
            "chain",
            1,
            0,
            |_, _| vec![0.0],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| true,
        );
        let opts = SolverOptions {
            zeno_guard: 7,
            ..SolverOptions::default()
        };
        let r = solve(&sys, &[0.0], &InputSource::Zero, &opts).unwrap();
        assert_eq!(r.termination, Termination::ZenoGuard);
        assert_eq!(r.diagnostics.jumps, 7);
    }

    #[test]
    fn invalid_initial_condition() {
        let sys = HybridSystem::new(
            "half",
            1,
            0,
            |_, _| vec![1.0],
            |x, _| x.to_vec(),
            |x, _| x[0] >= 0.0,
            |_, _| false,
        );
        assert!(matches!(
            solve(&sys, &[-1.0], &InputSource::Zero, &SolverOptions::default()),
            Err(Error::InvalidInitialCondition(_))
        ));
        let r = solve(
            &sys.clone(),
            &[0.0],
            &InputSource::Zero,
            &SolverOptions::default().with_horizon(1.0, 0),
        )
        .unwrap();
        assert_eq!(r.termination, Termination::Horizon);
    }

    #[test]
    fn leaving_both_sets_terminates() {
        let sys = HybridSystem::new(
            "exit",
            1,
            0,
            |_, _| vec![1.0],
            |x, _| x.to_vec(),
            |x, _| x[0] <= 0.5,
            |_, _| false,
        );
        let r = solve(&sys, &[0.0], &InputSource::Zero, &SolverOptions::default()).unwrap();
        assert_eq!(r.termination, Termination::LeftCUnionD);
        assert!((r.arc.last().1[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn blowup_is_a_solver_failure() {
        let sys = HybridSystem::new(
            "grow",
            1,
            0,
            |x, _| vec![x[0] * x[0]],
            |x, _| x.to_vec(),
            |_, _| true,
            |_, _| false,
        );
        let r = solve(
            &sys,
            &[1.0],
            &InputSource::Zero,
            &SolverOptions::default().with_horizon(2.0, 0),
        )
        .unwrap();
        assert_eq!(r.termination, Termination::SolverFailure);
    }

    #[test]
    fn closeness_basics() {
        let r = solve(
            &decay(),
            &[1.0],
            &InputSource::Zero,
            &SolverOptions::default().with_horizon(2.0, 0),
        )
        .unwrap();
        assert!(closeness(&r.arc, &r.arc, 2.0, 1e-9));
        let shifted = r.arc.map(1, |_, v| vec![v[0] + 0.02]).unwrap();
        assert!(!closeness(&r.arc, &shifted, 2.0, 0.01));
        assert!(closeness(&r.arc, &shifted, 2.0, 0.03));
    }
}
