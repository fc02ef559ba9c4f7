//! Sampling-based checks of Lyapunov-type certificate inequalities and of
//! trajectory-level integral estimates.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{ensure_class, FnClass, KlBound, KllBound, ScalarFn};
use crate::error::{Error, Result};
use crate::hybrid_time::HybridTime;
use crate::indicator::ProperIndicator;
use crate::sampling::{norm, BoxRegion};
use crate::simulator::{SolveResult, Termination};
use crate::system::{HybridSystem, StatePredicate};

/// Deterministic Halton samples over a `state × input` box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSampler {
    pub state_box: BoxRegion,
    pub input_box: BoxRegion,
    pub count: usize,
    /// Offset into the Halton sequence; distinct seeds give disjoint samples.
    pub seed: u64,
}

impl RegionSampler {
    pub fn new(state_box: BoxRegion, input_box: BoxRegion, count: usize) -> Self {
        Self {
            state_box,
            input_box,
            count,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sample `i` as `(state, input)`.
    pub fn point(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let joint = self.state_box.product(&self.input_box);
        let mut p = joint.point(self.seed.wrapping_mul(self.count as u64 + 1) + i as u64 + 1);
        let u = p.split_off(self.state_box.dim());
        (p, u)
    }

    pub fn points(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let joint = self.state_box.product(&self.input_box);
        let n = self.state_box.dim();
        let base = self.seed.wrapping_mul(self.count as u64 + 1);
        (0..self.count)
            .map(|i| {
                let mut p = joint.point(base + i as u64 + 1);
                let u = p.split_off(n);
                (p, u)
            })
            .collect()
    }
}

/// Membership of a sample in the flow and jump sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetLabel {
    pub flow: bool,
    pub jump: bool,
}

pub fn classify(sys: &HybridSystem, x: &[f64], u: &[f64]) -> SetLabel {
    SetLabel {
        flow: sys.in_flow_set(x, u),
        jump: sys.in_jump_set(x, u),
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A storage or Lyapunov function with either an exact gradient or central
/// finite differences with step `h = fd_step·(1 + |ξ|)`.
#[derive(Clone)]
pub struct StorageFunction {
    value: ValueFn,
    gradient: Option<GradFn>,
    kink: Option<StatePredicate>,
    fd_step: f64,
}

impl fmt::Debug for StorageFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StorageFunction")
            .field("exact_gradient", &self.gradient.is_some())
            .field("kink_set", &self.kink.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

/// Tolerance on inequalities that involve an exact gradient.
pub const EXACT_TOLERANCE: f64 = 1e-12;

impl StorageFunction {
    pub fn new<V>(value: V) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: None,
            kink: None,
            fd_step: 1e-5,
        }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// Points where the function is not differentiable; gradient-based
    /// checks skip samples for which this returns `true`.
    pub fn with_kink_set<K>(mut self, k: K) -> Self
    where
        K: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.kink = Some(Arc::new(k));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// The same function with its exact gradient dropped.
    pub fn without_gradient(&self) -> Self {
        Self {
            gradient: None,
            ..self.clone()
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn has_exact_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn in_kink_set(&self, x: &[f64]) -> bool {
        self.kink.as_ref().is_some_and(|k| k(x))
    }

    pub fn step_at(&self, x: &[f64]) -> f64 {
        self.fd_step * (1.0 + norm(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = self.step_at(x);
        let mut y = x.to_vec();
        (0..x.len())
            .map(|i| {
                y[i] = x[i] + h;
                let plus = self.eval(&y);
                y[i] = x[i] - h;
                let minus = self.eval(&y);
                y[i] = x[i];
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    /// Slack allowed on `⟨∇V(x), v⟩`.
    pub fn directional_tolerance(&self, x: &[f64], v: &[f64]) -> f64 {
        if self.gradient.is_some() {
            EXACT_TOLERANCE * (1.0 + norm(v))
        } else {
            let h = self.step_at(x);
            (10.0 * h * h).max(EXACT_TOLERANCE) * (1.0 + norm(v))
        }
    }

    pub fn directional(&self, x: &[f64], v: &[f64]) -> f64 {
        self.gradient(x).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Which decrease rate the flow inequality of an iISS certificate uses.
#[derive(Debug, Clone)]
pub enum FlowDecrease {
    /// `−α₃(ω)`, the same rate as on jumps.
    Alpha3,
    /// A separate rate.
    Custom(ScalarFn),
    /// No decrease on flows: `⟨∇V, f⟩ ≤ σ(|u|)`.
    Zero,
}

/// `α₁(ω) ≤ V ≤ α₂(ω)`, `⟨∇V, f⟩ ≤ −α₃(ω) + σ(|u|)` on `C`,
/// `V(g) − V ≤ −α₃(ω) + σ(|u|)` on `D`.
#[derive(Debug, Clone)]
pub struct IissCertificate {
    pub storage: StorageFunction,
    pub alpha1: ScalarFn,
    pub alpha2: ScalarFn,
    pub alpha3: ScalarFn,
    pub sigma: ScalarFn,
    pub flow_decrease: FlowDecrease,
}

impl IissCertificate {
    pub fn new(
        storage: StorageFunction,
        alpha1: ScalarFn,
        alpha2: ScalarFn,
        alpha3: ScalarFn,
        sigma: ScalarFn,
    ) -> Self {
        Self {
            storage,
            alpha1,
            alpha2,
            alpha3,
            sigma,
            flow_decrease: FlowDecrease::Alpha3,
        }
    }

    pub fn with_flow_decrease(mut self, d: FlowDecrease) -> Self {
        self.flow_decrease = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        require(&self.alpha1, FnClass::KInfinity, "α₁")?;
        require(&self.alpha2, FnClass::KInfinity, "α₂")?;
        require(&self.alpha3, FnClass::PositiveDefinite, "α₃")?;
        require(&self.sigma, FnClass::K, "σ")?;
        if let FlowDecrease::Custom(f) = &self.flow_decrease {
            require(f, FnClass::PositiveDefinite, "flow decrease rate")?;
        }
        Ok(())
    }

    fn flow_rate(&self, w: f64) -> f64 {
        match &self.flow_decrease {
            FlowDecrease::Alpha3 => self.alpha3.eval(w),
            FlowDecrease::Custom(f) => f.eval(w),
            FlowDecrease::Zero => 0.0,
        }
    }
}

/// Check that `f` is declared at least as strong as `class` and passes the
/// grid check for it.
fn require(f: &ScalarFn, class: FnClass, name: &str) -> Result<()> {
    let ok = match class {
        FnClass::PositiveDefinite => matches!(f.class(), FnClass::PositiveDefinite | FnClass::K | FnClass::KInfinity),
        FnClass::K => matches!(f.class(), FnClass::K | FnClass::KInfinity),
        FnClass::KInfinity => f.class() == FnClass::KInfinity,
        FnClass::L => f.class() == FnClass::L,
    };
    if !ok {
        return Err(Error::InvalidCertificate(format!(
            "{name} = {} is declared {} but must be {class}",
            f.label(),
            f.class()
        )));
    }
    ensure_class(f, name)
}

/// Storage function with supply rate `σ(|u|)` and dissipation `ρ(ξ) ≥ 0`.
#[derive(Clone)]
pub struct DissipativityCertificate {
    pub storage: StorageFunction,
    pub alpha4: ScalarFn,
    pub alpha5: ScalarFn,
    pub sigma: ScalarFn,
    /// `None` is `ρ ≡ 0`.
    pub rho: Option<ValueFn>,
}

impl fmt::Debug for DissipativityCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DissipativityCertificate")
            .field("storage", &self.storage)
            .field("alpha4", &self.alpha4)
            .field("alpha5", &self.alpha5)
            .field("sigma", &self.sigma)
            .field("rho", &self.rho.as_ref().map(|_| ".."))
            .finish()
    }
}

impl DissipativityCertificate {
    pub fn new(storage: StorageFunction, alpha4: ScalarFn, alpha5: ScalarFn, sigma: ScalarFn) -> Self {
        Self {
            storage,
            alpha4,
            alpha5,
            sigma,
            rho: None,
        }
    }

    pub fn with_rho<R>(mut self, rho: R) -> Self
    where
        R: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.rho = Some(Arc::new(rho));
        self
    }

    /// Reuse an iISS-Lyapunov function as a storage function with
    /// `ρ(ξ) = α₃(ω(ξ))`.
    pub fn from_iiss(cert: &IissCertificate, omega: &ProperIndicator) -> Self {
        let (a3, w) = (cert.alpha3.clone(), omega.clone());
        Self::new(
            cert.storage.clone(),
            cert.alpha1.clone(),
            cert.alpha2.clone(),
            cert.sigma.clone(),
        )
        .with_rho(move |x| a3.eval(w.eval(x)))
    }

    pub fn validate(&self) -> Result<()> {
        require(&self.alpha4, FnClass::KInfinity, "α₄")?;
        require(&self.alpha5, FnClass::KInfinity, "α₅")?;
        require(&self.sigma, FnClass::K, "σ")
    }

    fn rho_at(&self, x: &[f64]) -> f64 {
        self.rho.as_ref().map_or(0.0, |r| r(x))
    }
}

/// `⟨∇W, f⟩ ≤ −ρ(ω) + λ(|u|)` on `C`, `W(g) − W ≤ −ρ(ω) + λ(|u|)` on `D`.
#[derive(Debug, Clone)]
pub struct ZeroInputAsCertificate {
    pub storage: StorageFunction,
    pub lambda: ScalarFn,
    pub rho: ScalarFn,
    /// `W = π ∘ W₀` with `π ∈ K∞`, when the factorization is known.
    pub semi_proper: Option<(ScalarFn, StorageFunction)>,
}

impl ZeroInputAsCertificate {
    pub fn new(storage: StorageFunction, lambda: ScalarFn, rho: ScalarFn) -> Self {
        Self {
            storage,
            lambda,
            rho,
            semi_proper: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(&self.lambda, FnClass::K, "λ")?;
        require(&self.rho, FnClass::PositiveDefinite, "ρ")?;
        if let Some((pi, _)) = &self.semi_proper {
            require(pi, FnClass::KInfinity, "π")?;
        }
        Ok(())
    }
}

/// Which inequality a violation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    LowerBound,
    UpperBound,
    Flow,
    Jump,
    SemiProper,
    ErrorLowerBound,
    ErrorUpperBound,
    ErrorGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub condition: Condition,
    /// State followed by input.
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; negative beyond the tolerance.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub checked: usize,
    /// Samples in neither `C` nor `D`.
    pub skipped: usize,
    /// Samples in a declared kink set.
    pub excluded: usize,
    pub violations: Vec<Violation>,
    /// Smallest `rhs − lhs` over all checked inequalities.
    pub worst_margin: f64,
}

impl ViolationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One inequality `lhs ≤ rhs + tol`.
pub(crate) struct Inequality {
    pub(crate) condition: Condition,
    pub(crate) lhs: f64,
    pub(crate) rhs: f64,
    pub(crate) tol: f64,
}

pub(crate) enum Outcome {
    Checked(Vec<Inequality>),
    Skipped,
    Excluded,
}

fn finite_or_fail(index: usize, x: &[f64], u: &[f64], what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::EvaluationFailure {
            index,
            point: x.iter().chain(u).copied().collect(),
            message: format!("{what} is not finite"),
        })
    }
}

pub(crate) fn run_sampler<F>(sampler: &RegionSampler, per_point: F) -> Result<ViolationReport>
where
    F: Fn(usize, &[f64], &[f64]) -> Result<Outcome> + Sync,
{
    let points = sampler.points();
    let outcomes: Vec<Result<Outcome>> = points
        .par_iter()
        .enumerate()
        .map(|(i, (x, u))| per_point(i, x, u))
        .collect();
    let mut report = ViolationReport {
        checked: 0,
        skipped: 0,
        excluded: 0,
        violations: Vec::new(),
        worst_margin: f64::INFINITY,
    };
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Outcome::Skipped => report.skipped += 1,
            Outcome::Excluded => report.excluded += 1,
            Outcome::Checked(ineqs) => {
                report.checked += 1;
                for q in ineqs {
                    let margin = q.rhs - q.lhs;
                    report.worst_margin = report.worst_margin.min(margin);
                    if margin < -q.tol || margin.is_nan() {
                        let (x, u) = &points[i];
                        report.violations.push(Violation {
                            index: i,
                            condition: q.condition,
                            point: x.iter().chain(u).copied().collect(),
                            lhs: q.lhs,
                            rhs: q.rhs,
                            margin,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

fn sandwich(lower: &ScalarFn, upper: &ScalarFn, v: f64, w: f64) -> [Inequality; 2] {
    let tol = EXACT_TOLERANCE * (1.0 + v.abs());
    [
        Inequality {
            condition: Condition::LowerBound,
            lhs: lower.eval(w),
            rhs: v,
            tol,
        },
        Inequality {
            condition: Condition::UpperBound,
            lhs: v,
            rhs: upper.eval(w),
            tol,
        },
    ]
}

fn check_dims(sys: &HybridSystem, sampler: &RegionSampler) -> Result<()> {
    if sampler.state_box.dim() != sys.state_dim() || sampler.input_box.dim() != sys.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "sampler covers ({}, {}) dimensions, system has ({}, {})",
            sampler.state_box.dim(),
            sampler.input_box.dim(),
            sys.state_dim(),
            sys.input_dim()
        )));
    }
    Ok(())
}

/// Flow and jump inequalities shared by all three certificate kinds.
#[allow(clippy::too_many_arguments)]
fn dynamics_inequalities(
    sys: &HybridSystem,
    storage: &StorageFunction,
    index: usize,
    x: &[f64],
    u: &[f64],
    v: f64,
    flow_rhs: f64,
    jump_rhs: f64,
    out: &mut Vec<Inequality>,
) -> Result<()> {
    let label = classify(sys, x, u);
    if label.flow {
        let f = sys.flow_checked(x, u, index)?;
        let lhs = finite_or_fail(index, x, u, "⟨∇V, f⟩", storage.directional(x, &f))?;
        out.push(Inequality {
            condition: Condition::Flow,
            lhs,
            rhs: flow_rhs,
            tol: storage.directional_tolerance(x, &f),
        });
    }
    if label.jump {
        let g = sys.jump_checked(x, u, index)?;
        let vg = finite_or_fail(index, x, u, "V(g)", storage.eval(&g))?;
        out.push(Inequality {
            condition: Condition::Jump,
            lhs: vg - v,
            rhs: jump_rhs,
            tol: EXACT_TOLERANCE * (1.0 + vg.abs() + v.abs()),
        });
    }
    Ok(())
}

fn needs_gradient_exclusion(sys: &HybridSystem, storage: &StorageFunction, x: &[f64], u: &[f64]) -> bool {
    storage.in_kink_set(x) && sys.in_flow_set(x, u)
}

/// Sample check of an iISS-Lyapunov certificate.
pub fn check_iiss_lyapunov(
    cert: &IissCertificate,
    sys: &HybridSystem,
    omega: &ProperIndicator,
    sampler: &RegionSampler,
) -> Result<ViolationReport> {
    cert.validate()?;
    check_dims(sys, sampler)?;
    run_sampler(sampler, |i, x, u| {
        let label = classify(sys, x, u);
        if !label.flow && !label.jump {
            return Ok(Outcome::Skipped);
        }
        if needs_gradient_exclusion(sys, &cert.storage, x, u) {
            return Ok(Outcome::Excluded);
        }
        let v = finite_or_fail(i, x, u, "V", cert.storage.eval(x))?;
        let w = omega.eval(x);
        let s = cert.sigma.eval(norm(u));
        let mut out: Vec<Inequality> = sandwich(&cert.alpha1, &cert.alpha2, v, w).into();
        dynamics_inequalities(
            sys,
            &cert.storage,
            i,
            x,
            u,
            v,
            -cert.flow_rate(w) + s,
            -cert.alpha3.eval(w) + s,
            &mut out,
        )?;
        Ok(Outcome::Checked(out))
    })
}

/// Sample check of a smooth dissipativity certificate.
pub fn check_dissipativity(
    cert: &DissipativityCertificate,
    sys: &HybridSystem,
    omega: &ProperIndicator,
    sampler: &RegionSampler,
) -> Result<ViolationReport> {
    cert.validate()?;
    check_dims(sys, sampler)?;
    run_sampler(sampler, |i, x, u| {
        let label = classify(sys, x, u);
        if !label.flow && !label.jump {
            return Ok(Outcome::Skipped);
        }
        if needs_gradient_exclusion(sys, &cert.storage, x, u) {
            return Ok(Outcome::Excluded);
        }
        let v = finite_or_fail(i, x, u, "V", cert.storage.eval(x))?;
        let rho = finite_or_fail(i, x, u, "ρ", cert.rho_at(x))?;
        let rhs = -rho + cert.sigma.eval(norm(u));
        let mut out: Vec<Inequality> = sandwich(&cert.alpha4, &cert.alpha5, v, omega.eval(x)).into();
        dynamics_inequalities(sys, &cert.storage, i, x, u, v, rhs, rhs, &mut out)?;
        Ok(Outcome::Checked(out))
    })
}

/// Sample check of the 0-input asymptotic stability dissipation inequalities.
pub fn check_zero_input_as(
    cert: &ZeroInputAsCertificate,
    sys: &HybridSystem,
    omega: &ProperIndicator,
    sampler: &RegionSampler,
) -> Result<ViolationReport> {
    cert.validate()?;
    check_dims(sys, sampler)?;
    run_sampler(sampler, |i, x, u| {
        let label = classify(sys, x, u);
        if !label.flow && !label.jump {
            return Ok(Outcome::Skipped);
        }
        if needs_gradient_exclusion(sys, &cert.storage, x, u) {
            return Ok(Outcome::Excluded);
        }
        let v = finite_or_fail(i, x, u, "W", cert.storage.eval(x))?;
        let rhs = -cert.rho.eval(omega.eval(x)) + cert.lambda.eval(norm(u));
        let mut out = Vec::with_capacity(3);
        if v < -EXACT_TOLERANCE {
            out.push(Inequality {
                condition: Condition::LowerBound,
                lhs: 0.0,
                rhs: v,
                tol: EXACT_TOLERANCE,
            });
        }
        if let Some((pi, w0)) = &cert.semi_proper {
            let composed = pi.eval(w0.eval(x));
            out.push(Inequality {
                condition: Condition::SemiProper,
                lhs: (composed - v).abs(),
                rhs: 0.0,
                tol: 1e-9 * (1.0 + v.abs()),
            });
        }
        dynamics_inequalities(sys, &cert.storage, i, x, u, v, rhs, rhs, &mut out)?;
        Ok(Outcome::Checked(out))
    })
}

/// Margins of an integral estimate along one solution pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub checked: usize,
    /// `min(rhs − lhs)` over the stored samples.
    pub worst_margin: f64,
    pub worst_at: Option<HybridTime>,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.worst_margin >= 0.0
    }
}

/// `α(ω(x(t,j))) ≤ β̃(ω(x(0,0)), t, j) + ‖u_{(t,j)}‖_{γ1,γ2} + ε` at every
/// stored sample.
pub fn check_iiss_estimate(
    result: &SolveResult,
    alpha: &ScalarFn,
    beta: &KllBound,
    gamma1: &ScalarFn,
    gamma2: &ScalarFn,
    omega: &ProperIndicator,
    slack: f64,
) -> Result<EstimateReport> {
    if result.arc.domain() != result.input_used.domain()
        || result.arc.sample_count() != result.input_used.sample_count()
    {
        return Err(Error::InvalidArgument(
            "arc and input must share their hybrid time domain".into(),
        ));
    }
    let energy = result.input_used.energy_profile(gamma1, gamma2);
    let w0 = omega.eval(result.arc.first());
    let mut report = EstimateReport {
        checked: 0,
        worst_margin: f64::INFINITY,
        worst_at: None,
    };
    for ((p, x), e) in result.arc.iter().zip(energy) {
        let lhs = alpha.eval(omega.eval(x));
        let rhs = beta.eval(w0, p.t, p.j as f64) + e + slack;
        let margin = rhs - lhs;
        report.checked += 1;
        if margin < report.worst_margin || margin.is_nan() {
            report.worst_margin = margin;
            report.worst_at = Some(p);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    pub checked: usize,
    /// Runs that left `K` somewhere (the condition is vacuous for them).
    pub vacuous: usize,
    /// `(run index, tail mean of ω)` for runs above tolerance.
    pub failures: Vec<(usize, f64)>,
}

impl DetectabilityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tail-average probe of 0-input detectability relative to `K`.
pub fn check_detectability<K>(
    ensemble: &[SolveResult],
    in_k: K,
    omega: &ProperIndicator,
    tail_fraction: f64,
    tol: f64,
) -> Result<DetectabilityReport>
where
    K: Fn(&[f64]) -> bool,
{
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {tail_fraction} not in (0, 1]"
        )));
    }
    let mut report = DetectabilityReport {
        checked: 0,
        vacuous: 0,
        failures: Vec::new(),
    };
    for (k, run) in ensemble.iter().enumerate() {
        if !run.arc.iter().all(|(_, x)| in_k(x)) {
            report.vacuous += 1;
            continue;
        }
        report.checked += 1;
        let length = run.arc.domain().stats().length;
        let cut = (1.0 - tail_fraction) * length;
        let tail: Vec<f64> = run
            .arc
            .iter()
            .filter(|(p, _)| p.length() >= cut)
            .map(|(_, x)| omega.eval(x))
            .collect();
        let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
        if !(mean <= tol) {
            report.failures.push((k, mean));
        }
    }
    Ok(report)
}

/// Family for `ρ₁` in a fitted envelope, scaled by `1/θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rho1Family {
    /// `ρ₁(w) = w/θ`.
    Linear,
    /// `ρ₁(w) = w^p/θ`.
    Power { p: f64 },
}

/// Family for `ρ₂` in a fitted envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rho2Family {
    Constant,
    /// `ρ₂(r) = 1/(1 + a·r)`.
    Reciprocal {
        a: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeShape {
    pub rho1: Rho1Family,
    pub rho2: Rho2Family,
}

impl Default for EnvelopeShape {
    fn default() -> Self {
        Self {
            rho1: Rho1Family::Linear,
            rho2: Rho2Family::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub theta_min: f64,
    pub theta_cap: f64,
    pub iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            theta_min: 1e-3,
            theta_cap: 1e4,
            iterations: 60,
        }
    }
}

/// A fitted `β̃` and its time-scale parameter `θ`.
#[derive(Debug, Clone)]
pub struct FittedEnvelope {
    pub bound: KllBound,
    pub theta: f64,
    pub shape: EnvelopeShape,
}

fn envelope_for(shape: EnvelopeShape, theta: f64, r_max: f64, tau_max: f64) -> Result<KllBound> {
    let rho1 = match shape.rho1 {
        Rho1Family::Linear => ScalarFn::linear(1.0 / theta),
        Rho1Family::Power { p } => ScalarFn::power(1.0 / theta, p),
    };
    let rho2 = match shape.rho2 {
        Rho2Family::Constant => ScalarFn::constant(1.0),
        Rho2Family::Reciprocal { a } => ScalarFn::reciprocal(a),
    };
    let base = KlBound::from_ode(&rho1, r_max, tau_max, theta / 100.0)?;
    KllBound::new(base, rho2)
}

/// Smallest `θ` in the declared family for which every run of a 0-input
/// ensemble satisfies the integral estimate with `α = id`, zero energy and
/// zero slack. Larger `θ` means slower decay, so the search is a geometric
/// bisection between `theta_min` and `theta_cap`.
pub fn fit_kll_envelope(
    ensemble: &[SolveResult],
    omega: &ProperIndicator,
    shape: EnvelopeShape,
    opts: &FitOptions,
) -> Result<FittedEnvelope> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument("envelope fit needs at least one run".into()));
    }
    if !(opts.theta_min > 0.0 && opts.theta_min < opts.theta_cap) {
        return Err(Error::InvalidArgument("need 0 < theta_min < theta_cap".into()));
    }
    if let Some(k) = ensemble
        .iter()
        .position(|r| r.termination == Termination::SolverFailure)
    {
        return Err(Error::FitFailure(format!("run {k} terminated with a solver failure")));
    }
    let r_max = ensemble
        .iter()
        .map(|r| omega.eval(r.arc.first()))
        .fold(0.0_f64, f64::max);
    let tau_max = ensemble
        .iter()
        .map(|r| r.arc.domain().stats().length)
        .fold(0.0_f64, f64::max);
    let id = ScalarFn::linear(1.0);
    let zero_input_energy = ScalarFn::linear(1.0);

    let passes = |theta: f64| -> Result<bool> {
        let bound = envelope_for(shape, theta, r_max, tau_max)?;
        let ok = ensemble.par_iter().map(|run| {
            check_iiss_estimate(run, &id, &bound, &zero_input_energy, &zero_input_energy, omega, 0.0)
                .map(|r| r.passed())
        });
        let results: Vec<Result<bool>> = ok.collect();
        for r in results {
            if !r? {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let finish = |theta: f64| -> Result<FittedEnvelope> {
        Ok(FittedEnvelope {
            bound: envelope_for(shape, theta, r_max, tau_max)?,
            theta,
            shape,
        })
    };
    if passes(opts.theta_min)? {
        return finish(opts.theta_min);
    }
    if !passes(opts.theta_cap)? {
        return Err(Error::FitFailure(format!(
            "no envelope in the family covers the ensemble up to θ = {}",
            opts.theta_cap
        )));
    }
    let (mut lo, mut hi) = (opts.theta_min, opts.theta_cap);
    for _ in 0..opts.iterations {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    finish(hi)
}
