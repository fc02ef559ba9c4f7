//! Comparison functions (classes PD, K, K∞, L) and the bounds built from them.
//!
//! A [`ScalarFn`] is a scalar function on `[0, ∞)` tagged with the class it
//! claims to belong to. Class membership is only ever checked on a grid
//! ([`validate_class`]); a passing report means "pass on grid", nothing more.
//!
//! [`KlBound`] realises the class-KL function `β(r, τ)` obtained as the flow
//! of `dw/dτ = −ρ₁(w)`, and [`KllBound`] the hybrid bound
//! `β̃(r, t, j) = β(r, ρ₂(r)(t + j))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comparison-function class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FnClass {
    /// Positive definite: continuous, zero at zero, positive elsewhere.
    PositiveDefinite,
    /// Class K: positive definite and strictly increasing.
    K,
    /// Class K∞: class K and unbounded.
    KInfinity,
    /// Class L: continuous, nonincreasing, tending to zero.
    L,
}

impl fmt::Display for FnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FnClass::PositiveDefinite => "PD",
            FnClass::K => "K",
            FnClass::KInfinity => "Kinf",
            FnClass::L => "L",
        };
        f.write_str(s)
    }
}

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar function `[0, ∞) → [0, ∞)` with a declared comparison class.
#[derive(Clone)]
pub struct ScalarFn {
    eval: Eval,
    class: FnClass,
    domain_cap: f64,
    label: String,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("label", &self.label)
            .field("class", &self.class)
            .field("domain_cap", &self.domain_cap)
            .finish()
    }
}

/// Default largest argument a parametric family is certified on.
pub const DEFAULT_DOMAIN_CAP: f64 = 1.0e3;

impl ScalarFn {
    pub fn new<F>(label: impl Into<String>, class: FnClass, domain_cap: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(f),
            class,
            domain_cap,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    pub fn class(&self) -> FnClass {
        self.class
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same function, different declared class.
    pub fn with_class(mut self, class: FnClass) -> Self {
        self.class = class;
        self
    }

    pub fn with_domain_cap(mut self, cap: f64) -> Self {
        self.domain_cap = cap;
        self
    }

    /// `s ↦ k·f(s)` with the same class (`k > 0`).
    pub fn scaled(&self, k: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |s| k * inner(s)),
            class: self.class,
            domain_cap: self.domain_cap,
            label: format!("{k}*{}", self.label),
        }
    }

    /// `s ↦ a·s`, class K∞.
    pub fn linear(a: f64) -> Self {
        Self::new(
            format!("linear({a})"),
            FnClass::KInfinity,
            DEFAULT_DOMAIN_CAP,
            move |s| a * s,
        )
    }

    /// `s ↦ a·s^p`, class K∞.
    pub fn power(a: f64, p: f64) -> Self {
        Self::new(
            format!("power({a},{p})"),
            FnClass::KInfinity,
            DEFAULT_DOMAIN_CAP,
            move |s| a * s.powf(p),
        )
    }

    /// `s ↦ a·arctan(s)`, class K (bounded).
    pub fn atan_scaled(a: f64) -> Self {
        Self::new(format!("atan_scaled({a})"), FnClass::K, DEFAULT_DOMAIN_CAP, move |s| {
            a * s.atan()
        })
    }

    /// `s ↦ exp(−a·s)`, class L.
    pub fn exp_decay(a: f64) -> Self {
        Self::new(format!("exp_decay({a})"), FnClass::L, DEFAULT_DOMAIN_CAP, move |s| {
            (-a * s).exp()
        })
    }

    /// `s ↦ 1/(1 + a·s)`, class L.
    pub fn reciprocal(a: f64) -> Self {
        Self::new(format!("reciprocal({a})"), FnClass::L, DEFAULT_DOMAIN_CAP, move |s| {
            1.0 / (1.0 + a * s)
        })
    }

    /// Constant `c > 0`, used as a degenerate class-L factor.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), FnClass::L, DEFAULT_DOMAIN_CAP, move |_| c)
    }

    /// Parse a named parametric family: `linear(a)`, `power(a,p)`,
    /// `atan_scaled(a)`, `exp_decay(a)`, `reciprocal(a)`, `constant(c)`.
    pub fn parse_family(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let open = spec
            .find('(')
            .ok_or_else(|| Error::Parse(format!("expected name(args) in {spec:?}")))?;
        if !spec.ends_with(')') {
            return Err(Error::Parse(format!("missing ')' in {spec:?}")));
        }
        let name = spec[..open].trim();
        let args: Vec<f64> = spec[open + 1..spec.len() - 1]
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number {a:?} in {spec:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "{name} takes {n} argument(s), got {}",
                    args.len()
                )))
            }
        };
        if args.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::Parse(format!("family parameters must be positive: {spec:?}")));
        }
        match name {
            "linear" => arity(1).map(|_| Self::linear(args[0])),
            "power" => arity(2).map(|_| Self::power(args[0], args[1])),
            "atan_scaled" => arity(1).map(|_| Self::atan_scaled(args[0])),
            "exp_decay" => arity(1).map(|_| Self::exp_decay(args[0])),
            "reciprocal" => arity(1).map(|_| Self::reciprocal(args[0])),
            "constant" => arity(1).map(|_| Self::constant(args[0])),
            other => Err(Error::Parse(format!("unknown comparison family {other:?}"))),
        }
    }
}

/// `n` evenly spaced points on `[0, cap]`, including both ends.
pub fn uniform_grid(cap: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| cap * i as f64 / (n - 1) as f64).collect()
}

/// What went wrong at a grid point or adjacent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassViolationKind {
    NonFinite,
    Negative,
    NonzeroAtOrigin,
    NotPositive,
    NotStrictlyIncreasing,
    NotNonincreasing,
    /// Class L: the value at the domain cap exceeds an earlier value.
    CapValueExceeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassViolation {
    pub kind: ClassViolationKind,
    /// Index of the (first) grid point involved.
    pub index: usize,
    pub s: f64,
    pub value: f64,
    /// Second point for pairwise violations.
    pub next: Option<(f64, f64)>,
}

/// Result of a grid-based class check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub class: FnClass,
    pub grid_points: usize,
    pub violations: Vec<ClassViolation>,
    /// Unboundedness (K∞) is not checkable from samples; set when it was
    /// part of the declared class and therefore left unverified.
    pub unboundedness_unchecked: bool,
}

impl ValidationReport {
    /// Pass on the grid.
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the declared class of `f` on `grid`.
///
/// The grid must be sorted ascending, start at 0 and not exceed the
/// function's domain cap.
pub fn validate_class(f: &ScalarFn, grid: &[f64]) -> Result<ValidationReport> {
    validate_as(f, f.class(), grid)
}

/// Check `f` against `class` (which may differ from its declared one).
pub fn validate_as(f: &ScalarFn, class: FnClass, grid: &[f64]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty validation grid".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidArgument("validation grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "validation grid must be strictly ascending".into(),
        ));
    }
    if grid[grid.len() - 1] > f.domain_cap() {
        return Err(Error::InvalidArgument(format!(
            "grid maximum {} exceeds domain cap {} of {}",
            grid[grid.len() - 1],
            f.domain_cap(),
            f.label()
        )));
    }

    let values: Vec<f64> = grid.iter().map(|&s| f.eval(s)).collect();
    let mut violations = Vec::new();
    let point = |kind, i: usize| ClassViolation {
        kind,
        index: i,
        s: grid[i],
        value: values[i],
        next: None,
    };

    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            violations.push(point(ClassViolationKind::NonFinite, i));
        } else if v < 0.0 {
            violations.push(point(ClassViolationKind::Negative, i));
        }
    }

    match class {
        FnClass::PositiveDefinite | FnClass::K | FnClass::KInfinity => {
            if values[0] != 0.0 {
                violations.push(point(ClassViolationKind::NonzeroAtOrigin, 0));
            }
            for (i, v) in values.iter().enumerate().skip(1) {
                if v.is_finite() && *v <= 0.0 {
                    violations.push(point(ClassViolationKind::NotPositive, i));
                }
            }
            if class != FnClass::PositiveDefinite {
                for i in 0..values.len() - 1 {
                    if !(values[i] < values[i + 1]) {
                        violations.push(ClassViolation {
                            next: Some((grid[i + 1], values[i + 1])),
                            ..point(ClassViolationKind::NotStrictlyIncreasing, i)
                        });
                    }
                }
            }
        }
        FnClass::L => {
            for i in 0..values.len() - 1 {
                if !(values[i] >= values[i + 1]) {
                    violations.push(ClassViolation {
                        next: Some((grid[i + 1], values[i + 1])),
                        ..point(ClassViolationKind::NotNonincreasing, i)
                    });
                }
            }
            let at_cap = f.eval(f.domain_cap());
            for (i, v) in values.iter().enumerate() {
                if at_cap > *v {
                    violations.push(ClassViolation {
                        next: Some((f.domain_cap(), at_cap)),
                        ..point(ClassViolationKind::CapValueExceeds, i)
                    });
                }
            }
        }
    }

    Ok(ValidationReport {
        class,
        grid_points: grid.len(),
        violations,
        unboundedness_unchecked: class == FnClass::KInfinity,
    })
}

/// Validate on a default 201-point grid over `[0, min(cap, 100)]`, mapping a
/// failure to [`Error::InvalidCertificate`].
pub fn ensure_class(f: &ScalarFn, name: &str) -> Result<()> {
    let cap = f.domain_cap().min(100.0);
    let report = validate_class(f, &uniform_grid(cap, 201))?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::InvalidCertificate(format!(
            "{name} = {} fails class {} on grid: first violation {:?}",
            f.label(),
            f.class(),
            report.violations[0]
        )))
    }
}

/// Split a positive definite `ρ` into `ρ₁ ∈ K∞` and `ρ₂ ∈ L` with
/// `ρ₁(r)·ρ₂(r) ≤ ρ(r)` at every grid point.
///
/// Construction: `h(r) = min ρ over [r, s_max]` (grid suffix minimum,
/// linearly interpolated), `ρ₁(r) = ½(r/(1+s_max) + h(r))`, and `ρ₂` the
/// running minimum of `min(1, ρ/ρ₁)` over positive grid points, decaying as
/// `ρ₂(s_max)·s_max/r` beyond the grid.
pub fn factorize_pd(rho: &ScalarFn, grid: &[f64]) -> Result<(ScalarFn, ScalarFn)> {
    let report = validate_as(rho, FnClass::PositiveDefinite, grid)?;
    if !report.passed() {
        return Err(Error::InvalidCertificate(format!(
            "{} is not positive definite on the grid: {:?}",
            rho.label(),
            report.violations[0]
        )));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "factorisation needs a positive grid point".into(),
        ));
    }
    let s_max = grid[grid.len() - 1];
    let values: Vec<f64> = grid.iter().map(|&s| rho.eval(s)).collect();

    let mut suffix_min = values.clone();
    for i in (0..suffix_min.len() - 1).rev() {
        suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
    }

    let nodes: Arc<Vec<f64>> = Arc::new(grid.to_vec());
    let h_nodes = Arc::new(suffix_min);
    let rho1_eval = {
        let nodes = nodes.clone();
        let h_nodes = h_nodes.clone();
        move |r: f64| -> f64 {
            let h = if r >= s_max {
                h_nodes[h_nodes.len() - 1]
            } else {
                let k = nodes.partition_point(|&g| g <= r) - 1;
                let frac = (r - nodes[k]) / (nodes[k + 1] - nodes[k]);
                h_nodes[k] + (h_nodes[k + 1] - h_nodes[k]) * frac
            };
            0.5 * (r / (1.0 + s_max) + h)
        }
    };

    let mut running = Vec::with_capacity(grid.len());
    let mut current = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate().skip(1) {
        let r1 = rho1_eval(g);
        let mut q = (values[i] / r1).min(1.0);
        while q * r1 > values[i] {
            q = q.next_down();
        }
        current = current.min(q);
        running.push(current);
    }
    let running = Arc::new(running);
    let rho2_eval = {
        let nodes = nodes.clone();
        let running = running.clone();
        move |r: f64| -> f64 {
            let last = running[running.len() - 1];
            if r > s_max {
                return last * s_max / r;
            }
            let k = nodes.partition_point(|&g| g <= r);
            // k ≥ 1 counts grid points ≤ r; index 0 is the origin, which has no ratio.
            if k <= 1 {
                running[0]
            } else {
                running[k - 2]
            }
        }
    };

    let rho1 = ScalarFn::new(format!("rho1[{}]", rho.label()), FnClass::KInfinity, s_max, rho1_eval);
    let rho2 = ScalarFn::new(format!("rho2[{}]", rho.label()), FnClass::L, s_max, rho2_eval);
    Ok((rho1, rho2))
}

#[inline]
fn rk4_decay(rho1: &ScalarFn, w: f64, h: f64) -> f64 {
    let f = |v: f64| -rho1.eval(v.max(0.0));
    let k1 = f(w);
    let k2 = f(w + 0.5 * h * k1);
    let k3 = f(w + 0.5 * h * k2);
    let k4 = f(w + h * k3);
    (w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0)
}

fn integrate_decay(rho1: &ScalarFn, w0: f64, tau: f64, h: f64) -> f64 {
    if tau <= 0.0 || w0 <= 0.0 {
        return w0.max(0.0);
    }
    let n = (tau / h).ceil().max(1.0) as u64;
    let step = tau / n as f64;
    let mut w = w0;
    for _ in 0..n {
        let next = rk4_decay(rho1, w, step);
        if next >= w || next <= 0.0 {
            return next.clamp(0.0, w);
        }
        w = next;
    }
    w
}

const MAX_TABLE_LEN: usize = 20_000_000;

/// Class-KL bound `β(r, τ)` realised as the flow of `dw/dτ = −ρ₁(w)`.
///
/// One master trajectory is integrated from `r_max` with fixed-step RK4 at
/// the given resolution; `β(r, τ)` is read off it by locating the time at
/// which the trajectory passes `r` and advancing by `τ`, with linear
/// interpolation between stored samples. Because every query shares the
/// same piecewise-linear curve, the semigroup identity holds up to
/// rounding.
#[derive(Clone, Debug)]
pub struct KlBound {
    rho1: ScalarFn,
    resolution: f64,
    r_max: f64,
    tau_max: f64,
    table: Arc<Vec<f64>>,
    /// The master trajectory reached `r_max·1e−13`; below that level values
    /// are held constant rather than integrated further.
    floored: bool,
}

impl KlBound {
    /// Build the bound on `[0, r_max] × [0, tau_max]`.
    pub fn from_ode(rho1: &ScalarFn, r_max: f64, tau_max: f64, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !(r_max >= 0.0) || !(tau_max >= 0.0) || !r_max.is_finite() || !tau_max.is_finite() {
            return Err(Error::InvalidArgument(
                "r_max and tau_max must be finite and nonnegative".into(),
            ));
        }
        if !matches!(rho1.class(), FnClass::K | FnClass::KInfinity) {
            return Err(Error::InvalidArgument(format!(
                "rho1 must be class K∞, {} is declared {}",
                rho1.label(),
                rho1.class()
            )));
        }
        if r_max > 0.0 {
            let cap = r_max.min(rho1.domain_cap());
            let report = validate_class(rho1, &uniform_grid(cap, 101))?;
            if !report.passed() {
                return Err(Error::InvalidArgument(format!(
                    "rho1 fails class check: {:?}",
                    report.violations[0]
                )));
            }
        }

        let floor = r_max * 1e-13;
        let horizon = 2.0 * tau_max + resolution;
        let mut table = vec![r_max];
        let mut w = r_max;
        let mut tau = 0.0;
        while w > floor && tau < horizon {
            let next = rk4_decay(rho1, w, resolution);
            if !next.is_finite() {
                return Err(Error::SolverFailure(format!(
                    "non-finite value while integrating dw/dτ = −ρ₁(w) from {w} (τ = {tau})"
                )));
            }
            if next >= w {
                // ρ₁ underflows relative to w: the trajectory has stalled.
                break;
            }
            table.push(next);
            w = next;
            tau += resolution;
            if table.len() > MAX_TABLE_LEN {
                return Err(Error::SolverFailure(format!(
                    "step underflow: resolution {resolution} too fine for tau_max {tau_max}"
                )));
            }
        }

        let floored = w <= floor;
        Ok(Self {
            rho1: rho1.clone(),
            resolution,
            r_max,
            tau_max,
            table: Arc::new(table),
            floored,
        })
    }

    pub fn rho1(&self) -> &ScalarFn {
        &self.rho1
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Time along the master trajectory at which it passes `r`, if `r` is
    /// inside the table range.
    fn time_of(&self, r: f64) -> Option<f64> {
        let t = &self.table;
        let last = t[t.len() - 1];
        if r > t[0] || r < last {
            return None;
        }
        // Decreasing table: first index whose value is < r.
        let k = t.partition_point(|&w| w >= r);
        if k == 0 {
            return Some(0.0);
        }
        if k >= t.len() {
            return Some((t.len() - 1) as f64 * self.resolution);
        }
        let (hi, lo) = (t[k - 1], t[k]);
        let frac = (hi - r) / (hi - lo);
        Some(((k - 1) as f64 + frac) * self.resolution)
    }

    fn value_at(&self, time: f64) -> f64 {
        let t = &self.table;
        let pos = time / self.resolution;
        let end = (t.len() - 1) as f64;
        if pos >= end {
            let last = t[t.len() - 1];
            if self.floored {
                return last;
            }
            let remaining = time - end * self.resolution;
            return integrate_decay(&self.rho1, last, remaining, self.resolution);
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        t[k] + (t[k + 1] - t[k]) * frac
    }

    /// `β(r, τ)`.
    pub fn flow(&self, r: f64, tau: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if tau <= 0.0 {
            return r;
        }
        match self.time_of(r) {
            Some(s) => self.value_at(s + tau).min(r),
            None if self.floored && r < self.table[self.table.len() - 1] => r,
            None => integrate_decay(&self.rho1, r, tau, self.resolution),
        }
    }
}

/// Hybrid class-KLL bound `β̃(r, t, j) = β(r, ρ₂(r)·(t + j))`.
#[derive(Clone, Debug)]
pub struct KllBound {
    base: KlBound,
    rho2: ScalarFn,
}

impl KllBound {
    pub fn new(base: KlBound, rho2: ScalarFn) -> Result<Self> {
        if rho2.class() != FnClass::L {
            return Err(Error::InvalidArgument(format!(
                "rho2 must be class L, {} is declared {}",
                rho2.label(),
                rho2.class()
            )));
        }
        let cap = rho2.domain_cap().min(base.r_max().max(1.0));
        let report = validate_class(&rho2, &uniform_grid(cap, 101))?;
        if !report.passed() {
            return Err(Error::InvalidArgument(format!(
                "rho2 fails class check: {:?}",
                report.violations[0]
            )));
        }
        Ok(Self { base, rho2 })
    }

    pub fn base(&self) -> &KlBound {
        &self.base
    }

    pub fn rho2(&self) -> &ScalarFn {
        &self.rho2
    }

    pub fn eval(&self, r: f64, t: f64, j: f64) -> f64 {
        self.base.flow(r, self.rho2.eval(r) * (t + j))
    }
}

/// Shorthand for [`KllBound::new`].
pub fn kll_construct(base: KlBound, rho2: ScalarFn) -> Result<KllBound> {
    KllBound::new(base, rho2)
}

/// Shorthand for [`KlBound::from_ode`].
pub fn kl_from_ode(rho1: &ScalarFn, r_max: f64, tau_max: f64, resolution: f64) -> Result<KlBound> {
    KlBound::from_ode(rho1, r_max, tau_max, resolution)
}
