//! Maximum allowable sampling period for emulated sampled-data controllers,
//! the scalar `φ` dynamics behind it, and the storage function
//! `U = V + γφ(τ)W²` of the closed loop.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certificates::{
    run_sampler, Condition, DissipativityCertificate, Inequality, Outcome, RegionSampler, StorageFunction,
    ViolationReport, EXACT_TOLERANCE,
};
use crate::comparison::{ensure_class, FnClass, ScalarFn, DEFAULT_DOMAIN_CAP};
use crate::error::{Error, Result};
use crate::sampling::norm;
use crate::system::{HybridSystem, SampledDataLayout};

/// Relative tolerance for treating the two sides of a case split as equal.
const CASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaspParams {
    pub l: f64,
    pub gamma: f64,
}

impl MaspParams {
    pub fn new(l: f64, gamma: f64) -> Result<Self> {
        let p = Self { l, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite() && self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need L > 0 and γ > 0, got L = {}, γ = {}",
                self.l, self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMaspParams {
    pub c: f64,
    pub lambda: f64,
    pub l: f64,
    pub gamma: f64,
}

impl ExtendedMaspParams {
    pub fn new(c: f64, lambda: f64, l: f64, gamma: f64) -> Result<Self> {
        let p = Self { c, lambda, l, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        MaspParams {
            l: self.l,
            gamma: self.gamma,
        }
        .validate()?;
        if !(self.c > 1.0 && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!("need c > 1, got {}", self.c)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParams(format!("need λ in (0, 1), got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Which branch of the period formula applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaspCase {
    Tan,
    Equal,
    Tanh,
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= CASE_TOL * a.abs().max(b.abs())
}

pub fn masp_case(p: &MaspParams) -> MaspCase {
    if nearly_equal(p.gamma, p.l) {
        MaspCase::Equal
    } else if p.gamma > p.l {
        MaspCase::Tan
    } else {
        MaspCase::Tanh
    }
}

/// `T(γ, L)`: `atan(r)/(Lr)` if `γ > L`, `1/L` if equal, `atanh(r)/(Lr)` if
/// `γ < L`, with `r = √|(γ/L)² − 1|`.
pub fn masp(p: &MaspParams) -> Result<f64> {
    p.validate()?;
    let ratio = p.gamma / p.l;
    let r = (ratio * ratio - 1.0).abs().sqrt();
    Ok(match masp_case(p) {
        MaspCase::Equal => 1.0 / p.l,
        MaspCase::Tan => r.atan() / (p.l * r),
        MaspCase::Tanh => r.atanh() / (p.l * r),
    })
}

pub fn masp_extended_case(p: &ExtendedMaspParams) -> MaspCase {
    let g = p.gamma * p.c.sqrt();
    if nearly_equal(p.l, g) {
        MaspCase::Equal
    } else if p.l < g {
        MaspCase::Tan
    } else {
        MaspCase::Tanh
    }
}

/// `T̃(c, λ, L, γ)`, the time `φ` needs to fall from `1/λ` to `λ`, with
/// `r = √|c(γ/L)² − 1|` so that `r` vanishes exactly on the middle case
/// `L = γ√c`.
pub fn masp_extended(p: &ExtendedMaspParams) -> Result<f64> {
    p.validate()?;
    let ExtendedMaspParams { c, lambda, l, gamma } = *p;
    let u = gamma / l;
    let r = (c * u * u - 1.0).abs().sqrt();
    let x = (1.0 - lambda) / (2.0 * (lambda / (lambda + 1.0)) * (u * (c + 1.0) / 2.0 - 1.0) + 1.0 + lambda);
    Ok(match masp_extended_case(p) {
        MaspCase::Equal => (1.0 - lambda * lambda) / (l * (lambda * lambda + u * (1.0 + c) * lambda + 1.0)),
        MaspCase::Tan => (r * x).atan() / (l * r),
        MaspCase::Tanh => (r * x).atanh() / (l * r),
    })
}

/// `dφ/dτ = −2Lφ − γ(φ² + c)`.
pub fn phi_rhs(p: &ExtendedMaspParams, phi: f64) -> f64 {
    -2.0 * p.l * phi - p.gamma * (phi * phi + p.c)
}

/// Sampled solution of the `φ` dynamics on `[0, T̃]` with monotone cubic
/// interpolation between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTrajectory {
    pub params: ExtendedMaspParams,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Interpolation slopes at the samples.
    slopes: Vec<f64>,
}

/// Integrate `φ` from `1/λ` over `[0, T̃]` with `n_steps` RK4 steps and
/// confirm it stays in `[λ, 1/λ]` within `1e−6/λ`.
pub fn phi_solve(p: &ExtendedMaspParams, n_steps: usize) -> Result<PhiTrajectory> {
    if n_steps < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 steps, got {n_steps}"
        )));
    }
    let horizon = masp_extended(p)?;
    let h = horizon / n_steps as f64;
    let f = |v: f64| phi_rhs(p, v);
    let mut taus = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut phi = 1.0 / p.lambda;
    taus.push(0.0);
    values.push(phi);
    for k in 1..=n_steps {
        let k1 = f(phi);
        let k2 = f(phi + 0.5 * h * k1);
        let k3 = f(phi + 0.5 * h * k2);
        let k4 = f(phi + h * k3);
        phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        taus.push(if k == n_steps { horizon } else { k as f64 * h });
        values.push(phi);
    }
    let tol = 1e-6 / p.lambda;
    let (lo, hi) = (p.lambda - tol, 1.0 / p.lambda + tol);
    if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= lo && **v <= hi)) {
        return Err(Error::LemmaViolation(format!(
            "φ({}) = {v} leaves [{}, {}] for {p:?}",
            taus[k],
            p.lambda,
            1.0 / p.lambda
        )));
    }
    let slopes = monotone_slopes(&taus, &values, &values.iter().map(|v| f(*v)).collect::<Vec<_>>());
    Ok(PhiTrajectory {
        params: *p,
        taus,
        values,
        slopes,
    })
}

/// Hermite slopes limited so the cubic interpolant stays monotone on every
/// interval (Fritsch–Carlson).
fn monotone_slopes(x: &[f64], y: &[f64], exact: &[f64]) -> Vec<f64> {
    let mut m = exact.to_vec();
    for k in 0..x.len() - 1 {
        let delta = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
        if delta == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        if m[k] * delta < 0.0 {
            m[k] = 0.0;
        }
        if m[k + 1] * delta < 0.0 {
            m[k + 1] = 0.0;
        }
        let (a, b) = (m[k] / delta, m[k + 1] / delta);
        let s = a * a + b * b;
        if s > 9.0 {
            let t = 3.0 / s.sqrt();
            m[k] = t * a * delta;
            m[k + 1] = t * b * delta;
        }
    }
    m
}

impl PhiTrajectory {
    pub fn horizon(&self) -> f64 {
        self.taus[self.taus.len() - 1]
    }

    fn locate(&self, tau: f64) -> Result<f64> {
        let end = self.horizon();
        let slack = crate::system::CLOCK_TOL;
        if !(tau >= -slack && tau <= end + slack) {
            return Err(Error::OutOfDomain(format!("τ = {tau} outside [0, {end}]")));
        }
        Ok(tau.clamp(0.0, end))
    }

    /// `φ(τ)` by monotone cubic interpolation.
    pub fn eval(&self, tau: f64) -> Result<f64> {
        let tau = self.locate(tau)?;
        let k = self.taus.partition_point(|t| *t <= tau).clamp(1, self.taus.len() - 1) - 1;
        let (x0, x1) = (self.taus[k], self.taus[k + 1]);
        let h = x1 - x0;
        let s = (tau - x0) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        Ok(h00 * self.values[k] + h10 * h * self.slopes[k] + h01 * self.values[k + 1] + h11 * h * self.slopes[k + 1])
    }

    /// `dφ/dτ` from the differential equation at the interpolated value.
    pub fn derivative(&self, tau: f64) -> Result<f64> {
        Ok(phi_rhs(&self.params, self.eval(tau)?))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,phi\n");
        for (t, v) in self.taus.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    C,
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub comparisons_c: usize,
    pub comparisons_lambda: usize,
    /// `(i, j, axis)`: the step from grid point `(c_i, λ_j)` along `axis`
    /// failed to decrease.
    pub violations: Vec<(usize, usize, Axis)>,
    /// `T̃` at the largest `(c, λ)` of the grid.
    pub corner_value: f64,
    /// `T̃` at the smallest `(c, λ)` of the grid.
    pub origin_value: f64,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.corner_value < self.origin_value
    }
}

/// Strict decrease of `T̃` along both axes of a `(c, λ)` grid.
pub fn monotonicity_probe(cs: &[f64], lambdas: &[f64], l: f64, gamma: f64) -> Result<MonotonicityReport> {
    if cs.is_empty() || lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let value = |c: f64, lam: f64| {
        masp_extended(&ExtendedMaspParams {
            c,
            lambda: lam,
            l,
            gamma,
        })
    };
    let mut table = vec![vec![0.0; lambdas.len()]; cs.len()];
    for (i, &c) in cs.iter().enumerate() {
        for (j, &lam) in lambdas.iter().enumerate() {
            table[i][j] = value(c, lam)?;
        }
    }
    let mut report = MonotonicityReport {
        comparisons_c: 0,
        comparisons_lambda: 0,
        violations: Vec::new(),
        corner_value: table[cs.len() - 1][lambdas.len() - 1],
        origin_value: table[0][0],
    };
    for i in 0..cs.len() {
        for j in 0..lambdas.len() {
            if i + 1 < cs.len() {
                report.comparisons_c += 1;
                if !(table[i + 1][j] < table[i][j]) {
                    report.violations.push((i, j, Axis::C));
                }
            }
            if j + 1 < lambdas.len() {
                report.comparisons_lambda += 1;
                if !(table[i][j + 1] < table[i][j]) {
                    report.violations.push((i, j, Axis::Lambda));
                }
            }
        }
    }
    Ok(report)
}

/// Default `λ` used by [`invert_masp`].
pub const DEFAULT_LAMBDA_HINT: f64 = 0.05;

/// Residual accepted by [`invert_masp`].
pub const INVERSION_TOL: f64 = 1e-9;

fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target).abs() <= 1e-3 * INVERSION_TOL {
            return mid;
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = ((f(lo) - target).abs(), (f(hi) - target).abs());
    if a <= b {
        lo
    } else {
        hi
    }
}

/// One `(c, λ)` with `T̃(c, λ, L, γ) = τ`: `λ` fixed at the hint and `c`
/// found by bisection, falling back to bisection on `λ` at `c = 1 + 1e−3`.
pub fn invert_masp(tau: f64, l: f64, gamma: f64, lambda_hint: f64) -> Result<(f64, f64)> {
    let limit = masp(&MaspParams::new(l, gamma)?)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("τ must be positive, got {tau}")));
    }
    if !(tau < limit) {
        return Err(Error::NoSolution(format!(
            "τ = {tau} is not below the maximum allowable sampling period {limit}"
        )));
    }
    if !(lambda_hint > 0.0 && lambda_hint < 1.0) {
        return Err(Error::InvalidParams(format!(
            "λ hint must lie in (0, 1), got {lambda_hint}"
        )));
    }
    let value = |c: f64, lam: f64| {
        masp_extended(&ExtendedMaspParams {
            c,
            lambda: lam,
            l,
            gamma,
        })
        .unwrap_or(f64::NAN)
    };

    let c_lo = 1.0 + 1e-12;
    if value(c_lo, lambda_hint) > tau {
        let mut c_hi = 2.0;
        while value(c_hi, lambda_hint) >= tau {
            c_hi *= 2.0;
            if !c_hi.is_finite() {
                return Err(Error::NoSolution(format!("no c brackets τ = {tau}")));
            }
        }
        let c = bisect_decreasing(|c| value(c, lambda_hint), c_lo, c_hi, tau);
        if (value(c, lambda_hint) - tau).abs() <= INVERSION_TOL {
            return Ok((c, lambda_hint));
        }
    }

    let c = 1.0 + 1e-3;
    let (lam_lo, lam_hi) = (1e-15, 1.0 - 1e-15);
    if !(value(c, lam_lo) > tau) {
        return Err(Error::NoSolution(format!("no (c, λ) reproduces τ = {tau}")));
    }
    let lam = bisect_decreasing(|lam| value(c, lam), lam_lo, lam_hi, tau);
    let residual = (value(c, lam) - tau).abs();
    if residual <= INVERSION_TOL {
        Ok((c, lam))
    } else {
        Err(Error::NoSolution(format!(
            "inversion residual {residual} exceeds {INVERSION_TOL}"
        )))
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `U(x, e, τ) = V(x) + γφ(τ)W(e)²` on the sampled-data state.
#[derive(Clone)]
pub struct SdStorage {
    v: StorageFunction,
    w: StorageFunction,
    gamma: f64,
    phi: Arc<PhiTrajectory>,
    layout: SampledDataLayout,
}

impl std::fmt::Debug for SdStorage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdStorage")
            .field("gamma", &self.gamma)
            .field("params", &self.phi.params)
            .field("layout", &self.layout)
            .finish()
    }
}

/// Assemble `U` from `V`, `W` and a `φ` trajectory.
pub fn storage_function(
    v: StorageFunction,
    w: StorageFunction,
    phi: PhiTrajectory,
    layout: SampledDataLayout,
) -> SdStorage {
    SdStorage {
        v,
        w,
        gamma: phi.params.gamma,
        phi: Arc::new(phi),
        layout,
    }
}

impl SdStorage {
    pub fn phi(&self) -> &PhiTrajectory {
        &self.phi
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        let l = &self.layout;
        let w = self.w.eval(l.e(xi));
        Ok(self.v.eval(l.x(xi)) + self.gamma * self.phi.eval(l.tau(xi))? * w * w)
    }

    /// `∇U = (∇V, 2γφW∇W, γφ̇W²)`.
    pub fn gradient(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let l = &self.layout;
        let (x, e, tau) = (l.x(xi), l.e(xi), l.tau(xi));
        let phi = self.phi.eval(tau)?;
        let phi_dot = self.phi.derivative(tau)?;
        let w = self.w.eval(e);
        let mut g = self.v.gradient(x);
        g.extend(self.w.gradient(e).iter().map(|d| 2.0 * self.gamma * phi * w * d));
        g.push(self.gamma * phi_dot * w * w);
        Ok(g)
    }

    /// A [`StorageFunction`] over the full state. Out-of-range clocks
    /// evaluate to NaN so that checkers report them.
    pub fn to_storage(&self) -> StorageFunction {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        StorageFunction::new(move |xi| a.eval(xi).unwrap_or(f64::NAN))
            .with_gradient(move |xi| b.gradient(xi).unwrap_or_else(|_| vec![f64::NAN; xi.len()]))
            .with_kink_set(move |xi| c.v.in_kink_set(c.layout.x(xi)) || c.w.in_kink_set(c.layout.e(xi)))
    }
}

/// The emulation assumptions on `V`, `W`, `H`, `L` and `γ`.
#[derive(Clone)]
pub struct EmulationAssumptionBundle {
    pub v: StorageFunction,
    pub w: StorageFunction,
    pub h: ValueFn,
    pub alpha_x_lower: ScalarFn,
    pub alpha_x_upper: ScalarFn,
    pub alpha_e_lower: ScalarFn,
    pub alpha_e_upper: ScalarFn,
    pub alpha_tilde: ScalarFn,
    pub sigma1: ScalarFn,
    pub sigma2: ScalarFn,
    pub l: f64,
    pub gamma: f64,
}

impl std::fmt::Debug for EmulationAssumptionBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmulationAssumptionBundle")
            .field("l", &self.l)
            .field("gamma", &self.gamma)
            .field("alpha_tilde", &self.alpha_tilde)
            .field("sigma1", &self.sigma1)
            .field("sigma2", &self.sigma2)
            .finish_non_exhaustive()
    }
}

impl EmulationAssumptionBundle {
    pub fn validate(&self) -> Result<()> {
        for (f, class, name) in [
            (&self.alpha_x_lower, FnClass::KInfinity, "lower α_x"),
            (&self.alpha_x_upper, FnClass::KInfinity, "upper α_x"),
            (&self.alpha_e_lower, FnClass::KInfinity, "lower α_e"),
            (&self.alpha_e_upper, FnClass::KInfinity, "upper α_e"),
        ] {
            if f.class() != class {
                return Err(Error::InvalidCertificate(format!("{name} must be declared K∞")));
            }
            ensure_class(f, name)?;
        }
        ensure_class(&self.alpha_tilde, "α̃")?;
        for (f, name) in [(&self.sigma1, "σ₁"), (&self.sigma2, "σ₂")] {
            if !matches!(f.class(), FnClass::K | FnClass::KInfinity) {
                return Err(Error::InvalidCertificate(format!("{name} must be class K")));
            }
            ensure_class(f, name)?;
        }
        MaspParams::new(self.l, self.gamma)?;
        Ok(())
    }

    pub fn masp(&self) -> Result<f64> {
        masp(&MaspParams::new(self.l, self.gamma)?)
    }

    /// Supply rate `σ(s) = σ₁(s) + σ₂(s)²/(λ²ε)` of the closed loop.
    pub fn supply_rate(&self, lambda: f64, young_eps: f64) -> ScalarFn {
        let (s1, s2) = (self.sigma1.clone(), self.sigma2.clone());
        let k = 1.0 / (lambda * lambda * young_eps);
        ScalarFn::new(
            format!("{}+{k}*({})^2", s1.label(), s2.label()),
            FnClass::K,
            DEFAULT_DOMAIN_CAP,
            move |s| {
                let b = s2.eval(s);
                s1.eval(s) + k * b * b
            },
        )
    }

    /// Storage function `U` for a `φ` trajectory, packaged as a
    /// dissipativity certificate with `ρ ≡ 0`, the sandwich bounds
    /// expressed in `|(x, e)|`.
    pub fn dissipativity_certificate(&self, storage: &SdStorage, young_eps: f64) -> DissipativityCertificate {
        let lambda = storage.phi.params.lambda;
        let gamma = self.gamma;
        let (xl, el) = (self.alpha_x_lower.clone(), self.alpha_e_lower.clone());
        let (xu, eu) = (self.alpha_x_upper.clone(), self.alpha_e_upper.clone());
        let lower = ScalarFn::new("U lower", FnClass::KInfinity, DEFAULT_DOMAIN_CAP, move |s| {
            let half = s / std::f64::consts::SQRT_2;
            let e = el.eval(half);
            xl.eval(half).min(gamma * lambda * e * e)
        });
        let upper = ScalarFn::new("U upper", FnClass::KInfinity, DEFAULT_DOMAIN_CAP, move |s| {
            let e = eu.eval(s);
            xu.eval(s) + gamma / lambda * e * e
        });
        DissipativityCertificate::new(storage.to_storage(), lower, upper, self.supply_rate(lambda, young_eps))
    }
}

/// Young's-inequality constant used by default: `ε = (c − 1)/2`.
pub fn default_young_eps(c: f64) -> f64 {
    0.5 * (c - 1.0)
}

/// Kink tolerance for locally Lipschitz bundle functions.
pub const KINK_TOL: f64 = 1e-8;

/// Sample check of the four emulation inequalities. The sampler covers
/// `(x, e)` and `w`; the clock is irrelevant to the flows and is set to 0.
pub fn check_assumption_bundle(
    b: &EmulationAssumptionBundle,
    sys: &HybridSystem,
    layout: &SampledDataLayout,
    sampler: &RegionSampler,
) -> Result<ViolationReport> {
    b.validate()?;
    let (nx, ne) = (layout.x_dim(), layout.e_dim());
    if sampler.state_box.dim() != nx + ne || sampler.input_box.dim() != sys.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "sampler must cover (x, e) in R^{} and w in R^{}",
            nx + ne,
            sys.input_dim()
        )));
    }
    run_sampler(sampler, |i, xe, w| {
        let (x, e) = xe.split_at(nx);
        if b.v.in_kink_set(x) || b.w.in_kink_set(e) {
            return Ok(Outcome::Excluded);
        }
        let mut xi = xe.to_vec();
        xi.push(0.0);
        let full = sys.flow_checked(&xi, w, i)?;
        let (fx, ge) = (&full[..nx], &full[nx..nx + ne]);
        let v = b.v.eval(x);
        let we = b.w.eval(e);
        let h = (b.h)(x);
        let (nxv, nev, nw) = (norm(x), norm(e), norm(w));
        let tol = |s: f64| EXACT_TOLERANCE * (1.0 + s.abs());
        let dv = b.v.directional(x, fx);
        let dw = b.w.directional(e, ge);
        for (what, val) in [("V", v), ("W", we), ("H", h), ("⟨∇V, f⟩", dv), ("⟨∂W/∂e, g⟩", dw)] {
            if !val.is_finite() {
                return Err(Error::EvaluationFailure {
                    index: i,
                    point: xe.iter().chain(w).copied().collect(),
                    message: format!("{what} is not finite"),
                });
            }
        }
        let flow_rhs =
            -b.alpha_tilde.eval(nxv) - b.alpha_tilde.eval(we) - h * h + b.gamma * b.gamma * we * we + b.sigma1.eval(nw);
        let growth_rhs = b.l * we + h + b.sigma2.eval(nw);
        Ok(Outcome::Checked(vec![
            Inequality {
                condition: Condition::LowerBound,
                lhs: b.alpha_x_lower.eval(nxv),
                rhs: v,
                tol: tol(v),
            },
            Inequality {
                condition: Condition::UpperBound,
                lhs: v,
                rhs: b.alpha_x_upper.eval(nxv),
                tol: tol(v),
            },
            Inequality {
                condition: Condition::Flow,
                lhs: dv,
                rhs: flow_rhs,
                tol: b.v.directional_tolerance(x, fx),
            },
            Inequality {
                condition: Condition::ErrorLowerBound,
                lhs: b.alpha_e_lower.eval(nev),
                rhs: we,
                tol: tol(we),
            },
            Inequality {
                condition: Condition::ErrorUpperBound,
                lhs: we,
                rhs: b.alpha_e_upper.eval(nev),
                tol: tol(we),
            },
            Inequality {
                condition: Condition::ErrorGrowth,
                lhs: dw,
                rhs: growth_rhs,
                tol: b.w.directional_tolerance(e, ge),
            },
        ]))
    })
}
