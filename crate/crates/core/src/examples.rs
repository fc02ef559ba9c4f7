//! The two worked systems: a reset integrator under input saturation and a
//! sampled-data loop around `ẋ = sin x + u + w`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certificates::DissipativityCertificate;
use crate::certificates::{FlowDecrease, IissCertificate, StorageFunction, ZeroInputAsCertificate};
use crate::comparison::{FnClass, ScalarFn, DEFAULT_DOMAIN_CAP};
use crate::error::{Error, Result};
use crate::sampled_data::{
    default_young_eps, invert_masp, masp, phi_solve, storage_function, EmulationAssumptionBundle, MaspParams,
    SdStorage, DEFAULT_LAMBDA_HINT, KINK_TOL,
};
use crate::sampling::norm;
use crate::system::{build_sampled_data, Controller, HybridSystem, Plant, SampledDataLayout};

pub const RESET_INTEGRATOR: &str = "reset-integrator";
pub const SD_INTEGRATOR: &str = "sd-integrator";

/// Names accepted by [`lookup`].
pub fn names() -> &'static [&'static str] {
    &[RESET_INTEGRATOR, SD_INTEGRATOR]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleName {
    ResetIntegrator,
    SdIntegrator,
}

pub fn lookup(name: &str) -> Result<ExampleName> {
    match name {
        RESET_INTEGRATOR => Ok(ExampleName::ResetIntegrator),
        SD_INTEGRATOR => Ok(ExampleName::SdIntegrator),
        other => Err(Error::InvalidArgument(format!(
            "unknown example {other:?}; expected one of {:?}",
            names()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResetIntegratorParams {
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub b: f64,
    pub k: f64,
    pub c1: f64,
    pub c2: f64,
    /// `ρ ∈ (0, c₂)` splitting the jump decrease.
    pub rho_split: f64,
}

impl Default for ResetIntegratorParams {
    fn default() -> Self {
        Self {
            lambda_p: -2.0,
            lambda_c: -2.0,
            b: 1.0,
            k: 1.0,
            c1: 1.0,
            c2: 1.0,
            rho_split: 0.5,
        }
    }
}

/// Left-hand sides of the two parameter conditions, each required `≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConditions {
    pub plant: f64,
    pub controller: f64,
}

impl StabilityConditions {
    pub fn passed(&self) -> bool {
        self.plant <= 0.0 && self.controller <= 0.0
    }

    /// Margin left for a strict flow decrease; zero at equality.
    pub fn flow_margin(&self) -> f64 {
        (-self.plant.max(self.controller)).max(0.0)
    }
}

impl ResetIntegratorParams {
    /// Defaults with `ρ = c₂/2` for the given gains.
    pub fn new(lambda_p: f64, lambda_c: f64, b: f64, k: f64, c1: f64, c2: f64) -> Result<Self> {
        let p = Self {
            lambda_p,
            lambda_c,
            b,
            k,
            c1,
            c2,
            rho_split: 0.5 * c2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.lambda_p,
            self.lambda_c,
            self.b,
            self.k,
            self.c1,
            self.c2,
            self.rho_split,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams(
                "reset-integrator parameters must be finite".into(),
            ));
        }
        if !(self.lambda_p < 0.0 && self.lambda_c < 0.0) {
            return Err(Error::InvalidParams("need λ_p < 0 and λ_c < 0".into()));
        }
        if !(self.b > 0.0 && self.k > 0.0 && self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParams("need b, k, c₁, c₂ > 0".into()));
        }
        if !(self.rho_split > 0.0 && self.rho_split < self.c2) {
            return Err(Error::InvalidParams(format!(
                "need 0 < ρ < c₂ = {}, got {}",
                self.c2, self.rho_split
            )));
        }
        Ok(())
    }

    pub fn stability_conditions(&self) -> StabilityConditions {
        StabilityConditions {
            plant: self.c1 * self.lambda_p + self.b * self.c1 + self.k * self.c2,
            controller: self.c2 * self.lambda_c + self.k * self.c2 + self.b * self.c1,
        }
    }

    /// `V(x) = c₁x_p atan(x_p) + c₂x_c atan(x_c)` with its exact gradient.
    pub fn storage(&self) -> StorageFunction {
        let (c1, c2) = (self.c1, self.c2);
        StorageFunction::new(move |x| c1 * x[0] * x[0].atan() + c2 * x[1] * x[1].atan()).with_gradient(move |x| {
            let d = |s: f64| s.atan() + s / (1.0 + s * s);
            vec![c1 * d(x[0]), c2 * d(x[1])]
        })
    }

    /// `σ(s) = c₁(π + 1)s/2`.
    pub fn supply_rate(&self) -> ScalarFn {
        ScalarFn::linear(self.c1 * (PI + 1.0) / 2.0)
    }

    fn jump_decrease(&self) -> ScalarFn {
        let m = self.rho_split.min(self.c2 - self.rho_split);
        ScalarFn::new(
            format!("{m}*(s/√2)atan(s/√2)"),
            FnClass::KInfinity,
            DEFAULT_DOMAIN_CAP,
            move |s| {
                let h = s / SQRT_2;
                m * h * h.atan()
            },
        )
    }
}

/// `atan`-saturated reset integrator with its iISS Lyapunov certificate for
/// `ω = |·|`.
pub fn reset_integrator(p: &ResetIntegratorParams) -> Result<(HybridSystem, IissCertificate)> {
    p.validate()?;
    let ResetIntegratorParams {
        lambda_p,
        lambda_c,
        b,
        k,
        ..
    } = *p;
    let flow = move |x: &[f64], w: &[f64]| {
        vec![
            lambda_p * x[0].atan() + b * x[1].atan() + w[0],
            lambda_c * x[1].atan() + k * x[0].atan(),
        ]
    };
    let jump = |x: &[f64], _: &[f64]| vec![x[0], 0.0];
    let in_c = |x: &[f64], _: &[f64]| x[0] * (x[1] - x[0]) <= 0.0;
    let in_d = |x: &[f64], _: &[f64]| x[0] * (x[1] - x[0]) >= 0.0;
    let sys = HybridSystem::new(RESET_INTEGRATOR, 2, 1, flow, jump, in_c, in_d);

    let lo = p.c1.min(p.c2);
    let hi = p.c1.max(p.c2);
    let alpha1 = ScalarFn::new(
        format!("{lo}*(s/√2)atan(s/√2)"),
        FnClass::KInfinity,
        DEFAULT_DOMAIN_CAP,
        move |s| {
            let h = s / SQRT_2;
            lo * h * h.atan()
        },
    );
    let alpha2 = ScalarFn::new(
        format!("{}*s*atan(s)", 2.0 * hi),
        FnClass::KInfinity,
        DEFAULT_DOMAIN_CAP,
        move |s| 2.0 * hi * s * s.atan(),
    );
    let margin = p.stability_conditions().flow_margin();
    let flow_decrease = if margin > 0.0 {
        FlowDecrease::Custom(ScalarFn::new(
            format!("{margin}*atan(s/√2)^2"),
            FnClass::K,
            DEFAULT_DOMAIN_CAP,
            move |s| {
                let a = (s / SQRT_2).atan();
                margin * a * a
            },
        ))
    } else {
        FlowDecrease::Zero
    };
    let cert = IissCertificate::new(p.storage(), alpha1, alpha2, p.jump_decrease(), p.supply_rate())
        .with_flow_decrease(flow_decrease);
    Ok((sys, cert))
}

/// `h(v) = v·atan(v)/(1 + v²)`.
fn damping(v: f64) -> f64 {
    v * v.atan() / (1.0 + v * v)
}

/// Zero-input certificate: `W = V`, `λ = σ`, and `ρ` the smaller of the
/// flow-side `atan` damping terms and the jump-side decrease.
pub fn reset_zero_input_certificate(p: &ResetIntegratorParams) -> Result<ZeroInputAsCertificate> {
    p.validate()?;
    let m = (-p.c1 * p.lambda_p).min(-p.c2 * p.lambda_c);
    let jump = p.jump_decrease();
    let rho = ScalarFn::new(
        format!("min({m}*min(h(s/√2), h(s)), {})", jump.label()),
        FnClass::PositiveDefinite,
        DEFAULT_DOMAIN_CAP,
        move |s| (m * damping(s / SQRT_2).min(damping(s))).min(jump.eval(s)),
    );
    Ok(ZeroInputAsCertificate::new(p.storage(), p.supply_rate(), rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdIntegratorParams {
    #[serde(rename = "L")]
    pub l: f64,
    pub gamma: f64,
    pub eps: f64,
    pub tau_masp: f64,
}

impl Default for SdIntegratorParams {
    /// `τ` at 90% of the bound, sampled periodically (`ε = τ`).
    fn default() -> Self {
        let (l, gamma) = (3.0, 10.0);
        let tau = 0.9 * masp(&MaspParams { l, gamma }).unwrap_or(f64::NAN);
        Self {
            l,
            gamma,
            eps: tau,
            tau_masp: tau,
        }
    }
}

impl SdIntegratorParams {
    pub fn with_period(tau: f64) -> Self {
        Self {
            eps: tau,
            tau_masp: tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let limit = masp(&MaspParams::new(self.l, self.gamma)?)?;
        if !(self.eps > 0.0 && self.eps <= self.tau_masp && self.tau_masp < limit) {
            return Err(Error::InvalidParams(format!(
                "need 0 < ε ≤ τ < {limit}, got ε = {}, τ = {}",
                self.eps, self.tau_masp
            )));
        }
        Ok(())
    }
}

fn controller_law(y: f64) -> f64 {
    -y / (1.0 + y * y) - y.sin()
}

fn controller_slope(y: f64) -> f64 {
    let q = 1.0 + y * y;
    -(1.0 - y * y) / (q * q) - y.cos()
}

fn sd_parts() -> (Plant, Controller) {
    let plant = Plant {
        state_dim: 1,
        input_dim: 1,
        output_dim: 1,
        disturbance_dim: 1,
        flow: Arc::new(|x, u, w| vec![x[0].sin() + u[0] + w[0]]),
        output: Arc::new(|x| vec![x[0]]),
        output_rate: Some(Arc::new(|_, xdot| vec![xdot[0]])),
    };
    let controller = Controller {
        state_dim: 0,
        input_dim: 1,
        output_dim: 1,
        flow: Arc::new(|_, _| Vec::new()),
        output: Arc::new(|_, y| vec![controller_law(y[0])]),
        output_rate: Some(Arc::new(|_, y, _, ydot| vec![controller_slope(y[0]) * ydot[0]])),
    };
    (plant, controller)
}

/// State layout `(x, e_y, e_u, τ)` of the sampled-data integrator.
pub fn sd_layout() -> SampledDataLayout {
    let (plant, controller) = sd_parts();
    SampledDataLayout::new(&plant, &controller)
}

/// Emulation data `V = |x|`, `W = |e|`, `H = |x|/(1 + x²)`, linear `σ`s.
pub fn sd_bundle(l: f64, gamma: f64) -> EmulationAssumptionBundle {
    let v = StorageFunction::new(|x| x[0].abs())
        .with_gradient(|x| vec![x[0].signum()])
        .with_kink_set(|x| x[0].abs() < KINK_TOL);
    let w = StorageFunction::new(norm)
        .with_gradient(|e| {
            let n = norm(e);
            if n == 0.0 {
                vec![0.0; e.len()]
            } else {
                e.iter().map(|v| v / n).collect()
            }
        })
        .with_kink_set(|e| norm(e) < KINK_TOL);
    EmulationAssumptionBundle {
        v,
        w,
        h: Arc::new(|x| x[0].abs() / (1.0 + x[0] * x[0])),
        alpha_x_lower: ScalarFn::linear(1.0),
        alpha_x_upper: ScalarFn::linear(1.0),
        alpha_e_lower: ScalarFn::linear(1.0),
        alpha_e_upper: ScalarFn::linear(1.0),
        alpha_tilde: ScalarFn::new("0.5s/(1+s^2)", FnClass::PositiveDefinite, DEFAULT_DOMAIN_CAP, |s| {
            0.5 * s / (1.0 + s * s)
        }),
        sigma1: ScalarFn::linear(1.0),
        sigma2: ScalarFn::linear(1.0),
        l,
        gamma,
    }
}

/// Emulated sampled-data loop for `ẋ = sin x + u + w` under
/// `u = −y/(1 + y²) − sin y`, plus its emulation data.
pub fn sd_integrator(p: &SdIntegratorParams) -> Result<(HybridSystem, EmulationAssumptionBundle)> {
    p.validate()?;
    let (plant, controller) = sd_parts();
    let sys = build_sampled_data(&plant, &controller, None, None, p.eps, p.tau_masp)?.with_name(SD_INTEGRATOR);
    Ok((sys, sd_bundle(p.l, p.gamma)))
}

/// `U` for the sampled-data integrator at period `τ`, with `(c, λ)` from
/// [`invert_masp`] and `φ` on `[0, τ]`.
#[derive(Debug, Clone)]
pub struct SdCertificate {
    pub c: f64,
    pub lambda: f64,
    pub young_eps: f64,
    pub storage: SdStorage,
    pub certificate: DissipativityCertificate,
}

pub fn sd_certificate(p: &SdIntegratorParams, bundle: &EmulationAssumptionBundle) -> Result<SdCertificate> {
    p.validate()?;
    let (c, lambda) = invert_masp(p.tau_masp, p.l, p.gamma, DEFAULT_LAMBDA_HINT)?;
    let ext = crate::sampled_data::ExtendedMaspParams::new(c, lambda, p.l, p.gamma)?;
    let phi = phi_solve(&ext, 2000)?;
    let storage = storage_function(bundle.v.clone(), bundle.w.clone(), phi, sd_layout());
    let young_eps = default_young_eps(c);
    let certificate = bundle.dissipativity_certificate(&storage, young_eps);
    Ok(SdCertificate {
        c,
        lambda,
        young_eps,
        storage,
        certificate,
    })
}
