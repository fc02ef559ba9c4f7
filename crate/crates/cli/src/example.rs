use hybrid_iiss::examples::{
    lookup, reset_integrator, sd_integrator, ExampleName, ResetIntegratorParams, SdIntegratorParams,
};
use hybrid_iiss::sampling::BoxRegion;
use hybrid_iiss::{HybridSystem, ProperIndicator};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::SCHEMA_VERSION;
use crate::{CliError, CliResult};

/// File form of an example: its name and fully resolved parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleArtifact {
    pub schema_version: u32,
    pub example: ExampleName,
    pub params: Value,
}

#[derive(Debug, Clone)]
pub enum Loaded {
    Reset(ResetIntegratorParams),
    Sd(SdIntegratorParams),
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

impl Loaded {
    /// Defaults for `name` with `KEY=VALUE` overrides.
    pub fn from_overrides(name: &str, sets: &[String]) -> CliResult<Self> {
        let kind = lookup(name).map_err(usage)?;
        let mut params = match kind {
            ExampleName::ResetIntegrator => serde_json::to_value(ResetIntegratorParams::default()),
            ExampleName::SdIntegrator => serde_json::to_value(SdIntegratorParams::default()),
        }
        .map_err(usage)?;
        let map = params.as_object_mut().expect("parameter structs serialize to objects");
        let mut touched = Vec::new();
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override {s:?} is not KEY=VALUE")))?;
            let (k, v) = (k.trim(), v.trim());
            if !map.contains_key(k) {
                return Err(CliError::Usage(format!(
                    "unknown parameter {k:?} for {name}; known: {:?}",
                    map.keys().collect::<Vec<_>>()
                )));
            }
            let x: f64 = v
                .parse()
                .map_err(|_| CliError::Usage(format!("parameter {k} needs a number, got {v:?}")))?;
            map.insert(k.to_string(), serde_json::json!(x));
            touched.push(k.to_string());
        }
        if kind == ExampleName::SdIntegrator
            && touched.iter().any(|k| k == "tau_masp")
            && !touched.iter().any(|k| k == "eps")
        {
            let tau = map["tau_masp"].clone();
            map.insert("eps".into(), tau);
        }
        Self::from_artifact(&ExampleArtifact {
            schema_version: SCHEMA_VERSION,
            example: kind,
            params,
        })
    }

    pub fn from_artifact(a: &ExampleArtifact) -> CliResult<Self> {
        if a.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported artifact schema_version {}",
                a.schema_version
            )));
        }
        let loaded = match a.example {
            ExampleName::ResetIntegrator => {
                let p: ResetIntegratorParams = serde_json::from_value(a.params.clone()).map_err(usage)?;
                p.validate().map_err(usage)?;
                Loaded::Reset(p)
            }
            ExampleName::SdIntegrator => {
                let p: SdIntegratorParams = serde_json::from_value(a.params.clone()).map_err(usage)?;
                p.validate().map_err(usage)?;
                Loaded::Sd(p)
            }
        };
        Ok(loaded)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let a: ExampleArtifact =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid example artifact: {e}")))?;
        Self::from_artifact(&a)
    }

    pub fn artifact(&self) -> ExampleArtifact {
        let (example, params) = match self {
            Loaded::Reset(p) => (ExampleName::ResetIntegrator, serde_json::to_value(p)),
            Loaded::Sd(p) => (ExampleName::SdIntegrator, serde_json::to_value(p)),
        };
        ExampleArtifact {
            schema_version: SCHEMA_VERSION,
            example,
            params: params.expect("parameter structs serialize"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loaded::Reset(_) => hybrid_iiss::examples::RESET_INTEGRATOR,
            Loaded::Sd(_) => hybrid_iiss::examples::SD_INTEGRATOR,
        }
    }

    pub fn system(&self) -> CliResult<HybridSystem> {
        Ok(match self {
            Loaded::Reset(p) => reset_integrator(p)?.0,
            Loaded::Sd(p) => sd_integrator(p)?.0,
        })
    }

    pub fn default_x0(&self) -> Vec<f64> {
        match self {
            Loaded::Reset(_) => vec![1.0, -1.0],
            Loaded::Sd(_) => vec![1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn omega(&self) -> ProperIndicator {
        match self {
            Loaded::Reset(_) => ProperIndicator::norm(),
            Loaded::Sd(_) => ProperIndicator::coordinates(vec![0, 1, 2]),
        }
    }

    /// Default half-widths of the state and input sampling boxes.
    pub fn default_radii(&self) -> (f64, f64) {
        match self {
            Loaded::Reset(_) => (5.0, 2.0),
            Loaded::Sd(_) => (3.0, 1.0),
        }
    }

    /// Box over the full state; the sampled-data clock spans `[0, τ_MASP]`.
    pub fn state_box(&self, radius: f64) -> CliResult<BoxRegion> {
        Ok(match self {
            Loaded::Reset(_) => BoxRegion::symmetric(2, radius),
            Loaded::Sd(p) => BoxRegion::new(
                vec![-radius, -radius, -radius, 0.0],
                vec![radius, radius, radius, p.tau_masp],
            )?,
        })
    }

    /// Random initial state with `ω ≤ radius`; sampled-data runs start with
    /// zero error and clock.
    pub fn random_initial(&self, rng: &mut ChaCha8Rng, radius: f64) -> Vec<f64> {
        match self {
            Loaded::Reset(_) => loop {
                let x = vec![rng.gen_range(-radius..=radius), rng.gen_range(-radius..=radius)];
                if x[0].hypot(x[1]) <= radius {
                    return x;
                }
            },
            Loaded::Sd(_) => vec![rng.gen_range(-radius..=radius), 0.0, 0.0, 0.0],
        }
    }
}
