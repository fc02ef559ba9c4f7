//! Proper indicators `ω` measuring distance to an attractor.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::sampling::norm;

/// Description of the set on which an indicator vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Attractor {
    Origin,
    Points {
        points: Vec<Vec<f64>>,
    },
    Ball {
        centre: Vec<f64>,
        radius: f64,
    },
    /// `{x : x_i = 0 for every listed i}`; the remaining coordinates are free.
    Coordinates {
        indices: Vec<usize>,
    },
    Custom {
        label: String,
    },
}

type IndicatorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `ω: state → [0, ∞)`.
#[derive(Clone)]
pub struct ProperIndicator {
    attractor: Attractor,
    f: IndicatorFn,
}

impl fmt::Debug for ProperIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProperIndicator")
            .field("attractor", &self.attractor)
            .finish_non_exhaustive()
    }
}

impl ProperIndicator {
    /// `ω(x) = |x|`.
    pub fn norm() -> Self {
        Self {
            attractor: Attractor::Origin,
            f: Arc::new(norm),
        }
    }

    /// Euclidean distance to a finite point set.
    pub fn distance_to_points(points: Vec<Vec<f64>>) -> Self {
        let pts = points.clone();
        Self {
            attractor: Attractor::Points { points },
            f: Arc::new(move |x| {
                pts.iter()
                    .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min)
            }),
        }
    }

    /// Euclidean distance to the closed ball `centre + radius·B`.
    pub fn distance_to_ball(centre: Vec<f64>, radius: f64) -> Self {
        let c = centre.clone();
        Self {
            attractor: Attractor::Ball { centre, radius },
            f: Arc::new(move |x| {
                let d = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (d - radius).max(0.0)
            }),
        }
    }

    /// Norm of the listed coordinates only.
    pub fn coordinates(indices: Vec<usize>) -> Self {
        let idx = indices.clone();
        Self {
            attractor: Attractor::Coordinates { indices },
            f: Arc::new(move |x| idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()),
        }
    }

    pub fn custom<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            attractor: Attractor::Custom { label: label.into() },
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn attractor(&self) -> &Attractor {
        &self.attractor
    }

    /// Probe the indicator invariants: zero on `on_attractor`, positive on
    /// `off_attractor`, and growing along each ray `k·x` for `k = 1, 2, 4, …`.
    /// Returns the offending points.
    pub fn probe(&self, on_attractor: &[Vec<f64>], off_attractor: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut bad = Vec::new();
        for a in on_attractor {
            if self.eval(a) != 0.0 {
                bad.push(a.clone());
            }
        }
        for x in off_attractor {
            let base = self.eval(x);
            if !(base > 0.0) {
                bad.push(x.clone());
                continue;
            }
            let mut prev = base;
            let mut grew = false;
            for k in 1..=20 {
                let scale = f64::powi(2.0, k);
                let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
                let cur = self.eval(&y);
                if cur < prev {
                    break;
                }
                if cur > 10.0 * base.max(1.0) {
                    grew = true;
                    break;
                }
                prev = cur;
            }
            if !grew && !matches!(self.attractor, Attractor::Coordinates { .. }) {
                bad.push(x.clone());
            }
        }
        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_distance_vanishes_inside() {
        let w = ProperIndicator::distance_to_ball(vec![1.0, 0.0], 0.5);
        assert_eq!(w.eval(&[1.2, 0.1]), 0.0);
        assert!((w.eval(&[3.0, 0.0]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn point_set_distance() {
        let w = ProperIndicator::distance_to_points(vec![vec![0.0], vec![2.0]]);
        assert_eq!(w.eval(&[2.0]), 0.0);
        assert!((w.eval(&[1.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probe_accepts_norm_and_rejects_constant() {
        let off = vec![vec![1.0, 0.0], vec![-0.3, 0.2]];
        assert!(ProperIndicator::norm().probe(&[vec![0.0, 0.0]], &off).is_empty());
        let flat = ProperIndicator::custom("flat", |_| 1.0);
        assert!(!flat.probe(&[vec![0.0, 0.0]], &off).is_empty());
    }

    #[test]
    fn coordinate_indicator_ignores_free_states() {
        let w = ProperIndicator::coordinates(vec![0, 1]);
        assert_eq!(w.eval(&[0.0, 0.0, 0.7]), 0.0);
        assert_eq!(w.eval(&[3.0, 4.0, 9.0]), 5.0);
    }
}
