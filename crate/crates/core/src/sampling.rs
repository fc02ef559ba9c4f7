//! Deterministic low-discrepancy point sets.
//!
//! Everything that samples a region (certificate checkers, standing
//! assumption probes, ball membership for inflated sets) goes through the
//! Halton sequence here, so verdicts are reproducible bit for bit.

use crate::error::{Error, Result};

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131,
];

/// Maximum dimension supported by [`halton`].
pub const MAX_DIM: usize = PRIMES.len();

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f *= inv;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// The `index`-th point of the `dim`-dimensional Halton sequence in `[0,1)^dim`.
///
/// Index 0 is the origin; samplers start at 1.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= MAX_DIM, "halton: dimension {dim} exceeds {MAX_DIM}");
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidArgument(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::InvalidArgument("box requires finite lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The box `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Self {
        Self {
            lo: vec![-r; dim],
            hi: vec![r; dim],
        }
    }

    /// Product of boxes, concatenating coordinates.
    pub fn product(&self, other: &BoxRegion) -> Self {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Map a unit-cube point into the box.
    pub fn map(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (a, b))| a + (b - a) * u)
            .collect()
    }

    /// The `n`-th Halton point of this box (n ≥ 1).
    pub fn point(&self, n: u64) -> Vec<f64> {
        self.map(&halton(n, self.dim()))
    }
}

/// `count` deterministic points of the closed unit ball in `R^dim`; the first
/// point is the centre.
pub fn unit_ball_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(vec![0.0; dim]);
    if dim == 0 {
        return out;
    }
    let mut n = 1u64;
    while out.len() < count {
        let p: Vec<f64> = halton(n, dim).iter().map(|u| 2.0 * u - 1.0).collect();
        n += 1;
        if norm(&p) <= 1.0 {
            out.push(p);
        }
    }
    out
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
