//! Hybrid time domains and signals on them.
//!
//! A hybrid signal is stored as one [`Segment`] per jump index `j`, each an
//! ordered list of `(t, value)` samples spanning `[t_j, t_{j+1}]`. Consecutive
//! segments share their boundary time; the last sample of segment `j` is the
//! jump point `(t_{j+1}, j)` and the first sample of segment `j+1` is the
//! post-jump value.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::comparison::ScalarFn;
use crate::error::{Error, Result};
use crate::sampling::norm;

/// Slack used when deciding whether a continuous time lies in an interval.
const TIME_TOL: f64 = 1e-12;

/// A point `(t, j)` of hybrid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

impl HybridTime {
    pub fn new(t: f64, j: usize) -> Self {
        Self { t, j }
    }

    /// `t + j`.
    pub fn length(&self) -> f64 {
        self.t + self.j as f64
    }
}

/// The natural order on hybrid time: `(t, j) ⪯ (t', j')` iff `t + j ≤ t' + j'`.
pub fn hybrid_leq(a: HybridTime, b: HybridTime) -> bool {
    a.length() <= b.length()
}

/// Strict version of [`hybrid_leq`].
pub fn hybrid_lt(a: HybridTime, b: HybridTime) -> bool {
    a.length() < b.length()
}

/// `[start, end] × {j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub j: usize,
}

/// `(sup_t, sup_j, length)` of a compact hybrid time domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub sup_t: f64,
    pub sup_j: usize,
    pub length: f64,
}

/// A compact hybrid time domain `⋃_j [t_j, t_{j+1}] × {j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTimeDomain {
    intervals: Vec<Interval>,
}

impl HybridTimeDomain {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidArgument("hybrid time domain needs an interval".into()));
        }
        if intervals[0].start != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "hybrid time domain must start at t = 0, got {}",
                intervals[0].start
            )));
        }
        for (k, iv) in intervals.iter().enumerate() {
            if iv.j != k {
                return Err(Error::InvalidArgument(format!(
                    "interval {k} carries jump index {}",
                    iv.j
                )));
            }
            if !(iv.start <= iv.end) || !iv.end.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "interval {k} has start {} after end {}",
                    iv.start, iv.end
                )));
            }
            if k > 0 && intervals[k - 1].end != iv.start {
                return Err(Error::InvalidArgument(format!(
                    "interval {k} starts at {} but interval {} ends at {}",
                    iv.start,
                    k - 1,
                    intervals[k - 1].end
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn stats(&self) -> DomainStats {
        let last = self.intervals[self.intervals.len() - 1];
        DomainStats {
            sup_t: last.end,
            sup_j: last.j,
            length: last.end + last.j as f64,
        }
    }

    pub fn contains(&self, p: HybridTime) -> bool {
        self.intervals
            .get(p.j)
            .is_some_and(|iv| p.t >= iv.start - TIME_TOL && p.t <= iv.end + TIME_TOL)
    }

    /// `i(s)`: the largest `j` with `(s, j)` in the domain.
    pub fn max_index_at(&self, s: f64) -> Option<usize> {
        self.intervals
            .iter()
            .rev()
            .find(|iv| s >= iv.start - TIME_TOL && s <= iv.end + TIME_TOL)
            .map(|iv| iv.j)
    }

    /// `Γ`: the jump points `(t_{j+1}, j)`.
    pub fn jump_points(&self) -> Vec<HybridTime> {
        self.intervals
            .windows(2)
            .map(|w| HybridTime::new(w[0].end, w[0].j))
            .collect()
    }

    /// The part of the domain with `t + j ≤ horizon` (empty result impossible
    /// since `(0, 0)` always survives).
    pub fn truncate(&self, horizon: f64) -> Self {
        let mut out = Vec::new();
        for iv in &self.intervals {
            let cut = horizon - iv.j as f64;
            if cut < iv.start {
                break;
            }
            out.push(Interval {
                end: iv.end.min(cut),
                ..*iv
            });
            if cut < iv.end {
                break;
            }
        }
        Self { intervals: out }
    }
}

/// Free-function form of [`HybridTimeDomain::stats`].
pub fn domain_stats(domain: &HybridTimeDomain) -> DomainStats {
    domain.stats()
}

/// One stored sample of a hybrid signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub value: Vec<f64>,
}

/// Samples belonging to one jump index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub j: usize,
    pub samples: Vec<Sample>,
}

impl Segment {
    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    fn value_at(&self, t: f64) -> Vec<f64> {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0].value.clone();
        }
        if t >= s[s.len() - 1].t {
            return s[s.len() - 1].value.clone();
        }
        let k = s.partition_point(|p| p.t <= t);
        let (a, b) = (&s[k - 1], &s[k]);
        let frac = (t - a.t) / (b.t - a.t);
        a.value.iter().zip(&b.value).map(|(x, y)| x + (y - x) * frac).collect()
    }
}

/// A hybrid arc or hybrid input sampled on its hybrid time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSignal {
    dim: usize,
    segments: Vec<Segment>,
    domain: HybridTimeDomain,
}

/// State trajectory.
pub type HybridArc = HybridSignal;
/// Input signal.
pub type HybridInput = HybridSignal;

impl HybridSignal {
    pub fn from_segments(dim: usize, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("hybrid signal needs a segment".into()));
        }
        let mut intervals = Vec::with_capacity(segments.len());
        for (k, seg) in segments.iter().enumerate() {
            if seg.j != k {
                return Err(Error::InvalidArgument(format!("segment {k} has jump index {}", seg.j)));
            }
            if seg.samples.is_empty() {
                return Err(Error::InvalidArgument(format!("segment {k} has no samples")));
            }
            if seg.samples.windows(2).any(|w| !(w[0].t <= w[1].t)) {
                return Err(Error::InvalidArgument(format!("segment {k} sample times decrease")));
            }
            if let Some(bad) = seg.samples.iter().find(|s| s.value.len() != dim) {
                return Err(Error::InvalidArgument(format!(
                    "segment {k} holds a value of length {} (dimension {dim})",
                    bad.value.len()
                )));
            }
            intervals.push(Interval {
                start: seg.start(),
                end: seg.end(),
                j: k,
            });
        }
        let domain = HybridTimeDomain::new(intervals)?;
        Ok(Self { dim, segments, domain })
    }

    /// Signal with a single flow interval.
    pub fn from_flow(dim: usize, samples: Vec<Sample>) -> Result<Self> {
        Self::from_segments(dim, vec![Segment { j: 0, samples }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn domain(&self) -> &HybridTimeDomain {
        &self.domain
    }

    pub fn sample_count(&self) -> usize {
        self.segments.iter().map(|s| s.samples.len()).sum()
    }

    /// All samples in hybrid-time order.
    pub fn iter(&self) -> impl Iterator<Item = (HybridTime, &[f64])> + '_ {
        self.segments.iter().flat_map(|seg| {
            seg.samples
                .iter()
                .map(move |s| (HybridTime::new(s.t, seg.j), s.value.as_slice()))
        })
    }

    pub fn first(&self) -> &[f64] {
        &self.segments[0].samples[0].value
    }

    pub fn last(&self) -> (HybridTime, &[f64]) {
        let seg = &self.segments[self.segments.len() - 1];
        let s = &seg.samples[seg.samples.len() - 1];
        (HybridTime::new(s.t, seg.j), &s.value)
    }

    fn ensure_contains(&self, p: HybridTime) -> Result<()> {
        if self.domain.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfDomain(format!(
                "({}, {}) is not in the signal's hybrid time domain",
                p.t, p.j
            )))
        }
    }

    /// Value at `(t, j)`, linearly interpolated within the flow interval.
    pub fn value_at(&self, p: HybridTime) -> Result<Vec<f64>> {
        self.ensure_contains(p)?;
        Ok(self.segments[p.j].value_at(p.t))
    }

    /// Same domain, values mapped sample by sample.
    pub fn map<F>(&self, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(HybridTime, &[f64]) -> Vec<f64>,
    {
        let segments = self
            .segments
            .iter()
            .map(|seg| Segment {
                j: seg.j,
                samples: seg
                    .samples
                    .iter()
                    .map(|s| Sample {
                        t: s.t,
                        value: f(HybridTime::new(s.t, seg.j), &s.value),
                    })
                    .collect(),
            })
            .collect();
        Self::from_segments(dim, segments)
    }

    /// `‖v_{(t,j)}‖_∞`: the largest norm over samples up to `upto`, including
    /// the interpolated value at `upto` itself. Jump points and flow samples
    /// both contribute; on samples the essential supremum is a plain maximum.
    pub fn sup_norm(&self, upto: HybridTime) -> Result<f64> {
        self.ensure_contains(upto)?;
        let mut best = norm(&self.segments[upto.j].value_at(upto.t));
        for seg in &self.segments[..=upto.j] {
            for s in &seg.samples {
                if seg.j < upto.j || s.t <= upto.t {
                    best = best.max(norm(&s.value));
                }
            }
        }
        Ok(best)
    }

    /// Value of the branch `i(s)` (largest index at time `s`), capped at `cap`.
    fn branch_start_value(&self, s: f64, cap: usize) -> &[f64] {
        let b = self.domain.max_index_at(s).unwrap_or(cap).min(cap);
        &self.segments[b].samples[0].value
    }

    /// Trapezoid integral of `γ1(|u|)` over all of segment `k`, with the end
    /// node taken from branch `min(i(t_{k+1}), cap)`.
    fn segment_integral(&self, k: usize, gamma1: &ScalarFn, cap: usize) -> f64 {
        let seg = &self.segments[k];
        let s = &seg.samples;
        if s.len() < 2 {
            return 0.0;
        }
        let end_value = if k < cap {
            gamma1.eval(norm(self.branch_start_value(seg.end(), cap)))
        } else {
            gamma1.eval(norm(&s[s.len() - 1].value))
        };
        let mut total = 0.0;
        let mut prev = gamma1.eval(norm(&s[0].value));
        for i in 1..s.len() {
            let cur = if i == s.len() - 1 {
                end_value
            } else {
                gamma1.eval(norm(&s[i].value))
            };
            total += 0.5 * (prev + cur) * (s[i].t - s[i - 1].t);
            prev = cur;
        }
        total
    }

    /// `‖u_{(t,j)}‖_{γ1,γ2}`: `∫₀ᵗ γ1(|u(s, i(s))|) ds` by the trapezoid rule
    /// over stored samples plus `Σ γ2(|u(t', j')|)` over jump points
    /// `(t', j') ≺ (t, j)`.
    pub fn energy_norm(&self, gamma1: &ScalarFn, gamma2: &ScalarFn, upto: HybridTime) -> Result<f64> {
        self.ensure_contains(upto)?;
        let mut total = 0.0;
        for k in 0..upto.j {
            total += self.segment_integral(k, gamma1, upto.j);
            let seg = &self.segments[k];
            total += gamma2.eval(norm(&seg.samples[seg.samples.len() - 1].value));
        }
        // Partial integral over segment j up to upto.t.
        let s = &self.segments[upto.j].samples;
        let mut prev_t = s[0].t;
        let mut prev = gamma1.eval(norm(&s[0].value));
        for sample in &s[1..] {
            if sample.t >= upto.t {
                let end = self.segments[upto.j].value_at(upto.t);
                let cur = gamma1.eval(norm(&end));
                total += 0.5 * (prev + cur) * (upto.t - prev_t).max(0.0);
                return Ok(total);
            }
            let cur = gamma1.eval(norm(&sample.value));
            total += 0.5 * (prev + cur) * (sample.t - prev_t);
            prev = cur;
            prev_t = sample.t;
        }
        Ok(total)
    }

    /// [`energy_norm`](Self::energy_norm) at every stored sample, in
    /// [`iter`](Self::iter) order, computed in one pass.
    pub fn energy_profile(&self, gamma1: &ScalarFn, gamma2: &ScalarFn) -> Vec<f64> {
        let nseg = self.segments.len();
        let full: Vec<f64> = (0..nseg).map(|k| self.segment_integral(k, gamma1, nseg - 1)).collect();
        let mut out = Vec::with_capacity(self.sample_count());
        let mut prefix = 0.0;
        let mut jumps = 0.0;
        let mut last_positive: Option<usize> = None;
        for (k, seg) in self.segments.iter().enumerate() {
            let positive = seg.end() > seg.start();
            let mut base = prefix + jumps;
            if !positive {
                // Inside an instantaneous jump chain the last flowing segment
                // ends on branch k rather than on the final branch of the chain.
                if let Some(p) = last_positive {
                    if self.segments[p].end() == seg.start() && p < k {
                        base += self.segment_integral(p, gamma1, k) - full[p];
                    }
                }
            }
            let s = &seg.samples;
            let mut partial = 0.0;
            let mut prev = gamma1.eval(norm(&s[0].value));
            out.push(base);
            for i in 1..s.len() {
                let cur = gamma1.eval(norm(&s[i].value));
                partial += 0.5 * (prev + cur) * (s[i].t - s[i - 1].t);
                prev = cur;
                out.push(base + partial);
            }
            prefix += full[k];
            jumps += gamma2.eval(norm(&s[s.len() - 1].value));
            if positive {
                last_positive = Some(k);
            }
        }
        out
    }

    /// `u_T`: equal to `u` where `t + j ≤ T`, zero elsewhere, on the same
    /// domain. A sample is inserted at the cut time so the kept part is
    /// represented exactly.
    pub fn truncate(&self, horizon: f64) -> Self {
        let zero = vec![0.0; self.dim];
        let segments = self
            .segments
            .iter()
            .map(|seg| {
                let cut = horizon - seg.j as f64;
                let mut samples = Vec::with_capacity(seg.samples.len() + 1);
                for (i, s) in seg.samples.iter().enumerate() {
                    if i > 0 {
                        let prev = &seg.samples[i - 1];
                        if prev.t < cut && cut < s.t {
                            samples.push(Sample {
                                t: cut,
                                value: seg.value_at(cut),
                            });
                        }
                    }
                    let keep = s.t + seg.j as f64 <= horizon;
                    samples.push(Sample {
                        t: s.t,
                        value: if keep { s.value.clone() } else { zero.clone() },
                    });
                }
                Segment { j: seg.j, samples }
            })
            .collect();
        Self {
            dim: self.dim,
            segments,
            domain: self.domain.clone(),
        }
    }

    /// Membership in the extended `L_{γ1,γ2}` space: every truncation has a
    /// finite energy everywhere on the domain, strictly below `bound` if one
    /// is given. Energies of truncations are dominated by the full energy at
    /// the end of the domain, which is what is evaluated.
    pub fn in_extended_space(&self, gamma1: &ScalarFn, gamma2: &ScalarFn, bound: Option<f64>) -> bool {
        let profile = self.energy_profile(gamma1, gamma2);
        profile.iter().all(|e| e.is_finite() && bound.is_none_or(|r| *e < r))
    }

    /// CSV with columns `t, j, x_0..x_{n-1}`; a jump shows up as two
    /// consecutive rows with equal `t` and indices `j`, `j+1`.
    pub fn to_csv(&self, prefix: &str) -> String {
        let mut out = String::from("t,j");
        for i in 0..self.dim {
            let _ = write!(out, ",{prefix}_{i}");
        }
        out.push('\n');
        for (p, v) in self.iter() {
            let _ = write!(out, "{},{}", p.t, p.j);
            for x in v {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" || cols[1] != "j" {
            return Err(Error::Parse("CSV header must start with t,j".into()));
        }
        let dim = cols.len() - 2;
        let mut segments: Vec<Segment> = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse(format!("row {} has {} fields", n + 1, fields.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {s:?}: {e}", n + 1)))
            };
            let t = num(fields[0])?;
            let j: usize = fields[1]
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: bad j: {e}", n + 1)))?;
            let value = fields[2..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            if j == segments.len() {
                segments.push(Segment { j, samples: Vec::new() });
            } else if j + 1 != segments.len() {
                return Err(Error::Parse(format!("row {}: jump index {j} out of order", n + 1)));
            }
            segments[j].samples.push(Sample { t, value });
        }
        Self::from_segments(dim, segments)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = SignalDoc {
            dim: self.dim,
            intervals: self
                .segments
                .iter()
                .map(|seg| IntervalDoc {
                    start: seg.start(),
                    end: seg.end(),
                    j: seg.j,
                    samples: seg.samples.iter().map(|s| (s.t, s.value.clone())).collect(),
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("signal serialises")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("signal serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SignalDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_doc(doc)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let doc: SignalDoc = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json_doc(doc)
    }

    fn from_json_doc(doc: SignalDoc) -> Result<Self> {
        let segments = doc
            .intervals
            .into_iter()
            .map(|iv| {
                let samples: Vec<Sample> = iv.samples.into_iter().map(|(t, value)| Sample { t, value }).collect();
                if let (Some(a), Some(b)) = (samples.first(), samples.last()) {
                    if a.t != iv.start || b.t != iv.end {
                        return Err(Error::Parse(format!(
                            "interval {} endpoints disagree with its samples",
                            iv.j
                        )));
                    }
                }
                Ok(Segment { j: iv.j, samples })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_segments(doc.dim, segments)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalDoc {
    dim: usize,
    intervals: Vec<IntervalDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalDoc {
    start: f64,
    end: f64,
    j: usize,
    samples: Vec<(f64, Vec<f64>)>,
}

/// Incremental construction of a [`HybridSignal`], used by the simulator.
#[derive(Debug, Clone)]
pub struct SignalBuilder {
    dim: usize,
    segments: Vec<Segment>,
}

impl SignalBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            segments: vec![Segment {
                j: 0,
                samples: Vec::new(),
            }],
        }
    }

    pub fn push(&mut self, t: f64, value: Vec<f64>) {
        debug_assert_eq!(value.len(), self.dim);
        self.segments
            .last_mut()
            .expect("builder has a segment")
            .samples
            .push(Sample { t, value });
    }

    /// Open segment `j + 1`.
    pub fn start_segment(&mut self) {
        let j = self.segments.len();
        self.segments.push(Segment { j, samples: Vec::new() });
    }

    pub fn current_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.samples.len())
    }

    pub fn finish(self) -> Result<HybridSignal> {
        HybridSignal::from_segments(self.dim, self.segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow_signal(f: impl Fn(f64) -> f64, t_end: f64, n: usize) -> HybridSignal {
        let samples = (0..=n)
            .map(|i| {
                let t = t_end * i as f64 / n as f64;
                Sample { t, value: vec![f(t)] }
            })
            .collect();
        HybridSignal::from_flow(1, samples).unwrap()
    }

    fn domain(triples: &[(f64, f64, usize)]) -> HybridTimeDomain {
        HybridTimeDomain::new(
            triples
                .iter()
                .map(|&(start, end, j)| Interval { start, end, j })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ordering_is_by_sum() {
        let a = HybridTime::new(1.0, 2);
        let b = HybridTime::new(2.0, 1);
        assert!(hybrid_leq(a, b) && hybrid_leq(b, a));
        assert!(hybrid_leq(HybridTime::new(0.0, 0), HybridTime::new(0.3, 0)));
        assert!(!hybrid_leq(HybridTime::new(3.0, 1), HybridTime::new(1.0, 1)));
    }

    #[test]
    fn stats_of_small_domains() {
        let s = domain(&[(0.0, 2.0, 0), (2.0, 5.0, 1)]).stats();
        assert_eq!((s.sup_t, s.sup_j, s.length), (5.0, 1, 6.0));
        let s = domain(&[(0.0, 0.0, 0)]).stats();
        assert_eq!((s.sup_t, s.sup_j, s.length), (0.0, 0, 0.0));
        let d = domain(&[(0.0, 1.0, 0), (1.0, 1.0, 1), (1.0, 1.0, 2)]);
        let s = d.stats();
        assert_eq!((s.sup_t, s.sup_j, s.length), (1.0, 2, 3.0));
        assert_eq!(d.max_index_at(1.0), Some(2));
        assert_eq!(d.max_index_at(0.5), Some(0));
    }

    #[test]
    fn malformed_domains_are_rejected() {
        let bad = |t: Vec<Interval>| HybridTimeDomain::new(t).is_err();
        assert!(bad(vec![]));
        assert!(bad(vec![Interval {
            start: 0.5,
            end: 1.0,
            j: 0
        }]));
        assert!(bad(vec![
            Interval {
                start: 0.0,
                end: 1.0,
                j: 0
            },
            Interval {
                start: 1.5,
                end: 2.0,
                j: 1
            }
        ]));
        assert!(bad(vec![
            Interval {
                start: 0.0,
                end: 1.0,
                j: 0
            },
            Interval {
                start: 1.0,
                end: 2.0,
                j: 2
            }
        ]));
    }

    #[test]
    fn truncated_domain() {
        let d = domain(&[(0.0, 2.0, 0), (2.0, 5.0, 1)]);
        let t = d.truncate(4.0);
        assert_eq!(t.stats().sup_t, 3.0);
        assert_eq!(t.stats().sup_j, 1);
        assert_eq!(d.truncate(1.0).intervals().len(), 1);
    }

    #[test]
    fn sup_norm_of_ramp() {
        let v = flow_signal(|t| t, 3.0, 30);
        assert!((v.sup_norm(HybridTime::new(2.0, 0)).unwrap() - 2.0).abs() < 1e-12);
        assert!(v.sup_norm(HybridTime::new(4.0, 0)).is_err());
        assert!(v.sup_norm(HybridTime::new(1.0, 1)).is_err());
    }

    #[test]
    fn sup_norm_of_constant_with_jump() {
        let c = 1.75;
        let seg = |j, a: f64, b: f64| Segment {
            j,
            samples: vec![Sample { t: a, value: vec![c] }, Sample { t: b, value: vec![c] }],
        };
        let v = HybridSignal::from_segments(1, vec![seg(0, 0.0, 1.0), seg(1, 1.0, 2.0)]).unwrap();
        assert_eq!(v.sup_norm(HybridTime::new(2.0, 1)).unwrap(), c);
        let zero = flow_signal(|_| 0.0, 1.0, 4);
        assert_eq!(zero.sup_norm(HybridTime::new(1.0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn energy_of_constant_input() {
        let c = 0.7;
        let u = flow_signal(|_| c, 4.0, 8);
        let id = ScalarFn::linear(1.0);
        let e = u.energy_norm(&id, &id, HybridTime::new(4.0, 0)).unwrap();
        assert!((e - c * 4.0).abs() < 1e-12);
        let zero = flow_signal(|_| 0.0, 4.0, 8);
        assert_eq!(zero.energy_norm(&id, &id, HybridTime::new(4.0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn energy_counts_jump_point() {
        let c = 2.5;
        let u = HybridSignal::from_segments(
            1,
            vec![
                Segment {
                    j: 0,
                    samples: vec![
                        Sample {
                            t: 0.0,
                            value: vec![0.0],
                        },
                        Sample {
                            t: 0.5,
                            value: vec![0.0],
                        },
                        Sample { t: 1.0, value: vec![c] },
                    ],
                },
                Segment {
                    j: 1,
                    samples: vec![
                        Sample {
                            t: 1.0,
                            value: vec![0.0],
                        },
                        Sample {
                            t: 2.0,
                            value: vec![0.0],
                        },
                    ],
                },
            ],
        )
        .unwrap();
        let id = ScalarFn::linear(1.0);
        let e = u.energy_norm(&id, &id, HybridTime::new(1.0, 1)).unwrap();
        assert_eq!(e, c);
        // Before the jump is taken only the flow spike counts.
        let before = u.energy_norm(&id, &id, HybridTime::new(1.0, 0)).unwrap();
        assert!((before - 0.25 * c).abs() < 1e-15);
    }

    #[test]
    fn truncation_of_unit_input() {
        let u = flow_signal(|_| 1.0, 2.0, 4);
        let cut = u.truncate(1.0);
        for (p, v) in cut.iter() {
            let expected = if p.t <= 1.0 { 1.0 } else { 0.0 };
            assert_eq!(v[0], expected, "at t = {}", p.t);
        }
        assert_eq!(u.truncate(2.0), u);
        let at_zero = u.truncate(0.0);
        assert_eq!(at_zero.first(), &[1.0]);
        assert!(at_zero.iter().skip(1).all(|(_, v)| v[0] == 0.0));
    }

    #[test]
    fn extended_space_membership() {
        let u = flow_signal(|_| 1.0, 10.0, 100);
        let id = ScalarFn::linear(1.0);
        assert!(u.in_extended_space(&id, &id, None));
        assert!(!u.in_extended_space(&id, &id, Some(5.0)));
        assert!(u.in_extended_space(&id, &id, Some(11.0)));
    }

    #[test]
    fn csv_round_trip() {
        let u = flow_signal(|t| (t * 1.3).sin() / 3.0, 1.0, 7);
        let back = HybridSignal::from_csv(&u.to_csv("x")).unwrap();
        assert_eq!(back, u);
        let back = HybridSignal::from_json(&u.to_json()).unwrap();
        assert_eq!(back, u);
    }
}
