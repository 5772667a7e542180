//! Decoherence probability of a qubit sent alongside a clock reference frame
//! through the time-twirl channel.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::clock::{ClockKind, ClockState, Generator};
use crate::error::{shape, Error, Result};
use crate::linalg::{cis, C64, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub a1: f64,
    pub a2: f64,
    pub p: f64,
    pub dim: usize,
    pub frame: ClockKind,
}

impl AlignmentResult {
    fn new(a1: f64, a2: f64, frame: &ClockState) -> Result<Self> {
        if a1 <= 0.0 {
            return Err(Error::Validation("A1 vanished".into()));
        }
        Ok(Self {
            a1,
            a2,
            p: (a1 - a2) / a1,
            dim: frame.dim,
            frame: frame.kind.clone(),
        })
    }
}

/// Approximate SWP value `1/(d+1)`, kept for comparison with the exact `1/d`.
pub fn p_swp_quoted(d: usize) -> f64 {
    1.0 / (d as f64 + 1.0)
}

fn energy_populations(frame: &ClockState, gen: &Generator) -> Result<BTreeMap<i64, f64>> {
    if gen.dim() != frame.dim {
        return Err(shape(frame.dim, gen.dim()));
    }
    let mut pops = BTreeMap::new();
    for (&h, c) in gen.levels().iter().zip(frame.amplitudes.iter()) {
        *pops.entry(h).or_insert(0.0) += c.norm_sqr();
    }
    Ok(pops)
}

/// Exact sums `A1 = Σ_E p_E^2`, `A2 = Σ_E p_E p_{E+1}`.
pub fn alignment_probability(frame: &ClockState, gen: &Generator) -> Result<AlignmentResult> {
    alignment_probability_gap(frame, gen, 1)
}

/// As [`alignment_probability`] with a message gap of `gap ω`.
pub fn alignment_probability_gap(frame: &ClockState, gen: &Generator, gap: i64) -> Result<AlignmentResult> {
    let pops = energy_populations(frame, gen)?;
    let a1 = pops.values().map(|p| p * p).sum();
    let a2 = pops
        .iter()
        .map(|(e, p)| p * pops.get(&(e + gap)).copied().unwrap_or(0.0))
        .sum();
    AlignmentResult::new(a1, a2, frame)
}

/// Uniform-grid average over one period of `|<ψ|U(t)|ψ>|^2` (and the same
/// times `e^{-iωt}`). Refuses grids that could alias.
pub fn alignment_probability_timeavg_oracle(frame: &ClockState, gen: &Generator, grid: usize) -> Result<AlignmentResult> {
    alignment_probability_timeavg_gap(frame, gen, grid, 1)
}

pub fn alignment_probability_timeavg_gap(
    frame: &ClockState,
    gen: &Generator,
    grid: usize,
    gap: i64,
) -> Result<AlignmentResult> {
    if gen.dim() != frame.dim {
        return Err(shape(frame.dim, gen.dim()));
    }
    let needed = (2 * gen.delta_h() + 1).max(gen.delta_h() + gap.abs()) as usize;
    if grid <= needed {
        return Err(Error::GridTooSmall { grid, needed });
    }
    let (mut a1, mut a2) = (0.0, ZERO);
    for g in 0..grid {
        let wt = 2.0 * PI * g as f64 / grid as f64;
        let amp: C64 = frame
            .amplitudes
            .iter()
            .zip(gen.levels())
            .map(|(c, &h)| cis(-wt * h as f64) * c.norm_sqr())
            .sum();
        let s = amp.norm_sqr();
        a1 += s;
        a2 += cis(-wt * gap as f64) * s;
    }
    AlignmentResult::new(a1 / grid as f64, a2.re / grid as f64, frame)
}
