//! Two-unknown phase errors on one of three clock blocks and the circular
//! median ("middle angle") decoder.

use crate::clock::{evolve, ClockKind};
use crate::codes::CovariantCode;
use crate::error::{Error, Result};
use crate::fidelity::{fidelity_report, FidelityReport, RunParams};
use crate::pipeline::KAlphaPolicy;

/// `U(t_ph)` applied to one block; neither field is visible to the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorSpec {
    /// 1, 2 or 3.
    pub target_block: usize,
    pub t_ph: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleTriple {
    pub gammas: [f64; 3],
    pub d: usize,
}

/// Shorter arc length between two real angles on a circle of circumference `d`.
pub fn circular_delta(a: f64, b: f64, d: usize) -> f64 {
    let d = d as f64;
    let x = (a - b).rem_euclid(d);
    x.min(d - x)
}

/// Integer distance used on the protocol path: `|a-b|` if it is at most
/// `d/2 - 1`, else `d - |a-b|`. Odd `d` uses the plain circular distance.
pub fn circular_delta_int(a: i64, b: i64, d: usize) -> i64 {
    let di = d as i64;
    let x = (a.rem_euclid(di) - b.rem_euclid(di)).abs();
    if d % 2 == 1 {
        return x.min(di - x);
    }
    if x < di / 2 {
        x
    } else {
        di - x
    }
}

/// Picks the input lying between the other two. Returns `(value, w)` with
/// `w` in `1..=3`; ties go to the first matching case.
fn pick(d12: f64, d13: f64, d23: f64) -> usize {
    if d12 >= d13 && d12 >= d23 {
        3
    } else if d23 >= d12 && d23 >= d13 {
        1
    } else {
        2
    }
}

pub fn middle_angle(t: &AngleTriple) -> (f64, usize) {
    let g = t.gammas;
    let w = pick(
        circular_delta(g[0], g[1], t.d),
        circular_delta(g[0], g[2], t.d),
        circular_delta(g[1], g[2], t.d),
    );
    (g[w - 1], w)
}

pub fn middle_angle_int(g: [i64; 3], d: usize) -> (i64, usize) {
    let w = pick(
        circular_delta_int(g[0], g[1], d) as f64,
        circular_delta_int(g[0], g[2], d) as f64,
        circular_delta_int(g[1], g[2], d) as f64,
    );
    (g[w - 1], w)
}

/// Shifted reading `(k + d/2 - 1 - floor(k0)) mod d`.
pub fn gamma_tilde(k: i64, k0: f64, d: usize) -> f64 {
    (k as f64 + d as f64 / 2.0 - 1.0 - k0.floor()).rem_euclid(d as f64)
}

/// `k_α = -d/2 + 1 + Γ̃_w` for the middle block `w`.
pub fn middle_k_alpha(k: [i64; 3], k0: [f64; 3], d: usize) -> f64 {
    let g: Vec<f64> = (0..3).map(|i| gamma_tilde(k[i], k0[i], d)).collect();
    let value = if d.is_multiple_of(2) {
        let gi = [g[0] as i64, g[1] as i64, g[2] as i64];
        middle_angle_int(gi, d).0 as f64
    } else {
        middle_angle(&AngleTriple { gammas: [g[0], g[1], g[2]], d }).0
    };
    -(d as f64) / 2.0 + 1.0 + value
}

/// Decoder policy built from the nominal clock parameters only.
pub fn middle_policy(code: &CovariantCode) -> Result<KAlphaPolicy> {
    if code.clocks.len() != 3 || !code.erased.is_empty() {
        return Err(Error::Validation(format!(
            "three-block decoder needs exactly 3 unerased blocks, got {} with {} erased",
            code.clocks.len(),
            code.erased.len()
        )));
    }
    let mut k0 = [0.0; 3];
    for (slot, c) in k0.iter_mut().zip(&code.clocks) {
        *slot = match c.kind {
            ClockKind::Swp { k0 } => k0 as f64,
            ClockKind::QuasiIdeal { k1_0, .. } => k1_0,
            ClockKind::Custom => {
                return Err(Error::Precondition("custom clocks carry no nominal peak".into()))
            }
        };
    }
    Ok(KAlphaPolicy::ThreeClockMiddle { k0 })
}

/// The code as it stands after the phase error: the targeted clock replaced by
/// `U(t_ph)|ψ>`, which commutes with the twirl.
pub fn apply_phase_error(code: &CovariantCode, err: &PhaseErrorSpec) -> Result<CovariantCode> {
    if !(1..=3).contains(&err.target_block) {
        return Err(Error::Parameter(format!("target block {} not in 1..=3", err.target_block)));
    }
    let gen = code.clock_generator();
    let mut out = code.clone();
    let i = err.target_block - 1;
    out.clocks[i] = evolve(&code.clocks[i], err.t_ph, &gen)?;
    Ok(out)
}

/// Fidelity of the three-block scheme under one phase error.
pub fn three_clock_pipeline(
    code: &CovariantCode,
    err: &PhaseErrorSpec,
    j: usize,
    params: RunParams,
    restarts: usize,
    seed: u64,
) -> Result<FidelityReport> {
    let policy = middle_policy(code)?;
    let hit = apply_phase_error(code, err)?;
    fidelity_report(&hit, &policy, j, params, restarts, seed)
}
