//! Worst-case entanglement fidelity: the `max |p|` lower bound, direct
//! minimisation over bipartite inputs, the converse cap and reference curves.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codes::CovariantCode;
use crate::error::{Error, Result};
use crate::linalg::{cis, CMatrix, CVector, C64, ONE, ZERO};
use crate::pipeline::{choose_k_alpha, ChannelMatrix, FTable, KAlphaPolicy, F0_FLOOR};

pub const DEFAULT_RESTARTS: usize = 16;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub d_c: usize,
    pub d_eff: usize,
    pub sigma: Option<f64>,
    pub l: usize,
    pub m: usize,
    pub clock_kind: String,
    pub code: String,
    pub error: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub f_lower: f64,
    pub f_direct: f64,
    pub f_converse: f64,
    pub params: RunParams,
    /// Row-major `d_L x d_L` amplitudes of the minimising `|φ>` on system ⊗ ancilla.
    pub minimizer_state: CVector,
}

/// Q values that enter the bound: `±(Δh_L + Δh_Co)`, or `±Δh_L` when the
/// physical generator is trivial.
pub fn q_range(code: &CovariantCode) -> i64 {
    let b = &code.base;
    if b.gen_co.is_trivial() {
        b.gen_l.delta_h()
    } else {
        b.gen_l.delta_h() + b.gen_co.delta_h()
    }
}

/// `Σ_k F_0(k) max_Q |p(Q,k)|` from a precomputed table.
pub fn expected_max_p(code: &CovariantCode, table: &FTable, policy: &KAlphaPolicy) -> Result<f64> {
    let qr = q_range(code);
    if table.q_max < qr {
        return Err(Error::Parameter(format!("table covers |Q| <= {}, need {qr}", table.q_max)));
    }
    let d = table.d as f64;
    let mut total = 0.0;
    for idx in 0..table.outcomes() {
        let f0 = table.f0(idx);
        if f0 <= F0_FLOOR {
            continue;
        }
        let ka = choose_k_alpha(policy, &table.outcome(idx), table.d)?;
        let worst = (-qr..=qr)
            .map(|q| (ONE - table.get(q, idx) / f0 * cis(2.0 * PI * ka * q as f64 / d)).norm())
            .fold(0.0, f64::max);
        total += f0 * worst;
    }
    Ok(total)
}

/// `1 - (3/2) √d_L d_P Σ_k F_0(k) max_Q |p(Q,k)|`, floored at 0 where the
/// bound is vacuous.
pub fn f_worst_lower(code: &CovariantCode, table: &FTable, policy: &KAlphaPolicy) -> Result<f64> {
    let b = &code.base;
    let eps = (b.d_l as f64).sqrt() * b.d_p as f64 * expected_max_p(code, table, policy)?;
    Ok((1.0 - 1.5 * eps).max(0.0))
}

/// `vec(ρ)† J vec(ρ)` with `ρ = M M†`, which equals `<φ|(K⊗I)(|φ><φ|)|φ>`.
fn entanglement_fidelity(choi: &CMatrix, m: &CMatrix) -> f64 {
    let rho = m * m.adjoint();
    let n = rho.nrows();
    let v = CVector::from_iterator(n * n, (0..n * n).map(|i| rho[(i / n, i % n)]));
    v.dotc(&(choi * &v)).re
}

fn unpack(x: &[f64], rows: usize, cols: usize) -> CMatrix {
    let mut m = CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        C64::new(x[k], x[k + 1])
    });
    let n = m.norm();
    if n > 0.0 {
        m.unscale_mut(n);
    }
    m
}

/// Nelder-Mead on `f`, starting from `x0` with initial step `step`.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < tol * 1e-3 && size < tol.sqrt() * 1e-2 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = best.iter().zip(&simplex[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

fn multistart(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    dim: usize,
    restarts: usize,
    tol: f64,
    seed: u64,
) -> (Vec<f64>, f64) {
    let runs: Vec<(Vec<f64>, f64)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            let mut best = f64::INFINITY;
            let mut step = 0.3;
            // Re-seeding the simplex at the current point unsticks collapsed simplices.
            for _ in 0..8 {
                let (nx, fx) = nelder_mead(objective, &x, step, tol, 400 * dim);
                let norm = nx.iter().map(|v| v * v).sum::<f64>().sqrt();
                x = nx.iter().map(|v| v / norm).collect();
                let improved = best - fx;
                best = best.min(fx);
                if improved.abs() < tol {
                    break;
                }
                step = (step * 0.5).max(1e-3);
            }
            (x, best)
        })
        .collect();
    runs.into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("at least one restart")
}

fn check_channel(channel: &ChannelMatrix) -> Result<()> {
    let min = channel.min_eigenvalue();
    if min < -1e-8 {
        return Err(Error::InvalidChannel(format!("Choi matrix has eigenvalue {min:e}")));
    }
    Ok(())
}

/// Minimum of `<φ|(K⊗I)(|φ><φ|)|φ>` over pure `|φ>` with a `d_L`-dimensional
/// ancilla. Returns the value and the minimiser.
pub fn f_worst_direct(channel: &ChannelMatrix, restarts: usize, tol: f64, seed: u64) -> Result<(f64, CVector)> {
    check_channel(channel)?;
    let n = channel.d;
    let choi = &channel.choi;
    let obj = move |x: &[f64]| entanglement_fidelity(choi, &unpack(x, n, n));
    let (x, val) = multistart(&obj, 2 * n * n, restarts, tol, seed);
    let m = unpack(&x, n, n);
    let phi = CVector::from_iterator(n * n, (0..n * n).map(|i| m[(i / n, i % n)]));
    Ok((val, phi))
}

/// Same minimisation restricted to product inputs `|u> ⊗ |v>`.
pub fn f_worst_product(channel: &ChannelMatrix, restarts: usize, tol: f64, seed: u64) -> Result<f64> {
    check_channel(channel)?;
    let n = channel.d;
    let choi = &channel.choi;
    let obj = move |x: &[f64]| entanglement_fidelity(choi, &unpack(x, n, 1));
    Ok(multistart(&obj, 2 * n, restarts, tol, seed).1)
}

/// `1 - Δh_L^2 / (16 (Δh_Co + L d_C)^2)`.
pub fn converse_bound(dh_l: i64, dh_co: i64, l: usize, d_c: usize) -> f64 {
    let denom = dh_co as f64 + (l * d_c) as f64;
    1.0 - (dh_l * dh_l) as f64 / (16.0 * denom * denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    QiLeading,
    QiLsiteLeading,
    SwpForm { c_star: f64 },
    ThreeBlockShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub d_c: usize,
    pub l: usize,
    pub d_l: usize,
    pub d_p: usize,
    /// `Δh_L + Δh_Co`.
    pub delta: i64,
}

/// Leading-order analytic fidelity curves for overlays.
pub fn theorem_curve(kind: CurveKind, p: CurveParams) -> f64 {
    let pref = (p.d_l as f64).sqrt() * p.d_p as f64;
    let delta = p.delta as f64;
    let qi = |d: f64| {
        let x = d.ln().powi(3) / d;
        1.0 - 3.0 * PI * pref / 4.0 * x * x * delta * delta
    };
    match kind {
        CurveKind::QiLeading => qi(p.d_c as f64),
        CurveKind::QiLsiteLeading => qi((p.l * p.d_c) as f64),
        CurveKind::SwpForm { c_star } => 1.0 - c_star / p.d_c as f64,
        CurveKind::ThreeBlockShape => {
            let ld = (p.l * p.d_c) as f64;
            1.0 - pref * (10.0 * PI * delta / 3f64.sqrt()) * ld.ln().powi(7) / ld
        }
    }
}

/// Least-squares `C` in `1 - f ≈ C/d`.
pub fn fit_swp_constant(ds: &[usize], one_minus_f: &[f64]) -> Result<f64> {
    if ds.len() != one_minus_f.len() || ds.is_empty() {
        return Err(Error::Fit("need matching, nonempty samples".into()));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&d, &y) in ds.iter().zip(one_minus_f) {
        let x = 1.0 / d as f64;
        sxy += x * y;
        sxx += x * x;
    }
    Ok(sxy / sxx)
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    if fa < fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Lower bound, direct minimum and converse cap for one configuration.
pub fn fidelity_report(
    code: &CovariantCode,
    policy: &KAlphaPolicy,
    j: usize,
    params: RunParams,
    restarts: usize,
    seed: u64,
) -> Result<FidelityReport> {
    let table = FTable::compute(&code.surviving(), code.q_max())?;
    let channel = crate::pipeline::full_channel_with_table(code, &table, policy, j)?;
    channel.validate(1e-9, 1e-8)?;
    let f_lower = f_worst_lower(code, &table, policy)?;
    let (f_direct, minimizer_state) = f_worst_direct(&channel, restarts, DEFAULT_TOL, seed)?;
    let clock = &code.clocks[0];
    let b = &code.base;
    let f_converse = converse_bound(b.gen_l.delta_h(), b.gen_co.delta_h(), clock.embed_factor, clock.site_dim);
    Ok(FidelityReport { f_lower, f_direct, f_converse, params, minimizer_state })
}

/// Completely dephasing channel in the computational basis.
pub fn dephasing_channel(d: usize) -> ChannelMatrix {
    ChannelMatrix::from_images(d, |a, b| {
        if a == b {
            crate::linalg::unit(d, a, a)
        } else {
            CMatrix::from_element(d, d, ZERO)
        }
    })
}
