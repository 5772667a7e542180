//! Clock erasure, time-basis measurement, the `F_Q` coefficients, phase
//! selection, decoding and assembly of the averaged logical channel.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::clock::{materialize_vector, product_levels, time_basis_vector, ClockState};
use crate::codes::{check_density, CovariantCode};
use crate::error::{shape, Error, Result};
use crate::linalg::{cis, min_eigenvalue, partial_trace, unit, CMatrix, CVector, C64, ONE, ZERO};

/// Below this, an outcome is treated as having no support.
pub const F0_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub enum KAlphaPolicy {
    /// One surviving clock, `k_α = k_1 - k_1^0`.
    SingleClock { k1_0: f64 },
    /// Any number of clocks; read the surviving clock at position `clock`.
    Anchor { clock: usize, k0: f64 },
    /// Exactly three clocks; circular median of the three readings.
    ThreeClockMiddle { k0: [f64; 3] },
}

/// Decoder phase `k_α` in `[0, d)`.
pub fn choose_k_alpha(policy: &KAlphaPolicy, k_vec: &[i64], d: usize) -> Result<f64> {
    let raw = match policy {
        KAlphaPolicy::SingleClock { k1_0 } => {
            if k_vec.len() != 1 {
                return Err(Error::Arity(format!("single-clock rule given {} outcomes", k_vec.len())));
            }
            k_vec[0] as f64 - k1_0
        }
        KAlphaPolicy::Anchor { clock, k0 } => {
            let k = k_vec
                .get(*clock)
                .ok_or_else(|| Error::Arity(format!("no surviving clock at position {clock}")))?;
            *k as f64 - k0
        }
        KAlphaPolicy::ThreeClockMiddle { k0 } => {
            if k_vec.len() != 3 {
                return Err(Error::Arity(format!("middle-angle rule given {} outcomes", k_vec.len())));
            }
            crate::phase3::middle_k_alpha([k_vec[0], k_vec[1], k_vec[2]], *k0, d)
        }
    };
    Ok(raw.rem_euclid(d as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub k_vec: Vec<i64>,
    pub prob: f64,
    pub k_alpha: f64,
    pub t_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedState {
    pub rho_p: CMatrix,
    pub record: OutcomeRecord,
}

/// `c(Δ) = Σ_r ψ_r conj(ψ_{r+Δ})` for `Δ` in `-(d-1)..=d-1`, stored at `Δ + d - 1`.
fn autocorrelation(psi: &CVector) -> Vec<C64> {
    let d = psi.len() as i64;
    (-(d - 1)..d)
        .map(|delta| {
            let mut s = ZERO;
            for r in 0..d {
                let rp = r + delta;
                if (0..d).contains(&rp) {
                    s += psi[r as usize] * psi[rp as usize].conj();
                }
            }
            s
        })
        .collect()
}

/// `g(Δ; v) = Σ_r ρ[r, r+Δ] conj(v_r) v_{r+Δ}`, the weight a clock block
/// contributes at energy offset `Δ` when projected onto `|v>`.
fn projected_weight(psi: &CVector, v: &CVector) -> Vec<C64> {
    let d = psi.len() as i64;
    (-(d - 1)..d)
        .map(|delta| {
            let mut s = ZERO;
            for r in 0..d {
                let rp = r + delta;
                if (0..d).contains(&rp) {
                    let (r, rp) = (r as usize, rp as usize);
                    s += psi[r] * psi[rp].conj() * v[r].conj() * v[rp];
                }
            }
            s
        })
        .collect()
}

fn convolve(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficient at total offset `q` of the product of per-clock weight
/// sequences (each centred at `d - 1`).
fn constrained_sum(weights: &[Vec<C64>], d: usize, q: i64) -> C64 {
    let mut acc = weights[0].clone();
    for w in &weights[1..] {
        acc = convolve(&acc, w);
    }
    let centre = (weights.len() * (d - 1)) as i64;
    let idx = centre + q;
    if idx < 0 || idx as usize >= acc.len() {
        ZERO
    } else {
        acc[idx as usize]
    }
}

fn phase_table(d: usize) -> Vec<C64> {
    (0..d).map(|m| cis(-2.0 * PI * m as f64 / d as f64)).collect()
}

/// Per-outcome weights `c(Δ) e^{-i2πkΔ/d}` for every `k`.
fn time_weights(corr: &[C64], d: usize, phases: &[C64]) -> Vec<Vec<C64>> {
    (0..d)
        .map(|k| {
            corr.iter()
                .enumerate()
                .map(|(i, &c)| {
                    let delta = i as i64 - (d as i64 - 1);
                    c * phases[(k as i64 * delta).rem_euclid(d as i64) as usize]
                })
                .collect()
        })
        .collect()
}

fn check_outcome(k_vec: &[i64], n: usize, d: usize) -> Result<()> {
    if k_vec.len() != n {
        return Err(shape(format!("{n} outcomes"), k_vec.len()));
    }
    if let Some(k) = k_vec.iter().find(|&&k| k < 0 || k >= d as i64) {
        return Err(Error::Parameter(format!("outcome {k} outside 0..{d}")));
    }
    Ok(())
}

/// `F_Q(k⃗)` by the energy-offset delta sum over the surviving clocks.
pub fn f_q(code: &CovariantCode, q: i64, k_vec: &[i64]) -> Result<C64> {
    let clocks = code.surviving();
    let d = code.clock_dim();
    check_outcome(k_vec, clocks.len(), d)?;
    let phases = phase_table(d);
    let weights: Vec<Vec<C64>> = clocks
        .iter()
        .zip(k_vec)
        .map(|(c, &k)| time_weights(&autocorrelation(&c.amplitudes), d, &phases)[k as usize].clone())
        .collect();
    Ok(constrained_sum(&weights, d, q) / (d as f64).powi(clocks.len() as i32))
}

/// `|F_Q(k⃗) - e^{i2πlQ/d} F_Q(k⃗ + l)|`.
pub fn shift_covariance_check(code: &CovariantCode, q: i64, k_vec: &[i64], l: i64) -> Result<f64> {
    let d = code.clock_dim() as i64;
    let shifted: Vec<i64> = k_vec.iter().map(|&k| (k + l).rem_euclid(d)).collect();
    let a = f_q(code, q, k_vec)?;
    let b = f_q(code, q, &shifted)?;
    Ok((a - cis(2.0 * PI * (l * q) as f64 / d as f64) * b).norm())
}

/// `p(Q,k⃗) = 1 - (F_Q/F_0) e^{2πi k_α Q/d}`.
pub fn p_ratio(code: &CovariantCode, q: i64, k_vec: &[i64], k_alpha: f64) -> Result<C64> {
    let f0 = f_q(code, 0, k_vec)?.re;
    if f0 <= F0_FLOOR {
        return Err(Error::DegenerateOutcome { prob: f0 });
    }
    let fq = f_q(code, q, k_vec)?;
    let d = code.clock_dim() as f64;
    Ok(ONE - fq / f0 * cis(2.0 * PI * k_alpha * q as f64 / d))
}

/// `F_Q` for every outcome and every `|Q| <= q_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FTable {
    pub d: usize,
    pub n_clocks: usize,
    pub q_max: i64,
    /// Row `Q + q_max`, column = outcome index (first clock most significant).
    values: Vec<Vec<C64>>,
}

impl FTable {
    pub fn outcomes(&self) -> usize {
        self.d.pow(self.n_clocks as u32)
    }

    pub fn outcome(&self, mut idx: usize) -> Vec<i64> {
        let mut k = vec![0i64; self.n_clocks];
        for slot in k.iter_mut().rev() {
            *slot = (idx % self.d) as i64;
            idx /= self.d;
        }
        k
    }

    pub fn index(&self, k_vec: &[i64]) -> usize {
        k_vec.iter().fold(0, |acc, &k| acc * self.d + k as usize)
    }

    pub fn get(&self, q: i64, idx: usize) -> C64 {
        if q.abs() > self.q_max {
            return ZERO;
        }
        self.values[(q + self.q_max) as usize][idx]
    }

    pub fn f0(&self, idx: usize) -> f64 {
        self.get(0, idx).re
    }

    pub fn row(&self, q: i64) -> &[C64] {
        &self.values[(q + self.q_max) as usize]
    }

    /// Exact delta-sum evaluation.
    pub fn compute(clocks: &[&ClockState], q_max: i64) -> Result<Self> {
        let (d, n) = check_clocks(clocks)?;
        let phases = phase_table(d);
        let per_clock: Vec<Vec<Vec<C64>>> = clocks
            .iter()
            .map(|c| time_weights(&autocorrelation(&c.amplitudes), d, &phases))
            .collect();
        let norm = (d as f64).powi(n as i32);
        let n_q = (2 * q_max + 1) as usize;
        let total = d.pow(n as u32);
        let last = &per_clock[n - 1];
        // Convolve all but the last clock once per prefix, then read off the
        // needed offsets against the last clock.
        let prefix_count = d.pow(n as u32 - 1);
        let columns: Vec<Vec<C64>> = (0..prefix_count)
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut ks = vec![0usize; n - 1];
                let mut rest = p;
                for slot in ks.iter_mut().rev() {
                    *slot = rest % d;
                    rest /= d;
                }
                let mut acc = vec![ONE];
                for (i, &k) in ks.iter().enumerate() {
                    acc = convolve(&acc, &per_clock[i][k]);
                }
                let centre = ((n - 1) * (d - 1)) as i64;
                (0..d).map(move |k_last| {
                    let w = &last[k_last];
                    (0..n_q)
                        .map(|qi| {
                            let q = qi as i64 - q_max;
                            let mut s = ZERO;
                            for (j, &g) in w.iter().enumerate() {
                                let delta = j as i64 - (d as i64 - 1);
                                let idx = centre + q - delta;
                                if idx >= 0 && (idx as usize) < acc.len() {
                                    s += acc[idx as usize] * g;
                                }
                            }
                            s / norm
                        })
                        .collect::<Vec<C64>>()
                })
            })
            .collect();
        let mut values = vec![vec![ZERO; total]; n_q];
        for (idx, col) in columns.into_iter().enumerate() {
            for (qi, v) in col.into_iter().enumerate() {
                values[qi][idx] = v;
            }
        }
        Ok(Self { d, n_clocks: n, q_max, values })
    }

    /// Smallest power-of-two grid that integrates the `F_Q` integrand exactly.
    pub fn exact_grid(d: usize, n_clocks: usize, q_max: i64) -> usize {
        (2 * (n_clocks * (d - 1) + q_max as usize) + 1).next_power_of_two()
    }

    /// Uniform-grid time average of `e^{-iωQt} Π_i |<θ_{k_i}|U(t)ψ_i>|^2`.
    pub fn compute_grid(clocks: &[&ClockState], q_max: i64, grid: usize) -> Result<Self> {
        let (d, n) = check_clocks(clocks)?;
        let levels: Vec<i64> = (0..d as i64).collect();
        let probs: Vec<Vec<Vec<f64>>> = clocks
            .iter()
            .map(|c| time_probabilities(&c.amplitudes, &levels, d, grid, |k| time_basis_vector(d, k)))
            .collect();
        Self::from_time_probabilities(&probs, d, q_max, grid, n * (d - 1))
    }

    /// Same time average, with each entangled block written out on its full
    /// `site_dim^L` product space and evolved under the summed site levels.
    pub fn compute_materialized(clocks: &[&ClockState], q_max: i64, grid: usize) -> Result<Self> {
        let (d, n) = check_clocks(clocks)?;
        let probs: Vec<Vec<Vec<f64>>> = clocks
            .iter()
            .map(|c| {
                let (sd, l) = (c.site_dim, c.embed_factor);
                let psi = materialize_vector(&c.amplitudes, sd, l);
                let levels = product_levels(sd, l);
                time_probabilities(&psi, &levels, d, grid, |k| materialize_vector(&time_basis_vector(d, k), sd, l))
            })
            .collect();
        Self::from_time_probabilities(&probs, d, q_max, grid, n * (d - 1))
    }

    /// `probs[i][k][g]` is the probability of outcome `k` on clock `i` at grid
    /// time `g T0/grid`.
    pub fn from_time_probabilities(
        probs: &[Vec<Vec<f64>>],
        d: usize,
        q_max: i64,
        grid: usize,
        spread: usize,
    ) -> Result<Self> {
        let needed = spread + q_max as usize;
        if grid <= 2 * needed {
            return Err(Error::GridTooSmall { grid, needed: 2 * needed });
        }
        let n = probs.len();
        let total = d.pow(n as u32);
        let n_q = (2 * q_max + 1) as usize;
        let twiddle: Vec<Vec<C64>> = (0..n_q)
            .map(|qi| {
                let q = qi as i64 - q_max;
                (0..grid).map(|g| cis(-2.0 * PI * (q * g as i64) as f64 / grid as f64)).collect()
            })
            .collect();
        let columns: Vec<Vec<C64>> = (0..total)
            .into_par_iter()
            .map(|mut idx| {
                let mut ks = vec![0usize; n];
                for slot in ks.iter_mut().rev() {
                    *slot = idx % d;
                    idx /= d;
                }
                let joint: Vec<f64> = (0..grid)
                    .map(|g| ks.iter().enumerate().map(|(i, &k)| probs[i][k][g]).product())
                    .collect();
                twiddle
                    .iter()
                    .map(|tw| {
                        let s: C64 = tw.iter().zip(&joint).map(|(&w, &p)| w * p).sum();
                        s / grid as f64
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![vec![ZERO; total]; n_q];
        for (idx, col) in columns.into_iter().enumerate() {
            for (qi, v) in col.into_iter().enumerate() {
                values[qi][idx] = v;
            }
        }
        Ok(Self { d, n_clocks: n, q_max, values })
    }
}

fn check_clocks(clocks: &[&ClockState]) -> Result<(usize, usize)> {
    let n = clocks.len();
    if n == 0 {
        return Err(Error::Validation("no surviving clocks".into()));
    }
    if n > 3 {
        return Err(Error::Parameter(format!("exhaustive enumeration supports at most 3 clocks, got {n}")));
    }
    let d = clocks[0].dim;
    if clocks.iter().any(|c| c.dim != d) {
        return Err(Error::Validation("clocks differ in dimension".into()));
    }
    Ok((d, n))
}

fn time_probabilities(
    psi: &CVector,
    levels: &[i64],
    d: usize,
    grid: usize,
    basis: impl Fn(i64) -> CVector,
) -> Vec<Vec<f64>> {
    let bases: Vec<CVector> = (0..d as i64).map(basis).collect();
    let mut out = vec![vec![0.0; grid]; d];
    for g in 0..grid {
        let wt = 2.0 * PI * g as f64 / grid as f64;
        let evolved = CVector::from_iterator(
            psi.len(),
            psi.iter().zip(levels).map(|(&a, &h)| a * cis(-wt * h as f64)),
        );
        for (k, b) in bases.iter().enumerate() {
            out[k][g] = b.dotc(&evolved).norm_sqr();
        }
    }
    out
}

/// Choi representation `J = Σ_ab K(|a><b|) ⊗ |a><b|` (output factor first).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub d: usize,
    pub choi: CMatrix,
    pub kraus: Option<Vec<CMatrix>>,
}

impl ChannelMatrix {
    pub fn from_images(d: usize, image: impl Fn(usize, usize) -> CMatrix) -> Self {
        let mut choi = CMatrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let k = image(a, b);
                for m in 0..d {
                    for mp in 0..d {
                        choi[(m * d + a, mp * d + b)] = k[(m, mp)];
                    }
                }
            }
        }
        Self { d, choi, kraus: None }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_images(d, |a, b| unit(d, a, b))
    }

    pub fn from_kraus(ops: Vec<CMatrix>) -> Self {
        let d = ops[0].nrows();
        let mut ch = Self::from_images(d, |a, b| {
            let e = unit(d, a, b);
            ops.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k * &e * k.adjoint())
        });
        ch.kraus = Some(ops);
        ch
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.d;
        CMatrix::from_fn(d, d, |m, mp| {
            let mut s = ZERO;
            for a in 0..d {
                for b in 0..d {
                    s += self.choi[(m * d + a, mp * d + b)] * rho[(a, b)];
                }
            }
            s
        })
    }

    /// `||tr_out J - I||_F`.
    pub fn tp_deviation(&self) -> f64 {
        let t = partial_trace(&self.choi, &[self.d, self.d], &[false, true]);
        (t - CMatrix::identity(self.d, self.d)).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.choi)
    }

    pub fn choi_distance(&self, other: &Self) -> f64 {
        (&self.choi - &other.choi).norm()
    }

    /// Kraus operators from the eigen-decomposition of the Choi matrix.
    pub fn to_kraus(&self) -> Vec<CMatrix> {
        let d = self.d;
        let eig = crate::linalg::hermitian_part(&self.choi).symmetric_eigen();
        let mut ops = Vec::new();
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam <= 1e-14 {
                continue;
            }
            let v = eig.eigenvectors.column(i);
            let s = lam.sqrt();
            ops.push(CMatrix::from_fn(d, d, |m, a| v[m * d + a] * s));
        }
        ops
    }

    pub fn validate(&self, tp_tol: f64, cp_tol: f64) -> Result<()> {
        let tp = self.tp_deviation();
        if tp > tp_tol {
            return Err(Error::InvalidChannel(format!("not trace preserving, deviation {tp:e}")));
        }
        let min = self.min_eigenvalue();
        if min < -cp_tol {
            return Err(Error::NotPsd { min_eig: min });
        }
        Ok(())
    }
}

fn policy_k_alphas(table: &FTable, policy: &KAlphaPolicy) -> Result<Vec<f64>> {
    (0..table.outcomes())
        .map(|i| choose_k_alpha(policy, &table.outcome(i), table.d))
        .collect()
}

/// `E_j(E(|a><b|))` for every logical basis pair.
fn errored_images(code: &CovariantCode, j: usize) -> Result<Vec<CMatrix>> {
    let b = &code.base;
    if j >= b.errors.len() {
        return Err(Error::Parameter(format!("no error channel {j}")));
    }
    let mut out = Vec::with_capacity(b.d_l * b.d_l);
    for a in 0..b.d_l {
        for bb in 0..b.d_l {
            out.push(b.errors[j].apply(&b.encode(&unit(b.d_l, a, bb))));
        }
    }
    Ok(out)
}

/// Averaged logical channel using the delta-sum `F_Q` table.
pub fn full_channel(code: &CovariantCode, policy: &KAlphaPolicy, j: usize) -> Result<ChannelMatrix> {
    let table = FTable::compute(&code.surviving(), code.q_max())?;
    full_channel_with_table(code, &table, policy, j)
}

/// Averaged logical channel assembled from a precomputed table through the
/// phase sums `W(Q,R) = Σ_k F_Q(k) e^{2πi k_α R/d}`.
pub fn full_channel_with_table(
    code: &CovariantCode,
    table: &FTable,
    policy: &KAlphaPolicy,
    j: usize,
) -> Result<ChannelMatrix> {
    let b = &code.base;
    let d = table.d as f64;
    let q_max = code.q_max();
    if table.q_max < q_max {
        return Err(Error::Parameter(format!("table covers |Q| <= {}, need {q_max}", table.q_max)));
    }
    let kas = policy_k_alphas(table, policy)?;
    let mut w: HashMap<(i64, i64), C64> = HashMap::new();
    for q in -q_max..=q_max {
        let row = table.row(q);
        for r in -q_max..=q_max {
            let s: C64 = row
                .iter()
                .zip(&kas)
                .map(|(&f, &ka)| f * cis(2.0 * PI * ka * r as f64 / d))
                .sum();
            w.insert((q, r), s);
        }
    }
    let x = errored_images(code, j)?;
    let s = b.decoders[j].superoperator();
    let (hl, hco) = (b.gen_l.levels(), b.gen_co.levels());
    let (dl, dp) = (b.d_l, b.d_p);
    Ok(ChannelMatrix::from_images(dl, |a, bb| {
        let xab = &x[a * dl + bb];
        let mut out = CMatrix::zeros(dl, dl);
        for q in 0..dp {
            for qp in 0..dp {
                let val = xab[(q, qp)];
                if val == ZERO {
                    continue;
                }
                let dco = hco[q] - hco[qp];
                let big_q = dco + hl[bb] - hl[a];
                for m in 0..dl {
                    for mp in 0..dl {
                        let sv = s[(m * dl + mp, q * dp + qp)];
                        if sv == ZERO {
                            continue;
                        }
                        let r = dco - (hl[m] - hl[mp]);
                        out[(m, mp)] += sv * val * w[&(big_q, r)];
                    }
                }
            }
        }
        out
    }))
}

fn conditioned_operator(
    code: &CovariantCode,
    table: &FTable,
    idx: usize,
    xs: &[CMatrix],
    op: &CMatrix,
) -> Result<CMatrix> {
    let b = &code.base;
    let f0 = table.f0(idx);
    if f0 <= F0_FLOOR {
        return Err(Error::DegenerateOutcome { prob: f0 });
    }
    let (hl, hco) = (b.gen_l.levels(), b.gen_co.levels());
    let mut out = CMatrix::zeros(b.d_p, b.d_p);
    for a in 0..b.d_l {
        for bb in 0..b.d_l {
            let w = op[(a, bb)];
            if w == ZERO {
                continue;
            }
            let x = &xs[a * b.d_l + bb];
            for q in 0..b.d_p {
                for qp in 0..b.d_p {
                    let big_q = hco[q] - hco[qp] + hl[bb] - hl[a];
                    out[(q, qp)] += w * x[(q, qp)] * table.get(big_q, idx) / f0;
                }
            }
        }
    }
    Ok(out)
}

fn record(k_vec: Vec<i64>, prob: f64, policy: &KAlphaPolicy, d: usize, period: f64) -> Result<OutcomeRecord> {
    let k_alpha = choose_k_alpha(policy, &k_vec, d)?;
    Ok(OutcomeRecord {
        prob,
        t_alpha: k_alpha * period / d as f64,
        k_alpha,
        k_vec,
    })
}

/// Physical state after error `j` and clock outcome `k_vec`.
pub fn conditioned_state(
    code: &CovariantCode,
    rho_l: &CMatrix,
    j: usize,
    k_vec: &[i64],
    policy: &KAlphaPolicy,
) -> Result<ConditionedState> {
    check_density(rho_l, code.base.d_l)?;
    let clocks = code.surviving();
    check_outcome(k_vec, clocks.len(), code.clock_dim())?;
    let table = single_outcome_table(code, k_vec)?;
    let xs = errored_images(code, j)?;
    let rho_p = conditioned_operator(code, &table, 0, &xs, rho_l)?;
    let rec = record(k_vec.to_vec(), table.f0(0), policy, table.d, code.base.gen_l.period())?;
    Ok(ConditionedState { rho_p, record: rec })
}

/// A one-column table for a single outcome.
fn single_outcome_table(code: &CovariantCode, k_vec: &[i64]) -> Result<FTable> {
    let q_max = code.q_max();
    let d = code.clock_dim();
    let values = (-q_max..=q_max)
        .map(|q| Ok(vec![f_q(code, q, k_vec)?]))
        .collect::<Result<Vec<_>>>()?;
    Ok(FTable { d, n_clocks: 1, q_max, values })
}

/// `D̄_t(Y) = U_L(t) D_j(U_Co(t)† Y U_Co(t)) U_L(t)†` with `t = t_α`.
pub fn decode(code: &CovariantCode, j: usize, state: &ConditionedState) -> Result<CMatrix> {
    let b = &code.base;
    if j >= b.decoders.len() {
        return Err(Error::Parameter(format!("no decoder {j}")));
    }
    if state.rho_p.shape() != (b.d_p, b.d_p) {
        return Err(shape(b.d_p, state.rho_p.nrows()));
    }
    let t = state.record.t_alpha;
    let uco = b.gen_co.unitary(t);
    let ul = b.gen_l.unitary(t);
    let inner = b.decoders[j].apply(&(uco.adjoint() * &state.rho_p * &uco));
    Ok(&ul * inner * ul.adjoint())
}

/// Averaged channel built outcome by outcome from `conditioned_state` and
/// `decode`. Slow; used to cross-check the phase-sum assembly.
pub fn full_channel_explicit(
    code: &CovariantCode,
    table: &FTable,
    policy: &KAlphaPolicy,
    j: usize,
) -> Result<ChannelMatrix> {
    let b = &code.base;
    let xs = errored_images(code, j)?;
    let period = b.gen_l.period();
    let dl = b.d_l;
    let mut images = vec![CMatrix::zeros(dl, dl); dl * dl];
    for idx in 0..table.outcomes() {
        let f0 = table.f0(idx);
        if f0 <= F0_FLOOR {
            continue;
        }
        let rec = record(table.outcome(idx), f0, policy, table.d, period)?;
        for a in 0..dl {
            for bb in 0..dl {
                let rho_p = conditioned_operator(code, table, idx, &xs, &unit(dl, a, bb))?;
                let st = ConditionedState { rho_p, record: rec.clone() };
                images[a * dl + bb] += decode(code, j, &st)? * C64::new(f0, 0.0);
            }
        }
    }
    Ok(ChannelMatrix::from_images(dl, |a, bb| images[a * dl + bb].clone()))
}

/// Conditions the encoded state on each surviving clock reading `U(τ)|ψ_i>`
/// and returns the trace distance to `e^{-iτH_Co} E(ρ) e^{iτH_Co}`.
pub fn page_wootters_condition(code: &CovariantCode, rho_l: &CMatrix, tau: f64) -> Result<f64> {
    let b = &code.base;
    if !b.gen_l.is_trivial() {
        return Err(Error::Precondition("logical generator must be trivial".into()));
    }
    check_density(rho_l, b.d_l)?;
    let gen = code.clock_generator();
    let weights: Vec<Vec<C64>> = code
        .surviving()
        .iter()
        .map(|c| {
            let v = crate::clock::evolve(c, tau, &gen).expect("clock matches its generator");
            projected_weight(&c.amplitudes, &v.amplitudes)
        })
        .collect();
    let d = code.clock_dim();
    let x = b.encode(rho_l);
    let hco = b.gen_co.levels();
    let mut cache: HashMap<i64, C64> = HashMap::new();
    let mut cond = CMatrix::zeros(b.d_p, b.d_p);
    for q in 0..b.d_p {
        for qp in 0..b.d_p {
            let big_q = hco[q] - hco[qp];
            let g = *cache.entry(big_q).or_insert_with(|| constrained_sum(&weights, d, big_q));
            cond[(q, qp)] = x[(q, qp)] * g;
        }
    }
    let tr = cond.trace();
    if tr.norm() <= F0_FLOOR {
        return Err(Error::DegenerateOutcome { prob: tr.norm() });
    }
    let cond = cond / tr;
    let u = b.gen_co.unitary(tau);
    let target = &u * x * u.adjoint();
    Ok(crate::linalg::trace_distance(&cond, &target))
}

/// `||[H_total, E_cov(ρ)]||_F`.
pub fn stationarity(code: &CovariantCode, rho_l: &CMatrix) -> Result<f64> {
    let enc = crate::codes::covariant_encode(code, rho_l)?;
    let h = code.total_hamiltonian();
    Ok(crate::linalg::commutator(&h, &enc).norm())
}
