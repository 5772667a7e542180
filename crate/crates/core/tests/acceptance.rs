//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use covclock::align::{alignment_probability, alignment_probability_timeavg_oracle, p_swp_quoted};
use covclock::cli::{fit_loglog, optimize_sigma};
use covclock::clock::{embed_l, quasi_ideal_state, random_state, time_basis_state, ClockSpec, ClockState, Generator};
use covclock::codes::{make_identity_code, make_unitary_conjugation_code, BaseCode, CovariantCode};
use covclock::fidelity::{converse_bound, f_worst_direct, f_worst_lower, RunParams, DEFAULT_TOL};
use covclock::linalg::{CMatrix, C64};
use covclock::phase3::{apply_phase_error, middle_policy, three_clock_pipeline, PhaseErrorSpec};
use covclock::pipeline::{
    full_channel, full_channel_with_table, page_wootters_condition, shift_covariance_check,
    stationarity, ChannelMatrix, FTable, KAlphaPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RESTARTS: usize = 16;

/// f_direct values and converse caps gathered by criteria 1-3 for criterion 4.
#[derive(Default)]
struct Ctx {
    converse_cases: Vec<(String, f64, f64)>,
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn qubit_code() -> BaseCode {
    make_identity_code(2, &[0, 1], &[0, 0]).unwrap()
}

fn single(base: &BaseCode, clock: ClockState) -> CovariantCode {
    CovariantCode::new(base.clone(), vec![clock]).unwrap()
}

struct SingleRun {
    f_lower: f64,
    f_direct: f64,
}

fn run_single(code: &CovariantCode, k1_0: f64, seed: u64) -> SingleRun {
    let pol = KAlphaPolicy::SingleClock { k1_0 };
    let table = FTable::compute(&code.surviving(), code.q_max()).unwrap();
    let ch = full_channel_with_table(code, &table, &pol, 0).unwrap();
    let f_lower = f_worst_lower(code, &table, &pol).unwrap();
    let (f_direct, _) = f_worst_direct(&ch, RESTARTS, DEFAULT_TOL, seed).unwrap();
    SingleRun { f_lower, f_direct }
}

fn criterion_1(ctx: &mut Ctx) -> Verdict {
    let start = Instant::now();
    let base = qubit_code();
    let ds = [8usize, 16, 32, 64, 128];
    let mut ys = Vec::new();
    let mut worst_exact: f64 = 0.0;
    for &d in &ds {
        let code = single(&base, time_basis_state(d, 0).unwrap());
        let r = run_single(&code, 0.0, d as u64);
        let y = 1.0 - r.f_lower;
        worst_exact = worst_exact.max((y - 1.5 * 2f64.sqrt() * 2.0 / d as f64).abs());
        ys.push(y);
        ctx.converse_cases.push((format!("swp d={d}"), r.f_direct, converse_bound(1, 0, 1, d)));
    }
    let xs: Vec<f64> = ds.iter().map(|&d| d as f64).collect();
    let fit = fit_loglog(&xs, &ys).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: (fit.slope + 1.0).abs() <= 0.05 && worst_exact <= 1e-9 && secs < 10.0,
        detail: format!(
            "slope {:.6} (want -1 ± 0.05), max |1-f_lower - 3√2/d| = {worst_exact:.2e}, {secs:.2}s (< 10s)",
            fit.slope
        ),
    }
}

fn criterion_2(ctx: &mut Ctx) -> Verdict {
    let start = Instant::now();
    let base = qubit_code();
    let ds = [16usize, 32, 64, 128, 256];
    let mut ys = Vec::new();
    let mut beats_swp = true;
    let mut notes = Vec::new();
    for &d in &ds {
        let (sigma, _) = optimize_sigma(&base, d, 1, 0.0, 1.0, d as f64 / 4.0).unwrap();
        let qi = run_single(&single(&base, quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, sigma).unwrap()), 0.0, d as u64);
        let swp = run_single(&single(&base, time_basis_state(d, 0).unwrap()), 0.0, d as u64);
        let (y_qi, y_swp) = (1.0 - qi.f_lower, 1.0 - swp.f_lower);
        beats_swp &= y_qi < y_swp;
        notes.push(format!("d={d} σ={sigma:.3} {y_qi:.3e}<{y_swp:.3e}"));
        ys.push(y_qi);
        ctx.converse_cases.push((format!("qi d={d}"), qi.f_direct, converse_bound(1, 0, 1, d)));
    }
    let xs: Vec<f64> = ds.iter().map(|&d| d as f64).collect();
    let fit = fit_loglog(&xs, &ys).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: fit.slope <= -1.6 && beats_swp && secs < 120.0,
        detail: format!("slope {:.4} (want <= -1.6); {}; {secs:.2}s (< 120s)", fit.slope, notes.join(", ")),
    }
}

fn criterion_3(ctx: &mut Ctx) -> Verdict {
    let start = Instant::now();
    let base = qubit_code();
    let mut worst_choi: f64 = 0.0;
    let mut worst_f0: f64 = 0.0;
    for (site, l) in [(3usize, 2usize), (3, 3), (5, 2)] {
        let d = l * (site - 1) + 1;
        for spec in [
            ClockSpec::QuasiIdeal { k1_0: 0.0, n0: None, sigma: (d as f64).sqrt() },
            ClockSpec::Swp { k0: 1 },
        ] {
            let block = embed_l(site, l, &spec).unwrap();
            let plain = spec.build(d).unwrap();
            let code_b = single(&base, block);
            let code_s = single(&base, plain);
            let pol = KAlphaPolicy::SingleClock { k1_0: spec.k0() };
            let q = code_b.q_max();
            let tb = FTable::compute(&code_b.surviving(), q).unwrap();
            let ts = FTable::compute(&code_s.surviving(), q).unwrap();
            let tm = FTable::compute_materialized(&code_b.surviving(), q, FTable::exact_grid(d, 1, q)).unwrap();
            let kb = full_channel_with_table(&code_b, &tb, &pol, 0).unwrap();
            let ks = full_channel_with_table(&code_s, &ts, &pol, 0).unwrap();
            let km = full_channel_with_table(&code_b, &tm, &pol, 0).unwrap();
            worst_choi = worst_choi.max(kb.choi_distance(&ks)).max(km.choi_distance(&ks));
            for i in 0..ts.outcomes() {
                worst_f0 = worst_f0.max((tb.f0(i) - ts.f0(i)).abs()).max((tm.f0(i) - ts.f0(i)).abs());
            }
            let (f_direct, _) = f_worst_direct(&kb, RESTARTS, DEFAULT_TOL, d as u64).unwrap();
            ctx.converse_cases.push((
                format!("({site},{l}) {spec:?}"),
                f_direct,
                converse_bound(1, 0, l, site),
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: worst_choi < 1e-10 && worst_f0 <= 1e-12 && secs < 5.0,
        detail: format!(
            "max Choi distance {worst_choi:.2e} (< 1e-10), max F0 gap {worst_f0:.2e} (<= 1e-12), incl. materialized product-space route; {secs:.2}s (< 5s)"
        ),
    }
}

fn criterion_4(ctx: &Ctx) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut label = String::new();
    for (name, f_direct, cap) in &ctx.converse_cases {
        let excess = f_direct - cap;
        if excess > worst {
            worst = excess;
            label = name.clone();
        }
    }
    Verdict {
        pass: !ctx.converse_cases.is_empty() && worst <= 1e-6,
        detail: format!(
            "{} configurations, max f_direct - cap = {worst:.3e} at {label} (<= 1e-6)",
            ctx.converse_cases.len()
        ),
    }
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
    let (mut worst_grid, mut worst_shift, mut worst_sum, mut worst_uniform) = (0f64, 0f64, 0f64, 0f64);
    let mut configs = 0;
    for d in [3usize, 8, 16, 32] {
        for n in 1..=3usize {
            for kind in 0..4 {
                let clocks: Vec<ClockState> = (0..n)
                    .map(|i| match (kind, i % 3) {
                        (0, _) | (3, 0) => time_basis_state(d, (2 * i + 1) as i64).unwrap(),
                        (1, _) | (3, 1) => {
                            quasi_ideal_state(d, 0.5 * i as f64, (d as f64 - 1.0) / 2.0, (d as f64).sqrt()).unwrap()
                        }
                        _ => random_state(d, &mut rng),
                    })
                    .collect();
                let code = CovariantCode::new(base.clone(), clocks).unwrap();
                let refs = code.surviving();
                let q = code.q_max();
                let t = FTable::compute(&refs, q).unwrap();
                let g = FTable::compute_grid(&refs, q, FTable::exact_grid(d, n, q)).unwrap();
                let mut sum = 0.0;
                for i in 0..t.outcomes() {
                    sum += t.f0(i);
                    for qq in -q..=q {
                        worst_grid = worst_grid.max((t.get(qq, i) - g.get(qq, i)).norm());
                    }
                    if n == 1 {
                        worst_uniform = worst_uniform.max((t.f0(i) - 1.0 / d as f64).abs());
                    }
                }
                worst_sum = worst_sum.max((sum - 1.0).abs());
                let stride = (t.outcomes() / 40).max(1);
                for i in (0..t.outcomes()).step_by(stride) {
                    let k = t.outcome(i);
                    for qq in -q..=q {
                        for l in [1i64, 3, d as i64 - 1, d as i64] {
                            worst_shift = worst_shift.max(shift_covariance_check(&code, qq, &k, l).unwrap());
                        }
                    }
                }
                configs += 1;
            }
        }
    }
    Verdict {
        pass: worst_grid < 1e-9 && worst_shift < 1e-10 && worst_sum < 1e-10 && worst_uniform < 1e-12,
        detail: format!(
            "{configs} configs: delta vs grid {worst_grid:.2e} (< 1e-9), shift {worst_shift:.2e} (< 1e-10), |ΣF0-1| {worst_sum:.2e} (< 1e-10), single-clock |F0-1/d| {worst_uniform:.2e} (< 1e-12)"
        ),
    }
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let base = qubit_code();
    let points = 17;
    let mut maxima = Vec::new();
    let mut ratios_ok = true;
    let mut blind = true;
    let mut notes = Vec::new();
    let ds = [16usize, 32, 64];
    for &d in &ds {
        let sigma = (d as f64).sqrt();
        let clock = quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, sigma).unwrap();
        let code = CovariantCode::new(base.clone(), vec![clock; 3]).unwrap();
        let nominal = middle_policy(&code).unwrap();
        let period = code.base.gen_l.period();
        let params = RunParams {
            d_c: d,
            d_eff: d,
            sigma: Some(sigma),
            l: 1,
            m: 3,
            clock_kind: "qi".into(),
            code: "identity".into(),
            error: 0,
        };
        let mut baseline = None;
        let mut worst: f64 = 0.0;
        for j in 0..points {
            for block in 1..=3 {
                let err = PhaseErrorSpec { target_block: block, t_ph: period * j as f64 / points as f64 };
                // The policy seen by the decoder must not change with the error.
                blind &= middle_policy(&apply_phase_error(&code, &err).unwrap()).unwrap() == nominal;
                let rep = three_clock_pipeline(&code, &err, 0, params.clone(), RESTARTS, 17).unwrap();
                let y = 1.0 - rep.f_direct;
                if j == 0 && block == 1 {
                    baseline = Some(y);
                }
                worst = worst.max(y);
            }
        }
        let b = baseline.unwrap();
        ratios_ok &= worst <= 5.0 * b;
        notes.push(format!("d={d}: t_ph=0 {b:.3e}, max {worst:.3e}, ratio {:.2}", worst / b));
        maxima.push(worst);
    }
    let xs: Vec<f64> = ds.iter().map(|&d| d as f64).collect();
    let fit = fit_loglog(&xs, &maxima).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: blind && ratios_ok && fit.slope <= -0.8 && secs < 180.0,
        detail: format!(
            "(a) decoder blind to t_ph/block: {}; (b) {}; (c) slope {:.4} (<= -0.8); {secs:.1}s (< 180s)",
            blind,
            notes.join("; "),
            fit.slope
        ),
    }
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let ds = [32usize, 64, 128, 256];
    let (mut worst_oracle, mut worst_swp, mut worst_quoted_excess) = (0f64, 0f64, f64::NEG_INFINITY);
    let mut ps = Vec::new();
    for &d in &ds {
        let gen = Generator::clock(d, 1.0).unwrap();
        let swp = time_basis_state(d, 0).unwrap();
        let sigma = (d as f64).ln().powf(1.5);
        let qi = quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, sigma).unwrap();
        for st in [&swp, &qi] {
            let a = alignment_probability(st, &gen).unwrap();
            let b = alignment_probability_timeavg_oracle(st, &gen, 4 * d).unwrap();
            worst_oracle = worst_oracle.max((a.p - b.p).abs());
        }
        let p = alignment_probability(&swp, &gen).unwrap().p;
        worst_swp = worst_swp.max((p - 1.0 / d as f64).abs());
        worst_quoted_excess = worst_quoted_excess.max((p - p_swp_quoted(d)).abs() - 2.0 / (d * d) as f64);
        ps.push(alignment_probability(&qi, &gen).unwrap().p);
    }
    let xs: Vec<f64> = ds.iter().map(|&d| d as f64).collect();
    let fit = fit_loglog(&xs, &ps).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: worst_oracle < 1e-10 && worst_swp < 1e-12 && worst_quoted_excess <= 0.0 && fit.slope <= -1.6 && secs < 30.0,
        detail: format!(
            "oracle gap {worst_oracle:.2e} (< 1e-10); SWP |p-1/d| {worst_swp:.2e}; within 2/d² of 1/(d+1): {}; QI p = {:?}, slope {:.4} (want <= -1.6); {secs:.2}s (< 30s)",
            worst_quoted_excess <= 0.0,
            ps.iter().map(|p| format!("{p:.4e}")).collect::<Vec<_>>(),
            fit.slope
        ),
    }
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let base = make_identity_code(2, &[0, 0], &[0, 1]).unwrap();
    let rho = CMatrix::from_element(2, 2, C64::new(0.5, 0.0));
    let mut worst_stat: f64 = 0.0;
    let mut dists = Vec::new();
    for d in [16usize, 32, 64] {
        let clock = quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, (d as f64).sqrt()).unwrap();
        let code = single(&base, clock);
        worst_stat = worst_stat.max(stationarity(&code, &rho).unwrap());
        let period = code.base.gen_l.period();
        let row: Vec<f64> = (0..9)
            .map(|j| page_wootters_condition(&code, &rho, period * j as f64 / 9.0).unwrap())
            .collect();
        dists.push((d, row));
    }
    let small = &dists[0].1;
    let large = &dists[2].1;
    let shrinks = small.iter().zip(large).all(|(s, l)| l < s);
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: worst_stat < 1e-10 && shrinks && secs < 30.0,
        detail: format!(
            "max ‖[H,E_cov(ρ)]‖ {worst_stat:.2e} (< 1e-10); trace distance d=16 max {:.3e}, d=64 max {:.3e}, d=64 < d=16 at all 9 τ: {shrinks}; {secs:.2}s (< 30s)",
            small.iter().cloned().fold(0.0, f64::max),
            large.iter().cloned().fold(0.0, f64::max)
        ),
    }
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut channels: Vec<(String, ChannelMatrix)> = Vec::new();
    let qubit = qubit_code();
    let qubit_co = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
    let qutrit = make_identity_code(3, &[0, 1, 2], &[0, 0, 0]).unwrap();
    for d in [2usize, 3, 5, 8, 16, 32] {
        for base in [&qubit, &qubit_co, &qutrit] {
            channels.push((format!("swp d={d}"), full_channel(&single(base, time_basis_state(d, 0).unwrap()), &KAlphaPolicy::SingleClock { k1_0: 0.0 }, 0).unwrap()));
            let qi = quasi_ideal_state(d, 0.5, (d as f64 - 1.0) / 2.0, (d as f64).sqrt().min(d as f64 - 0.5)).unwrap();
            channels.push((format!("qi d={d}"), full_channel(&single(base, qi), &KAlphaPolicy::SingleClock { k1_0: 0.5 }, 0).unwrap()));
        }
    }
    let mut v = CMatrix::zeros(4, 2);
    v[(1, 0)] = C64::new(1.0, 0.0);
    v[(2, 1)] = C64::new(1.0, 0.0);
    let mut flip = CMatrix::identity(4, 4);
    flip[(2, 2)] = C64::new(-1.0, 0.0);
    let unitary = make_unitary_conjugation_code(v, vec![CMatrix::identity(4, 4), flip], &[0, 1], &[0, 1, 1, 2]).unwrap();
    for j in 0..2 {
        let code = single(&unitary, quasi_ideal_state(6, 0.0, 2.5, 2.0).unwrap());
        channels.push((format!("unitary code j={j}"), full_channel(&code, &KAlphaPolicy::SingleClock { k1_0: 0.0 }, j).unwrap()));
    }
    for d in [4usize, 7] {
        let clocks: Vec<ClockState> = (0..3).map(|_| random_state(d, &mut rng)).collect();
        let code = CovariantCode::new(qubit_co.clone(), clocks).unwrap();
        channels.push((format!("3 random clocks d={d}"), full_channel(&code, &KAlphaPolicy::Anchor { clock: 1, k0: 0.0 }, 0).unwrap()));
        let erased = code.clone().with_erased([0]).unwrap();
        channels.push((format!("erased d={d}"), full_channel(&erased, &KAlphaPolicy::Anchor { clock: 0, k0: 0.0 }, 0).unwrap()));
    }
    for (site, l) in [(3usize, 2usize), (3, 3), (5, 2)] {
        let spec = ClockSpec::QuasiIdeal { k1_0: 0.0, n0: None, sigma: 2.0 };
        let code = single(&qubit, embed_l(site, l, &spec).unwrap());
        channels.push((format!("block ({site},{l})"), full_channel(&code, &KAlphaPolicy::SingleClock { k1_0: 0.0 }, 0).unwrap()));
    }
    let clock = quasi_ideal_state(8, 0.0, 3.5, 2.0).unwrap();
    let code = CovariantCode::new(qubit.clone(), vec![clock; 3]).unwrap();
    let pol = middle_policy(&code).unwrap();
    for block in 1..=3 {
        let hit = apply_phase_error(&code, &PhaseErrorSpec { target_block: block, t_ph: 0.3 * PI * block as f64 }).unwrap();
        channels.push((format!("phase error block {block}"), full_channel(&hit, &pol, 0).unwrap()));
    }
    let (mut worst_tp, mut worst_eig, mut at) = (0f64, f64::INFINITY, String::new());
    for (name, ch) in &channels {
        worst_tp = worst_tp.max(ch.tp_deviation());
        let e = ch.min_eigenvalue();
        if e < worst_eig {
            worst_eig = e;
            at = name.clone();
        }
    }
    Verdict {
        pass: worst_tp <= 1e-9 && worst_eig >= -1e-8,
        detail: format!(
            "{} channels: max TP deviation {worst_tp:.2e} (<= 1e-9), min Choi eigenvalue {worst_eig:.2e} at {at} (>= -1e-8)",
            channels.len()
        ),
    }
}

fn main() {
    let mut ctx = Ctx::default();
    let results: Vec<(u8, &str, Verdict)> = vec![
        (1, "SWP scaling", criterion_1(&mut ctx)),
        (2, "Quasi-Ideal advantage", criterion_2(&mut ctx)),
        (3, "L-site exact equivalence", criterion_3(&mut ctx)),
        (4, "converse audit", criterion_4(&ctx)),
        (5, "F_Q machinery", criterion_5()),
        (6, "three-clock phase-error decoder", criterion_6()),
        (7, "frame alignment", criterion_7()),
        (8, "Page-Wootters conditioning", criterion_8()),
        (9, "channel laws", criterion_9()),
    ];
    let mut failed = Vec::new();
    for (n, name, v) in &results {
        println!("{} criterion {n} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: {} of {} criteria failed: {failed:?}", failed.len(), results.len());
        std::process::exit(1);
    }
}
