//! Quick invariant suite behind `covclock verify`.

use crate::clock::{embed_l, evolve, quasi_ideal_state, time_basis_state, time_basis_vector, ClockSpec, Generator};
use crate::codes::{covariant_encode, covariant_encode_quadrature, make_identity_code, CovariantCode};
use crate::linalg::{trace_distance, CMatrix, C64};
use crate::pipeline::{full_channel, full_channel_with_table, FTable, KAlphaPolicy};

type Check = (String, Result<(), String>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: crate::Error) -> String {
    e.to_string()
}

fn plus_state() -> CMatrix {
    CMatrix::from_element(2, 2, C64::new(0.5, 0.0))
}

fn time_basis() -> Result<(), String> {
    for d in 1..=32usize {
        for j in 0..d {
            for k in 0..d {
                let ip = time_basis_vector(d, j as i64).dotc(&time_basis_vector(d, k as i64));
                let want = if j == k { 1.0 } else { 0.0 };
                ensure((ip - C64::new(want, 0.0)).norm() < 1e-12, || format!("d={d} <{j}|{k}> = {ip}"))?;
            }
        }
    }
    Ok(())
}

fn shift_and_recurrence() -> Result<(), String> {
    for d in [3usize, 8, 17] {
        let gen = Generator::clock(d, 1.0).map_err(err)?;
        let s = quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, 1.5).map_err(err)?;
        let back = evolve(&s, gen.period(), &gen).map_err(err)?;
        ensure(trace_distance(&back.density(), &s.density()) < 1e-12, || format!("recurrence d={d}"))?;
        let t = time_basis_state(d, 1).map_err(err)?;
        let e = evolve(&t, 2.0 * gen.period() / d as f64, &gen).map_err(err)?;
        ensure(time_basis_vector(d, 3).dotc(&e.amplitudes).norm() > 1.0 - 1e-12, || format!("shift d={d}"))?;
    }
    Ok(())
}

fn twirl_routes() -> Result<(), String> {
    let base = make_identity_code(2, &[0, 1], &[0, 1]).map_err(err)?;
    let code = CovariantCode::new(base, vec![quasi_ideal_state(5, 0.0, 2.0, 1.5).map_err(err)?]).map_err(err)?;
    let exact = covariant_encode(&code, &plus_state()).map_err(err)?;
    let quad = covariant_encode_quadrature(&code, &plus_state(), 64).map_err(err)?;
    let gap = (exact - quad).norm();
    ensure(gap < 1e-12, || format!("sector sum and quadrature differ by {gap:e}"))
}

fn f_routes() -> Result<(), String> {
    let a = quasi_ideal_state(8, 0.0, 3.5, 2.0).map_err(err)?;
    let b = time_basis_state(8, 3).map_err(err)?;
    let clocks = [&a, &b];
    let t = FTable::compute(&clocks, 2).map_err(err)?;
    let g = FTable::compute_grid(&clocks, 2, FTable::exact_grid(8, 2, 2)).map_err(err)?;
    let mut total = 0.0;
    for i in 0..t.outcomes() {
        total += t.f0(i);
        for q in -2..=2 {
            let gap = (t.get(q, i) - g.get(q, i)).norm();
            ensure(gap < 1e-9, || format!("outcome {i} Q={q}: routes differ by {gap:e}"))?;
        }
    }
    ensure((total - 1.0).abs() < 1e-10, || format!("sum of F0 is {total}"))
}

fn channel_laws() -> Result<(), String> {
    for d in [4usize, 9, 16] {
        let base = make_identity_code(2, &[0, 1], &[0, 0]).map_err(err)?;
        let code = CovariantCode::new(base, vec![quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, (d as f64).sqrt()).map_err(err)?])
            .map_err(err)?;
        let ch = full_channel(&code, &KAlphaPolicy::SingleClock { k1_0: 0.0 }, 0).map_err(err)?;
        ch.validate(1e-9, 1e-8).map_err(err)?;
    }
    Ok(())
}

fn l_site() -> Result<(), String> {
    let spec = ClockSpec::QuasiIdeal { k1_0: 0.0, n0: None, sigma: 2.0 };
    let base = make_identity_code(2, &[0, 1], &[0, 0]).map_err(err)?;
    let block = embed_l(3, 2, &spec).map_err(err)?;
    let code_b = CovariantCode::new(base.clone(), vec![block]).map_err(err)?;
    let code_s = CovariantCode::new(base, vec![spec.build(5).map_err(err)?]).map_err(err)?;
    let pol = KAlphaPolicy::SingleClock { k1_0: 0.0 };
    let tm = FTable::compute_materialized(&code_b.surviving(), 1, 32).map_err(err)?;
    let km = full_channel_with_table(&code_b, &tm, &pol, 0).map_err(err)?;
    let ks = full_channel(&code_s, &pol, 0).map_err(err)?;
    let dist = km.choi_distance(&ks);
    ensure(dist < 1e-10, || format!("materialized block differs by {dist:e}"))
}

fn alignment() -> Result<(), String> {
    for d in [8usize, 16, 33] {
        let gen = Generator::clock(d, 1.0).map_err(err)?;
        let s = quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, 2.0).map_err(err)?;
        let a = crate::align::alignment_probability(&s, &gen).map_err(err)?;
        let b = crate::align::alignment_probability_timeavg_oracle(&s, &gen, 4 * d).map_err(err)?;
        ensure((a.p - b.p).abs() < 1e-10, || format!("d={d}: {} vs {}", a.p, b.p))?;
    }
    Ok(())
}

fn middle_angle() -> Result<(), String> {
    let got = crate::phase3::middle_angle_int([10, 2, 9], 12);
    ensure(got == (10, 1), || format!("middle of (10,2,9) gave {got:?}"))
}

fn stationarity() -> Result<(), String> {
    let base = make_identity_code(2, &[0, 0], &[0, 1]).map_err(err)?;
    let code = CovariantCode::new(base, vec![quasi_ideal_state(16, 0.0, 7.5, 4.0).map_err(err)?]).map_err(err)?;
    let s = crate::pipeline::stationarity(&code, &plus_state()).map_err(err)?;
    ensure(s < 1e-10, || format!("commutator norm {s:e}"))
}

pub fn run_all() -> Vec<Check> {
    let checks: Vec<(&str, fn() -> Result<(), String>)> = vec![
        ("time basis orthonormal", time_basis),
        ("clock shift and recurrence", shift_and_recurrence),
        ("twirl sector sum matches quadrature", twirl_routes),
        ("F_Q delta sum matches grid", f_routes),
        ("channel is CPTP", channel_laws),
        ("materialized L-site block", l_site),
        ("alignment routes agree", alignment),
        ("middle angle", middle_angle),
        ("encoded state stationary", stationarity),
    ];
    checks.into_iter().map(|(n, f)| (n.to_string(), f())).collect()
}
