use covclock::align::{alignment_probability, alignment_probability_timeavg_oracle};
use covclock::clock::{quasi_ideal_state, random_state, time_basis_state, ClockState, Generator};
use covclock::linalg::cis;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_sum_matches_time_average(d in 2usize..=64, kind in 0u8..3, seed in any::<u64>()) {
        let gen = Generator::clock(d, 1.0).unwrap();
        let frame = match kind {
            0 => time_basis_state(d, (seed % d as u64) as i64).unwrap(),
            1 => quasi_ideal_state(d, 0.0, (d as f64 - 1.0) / 2.0, (d as f64).sqrt()).unwrap(),
            _ => random_state(d, &mut ChaCha8Rng::seed_from_u64(seed)),
        };
        let a = alignment_probability(&frame, &gen).unwrap();
        let b = alignment_probability_timeavg_oracle(&frame, &gen, 2 * d + 1).unwrap();
        prop_assert!((a.p - b.p).abs() < 1e-10);
        prop_assert!((a.p - (a.a1 - a.a2) / a.a1).abs() < 1e-12);
        prop_assert!(a.p >= 0.0 && a.p <= 1.0 + 1e-9);
    }

    #[test]
    fn only_populations_matter(d in 2usize..=40, seed in any::<u64>(), phase_seed in any::<u64>()) {
        let gen = Generator::clock(d, 1.0).unwrap();
        let frame = random_state(d, &mut ChaCha8Rng::seed_from_u64(seed));
        let phases = random_state(d, &mut ChaCha8Rng::seed_from_u64(phase_seed));
        let rotated: Vec<_> = frame
            .amplitudes
            .iter()
            .zip(phases.amplitudes.iter())
            .map(|(c, p)| c * cis(p.arg() * 3.0))
            .collect();
        let twisted = ClockState::custom(rotated).unwrap();
        let a = alignment_probability(&frame, &gen).unwrap().p;
        let b = alignment_probability(&twisted, &gen).unwrap().p;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn swp_alignment_error_decreases_with_dimension() {
    let mut last = f64::INFINITY;
    for d in 2..=128 {
        let p = alignment_probability(&time_basis_state(d, 0).unwrap(), &Generator::clock(d, 1.0).unwrap()).unwrap().p;
        assert!(p < last, "d={d}");
        last = p;
    }
}
