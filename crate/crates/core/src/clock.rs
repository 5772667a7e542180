//! Finite clocks: time basis, SWP and Quasi-Ideal states, evolution and the
//! L-site effective clock.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape, Error, Result};
use crate::linalg::{cis, CMatrix, CVector, C64, ZERO};

/// Integer energy levels `h_n` with a common frequency, `H = ω Σ h_n |n><n|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    levels: Vec<i64>,
    omega: f64,
}

impl Generator {
    pub fn new(levels: Vec<i64>, omega: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidDimension("generator needs at least one level".into()));
        }
        if let Some(h) = levels.iter().find(|&&h| h < 0) {
            return Err(Error::Parameter(format!("negative energy level {h}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Parameter(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { levels, omega })
    }

    /// Non-degenerate clock generator with levels `0..d`.
    pub fn clock(d: usize, omega: f64) -> Result<Self> {
        Self::new((0..d as i64).collect(), omega)
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Spread of the spectrum, `max h - min h`.
    pub fn delta_h(&self) -> i64 {
        let max = self.levels.iter().copied().max().unwrap_or(0);
        let min = self.levels.iter().copied().min().unwrap_or(0);
        max - min
    }

    pub fn is_trivial(&self) -> bool {
        self.delta_h() == 0
    }

    /// Recurrence time `T0 = 2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn hamiltonian(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.levels.iter().map(|&h| C64::new(self.omega * h as f64, 0.0)),
        ))
    }

    /// `exp(-i t H)`.
    pub fn unitary(&self, t: f64) -> CMatrix {
        crate::linalg::diag_phase(&self.levels, -self.omega * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClockKind {
    Swp { k0: i64 },
    QuasiIdeal { k1_0: f64, n0: f64, sigma: f64 },
    Custom,
}

/// Parameters for building a clock of a given (effective) dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum ClockSpec {
    Swp { k0: i64 },
    /// `n0 = None` picks the centred default `(d-1)/2`.
    QuasiIdeal { k1_0: f64, n0: Option<f64>, sigma: f64 },
}

impl ClockSpec {
    pub fn build(&self, d: usize) -> Result<ClockState> {
        match *self {
            ClockSpec::Swp { k0 } => time_basis_state(d, k0),
            ClockSpec::QuasiIdeal { k1_0, n0, sigma } => {
                let n0 = n0.unwrap_or((d as f64 - 1.0) / 2.0);
                quasi_ideal_state(d, k1_0, n0, sigma)
            }
        }
    }

    /// Nominal peak position in the time basis.
    pub fn k0(&self) -> f64 {
        match *self {
            ClockSpec::Swp { k0 } => k0 as f64,
            ClockSpec::QuasiIdeal { k1_0, .. } => k1_0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockState {
    /// Effective dimension; equals `site_dim` unless `embed_factor > 1`.
    pub dim: usize,
    pub site_dim: usize,
    pub embed_factor: usize,
    pub amplitudes: CVector,
    pub kind: ClockKind,
}

impl ClockState {
    /// Arbitrary state from raw amplitudes; normalised on construction.
    pub fn custom(amplitudes: Vec<C64>) -> Result<Self> {
        let d = amplitudes.len();
        if d == 0 {
            return Err(Error::InvalidDimension("empty amplitude vector".into()));
        }
        let v = CVector::from_vec(amplitudes);
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Parameter("amplitude vector has zero norm".into()));
        }
        Ok(Self {
            dim: d,
            site_dim: d,
            embed_factor: 1,
            amplitudes: v.unscale(n),
            kind: ClockKind::Custom,
        })
    }

    pub fn density(&self) -> CMatrix {
        crate::linalg::projector(&self.amplitudes)
    }

    /// Energy populations `|c_r|^2`.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Overlap `<θ_k|ψ>`.
    pub fn time_overlap(&self, k: i64) -> C64 {
        time_basis_vector(self.dim, k).dotc(&self.amplitudes)
    }
}

pub fn time_basis_vector(d: usize, k: i64) -> CVector {
    let norm = 1.0 / (d as f64).sqrt();
    let k = k.rem_euclid(d as i64);
    CVector::from_iterator(
        d,
        (0..d).map(|r| cis(-2.0 * PI * (k as f64) * (r as f64) / d as f64) * norm),
    )
}

/// `|θ_k>` with `k` taken mod `d`.
pub fn time_basis_state(d: usize, k: i64) -> Result<ClockState> {
    if d == 0 {
        return Err(Error::InvalidDimension("clock dimension must be at least 1".into()));
    }
    Ok(ClockState {
        dim: d,
        site_dim: d,
        embed_factor: 1,
        amplitudes: time_basis_vector(d, k),
        kind: ClockKind::Swp {
            k0: k.rem_euclid(d as i64),
        },
    })
}

/// The window `S_d(k1_0)`: integers `k` with `-d/2 <= k1_0 - k < d/2`, ascending.
pub fn window(d: usize, k1_0: f64) -> Vec<i64> {
    let top = (k1_0 + d as f64 / 2.0).floor() as i64;
    ((top - d as i64 + 1)..=top).collect()
}

fn gaussian_weights(d: usize, k1_0: f64, n0: f64, sigma: f64) -> Vec<(i64, C64)> {
    window(d, k1_0)
        .into_iter()
        .map(|k| {
            let x = k as f64 - k1_0;
            let env = (-PI * x * x / (sigma * sigma)).exp();
            (k, cis(2.0 * PI * n0 * x / d as f64) * env)
        })
        .collect()
}

/// Normalisation constant `A` of the Quasi-Ideal state, computed by summation.
pub fn quasi_ideal_normalization(d: usize, k1_0: f64, sigma: f64) -> f64 {
    let s: f64 = gaussian_weights(d, k1_0, 0.0, sigma)
        .iter()
        .map(|(_, w)| w.norm_sqr())
        .sum();
    1.0 / s.sqrt()
}

pub fn quasi_ideal_state(d: usize, k1_0: f64, n0: f64, sigma: f64) -> Result<ClockState> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("quasi-ideal clock needs d >= 2, got {d}")));
    }
    if !(sigma > 0.0 && sigma < d as f64) {
        return Err(Error::Parameter(format!("sigma must lie in (0, {d}), got {sigma}")));
    }
    if !(n0 > 0.0 && n0 < d as f64 - 1.0) {
        return Err(Error::Parameter(format!("n0 must lie in (0, {}), got {n0}", d - 1)));
    }
    if !k1_0.is_finite() {
        return Err(Error::Parameter("k1_0 must be finite".into()));
    }
    let mut amps = CVector::from_element(d, ZERO);
    for (k, w) in gaussian_weights(d, k1_0, n0, sigma) {
        amps += time_basis_vector(d, k) * w;
    }
    let n = amps.norm();
    Ok(ClockState {
        dim: d,
        site_dim: d,
        embed_factor: 1,
        amplitudes: amps.unscale(n),
        kind: ClockKind::QuasiIdeal { k1_0, n0, sigma },
    })
}

/// Applies `exp(-i t H)` to the clock.
pub fn evolve(state: &ClockState, t: f64, gen: &Generator) -> Result<ClockState> {
    if gen.dim() != state.dim {
        return Err(shape(state.dim, gen.dim()));
    }
    let w = gen.omega();
    let amps = CVector::from_iterator(
        state.dim,
        state
            .amplitudes
            .iter()
            .zip(gen.levels())
            .map(|(&a, &h)| a * cis(-w * h as f64 * t)),
    );
    Ok(ClockState {
        amplitudes: amps,
        ..state.clone()
    })
}

/// Effective clock of `l` entangled sites of dimension `site_dim`, living on
/// the non-degenerate subspace of dimension `l(site_dim - 1) + 1`.
pub fn embed_l(site_dim: usize, l: usize, spec: &ClockSpec) -> Result<ClockState> {
    if l == 0 {
        return Err(Error::Parameter("L must be at least 1".into()));
    }
    if site_dim < 2 {
        return Err(Error::InvalidDimension(format!("per-site dimension must be >= 2, got {site_dim}")));
    }
    let mut st = spec.build(effective_dim(site_dim, l))?;
    st.site_dim = site_dim;
    st.embed_factor = l;
    Ok(st)
}

pub fn effective_dim(site_dim: usize, l: usize) -> usize {
    l * (site_dim - 1) + 1
}

/// Index of the first product basis vector (lexicographic, most significant
/// site first) whose digits sum to `r`.
pub fn first_product_index(site_dim: usize, l: usize, r: usize) -> usize {
    let mut rem = r;
    let mut digits = vec![0usize; l];
    for slot in digits.iter_mut().rev() {
        let take = rem.min(site_dim - 1);
        *slot = take;
        rem -= take;
    }
    digits.iter().fold(0, |acc, &x| acc * site_dim + x)
}

/// Energy levels of `l` sites with levels `0..site_dim`: the digit sums.
pub fn product_levels(site_dim: usize, l: usize) -> Vec<i64> {
    (0..site_dim.pow(l as u32))
        .map(|mut i| {
            let mut s = 0;
            for _ in 0..l {
                s += (i % site_dim) as i64;
                i /= site_dim;
            }
            s
        })
        .collect()
}

/// Writes an effective-subspace vector into the full `site_dim^l` product space.
pub fn materialize_vector(v: &CVector, site_dim: usize, l: usize) -> CVector {
    let mut out = CVector::from_element(site_dim.pow(l as u32), ZERO);
    for (r, &c) in v.iter().enumerate() {
        out[first_product_index(site_dim, l, r)] = c;
    }
    out
}

/// Builds the time operator `Σ_k (k T0/d) |θ_k><θ_k|`.
pub fn time_operator(d: usize, omega: f64) -> CMatrix {
    let t0 = 2.0 * PI / omega;
    let mut out = CMatrix::zeros(d, d);
    for k in 0..d {
        let v = time_basis_vector(d, k as i64);
        out += crate::linalg::projector(&v) * C64::new(k as f64 * t0 / d as f64, 0.0);
    }
    out
}

/// Frobenius norm of the part of `U(t) ρ U(t)†` off the diagonal of the time basis.
pub fn time_offdiag_norm(state: &ClockState, gen: &Generator, t: f64) -> Result<f64> {
    let evolved = evolve(state, t, gen)?;
    let d = state.dim;
    let coeffs: Vec<C64> = (0..d).map(|k| evolved.time_overlap(k as i64)).collect();
    let mut s = 0.0;
    for (j, a) in coeffs.iter().enumerate() {
        for (k, b) in coeffs.iter().enumerate() {
            if j != k {
                s += (a * b.conj()).norm_sqr();
            }
        }
    }
    Ok(s.sqrt())
}

/// Grid check for time-basis diagonality somewhere along the orbit.
pub fn is_t_incoherent(state: &ClockState, gen: &Generator, grid: usize, tol: f64) -> Result<bool> {
    if grid < state.dim {
        return Err(Error::Parameter(format!("grid {grid} smaller than dimension {}", state.dim)));
    }
    let t0 = gen.period();
    let mut best = f64::INFINITY;
    for g in 0..grid {
        best = best.min(time_offdiag_norm(state, gen, t0 * g as f64 / grid as f64)?);
    }
    Ok(best < tol)
}

pub fn random_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ClockState {
    let amps: Vec<C64> = (0..d)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    ClockState::custom(amps).expect("gaussian vector is nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_distance;

    fn close(a: &CVector, b: &CVector, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn trivial_and_two_dim_time_states() {
        let s = time_basis_state(1, 0).unwrap();
        assert!((s.amplitudes[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let s = time_basis_state(2, 0).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!(s.amplitudes.iter().all(|a| (a - C64::new(h, 0.0)).norm() < 1e-15));
        assert!(matches!(time_basis_state(0, 0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn time_basis_orthonormal_up_to_64() {
        for d in 1..=64usize {
            let vs: Vec<CVector> = (0..d).map(|k| time_basis_vector(d, k as i64)).collect();
            for j in 0..d {
                for k in 0..d {
                    let ip = vs[j].dotc(&vs[k]);
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!((ip - C64::new(want, 0.0)).norm() < 1e-12, "d={d} j={j} k={k}");
                }
            }
        }
    }

    #[test]
    fn index_taken_mod_d() {
        assert!(close(&time_basis_vector(6, -1), &time_basis_vector(6, 5), 1e-13));
        assert!(close(&time_basis_vector(6, 13), &time_basis_vector(6, 1), 1e-13));
    }

    #[test]
    fn shift_by_one_tick() {
        for d in [2usize, 5, 16, 64] {
            let gen = Generator::clock(d, 1.3).unwrap();
            for k in 0..d as i64 {
                for l in [1i64, 3, -2] {
                    let s = time_basis_state(d, k).unwrap();
                    let e = evolve(&s, l as f64 * gen.period() / d as f64, &gen).unwrap();
                    let target = time_basis_vector(d, k + l);
                    assert!(target.dotc(&e.amplitudes).norm() > 1.0 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn recurrence_after_one_period() {
        let gen = Generator::new(vec![0, 3, 1, 7, 2], 0.7).unwrap();
        let s = ClockState::custom(vec![
            C64::new(1.0, 0.2),
            C64::new(0.3, -0.4),
            C64::new(0.0, 1.0),
            C64::new(-0.5, 0.5),
            C64::new(0.2, 0.0),
        ])
        .unwrap();
        let e = evolve(&s, gen.period(), &gen).unwrap();
        assert!(trace_distance(&e.density(), &s.density()) < 1e-12);
        assert!(evolve(&s, 0.0, &gen).unwrap() == s);
    }

    #[test]
    fn window_is_half_open() {
        assert_eq!(window(4, 0.0), vec![-1, 0, 1, 2]);
        assert_eq!(window(5, 0.0), vec![-2, -1, 0, 1, 2]);
        assert_eq!(window(4, 0.5), vec![-1, 0, 1, 2]);
        assert_eq!(window(8, 0.5).len(), 8);
    }

    #[test]
    fn quasi_ideal_peaks_at_centre() {
        let s = quasi_ideal_state(8, 0.0, 3.5, 2.0).unwrap();
        assert!((s.amplitudes.norm() - 1.0).abs() < 1e-12);
        let ov: Vec<f64> = (0..8).map(|k| s.time_overlap(k).norm()).collect();
        let argmax = (0..8).max_by(|&a, &b| ov[a].total_cmp(&ov[b])).unwrap();
        assert_eq!(argmax, 0);
        assert!(ov[4] < ov[1]);
    }

    #[test]
    fn quasi_ideal_parameter_errors() {
        assert!(matches!(quasi_ideal_state(8, 0.0, 3.5, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(quasi_ideal_state(8, 0.0, 3.5, 8.0), Err(Error::Parameter(_))));
        assert!(matches!(quasi_ideal_state(8, 0.0, 7.0, 2.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn normalization_close_to_leading_value() {
        for d in [16usize, 32, 64, 128] {
            let mut sigma = 2.0;
            while d as f64 / sigma >= 4.0 {
                let a = quasi_ideal_normalization(d, 0.0, sigma);
                let lead = (2f64.sqrt() / sigma).sqrt();
                assert!((a / lead - 1.0).abs() < 0.1, "d={d} sigma={sigma}");
                sigma *= 1.5;
            }
        }
    }

    #[test]
    fn embedding_dimensions() {
        let spec = ClockSpec::QuasiIdeal { k1_0: 0.0, n0: None, sigma: 1.5 };
        let one = embed_l(3, 1, &spec).unwrap();
        let plain = spec.build(3).unwrap();
        assert_eq!(one.dim, 3);
        assert!((one.amplitudes - plain.amplitudes).norm() < 1e-14);
        assert_eq!(embed_l(3, 2, &spec).unwrap().dim, 5);
        assert_eq!(embed_l(5, 3, &spec).unwrap().dim, 13);
        assert!(matches!(embed_l(3, 0, &spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn product_levels_and_first_index() {
        let lv = product_levels(3, 2);
        assert_eq!(lv, vec![0, 1, 2, 1, 2, 3, 2, 3, 4]);
        for r in 0..5 {
            let i = first_product_index(3, 2, r);
            assert_eq!(lv[i], r as i64);
            assert!(lv[..i].iter().all(|&h| h != r as i64));
        }
    }

    #[test]
    fn t_incoherence_examples() {
        let d = 16;
        let gen = Generator::clock(d, 1.0).unwrap();
        let swp = time_basis_state(d, 3).unwrap();
        assert!(is_t_incoherent(&swp, &gen, 8 * d, 1e-9).unwrap());
        let mut e = vec![C64::new(0.0, 0.0); d];
        e[5] = C64::new(1.0, 0.0);
        let eig = ClockState::custom(e).unwrap();
        assert!(!is_t_incoherent(&eig, &gen, 8 * d, 1e-9).unwrap());
        let qi = quasi_ideal_state(d, 0.0, 7.5, 4.0).unwrap();
        assert!(!is_t_incoherent(&qi, &gen, 8 * d, 1e-9).unwrap());
    }

    #[test]
    fn time_operator_eigenvectors() {
        let d = 6;
        let t = time_operator(d, 2.0);
        for k in 0..d {
            let v = time_basis_vector(d, k as i64);
            let tv = &t * &v;
            let want = v * C64::new(k as f64 * PI / d as f64, 0.0);
            assert!((tv - want).norm() < 1e-12);
        }
    }
}
