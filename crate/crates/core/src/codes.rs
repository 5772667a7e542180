//! Base codes and the covariant encoder built by exact energy-sector twirling.

use std::collections::BTreeSet;

use crate::clock::{ClockState, Generator};
use crate::error::{shape, Error, Result};
use crate::linalg::{commutator, is_isometry, min_eigenvalue, unit, CMatrix, CVector, ONE, ZERO};

pub const DEFAULT_OMEGA: f64 = 1.0;

/// A channel given by Kraus operators `K_i` of shape `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    pub in_dim: usize,
    pub out_dim: usize,
    pub ops: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Validation("channel needs at least one Kraus operator".into()))?;
        let (out_dim, in_dim) = first.shape();
        for k in &ops {
            if k.shape() != (out_dim, in_dim) {
                return Err(shape(format!("{out_dim}x{in_dim}"), format!("{}x{}", k.nrows(), k.ncols())));
            }
        }
        let ch = Self { in_dim, out_dim, ops };
        let dev = ch.completeness_deviation();
        if dev > 1e-12 {
            return Err(Error::Validation(format!("Kraus completeness violated by {dev:e}")));
        }
        Ok(ch)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            in_dim: d,
            out_dim: d,
            ops: vec![CMatrix::identity(d, d)],
        }
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        if !crate::linalg::is_unitary(&u, 1e-12) {
            return Err(Error::Validation("operator is not unitary".into()));
        }
        Self::new(vec![u])
    }

    /// `||Σ K†K - I||_F`.
    pub fn completeness_deviation(&self) -> f64 {
        let mut s = CMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.ops {
            s += k.adjoint() * k;
        }
        (s - CMatrix::identity(self.in_dim, self.in_dim)).norm()
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.ops {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// Matrix `S[(m,m'),(q,q')] = Σ_i K_i[m,q] conj(K_i[m',q'])` acting on
    /// row-major vectorised operators.
    pub fn superoperator(&self) -> CMatrix {
        let (o, n) = (self.out_dim, self.in_dim);
        let mut s = CMatrix::zeros(o * o, n * n);
        for k in &self.ops {
            for m in 0..o {
                for mp in 0..o {
                    for q in 0..n {
                        let kq = k[(m, q)];
                        if kq == ZERO {
                            continue;
                        }
                        for qp in 0..n {
                            s[(m * o + mp, q * n + qp)] += kq * k[(mp, qp)].conj();
                        }
                    }
                }
            }
        }
        s
    }
}

/// Encoder isometry with paired error channels and decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCode {
    pub d_l: usize,
    pub d_p: usize,
    /// `d_p x d_l` isometry.
    pub encoder: CMatrix,
    pub errors: Vec<KrausChannel>,
    pub decoders: Vec<KrausChannel>,
    pub gen_l: Generator,
    pub gen_co: Generator,
}

impl BaseCode {
    pub fn new(
        encoder: CMatrix,
        errors: Vec<KrausChannel>,
        decoders: Vec<KrausChannel>,
        gen_l: Generator,
        gen_co: Generator,
    ) -> Result<Self> {
        let (d_p, d_l) = encoder.shape();
        if d_l == 0 || d_p < d_l {
            return Err(Error::InvalidDimension(format!("encoder shape {d_p}x{d_l}")));
        }
        if !is_isometry(&encoder, 1e-12) {
            return Err(Error::Validation("encoder is not an isometry".into()));
        }
        if gen_l.dim() != d_l {
            return Err(shape(d_l, gen_l.dim()));
        }
        if gen_co.dim() != d_p {
            return Err(shape(d_p, gen_co.dim()));
        }
        if (gen_l.omega() - gen_co.omega()).abs() > 1e-15 {
            return Err(Error::Validation("logical and physical generators use different frequencies".into()));
        }
        if errors.is_empty() || errors.len() != decoders.len() {
            return Err(Error::Validation(format!(
                "need paired errors and decoders, got {} and {}",
                errors.len(),
                decoders.len()
            )));
        }
        for e in &errors {
            if e.in_dim != d_p || e.out_dim != d_p {
                return Err(shape(format!("{d_p}->{d_p} error"), format!("{}->{}", e.in_dim, e.out_dim)));
            }
        }
        for dch in &decoders {
            if dch.in_dim != d_p || dch.out_dim != d_l {
                return Err(shape(format!("{d_p}->{d_l} decoder"), format!("{}->{}", dch.in_dim, dch.out_dim)));
            }
        }
        let code = Self { d_l, d_p, encoder, errors, decoders, gen_l, gen_co };
        for j in 0..code.errors.len() {
            let dev = code.recovery_deviation(j);
            if dev > 1e-10 {
                return Err(Error::Validation(format!("decoder {j} fails perfect recovery by {dev:e}")));
            }
        }
        Ok(code)
    }

    pub fn omega(&self) -> f64 {
        self.gen_l.omega()
    }

    pub fn encode(&self, rho: &CMatrix) -> CMatrix {
        &self.encoder * rho * self.encoder.adjoint()
    }

    /// Largest `||D_j(E_j(E(|a><b|))) - |a><b|||_F` over the operator basis.
    pub fn recovery_deviation(&self, j: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.d_l {
            for b in 0..self.d_l {
                let e = unit(self.d_l, a, b);
                let out = self.decoders[j].apply(&self.errors[j].apply(&self.encode(&e)));
                worst = worst.max((out - e).norm());
            }
        }
        worst
    }
}

/// `V = I`, one trivial error, identity decoder.
pub fn make_identity_code(d: usize, levels_l: &[i64], levels_co: &[i64]) -> Result<BaseCode> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("identity code needs d >= 2, got {d}")));
    }
    BaseCode::new(
        CMatrix::identity(d, d),
        vec![KrausChannel::identity(d)],
        vec![KrausChannel::identity(d)],
        Generator::new(levels_l.to_vec(), DEFAULT_OMEGA)?,
        Generator::new(levels_co.to_vec(), DEFAULT_OMEGA)?,
    )
}

/// Isometry `V` with known unitary errors `U_j`; the decoder undoes `U_j V` and
/// sends the orthogonal complement to `|0>`.
pub fn make_unitary_conjugation_code(
    v: CMatrix,
    noise: Vec<CMatrix>,
    levels_l: &[i64],
    levels_co: &[i64],
) -> Result<BaseCode> {
    let (d_p, d_l) = v.shape();
    if !is_isometry(&v, 1e-12) {
        return Err(Error::Validation("encoder is not an isometry".into()));
    }
    let mut errors = Vec::with_capacity(noise.len());
    let mut decoders = Vec::with_capacity(noise.len());
    for u in noise {
        if u.shape() != (d_p, d_p) {
            return Err(shape(format!("{d_p}x{d_p}"), format!("{}x{}", u.nrows(), u.ncols())));
        }
        let uv = &u * &v;
        let perp = CMatrix::identity(d_p, d_p) - &uv * uv.adjoint();
        let mut ops = vec![uv.adjoint()];
        if perp.norm() > 1e-12 {
            for i in 0..d_p {
                let mut k = CMatrix::zeros(d_l, d_p);
                k.set_row(0, &perp.row(i));
                ops.push(k);
            }
        }
        errors.push(KrausChannel::unitary(u)?);
        decoders.push(KrausChannel::new(ops)?);
    }
    BaseCode::new(
        v,
        errors,
        decoders,
        Generator::new(levels_l.to_vec(), DEFAULT_OMEGA)?,
        Generator::new(levels_co.to_vec(), DEFAULT_OMEGA)?,
    )
}

/// Base code plus `M` clocks, some of which may be erased.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariantCode {
    pub base: BaseCode,
    pub clocks: Vec<ClockState>,
    pub erased: BTreeSet<usize>,
}

impl CovariantCode {
    pub fn new(base: BaseCode, clocks: Vec<ClockState>) -> Result<Self> {
        let d = clocks
            .first()
            .ok_or_else(|| Error::Validation("at least one clock is required".into()))?
            .dim;
        if let Some(c) = clocks.iter().find(|c| c.dim != d) {
            return Err(shape(format!("clock dimension {d}"), c.dim));
        }
        Ok(Self { base, clocks, erased: BTreeSet::new() })
    }

    pub fn with_erased(mut self, erased: impl IntoIterator<Item = usize>) -> Result<Self> {
        self.erased = erased.into_iter().collect();
        if let Some(&i) = self.erased.iter().find(|&&i| i >= self.clocks.len()) {
            return Err(Error::Parameter(format!("erased clock {i} does not exist")));
        }
        if self.erased.len() == self.clocks.len() {
            return Err(Error::Parameter("every clock is erased".into()));
        }
        Ok(self)
    }

    pub fn clock_dim(&self) -> usize {
        self.clocks[0].dim
    }

    pub fn clock_generator(&self) -> Generator {
        Generator::clock(self.clock_dim(), self.base.omega()).expect("clock dimension is positive")
    }

    pub fn surviving(&self) -> Vec<&ClockState> {
        self.clocks
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.erased.contains(i))
            .map(|(_, c)| c)
            .collect()
    }

    /// Largest |Q| that can occur: `Δh_L + Δh_Co`.
    pub fn q_max(&self) -> i64 {
        self.base.gen_l.delta_h() + self.base.gen_co.delta_h()
    }

    /// Total energy levels on `P ⊗ clocks` (all `M` clocks).
    pub fn total_levels(&self) -> Vec<i64> {
        let mut levels = self.base.gen_co.levels().to_vec();
        for c in &self.clocks {
            let mut next = Vec::with_capacity(levels.len() * c.dim);
            for &h in &levels {
                next.extend((0..c.dim as i64).map(|r| h + r));
            }
            levels = next;
        }
        levels
    }

    pub fn total_hamiltonian(&self) -> CMatrix {
        Generator::new(self.total_levels(), self.base.omega())
            .expect("levels are non-negative")
            .hamiltonian()
    }
}

fn clock_product(clocks: &[ClockState]) -> CVector {
    let mut v = CVector::from_element(1, ONE);
    for c in clocks {
        v = v.kronecker(&c.amplitudes);
    }
    v
}

pub(crate) fn check_density(rho: &CMatrix, d: usize) -> Result<()> {
    if rho.shape() != (d, d) {
        return Err(shape(format!("{d}x{d}"), format!("{}x{}", rho.nrows(), rho.ncols())));
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > 1e-10 {
        return Err(Error::Validation(format!("trace is {tr}, expected 1")));
    }
    let min = min_eigenvalue(rho);
    if min < -1e-9 {
        return Err(Error::NotPsd { min_eig: min });
    }
    Ok(())
}

/// Linear extension of the covariant encoder to any logical operator.
pub fn covariant_encode_linear(code: &CovariantCode, op: &CMatrix) -> Result<CMatrix> {
    let b = &code.base;
    if op.shape() != (b.d_l, b.d_l) {
        return Err(shape(format!("{}x{}", b.d_l, b.d_l), format!("{}x{}", op.nrows(), op.ncols())));
    }
    let psi = clock_product(&code.clocks);
    let nc = psi.len();
    let clock_energy: Vec<i64> = code.total_levels()[..nc].to_vec();
    let (hl, hco) = (b.gen_l.levels(), b.gen_co.levels());
    let dim = b.d_p * nc;
    let mut out = CMatrix::zeros(dim, dim);
    for a in 0..b.d_l {
        for bb in 0..b.d_l {
            let w = op[(a, bb)];
            if w == ZERO {
                continue;
            }
            let dl = hl[a] - hl[bb];
            for q in 0..b.d_p {
                let vq = b.encoder[(q, a)] * w;
                for qp in 0..b.d_p {
                    let x = vq * b.encoder[(qp, bb)].conj();
                    if x == ZERO {
                        continue;
                    }
                    let big_q = hco[q] - hco[qp] - dl;
                    for i in 0..nc {
                        let xi = x * psi[i];
                        for j in 0..nc {
                            if big_q + clock_energy[i] - clock_energy[j] == 0 {
                                out[(q * nc + i, qp * nc + j)] += xi * psi[j].conj();
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Group-averaged encoding `∫ dt W(t) [E(U_L†ρU_L) ⊗ ρ_C] W(t)†`, computed
/// as an energy-sector sum.
pub fn covariant_encode(code: &CovariantCode, rho_l: &CMatrix) -> Result<CMatrix> {
    check_density(rho_l, code.base.d_l)?;
    covariant_encode_linear(code, rho_l)
}

/// Uniform-grid time average of the same twirl. Exact once `grid` exceeds the
/// largest frequency present.
pub fn covariant_encode_quadrature(code: &CovariantCode, rho_l: &CMatrix, grid: usize) -> Result<CMatrix> {
    let b = &code.base;
    let nc: usize = code.clocks.iter().map(|c| c.dim).product();
    let spread = b.gen_l.delta_h() + b.gen_co.delta_h()
        + code.clocks.iter().map(|c| c.dim as i64 - 1).sum::<i64>();
    if grid as i64 <= spread {
        return Err(Error::GridTooSmall { grid, needed: spread as usize });
    }
    let psi = clock_product(&code.clocks);
    let rho_c = crate::linalg::projector(&psi);
    let total = Generator::new(code.total_levels(), b.omega())?;
    let t0 = b.gen_l.period();
    let mut acc = CMatrix::zeros(b.d_p * nc, b.d_p * nc);
    for g in 0..grid {
        let t = t0 * g as f64 / grid as f64;
        let ul = b.gen_l.unitary(t);
        let inner = b.encode(&(ul.adjoint() * rho_l * &ul));
        let w = total.unitary(t);
        acc += &w * inner.kronecker(&rho_c) * w.adjoint();
    }
    Ok(acc.unscale(grid as f64))
}

/// Choi matrix `Σ_ab E_cov(|a><b|) ⊗ |a><b|` of the covariant encoder.
pub fn covariant_encode_choi(code: &CovariantCode) -> Result<CMatrix> {
    let dl = code.base.d_l;
    let mut choi: Option<CMatrix> = None;
    for a in 0..dl {
        for b in 0..dl {
            let term = covariant_encode_linear(code, &unit(dl, a, b))?.kronecker(&unit(dl, a, b));
            choi = Some(match choi {
                Some(c) => c + term,
                None => term,
            });
        }
    }
    Ok(choi.expect("d_l >= 1"))
}

/// True iff `V_L` commutes with `H_L` and `V_Co` with `H_Co` (within 1e-10).
pub fn check_transversal_compat(code: &BaseCode, v_l: &CMatrix, v_co: &CMatrix) -> bool {
    if v_l.shape() != (code.d_l, code.d_l) || v_co.shape() != (code.d_p, code.d_p) {
        return false;
    }
    commutator(v_l, &code.gen_l.hamiltonian()).norm() < 1e-10
        && commutator(v_co, &code.gen_co.hamiltonian()).norm() < 1e-10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{quasi_ideal_state, time_basis_state};
    use crate::linalg::C64;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn embed_2_in_4() -> CMatrix {
        let mut v = CMatrix::zeros(4, 2);
        v[(1, 0)] = c(1.0);
        v[(2, 1)] = c(1.0);
        v
    }

    fn phase_flip_on_subspace() -> CMatrix {
        let mut u = CMatrix::identity(4, 4);
        u[(2, 2)] = c(-1.0);
        u
    }

    #[test]
    fn identity_code_examples() {
        let code = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
        assert!(code.recovery_deviation(0) < 1e-15);
        let code = make_identity_code(2, &[0, 1], &[0, 0]).unwrap();
        assert_eq!(code.gen_co.delta_h(), 0);
        let code = make_identity_code(3, &[0, 1, 2], &[0, 0, 0]).unwrap();
        assert_eq!(code.gen_l.delta_h(), 2);
    }

    #[test]
    fn unitary_code_recovers() {
        let code = make_unitary_conjugation_code(
            CMatrix::identity(2, 2),
            vec![CMatrix::identity(2, 2)],
            &[0, 1],
            &[0, 1],
        )
        .unwrap();
        assert_eq!(code.decoders[0].ops.len(), 1);
        let code = make_unitary_conjugation_code(
            embed_2_in_4(),
            vec![CMatrix::identity(4, 4), phase_flip_on_subspace()],
            &[0, 1],
            &[0, 1, 1, 2],
        )
        .unwrap();
        for j in 0..2 {
            assert!(code.recovery_deviation(j) < 1e-10);
            assert!(code.decoders[j].completeness_deviation() < 1e-12);
        }
        assert_eq!(code.gen_co.delta_h(), 2);
    }

    #[test]
    fn non_isometry_rejected() {
        let mut v = embed_2_in_4();
        v[(1, 0)] = c(2.0);
        let r = make_unitary_conjugation_code(v, vec![CMatrix::identity(4, 4)], &[0, 1], &[0, 1, 1, 2]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn twirled_swp_clock_is_flat_diagonal() {
        let d = 6;
        let base = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
        let code = CovariantCode::new(base, vec![time_basis_state(d, 2).unwrap()]).unwrap();
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = c(1.0);
        let out = covariant_encode(&code, &rho).unwrap();
        let mut want = CMatrix::zeros(2 * d, 2 * d);
        for r in 0..d {
            want[(r, r)] = c(1.0 / d as f64);
        }
        assert!((&out - &want).norm() < 1e-12);
        let quad = covariant_encode_quadrature(&code, &rho, 8 * d).unwrap();
        assert!((out - quad).norm() < 1e-12);
    }

    #[test]
    fn quadrature_refuses_small_grid() {
        let base = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
        let code = CovariantCode::new(base, vec![time_basis_state(4, 0).unwrap()]).unwrap();
        let rho = CMatrix::identity(2, 2).scale(0.5);
        assert!(matches!(
            covariant_encode_quadrature(&code, &rho, 5),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn encode_rejects_bad_inputs() {
        let base = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
        let code = CovariantCode::new(base, vec![time_basis_state(4, 0).unwrap()]).unwrap();
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.5), c(-0.5)]));
        assert!(matches!(covariant_encode(&code, &bad), Err(Error::NotPsd { .. })));
        assert!(matches!(covariant_encode(&code, &CMatrix::identity(3, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn transversal_examples() {
        let code = make_identity_code(2, &[0, 1], &[0, 1]).unwrap();
        let v_l = code.gen_l.unitary(0.37);
        let v_co = code.gen_co.unitary(1.1);
        assert!(check_transversal_compat(&code, &v_l, &v_co));
        assert!(check_transversal_compat(&code, &CMatrix::identity(2, 2), &CMatrix::identity(2, 2)));
        let x = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        assert!(!check_transversal_compat(&code, &x, &CMatrix::identity(2, 2)));
    }

    #[test]
    fn encoder_choi_is_psd_and_tp() {
        let base = make_unitary_conjugation_code(
            embed_2_in_4(),
            vec![phase_flip_on_subspace()],
            &[0, 1],
            &[0, 1, 1, 2],
        )
        .unwrap();
        let code = CovariantCode::new(base, vec![quasi_ideal_state(5, 0.0, 2.0, 1.5).unwrap()]).unwrap();
        let choi = covariant_encode_choi(&code).unwrap();
        assert!(min_eigenvalue(&choi) > -1e-9);
        let out_dim = 4 * 5;
        let tr_out = crate::linalg::partial_trace(&choi, &[out_dim, 2], &[false, true]);
        assert!((tr_out - CMatrix::identity(2, 2)).norm() < 1e-10);
    }
}
