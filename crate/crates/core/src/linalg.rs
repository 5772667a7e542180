//! Dense complex matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn projector(v: &CVector) -> CMatrix {
    outer(v, v)
}

/// |a><b| on a space of dimension `n`.
pub fn unit(n: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(a, b)] = ONE;
    m
}

pub fn diag_phase(levels: &[i64], phase_per_level: f64) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        levels.len(),
        levels.iter().map(|&h| cis(phase_per_level * h as f64)),
    ))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Traces out every subsystem whose flag in `keep` is false. `dims` lists the
/// tensor factors in order, most significant first.
pub fn partial_trace(rho: &CMatrix, dims: &[usize], keep: &[bool]) -> CMatrix {
    assert_eq!(dims.len(), keep.len());
    let total: usize = dims.iter().product();
    assert_eq!(rho.nrows(), total);
    let kept_dims: Vec<usize> = dims
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(&d, _)| d)
        .collect();
    let kept: usize = kept_dims.iter().product();
    let mut out = CMatrix::zeros(kept, kept);
    let digits = |mut idx: usize| -> Vec<usize> {
        let mut ds = vec![0; dims.len()];
        for (slot, &d) in ds.iter_mut().zip(dims).rev() {
            *slot = idx % d;
            idx /= d;
        }
        ds
    };
    let split = |ds: &[usize]| -> (usize, usize) {
        let (mut k, mut t) = (0usize, 0usize);
        for ((&x, &d), &kp) in ds.iter().zip(dims).zip(keep) {
            if kp {
                k = k * d + x;
            } else {
                t = t * d + x;
            }
        }
        (k, t)
    };
    let idx: Vec<(usize, usize)> = (0..total).map(|i| split(&digits(i))).collect();
    for i in 0..total {
        let (ki, ti) = idx[i];
        for j in 0..total {
            let (kj, tj) = idx[j];
            if ti == tj {
                out[(ki, kj)] += rho[(i, j)];
            }
        }
    }
    out
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// Half the trace norm of the difference of two density matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * trace_norm_hermitian(&(a - b))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.trace()
}

pub fn is_isometry(v: &CMatrix, tol: f64) -> bool {
    let g = v.adjoint() * v;
    (g - CMatrix::identity(v.ncols(), v.ncols())).norm() < tol
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.nrows() == u.ncols() && is_isometry(u, tol)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
