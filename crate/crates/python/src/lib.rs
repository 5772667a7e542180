//! Python bindings for `covclock`.

use covclock::clock::{self, ClockSpec, ClockState};
use covclock::codes::{self, BaseCode, CovariantCode};
use covclock::fidelity;
use covclock::linalg::CMatrix;
use covclock::phase3::{self, AngleTriple, PhaseErrorSpec};
use covclock::pipeline::{self, ChannelMatrix, FTable, KAlphaPolicy};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: covclock::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("expected a non-empty rectangular matrix"));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_matrix(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Clock state in the energy basis.
#[pyclass(name = "Clock", module = "covclock_py", from_py_object)]
#[derive(Clone)]
struct PyClock {
    inner: ClockState,
}

#[pymethods]
impl PyClock {
    /// Time-basis state `|θ_k0>`.
    #[staticmethod]
    fn swp(d: usize, k0: i64) -> PyResult<Self> {
        Ok(Self { inner: clock::time_basis_state(d, k0).map_err(err)? })
    }

    /// Gaussian Quasi-Ideal state; `n0` defaults to `(d-1)/2`.
    #[staticmethod]
    #[pyo3(signature = (d, sigma, k1_0=0.0, n0=None))]
    fn quasi_ideal(d: usize, sigma: f64, k1_0: f64, n0: Option<f64>) -> PyResult<Self> {
        let spec = ClockSpec::QuasiIdeal { k1_0, n0, sigma };
        Ok(Self { inner: spec.build(d).map_err(err)? })
    }

    /// Effective clock of `l` entangled sites of dimension `site_dim`.
    /// Pass `k0` for a time-basis block or `sigma` for a Quasi-Ideal block.
    #[staticmethod]
    #[pyo3(signature = (site_dim, l, k0=None, sigma=None, k1_0=0.0))]
    fn block(site_dim: usize, l: usize, k0: Option<i64>, sigma: Option<f64>, k1_0: f64) -> PyResult<Self> {
        let spec = match (k0, sigma) {
            (Some(k0), None) => ClockSpec::Swp { k0 },
            (None, Some(sigma)) => ClockSpec::QuasiIdeal { k1_0, n0: None, sigma },
            _ => return Err(PyValueError::new_err("give exactly one of k0 or sigma")),
        };
        Ok(Self { inner: clock::embed_l(site_dim, l, &spec).map_err(err)? })
    }

    /// Normalises the given energy-basis amplitudes.
    #[staticmethod]
    fn custom(amplitudes: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self { inner: ClockState::custom(amplitudes).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn amplitudes(&self) -> Vec<Complex64> {
        self.inner.amplitudes.iter().copied().collect()
    }

    fn populations(&self) -> Vec<f64> {
        self.inner.populations()
    }

    fn __repr__(&self) -> String {
        format!("Clock(dim={}, kind={:?})", self.inner.dim, self.inner.kind)
    }
}

/// Base code: encoder isometry with paired error and decoder channels.
#[pyclass(name = "BaseCode", module = "covclock_py", from_py_object)]
#[derive(Clone)]
struct PyBaseCode {
    inner: BaseCode,
}

#[pymethods]
impl PyBaseCode {
    #[staticmethod]
    fn identity(d: usize, levels_l: Vec<i64>, levels_co: Vec<i64>) -> PyResult<Self> {
        Ok(Self { inner: codes::make_identity_code(d, &levels_l, &levels_co).map_err(err)? })
    }

    /// Encoder `v` with unitary noise operators; decoders are built to undo each one.
    #[staticmethod]
    fn unitary(
        v: Vec<Vec<Complex64>>,
        noise: Vec<Vec<Vec<Complex64>>>,
        levels_l: Vec<i64>,
        levels_co: Vec<i64>,
    ) -> PyResult<Self> {
        let noise = noise.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        let inner = codes::make_unitary_conjugation_code(to_matrix(v)?, noise, &levels_l, &levels_co).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d_l(&self) -> usize {
        self.inner.d_l
    }

    #[getter]
    fn d_p(&self) -> usize {
        self.inner.d_p
    }

    fn recovery_deviation(&self, j: usize) -> f64 {
        self.inner.recovery_deviation(j)
    }
}

/// Base code paired with product clocks, some possibly erased.
#[pyclass(name = "CovariantCode", module = "covclock_py", from_py_object)]
#[derive(Clone)]
struct PyCovariantCode {
    inner: CovariantCode,
}

#[pymethods]
impl PyCovariantCode {
    #[new]
    #[pyo3(signature = (base, clocks, erased=Vec::new()))]
    fn new(base: PyBaseCode, clocks: Vec<PyClock>, erased: Vec<usize>) -> PyResult<Self> {
        let code = CovariantCode::new(base.inner, clocks.into_iter().map(|c| c.inner).collect()).map_err(err)?;
        Ok(Self { inner: code.with_erased(erased).map_err(err)? })
    }

    #[getter]
    fn q_max(&self) -> i64 {
        self.inner.q_max()
    }

    /// Group-averaged encoding of a logical density matrix.
    fn encode(&self, rho: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
        let out = codes::covariant_encode(&self.inner, &to_matrix(rho)?).map_err(err)?;
        Ok(from_matrix(&out))
    }

    /// Same code with a phase error `t_ph` on block `block` (1..=3).
    fn with_phase_error(&self, block: usize, t_ph: f64) -> PyResult<Self> {
        let spec = PhaseErrorSpec { target_block: block, t_ph };
        Ok(Self { inner: phase3::apply_phase_error(&self.inner, &spec).map_err(err)? })
    }
}

/// Averaged logical channel given by its Choi matrix.
#[pyclass(name = "Channel", module = "covclock_py")]
struct PyChannel {
    inner: ChannelMatrix,
}

#[pymethods]
impl PyChannel {
    #[getter]
    fn choi(&self) -> Vec<Vec<Complex64>> {
        from_matrix(&self.inner.choi)
    }

    fn apply(&self, rho: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
        let rho = to_matrix(rho)?;
        if rho.shape() != (self.inner.d, self.inner.d) {
            return Err(PyValueError::new_err(format!("expected a {0}x{0} matrix", self.inner.d)));
        }
        Ok(from_matrix(&self.inner.apply(&rho)))
    }

    fn tp_deviation(&self) -> f64 {
        self.inner.tp_deviation()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    fn choi_distance(&self, other: &PyChannel) -> f64 {
        self.inner.choi_distance(&other.inner)
    }
}

/// `middle` selects the three-block majority rule, `anchor=(clock, k0)` reads
/// one clock, otherwise the single-clock rule with offset `k1_0` is used.
fn policy(code: &CovariantCode, k1_0: f64, anchor: Option<(usize, f64)>, middle: bool) -> PyResult<KAlphaPolicy> {
    match (anchor, middle) {
        (Some(_), true) => Err(PyValueError::new_err("anchor and middle are exclusive")),
        (Some((clock, k0)), false) => Ok(KAlphaPolicy::Anchor { clock, k0 }),
        (None, true) => phase3::middle_policy(code).map_err(err),
        (None, false) => Ok(KAlphaPolicy::SingleClock { k1_0 }),
    }
}

#[pyfunction]
#[pyo3(signature = (code, j=0, k1_0=0.0, anchor=None, middle=false))]
fn full_channel(code: &PyCovariantCode, j: usize, k1_0: f64, anchor: Option<(usize, f64)>, middle: bool) -> PyResult<PyChannel> {
    let pol = policy(&code.inner, k1_0, anchor, middle)?;
    Ok(PyChannel { inner: pipeline::full_channel(&code.inner, &pol, j).map_err(err)? })
}

/// Analytic lower bound on the worst-case entanglement fidelity.
#[pyfunction]
#[pyo3(signature = (code, k1_0=0.0, anchor=None, middle=false))]
fn f_lower(code: &PyCovariantCode, k1_0: f64, anchor: Option<(usize, f64)>, middle: bool) -> PyResult<f64> {
    let pol = policy(&code.inner, k1_0, anchor, middle)?;
    let table = FTable::compute(&code.inner.surviving(), code.inner.q_max()).map_err(err)?;
    fidelity::f_worst_lower(&code.inner, &table, &pol).map_err(err)
}

/// Minimised entanglement fidelity and the minimising bipartite state.
#[pyfunction]
#[pyo3(signature = (channel, restarts=fidelity::DEFAULT_RESTARTS, tol=fidelity::DEFAULT_TOL, seed=0))]
fn f_direct(channel: &PyChannel, restarts: usize, tol: f64, seed: u64) -> PyResult<(f64, Vec<Complex64>)> {
    let (f, state) = fidelity::f_worst_direct(&channel.inner, restarts, tol, seed).map_err(err)?;
    Ok((f, state.iter().copied().collect()))
}

#[pyfunction]
fn converse_bound(dh_l: i64, dh_co: i64, l: usize, d_c: usize) -> f64 {
    fidelity::converse_bound(dh_l, dh_co, l, d_c)
}

/// Decoherence probability `p` of a qubit frame sent with this clock.
#[pyfunction]
#[pyo3(signature = (frame, omega=1.0))]
fn alignment_probability(frame: &PyClock, omega: f64) -> PyResult<f64> {
    let gen = clock::Generator::clock(frame.inner.dim, omega).map_err(err)?;
    Ok(covclock::align::alignment_probability(&frame.inner, &gen).map_err(err)?.p)
}

/// Value and 1-based position of the reading lying between the other two.
#[pyfunction]
fn middle_angle(gammas: [f64; 3], d: usize) -> (f64, usize) {
    phase3::middle_angle(&AngleTriple { gammas, d })
}

#[pymodule]
fn covclock_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClock>()?;
    m.add_class::<PyBaseCode>()?;
    m.add_class::<PyCovariantCode>()?;
    m.add_class::<PyChannel>()?;
    m.add_function(wrap_pyfunction!(full_channel, m)?)?;
    m.add_function(wrap_pyfunction!(f_lower, m)?)?;
    m.add_function(wrap_pyfunction!(f_direct, m)?)?;
    m.add_function(wrap_pyfunction!(converse_bound, m)?)?;
    m.add_function(wrap_pyfunction!(alignment_probability, m)?)?;
    m.add_function(wrap_pyfunction!(middle_angle, m)?)?;
    Ok(())
}
