//! Python bindings: `import nlsgraph`.

use nlsgraph::evolution::{self, EvolutionConfig, Scheme, Termination};
use nlsgraph::scattering::{self, ScatteringSetup};
use nlsgraph::stability::{self, Verdict};
use nlsgraph::standing_waves::{self, BumpCounts};
use nlsgraph::{functionals, graph, NlsError};
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: NlsError) -> PyErr {
    match e {
        NlsError::BlowUp { .. } | NlsError::StepNotConverged { .. } | NlsError::StepSize(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        NlsError::Solver { .. } | NlsError::Singular(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "StarGrid", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyStarGrid(graph::StarGrid);

#[pymethods]
impl PyStarGrid {
    /// `n_points` samples per edge on `[0, edge_length]`, vertex at `x = 0`.
    #[new]
    fn new(n_edges: usize, edge_length: f64, n_points: usize) -> PyResult<Self> {
        graph::StarGrid::new(n_edges, edge_length, n_points).map(Self).map_err(err)
    }

    #[staticmethod]
    fn with_spacing(n_edges: usize, edge_length: f64, h: f64) -> PyResult<Self> {
        graph::StarGrid::with_spacing(n_edges, edge_length, h).map(Self).map_err(err)
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.0.n_edges()
    }

    #[getter]
    fn edge_length(&self) -> f64 {
        self.0.edge_length()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.0.n_points()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    /// Sample positions along one edge.
    fn xs(&self) -> Vec<f64> {
        (0..self.0.n_points()).map(|k| self.0.x(k)).collect()
    }

    fn __repr__(&self) -> String {
        format!("StarGrid(n_edges={}, edge_length={}, n_points={})", self.0.n_edges(), self.0.edge_length(), self.0.n_points())
    }
}

#[pyclass(name = "Params", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyParams(standing_waves::NlsParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (n_edges, mu, alpha=0.0))]
    fn new(n_edges: usize, mu: f64, alpha: f64) -> PyResult<Self> {
        standing_waves::NlsParams::new(n_edges, mu, alpha).map(Self).map_err(err)
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.0.n_edges
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    /// Admissible bump counts; `None` for a Kirchhoff vertex.
    fn branches(&self) -> Option<Vec<usize>> {
        match standing_waves::admissible_bump_counts(&self.0) {
            BumpCounts::Branches(b) => Some(b),
            BumpCounts::Kirchhoff { .. } => None,
        }
    }

    fn threshold(&self, j: usize) -> f64 {
        standing_waves::branch_threshold(&self.0, j)
    }

    fn critical_mass(&self) -> PyResult<f64> {
        standing_waves::critical_mass(&self.0).map_err(err)
    }

    fn omega_for_mass(&self, j: usize, mass: f64) -> PyResult<f64> {
        standing_waves::solve_omega_for_mass(&self.0, j, mass).map_err(err)
    }

    /// The delta vertex these parameters describe.
    fn vertex(&self) -> PyVertex {
        PyVertex(graph::VertexCondition::delta(self.0.alpha))
    }

    fn __repr__(&self) -> String {
        format!("Params(n_edges={}, mu={}, alpha={})", self.0.n_edges, self.0.mu, self.0.alpha)
    }
}

#[pyclass(name = "Vertex", frozen, from_py_object)]
#[derive(Clone)]
struct PyVertex(graph::VertexCondition);

#[pymethods]
impl PyVertex {
    #[staticmethod]
    fn delta(alpha: f64) -> Self {
        Self(graph::VertexCondition::delta(alpha))
    }

    #[staticmethod]
    fn kirchhoff() -> Self {
        Self(graph::VertexCondition::Kirchhoff)
    }

    #[staticmethod]
    fn delta_prime_s(beta: f64) -> PyResult<Self> {
        graph::VertexCondition::delta_prime_s(beta).map(Self).map_err(err)
    }

    /// `(R, T)` for a plane wave of wavenumber `k` on `n_edges` edges.
    fn linear_coefficients(&self, k: f64, n_edges: usize) -> PyResult<(Complex64, Complex64)> {
        scattering::linear_coefficients(&self.0, k, n_edges).map_err(err)
    }

    fn residual(&self, f: &PyGraphFunction) -> f64 {
        graph::vertex_residual(&f.0, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("Vertex({:?})", self.0)
    }
}

#[pyclass(name = "GraphFunction", from_py_object)]
#[derive(Clone)]
struct PyGraphFunction(graph::GraphFunction);

#[pymethods]
impl PyGraphFunction {
    /// Values stored edge by edge.
    #[new]
    fn new(grid: PyStarGrid, values: Vec<Complex64>) -> PyResult<Self> {
        graph::GraphFunction::from_values(grid.0, values).map(Self).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyStarGrid {
        PyStarGrid(*self.0.grid())
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.values().to_vec()
    }

    fn edge(&self, j: usize) -> PyResult<Vec<Complex64>> {
        if j >= self.0.grid().n_edges() {
            return Err(PyValueError::new_err(format!("edge {j} out of range")));
        }
        Ok(self.0.edge(j).to_vec())
    }

    fn mass(&self) -> f64 {
        functionals::mass(&self.0)
    }

    fn edge_masses(&self) -> Vec<f64> {
        (0..self.0.grid().n_edges()).map(|j| self.0.edge_mass(j)).collect()
    }

    fn energy(&self, params: &PyParams) -> f64 {
        functionals::energy(&self.0, &params.0)
    }

    fn action(&self, omega: f64, params: &PyParams) -> f64 {
        functionals::action(&self.0, omega, &params.0)
    }

    fn nehari(&self, omega: f64, params: &PyParams) -> f64 {
        functionals::nehari(&self.0, omega, &params.0)
    }

    /// Interior stationary-equation residual.
    fn stationary_residual(&self, omega: f64, params: &PyParams) -> f64 {
        functionals::stationary_residual(&self.0, omega, &params.0).interior
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

#[pyclass(name = "StationaryState", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyState(standing_waves::StationaryState);

#[pymethods]
impl PyState {
    /// The `j`-bump state of a delta vertex at frequency `omega`.
    #[staticmethod]
    fn build(params: &PyParams, omega: f64, j: usize) -> PyResult<Self> {
        standing_waves::build_state(&params.0, omega, j).map(Self).map_err(err)
    }

    /// Kirchhoff state; `a` is the shift of the even-N family.
    #[staticmethod]
    #[pyo3(signature = (params, omega, a=0.0))]
    fn kirchhoff(params: &PyParams, omega: f64, a: f64) -> PyResult<Self> {
        standing_waves::kirchhoff_state(&params.0, omega, a).map(Self).map_err(err)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }

    #[getter]
    fn j(&self) -> usize {
        self.0.n_bumps
    }

    #[getter]
    fn shift(&self) -> f64 {
        self.0.kirchhoff_shift.unwrap_or(self.0.shift)
    }

    #[getter]
    fn params(&self) -> PyParams {
        PyParams(self.0.params)
    }

    fn mass(&self) -> f64 {
        standing_waves::mass_closed_form(&self.0)
    }

    fn sample(&self, grid: &PyStarGrid) -> PyResult<PyGraphFunction> {
        standing_waves::sample(&self.0, &grid.0).map(PyGraphFunction).map_err(err)
    }

    /// Morse index, L2 kernel, VK slope and verdict as a dict.
    fn stability<'py>(&self, py: Python<'py>, grid: &PyStarGrid) -> PyResult<Bound<'py, PyDict>> {
        let r = stability::classify_stability(&self.0.params, self.0.n_bumps, self.0.omega, &grid.0).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("omega", r.omega)?;
        d.set_item("morse_index", r.morse.index)?;
        d.set_item("l2_kernel_residual", r.l2_kernel_residual)?;
        d.set_item("l2_second_eigenvalue", r.l2_second_eigenvalue)?;
        d.set_item("vk_derivative", r.vk_derivative)?;
        d.set_item("verdict", r.verdict.as_str())?;
        d.set_item("stable", r.verdict == Verdict::Stable)?;
        Ok(d)
    }

    /// Eigenvalues of the Hamiltonian linearization (dense; keep grids small).
    fn jl_spectrum(&self, grid: &PyStarGrid) -> PyResult<Vec<Complex64>> {
        let op = stability::assemble_jl(&self.0, &grid.0).map_err(err)?;
        stability::jl_spectrum(&op).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("StationaryState(omega={}, j={}, shift={})", self.0.omega, self.0.n_bumps, self.shift())
    }
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory(evolution::Trajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.0.observables.iter().map(|o| o.mass).collect()
    }

    #[getter]
    fn energy(&self) -> Vec<f64> {
        self.0.observables.iter().map(|o| o.energy).collect()
    }

    #[getter]
    fn h1_norm(&self) -> Vec<f64> {
        self.0.observables.iter().map(|o| o.h1).collect()
    }

    #[getter]
    fn edge_mass(&self) -> Vec<Vec<f64>> {
        self.0.observables.iter().map(|o| o.edge_mass.clone()).collect()
    }

    #[getter]
    fn final_state(&self) -> PyGraphFunction {
        PyGraphFunction(self.0.final_state.clone())
    }

    /// Time of the blow-up signal, if one was raised.
    #[getter]
    fn blow_up(&self) -> Option<f64> {
        match self.0.termination {
            Termination::BlowUp { t, .. } => Some(t),
            Termination::Completed => None,
        }
    }

    #[getter]
    fn boundary_flag(&self) -> bool {
        self.0.boundary_flag
    }

    fn mass_drift(&self) -> f64 {
        self.0.mass_drift()
    }

    fn energy_drift(&self) -> f64 {
        self.0.energy_drift()
    }
}

/// Integrates `i psi_t = H psi - |psi|^{2 mu} psi` from `psi0` to `t_end`.
#[pyfunction]
#[pyo3(signature = (psi0, mu, vertex, dt, t_end, scheme="crank_nicolson", record_every=1, blowup_threshold=None))]
#[allow(clippy::too_many_arguments)]
fn evolve(
    psi0: &PyGraphFunction,
    mu: f64,
    vertex: &PyVertex,
    dt: f64,
    t_end: f64,
    scheme: &str,
    record_every: usize,
    blowup_threshold: Option<f64>,
) -> PyResult<PyTrajectory> {
    let mut cfg = EvolutionConfig::new(dt, t_end);
    cfg.scheme = match scheme {
        "crank_nicolson" => Scheme::CrankNicolsonFixedPoint,
        "strang" => Scheme::StrangSplit,
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    cfg.record_every = record_every;
    if let Some(b) = blowup_threshold {
        cfg.blowup_threshold = b;
    }
    let params = standing_waves::NlsParams::new(psi0.0.grid().n_edges(), mu, vertex.0.delta_strength().unwrap_or(0.0)).map_err(err)?;
    evolution::evolve(&psi0.0, &params, &vertex.0, &cfg).map(PyTrajectory).map_err(err)
}

/// Fast-soliton scattering run with default grid and step; returns a dict
/// with the linear coefficients and the edge ratios at `t3`.
#[pyfunction]
#[pyo3(signature = (n_edges, vertex, v, x0, delta_exp=0.5, t_log=1.0))]
fn scatter<'py>(
    py: Python<'py>,
    n_edges: usize,
    vertex: &PyVertex,
    v: f64,
    x0: f64,
    delta_exp: f64,
    t_log: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let setup = ScatteringSetup::with_defaults(n_edges, vertex.0.clone(), v, x0, delta_exp, t_log).map_err(err)?;
    let rep = py.detach(|| scattering::run_scattering(&setup)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("v", rep.v)?;
    d.set_item("t1", rep.t1)?;
    d.set_item("t2", rep.t2)?;
    d.set_item("t3", rep.t3)?;
    d.set_item("R_lin", rep.r_lin)?;
    d.set_item("T_lin", rep.t_lin)?;
    d.set_item("ratios", rep.final_ratios)?;
    d.set_item("partition_defect", rep.partition_defect)?;
    d.set_item("boundary_warning", rep.boundary_flag)?;
    Ok(d)
}

#[pymodule(name = "nlsgraph")]
fn nlsgraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStarGrid>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyVertex>()?;
    m.add_class::<PyGraphFunction>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(scatter, m)?)?;
    Ok(())
}
