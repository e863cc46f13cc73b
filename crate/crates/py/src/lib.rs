//! Python module `cocyclab`.
//!
//! Structured results (logs, reports, decompositions) cross the boundary as
//! JSON strings; the Python side can `json.loads` them.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use cocyclab::cocycle::{cocycle_from_text, cocycle_to_text, Cocycle, ValueGroup};
use cocyclab::construct::{run_construction, ScalePolicy, Schedule, StepConfig};
use cocyclab::evc::EvcCertificate;
use cocyclab::lattice::LatticeVector;
use cocyclab::measure_space::{rational_to_string, MeasurableSet, Odometer};
use cocyclab::rwlab::{decompose_block_cocycle, equidistribution_check, recurrence_diagnostic, BlockCocycle};
use cocyclab::topo::{
    build_sequential, verify_transitive_orbit, SequentialCocycle, ShiftSpace, TopoTarget, WindowPattern,
};
use cocyclab::Error;

create_exception!(cocyclab, CocyclabError, PyException);
create_exception!(cocyclab, InfeasibleError, CocyclabError);
create_exception!(cocyclab, VerificationError, CocyclabError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match cocyclab::cli::exit_code(&e) {
        2 => PyValueError::new_err(msg),
        3 => InfeasibleError::new_err(msg),
        4 => VerificationError::new_err(msg),
        _ => CocyclabError::new_err(msg),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| CocyclabError::new_err(e.to_string()))
}

/// A cocycle over an odometer, with its value group.
#[pyclass(name = "Cocycle", module = "cocyclab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCocycle {
    space: Odometer,
    group: ValueGroup,
    inner: Cocycle,
}

#[pymethods]
impl PyCocycle {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let (space, group, inner) = cocycle_from_text(text).map_err(to_py)?;
        Ok(PyCocycle { space, group, inner })
    }

    fn to_text(&self) -> String {
        cocycle_to_text(&self.space, &self.group, &self.inner)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.space.dim
    }

    #[getter]
    fn base(&self) -> u32 {
        self.space.base
    }

    #[getter]
    fn resolution(&self) -> u32 {
        self.inner.resolution()
    }

    #[getter]
    fn group(&self) -> String {
        self.group.to_text()
    }

    /// Coefficients of `F(n, x)` for `x` in the given cell (default depth:
    /// the cocycle's resolution).
    #[pyo3(signature = (n, cell, depth=None))]
    fn eval(&self, n: Vec<i64>, cell: u64, depth: Option<u32>) -> PyResult<Vec<i64>> {
        let depth = depth.unwrap_or_else(|| self.inner.resolution());
        if n.len() != self.space.dim {
            return Err(PyValueError::new_err(format!(
                "n must have {} coordinates",
                self.space.dim
            )));
        }
        if depth < self.inner.resolution() || depth > self.space.max_depth() || cell >= self.space.cell_count(depth) {
            return Err(PyValueError::new_err("cell or depth out of range"));
        }
        Ok(self
            .inner
            .eval(&self.group, &self.space, &LatticeVector(n), cell, depth)
            .coeffs)
    }

    fn __repr__(&self) -> String {
        format!(
            "Cocycle(dim={}, base={}, group='{}', resolution={})",
            self.space.dim,
            self.space.base,
            self.group.to_text(),
            self.inner.resolution()
        )
    }
}

/// An essential-value certificate.
#[pyclass(name = "Certificate", module = "cocyclab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCertificate {
    inner: EvcCertificate,
}

#[pymethods]
impl PyCertificate {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyCertificate { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    /// Raises `VerificationError` naming the failing clause.
    fn validate(&self, cocycle: &PyCocycle) -> PyResult<()> {
        self.inner.validate(&cocycle.group, &cocycle.inner).map_err(to_py)
    }

    #[getter]
    fn set(&self) -> String {
        self.inner.set.to_text()
    }

    #[getter]
    fn sigma(&self) -> Vec<i64> {
        self.inner.sigma.coeffs.clone()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    /// Exact measure of the holonomy domain, as `"num/den"`.
    #[getter]
    fn measured(&self) -> String {
        rational_to_string(&self.inner.measured)
    }

    #[getter]
    fn threshold(&self) -> String {
        rational_to_string(&(self.inner.c * self.inner.set.measure()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(sigma={:?}, set='{}', measured={})",
            self.inner.sigma.coeffs,
            self.inner.set.to_text(),
            rational_to_string(&self.inner.measured)
        )
    }
}

/// Result of a measurable construction run.
#[pyclass(name = "Construction", module = "cocyclab", frozen)]
struct PyConstruction {
    #[pyo3(get)]
    cocycle: PyCocycle,
    #[pyo3(get)]
    certificates: Vec<PyCertificate>,
    /// Stage log as JSON.
    #[pyo3(get)]
    log: String,
}

/// Round-robin construction over the signed generators and the given sets
/// (default: the depth-1 cylinders).
#[pyfunction]
#[pyo3(signature = (dim=1, base=2, rounds=2, depth_limit=24, policy="exact", sets=None))]
fn construct_measurable(
    dim: usize,
    base: u32,
    rounds: usize,
    depth_limit: u32,
    policy: &str,
    sets: Option<Vec<String>>,
) -> PyResult<PyConstruction> {
    let space = Odometer::new(dim, base).map_err(to_py)?;
    let group = ValueGroup::signed_basis(dim);
    let policy: ScalePolicy = policy.parse().map_err(to_py)?;
    let sets = match sets {
        Some(texts) => texts
            .iter()
            .map(|t| MeasurableSet::parse_text(space, t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?,
        None => (0..space.cell_count(1))
            .map(|c| MeasurableSet::from_cells(space, 1, vec![c]))
            .collect(),
    };
    let schedule = Schedule::round_robin(group.generators(), sets, rounds);
    let cfg = StepConfig::new(dim, policy, depth_limit);
    let run = run_construction(space, &group, &schedule, &cfg).map_err(to_py)?;
    Ok(PyConstruction {
        cocycle: PyCocycle {
            space,
            group,
            inner: run.cocycle,
        },
        certificates: run
            .state
            .certificates
            .into_iter()
            .map(|inner| PyCertificate { inner })
            .collect(),
        log: json(&run.log)?,
    })
}

/// A cocycle over a transitive shift point built from `(level, value, eta)` targets.
#[pyclass(name = "TopologicalCocycle", module = "cocyclab")]
struct PyTopological {
    inner: SequentialCocycle,
}

#[pymethods]
impl PyTopological {
    /// Per-target records as JSON.
    fn records(&self) -> PyResult<String> {
        json(&self.inner.records())
    }

    /// `F(n, x0)`.
    fn orbit_value(&self, n: Vec<i64>) -> PyResult<Vec<f64>> {
        self.inner.orbit_value(&n).map_err(to_py)
    }

    /// Fraction of the window grid covered by the skew orbit up to `budget`.
    #[pyo3(signature = (budget, delta=0.125, radius=1.0, window_level=1))]
    fn coverage(&mut self, budget: u64, delta: f64, radius: f64, window_level: u32) -> PyResult<f64> {
        let w = WindowPattern::around(self.inner.point(), window_level);
        let rep = verify_transitive_orbit(&mut self.inner, &w, radius, delta, budget).map_err(to_py)?;
        Ok(rep.fraction)
    }
}

#[pyfunction]
#[pyo3(signature = (targets, budget=1_000_000, dim=1, alphabet=2, theta=0.5))]
fn construct_topological(
    targets: Vec<(u32, Vec<f64>, f64)>,
    budget: u64,
    dim: usize,
    alphabet: u32,
    theta: f64,
) -> PyResult<PyTopological> {
    let value_dim = targets.first().map_or(1, |t| t.1.len());
    let targets: Vec<TopoTarget> = targets
        .into_iter()
        .map(|(level, value, eta)| TopoTarget { level, value, eta })
        .collect();
    let space = ShiftSpace::new(alphabet, dim, theta).map_err(to_py)?;
    let inner = build_sequential(space, value_dim, &targets, budget).map_err(to_py)?;
    Ok(PyTopological { inner })
}

/// Splits a block table (text form) into transfer plus homomorphism; returns JSON.
#[pyfunction]
#[pyo3(signature = (table, depth=3, tol=1e-9))]
fn decompose(table: &str, depth: u32, tol: f64) -> PyResult<String> {
    let f = BlockCocycle::parse_text(table).map_err(to_py)?;
    let d = decompose_block_cocycle(&f, depth, tol).map_err(to_py)?;
    json(&d)
}

/// Recurrence statistics of the simple (optionally lazy) walk on `Z^valdim`; returns JSON.
#[pyfunction]
#[pyo3(signature = (valdim=1, steps=100_000, trials=4, radius=5.0, seed=0, lazy=false))]
fn recurrence(valdim: usize, steps: u64, trials: u32, radius: f64, seed: u64, lazy: bool) -> PyResult<String> {
    let (phi, mu) = cocyclab::cli::simple_walk(valdim, lazy);
    let r = recurrence_diagnostic(&phi, &mu, steps, trials, radius, seed).map_err(to_py)?;
    json(&r)
}

/// Largest cell-frequency deviation of the rotation orbit after `steps` steps.
#[pyfunction]
#[pyo3(signature = (alpha, steps=100_000, cells=10))]
fn discrepancy(alpha: Vec<f64>, steps: u64, cells: usize) -> PyResult<f64> {
    let x0 = vec![0.0; alpha.len()];
    Ok(equidistribution_check(&alpha, &x0, steps, cells)
        .map_err(to_py)?
        .discrepancy)
}

/// Runs a command line (without the program name); returns `(exit status, report JSON)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String) {
    let full = std::iter::once("cocyclab".to_string()).chain(args);
    match cocyclab::cli::dispatch(full) {
        Ok(r) => (r.exit_status, r.to_json()),
        Err(u) => (u.code, u.text),
    }
}

#[pymodule(name = "cocyclab")]
fn cocyclab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CocyclabError", py.get_type::<CocyclabError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add("VerificationError", py.get_type::<VerificationError>())?;
    m.add_class::<PyCocycle>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyConstruction>()?;
    m.add_class::<PyTopological>()?;
    m.add_function(wrap_pyfunction!(construct_measurable, m)?)?;
    m.add_function(wrap_pyfunction!(construct_topological, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(recurrence, m)?)?;
    m.add_function(wrap_pyfunction!(discrepancy, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
