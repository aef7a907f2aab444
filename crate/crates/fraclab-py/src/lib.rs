use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use fraclab::assouad::{self, ScaleSpec};
use fraclab::capacity::{capacity_estimate, CapacityProblem, CompactSet};
use fraclab::chains::{build_chains, john_center, verify_chain_properties};
use fraclab::fixtures::{fixture_family, localize};
use fraclab::functional::{self, FracParams};
use fraclab::geometry::{self, Point};
use fraclab::inequality::{self, CounterexampleOptions};
use fraclab::{Lattice, WhitneyFamily};

fn err(e: fraclab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(c: &[f64]) -> PyResult<Point> {
    Point::new(c).map_err(err)
}

#[pyclass(name = "Domain", module = "pyfraclab", frozen)]
struct PyDomain(geometry::Domain);

#[pymethods]
impl PyDomain {
    /// Gallery domain from a spec such as "ball(1)" or "cone(pi/4, 4)".
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        geometry::make_domain(spec).map(PyDomain).map_err(err)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn john_constant(&self) -> Option<f64> {
        self.0.john_constant()
    }

    #[getter]
    fn window(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.0.window();
        let n = self.0.dim();
        (w.lo[..n].to_vec(), w.hi[..n].to_vec())
    }

    fn inside(&self, x: Vec<f64>) -> PyResult<bool> {
        Ok(self.0.inside(&point(&x)?))
    }

    fn dist_boundary(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.0.dist_boundary(&point(&x)?))
    }

    fn boundary_unbounded(&self) -> bool {
        self.0.boundary_unbounded()
    }

    fn boundary_sample(&self, count: usize) -> PyResult<Vec<Vec<f64>>> {
        let pts = self.0.boundary_sample(count).map_err(err)?;
        Ok(pts.iter().map(|p| p.coords().to_vec()).collect())
    }

    fn with_window_size(&self, size: f64) -> PyResult<Self> {
        self.0.with_window_size(size).map(PyDomain).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Domain({})", self.0.name())
    }
}

#[pyclass(name = "FracParams", module = "pyfraclab", frozen)]
struct PyParams(FracParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (delta, p, tau = 0.5, kappa = 1.0, q = None))]
    fn new(delta: f64, p: f64, tau: f64, kappa: f64, q: Option<f64>) -> PyResult<Self> {
        FracParams::new(delta, p, tau, kappa, q.unwrap_or(p)).map(PyParams).map_err(err)
    }

    /// Sobolev exponent q = np / (n - delta p).
    #[staticmethod]
    #[pyo3(signature = (n, delta, p, tau = 0.5))]
    fn critical(n: usize, delta: f64, p: f64, tau: f64) -> PyResult<Self> {
        FracParams::critical(n, delta, p, tau).map(PyParams).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n, delta, p, tau = 0.5))]
    fn hardy(n: usize, delta: f64, p: f64, tau: f64) -> PyResult<Self> {
        FracParams::hardy(n, delta, p, tau).map(PyParams).map_err(err)
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!("FracParams(delta={}, p={}, q={}, tau={}, kappa={})", p.delta, p.p, p.q, p.tau, p.kappa)
    }
}

/// Piecewise-constant function on a cubical lattice over a domain's window.
#[pyclass(name = "GridFunction", module = "pyfraclab", frozen)]
struct PyGrid {
    u: fraclab::GridFunction,
    domain: geometry::Domain,
}

#[pymethods]
impl PyGrid {
    /// Values are listed in lattice order, one per cell, `cells` per axis.
    #[new]
    fn new(domain: PyRef<'_, PyDomain>, cells: usize, values: Vec<f64>) -> PyResult<Self> {
        let lat = Lattice::new(domain.0.window(), cells).map_err(err)?;
        let u = fraclab::GridFunction::from_values(&domain.0, lat, values).map_err(err)?;
        Ok(PyGrid { u, domain: domain.0.clone() })
    }

    /// Members of a named fixture family, as (id, function) pairs.
    #[staticmethod]
    #[pyo3(signature = (domain, family, cells, seed = 0, count = 1, localized = false))]
    fn fixtures(
        domain: PyRef<'_, PyDomain>,
        family: &str,
        cells: usize,
        seed: u64,
        count: usize,
        localized: bool,
    ) -> PyResult<Vec<(String, PyGrid)>> {
        let d = &domain.0;
        let lat = Lattice::new(d.window(), cells).map_err(err)?;
        let fx = fixture_family(family, seed, count, d, lat).map_err(err)?;
        Ok(fx
            .into_iter()
            .map(|f| {
                let u = if localized { localize(&f.u, d) } else { f.u };
                (f.id, PyGrid { u, domain: d.clone() })
            })
            .collect())
    }

    #[getter]
    fn h(&self) -> f64 {
        self.u.lattice().h
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        let lat = self.u.lattice();
        lat.shape[..lat.dim].to_vec()
    }

    fn values(&self) -> Vec<f64> {
        self.u.values().to_vec()
    }

    fn scaled(&self, factor: f64) -> PyGrid {
        PyGrid { u: self.u.scaled(factor), domain: self.domain.clone() }
    }

    fn __len__(&self) -> usize {
        self.u.values().len()
    }
}

#[pyfunction]
fn seminorm_full(u: PyRef<'_, PyGrid>, params: PyRef<'_, PyParams>) -> f64 {
    functional::seminorm_full(&u.u, &u.domain, &params.0)
}

#[pyfunction]
fn seminorm_tau(u: PyRef<'_, PyGrid>, params: PyRef<'_, PyParams>) -> PyResult<f64> {
    functional::seminorm_tau(&u.u, &u.domain, &params.0).map_err(err)
}

/// (a*, min_a ||u - a||_q^q)
#[pyfunction]
fn inf_shift(u: PyRef<'_, PyGrid>, q: f64) -> PyResult<(f64, f64)> {
    functional::inf_shift_lq(&u.u, q).map_err(err)
}

#[pyfunction]
fn weak_quasinorm(u: PyRef<'_, PyGrid>, a: f64, q: f64) -> f64 {
    functional::weak_quasinorm(&u.u, a, q)
}

#[pyfunction]
fn a_functional_bounds<'py>(
    py: Python<'py>,
    u: PyRef<'_, PyGrid>,
    params: PyRef<'_, PyParams>,
) -> PyResult<Bound<'py, PyAny>> {
    let b = functional::a_functional_bounds(&u.u, &u.domain, &params.0).map_err(err)?;
    to_py(py, &b)
}

/// Runs one inequality check; `kind` is sobolev_poincare, weak, hardy or truncation.
#[pyfunction]
#[pyo3(signature = (kind, u, params, fixture = ""))]
fn check<'py>(
    py: Python<'py>,
    kind: &str,
    u: PyRef<'_, PyGrid>,
    params: PyRef<'_, PyParams>,
    fixture: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let (g, d, p) = (&u.u, &u.domain, &params.0);
    let rep = match kind {
        "sobolev_poincare" => inequality::check_sobolev_poincare(g, d, p, fixture),
        "weak" => inequality::check_weak_sobolev_poincare(g, d, p, fixture),
        "hardy" => inequality::check_hardy(g, d, p, fixture),
        "truncation" => {
            let (rep, detail) = py.detach(|| inequality::check_truncation_transfer(g, d, p, fixture)).map_err(err)?;
            return to_py(py, &(rep, detail));
        }
        other => return Err(PyValueError::new_err(format!("unknown check `{other}`"))),
    }
    .map_err(err)?;
    to_py(py, &rep)
}

#[pyclass(name = "Whitney", module = "pyfraclab", frozen)]
struct PyWhitney(WhitneyFamily);

#[pymethods]
impl PyWhitney {
    #[new]
    fn new(domain: PyRef<'_, PyDomain>, max_level: i32) -> PyResult<Self> {
        fraclab::whitney_decompose(&domain.0, max_level).map(PyWhitney).map_err(err)
    }

    /// (level, index, dist to the boundary) per accepted cube.
    fn cubes(&self) -> Vec<(i32, Vec<i64>, f64)> {
        self.0
            .cubes()
            .iter()
            .zip(self.0.dists())
            .map(|(q, &t)| (q.level, q.index[..q.dim].to_vec(), t))
            .collect()
    }

    fn unresolved_measure(&self) -> f64 {
        self.0.unresolved_measure()
    }

    /// Chain statistics (rho, sigma, lengths) at exponent q.
    fn chains<'py>(&self, py: Python<'py>, q: f64) -> PyResult<Bound<'py, PyAny>> {
        let d = self.0.domain();
        let ch = john_center(d, &self.0).and_then(|c| build_chains(&self.0, &c)).map_err(err)?;
        to_py(py, &verify_chain_properties(&ch, q))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Discrete capacity of a disc, as an upper bound with its certificate.
#[pyfunction]
#[pyo3(signature = (domain, cells, center, radius, params, budget = 2000))]
fn capacity_disc<'py>(
    py: Python<'py>,
    domain: PyRef<'_, PyDomain>,
    cells: usize,
    center: Vec<f64>,
    radius: f64,
    params: PyRef<'_, PyParams>,
    budget: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let d = &domain.0;
    let lat = Lattice::new(d.window(), cells).map_err(err)?;
    let k = CompactSet::disc(d, lat, &point(&center)?, radius).map_err(err)?;
    let prob = CapacityProblem::new(k, params.0);
    let r = py.detach(|| capacity_estimate(&prob, budget)).map_err(err)?;
    to_py(py, &r.to_json())
}

#[pyfunction]
#[pyo3(signature = (m_max = 6, delta = 0.5, p = 2.0))]
fn counterexample<'py>(py: Python<'py>, m_max: u32, delta: f64, p: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| inequality::counterexample_sequence(m_max, delta, p, &CounterexampleOptions::default()))
        .map_err(err)?;
    to_py(py, &r)
}

/// Upper and lower Assouad estimates of a point sample on the default ladder.
#[pyfunction]
fn assouad_estimates<'py>(py: Python<'py>, points: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let pts = points.iter().map(|c| point(c)).collect::<PyResult<Vec<_>>>()?;
    let prof = py.detach(|| assouad::covering_profile(&pts, &ScaleSpec::Relative)).map_err(err)?;
    to_py(py, &(prof.upper(), prof.lower()))
}

#[pyfunction]
fn corollary_conditions<'py>(
    py: Python<'py>,
    domain: PyRef<'_, PyDomain>,
    params: PyRef<'_, PyParams>,
) -> PyResult<Bound<'py, PyAny>> {
    let (d, p) = (&domain.0, params.0);
    let r = py.detach(|| assouad::corollary_conditions(d, &p)).map_err(err)?;
    to_py(py, &r)
}

/// Runs a TOML experiment config and returns the process exit status.
#[pyfunction]
fn run_config(py: Python<'_>, path: std::path::PathBuf) -> PyResult<i32> {
    let out = py.detach(|| fraclab::runner::run_file(&path)).map_err(err)?;
    Ok(out.exit_code())
}

#[pymodule]
pub fn pyfraclab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyWhitney>()?;
    m.add_function(wrap_pyfunction!(seminorm_full, m)?)?;
    m.add_function(wrap_pyfunction!(seminorm_tau, m)?)?;
    m.add_function(wrap_pyfunction!(inf_shift, m)?)?;
    m.add_function(wrap_pyfunction!(weak_quasinorm, m)?)?;
    m.add_function(wrap_pyfunction!(a_functional_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_disc, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(assouad_estimates, m)?)?;
    m.add_function(wrap_pyfunction!(corollary_conditions, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
