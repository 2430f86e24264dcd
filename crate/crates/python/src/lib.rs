//! Python bindings. Fields cross the boundary as lists of floats in node
//! order (`j * (nx + 1) + i`).

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wcshape::config::{parse_config as parse_spec, ProblemSpec};
use wcshape::optimize::{optimize as run_optimize, volume, OptimizationConfig, OptimizerKind};
use wcshape::radial::{radial_energy as radial, RadialProblem, RadialProfile};
use wcshape::{Error, FemSpace, RectDomain, ScalarField, Source, StateConfig, StructuredMesh};

create_exception!(pywcshape, WcshapeError, PyException, "Error raised by the solver; `kind` names the failure.");

fn to_py(e: Error) -> PyErr {
    WcshapeError::new_err((e.kind(), e.to_string()))
}

fn state_config(tol: Option<f64>, max_iter: Option<usize>, relaxation: Option<f64>) -> StateConfig {
    let d = StateConfig::default();
    StateConfig {
        fixed_point_tol: tol.unwrap_or(d.fixed_point_tol),
        fixed_point_max_iter: max_iter.unwrap_or(d.fixed_point_max_iter),
        relaxation: relaxation.unwrap_or(d.relaxation),
        ..d
    }
}

/// P1 space on a structured mesh of a rectangle.
#[pyclass(name = "Space", frozen)]
struct PySpace {
    inner: FemSpace,
}

impl PySpace {
    fn field(&self, values: Vec<f64>) -> PyResult<ScalarField> {
        let f = ScalarField::new(values);
        self.inner.check(&f).map_err(to_py)?;
        Ok(f)
    }
}

#[pymethods]
impl PySpace {
    #[new]
    #[pyo3(signature = (nx, ny, x0=0.0, y0=0.0, x1=1.0, y1=1.0))]
    fn new(nx: usize, ny: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> PyResult<Self> {
        let domain = RectDomain::new(x0, y0, x1, y1).map_err(to_py)?;
        let mesh = StructuredMesh::new(domain, nx, ny).map_err(to_py)?;
        Ok(Self {
            inner: FemSpace::new(mesh),
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.mesh().nx(), self.inner.mesh().ny())
    }

    fn coords(&self) -> Vec<(f64, f64)> {
        self.inner.mesh().coords().iter().map(|c| (c[0], c[1])).collect()
    }

    /// Lumped quadrature weights.
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    /// The piecewise source `1` for `x <= 0.5`, `2` otherwise.
    fn reference_source(&self) -> PyResult<Vec<f64>> {
        Ok(Source::reference_piecewise()
            .interpolate(self.inner.mesh())
            .map_err(to_py)?
            .into_vec())
    }

    fn integrate(&self, u: Vec<f64>) -> PyResult<f64> {
        let u = self.field(u)?;
        Ok(self.inner.integrate(&u))
    }

    fn lp_norm(&self, u: Vec<f64>, p: f64) -> PyResult<f64> {
        let u = self.field(u)?;
        Ok(self.inner.lp_norm(&u, p))
    }

    fn solve_linear_state(&self, potential: Vec<f64>, rhs: Vec<f64>) -> PyResult<Vec<f64>> {
        let (v, f) = (self.field(potential)?, self.field(rhs)?);
        Ok(self.inner.solve_linear_state(&v, &f).map_err(to_py)?.into_vec())
    }

    /// Returns a dict with `u`, `iterations`, `converged` and `change`.
    #[pyo3(signature = (potential, f, delta, p=2.0, tol=None, max_iter=None, relaxation=None))]
    #[allow(clippy::too_many_arguments)]
    fn solve_worstcase_state<'py>(
        &self,
        py: Python<'py>,
        potential: Vec<f64>,
        f: Vec<f64>,
        delta: f64,
        p: f64,
        tol: Option<f64>,
        max_iter: Option<usize>,
        relaxation: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (v, f) = (self.field(potential)?, self.field(f)?);
        let cfg = state_config(tol, max_iter, relaxation);
        let sol = self
            .inner
            .solve_worstcase_state(&v, &f, delta, p, &cfg)
            .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("iterations", sol.iterations)?;
        out.set_item("converged", sol.converged)?;
        out.set_item("change", sol.change)?;
        out.set_item("u", sol.u.into_vec())?;
        Ok(out)
    }

    fn worst_perturbation(&self, u: Vec<f64>, delta: f64, p: f64) -> PyResult<Vec<f64>> {
        let u = self.field(u)?;
        let guard = StateConfig::default().guard(&self.inner);
        Ok(self.inner.worst_perturbation(&u, delta, p, guard).map_err(to_py)?.into_vec())
    }

    fn dirichlet_energy(&self, potential: Vec<f64>, f: Vec<f64>) -> PyResult<f64> {
        let (v, f) = (self.field(potential)?, self.field(f)?);
        self.inner.dirichlet_energy(&v, &f).map_err(to_py)
    }

    #[pyo3(signature = (potential, f, delta, p=2.0, tol=None))]
    fn worstcase_energy(&self, potential: Vec<f64>, f: Vec<f64>, delta: f64, p: f64, tol: Option<f64>) -> PyResult<f64> {
        let (v, f) = (self.field(potential)?, self.field(f)?);
        let cfg = state_config(tol, None, None);
        Ok(self.inner.worstcase_energy(&v, &f, delta, p, &cfg).map_err(to_py)?.value)
    }

    #[pyo3(signature = (potential, f, delta, tol=None))]
    fn paper_objective(&self, potential: Vec<f64>, f: Vec<f64>, delta: f64, tol: Option<f64>) -> PyResult<f64> {
        let (v, f) = (self.field(potential)?, self.field(f)?);
        let cfg = state_config(tol, None, None);
        self.inner.paper_objective(&v, &f, delta, &cfg).map_err(to_py)
    }

    fn linear_worstcase(&self, potential: Vec<f64>, f: Vec<f64>, h: Vec<f64>, delta: f64, p: f64) -> PyResult<f64> {
        let (v, f, h) = (self.field(potential)?, self.field(f)?, self.field(h)?);
        self.inner.linear_worstcase(&v, &f, &h, delta, p).map_err(to_py)
    }

    fn gamma_distance(&self, first: Vec<f64>, second: Vec<f64>) -> PyResult<f64> {
        let (a, b) = (self.field(first)?, self.field(second)?);
        self.inner.gamma_distance(&a, &b).map_err(to_py)
    }

    #[pyo3(signature = (potential, alpha=0.01))]
    fn volume(&self, potential: Vec<f64>, alpha: f64) -> PyResult<f64> {
        let v = self.field(potential)?;
        Ok(volume(&self.inner, &v, alpha))
    }

    fn __repr__(&self) -> String {
        let d = self.inner.mesh().domain();
        format!(
            "Space(nx={}, ny={}, domain=({}, {}, {}, {}))",
            self.inner.mesh().nx(),
            self.inner.mesh().ny(),
            d.x0,
            d.y0,
            d.x1,
            d.y1
        )
    }
}

/// Energy of the ball of radius `radius` for the source `peak - slope * r`.
#[pyfunction]
#[pyo3(signature = (radius, delta=0.0, p=2.0, nr=1000, peak=1.0, slope=0.0))]
fn radial_energy(radius: f64, delta: f64, p: f64, nr: usize, peak: f64, slope: f64) -> PyResult<f64> {
    let profile = if slope == 0.0 {
        RadialProfile::Constant(peak)
    } else {
        RadialProfile::Linear { peak, slope }
    };
    let problem = RadialProblem {
        radius,
        profile,
        delta,
        p,
        nr,
    };
    Ok(radial(&problem, &StateConfig::default()).map_err(to_py)?.energy)
}

fn spec_dict<'py>(py: Python<'py>, spec: &ProblemSpec) -> PyResult<Bound<'py, PyDict>> {
    let d = spec.domain;
    let out = PyDict::new(py);
    out.set_item("domain", (d.x0, d.y0, d.x1, d.y1))?;
    out.set_item("nx", spec.nx)?;
    out.set_item("ny", spec.ny)?;
    out.set_item("source", spec.source.kind())?;
    out.set_item("delta", spec.delta)?;
    out.set_item("p", spec.p)?;
    out.set_item("M", spec.optimization.upper_bound)?;
    out.set_item("alpha", spec.optimization.alpha)?;
    out.set_item("m", spec.optimization.volume_fraction)?;
    out.set_item("optimizer", spec.optimization.kind.name())?;
    out.set_item("output_dir", spec.output_dir.to_string_lossy().into_owned())?;
    out.set_item("seed", spec.seed)?;
    out.set_item("defaulted", spec.defaulted.clone())?;
    out.set_item("canonical", spec.to_config_string())?;
    Ok(out)
}

/// Parses configuration text into a dict of the main settings.
#[pyfunction]
fn parse_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let spec = parse_spec(text).map_err(to_py)?;
    spec_dict(py, &spec)
}

/// Runs the optimizer for a configuration text and returns the optimal
/// potential, state and histories.
#[pyfunction]
#[pyo3(signature = (config="", delta=None, max_iter=None, optimizer=None))]
fn optimize<'py>(
    py: Python<'py>,
    config: &str,
    delta: Option<f64>,
    max_iter: Option<usize>,
    optimizer: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut spec = parse_spec(config).map_err(to_py)?;
    if let Some(d) = delta {
        spec.delta = d;
    }
    if let Some(n) = max_iter {
        spec.optimization.max_outer_iter = n;
    }
    if let Some(name) = optimizer {
        spec.optimization.kind = OptimizerKind::parse(name)
            .ok_or_else(|| to_py(Error::Validation {
                field: "optimizer".into(),
                message: format!("unknown optimizer `{name}`"),
            }))?;
    }
    spec.validate().map_err(to_py)?;
    let problem = spec.design_problem().map_err(to_py)?;
    let cfg: OptimizationConfig = spec.optimization.clone();
    let result = py.detach(|| run_optimize(&problem, &cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("objective", result.objective())?;
    out.set_item("constraint", result.constraint())?;
    out.set_item("iterations", result.iterations)?;
    out.set_item("converged", result.converged)?;
    out.set_item("termination", result.termination.name())?;
    out.set_item("objective_history", result.objective_history.clone())?;
    out.set_item("constraint_history", result.constraint_history.clone())?;
    out.set_item("potential", result.potential.into_vec())?;
    out.set_item("state", result.state.into_vec())?;
    Ok(out)
}

#[pymodule]
fn pywcshape(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_function(wrap_pyfunction!(radial_energy, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add("WcshapeError", m.py().get_type::<WcshapeError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
