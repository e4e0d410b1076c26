use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use dalembert::cli::{self, Command, RunOptions};
use dalembert::confluent::build_confluent_matrix;
use dalembert::equation::{self, FactoredEquation, Forcing};
use dalembert::operators::{self, Boundary, Grid1d};
use dalembert::pde_examples;
use dalembert::solver::{self, SolutionTrace};
use dalembert::statespace::{DenseMatrix, QuadratureRule, StateVector};

create_exception!(dalembert_py, SolverError, PyException);
create_exception!(dalembert_py, ConfigError, PyException);

fn solver_err(e: dalembert::Error) -> PyErr {
    SolverError::new_err(e.to_string())
}

fn cli_err(e: cli::CliError) -> PyErr {
    match e {
        cli::CliError::Config(c) => ConfigError::new_err(c.to_string()),
        other => SolverError::new_err(other.to_string()),
    }
}

fn rule(panels: usize, nodes: usize) -> PyResult<QuadratureRule> {
    QuadratureRule::gauss_legendre(panels, nodes).map_err(solver_err)
}

/// A labelled generator on one of the dense, spectral or translation backends.
#[pyclass(name = "Operator", module = "dalembert_py", frozen)]
#[derive(Clone)]
struct PyOperator {
    inner: operators::Operator,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn dense(label: &str, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = DenseMatrix::from_rows(&rows).map_err(solver_err)?;
        let inner = operators::Operator::dense(label, m).map_err(solver_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (label, eigenvalues, scale = 1.0))]
    fn spectral(label: &str, eigenvalues: Vec<f64>, scale: f64) -> PyResult<Self> {
        let inner = operators::Operator::spectral(label, eigenvalues, scale).map_err(solver_err)?;
        Ok(Self { inner })
    }

    /// Spectral operator with the given rates and unit scale.
    #[staticmethod]
    fn diagonal(label: &str, rates: Vec<f64>) -> PyResult<Self> {
        let inner = operators::Operator::diagonal(label, rates).map_err(solver_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (label, speed, x0, length, points, periodic = true))]
    fn translation(label: &str, speed: f64, x0: f64, length: f64, points: usize, periodic: bool) -> PyResult<Self> {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::ZeroExtension };
        let inner =
            operators::Operator::translation(label, speed, Grid1d::periodic(x0, length, points), boundary)
                .map_err(solver_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn label(&self) -> &str {
        self.inner.label()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family().to_string()
    }

    fn apply(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.apply(&StateVector::from(v)).map_err(solver_err)?.into_vec())
    }

    fn semigroup(&self, t: f64, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.semigroup(t, &StateVector::from(v)).map_err(solver_err)?.into_vec())
    }

    fn to_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.to_matrix().map_err(solver_err)?.to_rows())
    }

    fn __repr__(&self) -> String {
        format!("Operator(label={:?}, family={}, dim={})", self.inner.label(), self.inner.family(), self.inner.dim())
    }
}

/// `∏ (d/dt − A_j) u = f` with initial derivatives and an optional forcing
/// callable `f(t) -> list[float]`.
#[pyclass(name = "Equation", module = "dalembert_py", frozen)]
struct PyEquation {
    inner: FactoredEquation,
}

#[pymethods]
impl PyEquation {
    #[new]
    #[pyo3(signature = (factors, initial_data, forcing = None))]
    fn new(factors: Vec<PyOperator>, initial_data: Vec<Vec<f64>>, forcing: Option<PyObject>) -> PyResult<Self> {
        let ops = factors.into_iter().map(|o| o.inner).collect();
        let init = initial_data.into_iter().map(StateVector::from).collect();
        let mut eq = FactoredEquation::new(ops, init).map_err(solver_err)?;
        if let Some(callable) = forcing {
            let dim = eq.dim();
            eq = eq.with_forcing(Forcing::new(move |t| {
                Python::with_gil(|py| {
                    callable
                        .call1(py, (t,))
                        .and_then(|r| r.extract::<Vec<f64>>(py))
                        .ok()
                        .filter(|v| v.len() == dim)
                        .map(StateVector::from)
                        .unwrap_or_else(|| StateVector::from(vec![f64::NAN; dim]))
                })
            }));
        }
        Ok(Self { inner: eq })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `(label, multiplicity)` per distinct generator, in first-occurrence order.
    fn groups(&self) -> Vec<(String, usize)> {
        self.inner
            .groups()
            .iter()
            .map(|g| (g.operator.label().to_string(), g.multiplicity))
            .collect()
    }

    /// Symbolic block entries of the confluent matrix.
    fn confluent_matrix(&self) -> PyResult<Vec<Vec<String>>> {
        Ok(build_confluent_matrix(self.inner.groups()).map_err(solver_err)?.render())
    }

    fn initial_data_transform(&self) -> PyResult<Vec<Vec<f64>>> {
        let out = equation::initial_data_transform(&self.inner).map_err(solver_err)?;
        Ok(out.into_iter().map(StateVector::into_vec).collect())
    }
}

#[pyclass(name = "Trace", module = "dalembert_py", frozen)]
struct PyTrace {
    inner: SolutionTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values.iter().map(|v| v.as_slice().to_vec()).collect()
    }

    #[getter]
    fn oracle_dev(&self) -> Option<Vec<f64>> {
        self.inner.diagnostics.oracle_dev.clone()
    }

    fn relative_deviation(&self, other: &PyTrace) -> PyResult<Vec<f64>> {
        self.inner.relative_deviation(&other.inner).map_err(solver_err)
    }

    fn to_csv(&self) -> String {
        cli::format_csv(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn trace(inner: SolutionTrace) -> PyTrace {
    PyTrace { inner }
}

#[pyfunction]
fn solve_homogeneous(py: Python<'_>, eq: &PyEquation, times: Vec<f64>) -> PyResult<PyTrace> {
    py.allow_threads(|| solver::solve_homogeneous(&eq.inner, &times))
        .map(trace)
        .map_err(solver_err)
}

#[pyfunction]
#[pyo3(signature = (eq, times, panels = 16, nodes_per_panel = 8))]
fn solve_inhomogeneous_zero_ic(eq: &PyEquation, times: Vec<f64>, panels: usize, nodes_per_panel: usize) -> PyResult<PyTrace> {
    solver::solve_inhomogeneous_zero_ic(&eq.inner, &times, rule(panels, nodes_per_panel)?)
        .map(trace)
        .map_err(solver_err)
}

#[pyfunction]
#[pyo3(signature = (eq, times, panels = 16, nodes_per_panel = 8))]
fn solve_full(eq: &PyEquation, times: Vec<f64>, panels: usize, nodes_per_panel: usize) -> PyResult<PyTrace> {
    solver::solve_full(&eq.inner, &times, rule(panels, nodes_per_panel)?)
        .map(trace)
        .map_err(solver_err)
}

/// RK4 integration of the equivalent first-order system.
#[pyfunction]
#[pyo3(signature = (eq, times, steps_per_unit = 2000))]
fn oracle_solve(eq: &PyEquation, times: Vec<f64>, steps_per_unit: usize) -> PyResult<PyTrace> {
    equation::oracle_solve(&eq.inner, &times, steps_per_unit)
        .map(trace)
        .map_err(solver_err)
}

#[pyfunction]
#[pyo3(signature = (a, b, k, t, x, panels = 16, nodes_per_panel = 8))]
fn lemma2_lhs(
    a: &PyOperator,
    b: &PyOperator,
    k: u32,
    t: f64,
    x: Vec<f64>,
    panels: usize,
    nodes_per_panel: usize,
) -> PyResult<Vec<f64>> {
    let r = rule(panels, nodes_per_panel)?;
    Ok(solver::lemma2_lhs(&a.inner, &b.inner, k, t, &StateVector::from(x), r)
        .map_err(solver_err)?
        .into_vec())
}

#[pyfunction]
fn lemma2_rhs(a: &PyOperator, b: &PyOperator, k: u32, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(solver::lemma2_rhs(&a.inner, &b.inner, k, t, &StateVector::from(x))
        .map_err(solver_err)?
        .into_vec())
}

/// Roots of `z² + c1 z + c2` as `((re, im), (re, im), is_double)`.
#[pyfunction]
fn characteristic_roots(c1: f64, c2: f64) -> ((f64, f64), (f64, f64), bool) {
    let (z1, z2, double) = pde_examples::characteristic_roots(c1, c2);
    ((z1.re, z1.im), (z2.re, z2.im), double)
}

/// Runs a TOML problem definition; returns `(csv or None, report JSON or None)`.
#[pyfunction]
#[pyo3(signature = (text, command = "solve", seed = None))]
fn run_config(text: &str, command: &str, seed: Option<u64>) -> PyResult<(Option<String>, Option<String>)> {
    let command = match command {
        "solve" => Command::Solve,
        "verify" => Command::Verify,
        "compare-oracle" => Command::CompareOracle,
        "lemma2-check" => Command::Lemma2Check,
        other => return Err(ConfigError::new_err(format!("unknown command `{other}`"))),
    };
    let config = cli::parse_config(text).map_err(|e| ConfigError::new_err(e.to_string()))?;
    let outcome = cli::run(&config, command, &RunOptions { seed, out: None }).map_err(cli_err)?;
    let report = outcome
        .report
        .map(|r| serde_json_string(&r))
        .transpose()?;
    Ok((outcome.csv, report))
}

fn serde_json_string(report: &cli::VerificationReport) -> PyResult<String> {
    cli::report_json(report).map_err(|e| SolverError::new_err(e.to_string()))
}

#[pymodule]
fn dalembert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyEquation>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(solve_homogeneous, m)?)?;
    m.add_function(wrap_pyfunction!(solve_inhomogeneous_zero_ic, m)?)?;
    m.add_function(wrap_pyfunction!(solve_full, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_solve, m)?)?;
    m.add_function(wrap_pyfunction!(lemma2_lhs, m)?)?;
    m.add_function(wrap_pyfunction!(lemma2_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(characteristic_roots, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
