//! Python bindings: parameters, grids, kernels, operators, fields, the
//! regularity measurements and the scenario runner.

use std::path::PathBuf;

use nonlocal_lab::domain::{cylinder, EllipticityParams, Grid, SpaceTimeField};
use nonlocal_lab::evolution::evolve;
use nonlocal_lab::kernels::{kernel_bounds_check, make_dyadic_rough_kernel, make_power_kernel, Kernel, TailQuadrature};
use nonlocal_lab::operators::{IsaacsFamily, OperatorHandle};
use nonlocal_lab::regularity::{
    deviation_profile, estimate_space_exponent, fit_plane, holder_seminorm_space, residual_moments_check, FitMode,
};
use nonlocal_lab::Error;
use nonlocal_labcli::generators::DataSpec;
use nonlocal_labcli::scenarios;
use nonlocal_labcli::selfcheck::selfcheck as run_selfcheck;
use nonlocal_labcli::ScenarioConfig;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    match e {
        Error::Cfl { .. }
        | Error::NonFinite { .. }
        | Error::Divergence(_)
        | Error::Quadrature(_)
        | Error::Estimation(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mode(s: &str) -> PyResult<FitMode> {
    match s {
        "constant-fit" | "constant" => Ok(FitMode::ConstantFit),
        "affine-fit" | "affine" => Ok(FitMode::AffineFit),
        _ => Err(PyValueError::new_err(format!("unknown fit mode `{s}`"))),
    }
}

fn data_spec(d: &Bound<'_, PyDict>, seed: u64) -> PyResult<DataSpec> {
    let mut pairs = Vec::new();
    for (k, v) in d.iter() {
        pairs.push((k.str()?.to_string(), v.str()?.to_string()));
    }
    DataSpec::from_pairs(&pairs, seed).map_err(err)
}

#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams(EllipticityParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (sigma, lam=1.0, lam_upper=1.0))]
    fn new(sigma: f64, lam: f64, lam_upper: f64) -> PyResult<Self> {
        EllipticityParams::one_d(sigma, lam, lam_upper).map(Self).map_err(err)
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda
    }
    #[getter]
    fn lam_upper(&self) -> f64 {
        self.0.lambda_upper
    }
    fn __repr__(&self) -> String {
        format!("Params(sigma={}, lam={}, lam_upper={})", self.0.sigma, self.0.lambda, self.0.lambda_upper)
    }
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (half_width, n_points, t0=0.0, t_end=0.0, n_steps=0))]
    fn new(half_width: f64, n_points: usize, t0: f64, t_end: f64, n_steps: usize) -> PyResult<Self> {
        Grid::new(half_width, n_points, t0, t_end, n_steps).map(Self).map_err(err)
    }
    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }
    fn nodes(&self) -> Vec<f64> {
        self.0.nodes()
    }
    fn times(&self) -> Vec<f64> {
        self.0.times()
    }
}

#[pyclass(name = "Kernel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernel(Kernel);

#[pymethods]
impl PyKernel {
    #[staticmethod]
    #[pyo3(signature = (params, c=None))]
    fn power(params: &PyParams, c: Option<f64>) -> PyResult<Self> {
        make_power_kernel(&params.0, c.unwrap_or(params.0.lambda)).map(Self).map_err(err)
    }
    #[staticmethod]
    fn dyadic(params: &PyParams, seed: u64) -> PyResult<Self> {
        make_dyadic_rough_kernel(&params.0, seed).map(Self).map_err(err)
    }
    /// Kernel value `K(y)`.
    fn __call__(&self, y: f64) -> f64 {
        self.0.eval(y)
    }
    /// Profile `a(y)`.
    fn profile(&self, y: f64) -> f64 {
        self.0.a(y)
    }
    fn rescaled(&self, r: f64) -> PyResult<Self> {
        self.0.rescaled(r).map(Self).map_err(err)
    }
    /// True when the kernel stays between the ellipticity envelopes on log-spaced probes.
    #[pyo3(signature = (n_probes=2000))]
    fn bounds_ok(&self, n_probes: usize) -> PyResult<bool> {
        kernel_bounds_check(&self.0, n_probes).map(|r| r.passed).map_err(err)
    }
}

#[pyclass(name = "Field", frozen)]
struct PyField(SpaceTimeField);

#[pymethods]
impl PyField {
    /// Field sampling the named data spec (time-independent) on the grid.
    #[staticmethod]
    #[pyo3(signature = (grid, spec, seed=0))]
    fn from_spec(grid: &PyGrid, spec: &Bound<'_, PyDict>, seed: u64) -> PyResult<Self> {
        let ext = data_spec(spec, seed)?.build();
        SpaceTimeField::from_fn(grid.0, |x, t| ext.eval(x, t), ext.clone())
            .map(Self)
            .map_err(err)
    }
    /// Field with explicit values (levels stacked, each of length `n_points + 1`)
    /// and named exterior data.
    #[staticmethod]
    #[pyo3(signature = (grid, values, exterior, seed=0))]
    fn from_values(grid: &PyGrid, values: Vec<f64>, exterior: &Bound<'_, PyDict>, seed: u64) -> PyResult<Self> {
        let ext = data_spec(exterior, seed)?.build();
        SpaceTimeField::new(grid.0, values, ext).map(Self).map_err(err)
    }
    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }
    fn level(&self, m: usize) -> PyResult<Vec<f64>> {
        if m >= self.0.n_levels() {
            return Err(PyValueError::new_err(format!("level {m} out of range")));
        }
        Ok(self.0.level(m).to_vec())
    }
    fn sup_norm(&self) -> f64 {
        self.0.sup_norm()
    }
    /// `(a, b, D)` of the fitting plane on `Q_r(x, t)`.
    #[pyo3(signature = (x, t, r, sigma, fit="affine-fit"))]
    fn fit_plane(&self, x: f64, t: f64, r: f64, sigma: f64, fit: &str) -> PyResult<(f64, f64, f64)> {
        let q = cylinder(&[x], t, r, sigma).map_err(err)?;
        let f = fit_plane(&self.0, &q, mode(fit)?).map_err(err)?;
        Ok((f.a, f.b, f.residual_sup))
    }
    /// Whether the least-squares moment conditions hold for the fit on `Q_r(x, t)`.
    fn moments_ok(&self, x: f64, t: f64, r: f64, sigma: f64) -> PyResult<bool> {
        let q = cylinder(&[x], t, r, sigma).map_err(err)?;
        let f = fit_plane(&self.0, &q, FitMode::AffineFit).map_err(err)?;
        Ok(residual_moments_check(&f, &self.0).passed)
    }
    /// `(radii, aggregate D, exponent, constant)` over the given centers.
    #[pyo3(signature = (centers, radii, sigma, fit="affine-fit"))]
    fn space_exponent(
        &self,
        centers: Vec<(f64, f64)>,
        radii: Vec<f64>,
        sigma: f64,
        fit: &str,
    ) -> PyResult<(Vec<f64>, Vec<f64>, f64, f64)> {
        let p = deviation_profile(&self.0, &centers, &radii, mode(fit)?, sigma).map_err(err)?;
        let e = estimate_space_exponent(&p).map_err(err)?;
        Ok((p.snapped_radii, p.aggregate, e.exponent, e.constant))
    }
    fn holder_space(&self, t: f64, radius: f64, beta: f64) -> PyResult<f64> {
        holder_seminorm_space(&self.0, t, radius, beta).map_err(err)
    }
}

#[pyclass(name = "Operator", frozen)]
struct PyOperator(OperatorHandle);

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn linear(kernel: &PyKernel) -> Self {
        Self(OperatorHandle::linear(kernel.0.clone()))
    }
    #[staticmethod]
    fn pucci_plus(params: &PyParams) -> Self {
        Self(OperatorHandle::pucci_plus(&params.0))
    }
    #[staticmethod]
    fn pucci_minus(params: &PyParams) -> Self {
        Self(OperatorHandle::pucci_minus(&params.0))
    }
    /// Random `n_alpha x n_beta` Isaacs family of rough kernels.
    #[staticmethod]
    fn isaacs(params: &PyParams, n_alpha: usize, n_beta: usize, seed: u64) -> PyResult<Self> {
        IsaacsFamily::random(&params.0, n_alpha, n_beta, seed)
            .map(|f| Self(OperatorHandle::isaacs(f)))
            .map_err(err)
    }
    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.0.kind())
    }
    /// `I u` at the interior nodes `1..n_points` of level `level`.
    #[pyo3(signature = (field, level=0))]
    fn apply(&self, py: Python<'_>, field: &PyField, level: usize) -> PyResult<Vec<f64>> {
        let u = &field.0;
        if level >= u.n_levels() {
            return Err(PyValueError::new_err(format!("level {level} out of range")));
        }
        let g = *u.grid();
        py.detach(|| {
            let op = self
                .0
                .discretize(&g, u.exterior().bound(), TailQuadrature::default())?;
            op.apply_snapshot(&u.snapshot(level), 1..g.n_points)
        })
        .map_err(err)
    }
}

/// Evolve the problem described by a config text; returns the stored field.
#[pyfunction]
fn evolve_config(py: Python<'_>, config: &str) -> PyResult<PyField> {
    let cfg = ScenarioConfig::parse(config).map_err(err)?;
    py.detach(|| {
        let pb = scenarios::build_problem(&cfg)?;
        evolve(&pb).map(|t| t.field)
    })
    .map(PyField)
    .map_err(err)
}

/// Run a scenario config, writing outputs under `out_dir`; returns the report JSON.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed=None))]
fn run_scenario(py: Python<'_>, config: &str, out_dir: PathBuf, seed: Option<u64>) -> PyResult<String> {
    let cfg = ScenarioConfig::parse_with_seed(config, seed).map_err(err)?;
    py.detach(|| scenarios::simulate(&cfg, &out_dir).and_then(|o| o.report.to_json()))
        .map_err(err)
}

/// Built-in invariant suites; returns the report JSON.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn selfcheck(py: Python<'_>, seed: u64) -> PyResult<String> {
    py.detach(|| run_selfcheck(seed).and_then(|r| r.to_json())).map_err(err)
}

#[pymodule]
#[pyo3(name = "nonlocal_lab")]
fn nonlocal_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(evolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
