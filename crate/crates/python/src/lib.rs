//! Python bindings: a `Crystal` handle over the numerical core plus the
//! command runner used by the CLI.

use std::path::PathBuf;

use bubbly::boundary::BoundaryBasis;
use bubbly::cli::{execute, Command};
use bubbly::config::RunConfig;
use bubbly::fields::{eval_points, kernel_densities, BlochField};
use bubbly::greens::{green, GreensMethod, GreensParams};
use bubbly::homogenize::{envelope_frequency_dispersion, EnvelopeProblem};
use bubbly::lattice::{LatticeKind, QuasiMomentum, Vec2};
use bubbly::operators::Material;
use bubbly::spectral::{band_at, band_sweep, capacitance, dirac_frequency, dirac_velocity};
use bubbly::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::Config(_)
        | Error::ZeroQuasiMomentum
        | Error::TouchingBubbles { .. }
        | Error::UnderResolved { .. }
        | Error::Singular { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_kind(kind: &str) -> PyResult<LatticeKind> {
    match kind {
        "honeycomb" => Ok(LatticeKind::Honeycomb),
        "square" => Ok(LatticeKind::Square),
        other => Err(PyValueError::new_err(format!("unknown lattice kind {other:?}"))),
    }
}

fn parse_method(method: &str) -> PyResult<GreensMethod> {
    match method {
        "spectral" => Ok(GreensMethod::Spectral),
        "ewald" => Ok(GreensMethod::Ewald),
        other => Err(PyValueError::new_err(format!("unknown Green's method {other:?}"))),
    }
}

fn parse_command(command: &str) -> PyResult<Command> {
    match command {
        "bands" => Ok(Command::Bands),
        "dirac" => Ok(Command::Dirac),
        "field" => Ok(Command::Field),
        "envelope" => Ok(Command::Envelope),
        "compare" => Ok(Command::Compare),
        other => Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    }
}

fn qm(alpha: (f64, f64)) -> QuasiMomentum {
    QuasiMomentum::new(alpha.0, alpha.1)
}

/// A bubbly crystal with fixed geometry and material.
#[pyclass(name = "Crystal", module = "pybubbly", frozen)]
pub struct Crystal {
    cfg: RunConfig,
    basis: BoundaryBasis,
    material: Material,
}

impl Crystal {
    fn from_config(cfg: RunConfig) -> PyResult<Self> {
        cfg.validate().map_err(py_err)?;
        let basis = cfg.basis().map_err(py_err)?;
        let material = cfg.material().map_err(py_err)?;
        Ok(Self { cfg, basis, material })
    }
}

#[pymethods]
impl Crystal {
    #[new]
    #[pyo3(signature = (kind = "honeycomb", constant = 1.0, radius = 0.2, n_quad = 64, rho = None, kappa = None, rho_b = None, kappa_b = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: &str,
        constant: f64,
        radius: f64,
        n_quad: usize,
        rho: Option<f64>,
        kappa: Option<f64>,
        rho_b: Option<f64>,
        kappa_b: Option<f64>,
    ) -> PyResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.lattice.kind = parse_kind(kind)?;
        cfg.lattice.constant = constant;
        cfg.bubbles.radius = radius;
        cfg.bubbles.n_quad = n_quad;
        let m = &mut cfg.material;
        m.rho = rho.unwrap_or(m.rho);
        m.kappa = kappa.unwrap_or(m.kappa);
        m.rho_b = rho_b.unwrap_or(m.rho_b);
        m.kappa_b = kappa_b.unwrap_or(m.kappa_b);
        Self::from_config(cfg)
    }

    /// Build from a TOML run configuration.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::from_config(RunConfig::from_toml_str(text).map_err(py_err)?)
    }

    fn to_toml(&self) -> String {
        self.cfg.to_toml_string()
    }

    #[getter]
    fn kind(&self) -> String {
        self.cfg.lattice.kind.to_string()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.basis.radius
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.material.delta()
    }

    #[getter]
    fn n_bubbles(&self) -> usize {
        self.basis.n_bubbles()
    }

    /// `K` for the honeycomb lattice, `M` for the square one.
    fn dirac_point(&self) -> (f64, f64) {
        let a = self.basis.lattice.dirac_point();
        (a.0[0], a.0[1])
    }

    #[pyo3(signature = (alpha, k, x, method = "ewald"))]
    fn green(&self, alpha: (f64, f64), k: f64, x: (f64, f64), method: &str) -> PyResult<Complex64> {
        let params = GreensParams::new(self.basis.lattice, qm(alpha), k).with_method(parse_method(method)?);
        green(&params, Vec2::new(x.0, x.1)).map_err(py_err)
    }

    /// Capacitance matrix as nested lists of complex numbers.
    fn capacitance(&self, alpha: (f64, f64)) -> PyResult<Vec<Vec<Complex64>>> {
        let cap = capacitance(&self.basis, qm(alpha)).map_err(py_err)?;
        let m = &cap.matrix;
        Ok((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
    }

    #[pyo3(signature = (tol = 1e-6))]
    fn dirac_frequency(&self, py: Python<'_>, tol: f64) -> PyResult<Py<PyAny>> {
        let out = py.detach(|| dirac_frequency(&self.basis, &self.material, tol)).map_err(py_err)?;
        to_py(py, &out)
    }

    /// Dirac-point data; `step` is relative to `|alpha*|`.
    #[pyo3(signature = (step = 1e-3))]
    fn dirac_velocity(&self, py: Python<'_>, step: f64) -> PyResult<Py<PyAny>> {
        let h = step * self.basis.lattice.dirac_point().norm();
        let out = py.detach(|| dirac_velocity(&self.basis, &self.material, h)).map_err(py_err)?;
        to_py(py, &out)
    }

    #[pyo3(signature = (alpha, band, tol = 1e-6))]
    fn band(&self, py: Python<'_>, alpha: (f64, f64), band: usize, tol: f64) -> PyResult<f64> {
        let shift = vec![0.0; self.basis.n_bubbles()];
        let root = py
            .detach(|| band_at(&self.basis, &self.material, qm(alpha), band, &shift, tol))
            .map_err(py_err)?;
        Ok(root.omega)
    }

    /// Band sweep along symmetry-point labels such as `["G", "K", "M", "G"]`.
    #[pyo3(signature = (path = None, points_per_segment = 12, tol = 1e-6))]
    fn bands(&self, py: Python<'_>, path: Option<Vec<String>>, points_per_segment: usize, tol: f64) -> PyResult<Py<PyAny>> {
        let mut cfg = self.cfg.clone();
        cfg.bands.path = path.unwrap_or_default();
        cfg.bands.points_per_segment = points_per_segment;
        let bz = cfg.path().map_err(py_err)?;
        let out = py.detach(|| band_sweep(&self.basis, &self.material, &bz, tol)).map_err(py_err)?;
        to_py(py, &out)
    }

    /// Envelope frequency at shift `epsilon` along the configured direction.
    #[pyo3(signature = (epsilon, tol = 1e-6))]
    fn envelope_frequency(&self, py: Python<'_>, epsilon: f64, tol: f64) -> PyResult<Py<PyAny>> {
        let out = py
            .detach(|| {
                let problem = EnvelopeProblem::new(&self.basis, &self.material, self.cfg.direction(), tol)?;
                envelope_frequency_dispersion(&problem, epsilon)
            })
            .map_err(py_err)?;
        to_py(py, &out)
    }

    /// Bloch eigenfield at the characteristic pair `(alpha, omega)`, sampled at `points`.
    fn field(&self, py: Python<'_>, alpha: (f64, f64), omega: f64, points: Vec<(f64, f64)>) -> PyResult<Vec<Complex64>> {
        py.detach(|| {
            let dens = kernel_densities(&self.basis, &self.material, qm(alpha), omega)?;
            let field = BlochField::new(&self.basis, &self.material, &dens)?;
            let pts: Vec<Vec2> = points.iter().map(|p| Vec2::new(p.0, p.1)).collect();
            Ok(eval_points(&field, &pts).into_iter().map(|s| s.value).collect())
        })
        .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Crystal(kind={:?}, radius={}, delta={:.3e})",
            self.kind(),
            self.basis.radius,
            self.material.delta()
        )
    }
}

/// Run a CLI command with a TOML config; returns the manifest as a dict.
#[pyfunction]
#[pyo3(signature = (command, out, config = None, threads = 1))]
fn run(py: Python<'_>, command: &str, out: PathBuf, config: Option<&str>, threads: usize) -> PyResult<Py<PyAny>> {
    let command = parse_command(command)?;
    let cfg = match config {
        Some(text) => RunConfig::from_toml_str(text).map_err(py_err)?,
        None => RunConfig::default(),
    };
    let (manifest, _) = py.detach(|| execute(command, &cfg, &out, threads)).map_err(py_err)?;
    to_py(py, &manifest)
}

/// The default run configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_toml_string()
}

#[pymodule]
pub fn pybubbly(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Crystal>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
