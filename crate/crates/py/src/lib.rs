use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

use skewlab::harness::{self, ExperimentConfig, MapConfig};
use skewlab::hypotheses;
use skewlab::lyapunov::{self as lyap, CocycleDriver, KickSharing, LyapunovParams, System};
use skewlab::maps::{self, KickProjection};
use skewlab::torus::{ToralAutomorphism, TorusVector};

fn err(e: skewlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn split_rows(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n).map(|c| c.to_vec()).collect()
}

#[allow(clippy::too_many_arguments)]
fn map_config(family: &str, r: f64, tau: f64, tau1: f64, tau2: f64, tau3: f64, dim: usize) -> MapConfig {
    MapConfig { family: family.into(), r, tau, tau1, tau2, tau3, dim, potential: None }
}

/// A fiber map from the catalogue (standard, coupled_p, coupled_q, froeschle, identity).
#[pyclass(frozen)]
struct FiberMap {
    inner: Arc<dyn maps::FiberMap>,
    config: MapConfig,
}

#[pymethods]
impl FiberMap {
    #[new]
    #[pyo3(signature = (family="standard", r=100.0, tau=0.0, tau1=0.0, tau2=0.0, tau3=0.0, dim=2))]
    #[allow(clippy::too_many_arguments)]
    fn new(family: &str, r: f64, tau: f64, tau1: f64, tau2: f64, tau3: f64, dim: usize) -> PyResult<Self> {
        let config = map_config(family, r, tau, tau1, tau2, tau3, dim);
        Ok(FiberMap { inner: harness::build_fiber(&config).map_err(err)?, config })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Coordinate index lists of the blocks.
    fn blocks(&self) -> Vec<Vec<usize>> {
        self.inner.blocks().into_iter().map(|b| b.coords).collect()
    }

    fn eval(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = TorusVector::reduce(&point).map_err(err)?;
        Ok(maps::eval(self.inner.as_ref(), &p).map_err(err)?.into_vec())
    }

    fn inverse(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = TorusVector::reduce(&point).map_err(err)?;
        Ok(maps::inverse(self.inner.as_ref(), &p).map_err(err)?.into_vec())
    }

    fn jacobian(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        if point.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.inner.dim())));
        }
        let mut out = vec![0.0; point.len() * point.len()];
        self.inner.jacobian(&point, &mut out);
        Ok(split_rows(&out, point.len()))
    }

    fn __repr__(&self) -> String {
        format!("FiberMap({})", self.inner.name())
    }
}

/// `(m, v) -> (A^L m, S(v) + P A^K m)`.
#[pyclass(frozen)]
struct SkewProduct {
    inner: maps::SkewProduct,
}

#[pymethods]
impl SkewProduct {
    #[new]
    #[pyo3(signature = (fiber, base, base_iterates, kick_iterates, projection="first-coordinate"))]
    fn new(fiber: &FiberMap, base: Vec<Vec<i64>>, base_iterates: usize, kick_iterates: usize, projection: &str) -> PyResult<Self> {
        let a = ToralAutomorphism::from_rows(&base).map_err(err)?;
        let (d, l) = (fiber.inner.dim(), a.dim());
        let p = match projection {
            "first-coordinate" => KickProjection::first_coordinate(d, l),
            "zero" => KickProjection::zero(d, l),
            other => return Err(PyValueError::new_err(format!("unknown projection '{other}'"))),
        };
        let inner = maps::SkewProduct::new(a, base_iterates, kick_iterates, p, fiber.inner.clone()).map_err(err)?;
        Ok(SkewProduct { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = TorusVector::reduce(&point).map_err(err)?;
        Ok(self.inner.eval(&p).map_err(err)?.into_vec())
    }

    fn inverse(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = TorusVector::reduce(&point).map_err(err)?;
        Ok(self.inner.inverse(&p).map_err(err)?.into_vec())
    }

    fn jacobian(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        if point.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.inner.dim())));
        }
        let j = self.inner.jacobian(&point);
        Ok((0..j.nrows()).map(|i| j.row(i).iter().copied().collect()).collect())
    }
}

/// Critical bands `[(lo, hi), ...]` of block `block`.
#[pyfunction]
#[pyo3(signature = (fiber, block=0))]
fn critical_region(fiber: &FiberMap, block: usize) -> PyResult<Vec<(f64, f64)>> {
    let c = hypotheses::critical_region(fiber.inner.as_ref(), block).map_err(err)?;
    Ok(c.bands.iter().map(|b| (b.lo, b.hi)).collect())
}

/// Hypothesis battery report as a dict; the skew product is optional.
#[pyfunction]
#[pyo3(signature = (fiber, skew=None, grid_n=2048))]
fn hypothesis_report<'py>(py: Python<'py>, fiber: &FiberMap, skew: Option<&SkewProduct>, grid_n: usize) -> PyResult<Bound<'py, PyAny>> {
    let params = hypotheses::BatteryParams { grid_n, ..Default::default() };
    let rep = hypotheses::run_battery(fiber.inner.as_ref(), fiber.config.r, skew.map(|s| &s.inner), &params).map_err(err)?;
    to_py(py, &rep)
}

/// Lyapunov spectrum of a fiber map under a kick driver (iid-kick, expanding-base, autonomous).
#[pyfunction]
#[pyo3(signature = (fiber, mode="iid-kick", n=100_000, seeds=vec![0], burn_in=1000, qr_period=1, k=2))]
#[allow(clippy::too_many_arguments)]
fn lyapunov<'py>(
    py: Python<'py>,
    fiber: &FiberMap,
    mode: &str,
    n: usize,
    seeds: Vec<u64>,
    burn_in: usize,
    qr_period: usize,
    k: i64,
) -> PyResult<Bound<'py, PyAny>> {
    let driver = match mode {
        "iid-kick" => CocycleDriver::IidKick { sharing: KickSharing::Independent },
        "expanding-base" => CocycleDriver::ExpandingBase { k, r: fiber.config.r, coupled: true },
        "autonomous" => CocycleDriver::Autonomous,
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    let params = LyapunovParams { n, burn_in, qr_period, seeds };
    let system = System::Fiber(fiber.inner.clone());
    let rep = py.detach(|| lyap::lyapunov_spectrum(&system, &driver, &params)).map_err(err)?;
    to_py(py, &rep)
}

/// Parry measure of a 0-1 transition matrix.
#[pyfunction]
fn parry_measure<'py>(py: Python<'py>, matrix: Vec<Vec<u8>>) -> PyResult<Bound<'py, PyAny>> {
    let k = matrix.len();
    if matrix.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = lyap::parry_measure(&matrix.concat(), k).map_err(err)?;
    to_py(py, &m)
}

/// TOML text of a preset config.
#[pyfunction]
#[pyo3(signature = (name, r=None))]
fn preset_config(name: &str, r: Option<f64>) -> PyResult<String> {
    harness::preset(name, r).and_then(|c| c.to_toml()).map_err(err)
}

/// Runs a TOML experiment config; returns the JSON document as a dict.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_toml(toml).map_err(err)?;
    let out = py.detach(|| harness::run(&cfg)).map_err(err)?;
    py.import("json")?.call_method1("loads", (out.to_json().map_err(err)?,))
}

/// Runs a named preset with optional overrides of `r`, `n` and the seed list.
#[pyfunction]
#[pyo3(signature = (name, r=None, n=None, seeds=None))]
fn run_preset<'py>(py: Python<'py>, name: &str, r: Option<f64>, n: Option<usize>, seeds: Option<Vec<u64>>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = harness::preset(name, r).map_err(err)?;
    if let Some(n) = n {
        cfg.lyapunov.n = n;
    }
    if let Some(s) = seeds {
        cfg.lyapunov.seeds = s;
    }
    let out = py.detach(|| harness::run(&cfg)).map_err(err)?;
    py.import("json")?.call_method1("loads", (out.to_json().map_err(err)?,))
}

#[pymodule]
fn _skewlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FiberMap>()?;
    m.add_class::<SkewProduct>()?;
    m.add_function(wrap_pyfunction!(critical_region, m)?)?;
    m.add_function(wrap_pyfunction!(hypothesis_report, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(parry_measure, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    Ok(())
}
