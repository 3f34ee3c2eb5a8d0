use pyo3::prelude::*;
use pyo3::types::{IntoPyDict, PyDict, PyModule};

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> PyResult<R>) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "pybubbly")?;
        pybubbly::pybubbly(&m)?;
        f(py, &m)
    })
    .unwrap()
}

#[test]
fn crystal_defaults_and_capacitance() {
    with_module(|_py, m| {
        let crystal = m.getattr("Crystal")?.call0()?;
        assert_eq!(crystal.getattr("kind")?.extract::<String>()?, "honeycomb");
        assert_eq!(crystal.getattr("n_bubbles")?.extract::<usize>()?, 2);
        let k: (f64, f64) = crystal.call_method0("dirac_point")?.extract()?;
        let cap: Vec<Vec<num_complex::Complex64>> = crystal.call_method1("capacitance", (k,))?.extract()?;
        assert!(cap[0][1].norm() <= 1e-6 * cap[0][0].re);
        assert!((cap[0][0] - cap[1][1]).norm() <= 1e-10 * cap[0][0].norm());
        Ok(())
    })
}

#[test]
fn green_methods_agree() {
    with_module(|py, m| {
        let crystal = m.getattr("Crystal")?.call((), Some(&[("kind", "square")].into_py_dict(py)?))?;
        let args = ((0.7, -0.2), 0.4, (0.3, 0.45));
        let s: num_complex::Complex64 =
            crystal.call_method("green", args, Some(&[("method", "spectral")].into_py_dict(py)?))?.extract()?;
        let e: num_complex::Complex64 = crystal.call_method1("green", args)?.extract()?;
        assert!((s - e).norm() <= 1e-8 * e.norm().max(1.0));
        Ok(())
    })
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, m| {
        let kwargs = PyDict::new(py);
        kwargs.set_item("radius", 0.5)?;
        let err = m.getattr("Crystal")?.call((), Some(&kwargs)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = m.getattr("Crystal")?.call1(("hexagonal",)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let crystal = m.getattr("Crystal")?.call0()?;
        let err = crystal.call_method1("capacitance", ((0.0, 0.0),)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        Ok(())
    })
}

#[test]
fn toml_round_trip() {
    with_module(|_py, m| {
        let text: String = m.getattr("default_config")?.call0()?.extract()?;
        let crystal = m.getattr("Crystal")?.call_method1("from_toml", (text.clone(),))?;
        assert_eq!(crystal.call_method0("to_toml")?.extract::<String>()?, text);
        assert!(m.getattr("Crystal")?.call_method1("from_toml", ("bogus = 1",)).is_err());
        Ok(())
    })
}

#[test]
fn run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bands");
    let cfg = include_str!("../../../configs/square.toml").replace("points_per_segment = 12", "points_per_segment = 2");
    with_module(|py, m| {
        let kwargs = PyDict::new(py);
        kwargs.set_item("config", cfg)?;
        let manifest = m.getattr("run")?.call(("bands", out.to_str().unwrap()), Some(&kwargs))?;
        let manifest = manifest.cast::<PyDict>()?;
        assert_eq!(manifest.get_item("command")?.unwrap().extract::<String>()?, "bands");
        assert!(m.getattr("run")?.call1(("spectrum", out.to_str().unwrap())).is_err());
        Ok(())
    });
    assert!(out.join("manifest.json").exists() && out.join("bands.csv").exists());
}
