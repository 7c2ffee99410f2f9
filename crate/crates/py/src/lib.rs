//! Python bindings for `wfh-core`.
//!
//! Complex arrays cross the boundary as flat row-major lists of Python
//! `complex`; reports are returned as dictionaries.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wfh_core::holography::{self as holo, Kernel, ObjectMask, PropagationParams};
use wfh_core::reconstruction::{self as rec, NoiseModel, Scheme};
use wfh_core::{io, validate, Domain, Error, Grid2D, ModeKind, ModeSpec};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_scheme(s: &str) -> PyResult<Scheme> {
    match s {
        "weak_scan" => Ok(Scheme::WeakScan),
        "strong_scan" => Ok(Scheme::StrongScan),
        "scanfree" | "scan_free" => Ok(Scheme::Scanfree),
        _ => Err(PyValueError::new_err(format!("unknown scheme `{s}`"))),
    }
}

fn parse_domain(s: &str) -> PyResult<Domain> {
    match s {
        "position" => Ok(Domain::Position),
        "momentum" => Ok(Domain::Momentum),
        _ => Err(PyValueError::new_err(format!("unknown domain `{s}`"))),
    }
}

fn noise(photons: Option<u64>, seed: u64) -> NoiseModel {
    match photons {
        Some(n) => NoiseModel::shot_noise(n, seed),
        None => NoiseModel::exact(),
    }
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid(Grid2D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> PyResult<Self> {
        Grid2D::new(nx, ny, dx, dy).map(Self).map_err(py_err)
    }

    #[getter]
    fn nx(&self) -> usize {
        self.0.nx()
    }

    #[getter]
    fn ny(&self) -> usize {
        self.0.ny()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    #[getter]
    fn dy(&self) -> f64 {
        self.0.dy()
    }

    #[getter]
    fn center(&self) -> (usize, usize) {
        self.0.center()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}, {}, {:e}, {:e})",
            self.0.nx(),
            self.0.ny(),
            self.0.dx(),
            self.0.dy()
        )
    }
}

#[pyclass(name = "WaveField", from_py_object)]
#[derive(Clone)]
struct PyWaveField(wfh_core::WaveField);

#[pymethods]
impl PyWaveField {
    #[new]
    #[pyo3(signature = (grid, amplitudes, domain = "position"))]
    fn new(grid: PyGrid, amplitudes: Vec<Complex64>, domain: &str) -> PyResult<Self> {
        wfh_core::WaveField::new(grid.0, amplitudes, parse_domain(domain)?)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_field(path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_field(path, &self.0).map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.0.domain().as_str()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.amplitudes().to_vec()
    }

    fn at(&self, ix: usize, iy: usize) -> PyResult<Complex64> {
        if !self.0.grid().contains((ix, iy)) {
            return Err(PyValueError::new_err(format!("({ix}, {iy}) is outside the grid")));
        }
        Ok(self.0.at((ix, iy)))
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn normalized(&self) -> PyResult<Self> {
        self.0.normalized().map(Self).map_err(py_err)
    }

    fn to_momentum(&self) -> PyResult<Self> {
        wfh_core::to_momentum(&self.0).map(Self).map_err(py_err)
    }

    fn to_position(&self) -> PyResult<Self> {
        wfh_core::to_position(&self.0).map(Self).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.amplitudes().len()
    }
}

#[pyclass(name = "WeakValueMap")]
struct PyWeakValueMap(rec::WeakValueMap);

#[pymethods]
impl PyWeakValueMap {
    #[getter]
    fn values(&self) -> Vec<Complex64> {
        self.0.values.clone()
    }

    #[getter]
    fn valid(&self) -> Vec<bool> {
        self.0.valid.clone()
    }

    #[getter]
    fn success(&self) -> Vec<f64> {
        self.0.success.clone()
    }

    #[getter]
    fn scheme(&self) -> &'static str {
        self.0.scheme.as_str()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn postselect_bin(&self) -> (usize, usize) {
        self.0.postselect_bin
    }

    #[getter]
    fn valid_fraction(&self) -> f64 {
        self.0.valid_fraction()
    }

    #[getter]
    fn settings_per_pixel(&self) -> usize {
        self.0.scheme.settings_per_pixel()
    }

    fn sidecar<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.0.sidecar())
    }
}

#[pyfunction]
#[pyo3(signature = (grid, kind, waist = 0.0, l = 0, p = 0, center = (0.0, 0.0), path = None))]
fn make_mode(
    grid: PyGrid,
    kind: &str,
    waist: f64,
    l: i32,
    p: u32,
    center: (f64, f64),
    path: Option<PathBuf>,
) -> PyResult<PyWaveField> {
    let kind = match kind {
        "gaussian" => ModeKind::Gaussian,
        "laguerre_gauss" => ModeKind::LaguerreGauss,
        "uniform" => ModeKind::Uniform,
        "delta" => ModeKind::Delta,
        "custom_file" => ModeKind::CustomFile,
        other => return Err(PyValueError::new_err(format!("unknown mode kind `{other}`"))),
    };
    let spec = ModeSpec {
        kind,
        waist,
        l,
        p,
        center,
        path,
    };
    wfh_core::make_mode(&grid.0, &spec).map(PyWaveField).map_err(py_err)
}

#[pyfunction]
fn fidelity(a: &PyWaveField, b: &PyWaveField) -> PyResult<f64> {
    wfh_core::fidelity(&a.0, &b.0).map_err(py_err)
}

/// Reconstructs `field` with the given scheme; `photons` enables shot noise.
#[pyfunction]
#[pyo3(signature = (field, scheme = "strong_scan", theta = FRAC_PI_2, photons = None, seed = 0))]
fn reconstruct(
    field: &PyWaveField,
    scheme: &str,
    theta: f64,
    photons: Option<u64>,
    seed: u64,
) -> PyResult<PyWeakValueMap> {
    rec::reconstruct(&field.0, parse_scheme(scheme)?, theta, noise(photons, seed))
        .map(PyWeakValueMap)
        .map_err(py_err)
}

#[pyfunction]
fn gauge_fix<'py>(py: Python<'py>, map: &PyWeakValueMap) -> PyResult<(PyWaveField, Bound<'py, PyAny>)> {
    let (field, info) = rec::gauge_fix(&map.0).map_err(py_err)?;
    Ok((PyWaveField(field), json_to_py(py, &info)?))
}

#[pyfunction]
fn product_identity_check<'py>(py: Python<'py>, field: &PyWaveField) -> PyResult<Bound<'py, PyAny>> {
    let stats = rec::product_identity_check(&field.0).map_err(py_err)?;
    json_to_py(py, &stats)
}

fn params(wavelength: f64, distance: f64, kernel: &str, padding: usize) -> PyResult<PropagationParams> {
    let kernel = match kernel {
        "exact_feynman" => Kernel::ExactFeynman,
        "angular_spectrum" => Kernel::AngularSpectrum,
        "paraxial_inverse" => Kernel::ParaxialInverse,
        other => return Err(PyValueError::new_err(format!("unknown kernel `{other}`"))),
    };
    let p = PropagationParams {
        wavelength,
        distance,
        kernel,
        padding,
    };
    p.validate().map_err(py_err)?;
    Ok(p)
}

#[pyfunction]
#[pyo3(signature = (field, wavelength, distance, kernel = "exact_feynman", padding = 2))]
fn propagate(
    field: &PyWaveField,
    wavelength: f64,
    distance: f64,
    kernel: &str,
    padding: usize,
) -> PyResult<PyWaveField> {
    holo::propagate(&field.0, &params(wavelength, distance, kernel, padding)?)
        .map(PyWaveField)
        .map_err(py_err)
}

/// Paraxial inverse transport, renormalized; returns the field and the applied scale.
#[pyfunction]
#[pyo3(signature = (field, wavelength, distance, padding = 2))]
fn propagate_inverse(
    field: &PyWaveField,
    wavelength: f64,
    distance: f64,
    padding: usize,
) -> PyResult<(PyWaveField, f64)> {
    let p = params(wavelength, distance, "exact_feynman", padding)?;
    let (f, scale) = holo::invert_normalized(&field.0, &p).map_err(py_err)?;
    Ok((PyWaveField(f), scale))
}

#[pyfunction]
fn classical_hologram<'py>(
    py: Python<'py>,
    object: &PyWaveField,
    reference: &PyWaveField,
) -> PyResult<Bound<'py, PyDict>> {
    let h = holo::classical_hologram(&object.0, &reference.0).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("intensity", h.intensity.clone())?;
    d.set_item("object_background", h.object_background.clone())?;
    d.set_item("reference_background", h.reference_background.clone())?;
    d.set_item("cross_term", h.cross_term.clone())?;
    d.set_item("conjugate_term", h.conjugate_term.clone())?;
    d.set_item("term_sum", h.term_sum())?;
    Ok(d)
}

/// Binary cat-silhouette amplitude mask as a flat list.
#[pyfunction]
#[pyo3(signature = (grid, scale = 0.5))]
fn cat_mask(grid: PyGrid, scale: f64) -> Vec<f64> {
    ObjectMask::cat_silhouette(grid.0, scale)
        .transmission()
        .iter()
        .map(|t| t.re)
        .collect()
}

/// Runs the imaging pipeline on the illumination field `mode`. `mask` is a
/// flat list of complex transmissions (or `None` for a transparent object).
/// Returns the report and the truth and reconstructed object-plane fields.
#[pyfunction]
#[pyo3(signature = (
    mode, mask = None, wavelength = 633e-9, distance = 0.1,
    scheme = "strong_scan", theta = FRAC_PI_2, photons = None, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn holography_pipeline<'py>(
    py: Python<'py>,
    mode: &PyWaveField,
    mask: Option<Vec<Complex64>>,
    wavelength: f64,
    distance: f64,
    scheme: &str,
    theta: f64,
    photons: Option<u64>,
    seed: u64,
) -> PyResult<(Bound<'py, PyAny>, PyWaveField, PyWaveField)> {
    let mask = match mask {
        Some(t) => ObjectMask::new(*mode.0.grid(), t).map_err(py_err)?,
        None => ObjectMask::transparent(*mode.0.grid()),
    };
    let out = holo::holography_pipeline_with_input(
        &mode.0,
        &mask,
        &params(wavelength, distance, "exact_feynman", 2)?,
        parse_scheme(scheme)?,
        theta,
        noise(photons, seed),
    )
    .map_err(py_err)?;
    Ok((
        json_to_py(py, &out.report)?,
        PyWaveField(out.truth),
        PyWaveField(out.reconstructed),
    ))
}

/// Runs the invariant suites; returns `(name, passed, detail)` tuples.
#[pyfunction]
fn run_validation() -> Vec<(String, bool, String)> {
    validate::run_all(validate::ValidateOptions::default())
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn wfh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyWaveField>()?;
    m.add_class::<PyWeakValueMap>()?;
    m.add_function(wrap_pyfunction!(make_mode, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(gauge_fix, m)?)?;
    m.add_function(wrap_pyfunction!(product_identity_check, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(classical_hologram, m)?)?;
    m.add_function(wrap_pyfunction!(cat_mask, m)?)?;
    m.add_function(wrap_pyfunction!(holography_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_validation, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
