#![allow(clippy::useless_conversion)] // pyo3 0.22 macro expansion trips this lint

//! Python bindings: radial bodies, perturbation families, field recovery,
//! symmetry certificates, and single-direction epsilon sweeps.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use tansec::body::{PerturbationFamily, PolyTerm, RadialBody, Speed};
use tansec::error::TansecError;
use tansec::estimator::{extract_limit, invert_series_limit, sweep, EpsilonGrid};
use tansec::flats::{hyperplane_flats_at, tangent_flats, SubspacePencil};
use tansec::geometry::{tangency_direction_grid, UnitVector};
use tansec::measures::{FunctionalDescriptor, FunctionalKind};
use tansec::recovery::{recover_field, symmetry_check, RecoveryMode, RecoveryReport};
use tansec::sample::{SampleParams, TangentContext};

fn err(e: TansecError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<RecoveryMode> {
    match mode {
        "sections" => Ok(RecoveryMode::Sections),
        "cap_volume" => Ok(RecoveryMode::CapVolume),
        "cap_intrinsic" => Ok(RecoveryMode::CapIntrinsic),
        other => Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    }
}

fn parse_functional(kind: &str, k: usize) -> PyResult<FunctionalDescriptor> {
    let kind = match kind {
        "intrinsic_volume" => FunctionalKind::IntrinsicVolume,
        "mean_width_power" => FunctionalKind::MeanWidthPower,
        "john_ellipsoid_volume" => FunctionalKind::JohnEllipsoidVolume,
        other => return Err(PyValueError::new_err(format!("unknown functional {other:?}"))),
    };
    Ok(FunctionalDescriptor { kind, k })
}

/// Convex body given by its radial function.
#[pyclass(name = "RadialBody")]
#[derive(Clone)]
struct PyRadialBody {
    inner: RadialBody,
}

#[pymethods]
impl PyRadialBody {
    #[staticmethod]
    #[pyo3(signature = (dim, radius = 1.0))]
    fn ball(dim: usize, radius: f64) -> PyResult<Self> {
        Ok(PyRadialBody { inner: RadialBody::ball(dim, radius).map_err(err)? })
    }

    #[staticmethod]
    fn ellipsoid(semiaxes: Vec<f64>) -> PyResult<Self> {
        Ok(PyRadialBody { inner: RadialBody::ellipsoid(&semiaxes).map_err(err)? })
    }

    /// rho(u) = r0 + sum coef * u[axis]^power, perturbative star body.
    #[staticmethod]
    fn smooth_star(dim: usize, r0: f64, terms: Vec<(f64, usize, u32)>) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(coef, axis, power)| PolyTerm { coef, axis, power })
            .collect();
        Ok(PyRadialBody { inner: RadialBody::smooth_star(dim, r0, terms).map_err(err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Radial function along a direction vector.
    fn radial(&self, direction: Vec<f64>) -> PyResult<f64> {
        let u = UnitVector::new(nalgebra::DVector::from_vec(direction)).map_err(err)?;
        Ok(self.inner.rho(u.as_vector()))
    }

    fn __repr__(&self) -> String {
        format!("RadialBody(dim={})", self.inner.dim())
    }
}

fn parse_speed(kind: &str, value: f64, terms: Vec<(f64, usize, u32)>) -> PyResult<Speed> {
    match kind {
        "constant" => Ok(Speed::Constant(value)),
        "radial_multiple" => Ok(Speed::RadialMultiple(value)),
        "poly" => Ok(Speed::Poly {
            c0: value,
            terms: terms
                .into_iter()
                .map(|(coef, axis, power)| PolyTerm { coef, axis, power })
                .collect(),
        }),
        other => Err(PyValueError::new_err(format!("unknown speed kind {other:?}"))),
    }
}

/// One-parameter outward perturbation family rho_t = rho + t h (+ t^2 r).
#[pyclass(name = "PerturbationFamily")]
#[derive(Clone)]
struct PyFamily {
    inner: PerturbationFamily,
}

#[pymethods]
impl PyFamily {
    #[new]
    #[pyo3(signature = (body, kind, value, terms = Vec::new()))]
    fn new(
        body: &PyRadialBody,
        kind: &str,
        value: f64,
        terms: Vec<(f64, usize, u32)>,
    ) -> PyResult<Self> {
        let speed = parse_speed(kind, value, terms)?;
        Ok(PyFamily {
            inner: PerturbationFamily::new(body.inner.clone(), speed).map_err(err)?,
        })
    }

    /// Radial function of the perturbed body at parameter t.
    fn radial_t(&self, direction: Vec<f64>, t: f64) -> PyResult<f64> {
        let u = UnitVector::new(nalgebra::DVector::from_vec(direction)).map_err(err)?;
        Ok(self.inner.rho_t(u.as_vector(), t))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.base().dim()
    }

    fn __repr__(&self) -> String {
        format!("PerturbationFamily(dim={})", self.inner.base().dim())
    }
}

/// Recovered field value at one tangency point.
#[pyclass(name = "FieldSample")]
struct PyFieldSample {
    #[pyo3(get)]
    flat_id: usize,
    #[pyo3(get)]
    direction: Vec<f64>,
    #[pyo3(get)]
    c_hat: f64,
    #[pyo3(get)]
    recovered: f64,
    #[pyo3(get)]
    c_true: f64,
    #[pyo3(get)]
    true_derivative: f64,
    #[pyo3(get)]
    limit_value: f64,
    #[pyo3(get)]
    limit_stderr: f64,
    #[pyo3(get)]
    residual: f64,
    #[pyo3(get)]
    excluded: bool,
}

/// Field-recovery result over a family of tangent flats.
#[pyclass(name = "RecoveryReport")]
struct PyRecoveryReport {
    inner: RecoveryReport,
}

#[pymethods]
impl PyRecoveryReport {
    #[getter]
    fn rms_relative_error(&self) -> f64 {
        self.inner.rms_relative_error
    }

    #[getter]
    fn max_relative_error(&self) -> f64 {
        self.inner.max_relative_error
    }

    #[getter]
    fn excluded_flats(&self) -> usize {
        self.inner.excluded_flats
    }

    #[getter]
    fn pass_(&self) -> bool {
        self.inner.pass
    }

    #[getter]
    fn samples(&self) -> Vec<PyFieldSample> {
        self.inner
            .samples
            .iter()
            .map(|s| PyFieldSample {
                flat_id: s.flat_id,
                direction: s.direction.clone(),
                c_hat: s.c_hat,
                recovered: s.recovered,
                c_true: s.c_true,
                true_derivative: s.true_derivative,
                limit_value: s.limit_value,
                limit_stderr: s.limit_stderr,
                residual: s.residual,
                excluded: s.excluded,
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "RecoveryReport(samples={}, rms={:.3e}, pass={})",
            self.inner.samples.len(),
            self.inner.rms_relative_error,
            self.inner.pass
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    family: &PyFamily,
    mode: &str,
    k: usize,
    l: usize,
    directions: usize,
    rotations: usize,
    functional: &str,
    rays: usize,
    seed: u64,
    eps_start: f64,
    eps_ratio: f64,
    eps_count: usize,
) -> PyResult<RecoveryReport> {
    let mode = parse_mode(mode)?;
    let d = family.inner.base().dim();
    let pencil = if l + 1 == d {
        SubspacePencil::full(d)
    } else {
        SubspacePencil::about_last_axes(d, l, rotations).map_err(err)?
    };
    let flats = tangent_flats(family.inner.base(), l, &pencil, directions).map_err(err)?;
    let f = parse_functional(functional, k)?;
    let grid = EpsilonGrid { start: eps_start, ratio: eps_ratio, count: eps_count };
    let params = SampleParams { rays, seed, ..Default::default() };
    recover_field(&family.inner, &flats, mode, &f, &grid, &params).map_err(err)
}

/// Recover the first-order perturbation field from section or cap limits.
#[pyfunction]
#[pyo3(signature = (family, mode, k, l, directions = 16, rotations = 8,
    functional = "intrinsic_volume", rays = 0, seed = 1,
    eps_start = 0.015625, eps_ratio = 0.5, eps_count = 9))]
#[allow(clippy::too_many_arguments)]
fn recover(
    family: &PyFamily,
    mode: &str,
    k: usize,
    l: usize,
    directions: usize,
    rotations: usize,
    functional: &str,
    rays: usize,
    seed: u64,
    eps_start: f64,
    eps_ratio: f64,
    eps_count: usize,
) -> PyResult<PyRecoveryReport> {
    Ok(PyRecoveryReport {
        inner: build_report(
            family, mode, k, l, directions, rotations, functional, rays, seed, eps_start,
            eps_ratio, eps_count,
        )?,
    })
}

/// Estimate the normal speed c(x) at a single tangency direction from an
/// epsilon sweep; returns (c_hat, limit, residual).
#[pyfunction]
#[pyo3(signature = (family, direction, mode, k,
    functional = "intrinsic_volume", rays = 0, seed = 1,
    eps_start = 0.015625, eps_ratio = 0.5, eps_count = 9))]
#[allow(clippy::too_many_arguments)]
fn estimate_speed(
    family: &PyFamily,
    direction: Vec<f64>,
    mode: &str,
    k: usize,
    functional: &str,
    rays: usize,
    seed: u64,
    eps_start: f64,
    eps_ratio: f64,
    eps_count: usize,
) -> PyResult<(f64, f64, f64)> {
    let mode = match parse_mode(mode)? {
        RecoveryMode::Sections => tansec::estimator::Mode::Section,
        _ => tansec::estimator::Mode::Cap,
    };
    let u = UnitVector::new(nalgebra::DVector::from_vec(direction)).map_err(err)?;
    let flats = hyperplane_flats_at(family.inner.base(), std::slice::from_ref(&u)).map_err(err)?;
    let flat = flats.into_iter().next().unwrap();
    let ctx = TangentContext::new(&family.inner, flat).map_err(err)?;
    let f = parse_functional(functional, k)?;
    let grid = EpsilonGrid { start: eps_start, ratio: eps_ratio, count: eps_count };
    let params = SampleParams { rays, seed, ..Default::default() };
    let series = sweep(&ctx, mode, &f, &grid, &params).map_err(err)?;
    let limit = extract_limit(&series).map_err(err)?;
    let c_hat = invert_series_limit(&series, &limit);
    Ok((c_hat, limit.value, limit.residual))
}

/// Symmetry certificate of the recovered field under an orthogonal map T
/// (row-major d x d matrix); returns a dict-like object.
#[pyclass(name = "SymmetryCertificate")]
struct PySymmetryCertificate {
    #[pyo3(get)]
    body_residual: f64,
    #[pyo3(get)]
    max_defect: f64,
    #[pyo3(get)]
    pass_: bool,
    #[pyo3(get)]
    evenness: bool,
}

#[pymethods]
impl PySymmetryCertificate {
    fn __repr__(&self) -> String {
        format!(
            "SymmetryCertificate(max_defect={:.3e}, pass={})",
            self.max_defect, self.pass_
        )
    }
}

/// Recover the field on a T-closed tangent-hyperplane grid and certify
/// whether it is T-invariant.
#[pyfunction]
#[pyo3(signature = (family, matrix, mode = "cap_volume", k = 0,
    functional = "intrinsic_volume", directions = 12, rays = 0, seed = 1,
    eps_start = 0.015625, eps_ratio = 0.5, eps_count = 9))]
#[allow(clippy::too_many_arguments)]
fn certify_symmetry(
    family: &PyFamily,
    matrix: Vec<Vec<f64>>,
    mode: &str,
    k: usize,
    functional: &str,
    directions: usize,
    rays: usize,
    seed: u64,
    eps_start: f64,
    eps_ratio: f64,
    eps_count: usize,
) -> PyResult<PySymmetryCertificate> {
    let d = family.inner.base().dim();
    if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("matrix must be {d}x{d}")));
    }
    let t = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
    let mode = parse_mode(mode)?;
    let k = if k == 0 {
        match mode {
            RecoveryMode::CapVolume => d,
            _ => d - 1,
        }
    } else {
        k
    };
    let f = parse_functional(functional, k)?;
    let base = tangency_direction_grid(d, directions, 23);
    let mut dirs: Vec<UnitVector> = base.clone();
    for u in &base {
        dirs.push(UnitVector::new(&t * u.as_vector()).map_err(err)?);
    }
    let flats = hyperplane_flats_at(family.inner.base(), &dirs).map_err(err)?;
    let grid = EpsilonGrid { start: eps_start, ratio: eps_ratio, count: eps_count };
    let params = SampleParams { rays, seed, ..Default::default() };
    let report =
        recover_field(&family.inner, &flats, mode, &f, &grid, &params).map_err(err)?;
    let cert = symmetry_check(&family.inner, &report, &t).map_err(err)?;
    Ok(PySymmetryCertificate {
        body_residual: cert.body_residual,
        max_defect: cert.max_defect,
        pass_: cert.pass,
        evenness: cert.evenness,
    })
}

#[pymodule]
fn tansec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRadialBody>()?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyFieldSample>()?;
    m.add_class::<PyRecoveryReport>()?;
    m.add_class::<PySymmetryCertificate>()?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_speed, m)?)?;
    m.add_function(wrap_pyfunction!(certify_symmetry, m)?)?;
    Ok(())
}
