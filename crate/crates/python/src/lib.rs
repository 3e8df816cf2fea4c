//! Python bindings: catalog and user maps, Pólya certificates, cone
//! generators, fold solving and the dynamics experiments.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::Value;

use simplexfold::cone::{self, ConeRep};
use simplexfold::dynamics::{
    classify_orbit, find_fixed_points, fixation_experiment, invariant_measure_test, CompiledMap, FixationOptions,
    FixedPointOptions, OrbitOptions,
};
use simplexfold::folding::{self, builtin_template, FoldTemplate, PreimageOptions, SolveOptions};
use simplexfold::maps::{membership_check, ExactMap, FloatMap, MembershipMode, SimplexMap};
use simplexfold::polynomial::{ExactPoly, MultiPoly};
use simplexfold::positivity::{self, DEFAULT_N_MAX};
use simplexfold::sampler::{deform_many, SamplerConfig};
use simplexfold::scalar::format_rational;
use simplexfold::simplex::SimplexPoint;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn to_py_ser<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(err)?)
}

fn default_vars(n: usize) -> Vec<String> {
    match n {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=n).map(|i| format!("x{i}")).collect(),
    }
}

fn parse_poly(src: &str, vars: &[String]) -> PyResult<ExactPoly> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    ExactPoly::parse(src, &names).map_err(err)
}

#[derive(Clone)]
enum Inner {
    Exact(ExactMap),
    Float(FloatMap),
}

macro_rules! on_map {
    ($inner:expr, $m:ident => $body:expr) => {
        match $inner {
            Inner::Exact($m) => $body,
            Inner::Float($m) => $body,
        }
    };
}

/// A polynomial self-map of the simplex, stored exactly when possible.
#[pyclass(name = "Map", module = "pysimplexfold", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMap {
    inner: Inner,
}

impl PyMap {
    fn float(&self) -> FloatMap {
        on_map!(&self.inner, m => m.to_float())
    }
}

#[pymethods]
impl PyMap {
    /// Map from the built-in catalog, e.g. `cheb:3` or `tri:f9`.
    #[staticmethod]
    fn catalog(name: &str) -> PyResult<Self> {
        Ok(PyMap { inner: Inner::Exact(folding::catalog(name).map_err(err)?) })
    }

    /// Exact map from polynomial strings. `n` defaults to `len(polys)`; pass
    /// `n + 1` barycentric components with `n` to have their sum checked.
    #[staticmethod]
    #[pyo3(signature = (polys, n=None, k=None, vars=None, label=""))]
    fn from_polys(polys: Vec<String>, n: Option<usize>, k: Option<u32>, vars: Option<Vec<String>>, label: &str) -> PyResult<Self> {
        let n = n.unwrap_or(polys.len());
        let vars = vars.unwrap_or_else(|| default_vars(n));
        let polys = polys.iter().map(|s| parse_poly(s, &vars)).collect::<PyResult<Vec<_>>>()?;
        let k = k.unwrap_or_else(|| polys.iter().map(MultiPoly::degree).max().unwrap_or(0));
        Ok(PyMap { inner: Inner::Exact(SimplexMap::new(n, k, polys, label).map_err(err)?) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: Value = serde_json::from_str(text).map_err(err)?;
        let inner = match ExactMap::from_json_value(&v) {
            Ok(m) => Inner::Exact(m),
            Err(_) => Inner::Float(FloatMap::from_json_value(&v).map_err(err)?),
        };
        Ok(PyMap { inner })
    }

    fn to_json(&self) -> String {
        on_map!(&self.inner, m => m.to_json_value().to_string())
    }

    #[getter]
    fn n(&self) -> usize {
        on_map!(&self.inner, m => m.n())
    }

    #[getter]
    fn k(&self) -> u32 {
        on_map!(&self.inner, m => m.k())
    }

    #[getter]
    fn label(&self) -> String {
        on_map!(&self.inner, m => m.label().to_string())
    }

    #[getter]
    fn exact(&self) -> bool {
        matches!(self.inner, Inner::Exact(_))
    }

    /// Components `P_1, …, P_n` as strings.
    fn polys(&self) -> Vec<String> {
        on_map!(&self.inner, m => m.polys().iter().map(ToString::to_string).collect())
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = SimplexPoint::new(x, 1e-9).map_err(err)?;
        on_map!(&self.inner, m => Ok(m.apply(&p).map_err(err)?.point.coords))
    }

    /// `self ∘ inner`.
    fn compose(&self, inner: &PyMap) -> PyResult<PyMap> {
        let inner = match (&self.inner, &inner.inner) {
            (Inner::Exact(f), Inner::Exact(g)) => Inner::Exact(f.compose(g).map_err(err)?),
            _ => Inner::Float(self.float().compose(&inner.float()).map_err(err)?),
        };
        Ok(PyMap { inner })
    }

    #[pyo3(signature = (tol=1e-10))]
    fn is_member(&self, tol: f64) -> PyResult<bool> {
        on_map!(&self.inner, m => Ok(membership_check(m, MembershipMode::sampled(tol)).map_err(err)?.member))
    }

    /// Fixed points with their Jacobian spectra and stability.
    #[pyo3(signature = (seed=0))]
    fn fixed_points<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let opts = FixedPointOptions { rng_seed: seed, ..FixedPointOptions::default() };
        let rep = py.detach(|| on_map!(&self.inner, m => find_fixed_points(m, &opts)));
        to_py_ser(py, &rep.points)
    }

    /// Distinct solutions of `f(x) = y` in the simplex.
    #[pyo3(signature = (y, seeds=500))]
    fn preimages(&self, py: Python<'_>, y: Vec<f64>, seeds: usize) -> Vec<Vec<f64>> {
        let opts = PreimageOptions { seeds, ..PreimageOptions::default() };
        py.detach(|| on_map!(&self.inner, m => folding::preimage_count(m, &y, &opts).preimages))
    }

    /// Converged, periodic or nonperiodic verdict for the orbit of `x0`.
    #[pyo3(signature = (x0, burn_in=1000, window=10000))]
    fn orbit<'py>(&self, py: Python<'py>, x0: Vec<f64>, burn_in: usize, window: usize) -> PyResult<Bound<'py, PyAny>> {
        let compiled = on_map!(&self.inner, m => CompiledMap::new(m));
        let opts = OrbitOptions { burn_in, window, ..OrbitOptions::default() };
        let v = classify_orbit(&compiled, &x0, &opts).map_err(err)?;
        to_py_ser(py, &v)
    }

    /// Fixation times from uniform starts in `(0, side)^n` with a lognormal fit.
    #[pyo3(signature = (count=10000, side=0.01, seed=0))]
    fn fixation<'py>(&self, py: Python<'py>, count: usize, side: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let opts = FixationOptions { count, side, master_seed: seed, ..FixationOptions::default() };
        let res = py.detach(|| on_map!(&self.inner, m => fixation_experiment(m, &opts)));
        to_py_ser(py, &res)
    }

    fn __repr__(&self) -> String {
        format!("Map({:?}, n={}, k={}, [{}])", self.label(), self.n(), self.k(), self.polys().join(", "))
    }
}

/// Scaled generators of the Pólya cone `C_{n,k,N}`.
#[pyclass(name = "Cone", module = "pysimplexfold", frozen)]
struct PyCone {
    inner: ConeRep,
}

#[pymethods]
impl PyCone {
    #[new]
    fn new(py: Python<'_>, n: usize, k: u32, level: u32) -> PyResult<Self> {
        let inner = py.detach(|| cone::build_cone(n, k, level)).map_err(err)?;
        Ok(PyCone { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn k(&self) -> u32 {
        self.inner.k
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.ineq.len()
    }

    #[getter]
    fn n_rays(&self) -> usize {
        self.inner.rays.len()
    }

    /// Primitive integer generators as polynomial strings.
    fn generators(&self) -> Vec<String> {
        self.inner.generators().iter().map(ToString::to_string).collect()
    }

    #[pyo3(signature = (poly, vars=None))]
    fn contains(&self, poly: &str, vars: Option<Vec<String>>) -> PyResult<bool> {
        let vars = vars.unwrap_or_else(|| default_vars(self.inner.n));
        Ok(self.inner.contains(&parse_poly(poly, &vars)?))
    }

    fn to_json(&self) -> String {
        self.inner.to_json_value().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.rays.len()
    }

    fn __repr__(&self) -> String {
        format!("Cone(n={}, k={}, N={}, rays={})", self.inner.n, self.inner.k, self.inner.level, self.inner.rays.len())
    }
}

/// Pólya certificate for `p > 0` on the simplex as a dict with a `verdict` key.
#[pyfunction]
#[pyo3(signature = (poly, vars=None, k=None, n_max=DEFAULT_N_MAX))]
fn polya_certify<'py>(py: Python<'py>, poly: &str, vars: Option<Vec<String>>, k: Option<u32>, n_max: u32) -> PyResult<Bound<'py, PyAny>> {
    let p = parse_poly(poly, &vars.unwrap_or_else(|| default_vars(2)))?;
    let k = k.unwrap_or_else(|| p.degree());
    let cert = py.detach(|| positivity::polya_certify(&p, k, n_max)).map_err(err)?;
    to_py_ser(py, &cert)
}

/// Solves a fold template given by built-in name or JSON text. Each solution
/// is a dict with `params`, `exact`, `residual_norm` and `map`.
#[pyfunction]
#[pyo3(signature = (template, seeds=200, radius=5.0))]
fn solve_fold<'py>(py: Python<'py>, template: &str, seeds: usize, radius: f64) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let tpl = if template.trim_start().starts_with('{') {
        FoldTemplate::from_json_value(&serde_json::from_str(template).map_err(err)?).map_err(err)?
    } else {
        builtin_template(template).map_err(err)?
    };
    let opts = SolveOptions { seeds, radius, ..SolveOptions::default() };
    let report = py.detach(|| folding::solve_fold(&tpl, &opts)).map_err(err)?;
    report
        .solutions
        .into_iter()
        .map(|s| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("params", s.params)?;
            d.set_item("exact", s.exact.map(|e| e.iter().map(format_rational).collect::<Vec<_>>()))?;
            d.set_item("residual_norm", s.residual_norm)?;
            let inner = s.exact_map.map_or(Inner::Float(s.map), Inner::Exact);
            d.set_item("map", PyMap { inner })?;
            Ok(d.into_any())
        })
        .collect()
}

/// `count` ε-deformations of `f` toward random interior maps from `cone`,
/// as `(map, t, distance)` triples.
#[pyfunction]
#[pyo3(signature = (f, cone, eps=0.05, count=100, seed=0, alpha=None))]
fn deform(py: Python<'_>, f: &PyMap, cone: &PyCone, eps: f64, count: usize, seed: u64, alpha: Option<f64>) -> PyResult<Vec<(PyMap, f64, f64)>> {
    let mut cfg = SamplerConfig::new(cone.inner.clone(), seed, eps).map_err(err)?;
    if let Some(a) = alpha {
        cfg.dirichlet_alpha = a;
        cfg.validate().map_err(err)?;
    }
    let f = f.float();
    py.detach(|| deform_many(&f, &cfg, count))
        .into_iter()
        .map(|d| d.map(|d| (PyMap { inner: Inner::Float(d.map) }, d.t, d.distance)).map_err(err))
        .collect()
}

/// Kolmogorov-Smirnov distance between orbit samples of `cheb:d` and the arcsine law.
#[pyfunction]
#[pyo3(signature = (d, samples=100000, seed=0))]
fn measure_test(py: Python<'_>, d: u32, samples: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    py.detach(|| invariant_measure_test(d, samples, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)))
}

#[pyfunction]
fn table_names() -> Vec<String> {
    folding::table_names()
}

#[pyfunction]
fn fold_order(name: &str) -> PyResult<usize> {
    folding::fold_order(name).map_err(err)
}

#[pymodule]
fn pysimplexfold(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMap>()?;
    m.add_class::<PyCone>()?;
    m.add_function(wrap_pyfunction!(polya_certify, m)?)?;
    m.add_function(wrap_pyfunction!(solve_fold, m)?)?;
    m.add_function(wrap_pyfunction!(deform, m)?)?;
    m.add_function(wrap_pyfunction!(measure_test, m)?)?;
    m.add_function(wrap_pyfunction!(table_names, m)?)?;
    m.add_function(wrap_pyfunction!(fold_order, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
