//! Polynomial self-maps of Δⁿ of bounded degree.
//!
//! A map is stored as its `n` defining polynomials in projected coordinates;
//! the last barycentric component `1 - Σ P_i` is implicit.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::polynomial::{MultiPoly, PolyError};
use crate::positivity::{nonneg_on_simplex, NonnegMode, NonnegVerdict, PositivityError};
use crate::scalar::{Rational, Scalar};
use crate::simplex::SimplexPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("expected {expected} defining polynomials, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("polynomial {index} has {got} variables, expected {expected}")]
    Vars { index: usize, expected: usize, got: usize },
    #[error("polynomial {index} has degree {degree} > {bound}")]
    Degree { index: usize, degree: u32, bound: u32 },
    #[error("the n+1 supplied polynomials do not sum to 1")]
    SumNotOne,
    #[error("maps have different shapes: ({0}, {1}) vs ({2}, {3})")]
    Shape(usize, u32, usize, u32),
    #[error("convex weight {0} outside [0, 1]")]
    Weight(f64),
    #[error("image {image:?} of {point:?} leaves the simplex beyond tolerance")]
    ImageOutside { point: Vec<f64>, image: Vec<f64> },
    #[error("matrix is not column-stochastic: {0}")]
    NotStochastic(String),
    #[error("malformed map json: {0}")]
    Json(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Positivity(#[from] PositivityError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexMap<C> {
    n: usize,
    k: u32,
    polys: Vec<MultiPoly<C>>,
    label: String,
}

pub type ExactMap = SimplexMap<Rational>;
pub type FloatMap = SimplexMap<f64>;

/// Result of [`SimplexMap::apply`].
#[derive(Clone, Debug, PartialEq)]
pub struct Applied {
    pub point: SimplexPoint,
    /// Whether the raw image had to be pulled back onto the simplex.
    pub clamped: bool,
}

impl<C: Scalar> SimplexMap<C> {
    /// Accepts either `n` polynomials, or `n + 1` that sum to one (the last is
    /// then dropped). Exact maps check the sum exactly; float maps to 1e-12
    /// per coefficient.
    pub fn new(n: usize, k: u32, mut polys: Vec<MultiPoly<C>>, label: impl Into<String>) -> Result<Self, MapError> {
        if polys.len() == n + 1 {
            let total = polys.iter().fold(MultiPoly::zero(n), |acc, p| &acc + p);
            let resid = &total - &MultiPoly::one(n);
            let ok = if C::EXACT { resid.is_zero() } else { resid.max_abs_coeff() <= 1e-12 };
            if !ok {
                return Err(MapError::SumNotOne);
            }
            polys.pop();
        }
        if polys.len() != n {
            return Err(MapError::Arity { expected: n, got: polys.len() });
        }
        for (index, p) in polys.iter().enumerate() {
            if p.num_vars() != n {
                return Err(MapError::Vars { index, expected: n, got: p.num_vars() });
            }
            if p.degree() > k {
                return Err(MapError::Degree { index, degree: p.degree(), bound: k });
            }
        }
        Ok(SimplexMap { n, k, polys, label: label.into() })
    }

    pub(crate) fn new_unchecked(n: usize, k: u32, polys: Vec<MultiPoly<C>>, label: impl Into<String>) -> Self {
        SimplexMap { n, k, polys, label: label.into() }
    }

    pub fn identity(n: usize) -> Self {
        let polys = (0..n).map(|i| MultiPoly::var(n, i)).collect();
        SimplexMap { n, k: 1, polys, label: "identity".into() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn polys(&self) -> &[MultiPoly<C>] {
        &self.polys
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Highest degree among the defining polynomials (may be below `k`).
    pub fn degree(&self) -> u32 {
        self.polys.iter().map(MultiPoly::degree).max().unwrap_or(0)
    }

    /// `1 - Σ P_i`.
    pub fn last_poly(&self) -> MultiPoly<C> {
        self.polys.iter().fold(MultiPoly::one(self.n), |acc, p| &acc - p)
    }

    /// All `n + 1` barycentric components.
    pub fn all_polys(&self) -> Vec<MultiPoly<C>> {
        let mut v = self.polys.clone();
        v.push(self.last_poly());
        v
    }

    pub fn to_float(&self) -> FloatMap {
        SimplexMap {
            n: self.n,
            k: self.k,
            polys: self.polys.iter().map(MultiPoly::to_float).collect(),
            label: self.label.clone(),
        }
    }

    /// `self ∘ inner`, of degree bound `k_self · k_inner`.
    pub fn compose(&self, inner: &SimplexMap<C>) -> Result<Self, MapError> {
        if self.n != inner.n {
            return Err(MapError::Shape(self.n, self.k, inner.n, inner.k));
        }
        let polys = self
            .polys
            .iter()
            .map(|p| p.compose(&inner.polys))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SimplexMap {
            n: self.n,
            k: self.k * inner.k,
            polys,
            label: format!("{}∘{}", self.label, inner.label),
        })
    }

    /// Image of `x`. Components in `(-tol, 0)` are zeroed and a coordinate
    /// sum in `(1, 1 + tol]` is renormalized; anything further out is an error.
    pub fn apply(&self, x: &SimplexPoint) -> Result<Applied, MapError> {
        if x.coords.len() != self.n {
            return Err(PolyError::DimensionMismatch { expected: self.n, got: x.coords.len() }.into());
        }
        let raw: Vec<f64> = self.polys.iter().map(|p| p.eval_f64(&x.coords)).collect();
        let (image, clamped) = clamp_into_simplex(&raw, x.tol).ok_or_else(|| MapError::ImageOutside {
            point: x.coords.clone(),
            image: raw.clone(),
        })?;
        Ok(Applied { point: SimplexPoint { coords: image, tol: x.tol }, clamped })
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::json!({
            "n": self.n,
            "k": self.k,
            "P": self.polys.iter().map(MultiPoly::to_json_value).collect::<Vec<_>>(),
            "label": self.label,
        })
    }

    pub fn from_json_value(v: &Value) -> Result<Self, MapError> {
        let n = v["n"].as_u64().ok_or_else(|| MapError::Json("missing n".into()))? as usize;
        let k = v["k"].as_u64().ok_or_else(|| MapError::Json("missing k".into()))? as u32;
        let polys = v["P"]
            .as_array()
            .ok_or_else(|| MapError::Json("missing P".into()))?
            .iter()
            .map(MultiPoly::from_json_value)
            .collect::<Result<Vec<_>, _>>()?;
        let label = v["label"].as_str().unwrap_or("").to_string();
        SimplexMap::new(n, k, polys, label)
    }
}

/// Clamping policy shared by [`SimplexMap::apply`] and the orbit iterators.
/// Returns `None` if `y` is outside Δⁿ by more than `tol`.
pub fn clamp_into_simplex(y: &[f64], tol: f64) -> Option<(Vec<f64>, bool)> {
    let mut out = y.to_vec();
    let mut clamped = false;
    for v in out.iter_mut() {
        if !v.is_finite() || *v < -tol {
            return None;
        }
        if *v < 0.0 {
            *v = 0.0;
            clamped = true;
        }
    }
    let s: f64 = out.iter().sum();
    if s > 1.0 + tol {
        return None;
    }
    if s > 1.0 {
        for v in out.iter_mut() {
            *v /= s;
        }
        clamped = true;
    }
    Some((out, clamped))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembershipMode {
    pub mode: NonnegMode,
    pub tol: f64,
}

impl MembershipMode {
    pub fn sampled(tol: f64) -> Self {
        MembershipMode { mode: NonnegMode::Sampled, tol }
    }
}

impl Default for MembershipMode {
    fn default() -> Self {
        MembershipMode::sampled(1e-10)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub member: bool,
    /// One verdict per barycentric component `P_1, …, P_n, 1 - ΣP_i`.
    pub components: Vec<NonnegVerdict>,
}

impl MembershipReport {
    pub fn witnesses(&self) -> Vec<(usize, Vec<f64>)> {
        self.components
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.witness.clone().map(|w| (i, w)))
            .collect()
    }
}

/// Checks `P_i >= 0` and `1 - Σ P_i >= 0` on Δⁿ.
pub fn membership_check<C: Scalar>(f: &SimplexMap<C>, mode: MembershipMode) -> Result<MembershipReport, MapError> {
    let components = f
        .all_polys()
        .iter()
        .map(|p| nonneg_on_simplex(p, mode.mode, mode.tol))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MembershipReport { member: components.iter().all(|v| v.nonneg), components })
}

/// `t·f + (1 - t)·g`, coefficient-wise.
pub fn convex_combine<C: Scalar>(f: &SimplexMap<C>, g: &SimplexMap<C>, t: &C) -> Result<SimplexMap<C>, MapError> {
    if t.to_f64() < 0.0 || t.to_f64() > 1.0 || !t.to_f64().is_finite() {
        return Err(MapError::Weight(t.to_f64()));
    }
    if f.n != g.n || f.k != g.k {
        return Err(MapError::Shape(f.n, f.k, g.n, g.k));
    }
    let s = C::one() - t.clone();
    let polys: Vec<MultiPoly<C>> = f
        .polys
        .iter()
        .zip(&g.polys)
        .map(|(p, q)| &p.scale(t) + &q.scale(&s))
        .collect();
    let out = SimplexMap { n: f.n, k: f.k, polys, label: format!("{}*{}+{}*{}", t, f.label, s, g.label) };
    debug_assert!(cheap_image_check(&out), "convex combination left the simplex");
    Ok(out)
}

/// Images of a coarse lattice stay in the simplex (loose tolerance).
fn cheap_image_check<C: Scalar>(f: &SimplexMap<C>) -> bool {
    let depth = if f.n <= 1 { 50 } else { 12 };
    crate::simplex::barycentric_lattice(f.n, depth).iter().all(|x| {
        let y: Vec<f64> = f.polys.iter().map(|p| p.eval_f64(x)).collect();
        crate::simplex::contains(&y, 1e-6)
    })
}

/// Column-stochastic `(n+1) × (n+1)` matrix; `entries[i][j]` is the weight
/// sent from type `j` to type `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovMatrix {
    entries: Vec<Vec<f64>>,
}

impl MarkovMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self, MapError> {
        let m = entries.len();
        if m == 0 || entries.iter().any(|r| r.len() != m) {
            return Err(MapError::NotStochastic("matrix must be square and non-empty".into()));
        }
        for j in 0..m {
            let col: f64 = (0..m).map(|i| entries[i][j]).sum();
            if (col - 1.0).abs() > 1e-12 {
                return Err(MapError::NotStochastic(format!("column {j} sums to {col}")));
            }
            if let Some(i) = (0..m).find(|&i| entries[i][j] < 0.0) {
                return Err(MapError::NotStochastic(format!("negative entry at ({i}, {j})")));
            }
        }
        Ok(MarkovMatrix { entries })
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Degree-one map on Δⁿ: `P_i(x) = M_{i,n+1} + Σ_j (M_ij - M_{i,n+1}) x_j`.
    pub fn to_map(&self) -> FloatMap {
        let n = self.size() - 1;
        let polys = (0..n)
            .map(|i| {
                let last = self.entries[i][n];
                let mut p = MultiPoly::constant(n, last);
                for j in 0..n {
                    p = p + MultiPoly::var(n, j).scale(&(self.entries[i][j] - last));
                }
                p
            })
            .collect();
        SimplexMap { n, k: 1, polys, label: "markov".into() }
    }

    /// `M x` for a barycentric vector `x` of length `n + 1`.
    pub fn apply_barycentric(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn determinant(&self) -> f64 {
        let m = self.size();
        nalgebra::DMatrix::from_fn(m, m, |i, j| self.entries[i][j]).determinant()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BijectivityVerdict {
    BijectivePermutation,
    /// A bijective stochastic matrix that is not a permutation; cannot
    /// happen for a correct classifier.
    LemmaViolation,
    /// Invertible as a linear map but the vertex images are not the vertex
    /// set, so the simplex is not mapped onto itself.
    NonsingularNotOnto,
    Singular,
}

/// Classifies a stochastic matrix as a self-map of the simplex. The simplex
/// maps onto itself iff the vertex images `M e_j` (the columns) are a
/// permutation of the vertices.
pub fn is_permutation_if_bijective(m: &MarkovMatrix, tol: f64) -> BijectivityVerdict {
    if m.determinant().abs() <= tol {
        return BijectivityVerdict::Singular;
    }
    let size = m.size();
    let vertex_of = |j: usize| -> Option<usize> {
        let col: Vec<f64> = (0..size).map(|i| m.entries[i][j]).collect();
        let hot = col.iter().position(|v| (v - 1.0).abs() <= tol)?;
        col.iter().enumerate().all(|(i, v)| i == hot || v.abs() <= tol).then_some(hot)
    };
    let images: Option<Vec<usize>> = (0..size).map(vertex_of).collect();
    match images {
        Some(mut imgs) => {
            imgs.sort_unstable();
            imgs.dedup();
            if imgs.len() == size {
                let is_perm = m.entries.iter().flatten().all(|v| v.abs() <= tol || (v - 1.0).abs() <= tol);
                if is_perm {
                    BijectivityVerdict::BijectivePermutation
                } else {
                    BijectivityVerdict::LemmaViolation
                }
            } else {
                BijectivityVerdict::NonsingularNotOnto
            }
        }
        None => BijectivityVerdict::NonsingularNotOnto,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::ExactPoly;
    use crate::scalar::rat;

    fn ex(s: &str, names: &[&str]) -> ExactPoly {
        ExactPoly::parse(s, names).unwrap()
    }

    fn logistic() -> ExactMap {
        SimplexMap::new(1, 2, vec![ex("4*x*(1-x)", &["x"])], "cheb:2").unwrap()
    }

    fn tri_f2() -> ExactMap {
        let names = ["x", "y"];
        SimplexMap::new(2, 2, vec![ex("(x-y)^2", &names), ex("(1-x-y)*(1+x+y)", &names), ex("4*x*y", &names)], "tri:f2").unwrap()
    }

    #[test]
    fn constructor_drops_last_component() {
        let f = tri_f2();
        assert_eq!(f.polys().len(), 2);
        assert_eq!(f.last_poly(), ex("4*x*y", &["x", "y"]));
        let names = ["x", "y"];
        let bad = SimplexMap::new(2, 2, vec![ex("x", &names), ex("y", &names), ex("x*y", &names)], "bad");
        assert_eq!(bad.unwrap_err(), MapError::SumNotOne);
        assert!(matches!(SimplexMap::new(1, 1, vec![ex("x^2", &["x"])], "d"), Err(MapError::Degree { .. })));
    }

    #[test]
    fn membership_examples() {
        assert!(membership_check(&logistic(), MembershipMode::default()).unwrap().member);
        let doubling = SimplexMap::new(1, 1, vec![ex("2*x", &["x"])], "2x").unwrap();
        let report = membership_check(&doubling, MembershipMode::default()).unwrap();
        assert!(!report.member);
        let w = report.witnesses();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].0, 1);
        assert!(w[0].1[0] > 0.5);
        assert!(membership_check(&ExactMap::identity(2), MembershipMode::default()).unwrap().member);
    }

    #[test]
    fn convex_combine_examples() {
        let f = tri_f2();
        let g = ExactMap::identity(2);
        let g = SimplexMap::new(2, 2, g.polys().to_vec(), "id").unwrap();
        assert_eq!(convex_combine(&f, &g, &rat(0, 1)).unwrap().polys(), g.polys());
        assert_eq!(convex_combine(&f, &g, &rat(1, 1)).unwrap().polys(), f.polys());
        let id1 = ExactMap::identity(1);
        let zero = SimplexMap::new(1, 1, vec![ExactPoly::zero(1)], "0").unwrap();
        let half = convex_combine(&id1, &zero, &rat(1, 2)).unwrap();
        assert_eq!(half.polys()[0], ex("x/2", &["x"]));
        let mix = convex_combine(&f, &g, &rat(3, 10)).unwrap();
        assert!(membership_check(&mix, MembershipMode::default()).unwrap().member);
        assert!(matches!(convex_combine(&f, &g, &rat(3, 2)), Err(MapError::Weight(_))));
        assert!(matches!(convex_combine(&f, &logistic(), &rat(1, 2)), Err(MapError::Shape(..))));
    }

    #[test]
    fn apply_examples() {
        let f = tri_f2();
        let y = f.apply(&SimplexPoint::new(vec![1.0, 0.0], 1e-9).unwrap()).unwrap();
        assert_eq!(y.point.coords, vec![1.0, 0.0]);
        let x = SimplexPoint::new(vec![0.2, 0.3], 1e-9).unwrap();
        assert_eq!(ExactMap::identity(2).apply(&x).unwrap().point.coords, vec![0.2, 0.3]);
        let y = logistic().apply(&SimplexPoint::new(vec![0.5], 1e-9).unwrap()).unwrap();
        assert_eq!(y.point.coords, vec![1.0]);
        let doubling = SimplexMap::new(1, 1, vec![ex("2*x", &["x"])], "2x").unwrap();
        assert!(matches!(
            doubling.apply(&SimplexPoint::new(vec![0.9], 1e-9).unwrap()),
            Err(MapError::ImageOutside { .. })
        ));
    }

    #[test]
    fn clamping_policy() {
        assert_eq!(clamp_into_simplex(&[-1e-12, 0.5], 1e-9), Some((vec![0.0, 0.5], true)));
        let (v, c) = clamp_into_simplex(&[0.5, 0.5 + 1e-10], 1e-9).unwrap();
        assert!(c && (v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(clamp_into_simplex(&[0.2, 0.3], 1e-9), Some((vec![0.2, 0.3], false)));
        assert!(clamp_into_simplex(&[-1e-3, 0.5], 1e-9).is_none());
    }

    #[test]
    fn json_roundtrip() {
        let f = tri_f2();
        let back = ExactMap::from_json_value(&f.to_json_value()).unwrap();
        assert_eq!(back, f);
        assert_eq!(f.to_json_value()["P"][0]["terms"][0]["coef"], "1/1");
    }

    #[test]
    fn compose_logistic() {
        let f = logistic();
        let ff = f.compose(&f).unwrap();
        assert_eq!(ff.polys()[0], ex("16*x*(1-x)*(1-2*x)^2", &["x"]));
        assert_eq!(ff.k(), 4);
    }

    #[test]
    fn markov_examples() {
        let id = MarkovMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(is_permutation_if_bijective(&id, 1e-12), BijectivityVerdict::BijectivePermutation);
        let avg = MarkovMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(is_permutation_if_bijective(&avg, 1e-12), BijectivityVerdict::Singular);
        let ds = MarkovMatrix::new(vec![
            vec![0.6, 0.3, 0.1],
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.1, 0.6],
        ])
        .unwrap();
        assert!(ds.determinant().abs() > 1e-3);
        assert_eq!(is_permutation_if_bijective(&ds, 1e-12), BijectivityVerdict::NonsingularNotOnto);
        assert!(MarkovMatrix::new(vec![vec![0.5, 0.5], vec![0.6, 0.5]]).is_err());
    }

    #[test]
    fn markov_map_matches_matrix_product() {
        let m = MarkovMatrix::new(vec![
            vec![0.2, 0.5, 0.1],
            vec![0.7, 0.25, 0.3],
            vec![0.1, 0.25, 0.6],
        ])
        .unwrap();
        let f = m.to_map();
        for x in crate::simplex::barycentric_lattice(2, 10) {
            let bary = vec![x[0], x[1], 1.0 - x[0] - x[1]];
            let mx = m.apply_barycentric(&bary);
            let y = f.apply(&SimplexPoint::new(x.clone(), 1e-9).unwrap()).unwrap().point.coords;
            assert!((y[0] - mx[0]).abs() < 1e-14 && (y[1] - mx[1]).abs() < 1e-14);
        }
    }
}
