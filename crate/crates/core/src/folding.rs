//! Folding maps: the Chebyshev and two-simplex catalog, parametrized
//! factorization templates `P_i = l_i q_i² m_i`, a coefficient-matching
//! solver for the defining equation `Σ P_i = 1`, and preimage counting.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::maps::{membership_check, ExactMap, FloatMap, MapError, MembershipMode, SimplexMap};
use crate::newton::{dedup_points, NewtonOptions, System};
use crate::polynomial::{ExactPoly, Exponent, FloatPoly, MultiPoly, PolyError};
use crate::positivity::{nonneg_on_simplex, NonnegMode};
use crate::scalar::{best_rational, Rational, Scalar};
use crate::simplex::{barycentric_lattice, contains, depth_for_size, quasi_uniform, sample_uniform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoldError {
    #[error("unknown catalog map {0:?}")]
    Unknown(String),
    #[error("malformed template: {0}")]
    Template(String),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("no seed converged (best residual {best_residual:e})")]
    NoSolution { best_residual: f64 },
    #[error("l_{component} does not divide P_{component}")]
    Remainder { component: usize },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

const XY: [&str; 2] = ["x", "y"];

fn parse_xy(src: &str) -> ExactPoly {
    ExactPoly::parse(src, &XY).expect("catalog polynomial parses")
}

/// `(1 - T_d(1 - 2x)) / 2`, with `T_d` from the three-term recurrence.
pub fn chebyshev(d: u32) -> ExactMap {
    let z = ExactPoly::one(1) - ExactPoly::var(1, 0).scale(&Rational::from_i64(2));
    let two_z = z.scale(&Rational::from_i64(2));
    let (mut prev, mut cur) = (ExactPoly::one(1), z);
    if d == 0 {
        cur = prev.clone();
    }
    for _ in 1..d {
        let next = &(&two_z * &cur) - &prev;
        prev = cur;
        cur = next;
    }
    let p = (ExactPoly::one(1) - cur).scale(&Rational::new(BigInt::one(), BigInt::from(2)));
    SimplexMap::new(1, d, vec![p], format!("cheb:{d}")).expect("Chebyshev folds map [0, 1] onto itself")
}

pub const TRIANGLE_FOLDS: [&str; 5] = ["tri:f1", "tri:f2", "tri:f4", "tri:f8", "tri:f9"];

fn triangle_components(name: &str) -> Option<(u32, [&'static str; 3])> {
    Some(match name {
        "tri:f1" => (1, ["x", "y", "1-x-y"]),
        "tri:f2" => (2, ["(x-y)^2", "(1-x-y)*(1+x+y)", "4*x*y"]),
        "tri:f4" => (4, ["(1-2*x^2-2*y^2)^2", "8*x*y*(1-2*x*y)", "4*(1-x-y)*(1+x+y)*(x-y)^2"]),
        "tri:f8" => (
            8,
            [
                "(1-4*x^2+4*x^4-8*x*y-4*y^2+24*x^2*y^2+4*y^4)^2",
                "8*(1-x-y)*(1+x+y)*(1-2*x^2+2*x^4+4*x*y-2*y^2-4*x^2*y^2+2*y^4)*(x-y)^2",
                "32*x*y*(1-2*x*y)*(1-2*x^2-2*y^2)^2",
            ],
        ),
        "tri:f9" => (
            9,
            [
                "x*(1-y)*(2-9*x+24*x^2-16*x^3+9*y-24*y^2+16*y^3)*(3-4*x)^2*(1-4*y)^2",
                "y*(1-x)*(2-9*y+24*y^2-16*y^3+9*x-24*x^2+16*x^3)*(3-4*y)^2*(1-4*x)^2",
                "(1-x-y)^2*(1-8*x+16*x^2-8*y-16*x*y+16*y^2)^2",
            ],
        ),
        _ => return None,
    })
}

/// Catalog lookup: `cheb:d` for `d >= 1`, or one of [`TRIANGLE_FOLDS`].
pub fn catalog(name: &str) -> Result<ExactMap, FoldError> {
    if let Some(d) = name.strip_prefix("cheb:") {
        return match d.parse::<u32>() {
            Ok(d) if d >= 1 => Ok(chebyshev(d)),
            _ => Err(FoldError::Unknown(name.into())),
        };
    }
    let (k, comps) = triangle_components(name).ok_or_else(|| FoldError::Unknown(name.into()))?;
    let polys = comps.iter().map(|s| parse_xy(s)).collect();
    Ok(SimplexMap::new(2, k, polys, name)?)
}

/// Number of interior preimages of a catalog fold.
pub fn fold_order(name: &str) -> Result<usize, FoldError> {
    if let Some(d) = name.strip_prefix("cheb:") {
        return d.parse().map_err(|_| FoldError::Unknown(name.into()));
    }
    triangle_components(name).map(|(k, _)| k as usize).ok_or_else(|| FoldError::Unknown(name.into()))
}

/// Names of the maps written by the `tables` command.
pub fn table_names() -> Vec<String> {
    (1..=6).map(|d| format!("cheb:{d}")).chain(TRIANGLE_FOLDS.iter().map(|s| s.to_string())).collect()
}

/// `l(x) = ∏_{j ∈ facets} x_j`, with `x_{n+1} = 1 - Σ x_i`; facets are 1-based.
pub fn facet_product(n: usize, facets: &[usize]) -> ExactPoly {
    facets.iter().fold(ExactPoly::one(n), |acc, &j| {
        let f = if j == n + 1 { ExactPoly::one(n) - ExactPoly::coordinate_sum(n) } else { ExactPoly::var(n, j - 1) };
        &acc * &f
    })
}

/// One claimed factorization `P_i = l_i q_i² m_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    pub facets: Vec<usize>,
    pub q: ExactPoly,
    pub m: ExactPoly,
}

impl Factors {
    pub fn l(&self, n: usize) -> ExactPoly {
        facet_product(n, &self.facets)
    }

    pub fn product(&self, n: usize) -> ExactPoly {
        &(&self.l(n) * &(&self.q * &self.q)) * &self.m
    }
}

/// Exact square root of a univariate polynomial, if it is a perfect square.
fn univariate_sqrt(p: &ExactPoly) -> Option<ExactPoly> {
    let d = p.degree();
    if d % 2 == 1 {
        return None;
    }
    let s = (d / 2) as usize;
    let c: Vec<Rational> = (0..=d).map(|i| p.coeff(&[i])).collect();
    let lead = &c[d as usize];
    if lead.is_negative() || lead.is_zero() {
        return None;
    }
    let (nr, dr) = (lead.numer().sqrt(), lead.denom().sqrt());
    if &nr * &nr != *lead.numer() || &dr * &dr != *lead.denom() {
        return None;
    }
    let mut r = vec![Rational::zero(); s + 1];
    r[s] = Rational::new(nr, dr);
    let two_top = &r[s] * Rational::from_i64(2);
    for j in (0..s).rev() {
        let mut acc = c[s + j].clone();
        for i in j + 1..s {
            let l = s + j - i;
            if l > j && l < s {
                acc -= &r[i] * &r[l];
            }
        }
        r[j] = acc / &two_top;
    }
    let root = MultiPoly::from_terms(1, r.into_iter().enumerate().map(|(i, v)| (vec![i as u32], v))).ok()?;
    (&root * &root == *p).then_some(root)
}

/// The factorization data of a catalog fold.
pub fn catalog_factors(name: &str) -> Result<Vec<Factors>, FoldError> {
    if name.starts_with("cheb:") {
        let f = catalog(name)?;
        let d = f.k();
        let facet_sets: [Vec<usize>; 2] = if d % 2 == 0 { [vec![1, 2], vec![]] } else { [vec![1], vec![2]] };
        return f
            .all_polys()
            .iter()
            .zip(facet_sets)
            .enumerate()
            .map(|(i, (p, facets))| {
                let cof = p.div_exact(&facet_product(1, &facets)).ok_or(FoldError::Remainder { component: i + 1 })?;
                let q = univariate_sqrt(&cof).ok_or(FoldError::Remainder { component: i + 1 })?;
                Ok(Factors { facets, q, m: ExactPoly::one(1) })
            })
            .collect();
    }
    let raw: [([usize; 2], &str, &str); 3] = match name {
        "tri:f1" => [([1, 0], "1", "1"), ([2, 0], "1", "1"), ([3, 0], "1", "1")],
        "tri:f2" => [([0, 0], "x-y", "1"), ([3, 0], "1", "1+x+y"), ([1, 2], "1", "4")],
        "tri:f4" => [([0, 0], "1-2*x^2-2*y^2", "1"), ([1, 2], "1", "8*(1-2*x*y)"), ([3, 0], "x-y", "4*(1+x+y)")],
        "tri:f8" => [
            ([0, 0], "1-4*x^2+4*x^4-8*x*y-4*y^2+24*x^2*y^2+4*y^4", "1"),
            ([3, 0], "x-y", "8*(1+x+y)*(1-2*x^2+2*x^4+4*x*y-2*y^2-4*x^2*y^2+2*y^4)"),
            ([1, 2], "1-2*x^2-2*y^2", "32*(1-2*x*y)"),
        ],
        "tri:f9" => [
            ([1, 0], "(3-4*x)*(1-4*y)", "(1-y)*(2-9*x+24*x^2-16*x^3+9*y-24*y^2+16*y^3)"),
            ([2, 0], "(3-4*y)*(1-4*x)", "(1-x)*(2-9*y+24*y^2-16*y^3+9*x-24*x^2+16*x^3)"),
            ([3, 0], "1-8*x+16*x^2-8*y-16*x*y+16*y^2", "1-x-y"),
        ],
        _ => return Err(FoldError::Unknown(name.into())),
    };
    Ok(raw
        .iter()
        .map(|(facets, q, m)| Factors {
            facets: facets.iter().copied().filter(|&j| j > 0).collect(),
            q: parse_xy(q),
            m: parse_xy(m),
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FactorizationReport {
    /// `l_i q_i² m_i` reproduces `P_i` exactly.
    pub products_match: Vec<bool>,
    /// `∏ l_i = (1 - Σ x_j) ∏ x_j`.
    pub boundary_product: bool,
    /// `m_i >= 0` on the simplex (sampled).
    pub m_nonneg: Vec<bool>,
    /// `deg l_i + 2 deg q_i + deg m_i <= k`.
    pub degree_budget: Vec<bool>,
    pub partition: Vec<(u32, u32)>,
    pub ok: bool,
}

/// Checks a claimed factorization of every component of `f`.
pub fn verify_factorization(f: &ExactMap, claims: &[Factors]) -> Result<FactorizationReport, FoldError> {
    let n = f.n();
    if claims.len() != n + 1 {
        return Err(FoldError::Template(format!("need {} factorizations, got {}", n + 1, claims.len())));
    }
    let polys = f.all_polys();
    let products_match: Vec<bool> = claims.iter().zip(&polys).map(|(c, p)| c.product(n) == *p).collect();
    let all: Vec<usize> = claims.iter().flat_map(|c| c.facets.iter().copied()).collect();
    let boundary = facet_product(n, &(1..=n + 1).collect::<Vec<_>>());
    let product = claims.iter().fold(ExactPoly::one(n), |acc, c| &acc * &c.l(n));
    let boundary_product = product == boundary && all.len() == n + 1;
    let m_nonneg = claims
        .iter()
        .map(|c| nonneg_on_simplex(&c.m, NonnegMode::Sampled, 1e-12).map(|v| v.nonneg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| FoldError::Template(e.to_string()))?;
    let partition: Vec<(u32, u32)> = claims.iter().map(|c| (c.q.degree(), c.m.degree())).collect();
    let degree_budget = claims
        .iter()
        .map(|c| c.facets.len() as u32 + 2 * c.q.degree() + c.m.degree() <= f.k())
        .collect::<Vec<_>>();
    let ok = products_match.iter().all(|&b| b) && boundary_product && m_nonneg.iter().all(|&b| b) && degree_budget.iter().all(|&b| b);
    Ok(FactorizationReport { products_match, boundary_product, m_nonneg, degree_budget, partition, ok })
}

/// Divides the facet factors `l_i` out of each component; returns the
/// cofactors `q_i² m_i`.
pub fn infer_cofactors(f: &ExactMap, facets: &[Vec<usize>]) -> Result<Vec<ExactPoly>, FoldError> {
    f.all_polys()
        .iter()
        .zip(facets)
        .enumerate()
        .map(|(i, (p, fs))| p.div_exact(&facet_product(f.n(), fs)).ok_or(FoldError::Remainder { component: i + 1 }))
        .collect()
}

/// A polynomial in `x` whose coefficients are affine expressions in the
/// template parameters. An empty term list means the constant 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoly {
    pub terms: Vec<(Exponent, ExactPoly)>,
}

impl ParamPoly {
    pub fn one() -> Self {
        ParamPoly { terms: Vec::new() }
    }

    /// Every coefficient of degree at most `degree` is its own new parameter;
    /// `fixed_constant` pins the constant term instead.
    fn generic(n: usize, degree: u32, fixed_constant: Option<Rational>, params: &mut Vec<String>, prefix: &str) -> Self {
        let basis = crate::polynomial::monomial_basis(n, degree);
        let mut terms = Vec::with_capacity(basis.len());
        for e in basis {
            if e.degree() == 0 {
                if let Some(c) = &fixed_constant {
                    terms.push((e, Coef::Fixed(c.clone())));
                    continue;
                }
            }
            params.push(format!("{prefix}_{}", e.0.iter().map(u32::to_string).collect::<Vec<_>>().join("")));
            terms.push((e, Coef::Param(params.len() - 1)));
        }
        ParamPoly { terms: terms.into_iter().map(|(e, c)| (e, c.into_poly())).collect() }
    }

    fn resize(&mut self, num_params: usize) {
        for (_, c) in self.terms.iter_mut() {
            *c = c.extend_vars(num_params - c.num_vars());
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.degree()).max().unwrap_or(0)
    }

    pub fn evaluate<C: Scalar>(&self, n: usize, params: &[C]) -> Result<MultiPoly<C>, PolyError> {
        if self.terms.is_empty() {
            return Ok(MultiPoly::one(n));
        }
        let mut p = MultiPoly::zero(n);
        for (e, c) in &self.terms {
            let v = c.map_coeffs(C::from_rational).evaluate(params)?;
            p.add_term(e.clone(), v);
        }
        Ok(p)
    }

    /// The polynomial in `n + p` variables (x first, then parameters).
    fn lift(&self, n: usize, p: usize) -> ExactPoly {
        if self.terms.is_empty() {
            return ExactPoly::one(n + p);
        }
        let mut out = ExactPoly::zero(n + p);
        for (e, c) in &self.terms {
            for (ce, cv) in c.terms() {
                let mut full = e.0.clone();
                full.extend_from_slice(ce.as_slice());
                out.add_term(Exponent(full), cv.clone());
            }
        }
        out
    }

    fn params_used(&self) -> BTreeSet<usize> {
        self.terms
            .iter()
            .flat_map(|(_, c)| c.terms().flat_map(|(e, _)| e.0.iter().enumerate().filter(|(_, &a)| a > 0).map(|(i, _)| i)).collect::<Vec<_>>())
            .collect()
    }

    /// Linear in the parameters with no constant part, so `q -> -q` is a
    /// parameter sign flip.
    fn is_linear_homogeneous(&self) -> bool {
        !self.terms.is_empty() && self.terms.iter().all(|(_, c)| c.terms().all(|(e, _)| e.degree() == 1))
    }

    fn to_json_value(&self, names: &[&str]) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(e, c)| json!({"exp": e.0, "coef": c.to_string_with(names)}))
                .collect(),
        )
    }

    fn from_json_value(v: &Value, n: usize, names: &[&str]) -> Result<Self, FoldError> {
        let bad = |m: &str| FoldError::Template(m.to_string());
        let Some(arr) = v.as_array() else { return Ok(ParamPoly::one()) };
        let mut terms = Vec::with_capacity(arr.len());
        for t in arr {
            let exp: Vec<u32> = t["exp"]
                .as_array()
                .ok_or_else(|| bad("term without exp"))?
                .iter()
                .map(|a| a.as_u64().map(|a| a as u32).ok_or_else(|| bad("bad exponent")))
                .collect::<Result<_, _>>()?;
            if exp.len() != n {
                return Err(bad("exponent length differs from n"));
            }
            let coef = match &t["coef"] {
                Value::String(s) => ExactPoly::parse(s, names)?,
                Value::Number(x) => ExactPoly::constant(names.len(), crate::scalar::parse_rational(&x.to_string()).map_err(FoldError::Template)?),
                _ => return Err(bad("coef must be a string expression")),
            };
            if coef.degree() > 1 {
                return Err(bad("coefficients must be affine in the parameters"));
            }
            terms.push((Exponent(exp), coef));
        }
        Ok(ParamPoly { terms })
    }
}

enum Coef {
    Fixed(Rational),
    Param(usize),
}

impl Coef {
    fn into_poly(self) -> ExactPoly {
        // sized to the final parameter count by ParamPoly::resize
        match self {
            Coef::Fixed(c) => ExactPoly::constant(0, c),
            Coef::Param(i) => ExactPoly::var(i + 1, i),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    /// 1-based facet indices whose product is `l_i`.
    pub facets: Vec<usize>,
    pub q: ParamPoly,
    pub m: ParamPoly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignConstraint {
    pub param: usize,
    pub sign: Sign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldTemplate {
    pub name: String,
    pub n: usize,
    pub k: u32,
    pub params: Vec<String>,
    pub components: Vec<Component>,
    pub sign_constraints: Vec<SignConstraint>,
    /// When set, solutions must be this many-to-one on the interior.
    pub fold_order: Option<usize>,
}

/// Which factor absorbs the overall scale of a component with both `q` and
/// `m` non-constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `m(0) = 1`.
    MConstant,
    /// `q(0) = 1`.
    QConstant,
}

impl FoldTemplate {
    /// Template with fully generic `q_i`, `m_i` for the given facet sets and
    /// degree partition `(a_i, b_i)`. Scale redundancy is removed by fixing
    /// `q_i = 1` when `a_i = 0`, `m_i = 1` when `b_i = 0 < a_i`, and the
    /// constant term chosen by `norm` otherwise.
    pub fn generic(
        name: &str,
        n: usize,
        k: u32,
        facets: Vec<Vec<usize>>,
        partition: &[(u32, u32)],
        norm: Normalization,
        fold_order: Option<usize>,
    ) -> Result<Self, FoldError> {
        let mut params = Vec::new();
        let mut components = Vec::new();
        for (i, (fs, &(a, b))) in facets.into_iter().zip(partition).enumerate() {
            let (q, m) = if a == 0 {
                (ParamPoly::one(), ParamPoly::generic(n, b, None, &mut params, &format!("m{}", i + 1)))
            } else if b == 0 {
                (ParamPoly::generic(n, a, None, &mut params, &format!("q{}", i + 1)), ParamPoly::one())
            } else {
                let one = Some(Rational::one());
                let (qf, mf) = match norm {
                    Normalization::MConstant => (None, one),
                    Normalization::QConstant => (one, None),
                };
                let q = ParamPoly::generic(n, a, qf, &mut params, &format!("q{}", i + 1));
                let m = ParamPoly::generic(n, b, mf, &mut params, &format!("m{}", i + 1));
                (q, m)
            };
            components.push(Component { facets: fs, q, m });
        }
        let mut t = FoldTemplate { name: name.into(), n, k, params, components, sign_constraints: Vec::new(), fold_order };
        t.finish()?;
        Ok(t)
    }

    fn finish(&mut self) -> Result<(), FoldError> {
        let p = self.params.len();
        for c in self.components.iter_mut() {
            c.q.resize(p);
            c.m.resize(p);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), FoldError> {
        let bad = |m: String| Err(FoldError::Template(m));
        if self.components.len() != self.n + 1 {
            return bad(format!("need {} components, got {}", self.n + 1, self.components.len()));
        }
        let mut seen: Vec<usize> = self.components.iter().flat_map(|c| c.facets.iter().copied()).collect();
        seen.sort_unstable();
        if seen != (1..=self.n + 1).collect::<Vec<_>>() {
            return bad(format!("facets {seen:?} are not a partition of 1..={}", self.n + 1));
        }
        for (i, c) in self.components.iter().enumerate() {
            let used = c.facets.len() as u32 + 2 * c.q.degree() + c.m.degree();
            if used > self.k {
                return bad(format!("component {} needs degree {used} > {}", i + 1, self.k));
            }
            for (e, coef) in c.q.terms.iter().chain(&c.m.terms) {
                if e.len() != self.n || coef.num_vars() != self.params.len() || coef.degree() > 1 {
                    return bad(format!("component {} has a malformed coefficient", i + 1));
                }
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> Vec<(u32, u32)> {
        self.components.iter().map(|c| (c.q.degree(), c.m.degree())).collect()
    }

    /// Reads parameter values off explicit factors, for templates whose
    /// coefficients are single parameters or constants. `None` if the
    /// factors do not fit the template.
    pub fn params_from_factors(&self, claims: &[Factors]) -> Option<Vec<Rational>> {
        let p = self.params.len();
        let mut out: Vec<Option<Rational>> = vec![None; p];
        for (c, f) in self.components.iter().zip(claims) {
            if c.facets != f.facets {
                return None;
            }
            for (tmpl, actual) in [(&c.q, &f.q), (&c.m, &f.m)] {
                let covered: BTreeSet<&Exponent> = tmpl.terms.iter().map(|(e, _)| e).collect();
                if tmpl.terms.is_empty() {
                    if *actual != ExactPoly::one(self.n) {
                        return None;
                    }
                    continue;
                }
                if actual.terms().any(|(e, _)| !covered.contains(e)) {
                    return None;
                }
                for (e, coef) in &tmpl.terms {
                    let v = actual.coeff(e.as_slice());
                    match coef.terms().collect::<Vec<_>>().as_slice() {
                        [(pe, unit)] if pe.degree() == 1 && (unit.is_one() || (-*unit).is_one()) => {
                            let j = pe.as_slice().iter().position(|&a| a == 1)?;
                            let v = if unit.is_one() { v.clone() } else { -v.clone() };
                            if out[j].as_ref().is_some_and(|w| *w != v) {
                                return None;
                            }
                            out[j] = Some(v);
                        }
                        _ if coef.degree() == 0 => {
                            if coef.coeff(&vec![0; p]) != v {
                                return None;
                            }
                        }
                        _ => return None,
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    fn check_len(&self, len: usize) -> Result<(), FoldError> {
        if len != self.params.len() {
            return Err(FoldError::ParamCount { expected: self.params.len(), got: len });
        }
        Ok(())
    }

    /// The components `l_i q_i² m_i` at the given parameters.
    pub fn components_at<C: Scalar>(&self, params: &[C]) -> Result<Vec<MultiPoly<C>>, FoldError> {
        self.check_len(params.len())?;
        self.components
            .iter()
            .map(|c| {
                let l = facet_product(self.n, &c.facets).map_coeffs(C::from_rational);
                let q = c.q.evaluate(self.n, params)?;
                let m = c.m.evaluate(self.n, params)?;
                Ok(&(&l * &(&q * &q)) * &m)
            })
            .collect()
    }

    /// `1 - Σ_i l_i q_i² m_i`.
    pub fn residual<C: Scalar>(&self, params: &[C]) -> Result<MultiPoly<C>, FoldError> {
        Ok(self.components_at(params)?.iter().fold(MultiPoly::one(self.n), |acc, p| &acc - p))
    }

    /// Coefficients of the residual as polynomials in the parameters.
    pub fn equations(&self) -> Vec<ExactPoly> {
        let (n, p) = (self.n, self.params.len());
        let mut total = ExactPoly::one(n + p);
        for c in &self.components {
            let l = facet_product(n, &c.facets).extend_vars(p);
            let q = c.q.lift(n, p);
            let m = c.m.lift(n, p);
            total = total - &(&l * &(&q * &q)) * &m;
        }
        let mut eqs: BTreeMap<Vec<u32>, ExactPoly> = BTreeMap::new();
        for (e, c) in total.terms() {
            let (xe, pe) = e.as_slice().split_at(n);
            eqs.entry(xe.to_vec()).or_insert_with(|| ExactPoly::zero(p)).add_term(Exponent(pe.to_vec()), c.clone());
        }
        eqs.into_values().filter(|q| !q.is_zero()).collect()
    }

    fn assemble_float(&self, params: &[f64]) -> Result<FloatMap, FoldError> {
        let comps = self.components_at(params)?;
        Ok(SimplexMap::new_unchecked(self.n, self.k, comps[..self.n].to_vec(), self.name.clone()))
    }

    fn assemble_exact(&self, params: &[Rational]) -> Result<ExactMap, FoldError> {
        let comps = self.components_at(params)?;
        Ok(SimplexMap::new(self.n, self.k, comps, self.name.clone())?)
    }

    fn sign_ok(&self, params: &[f64]) -> bool {
        self.sign_constraints.iter().all(|c| match c.sign {
            Sign::Positive => params[c.param] > 1e-9,
            Sign::Negative => params[c.param] < -1e-9,
        })
    }

    /// Components whose `q` can be negated by flipping its own parameters.
    fn flippable(&self) -> Vec<(usize, Vec<usize>)> {
        let usage: Vec<(BTreeSet<usize>, BTreeSet<usize>)> =
            self.components.iter().map(|c| (c.q.params_used(), c.m.params_used())).collect();
        (0..self.components.len())
            .filter_map(|i| {
                let c = &self.components[i];
                if !c.q.is_linear_homogeneous() {
                    return None;
                }
                let own = &usage[i].0;
                let shared = usage.iter().enumerate().any(|(j, (q, m))| !m.is_disjoint(own) || (j != i && !q.is_disjoint(own)));
                (!shared).then(|| (i, own.iter().copied().collect()))
            })
            .collect()
    }

    /// Flips `q_i -> -q_i` so the lowest-order nonzero coefficient is positive.
    fn canonicalize(&self, params: &mut [f64]) {
        for (i, own) in self.flippable() {
            let q = self.components[i].q.evaluate(self.n, params).expect("length checked");
            let lowest = q.terms().map(|(_, c)| *c).find(|c| c.abs() > 1e-8);
            if let Some(c) = lowest {
                if c < 0.0 {
                    for &j in &own {
                        params[j] = -params[j];
                    }
                }
            }
        }
    }

    /// `q_i` attains its template degree.
    fn degrees_exact(&self, params: &[f64]) -> bool {
        self.components.iter().all(|c| {
            let a = c.q.degree();
            let q = c.q.evaluate(self.n, params).expect("length checked");
            a == 0 || q.terms().any(|(e, v)| e.degree() == a && v.abs() > 1e-6)
        })
    }

    pub fn to_json_value(&self) -> Value {
        let names: Vec<&str> = self.params.iter().map(String::as_str).collect();
        json!({
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "params": self.params,
            "components": self.components.iter().map(|c| json!({
                "facets": c.facets,
                "q": c.q.to_json_value(&names),
                "m": c.m.to_json_value(&names),
            })).collect::<Vec<_>>(),
            "sign_constraints": self.sign_constraints.iter().map(|c| format!(
                "{}{}0", self.params[c.param], if c.sign == Sign::Positive { ">" } else { "<" }
            )).collect::<Vec<_>>(),
            "fold_order": self.fold_order,
        })
    }

    pub fn from_json_value(v: &Value) -> Result<Self, FoldError> {
        let bad = |m: &str| FoldError::Template(m.to_string());
        let n = v["n"].as_u64().ok_or_else(|| bad("missing n"))? as usize;
        let k = v["k"].as_u64().ok_or_else(|| bad("missing k"))? as u32;
        let params: Vec<String> = v["params"]
            .as_array()
            .ok_or_else(|| bad("missing params"))?
            .iter()
            .map(|s| s.as_str().map(String::from).ok_or_else(|| bad("parameter names must be strings")))
            .collect::<Result<_, _>>()?;
        let names: Vec<&str> = params.iter().map(String::as_str).collect();
        let components = v["components"]
            .as_array()
            .ok_or_else(|| bad("missing components"))?
            .iter()
            .map(|c| {
                let facets = c["facets"]
                    .as_array()
                    .ok_or_else(|| bad("component without facets"))?
                    .iter()
                    .map(|f| f.as_u64().map(|f| f as usize).ok_or_else(|| bad("bad facet index")))
                    .collect::<Result<_, _>>()?;
                Ok(Component {
                    facets,
                    q: ParamPoly::from_json_value(&c["q"], n, &names)?,
                    m: ParamPoly::from_json_value(&c["m"], n, &names)?,
                })
            })
            .collect::<Result<_, FoldError>>()?;
        let sign_constraints = v["sign_constraints"]
            .as_array()
            .map(|a| a.iter().map(|s| parse_sign(s.as_str().unwrap_or(""), &params)).collect::<Result<_, _>>())
            .transpose()?
            .unwrap_or_default();
        let fold_order = v["fold_order"].as_u64().map(|d| d as usize);
        let name = v["name"].as_str().unwrap_or("template").to_string();
        let t = FoldTemplate { name, n, k, params, components, sign_constraints, fold_order };
        t.validate()?;
        Ok(t)
    }
}

fn parse_sign(s: &str, params: &[String]) -> Result<SignConstraint, FoldError> {
    let (name, sign) = if let Some(p) = s.strip_suffix(">0") {
        (p, Sign::Positive)
    } else if let Some(p) = s.strip_suffix("<0") {
        (p, Sign::Negative)
    } else {
        return Err(FoldError::Template(format!("bad sign constraint {s:?}")));
    };
    let name = name.trim();
    let param = params
        .iter()
        .position(|p| p == name)
        .ok_or_else(|| FoldError::Template(format!("sign constraint on unknown parameter {name:?}")))?;
    Ok(SignConstraint { param, sign })
}

/// Interval templates for the `d`-fold: for even `d`, `P_1 = x(1-x) q_1²` and
/// `P_2 = q_2²`; for odd `d`, `P_1 = x q_1²` and `P_2 = (1-x) q_2²`.
/// For `d = 2` this is `P_1 = A x(1-x)`, `P_2 = (B + Cx)²`.
pub fn interval_template(d: u32) -> FoldTemplate {
    if d == 2 {
        let src = json!({
            "name": "interval:2", "n": 1, "k": 2, "params": ["A", "B", "C"],
            "components": [
                {"facets": [1, 2], "q": [], "m": [{"exp": [0], "coef": "A"}]},
                {"facets": [], "q": [{"exp": [0], "coef": "B"}, {"exp": [1], "coef": "C"}], "m": []},
            ],
            "sign_constraints": ["A>0"],
            "fold_order": 2,
        });
        return FoldTemplate::from_json_value(&src).expect("built-in template is well formed");
    }
    let (facets, partition) = if d % 2 == 0 {
        (vec![vec![1, 2], vec![]], [((d - 2) / 2, 0), (d / 2, 0)])
    } else {
        (vec![vec![1], vec![2]], [((d - 1) / 2, 0), ((d - 1) / 2, 0)])
    };
    FoldTemplate::generic(&format!("interval:{d}"), 1, d, facets, &partition, Normalization::MConstant, Some(d as usize))
        .expect("interval partitions fit the degree budget")
}

/// The degree-two two-fold of the triangle:
/// `(A(y - Bx)², (1-x-y)(C + Dx + Ey), Fxy)` with `A, B, F > 0`.
pub fn triangle_two_fold_template() -> FoldTemplate {
    let src = json!({
        "name": "triangle:2", "n": 2, "k": 2, "params": ["A", "B", "C", "D", "E", "F"],
        "components": [
            {"facets": [], "q": [{"exp": [1, 0], "coef": "-B"}, {"exp": [0, 1], "coef": "1"}], "m": [{"exp": [0, 0], "coef": "A"}]},
            {"facets": [3], "q": [], "m": [{"exp": [0, 0], "coef": "C"}, {"exp": [1, 0], "coef": "D"}, {"exp": [0, 1], "coef": "E"}]},
            {"facets": [1, 2], "q": [], "m": [{"exp": [0, 0], "coef": "F"}]},
        ],
        "sign_constraints": ["A>0", "B>0", "F>0"],
        "fold_order": 2,
    });
    FoldTemplate::from_json_value(&src).expect("built-in template is well formed")
}

/// Built-in templates by name: `interval:d`, `tri:two-fold`, `tri:nine-fold`.
pub fn builtin_template(name: &str) -> Result<FoldTemplate, FoldError> {
    if let Some(d) = name.strip_prefix("interval:") {
        return match d.parse::<u32>() {
            Ok(d) if d > 0 => Ok(interval_template(d)),
            _ => Err(FoldError::Unknown(name.to_string())),
        };
    }
    match name {
        "tri:two-fold" => Ok(triangle_two_fold_template()),
        "tri:nine-fold" => Ok(triangle_nine_fold_template()),
        _ => Err(FoldError::Unknown(name.to_string())),
    }
}

/// The nine-fold of the triangle with degree partition `(2,4)` on every
/// component, `q_i(0) = 1`.
pub fn triangle_nine_fold_template() -> FoldTemplate {
    FoldTemplate::generic(
        "triangle:9",
        2,
        9,
        vec![vec![1], vec![2], vec![3]],
        &[(2, 4), (2, 4), (2, 4)],
        Normalization::QConstant,
        Some(9),
    )
    .expect("partition fits degree nine")
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Quasi-random starting points in `[-radius, radius]^p`.
    pub seeds: usize,
    pub radius: f64,
    pub extra_seeds: Vec<Vec<f64>>,
    pub max_iters: usize,
    /// A seed converges when every equation is below this in absolute value.
    pub accept: f64,
    pub dedup_tol: f64,
    pub max_denominator: u64,
    pub membership: MembershipMode,
    /// Further multistart rounds, each with a 4x wider box, run only while
    /// no solution has survived the filters.
    pub widen_rounds: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            seeds: 200,
            radius: 5.0,
            extra_seeds: Vec::new(),
            max_iters: 200,
            accept: 1e-10,
            dedup_tol: 1e-8,
            max_denominator: 1_000_000,
            membership: MembershipMode::default(),
            widen_rounds: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FoldSolution {
    pub params: Vec<f64>,
    /// Rational parameters that zero the residual exactly, when found.
    pub exact: Option<Vec<Rational>>,
    pub residual_norm: f64,
    pub map: FloatMap,
    pub exact_map: Option<ExactMap>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveStats {
    pub seeds: usize,
    pub converged: usize,
    pub distinct: usize,
    pub rejected_sign: usize,
    pub rejected_degree: usize,
    pub rejected_membership: usize,
    pub rejected_order: usize,
    pub best_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solutions: Vec<FoldSolution>,
    pub stats: SolveStats,
}

struct ParamSystem {
    eqs: Vec<FloatPoly>,
    jac: Vec<Vec<FloatPoly>>,
}

impl ParamSystem {
    fn new(eqs: &[ExactPoly], p: usize) -> Self {
        let eqs: Vec<FloatPoly> = eqs.iter().map(MultiPoly::to_float).collect();
        let jac = eqs.iter().map(|e| (0..p).map(|j| e.derivative(j)).collect()).collect();
        ParamSystem { eqs, jac }
    }

    fn residual(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.eqs.len(), self.eqs.iter().map(|e| e.eval_f64(x)))
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.eqs.len(), x.len(), |i, j| self.jac[i][j].eval_f64(x))
    }

    /// Levenberg–Marquardt followed by a few Gauss–Newton polishing steps.
    fn solve(&self, x0: &[f64], max_iters: usize) -> (Vec<f64>, f64) {
        let p = x0.len();
        let mut x = DVector::from_column_slice(x0);
        let mut r = self.residual(x.as_slice());
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..max_iters {
            if r.amax() < 1e-15 || !cost.is_finite() {
                break;
            }
            let j = self.jacobian(x.as_slice());
            let jt = j.transpose();
            let a = &jt * &j;
            let g = &jt * &r;
            let mut improved = false;
            while lambda < 1e16 {
                let mut damped = a.clone();
                for i in 0..p {
                    damped[(i, i)] += lambda * (a[(i, i)] + 1e-9);
                }
                let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial = &x + &step;
                let tr = self.residual(trial.as_slice());
                let tc = tr.norm_squared();
                if tc.is_finite() && tc < cost {
                    x = trial;
                    r = tr;
                    cost = tc;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved || x.amax() > 1e8 {
                break;
            }
        }
        for _ in 0..5 {
            let j = self.jacobian(x.as_slice());
            let Ok(step) = j.svd(true, true).solve(&(-&r), 1e-14) else { break };
            let trial = &x + &step;
            let tr = self.residual(trial.as_slice());
            if tr.amax() < r.amax() {
                x = trial;
                r = tr;
            } else {
                break;
            }
        }
        let norm = r.amax();
        (x.as_slice().to_vec(), if norm.is_finite() { norm } else { f64::INFINITY })
    }
}

/// Halton points in `[-radius, radius]^dim`.
fn halton(count: usize, dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut primes = Vec::with_capacity(dim);
    let mut c = 2u64;
    while primes.len() < dim {
        if primes.iter().all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    (1..=count as u64)
        .map(|i| {
            primes
                .iter()
                .map(|&b| {
                    let (mut f, mut r, mut k) = (1.0, 0.0, i);
                    while k > 0 {
                        f /= b as f64;
                        r += f * (k % b) as f64;
                        k /= b;
                    }
                    radius * (2.0 * r - 1.0)
                })
                .collect()
        })
        .collect()
}

/// Solves the defining equation of `template` by multistart root finding on
/// its coefficient system, then filters, deduplicates and rationalizes.
pub fn solve_fold(template: &FoldTemplate, opts: &SolveOptions) -> Result<SolveReport, FoldError> {
    template.validate()?;
    for s in &opts.extra_seeds {
        template.check_len(s.len())?;
    }
    let p = template.params.len();
    let exact_eqs = template.equations();
    let system = ParamSystem::new(&exact_eqs, p);
    let mut stats = SolveStats { best_residual: f64::INFINITY, ..Default::default() };
    let mut solutions = Vec::new();
    for round in 0..=opts.widen_rounds {
        let mut seeds = if round == 0 { opts.extra_seeds.clone() } else { Vec::new() };
        seeds.extend(halton(opts.seeds, p, opts.radius * 4f64.powi(round as i32)));
        solutions = solve_round(template, opts, &system, &exact_eqs, &seeds, &mut stats)?;
        if !solutions.is_empty() {
            break;
        }
    }
    if stats.converged == 0 {
        return Err(FoldError::NoSolution { best_residual: stats.best_residual });
    }
    Ok(SolveReport { solutions, stats })
}

fn solve_round(
    template: &FoldTemplate,
    opts: &SolveOptions,
    system: &ParamSystem,
    exact_eqs: &[ExactPoly],
    seeds: &[Vec<f64>],
    stats: &mut SolveStats,
) -> Result<Vec<FoldSolution>, FoldError> {
    let runs: Vec<(Vec<f64>, f64)> = seeds.par_iter().map(|s| system.solve(s, opts.max_iters)).collect();
    stats.seeds += seeds.len();
    let mut converged = Vec::new();
    for (mut x, res) in runs {
        stats.best_residual = stats.best_residual.min(res);
        if res < opts.accept {
            template.canonicalize(&mut x);
            converged.push(x);
        }
    }
    stats.converged += converged.len();
    let distinct = dedup_points(converged, opts.dedup_tol);
    stats.distinct += distinct.len();
    let mut solutions = Vec::new();
    for x in distinct {
        if !template.sign_ok(&x) {
            stats.rejected_sign += 1;
            continue;
        }
        if !template.degrees_exact(&x) {
            stats.rejected_degree += 1;
            continue;
        }
        let exact: Option<Vec<Rational>> = x
            .iter()
            .map(|&v| best_rational(v, opts.max_denominator))
            .collect::<Option<Vec<_>>>()
            .filter(|q| exact_eqs.iter().all(|e| e.evaluate(q).map(|v| v.is_zero()).unwrap_or(false)));
        let (params, residual_norm) = match &exact {
            Some(q) => (q.iter().map(Scalar::to_f64).collect::<Vec<_>>(), 0.0),
            None => (x.clone(), system.residual(&x).amax()),
        };
        let map = template.assemble_float(&params)?;
        let exact_map = exact.as_ref().map(|q| template.assemble_exact(q)).transpose()?;
        let member = match &exact_map {
            Some(m) => membership_check(m, opts.membership)?.member,
            None => membership_check(&map, opts.membership)?.member,
        };
        if !member {
            stats.rejected_membership += 1;
            continue;
        }
        if let Some(d) = template.fold_order {
            if !has_fold_order(&map, d) {
                stats.rejected_order += 1;
                continue;
            }
        }
        solutions.push(FoldSolution { params, exact, residual_norm, map, exact_map });
    }
    Ok(solutions)
}

/// Preimage counts at a few fixed interior targets all equal `d`.
fn has_fold_order(f: &FloatMap, d: usize) -> bool {
    let targets = quasi_uniform(f.n(), 64)
        .into_iter()
        .filter(|y| contains(y, 0.0) && y.iter().all(|&v| v > 0.05) && y.iter().sum::<f64>() < 0.95)
        .take(3);
    let opts = PreimageOptions::default();
    targets.into_iter().all(|y| preimage_count(f, &y, &opts).count == d)
}

#[derive(Clone, Debug)]
pub struct PreimageOptions {
    pub seeds: usize,
    pub rng_seed: u64,
    pub dedup_tol: f64,
    pub residual: f64,
    pub outside_tol: f64,
}

impl Default for PreimageOptions {
    /// The merge radius is loose enough for double roots at critical values,
    /// where a residual of 1e-12 only pins `x` to about 1e-6.
    fn default() -> Self {
        PreimageOptions { seeds: 500, rng_seed: 0, dedup_tol: 1e-6, residual: 1e-12, outside_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreimageReport {
    pub count: usize,
    pub preimages: Vec<Vec<f64>>,
}

/// Solves `f(x) = y` from a lattice-plus-random seed set and counts the
/// distinct solutions in the simplex.
pub fn preimage_count<C: Scalar>(f: &SimplexMap<C>, y: &[f64], opts: &PreimageOptions) -> PreimageReport {
    let system = System::new(f.polys().iter().map(MultiPoly::to_float).collect());
    preimages_with(&system, f.n(), y, opts)
}

pub(crate) fn preimages_with(system: &System, n: usize, y: &[f64], opts: &PreimageOptions) -> PreimageReport {
    let lattice_target = opts.seeds / 2;
    let mut seeds = if lattice_target > 0 {
        barycentric_lattice(n, depth_for_size(n, lattice_target))
    } else {
        Vec::new()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let rest = opts.seeds.saturating_sub(seeds.len());
    seeds.extend(sample_uniform(n, rest, &mut rng).into_iter().map(|p| p.coords));
    let newton = NewtonOptions { accept: opts.residual, ..NewtonOptions::default() };
    let roots: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|s| system.solve(y, s, &newton).map(|r| r.x).filter(|x| contains(x, opts.outside_tol)))
        .collect();
    let preimages = dedup_points(roots.into_iter().flatten(), opts.dedup_tol);
    PreimageReport { count: preimages.len(), preimages }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn ex1(s: &str) -> ExactPoly {
        ExactPoly::parse(s, &["x"]).unwrap()
    }

    #[test]
    fn chebyshev_table() {
        let rows = [
            (1, "x"),
            (2, "4*x*(1-x)"),
            (3, "x*(3-4*x)^2"),
            (4, "16*x*(1-x)*(1-2*x)^2"),
            (5, "x*(5-20*x+16*x^2)^2"),
            (6, "4*x*(1-x)*((1-4*x)*(3-4*x))^2"),
        ];
        for (d, p) in rows {
            assert_eq!(chebyshev(d).polys()[0], ex1(p), "cheb:{d}");
        }
        let p2 = [(2, "(1-2*x)^2"), (3, "(1-x)*(1-4*x)^2"), (4, "(8*x^2-8*x+1)^2"), (5, "(1-x)*(16*x^2-12*x+1)^2"), (6, "((1-2*x)*(1-16*x+16*x^2))^2")];
        for (d, p) in p2 {
            assert_eq!(chebyshev(d).last_poly(), ex1(p), "cheb:{d} second component");
        }
    }

    #[test]
    fn catalog_entries() {
        let f2 = catalog("tri:f2").unwrap();
        assert_eq!(f2.last_poly(), parse_xy("4*x*y"));
        assert!(matches!(catalog("tri:f3"), Err(FoldError::Unknown(_))));
        assert!(matches!(catalog("cheb:0"), Err(FoldError::Unknown(_))));
        assert_eq!(catalog("cheb:9").unwrap().k(), 9);
        assert_eq!(table_names().len(), 11);
    }

    #[test]
    fn univariate_square_roots() {
        // roots come back with a positive leading coefficient
        assert_eq!(univariate_sqrt(&ex1("(1-2*x)^2*9/4")).unwrap(), ex1("3*x-3/2"));
        assert!(univariate_sqrt(&ex1("x")).is_none());
        assert!(univariate_sqrt(&ex1("2*x^2")).is_none());
    }

    #[test]
    fn factorizations_of_catalog() {
        for name in table_names() {
            let f = catalog(&name).unwrap();
            let report = verify_factorization(&f, &catalog_factors(&name).unwrap()).unwrap();
            assert!(report.ok, "{name}: {report:?}");
        }
        let cheb4 = catalog_factors("cheb:4").unwrap();
        assert_eq!(cheb4[0].facets, vec![1, 2]);
        assert_eq!(cheb4[0].q, ex1("8*x-4"));
        let f9 = catalog_factors("tri:f9").unwrap();
        let l: ExactPoly = f9.iter().fold(ExactPoly::one(2), |acc, c| &acc * &c.l(2));
        assert_eq!(l, parse_xy("x*y*(1-x-y)"));
        assert_eq!(
            verify_factorization(&catalog("tri:f9").unwrap(), &f9).unwrap().partition,
            vec![(2, 4), (2, 4), (2, 1)]
        );
        let id = verify_factorization(&catalog("tri:f1").unwrap(), &catalog_factors("tri:f1").unwrap()).unwrap();
        assert_eq!(id.partition, vec![(0, 0); 3]);
    }

    #[test]
    fn bad_factorization_detected() {
        let f = catalog("tri:f2").unwrap();
        let mut claims = catalog_factors("tri:f2").unwrap();
        claims[2].m = parse_xy("3");
        assert!(!verify_factorization(&f, &claims).unwrap().ok);
        assert_eq!(infer_cofactors(&f, &[vec![1], vec![3], vec![2]]), Err(FoldError::Remainder { component: 1 }));
        let cof = infer_cofactors(&f, &[vec![], vec![3], vec![1, 2]]).unwrap();
        assert_eq!(cof[2], parse_xy("4"));
    }

    #[test]
    fn residual_examples() {
        let t = triangle_two_fold_template();
        let at = |v: [i64; 6]| v.iter().map(|&a| rat(a, 1)).collect::<Vec<_>>();
        assert!(t.residual(&at([1, 1, 1, 1, 1, 4])).unwrap().is_zero());
        let r = t.residual(&at([1, 1, 1, 1, 1, 5])).unwrap();
        // residual = 1 - Σ P_i, so the xy coefficient is E + D + 2AB - F = -1
        assert_eq!(r, parse_xy("-x*y"));
        let t = interval_template(2);
        assert!(t.residual(&[rat(4, 1), rat(1, 1), rat(-2, 1)]).unwrap().is_zero());
        assert!(matches!(t.residual(&[rat(1, 1)]), Err(FoldError::ParamCount { expected: 3, got: 1 })));
    }

    #[test]
    fn equations_match_hand_expansion() {
        let t = triangle_two_fold_template();
        let names = ["A", "B", "C", "D", "E", "F"];
        let mut eqs: Vec<ExactPoly> = t.equations();
        let mut expect: Vec<ExactPoly> = ["1-C", "C-D", "C-E", "E+D+2*A*B-F", "D-A*B^2", "E-A"]
            .iter()
            .map(|s| ExactPoly::parse(s, &names).unwrap())
            .collect();
        let key = |p: &ExactPoly| p.to_string();
        eqs.sort_by_key(key);
        expect.sort_by_key(key);
        // residual = 1 - ΣP_i has the same zero set up to sign per equation
        for (a, b) in eqs.iter().zip(&expect) {
            assert!(a == b || *a == -b.clone(), "{a} vs {b}");
        }
    }

    #[test]
    fn template_json_roundtrip() {
        for t in [triangle_two_fold_template(), interval_template(5), triangle_nine_fold_template()] {
            let back = FoldTemplate::from_json_value(&t.to_json_value()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn malformed_templates() {
        let mut v = triangle_two_fold_template().to_json_value();
        v["components"][0]["facets"] = json!([3]);
        assert!(matches!(FoldTemplate::from_json_value(&v), Err(FoldError::Template(_))));
        let mut v = triangle_two_fold_template().to_json_value();
        v["k"] = json!(1);
        assert!(matches!(FoldTemplate::from_json_value(&v), Err(FoldError::Template(_))));
    }

    #[test]
    fn nine_fold_template_contains_table_entry() {
        let t = triangle_nine_fold_template();
        assert_eq!(t.partition(), vec![(2, 4), (2, 4), (2, 4)]);
        let claims: Vec<Factors> = catalog_factors("tri:f9")
            .unwrap()
            .into_iter()
            .map(|c| {
                let q0 = c.q.coeff(&[0, 0]);
                Factors { q: c.q.scale(&q0.recip()), m: c.m.scale(&(&q0 * &q0)), facets: c.facets }
            })
            .collect();
        let params = t.params_from_factors(&claims).unwrap();
        assert!(t.residual(&params).unwrap().is_zero());
        assert_eq!(t.assemble_exact(&params).unwrap().polys(), catalog("tri:f9").unwrap().polys());
    }

    #[test]
    fn solves_logistic() {
        let report = solve_fold(&interval_template(2), &SolveOptions::default()).unwrap();
        assert_eq!(report.solutions.len(), 1, "{:?}", report.stats);
        let s = &report.solutions[0];
        assert_eq!(s.exact.as_ref().unwrap(), &vec![rat(4, 1), rat(1, 1), rat(-2, 1)]);
        assert_eq!(s.exact_map.as_ref().unwrap().polys()[0], ex1("4*x*(1-x)"));
    }

    #[test]
    fn trivial_template_gives_identity() {
        let report = solve_fold(&interval_template(1), &SolveOptions::default()).unwrap();
        assert_eq!(report.solutions.len(), 1);
        assert_eq!(report.solutions[0].exact_map.as_ref().unwrap().polys()[0], ex1("x"));
    }

    #[test]
    fn preimages_of_cubic() {
        let y = 0.37;
        let report = preimage_count(&chebyshev(3), &[y], &PreimageOptions::default());
        // bisection oracle on a fine grid
        let p = chebyshev(3).to_float().polys()[0].clone();
        let grid: Vec<f64> = (0..=10_000).map(|i| i as f64 / 10_000.0).collect();
        let sign_changes = grid.windows(2).filter(|w| (p.eval_f64(&[w[0]]) - y) * (p.eval_f64(&[w[1]]) - y) < 0.0).count();
        assert_eq!(sign_changes, 3);
        assert_eq!(report.count, 3);
        let id = SimplexMap::<Rational>::identity(2);
        assert_eq!(preimage_count(&id, &[0.2, 0.3], &PreimageOptions::default()).count, 1);
    }
}
