//! Sparse multivariate polynomials over [`Scalar`] coefficients.
//!
//! Terms live in a `BTreeMap` keyed by [`Exponent`], ordered graded-lex, so
//! iteration and serialization are deterministic. The homogeneous
//! representative of a polynomial on the simplex (padding low-degree terms
//! with powers of `x_1 + ... + x_{n+1}`) is [`HomogPoly`].

use std::collections::BTreeMap;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::One;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scalar::{Rational, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degree {degree} exceeds bound {bound}")]
    DegreeExceeded { degree: u32, bound: u32 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("json error: {0}")]
    Json(String),
    #[error("non-finite float coefficient")]
    NonFinite,
}

/// Exponent vector of a monomial, ordered graded-lex (total degree first,
/// then lexicographic with `x_1` most significant).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Exponent(pub Vec<u32>);

impl Exponent {
    pub fn zeros(n: usize) -> Self {
        Exponent(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Exponent(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    fn add(&self, other: &Exponent) -> Exponent {
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All exponents in `num_vars` variables with total degree exactly `degree`,
/// in ascending graded-lex order.
pub fn exponents_of_degree(num_vars: usize, degree: u32) -> Vec<Exponent> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Exponent>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(Exponent(cur.clone()));
            return;
        }
        for a in 0..=left {
            cur[pos] = a;
            rec(pos + 1, left - a, cur, out);
        }
    }
    if num_vars == 0 {
        return if degree == 0 { vec![Exponent(vec![])] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(0, degree, &mut vec![0; num_vars], &mut out);
    out.sort();
    out
}

/// Monomial basis of polynomials of degree at most `degree`, graded-lex.
pub fn monomial_basis(num_vars: usize, degree: u32) -> Vec<Exponent> {
    (0..=degree)
        .flat_map(|d| exponents_of_degree(num_vars, d))
        .collect()
}

#[derive(Clone, PartialEq, Debug)]
pub struct MultiPoly<C> {
    num_vars: usize,
    terms: BTreeMap<Exponent, C>,
}

pub type ExactPoly = MultiPoly<Rational>;
pub type FloatPoly = MultiPoly<f64>;

impl<C: Scalar> MultiPoly<C> {
    pub fn zero(num_vars: usize) -> Self {
        MultiPoly { num_vars, terms: BTreeMap::new() }
    }

    pub fn constant(num_vars: usize, c: C) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(Exponent::zeros(num_vars), c);
        p
    }

    pub fn one(num_vars: usize) -> Self {
        Self::constant(num_vars, C::one())
    }

    /// The coordinate `x_{i+1}` (zero-based `i`).
    pub fn var(num_vars: usize, i: usize) -> Self {
        assert!(i < num_vars, "variable index {i} out of range for {num_vars} vars");
        let mut p = Self::zero(num_vars);
        p.add_term(Exponent::unit(num_vars, i), C::one());
        p
    }

    /// Sum of all `num_vars` coordinates.
    pub fn coordinate_sum(num_vars: usize) -> Self {
        let mut p = Self::zero(num_vars);
        for i in 0..num_vars {
            p.add_term(Exponent::unit(num_vars, i), C::one());
        }
        p
    }

    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, C)>,
    {
        let mut p = Self::zero(num_vars);
        for (e, c) in terms {
            if e.len() != num_vars {
                return Err(PolyError::DimensionMismatch { expected: num_vars, got: e.len() });
            }
            p.add_term(Exponent(e), c);
        }
        Ok(p)
    }

    /// Accumulates `c * x^e`, dropping the term if it cancels.
    pub fn add_term(&mut self, e: Exponent, c: C) {
        debug_assert_eq!(e.len(), self.num_vars);
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&e) {
            Some(v) => {
                *v = v.clone() + c;
                if v.is_zero() {
                    self.terms.remove(&e);
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, e: &[u32]) -> C {
        self.terms
            .get(&Exponent(e.to_vec()))
            .cloned()
            .unwrap_or_else(C::zero)
    }

    pub fn is_homogeneous_of(&self, degree: u32) -> bool {
        self.terms.keys().all(|e| e.degree() == degree)
    }

    pub fn scale(&self, s: &C) -> Self {
        let mut p = Self::zero(self.num_vars);
        if s.is_zero() {
            return p;
        }
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c.clone() * s.clone());
        }
        p
    }

    pub fn pow(&self, mut k: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.num_vars);
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D) -> MultiPoly<D> {
        let mut p = MultiPoly::zero(self.num_vars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), f(c));
        }
        p
    }

    pub fn to_float(&self) -> FloatPoly {
        self.map_coeffs(|c| c.to_f64())
    }

    /// Σ c_α x^α at `x`.
    pub fn evaluate(&self, x: &[C]) -> Result<C, PolyError> {
        if x.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch { expected: self.num_vars, got: x.len() });
        }
        let powers = self.power_table(x);
        let mut acc = C::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (i, &a) in e.0.iter().enumerate() {
                if a > 0 {
                    t = t * powers[i][a as usize].clone();
                }
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    fn power_table(&self, x: &[C]) -> Vec<Vec<C>> {
        let mut maxes = vec![0u32; self.num_vars];
        for e in self.terms.keys() {
            for (m, &a) in maxes.iter_mut().zip(&e.0) {
                *m = (*m).max(a);
            }
        }
        x.iter()
            .zip(&maxes)
            .map(|(xi, &m)| {
                let mut row = Vec::with_capacity(m as usize + 1);
                row.push(C::one());
                for j in 1..=m as usize {
                    let next = row[j - 1].clone() * xi.clone();
                    row.push(next);
                }
                row
            })
            .collect()
    }

    /// Float evaluation regardless of scalar mode.
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.num_vars);
        self.terms
            .iter()
            .map(|(e, c)| {
                e.0.iter()
                    .zip(x)
                    .fold(c.to_f64(), |t, (&a, &xi)| t * xi.powi(a as i32))
            })
            .sum()
    }

    /// ∂/∂x_{var+1}.
    pub fn derivative(&self, var: usize) -> Self {
        assert!(var < self.num_vars);
        let mut p = Self::zero(self.num_vars);
        for (e, c) in &self.terms {
            let a = e.0[var];
            if a == 0 {
                continue;
            }
            let mut ne = e.clone();
            ne.0[var] = a - 1;
            p.add_term(ne, c.clone() * C::from_i64(a as i64));
        }
        p
    }

    /// Substitutes `inner[j]` for `x_{j+1}`.
    pub fn compose(&self, inner: &[MultiPoly<C>]) -> Result<Self, PolyError> {
        if inner.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch { expected: self.num_vars, got: inner.len() });
        }
        let m = match inner.first() {
            Some(p) => p.num_vars,
            None => return Ok(MultiPoly::constant(0, self.coeff(&[]))),
        };
        if let Some(bad) = inner.iter().find(|p| p.num_vars != m) {
            return Err(PolyError::DimensionMismatch { expected: m, got: bad.num_vars });
        }
        let mut cache: Vec<Vec<MultiPoly<C>>> = inner.iter().map(|p| vec![MultiPoly::one(m), p.clone()]).collect();
        let mut out = MultiPoly::zero(m);
        for (e, c) in &self.terms {
            let mut t = MultiPoly::constant(m, c.clone());
            for (j, &a) in e.0.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                while cache[j].len() <= a as usize {
                    let next = cache[j].last().unwrap() * &inner[j];
                    cache[j].push(next);
                }
                t = &t * &cache[j][a as usize];
            }
            out = out + t;
        }
        Ok(out)
    }

    /// Embeds into a polynomial ring with `extra` additional trailing variables.
    pub fn extend_vars(&self, extra: usize) -> Self {
        let mut p = Self::zero(self.num_vars + extra);
        for (e, c) in &self.terms {
            let mut ne = e.0.clone();
            ne.extend(std::iter::repeat_n(0, extra));
            p.add_term(Exponent(ne), c.clone());
        }
        p
    }

    /// Homogeneous representative of degree `k` in `num_vars + 1` variables.
    pub fn homogenize(&self, k: u32) -> Result<HomogPoly<C>, PolyError> {
        let d = self.degree();
        if d > k {
            return Err(PolyError::DegreeExceeded { degree: d, bound: k });
        }
        let m = self.num_vars + 1;
        let sum = MultiPoly::<C>::coordinate_sum(m);
        let mut sum_pows = vec![MultiPoly::one(m)];
        for j in 1..=k as usize {
            let next = &sum_pows[j - 1] * &sum;
            sum_pows.push(next);
        }
        let mut out = MultiPoly::zero(m);
        for (e, c) in &self.terms {
            let mut ne = e.0.clone();
            ne.push(0);
            let mono = MultiPoly { num_vars: m, terms: BTreeMap::from([(Exponent(ne), c.clone())]) };
            out = out + &mono * &sum_pows[(k - e.degree()) as usize];
        }
        Ok(HomogPoly { poly: out, degree: k })
    }

    pub fn to_json_value(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(e, c)| serde_json::json!({ "exp": e.0, "coef": c.to_json() }))
            .collect();
        serde_json::json!({ "num_vars": self.num_vars, "terms": terms })
    }

    pub fn from_json_value(v: &Value) -> Result<Self, PolyError> {
        let raw: PolyJson = serde_json::from_value(v.clone()).map_err(|e| PolyError::Json(e.to_string()))?;
        let mut p = Self::zero(raw.num_vars);
        for t in raw.terms {
            if t.exp.len() != raw.num_vars {
                return Err(PolyError::DimensionMismatch { expected: raw.num_vars, got: t.exp.len() });
            }
            let c = C::from_json(&t.coef).map_err(PolyError::Json)?;
            p.add_term(Exponent(t.exp), c);
        }
        Ok(p)
    }

    /// Parses expressions like `"x*(3-4*x)^2"` or `"(1-x-y)*(1+x+y)"`.
    /// Variables are named by `names`; `^` takes non-negative integer
    /// exponents; `/` only divides by constants. Numbers are read exactly.
    pub fn parse(src: &str, names: &[&str]) -> Result<Self, PolyError> {
        let exact = parse::Parser::new(src, names).parse()?;
        Ok(exact.map_coeffs(|c| C::from_rational(c)))
    }

    /// Max absolute coefficient (as float).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.to_f64().abs()).fold(0.0, f64::max)
    }
}

impl<C: Scalar> MultiPoly<C> {
    /// Exact copy; float coefficients convert without rounding.
    pub fn to_exact(&self) -> Result<ExactPoly, PolyError> {
        let mut out = ExactPoly::zero(self.num_vars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.to_rational().ok_or(PolyError::NonFinite)?);
        }
        Ok(out)
    }
}

impl ExactPoly {
    /// Quotient `self / d` when `d` divides `self` exactly, else `None`.
    pub fn div_exact(&self, d: &ExactPoly) -> Option<ExactPoly> {
        assert_eq!(self.num_vars, d.num_vars, "dividing polynomials in different rings");
        let (lead_e, lead_c) = d.terms.iter().next_back()?;
        let mut rem = self.clone();
        let mut quot = ExactPoly::zero(self.num_vars);
        while let Some((e, c)) = rem.terms.iter().next_back() {
            if e.0.iter().zip(&lead_e.0).any(|(a, b)| a < b) {
                return None;
            }
            let qe = Exponent(e.0.iter().zip(&lead_e.0).map(|(a, b)| a - b).collect());
            let qc = c / lead_c;
            let mono = MultiPoly { num_vars: self.num_vars, terms: BTreeMap::from([(qe.clone(), qc.clone())]) };
            rem = rem - &mono * d;
            quot.add_term(qe, qc);
        }
        Some(quot)
    }
}

/// Jacobian matrix `[∂P_i/∂x_j](x)` by symbolic differentiation then evaluation.
pub fn jacobian<C: Scalar>(ps: &[MultiPoly<C>], x: &[C]) -> Result<Vec<Vec<C>>, PolyError> {
    let n = ps.len();
    if x.len() != n {
        return Err(PolyError::DimensionMismatch { expected: n, got: x.len() });
    }
    ps.iter()
        .map(|p| {
            if p.num_vars != n {
                return Err(PolyError::DimensionMismatch { expected: n, got: p.num_vars });
            }
            (0..n).map(|j| p.derivative(j).evaluate(x)).collect()
        })
        .collect()
}

/// Homogeneous polynomial in `n+1` variables with a fixed common degree.
#[derive(Clone, PartialEq, Debug)]
pub struct HomogPoly<C> {
    poly: MultiPoly<C>,
    degree: u32,
}

impl<C: Scalar> HomogPoly<C> {
    pub fn new(poly: MultiPoly<C>, degree: u32) -> Result<Self, PolyError> {
        if let Some((e, _)) = poly.terms().find(|(e, _)| e.degree() != degree) {
            return Err(PolyError::Parse(format!(
                "term of degree {} in a homogeneous polynomial of degree {degree}",
                e.degree()
            )));
        }
        Ok(HomogPoly { poly, degree })
    }

    pub fn poly(&self) -> &MultiPoly<C> {
        &self.poly
    }

    pub fn into_poly(self) -> MultiPoly<C> {
        self.poly
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn num_vars(&self) -> usize {
        self.poly.num_vars
    }

    /// Multiplies by `(x_1 + ... + x_{n+1})^times`.
    pub fn times_sum(&self, times: u32) -> Self {
        let sum = MultiPoly::coordinate_sum(self.poly.num_vars);
        let mut p = self.poly.clone();
        for _ in 0..times {
            p = &p * &sum;
        }
        HomogPoly { poly: p, degree: self.degree + times }
    }

    /// Restriction to the affine patch `x_{n+1} = 1 - Σ_{i≤n} x_i`.
    pub fn dehomogenize(&self) -> MultiPoly<C> {
        let m = self.poly.num_vars;
        if m == 0 {
            return self.poly.clone();
        }
        let n = m - 1;
        let mut inner: Vec<MultiPoly<C>> = (0..n).map(|i| MultiPoly::var(n, i)).collect();
        inner.push(MultiPoly::one(n) - MultiPoly::coordinate_sum(n));
        self.poly.compose(&inner).expect("arity matches by construction")
    }
}

impl HomogPoly<Rational> {
    /// Divides out the largest power of `x_1 + ... + x_{n+1}` that divides
    /// exactly. Exact-only; float polynomials have no such operation.
    pub fn normalize_degree(&self) -> Self {
        let mut cur = self.clone();
        while !cur.poly.is_zero() && cur.degree > 0 {
            match divide_by_coordinate_sum(&cur.poly) {
                Some(q) => cur = HomogPoly { poly: q, degree: cur.degree - 1 },
                None => break,
            }
        }
        cur
    }
}

/// Exact division by `x_1 + ... + x_m`; `None` if the remainder is nonzero.
///
/// Synthetic division in the last variable `t`: with `p = Σ_j c_j t^j` and
/// divisor `t + s`, the quotient digits satisfy `q_{j-1} = c_j - s q_j`.
fn divide_by_coordinate_sum(p: &ExactPoly) -> Option<ExactPoly> {
    let m = p.num_vars;
    if m == 0 {
        return None;
    }
    let t = m - 1;
    let top = p.terms.keys().map(|e| e.0[t]).max().unwrap_or(0) as usize;
    let mut coeffs: Vec<ExactPoly> = vec![ExactPoly::zero(m); top + 1];
    for (e, c) in &p.terms {
        let mut ne = e.clone();
        let j = ne.0[t] as usize;
        ne.0[t] = 0;
        coeffs[j].add_term(ne, c.clone());
    }
    let mut s = ExactPoly::zero(m);
    for i in 0..t {
        s.add_term(Exponent::unit(m, i), Rational::one());
    }
    if top == 0 {
        return if p.is_zero() { Some(p.clone()) } else { None };
    }
    let mut q: Vec<ExactPoly> = vec![ExactPoly::zero(m); top];
    q[top - 1] = coeffs[top].clone();
    for j in (1..top).rev() {
        q[j - 1] = &coeffs[j] - &(&s * &q[j]);
    }
    let rem = &coeffs[0] - &(&s * &q[0]);
    if !rem.is_zero() {
        return None;
    }
    let mut out = ExactPoly::zero(m);
    for (j, qj) in q.into_iter().enumerate() {
        for (e, c) in qj.terms {
            let mut ne = e;
            ne.0[t] += j as u32;
            out.add_term(ne, c);
        }
    }
    Some(out)
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    num_vars: usize,
    terms: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    exp: Vec<u32>,
    coef: Value,
}

fn var_name(num_vars: usize, i: usize) -> String {
    const SHORT: [&str; 4] = ["x", "y", "z", "w"];
    if num_vars <= 4 {
        SHORT[i].to_string()
    } else {
        format!("x{}", i + 1)
    }
}

impl<C: Scalar> MultiPoly<C> {
    /// Like `Display`, but with caller-supplied variable names.
    pub fn to_string_with(&self, names: &[&str]) -> String {
        let mut s = String::new();
        self.write_terms(&mut s, |i| names.get(i).map_or_else(|| var_name(self.num_vars, i), |n| n.to_string()))
            .expect("writing to a String cannot fail");
        s
    }

    fn write_terms(&self, f: &mut impl fmt::Write, name: impl Fn(usize) -> String) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mono: Vec<String> = e
                .0
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0)
                .map(|(i, &a)| {
                    let v = name(i);
                    if a == 1 { v } else { format!("{v}^{a}") }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{mag}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

impl<C: Scalar> fmt::Display for MultiPoly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_terms(f, |i| var_name(self.num_vars, i))
    }
}

impl<C: Scalar> Add<&MultiPoly<C>> for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn add(self, rhs: &MultiPoly<C>) -> MultiPoly<C> {
        assert_eq!(self.num_vars, rhs.num_vars, "adding polynomials in different rings");
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), c.clone());
        }
        p
    }
}

impl<C: Scalar> Add for MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn add(mut self, rhs: MultiPoly<C>) -> MultiPoly<C> {
        assert_eq!(self.num_vars, rhs.num_vars, "adding polynomials in different rings");
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl<C: Scalar> Sub<&MultiPoly<C>> for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn sub(self, rhs: &MultiPoly<C>) -> MultiPoly<C> {
        assert_eq!(self.num_vars, rhs.num_vars, "subtracting polynomials in different rings");
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), -c.clone());
        }
        p
    }
}

impl<C: Scalar> Sub for MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn sub(self, rhs: MultiPoly<C>) -> MultiPoly<C> {
        &self - &rhs
    }
}

impl<C: Scalar> Neg for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn neg(self) -> MultiPoly<C> {
        self.map_coeffs(|c| -c.clone())
    }
}

impl<C: Scalar> Neg for MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn neg(self) -> MultiPoly<C> {
        -&self
    }
}

impl<C: Scalar> Mul<&MultiPoly<C>> for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn mul(self, rhs: &MultiPoly<C>) -> MultiPoly<C> {
        assert_eq!(self.num_vars, rhs.num_vars, "multiplying polynomials in different rings");
        let mut p = MultiPoly::zero(self.num_vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                p.add_term(ea.add(eb), ca.clone() * cb.clone());
            }
        }
        p
    }
}

impl<C: Scalar> Mul for MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn mul(self, rhs: MultiPoly<C>) -> MultiPoly<C> {
        &self * &rhs
    }
}

mod parse {
    use super::*;

    pub(super) struct Parser<'a> {
        src: &'a [u8],
        pos: usize,
        names: &'a [&'a str],
    }

    impl<'a> Parser<'a> {
        pub(super) fn new(src: &'a str, names: &'a [&'a str]) -> Self {
            Parser { src: src.as_bytes(), pos: 0, names }
        }

        pub(super) fn parse(mut self) -> Result<ExactPoly, PolyError> {
            let p = self.expr()?;
            self.skip_ws();
            if self.pos != self.src.len() {
                return Err(self.err("trailing input"));
            }
            Ok(p)
        }

        fn err(&self, msg: &str) -> PolyError {
            PolyError::Parse(format!("{msg} at byte {} of {:?}", self.pos, String::from_utf8_lossy(self.src)))
        }

        fn skip_ws(&mut self) {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }

        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.src.get(self.pos).copied()
        }

        fn expr(&mut self) -> Result<ExactPoly, PolyError> {
            let mut acc = self.term()?;
            while let Some(op @ (b'+' | b'-')) = self.peek() {
                self.pos += 1;
                let rhs = self.term()?;
                acc = if op == b'+' { acc + rhs } else { acc - rhs };
            }
            Ok(acc)
        }

        fn term(&mut self) -> Result<ExactPoly, PolyError> {
            let mut acc = self.unary()?;
            while let Some(op @ (b'*' | b'/')) = self.peek() {
                self.pos += 1;
                let rhs = self.unary()?;
                if op == b'*' {
                    acc = acc * rhs;
                } else {
                    if rhs.degree() > 0 || rhs.is_zero() {
                        return Err(self.err("division by a non-constant or zero"));
                    }
                    let d = rhs.coeff(&vec![0; self.names.len()]);
                    acc = acc.scale(&(Rational::one() / d));
                }
            }
            Ok(acc)
        }

        fn unary(&mut self) -> Result<ExactPoly, PolyError> {
            match self.peek() {
                Some(b'-') => {
                    self.pos += 1;
                    Ok(-self.unary()?)
                }
                Some(b'+') => {
                    self.pos += 1;
                    self.unary()
                }
                _ => self.power(),
            }
        }

        fn power(&mut self) -> Result<ExactPoly, PolyError> {
            let base = self.atom()?;
            if self.peek() == Some(b'^') {
                self.pos += 1;
                self.skip_ws();
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let k: u32 = std::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .parse()
                    .map_err(|_| self.err("expected integer exponent"))?;
                return Ok(base.pow(k));
            }
            Ok(base)
        }

        fn atom(&mut self) -> Result<ExactPoly, PolyError> {
            let n = self.names.len();
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    let p = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    Ok(p)
                }
                Some(c) if c.is_ascii_digit() || c == b'.' => {
                    let start = self.pos;
                    while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                        self.pos += 1;
                    }
                    let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let r = crate::scalar::parse_rational(s).map_err(PolyError::Parse)?;
                    Ok(ExactPoly::constant(n, r))
                }
                Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    match self.names.iter().position(|v| *v == name) {
                        Some(i) => Ok(ExactPoly::var(n, i)),
                        None => Err(PolyError::Parse(format!("unknown variable {name:?}"))),
                    }
                }
                _ => Err(self.err("unexpected token")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use proptest::prelude::*;

    fn ex(s: &str, names: &[&str]) -> ExactPoly {
        ExactPoly::parse(s, names).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let logistic = ex("4*x*(1-x)", &["x"]);
        assert_eq!(logistic.evaluate(&[rat(1, 2)]).unwrap(), rat(1, 1));
        assert_eq!(ExactPoly::zero(2).evaluate(&[rat(3, 1), rat(5, 7)]).unwrap(), rat(0, 1));
        let q = ex("x^2 - x*y + y^2", &["x", "y"]);
        assert_eq!(q.evaluate(&[rat(1, 1), rat(1, 1)]).unwrap(), rat(1, 1));
        assert!(matches!(q.evaluate(&[rat(1, 1)]), Err(PolyError::DimensionMismatch { .. })));
    }

    #[test]
    fn homogenize_examples() {
        let h = ExactPoly::one(2).homogenize(1).unwrap();
        assert_eq!(h.poly(), &ex("x+y+z", &["x", "y", "z"]));
        let h = ex("1 - 3*x + 3*x^2", &["x"]).homogenize(2).unwrap();
        assert_eq!(h.poly(), &ex("x^2 - x*y + y^2", &["x", "y"]));
        let h = ex("x*y", &["x", "y"]).homogenize(2).unwrap();
        assert_eq!(h.poly(), &ex("x*y", &["x", "y", "z"]));
        assert!(matches!(
            ex("x^3", &["x"]).homogenize(2),
            Err(PolyError::DegreeExceeded { degree: 3, bound: 2 })
        ));
    }

    #[test]
    fn compose_examples() {
        let f = ex("4*x*(1-x)", &["x"]);
        assert_eq!(f.compose(&[f.clone()]).unwrap(), ex("16*x*(1-x)*(1-2*x)^2", &["x"]));
        let q = ex("3*x^2 - 7", &["x"]);
        assert_eq!(ex("x", &["x"]).compose(&[q.clone()]).unwrap(), q);
        assert_eq!(
            ex("x^2", &["x"]).compose(&[ex("x+1", &["x"])]).unwrap(),
            ex("x^2 + 2*x + 1", &["x"])
        );
        assert!(f.compose(&[f.clone(), f.clone()]).is_err());
    }

    #[test]
    fn exact_division() {
        let names = ["x", "y"];
        let p = ExactPoly::parse("(1-x-y)*(1+x+y)*(x-y)^2", &names).unwrap();
        let d = ExactPoly::parse("1-x-y", &names).unwrap();
        let q = p.div_exact(&d).unwrap();
        assert_eq!(q, ExactPoly::parse("(1+x+y)*(x-y)^2", &names).unwrap());
        assert!(ExactPoly::parse("x^2+y", &names).unwrap().div_exact(&d).is_none());
        assert!(p.div_exact(&ExactPoly::zero(2)).is_none());
    }

    #[test]
    fn jacobian_examples() {
        let names = ["x", "y"];
        let f2 = [ex("(x-y)^2", &names), ex("(1-x-y)*(1+x+y)", &names)];
        let j = jacobian(&f2, &[rat(1, 1), rat(0, 1)]).unwrap();
        assert_eq!(j, vec![vec![rat(2, 1), rat(-2, 1)], vec![rat(-2, 1), rat(-2, 1)]]);

        let lin = [ex("2/3*x + 1/7*y", &names), ex("1/5*x", &names)];
        let j = jacobian(&lin, &[rat(1, 9), rat(3, 11)]).unwrap();
        assert_eq!(j, vec![vec![rat(2, 3), rat(1, 7)], vec![rat(1, 5), rat(0, 1)]]);

        let j = jacobian(&[ex("4*x*(1-x)", &["x"])], &[rat(1, 2)]).unwrap();
        assert_eq!(j, vec![vec![rat(0, 1)]]);
    }

    #[test]
    fn normalize_degree_examples() {
        let names = ["x", "y"];
        let h = HomogPoly::new(ex("(x+y)*x", &names), 2).unwrap().normalize_degree();
        assert_eq!(h.degree(), 1);
        assert_eq!(h.poly(), &ex("x", &names));

        let q = HomogPoly::new(ex("x^2 - x*y + y^2", &names), 2).unwrap();
        assert_eq!(q.normalize_degree(), q);

        let h = HomogPoly::new(ex("(x+y)^2", &names), 2).unwrap().normalize_degree();
        assert_eq!(h.degree(), 0);
        assert_eq!(h.poly(), &ExactPoly::one(2));

        let z = HomogPoly::new(ExactPoly::zero(2), 3).unwrap();
        assert_eq!(z.normalize_degree(), z);
    }

    #[test]
    fn graded_lex_order_and_json() {
        let p = ex("3*x*y - 1/2 + y^2", &["x", "y"]);
        let degs: Vec<u32> = p.terms().map(|(e, _)| e.degree()).collect();
        assert_eq!(degs, vec![0, 2, 2]);
        let v = p.to_json_value();
        assert_eq!(v["terms"][0]["coef"], "-1/2");
        assert_eq!(ExactPoly::from_json_value(&v).unwrap(), p);
        let fp = p.to_float();
        assert_eq!(FloatPoly::from_json_value(&fp.to_json_value()).unwrap(), fp);
    }

    #[test]
    fn display_is_readable() {
        let p = ex("4*x*(1-x)", &["x"]);
        assert_eq!(p.to_string(), "-4*x^2 + 4*x");
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(monomial_basis(2, 2).len(), 6);
        assert_eq!(exponents_of_degree(3, 10).len(), 66);
    }

    fn arb_poly(n: usize, max_deg: u32) -> impl Strategy<Value = ExactPoly> {
        let basis = monomial_basis(n, max_deg);
        prop::collection::vec(-6i64..=6, basis.len()).prop_map(move |cs| {
            let mut p = ExactPoly::zero(n);
            for (e, c) in basis.iter().zip(cs) {
                p.add_term(e.clone(), rat(c, 1 + (c.unsigned_abs() as i64 % 3)));
            }
            p
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn homogenize_agrees_on_patch(p in arb_poly(2, 3), k in 3u32..5, a in 0i64..20, b in 0i64..20) {
            let (x, y) = (rat(a, 40), rat(b, 40));
            let h = p.homogenize(k).unwrap();
            let z = rat(1, 1) - x.clone() - y.clone();
            prop_assert_eq!(h.poly().evaluate(&[x.clone(), y.clone(), z]).unwrap(), p.evaluate(&[x, y]).unwrap());
            prop_assert_eq!(h.dehomogenize(), p);
        }

        #[test]
        fn compose_is_associative(f in arb_poly(1, 2), g in arb_poly(1, 2), h in arb_poly(1, 2)) {
            let left = f.compose(&[g.compose(&[h.clone()]).unwrap()]).unwrap();
            let right = f.compose(&[g.clone()]).unwrap().compose(&[h]).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn normalize_degree_is_idempotent(p in arb_poly(2, 2), extra in 0u32..3) {
            let h = p.homogenize(2).unwrap().times_sum(extra);
            let once = h.normalize_degree();
            prop_assert_eq!(once.normalize_degree(), once.clone());
            prop_assert!(once.degree() <= 2 || p.is_zero());
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let names = ["x", "y"];
        let ps = [
            ex("x*(1-y)*(2-9*x+24*x^2)*(3-4*x)^2", &names).to_float(),
            ex("(1-x-y)^2*(1-8*x+16*x^2-8*y)^2 + y^3", &names).to_float(),
        ];
        let h = 1e-6;
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.05..0.45);
            let y: f64 = rng.random_range(0.05..0.45);
            let j = jacobian(&ps, &[x, y]).unwrap();
            for (i, p) in ps.iter().enumerate() {
                let fd = [
                    (p.eval_f64(&[x + h, y]) - p.eval_f64(&[x - h, y])) / (2.0 * h),
                    (p.eval_f64(&[x, y + h]) - p.eval_f64(&[x, y - h])) / (2.0 * h),
                ];
                for k in 0..2 {
                    let scale = j[i][k].abs().max(1.0);
                    assert!((j[i][k] - fd[k]).abs() / scale < 1e-6, "{} vs {}", j[i][k], fd[k]);
                }
            }
        }
    }
}
