//! Finitely generated inner approximations `K_N(Δⁿ, k)` of the cone of
//! non-negative polynomials, and their extreme rays.
//!
//! A polynomial of degree at most `k` is a coefficient vector over
//! [`monomial_basis`]`(n, k)`. It lies in `K_N` when every coefficient of
//! `(x_1 + … + x_{n+1})^N · P_H` is non-negative. Those coefficients are
//! integer linear functionals of the coefficient vector, so the cone is
//! `{c : A c >= 0}` for an integer matrix `A`, and its rays are found with the
//! double description method in exact integer arithmetic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::polynomial::{exponents_of_degree, monomial_basis, Exponent, ExactPoly, FloatPoly, MultiPoly};
use crate::scalar::{format_rational, parse_rational, Rational};
use crate::simplex::{max_on_simplex, MaxOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("cone is not pointed: inequality matrix has rank {rank} < dimension {dim}")]
    NotPointed { rank: usize, dim: usize },
    #[error("rays have not been enumerated")]
    NoRays,
    #[error("generator {index} has non-positive maximum {max} on the simplex")]
    NonPositiveMax { index: usize, max: f64 },
    #[error("malformed cone json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeRep {
    pub n: usize,
    pub k: u32,
    pub level: u32,
    /// Coefficient basis, one column of `ineq` per entry.
    pub basis: Vec<Exponent>,
    /// One row per monomial of degree `level + k` in `n + 1` variables.
    pub ineq: Vec<Vec<BigInt>>,
    /// Primitive integer vectors, sorted.
    pub rays: Vec<Vec<BigInt>>,
    /// Generators rescaled to have maximum one on the simplex.
    pub scaled_rays: Vec<FloatPoly>,
}

/// `(N + k + n)! / ((N + k)! n!)`.
pub fn row_count(n: usize, k: u32, level: u32) -> usize {
    exponents_of_degree(n + 1, level + k).len()
}

/// Inequality system of `K_N(Δⁿ, k)`.
pub fn build_inequalities(n: usize, k: u32, level: u32) -> ConeRep {
    let basis = monomial_basis(n, k);
    let rows_exp = exponents_of_degree(n + 1, level + k);
    let mut ineq = vec![vec![BigInt::zero(); basis.len()]; rows_exp.len()];
    let index: std::collections::HashMap<&Exponent, usize> = rows_exp.iter().enumerate().map(|(i, e)| (e, i)).collect();
    for (col, e) in basis.iter().enumerate() {
        let mono = MultiPoly::from_terms(n, [(e.0.clone(), Rational::one())]).expect("basis exponent has n entries");
        let expanded = mono
            .homogenize(k)
            .expect("basis degree within k")
            .times_sum(level);
        for (re, c) in expanded.poly().terms() {
            debug_assert!(c.is_integer());
            ineq[index[re]][col] = c.to_integer();
        }
    }
    ConeRep { n, k, level, basis, ineq, rays: Vec::new(), scaled_rays: Vec::new() }
}

impl ConeRep {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Polynomial with the given coefficient vector over `basis`.
    pub fn poly_of(&self, coeffs: &[BigInt]) -> ExactPoly {
        let terms = self
            .basis
            .iter()
            .zip(coeffs)
            .filter(|(_, c)| !c.is_zero())
            .map(|(e, c)| (e.0.clone(), Rational::from_integer(c.clone())));
        MultiPoly::from_terms(self.n, terms).expect("basis exponent has n entries")
    }

    pub fn generators(&self) -> Vec<ExactPoly> {
        self.rays.iter().map(|r| self.poly_of(r)).collect()
    }

    /// `A c` for a rational coefficient vector.
    pub fn evaluate_rows(&self, c: &[Rational]) -> Vec<Rational> {
        self.ineq
            .iter()
            .map(|row| row.iter().zip(c).fold(Rational::zero(), |acc, (a, x)| acc + Rational::from_integer(a.clone()) * x))
            .collect()
    }

    /// Whether `p` (degree at most `k`) satisfies this cone's inequalities.
    pub fn contains(&self, p: &ExactPoly) -> bool {
        let c: Vec<Rational> = self.basis.iter().map(|e| p.coeff(e.as_slice())).collect();
        self.evaluate_rows(&c).iter().all(|v| !v.is_negative())
    }

    pub fn to_json_value(&self) -> Value {
        let ints = |rows: &[Vec<BigInt>]| -> Vec<Vec<String>> {
            rows.iter()
                .map(|r| r.iter().map(|v| format_rational(&Rational::from_integer(v.clone()))).collect())
                .collect()
        };
        json!({
            "n": self.n,
            "k": self.k,
            "N": self.level,
            "basis": self.basis.iter().map(|e| e.0.clone()).collect::<Vec<_>>(),
            "ineq": ints(&self.ineq),
            "rays": ints(&self.rays),
            "scaled_rays": self.scaled_rays.iter().map(MultiPoly::to_json_value).collect::<Vec<_>>(),
        })
    }

    pub fn from_json_value(v: &Value) -> Result<Self, ConeError> {
        let err = |m: &str| ConeError::Json(m.to_string());
        let n = v["n"].as_u64().ok_or_else(|| err("missing n"))? as usize;
        let k = v["k"].as_u64().ok_or_else(|| err("missing k"))? as u32;
        let level = v["N"].as_u64().ok_or_else(|| err("missing N"))? as u32;
        let mut cone = build_inequalities(n, k, level);
        let int_rows = |key: &str| -> Result<Vec<Vec<BigInt>>, ConeError> {
            let Some(rows) = v[key].as_array() else { return Ok(Vec::new()) };
            rows.iter()
                .map(|r| {
                    r.as_array()
                        .ok_or_else(|| err("row is not an array"))?
                        .iter()
                        .map(|x| {
                            let q = parse_rational(x.as_str().ok_or_else(|| err("entry is not a string"))?).map_err(ConeError::Json)?;
                            if q.is_integer() {
                                Ok(q.to_integer())
                            } else {
                                Err(err("ray entries must be integers"))
                            }
                        })
                        .collect()
                })
                .collect()
        };
        if int_rows("ineq")? != cone.ineq {
            return Err(err("inequality matrix does not match (n, k, N)"));
        }
        cone.rays = int_rows("rays")?;
        if cone.rays.iter().any(|r| r.len() != cone.dim()) {
            return Err(err("ray length does not match the basis"));
        }
        if let Some(arr) = v["scaled_rays"].as_array() {
            cone.scaled_rays = arr
                .iter()
                .map(|p| MultiPoly::from_json_value(p).map_err(|e| ConeError::Json(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        Ok(cone)
    }
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn primitive(mut v: Vec<BigInt>) -> Vec<BigInt> {
    let g = v.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    if !g.is_zero() && !g.is_one() {
        for x in v.iter_mut() {
            *x /= &g;
        }
    }
    v
}

/// Rank of an integer matrix (fraction-free elimination).
pub fn rank(rows: &[Vec<BigInt>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        for i in r + 1..m.len() {
            if m[i][c].is_zero() {
                continue;
            }
            let (a, b) = (m[r][c].clone(), m[i][c].clone());
            let pivot = m[r].clone();
            let row = primitive(m[i].iter().zip(&pivot).map(|(x, y)| x * &a - y * &b).collect());
            m[i] = row;
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Integer inverse of a nonsingular square matrix, up to a positive scalar:
/// returns the columns `r_j` with `B r_j = λ_j e_j`, `λ_j > 0`.
fn inverse_columns(b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let d = b.len();
    let to_q = |x: &BigInt| Rational::from_integer(x.clone());
    let mut m: Vec<Vec<Rational>> = b
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r: Vec<Rational> = row.iter().map(to_q).collect();
            r.extend((0..d).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            r
        })
        .collect();
    for c in 0..d {
        let p = (c..d).find(|&i| !m[i][c].is_zero()).expect("nonsingular");
        m.swap(c, p);
        let inv = m[c][c].recip();
        for x in m[c].iter_mut() {
            *x *= &inv;
        }
        for i in 0..d {
            if i != c && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                let pivot = m[c].clone();
                for (x, y) in m[i].iter_mut().zip(pivot) {
                    *x -= &f * y;
                }
            }
        }
    }
    (0..d)
        .map(|j| {
            let col: Vec<Rational> = (0..d).map(|i| m[i][d + j].clone()).collect();
            let l = col.iter().fold(BigInt::one(), |l, q| l.lcm(q.denom()));
            primitive(col.iter().map(|q| (q * Rational::from_integer(l.clone())).to_integer()).collect())
        })
        .collect()
}

#[derive(Clone, Debug)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn contains(&self, o: &Bits) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| a & b == *b)
    }
}

struct Ray {
    v: Vec<BigInt>,
    zeros: Bits,
}

/// Extreme rays of `{c : A c >= 0}`, as sorted primitive integer vectors.
///
/// Rows are inserted one at a time, always choosing next the unprocessed row
/// that creates the fewest candidate pairs against the current rays.
/// Adjacency uses the combinatorial test.
pub fn extreme_rays(a: &[Vec<BigInt>]) -> Result<Vec<Vec<BigInt>>, ConeError> {
    let m = a.len();
    let d = a.first().map_or(0, Vec::len);
    let rk = rank(a);
    if rk < d {
        return Err(ConeError::NotPointed { rank: rk, dim: d });
    }
    let mut basis_rows = Vec::with_capacity(d);
    for i in 0..m {
        let mut trial: Vec<Vec<BigInt>> = basis_rows.iter().map(|&j: &usize| a[j].clone()).collect();
        trial.push(a[i].clone());
        if rank(&trial) == trial.len() {
            basis_rows.push(i);
            if basis_rows.len() == d {
                break;
            }
        }
    }
    let b: Vec<Vec<BigInt>> = basis_rows.iter().map(|&i| a[i].clone()).collect();
    let mut processed = vec![false; m];
    let zeros_of = |v: &[BigInt], processed: &[bool]| {
        let mut z = Bits::new(m);
        for (i, row) in a.iter().enumerate() {
            if processed[i] && dot(row, v).is_zero() {
                z.set(i);
            }
        }
        z
    };
    for &i in &basis_rows {
        processed[i] = true;
    }
    let mut rays: Vec<Ray> = inverse_columns(&b)
        .into_iter()
        .map(|v| {
            let zeros = zeros_of(&v, &processed);
            Ray { v, zeros }
        })
        .collect();

    while let Some(next) = pick_row(a, &processed, &rays) {
        let row = &a[next];
        let vals: Vec<BigInt> = rays.iter().map(|r| dot(row, &r.v)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_positive()).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_negative()).collect();
        let mut fresh = Vec::new();
        for &p in &pos {
            for &q in &neg {
                let common = rays[p].zeros.and(&rays[q].zeros);
                if common.count() + 2 < d {
                    continue;
                }
                let blocked = rays
                    .iter()
                    .enumerate()
                    .any(|(r, ray)| r != p && r != q && ray.zeros.contains(&common));
                if blocked {
                    continue;
                }
                let v: Vec<BigInt> = rays[q]
                    .v
                    .iter()
                    .zip(&rays[p].v)
                    .map(|(x, y)| &vals[p] * x - &vals[q] * y)
                    .collect();
                let v = primitive(v);
                let mut zeros = common;
                zeros.set(next);
                fresh.push(Ray { v, zeros });
            }
        }
        processed[next] = true;
        let mut kept: Vec<Ray> = Vec::with_capacity(rays.len() + fresh.len());
        for (i, mut r) in rays.into_iter().enumerate() {
            if vals[i].is_zero() {
                r.zeros.set(next);
                kept.push(r);
            } else if vals[i].is_positive() {
                kept.push(r);
            }
        }
        kept.extend(fresh);
        rays = kept;
    }
    let mut out: Vec<Vec<BigInt>> = rays.into_iter().map(|r| r.v).collect();
    out.sort();
    out.dedup();
    Ok(out)
}

fn pick_row(a: &[Vec<BigInt>], processed: &[bool], rays: &[Ray]) -> Option<usize> {
    (0..a.len())
        .filter(|&i| !processed[i])
        .map(|i| {
            let (mut pos, mut neg, mut zero) = (0usize, 0usize, 0usize);
            for r in rays {
                let v = dot(&a[i], &r.v);
                if v.is_positive() {
                    pos += 1;
                } else if v.is_negative() {
                    neg += 1;
                } else {
                    zero += 1;
                }
            }
            (pos * neg, std::cmp::Reverse(zero), i)
        })
        .min()
        .map(|(_, _, i)| i)
}

/// Fills `rays` by double description.
pub fn enumerate_rays(mut cone: ConeRep) -> Result<ConeRep, ConeError> {
    cone.rays = extreme_rays(&cone.ineq)?;
    Ok(cone)
}

/// Fills `scaled_rays`: each generator divided by its maximum on Δⁿ.
pub fn scale_generators(mut cone: ConeRep) -> Result<ConeRep, ConeError> {
    if cone.rays.is_empty() {
        return Err(ConeError::NoRays);
    }
    let opts = MaxOptions::default_for(cone.n);
    let scaled: Vec<Result<FloatPoly, ConeError>> = cone
        .rays
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            let p = cone.poly_of(r).to_float();
            let (max, _) = max_on_simplex(&p, opts);
            if max.is_finite() && max > 0.0 {
                Ok(p.scale(&(1.0 / max)))
            } else {
                Err(ConeError::NonPositiveMax { index, max })
            }
        })
        .collect();
    cone.scaled_rays = scaled.into_iter().collect::<Result<_, _>>()?;
    Ok(cone)
}

/// Inequalities, rays and scaled generators in one go.
pub fn build_cone(n: usize, k: u32, level: u32) -> Result<ConeRep, ConeError> {
    scale_generators(enumerate_rays(build_inequalities(n, k, level))?)
}

/// Whether `v` spans an extreme ray: feasible, nonzero, and its active rows
/// have rank `dim - 1`.
pub fn is_extreme(a: &[Vec<BigInt>], v: &[BigInt]) -> bool {
    let vals: Vec<BigInt> = a.iter().map(|r| dot(r, v)).collect();
    if vals.iter().any(Signed::is_negative) || v.iter().all(Zero::is_zero) {
        return false;
    }
    let active: Vec<Vec<BigInt>> = a.iter().zip(&vals).filter(|(_, x)| x.is_zero()).map(|(r, _)| r.clone()).collect();
    rank(&active) + 1 == v.len()
}
