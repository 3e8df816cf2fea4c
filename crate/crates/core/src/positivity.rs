//! Pólya certificates of strict positivity on Δⁿ and sampled non-negativity.
//!
//! A polynomial `p` of degree `<= k` is certified positive at level `N` when
//! every coefficient of `(x_1 + ... + x_{n+1})^N · p_H` is strictly positive,
//! where `p_H` is the degree-`k` homogenization. The scan multiplies by the
//! linear form one step at a time, so level `N + 1` costs one product.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::Signed;
use serde::Serialize;
use thiserror::Error;

use crate::polynomial::{exponents_of_degree, ExactPoly, MultiPoly, PolyError};
use crate::scalar::{rat, Rational, Scalar};
use crate::simplex::{barycentric_lattice, depth_for_size, quasi_uniform};

/// Default scan bound for `n <= 2`, `k <= 10`.
pub const DEFAULT_N_MAX: u32 = 50;
/// Size of the negativity pre-scan.
pub const PRESCAN_POINTS: usize = 10_000;
/// Size of the sampled non-negativity test.
pub const SAMPLED_POINTS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PositivityError {
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PolyaCertificate {
    CertifiedPositive { n: u32 },
    NegativeWitness { point: Vec<f64>, value: f64 },
    Indeterminate { n_max: u32 },
}

impl PolyaCertificate {
    pub fn is_certified(&self) -> bool {
        matches!(self, PolyaCertificate::CertifiedPositive { .. })
    }

    pub fn level(&self) -> Option<u32> {
        match self {
            PolyaCertificate::CertifiedPositive { n } => Some(*n),
            _ => None,
        }
    }
}

/// Deterministic probe set on Δⁿ: a barycentric lattice holding about a
/// fifth of the points, the rest from a low-discrepancy sequence. Cached.
pub fn probe_points(n: usize, count: usize) -> Arc<Vec<Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Vec<Vec<f64>>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&(n, count)) {
        return hit.clone();
    }
    let mut pts = barycentric_lattice(n, depth_for_size(n, (count / 5).max(n + 1)));
    let rest = count.saturating_sub(pts.len());
    pts.extend(quasi_uniform(n, rest));
    let pts = Arc::new(pts);
    cache.lock().unwrap().insert((n, count), pts.clone());
    pts
}

/// Every coefficient of the homogeneous `h` (degree `d`) is strictly positive,
/// with no monomial of degree `d` missing.
fn all_coefficients_positive(h: &ExactPoly, d: u32) -> bool {
    let full = exponents_of_degree(h.num_vars(), d).len();
    h.len() == full && h.terms().all(|(_, c)| c.is_positive())
}

/// Most negative probe point, kept only if `p < 0` there in exact arithmetic.
fn negativity_prescan(p: &ExactPoly) -> Option<(Vec<f64>, f64)> {
    let n = p.num_vars();
    let fp = p.to_float();
    let pts = probe_points(n, PRESCAN_POINTS);
    let mut worst: Option<(Vec<f64>, f64)> = None;
    for x in pts.iter() {
        let v = fp.eval_f64(x);
        if v < 0.0 && worst.as_ref().is_none_or(|(_, w)| v < *w) {
            worst = Some((x.clone(), v));
        }
    }
    let (x, _) = worst?;
    let exact: Vec<Rational> = x.iter().map(|v| Rational::from_float(*v).unwrap()).collect();
    let value = p.evaluate(&exact).ok()?;
    value.is_negative().then(|| (x, value.to_f64()))
}

/// Scans `N = 0..=n_max` for a Pólya certificate of strict positivity,
/// after a sampled search for a point where `p` is negative.
pub fn polya_certify(p: &ExactPoly, k: u32, n_max: u32) -> Result<PolyaCertificate, PositivityError> {
    let h = p.homogenize(k)?;
    if let Some((point, value)) = negativity_prescan(p) {
        return Ok(PolyaCertificate::NegativeWitness { point, value });
    }
    if p.is_zero() {
        return Ok(PolyaCertificate::Indeterminate { n_max });
    }
    let sum = ExactPoly::coordinate_sum(p.num_vars() + 1);
    let mut cur = h.into_poly();
    for level in 0..=n_max {
        if all_coefficients_positive(&cur, k + level) {
            return Ok(PolyaCertificate::CertifiedPositive { n: level });
        }
        if level < n_max {
            cur = &cur * &sum;
        }
    }
    Ok(PolyaCertificate::Indeterminate { n_max })
}

/// Re-expands `(Σx)^level · p_H` and checks strict positivity of every coefficient.
pub fn check_certificate(p: &ExactPoly, k: u32, level: u32) -> Result<bool, PositivityError> {
    let h = p.homogenize(k)?.times_sum(level);
    Ok(all_coefficients_positive(h.poly(), k + level))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonnegMode {
    /// Pólya certificates of `p + ε` for `ε = 10⁻¹, 10⁻², …` down to `tol`.
    Certified { n_max: u32 },
    /// Minimum over [`SAMPLED_POINTS`] deterministic probe points.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonnegEvidence {
    Sampled { min_value: f64, argmin: Vec<f64> },
    Ladder { levels: Vec<(f64, PolyaCertificate)> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonnegVerdict {
    pub nonneg: bool,
    /// A point where the polynomial is below `-tol`, when one was found.
    pub witness: Option<Vec<f64>>,
    pub evidence: NonnegEvidence,
}

pub fn nonneg_on_simplex<C: Scalar>(p: &MultiPoly<C>, mode: NonnegMode, tol: f64) -> Result<NonnegVerdict, PositivityError> {
    match mode {
        NonnegMode::Sampled => Ok(sampled_nonneg(p, tol)),
        NonnegMode::Certified { n_max } => {
            let exact = p.to_exact()?;
            let k = exact.degree();
            let mut levels = Vec::new();
            let mut eps = rat(1, 10);
            while eps.to_f64() >= tol {
                let shifted = &exact + &ExactPoly::constant(exact.num_vars(), eps.clone());
                let cert = polya_certify(&shifted, k, n_max)?;
                let ok = cert.is_certified();
                let witness = match &cert {
                    PolyaCertificate::NegativeWitness { point, .. } => Some(point.clone()),
                    _ => None,
                };
                levels.push((eps.to_f64(), cert));
                if !ok {
                    return Ok(NonnegVerdict { nonneg: false, witness, evidence: NonnegEvidence::Ladder { levels } });
                }
                eps = eps / Rational::from_integer(10.into());
            }
            Ok(NonnegVerdict { nonneg: true, witness: None, evidence: NonnegEvidence::Ladder { levels } })
        }
    }
}

fn sampled_nonneg<C: Scalar>(p: &MultiPoly<C>, tol: f64) -> NonnegVerdict {
    let pts = probe_points(p.num_vars(), SAMPLED_POINTS);
    let fp = p.to_float();
    let (mut min_value, mut argmin) = (f64::INFINITY, Vec::new());
    for x in pts.iter() {
        let v = fp.eval_f64(x);
        if v < min_value {
            min_value = v;
            argmin = x.clone();
        }
    }
    let nonneg = min_value >= -tol;
    NonnegVerdict {
        nonneg,
        witness: (!nonneg).then(|| argmin.clone()),
        evidence: NonnegEvidence::Sampled { min_value, argmin },
    }
}

/// Strictly positive everywhere on the probe set; used to double-check certificates.
pub fn positive_on_probes(p: &ExactPoly, count: usize) -> bool {
    let fp = p.to_float();
    probe_points(p.num_vars(), count).iter().all(|x| fp.eval_f64(x) > 0.0)
}
