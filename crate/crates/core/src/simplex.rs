//! The standard simplex in projected coordinates: `x_i >= 0`, `Σ x_i <= 1`,
//! with `x_{n+1} = 1 - Σ x_i` implicit.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::maps::SimplexMap;
use crate::polynomial::{FloatPoly, MultiPoly, PolyError};
use crate::scalar::{Rational, Scalar};

/// Default membership slack.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Default face-classification slack.
pub const FACE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("point {coords:?} lies outside the simplex by more than {tol}")]
    Outside { coords: Vec<f64>, tol: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint {
    pub coords: Vec<f64>,
    pub tol: f64,
}

impl SimplexPoint {
    pub fn new(coords: Vec<f64>, tol: f64) -> Result<Self, SimplexError> {
        if !contains(&coords, tol) {
            return Err(SimplexError::Outside { coords, tol });
        }
        Ok(SimplexPoint { coords, tol })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The implicit last barycentric coordinate `1 - Σ x_i`.
    pub fn slack(&self) -> f64 {
        1.0 - self.coords.iter().sum::<f64>()
    }
}

pub fn contains(x: &[f64], tol: f64) -> bool {
    x.iter().all(|v| v.is_finite() && *v >= -tol) && x.iter().sum::<f64>() <= 1.0 + tol
}

/// Facets active at a point. Index `i <= n` is the facet `x_i = 0`, index
/// `n + 1` is `Σ x = 1`. Indices are one-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FaceId {
    pub zero_set: BTreeSet<usize>,
}

impl FaceId {
    pub fn is_interior(&self) -> bool {
        self.zero_set.is_empty()
    }

    pub fn is_vertex(&self, n: usize) -> bool {
        self.zero_set.len() == n
    }
}

pub fn face_of(x: &SimplexPoint, tol: f64) -> Result<FaceId, SimplexError> {
    if !contains(&x.coords, tol) {
        return Err(SimplexError::Outside { coords: x.coords.clone(), tol });
    }
    let n = x.dim();
    let mut zero_set: BTreeSet<usize> = x
        .coords
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= tol)
        .map(|(i, _)| i + 1)
        .collect();
    if x.slack() <= tol {
        zero_set.insert(n + 1);
    }
    Ok(FaceId { zero_set })
}

fn factorial(k: u32) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// `∫_{Δⁿ} x^α dx = (∏ α_i!) / (|α| + n)!`.
pub fn monomial_integral(alpha: &[u32]) -> Rational {
    let n = alpha.len() as u32;
    let num: BigUint = alpha.iter().map(|&a| factorial(a)).product();
    let den = factorial(alpha.iter().sum::<u32>() + n);
    Rational::new(num.into(), den.into())
}

/// `∫_{Δⁿ} p dx`, exact in exact mode.
pub fn integrate<C: Scalar>(p: &MultiPoly<C>) -> C {
    p.terms().fold(C::zero(), |acc, (e, c)| {
        acc + c.clone() * C::from_rational(&monomial_integral(e.as_slice()))
    })
}

/// Squared L² distance `Σ_i ∫ (P_i - Q_i)²` between two families of
/// defining polynomials.
pub fn l2_distance_sq_polys<C: Scalar>(ps: &[MultiPoly<C>], qs: &[MultiPoly<C>]) -> Result<C, PolyError> {
    if ps.len() != qs.len() {
        return Err(PolyError::DimensionMismatch { expected: ps.len(), got: qs.len() });
    }
    let mut acc = C::zero();
    for (p, q) in ps.iter().zip(qs) {
        if p.num_vars() != q.num_vars() {
            return Err(PolyError::DimensionMismatch { expected: p.num_vars(), got: q.num_vars() });
        }
        let d = p - q;
        acc = acc + integrate(&(&d * &d));
    }
    Ok(acc)
}

/// L² distance between two maps with respect to Lebesgue measure on Δⁿ.
pub fn l2_distance<C: Scalar>(f: &SimplexMap<C>, g: &SimplexMap<C>) -> Result<f64, PolyError> {
    if f.n() != g.n() {
        return Err(PolyError::DimensionMismatch { expected: f.n(), got: g.n() });
    }
    let sq = l2_distance_sq_polys(f.polys(), g.polys())?;
    Ok(sq.to_f64().max(0.0).sqrt())
}

/// I.i.d. uniform points on Δⁿ by normalized exponential spacings.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<SimplexPoint> {
    (0..count)
        .map(|_| SimplexPoint { coords: uniform_coords(n, rng), tol: MEMBERSHIP_TOL })
        .collect()
}

pub(crate) fn uniform_coords<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e[..n].iter().map(|v| v / total).collect()
}

/// Barycentric lattice `{ a / depth : a_i >= 0, Σ a_i <= depth }`.
pub fn barycentric_lattice(n: usize, depth: usize) -> Vec<Vec<f64>> {
    fn rec(pos: usize, left: usize, depth: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur[pos] = a as f64 / depth as f64;
            rec(pos + 1, left - a, depth, cur, out);
        }
    }
    let mut out = Vec::new();
    if depth == 0 {
        out.push(vec![0.0; n]);
        return out;
    }
    rec(0, depth, depth, &mut vec![0.0; n], &mut out);
    out
}

/// Number of points of [`barycentric_lattice`].
pub fn lattice_size(n: usize, depth: usize) -> usize {
    // C(depth + n, n)
    let mut c: u128 = 1;
    for i in 0..n as u128 {
        c = c * (depth as u128 + n as u128 - i) / (i + 1);
    }
    c.to_usize().unwrap_or(usize::MAX)
}

/// Lattice depth giving roughly `target` points.
pub fn depth_for_size(n: usize, target: usize) -> usize {
    let mut d = 1;
    while lattice_size(n, d + 1) <= target {
        d += 1;
    }
    d
}

/// Deterministic low-discrepancy points on Δⁿ: a Kronecker sequence in the
/// unit cube pushed through the sorted-spacings map.
pub fn quasi_uniform(n: usize, count: usize) -> Vec<Vec<f64>> {
    if n == 0 {
        return vec![vec![]; count];
    }
    // generalized golden ratio for dimension n
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (n as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=n).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    (0..count)
        .map(|i| {
            let mut u: Vec<f64> = alphas.iter().map(|a| (0.5 + a * (i as f64 + 1.0)).fract()).collect();
            u.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev = 0.0;
            u.iter()
                .map(|&v| {
                    let d = v - prev;
                    prev = v;
                    d
                })
                .collect()
        })
        .collect()
}

/// Euclidean projection onto `{x >= 0, Σx <= 1}`.
pub fn project(x: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= 1.0 {
        return clamped;
    }
    // projection onto the face Σx = 1, x >= 0
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct MaxOptions {
    pub grid_depth: usize,
    pub refine_iters: usize,
}

impl MaxOptions {
    /// About 10³ lattice points on Δ¹, 10⁴ on Δ² and higher, 200 refinement steps.
    pub fn default_for(n: usize) -> Self {
        let target = if n <= 1 { 1_000 } else { 10_000 };
        MaxOptions { grid_depth: depth_for_size(n, target).max(1), refine_iters: 200 }
    }
}

/// Global maximum of `p` on Δⁿ: lattice scan, then Nelder–Mead (with
/// projection onto the simplex) from the best lattice point and the best
/// boundary lattice point.
pub fn max_on_simplex(p: &FloatPoly, opts: MaxOptions) -> (f64, Vec<f64>) {
    let n = p.num_vars();
    if n == 0 {
        return (p.eval_f64(&[]), vec![]);
    }
    let grid = barycentric_lattice(n, opts.grid_depth);
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut best_boundary = (f64::NEG_INFINITY, vec![0.0; n]);
    let tol = 0.5 / opts.grid_depth as f64;
    for x in grid {
        let v = p.eval_f64(&x);
        let on_boundary = x.iter().any(|c| *c < tol) || x.iter().sum::<f64>() > 1.0 - tol;
        if v > best.0 {
            best = (v, x.clone());
        }
        if on_boundary && v > best_boundary.0 {
            best_boundary = (v, x);
        }
    }
    let step = 1.0 / opts.grid_depth as f64;
    let f = |x: &[f64]| p.eval_f64(&project(x));
    let mut result = best.clone();
    for seed in [&best.1, &best_boundary.1] {
        let x = nelder_mead_max(&f, seed, step, opts.refine_iters);
        let x = project(&x);
        let v = p.eval_f64(&x);
        if v > result.0 {
            result = (v, x);
        }
    }
    result
}

/// Maximizes `f` by Nelder–Mead from `x0` with initial edge `step`.
fn nelder_mead_max(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((-f(x0), x0.to_vec()));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i] + step <= 1.0 { step } else { -step };
        simplex.push((-f(&x), x));
    }
    let point = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect() };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[n].0 - simplex[0].0;
        if spread.abs() < 1e-15 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (_, x) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = point(&centroid, &worst.1, -1.0);
        let fr = -f(&reflected);
        if fr < simplex[0].0 {
            let expanded = point(&centroid, &worst.1, -2.0);
            let fe = -f(&expanded);
            simplex[n] = if fe < fr { (fe, expanded) } else { (fr, reflected) };
        } else if fr < simplex[n - 1].0 {
            simplex[n] = (fr, reflected);
        } else {
            let contracted = point(&centroid, &worst.1, 0.5);
            let fc = -f(&contracted);
            if fc < worst.0 {
                simplex[n] = (fc, contracted);
            } else {
                let best = simplex[0].1.clone();
                for s in simplex.iter_mut().skip(1) {
                    let x = point(&best, &s.1, 0.5);
                    *s = (-f(&x), x);
                }
            }
        }
    }
    simplex
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(_, x)| x)
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{ExactPoly, monomial_basis};
    use crate::scalar::{rat, rational_to_f64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> SimplexPoint {
        SimplexPoint::new(c.to_vec(), MEMBERSHIP_TOL).unwrap()
    }

    #[test]
    fn face_examples() {
        let f = face_of(&pt(&[0.0, 0.0]), 1e-12).unwrap();
        assert_eq!(f.zero_set, BTreeSet::from([1, 2]));
        assert!(f.is_vertex(2));
        assert!(face_of(&pt(&[1.0 / 3.0, 1.0 / 3.0]), 1e-12).unwrap().is_interior());
        assert_eq!(face_of(&pt(&[0.5, 0.5]), 1e-12).unwrap().zero_set, BTreeSet::from([3]));
        let outside = SimplexPoint { coords: vec![0.7, 0.7], tol: 0.0 };
        assert!(matches!(face_of(&outside, 1e-9), Err(SimplexError::Outside { .. })));
        assert!(SimplexPoint::new(vec![-0.1], 1e-9).is_err());
    }

    #[test]
    fn monomial_integral_examples() {
        assert_eq!(monomial_integral(&[0]), rat(1, 1));
        assert_eq!(monomial_integral(&[1, 1]), rat(1, 24));
        assert_eq!(monomial_integral(&[2, 0]), rat(1, 12));
        assert_eq!(monomial_integral(&[0, 0]), rat(1, 2));
    }

    #[test]
    fn monomial_integral_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples: Vec<Vec<Vec<f64>>> = (1..=3)
            .map(|n| (0..1_000_000).map(|_| uniform_coords(n, &mut rng)).collect())
            .collect();
        for t in 0..20 {
            let n = 1 + t % 3;
            let mut alpha = vec![0u32; n];
            let budget = rng.random_range(0..=8u32);
            for _ in 0..budget {
                alpha[rng.random_range(0..n)] += 1;
            }
            let vol = 1.0 / (1..=n).map(|k| k as f64).product::<f64>();
            let vals: Vec<f64> = samples[n - 1]
                .iter()
                .map(|x| x.iter().zip(&alpha).map(|(v, &a)| v.powi(a as i32)).product::<f64>())
                .collect();
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let se = (var / m).sqrt() * vol;
            let exact = rational_to_f64(&monomial_integral(&alpha));
            assert!((mean * vol - exact).abs() <= 4.0 * se + 1e-15, "alpha {alpha:?}: {} vs {exact}", mean * vol);
        }
    }

    #[test]
    fn l2_examples() {
        let names = ["x", "y"];
        let id = SimplexMap::new(2, 1, vec![ExactPoly::parse("x", &names).unwrap(), ExactPoly::parse("y", &names).unwrap()], "id").unwrap();
        let zero = SimplexMap::new(2, 1, vec![ExactPoly::zero(2), ExactPoly::zero(2)], "zero").unwrap();
        assert_eq!(l2_distance(&id, &id).unwrap(), 0.0);
        assert!((l2_distance(&id, &zero).unwrap() - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        let logistic = SimplexMap::new(1, 2, vec![ExactPoly::parse("4*x*(1-x)", &["x"]).unwrap()], "f2").unwrap();
        let ident = SimplexMap::new(1, 2, vec![ExactPoly::parse("x", &["x"]).unwrap()], "id").unwrap();
        let sq = l2_distance_sq_polys(logistic.polys(), ident.polys()).unwrap();
        assert_eq!(sq, rat(1, 5));
        assert!((l2_distance(&logistic, &ident).unwrap() - 0.2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = monomial_basis(2, 2);
        let rand_map = |rng: &mut ChaCha8Rng| {
            let polys: Vec<FloatPoly> = (0..2)
                .map(|_| FloatPoly::from_terms(2, basis.iter().map(|e| (e.0.clone(), rng.random_range(-1.0..1.0)))).unwrap())
                .collect();
            SimplexMap::new_unchecked(2, 2, polys, "rand")
        };
        for _ in 0..50 {
            let (f, g, h) = (rand_map(&mut rng), rand_map(&mut rng), rand_map(&mut rng));
            let fg = l2_distance(&f, &g).unwrap();
            assert_eq!(fg, l2_distance(&g, &f).unwrap());
            assert!(l2_distance(&f, &h).unwrap() <= fg + l2_distance(&g, &h).unwrap() + 1e-12);
        }
    }

    #[test]
    fn uniform_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_uniform(2, 0, &mut rng).is_empty());
        let pts = sample_uniform(1, 100_000, &mut rng);
        let mean = pts.iter().map(|p| p.coords[0]).sum::<f64>() / pts.len() as f64;
        let sigma = (1.0f64 / 12.0 / pts.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma);
        let pts = sample_uniform(2, 100_000, &mut rng);
        assert!(pts.iter().all(|p| p.coords.iter().sum::<f64>() <= 1.0 && p.coords.iter().all(|c| *c >= 0.0)));
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(barycentric_lattice(2, 140).len(), lattice_size(2, 140));
        assert_eq!(lattice_size(2, 140), 10011);
        assert_eq!(MaxOptions::default_for(1).grid_depth, 999);
        assert!(quasi_uniform(3, 100).iter().all(|x| contains(x, 1e-12)));
    }

    #[test]
    fn projection_lands_in_simplex() {
        assert_eq!(project(&[0.2, 0.3]), vec![0.2, 0.3]);
        assert_eq!(project(&[-1.0, 0.3]), vec![0.0, 0.3]);
        let p = project(&[1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn max_examples() {
        let p = ExactPoly::parse("4*x*(1-x)", &["x"]).unwrap().to_float();
        let (v, x) = max_on_simplex(&p, MaxOptions::default_for(1));
        assert!((v - 1.0).abs() < 1e-12 && (x[0] - 0.5).abs() < 1e-6);
        let c = FloatPoly::constant(2, 0.37);
        assert_eq!(max_on_simplex(&c, MaxOptions::default_for(2)).0, 0.37);
        let s = ExactPoly::parse("x+y", &["x", "y"]).unwrap().to_float();
        let (v, x) = max_on_simplex(&s, MaxOptions::default_for(2));
        assert!((v - 1.0).abs() < 1e-12 && (x[0] + x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_dominates_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let basis = monomial_basis(2, 3);
        for _ in 0..10 {
            let p = FloatPoly::from_terms(2, basis.iter().map(|e| (e.0.clone(), rng.random_range(-2.0..2.0)))).unwrap();
            let (v, _) = max_on_simplex(&p, MaxOptions::default_for(2));
            let sampled = sample_uniform(2, 100_000, &mut rng)
                .iter()
                .map(|x| p.eval_f64(&x.coords))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= sampled - 1e-12, "{v} < {sampled}");
        }
    }
}
