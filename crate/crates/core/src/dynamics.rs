//! Orbits of simplex maps: fixed points and their spectra, cycle detection,
//! deformation scans, fixation times and the Chebyshev invariant measure.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::folding::chebyshev;
use crate::maps::{clamp_into_simplex, SimplexMap};
use crate::newton::{dedup_points, inf_norm, NewtonOptions, System};
use crate::polynomial::{FloatPoly, MultiPoly};
use crate::scalar::Scalar;
use crate::simplex::{barycentric_lattice, contains, depth_for_size, l2_distance, sample_uniform, MEMBERSHIP_TOL};

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("orbit left the simplex at step {step}: {point:?}")]
    Escaped { step: usize, point: Vec<f64> },
    #[error("maps differ in shape")]
    Shape,
}

/// A map lowered to flat term lists for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledMap {
    n: usize,
    degree: usize,
    polys: Vec<Vec<(f64, Vec<u32>)>>,
}

impl CompiledMap {
    pub fn new<C: Scalar>(f: &SimplexMap<C>) -> Self {
        let polys = f
            .polys()
            .iter()
            .map(|p| p.to_float().terms().map(|(e, c)| (*c, e.as_slice().to_vec())).collect())
            .collect();
        CompiledMap { n: f.n(), degree: f.degree() as usize, polys }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw image, without clamping.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let mut pows = [[1.0f64; 16]; 4];
        let small = self.n <= 4 && self.degree < 16;
        if small {
            for (i, &xi) in x.iter().enumerate() {
                for d in 1..=self.degree {
                    pows[i][d] = pows[i][d - 1] * xi;
                }
            }
        }
        for (o, terms) in out.iter_mut().zip(&self.polys) {
            let mut s = 0.0;
            for (c, e) in terms {
                let mut t = *c;
                for (i, &a) in e.iter().enumerate() {
                    if a > 0 {
                        t *= if small { pows[i][a as usize] } else { x[i].powi(a as i32) };
                    }
                }
                s += t;
            }
            *o = s;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.eval_into(x, &mut out);
        out
    }

    /// One clamped step (see [`clamp_into_simplex`]).
    pub fn step(&self, x: &[f64], tol: f64) -> Option<Vec<f64>> {
        clamp_into_simplex(&self.eval(x), tol).map(|(y, _)| y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Attracting,
    Repelling,
    Saddle,
    Marginal,
}

pub const MARGINAL_BAND: f64 = 1e-9;

pub fn classify_spectrum(eigs: &[C64]) -> Stability {
    let mods: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    if mods.iter().any(|m| (m - 1.0).abs() <= MARGINAL_BAND) {
        Stability::Marginal
    } else if mods.iter().all(|&m| m < 1.0) {
        Stability::Attracting
    } else if mods.iter().all(|&m| m > 1.0) {
        Stability::Repelling
    } else {
        Stability::Saddle
    }
}

/// Eigenvalues from the characteristic polynomial (closed form for n <= 3),
/// falling back to nalgebra's Schur decomposition for larger matrices.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    let n = m.nrows();
    match n {
        0 => Vec::new(),
        1 => vec![C64::new(m[(0, 0)], 0.0)],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = C64::new(tr * tr / 4.0 - det, 0.0).sqrt();
            vec![C64::new(tr / 2.0, 0.0) + disc, C64::new(tr / 2.0, 0.0) - disc]
        }
        3 => {
            // λ³ - c2 λ² + c1 λ - c0
            let c2 = m.trace();
            let c1 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
                + m[(1, 1)] * m[(2, 2)]
                - m[(1, 2)] * m[(2, 1)];
            let c0 = m.determinant();
            cubic_roots(-c2, c1, -c0)
        }
        _ => m.complex_eigenvalues().iter().copied().collect(),
    }
}

/// Roots of `z³ + a z² + b z + c` by Cardano, each polished by Newton.
fn cubic_roots(a: f64, b: f64, c: f64) -> Vec<C64> {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = C64::new(q * q / 4.0 + p * p * p / 27.0, 0.0).sqrt();
    let mut u3 = C64::new(-q / 2.0, 0.0) + disc;
    if u3.norm() < 1e-300 {
        u3 = C64::new(-q / 2.0, 0.0) - disc;
    }
    let u = u3.powf(1.0 / 3.0);
    let omega = C64::new(-0.5, 3f64.sqrt() / 2.0);
    let f = |z: C64| ((z + a) * z + b) * z + c;
    let df = |z: C64| (3.0 * z + 2.0 * a) * z + b;
    (0..3)
        .map(|k| {
            let uk = u * omega.powu(k);
            let t = if uk.norm() < 1e-300 { C64::new(0.0, 0.0) } else { uk - p / (3.0 * uk) };
            let mut z = t - a / 3.0;
            for _ in 0..3 {
                let d = df(z);
                if d.norm() < 1e-300 {
                    break;
                }
                let next = z - f(z) / d;
                if f(next).norm() >= f(z).norm() {
                    break;
                }
                z = next;
            }
            z
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPoint {
    pub x: Vec<f64>,
    /// `‖f(x) - x‖∞`.
    pub residual: f64,
    pub eigenvalues: Vec<(f64, f64)>,
    pub stability: Stability,
}

impl FixedPoint {
    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().map(|(re, im)| re.hypot(*im)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    /// Every seed was already a fixed point (e.g. the identity map).
    pub all_fixed: bool,
}

impl FixedPointReport {
    pub fn count(&self, s: Stability) -> usize {
        self.points.iter().filter(|p| p.stability == s).count()
    }

    /// Smallest eigenvalue modulus over all fixed points.
    pub fn min_abs_eigenvalue(&self) -> Option<f64> {
        self.points.iter().map(FixedPoint::min_abs_eigenvalue).reduce(f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointOptions {
    pub lattice_points: usize,
    pub random_points: usize,
    pub rng_seed: u64,
    pub dedup_tol: f64,
    pub residual: f64,
    pub outside_tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            lattice_points: 2000,
            random_points: 1000,
            rng_seed: 0,
            dedup_tol: 1e-8,
            residual: 1e-12,
            outside_tol: 1e-10,
        }
    }
}

/// Multistart Newton on `f(x) - x = 0` from a lattice, random points and the
/// vertices; each distinct root in the simplex is classified by the
/// spectrum of the Jacobian of `f`.
pub fn find_fixed_points<C: Scalar>(f: &SimplexMap<C>, opts: &FixedPointOptions) -> FixedPointReport {
    let n = f.n();
    let g: Vec<FloatPoly> = f
        .polys()
        .iter()
        .enumerate()
        .map(|(i, p)| &p.to_float() - &MultiPoly::var(n, i))
        .collect();
    let system = System::new(g);
    let maps = System::new(f.polys().iter().map(MultiPoly::to_float).collect());
    let mut seeds = barycentric_lattice(n, depth_for_size(n, opts.lattice_points));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    seeds.extend(sample_uniform(n, opts.random_points, &mut rng).into_iter().map(|p| p.coords));
    seeds.push(vec![0.0; n]);
    seeds.extend((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()));
    let zero = vec![0.0; n];
    let newton = NewtonOptions { accept: opts.residual, ..NewtonOptions::default() };
    let roots: Vec<Option<crate::newton::Root>> = seeds.par_iter().map(|s| system.solve(&zero, s, &newton)).collect();
    let all_fixed = roots.iter().all(|r| r.as_ref().is_some_and(|r| r.iterations == 0));
    let found = roots.into_iter().flatten().map(|r| r.x).filter(|x| contains(x, opts.outside_tol));
    let distinct = if all_fixed { Vec::new() } else { dedup_points(found, opts.dedup_tol) };
    let mut points: Vec<FixedPoint> = distinct
        .into_iter()
        .map(|x| {
            let residual = inf_norm(&system.residual(&x, &zero));
            let eigs = eigenvalues(&maps.jacobian_at(&x));
            FixedPoint {
                stability: classify_spectrum(&eigs),
                eigenvalues: eigs.iter().map(|z| (z.re, z.im)).collect(),
                residual,
                x,
            }
        })
        .collect();
    points.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(std::cmp::Ordering::Equal));
    FixedPointReport { points, all_fixed }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitKind {
    ConvergedFixed,
    Periodic { period: usize },
    NonperiodicWithinWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitVerdict {
    pub kind: OrbitKind,
    pub iterations: usize,
    /// State at which the verdict was reached.
    pub state: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitOptions {
    pub burn_in: usize,
    pub window: usize,
    /// ℓ∞ distance below which two states are identified.
    pub tol: f64,
    pub clamp_tol: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions { burn_in: 1000, window: 10_000, tol: 1e-10, clamp_tol: MEMBERSHIP_TOL }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Burn-in, then Brent cycle detection over at most `window` steps.
pub fn classify_orbit(f: &CompiledMap, x0: &[f64], opts: &OrbitOptions) -> Result<OrbitVerdict, DynamicsError> {
    let step = |x: &[f64], k: usize| f.step(x, opts.clamp_tol).ok_or_else(|| DynamicsError::Escaped { step: k, point: x.to_vec() });
    let mut x = x0.to_vec();
    for k in 0..opts.burn_in {
        x = step(&x, k)?;
    }
    let mut tortoise = x.clone();
    let mut hare = step(&x, opts.burn_in)?;
    let (mut power, mut lam) = (1usize, 1usize);
    let mut used = 1;
    while dist(&tortoise, &hare) >= opts.tol {
        if used >= opts.window {
            return Ok(OrbitVerdict { kind: OrbitKind::NonperiodicWithinWindow, iterations: opts.burn_in + used, state: hare });
        }
        if power == lam {
            tortoise = hare.clone();
            power *= 2;
            lam = 0;
        }
        hare = step(&hare, opts.burn_in + used)?;
        lam += 1;
        used += 1;
    }
    // smallest divisor of lam that already closes the cycle
    let mut orbit = vec![hare.clone()];
    for k in 0..lam {
        let next = step(orbit.last().expect("nonempty"), opts.burn_in + used + k)?;
        orbit.push(next);
    }
    let period = (1..=lam).find(|p| lam % p == 0 && dist(&orbit[0], &orbit[*p]) < opts.tol).unwrap_or(lam);
    let kind = if period == 1 { OrbitKind::ConvergedFixed } else { OrbitKind::Periodic { period } };
    Ok(OrbitVerdict { kind, iterations: opts.burn_in + used, state: hare })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every trial orbit stays non-periodic within the window.
    Green,
    /// Some trial converged to a fixed point or a short periodic orbit.
    Red,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub index: usize,
    pub l2_distance: f64,
    pub min_abs_eig: Option<f64>,
    /// Smallest eigenvalue modulus at each fixed point.
    pub per_point_min: Vec<f64>,
    pub verdict: Option<Verdict>,
    pub n_fixed_points: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub trials: usize,
    pub orbit: OrbitOptions,
    pub fixed: FixedPointOptions,
    pub master_seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { trials: 20, orbit: OrbitOptions::default(), fixed: FixedPointOptions::default(), master_seed: 0 }
    }
}

/// One row of a deformation scan; trial starting points come from the
/// stream `master_seed ^ index`.
pub fn scan_row<C: Scalar>(f_star: &SimplexMap<C>, g: &SimplexMap<C>, index: usize, opts: &ScanOptions) -> ScanRow {
    let mut row = ScanRow {
        index,
        l2_distance: f64::NAN,
        min_abs_eig: None,
        per_point_min: Vec::new(),
        verdict: None,
        n_fixed_points: 0,
        error: None,
    };
    if f_star.n() != g.n() {
        row.error = Some(DynamicsError::Shape.to_string());
        return row;
    }
    match l2_distance(f_star, g) {
        Ok(d) => row.l2_distance = d,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    let fixed = find_fixed_points(g, &opts.fixed);
    row.n_fixed_points = fixed.points.len();
    row.per_point_min = fixed.points.iter().map(FixedPoint::min_abs_eigenvalue).collect();
    row.min_abs_eig = fixed.min_abs_eigenvalue();
    let compiled = CompiledMap::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.master_seed ^ index as u64);
    let mut green = true;
    for x0 in sample_uniform(g.n(), opts.trials, &mut rng) {
        match classify_orbit(&compiled, &x0.coords, &opts.orbit) {
            Ok(v) => {
                if v.kind != OrbitKind::NonperiodicWithinWindow {
                    green = false;
                    break;
                }
            }
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
    row.verdict = Some(if green { Verdict::Green } else { Verdict::Red });
    row
}

/// Rows for every sample, in index order, computed in parallel.
pub fn deform_scan<C: Scalar>(f_star: &SimplexMap<C>, samples: &[SimplexMap<C>], opts: &ScanOptions) -> Vec<ScanRow> {
    samples.par_iter().enumerate().map(|(i, g)| scan_row(f_star, g, i, opts)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixationRecord {
    pub x0: Vec<f64>,
    /// 1-based vertex index: `i <= n` is the unit vector `e_i`, `n + 1` the origin.
    pub vertex: Option<usize>,
    pub time: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub count: usize,
    pub low_sample: bool,
}

/// Fewer absorbed runs than this mark a fit as low-sample.
pub const LOW_SAMPLE: usize = 100;

/// Maximum-likelihood log-normal fit: mean and population standard
/// deviation of `ln t` over positive times.
pub fn fit_lognormal(times: &[usize]) -> Option<LogNormalFit> {
    let logs: Vec<f64> = times.iter().filter(|&&t| t > 0).map(|&t| (t as f64).ln()).collect();
    if logs.is_empty() {
        return None;
    }
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
    Some(LogNormalFit { mu, sigma: var.sqrt(), count: logs.len(), low_sample: logs.len() < LOW_SAMPLE })
}

#[derive(Clone, Debug)]
pub struct FixationOptions {
    /// Starting points are uniform in `(0, side)^n`.
    pub side: f64,
    pub count: usize,
    pub absorb_tol: f64,
    pub max_iters: usize,
    pub master_seed: u64,
}

impl Default for FixationOptions {
    fn default() -> Self {
        FixationOptions { side: 0.01, count: 10_000, absorb_tol: 1e-9, max_iters: 100_000, master_seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixationResult {
    pub records: Vec<FixationRecord>,
    pub unabsorbed: usize,
    pub fit: Option<LogNormalFit>,
}

fn nearest_vertex(x: &[f64], tol: f64) -> Option<usize> {
    let n = x.len();
    let origin = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if origin <= tol {
        return Some(n + 1);
    }
    (0..n).find(|&i| {
        let d2: f64 = x.iter().enumerate().map(|(j, v)| if i == j { (v - 1.0).powi(2) } else { v * v }).sum();
        d2.sqrt() <= tol
    })
    .map(|i| i + 1)
}

/// Iterations until the orbit of `x0` is within `absorb_tol` of a vertex.
pub fn fixation_time(f: &CompiledMap, x0: &[f64], absorb_tol: f64, max_iters: usize) -> FixationRecord {
    let mut x = x0.to_vec();
    for t in 0..=max_iters {
        if let Some(v) = nearest_vertex(&x, absorb_tol) {
            return FixationRecord { x0: x0.to_vec(), vertex: Some(v), time: t };
        }
        if t == max_iters {
            break;
        }
        match f.step(&x, MEMBERSHIP_TOL) {
            Some(y) => x = y,
            None => break,
        }
    }
    FixationRecord { x0: x0.to_vec(), vertex: None, time: max_iters }
}

/// Fixation times from `count` uniform starts in the corner square
/// `(0, side)^n`, with a log-normal fit of the absorbed runs.
pub fn fixation_experiment<C: Scalar>(f: &SimplexMap<C>, opts: &FixationOptions) -> FixationResult {
    let compiled = CompiledMap::new(f);
    let n = f.n();
    let starts: Vec<Vec<f64>> = (0..opts.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.master_seed ^ i as u64);
            (0..n).map(|_| opts.side * (1.0 - rng.random::<f64>())).collect()
        })
        .collect();
    let records: Vec<FixationRecord> =
        starts.par_iter().map(|x0| fixation_time(&compiled, x0, opts.absorb_tol, opts.max_iters)).collect();
    let absorbed: Vec<usize> = records.iter().filter(|r| r.vertex.is_some()).map(|r| r.time).collect();
    FixationResult { unabsorbed: records.len() - absorbed.len(), fit: fit_lognormal(&absorbed), records }
}

/// CDF of the arcsine law `dx / (π √(x(1-x)))`.
pub fn arcsine_cdf(x: f64) -> f64 {
    2.0 / PI * x.clamp(0.0, 1.0).sqrt().asin()
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS statistic of the push-forward of the arcsine law under `cheb:d`.
pub fn invariant_measure_test<R: Rng + ?Sized>(d: u32, samples: usize, rng: &mut R) -> f64 {
    let f = CompiledMap::new(&chebyshev(d));
    let pushed: Vec<f64> = (0..samples)
        .map(|_| {
            let u: f64 = rng.random();
            let x = (1.0 - (PI * u).cos()) / 2.0;
            f.eval(&[x])[0]
        })
        .collect();
    ks_statistic(pushed, arcsine_cdf)
}
