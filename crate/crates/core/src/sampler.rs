//! Random stochastic maps built from a scaled cone: Dirichlet mixtures of
//! generators, interior maps, and ε-deformations of a reference map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::cone::ConeRep;
use crate::maps::{convex_combine, membership_check, MapError, MembershipMode, SimplexMap};
use crate::polynomial::{FloatPoly, MultiPoly, PolyError};
use crate::simplex::{l2_distance, max_on_simplex, MaxOptions};

/// Generator used for every draw.
pub type SamplerRng = ChaCha20Rng;

pub fn sampler_rng(seed: u64) -> SamplerRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const DEFAULT_RETRIES: usize = 16;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("no member map after {0} attempts")]
    Retries(usize),
    #[error("reference map has shape (n={0}, k={1}), cone has (n={2}, k={3})")]
    Shape(usize, u32, usize, u32),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub cone: ConeRep,
    pub dirichlet_alpha: f64,
    pub master_seed: u64,
    pub epsilon: f64,
    pub retries: usize,
}

impl SamplerConfig {
    pub fn new(cone: ConeRep, master_seed: u64, epsilon: f64) -> Result<Self, SamplerError> {
        let cfg = SamplerConfig { cone, dirichlet_alpha: DEFAULT_ALPHA, master_seed, epsilon, retries: DEFAULT_RETRIES };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(SamplerError::Config(format!("alpha must be positive, got {}", self.dirichlet_alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(SamplerError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.cone.scaled_rays.is_empty() {
            return Err(SamplerError::Config("cone has no scaled generators".into()));
        }
        Ok(())
    }

    /// Stream for draw `index`.
    pub fn rng_for(&self, index: usize) -> SamplerRng {
        sampler_rng(self.master_seed ^ index as u64)
    }
}

/// Dirichlet(α, …, α) weights of dimension `dim`.
///
/// Gamma variates are drawn in log space, `ln G(α) = ln G(α + 1) + ln U / α`,
/// since for α ≈ 10⁻³ the variates themselves underflow to zero.
pub fn dirichlet<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            gamma.sample(rng).ln() + u.ln() / alpha
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// `radial · Σ w_j g_j` for the scaled generators `g_j`; the last Dirichlet
/// weight belongs to the zero polynomial.
pub fn combine(cone: &ConeRep, weights: &[f64], radial: f64) -> FloatPoly {
    let n = cone.n;
    cone.scaled_rays
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .fold(MultiPoly::zero(n), |acc, (g, w)| &acc + &g.scale(&(radial * w)))
}

pub fn random_positive_poly<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> FloatPoly {
    let w = dirichlet(cfg.dirichlet_alpha, cfg.cone.scaled_rays.len() + 1, rng);
    let radial: f64 = rng.random();
    combine(&cfg.cone, &w, radial)
}

/// `t* · (R*_1, …, R*_n)` with `t* ~ U[0, 1/S_max]`, `S_max = max Σ R*_i`.
pub fn scale_to_interior<R: Rng + ?Sized>(polys: Vec<FloatPoly>, k: u32, rng: &mut R) -> Result<SimplexMap<f64>, SamplerError> {
    let n = polys.first().map_or(0, MultiPoly::num_vars);
    let sum = polys.iter().fold(MultiPoly::zero(n), |acc, p| &acc + p);
    let (s_max, _) = max_on_simplex(&sum, MaxOptions::default_for(n));
    let t = if s_max > 0.0 { rng.random::<f64>() / s_max } else { 0.0 };
    let polys = polys.iter().map(|p| p.scale(&t)).collect();
    Ok(SimplexMap::new(n, k, polys, "interior")?)
}

pub fn random_interior_map<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Result<SimplexMap<f64>, SamplerError> {
    cfg.validate()?;
    for _ in 0..cfg.retries.max(1) {
        let polys = (0..cfg.cone.n).map(|_| random_positive_poly(cfg, rng)).collect();
        let map = scale_to_interior(polys, cfg.cone.k, rng)?;
        if membership_check(&map, MembershipMode::default())?.member {
            return Ok(map);
        }
    }
    Err(SamplerError::Retries(cfg.retries.max(1)))
}

#[derive(Clone, Debug)]
pub struct Deformation {
    pub map: SimplexMap<f64>,
    /// Weight of the random interior map.
    pub t: f64,
    /// `‖f_* − g‖_{L²}`.
    pub distance: f64,
}

/// `g = t·r + (1 − t)·f_*` with `t ~ U(0, min(1, ε / ‖f_* − r‖)]`.
pub fn deform<R: Rng + ?Sized>(f_star: &SimplexMap<f64>, cfg: &SamplerConfig, rng: &mut R) -> Result<Deformation, SamplerError> {
    if f_star.n() != cfg.cone.n || f_star.k() != cfg.cone.k {
        return Err(SamplerError::Shape(f_star.n(), f_star.k(), cfg.cone.n, cfg.cone.k));
    }
    for _ in 0..cfg.retries.max(1) {
        let r = random_interior_map(cfg, rng)?;
        let d = l2_distance(f_star, &r)?;
        if d == 0.0 {
            continue;
        }
        let cap = (cfg.epsilon / d).min(1.0);
        let t = cap * (1.0 - rng.random::<f64>());
        let map = convex_combine(&r, f_star, &t)?.with_label(format!("deform({})", f_star.label()));
        return Ok(Deformation { map, t, distance: t * d });
    }
    Err(SamplerError::Retries(cfg.retries.max(1)))
}

/// `count` deformations; draw `i` uses the stream `master_seed ^ i`.
pub fn deform_many(f_star: &SimplexMap<f64>, cfg: &SamplerConfig, count: usize) -> Vec<Result<Deformation, SamplerError>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(|i| deform(f_star, cfg, &mut cfg.rng_for(i))).collect()
}
