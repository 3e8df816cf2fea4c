//! Damped Newton iteration for small square polynomial systems `F(x) = y`.

use nalgebra::{DMatrix, DVector};

use crate::polynomial::FloatPoly;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// Stop once `‖F(x) - y‖∞` falls below this.
    pub tol: f64,
    /// Accept the final iterate if its residual is below this.
    pub accept: f64,
    /// Step halvings allowed when the residual grows.
    pub max_halvings: u32,
    /// Abandon iterates that wander further than this from the origin.
    pub escape: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iters: 100, tol: 1e-15, accept: 1e-12, max_halvings: 30, escape: 1e3 }
    }
}

/// `F` together with its symbolic Jacobian.
#[derive(Clone, Debug)]
pub struct System {
    pub f: Vec<FloatPoly>,
    pub jac: Vec<Vec<FloatPoly>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Root {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Norm of the first Newton step; zero for a system fixed at the seed.
    pub first_step: f64,
}

impl System {
    pub fn new(f: Vec<FloatPoly>) -> Self {
        let n = f.first().map_or(0, |p| p.num_vars());
        let jac = f.iter().map(|p| (0..n).map(|j| p.derivative(j)).collect()).collect();
        System { f, jac }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn residual(&self, x: &[f64], target: &[f64]) -> Vec<f64> {
        self.f.iter().zip(target).map(|(p, t)| p.eval_f64(x) - t).collect()
    }

    pub fn jacobian_at(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, self.jac.first().map_or(0, Vec::len), |i, j| self.jac[i][j].eval_f64(x))
    }

    /// Newton from `x0`; `None` when the Jacobian is singular, the iterate
    /// escapes, or the residual never drops below `accept`.
    pub fn solve(&self, target: &[f64], x0: &[f64], opts: &NewtonOptions) -> Option<Root> {
        let mut x = x0.to_vec();
        let mut r = self.residual(&x, target);
        let mut norm = inf_norm(&r);
        let mut first_step = None;
        for it in 0..opts.max_iters {
            if norm < opts.tol {
                return Some(Root { x, residual: norm, iterations: it, first_step: first_step.unwrap_or(0.0) });
            }
            let j = self.jacobian_at(&x);
            let Some(step) = j.lu().solve(&(-DVector::from_vec(r.clone()))) else { break };
            first_step.get_or_insert(step.amax());
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
                let tr = self.residual(&trial, target);
                let tn = inf_norm(&tr);
                if tn.is_finite() && tn < norm {
                    x = trial;
                    r = tr;
                    norm = tn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || x.iter().any(|v| v.abs() > opts.escape) {
                break;
            }
        }
        (norm < opts.accept).then_some(Root { x, residual: norm, iterations: opts.max_iters, first_step: first_step.unwrap_or(0.0) })
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Greedy deduplication: keeps the first point of every cluster closer than
/// `tol` in ℓ∞.
pub fn dedup_points(points: impl IntoIterator<Item = Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < tol)) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::ExactPoly;

    #[test]
    fn solves_circle_line() {
        let names = ["x", "y"];
        let f = vec![
            ExactPoly::parse("x^2 + y^2", &names).unwrap().to_float(),
            ExactPoly::parse("x - y", &names).unwrap().to_float(),
        ];
        let sys = System::new(f);
        let root = sys.solve(&[1.0, 0.0], &[0.5, 0.6], &NewtonOptions::default()).unwrap();
        let h = 0.5f64.sqrt();
        assert!((root.x[0] - h).abs() < 1e-14 && (root.x[1] - h).abs() < 1e-14);
    }

    #[test]
    fn singular_start_fails() {
        let f = vec![ExactPoly::parse("x^2", &["x"]).unwrap().to_float()];
        assert!(System::new(f).solve(&[1.0], &[0.0], &NewtonOptions::default()).is_none());
    }

    #[test]
    fn dedup_keeps_first() {
        let pts = vec![vec![0.0, 0.0], vec![1e-10, 0.0], vec![1.0, 0.0]];
        assert_eq!(dedup_points(pts, 1e-8), vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
    }
}
