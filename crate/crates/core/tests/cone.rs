use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use simplexfold::cone::{build_cone, build_inequalities, enumerate_rays, extreme_rays, row_count, ConeRep};
use simplexfold::simplex::{barycentric_lattice, max_on_simplex, MaxOptions};

fn det(m: &[Vec<BigInt>]) -> BigInt {
    match m.len() {
        0 => BigInt::from(1),
        1 => m[0][0].clone(),
        n => (0..n)
            .map(|j| {
                let minor: Vec<Vec<BigInt>> =
                    m[1..].iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect()).collect();
                let t = &m[0][j] * det(&minor);
                if j % 2 == 0 { t } else { -t }
            })
            .sum(),
    }
}

fn primitive(v: Vec<BigInt>) -> Vec<BigInt> {
    let g = v.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    v.into_iter().map(|x| x / &g).collect()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Extreme rays by brute force: every (d-1)-subset of tight rows with a
/// one-dimensional kernel, kept when the kernel vector is feasible.
fn brute_force_rays(a: &[Vec<BigInt>]) -> BTreeSet<Vec<BigInt>> {
    let d = a[0].len();
    let mut rays = BTreeSet::new();
    for s in subsets(a.len(), d - 1) {
        let m: Vec<Vec<BigInt>> = s.iter().map(|&i| a[i].clone()).collect();
        let v: Vec<BigInt> = (0..d)
            .map(|j| {
                let minor: Vec<Vec<BigInt>> =
                    m.iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, x)| x.clone()).collect()).collect();
                let t = det(&minor);
                if j % 2 == 0 { t } else { -t }
            })
            .collect();
        if v.iter().all(Zero::is_zero) {
            continue;
        }
        for sign in [1, -1] {
            let w: Vec<BigInt> = v.iter().map(|x| x * sign).collect();
            let feasible = a.iter().all(|r| !r.iter().zip(&w).map(|(p, q)| p * q).sum::<BigInt>().is_negative());
            if feasible {
                rays.insert(primitive(w));
            }
        }
    }
    rays
}

#[test]
fn matches_brute_force_on_the_interval() {
    for k in 1..=3 {
        for level in 0..=4 {
            let cone = enumerate_rays(build_inequalities(1, k, level)).unwrap();
            let got: BTreeSet<Vec<BigInt>> = cone.rays.iter().cloned().collect();
            assert_eq!(got.len(), cone.rays.len(), "duplicate rays at k={k}, N={level}");
            assert_eq!(got, brute_force_rays(&cone.ineq), "k={k}, N={level}");
        }
    }
}

#[test]
fn matches_brute_force_on_small_triangle() {
    let cone = enumerate_rays(build_inequalities(2, 1, 2)).unwrap();
    let got: BTreeSet<Vec<BigInt>> = cone.rays.iter().cloned().collect();
    assert_eq!(got, brute_force_rays(&cone.ineq));
}

#[test]
fn row_counts() {
    assert_eq!(row_count(2, 2, 8), 66);
    assert_eq!(build_inequalities(2, 2, 8).ineq.len(), 66);
    assert_eq!(row_count(1, 3, 4), 8);
}

fn nested(n: usize, k: u32, levels: std::ops::RangeInclusive<u32>) {
    let cones: Vec<ConeRep> = levels.map(|l| enumerate_rays(build_inequalities(n, k, l)).unwrap()).collect();
    for w in cones.windows(2) {
        for g in w[0].generators() {
            assert!(w[1].contains(&g), "K_{} ray {g} missing from K_{}", w[0].level, w[1].level);
        }
    }
}

#[test]
fn levels_are_nested() {
    nested(1, 2, 0..=3);
    nested(2, 2, 0..=2);
}

#[test]
fn generators_are_nonnegative_and_scaled() {
    let cone = build_cone(2, 2, 3).unwrap();
    let grid = barycentric_lattice(2, 30);
    for (g, s) in cone.generators().iter().zip(&cone.scaled_rays) {
        let f = g.to_float();
        assert!(grid.iter().all(|x| f.eval_f64(x) >= -1e-12));
        let (m, _) = max_on_simplex(s, MaxOptions::default_for(2));
        assert!((m - 1.0).abs() < 1e-9, "max {m}");
    }
}

#[test]
fn json_round_trip() {
    let cone = build_cone(1, 2, 2).unwrap();
    let back = ConeRep::from_json_value(&cone.to_json_value()).unwrap();
    assert_eq!(back.rays, cone.rays);
    assert_eq!(back.ineq, cone.ineq);
}

#[test]
fn redundant_rows_do_not_change_rays() {
    let a = build_inequalities(1, 2, 2).ineq;
    let mut doubled = a.clone();
    doubled.extend(a.iter().map(|r| r.iter().map(|x| x * 3).collect::<Vec<_>>()));
    assert_eq!(extreme_rays(&a).unwrap(), extreme_rays(&doubled).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ray_combinations_are_members(weights in prop::collection::vec(0u32..5, 15)) {
        let cone = enumerate_rays(build_inequalities(2, 2, 1)).unwrap();
        let mut c = vec![BigInt::zero(); cone.dim()];
        for (r, w) in cone.rays.iter().zip(&weights) {
            for (ci, ri) in c.iter_mut().zip(r) {
                *ci += ri * w;
            }
        }
        let p = cone.poly_of(&c);
        prop_assert!(cone.contains(&p));
        let f = p.to_float();
        prop_assert!(barycentric_lattice(2, 25).iter().all(|x| f.eval_f64(x) >= -1e-12));
    }
}
