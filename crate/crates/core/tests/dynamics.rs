use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplexfold::dynamics::{
    classify_orbit, deform_scan, find_fixed_points, fixation_experiment, fixation_time, fit_lognormal, ks_statistic,
    arcsine_cdf, CompiledMap, FixationOptions, FixedPointOptions, OrbitKind, OrbitOptions, ScanOptions, Stability,
    Verdict,
};
use simplexfold::folding::{catalog, chebyshev};
use simplexfold::maps::SimplexMap;
use simplexfold::polynomial::ExactPoly;

#[test]
fn chebyshev_orbits_never_settle() {
    let f = CompiledMap::new(&chebyshev(2));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x0: f64 = rng.random_range(0.001..0.999);
        let v = classify_orbit(&f, &[x0], &OrbitOptions::default()).unwrap();
        assert_eq!(v.kind, OrbitKind::NonperiodicWithinWindow, "x0 = {x0}");
    }
}

#[test]
fn periodic_orbits_report_minimal_period() {
    for (lambda, period) in [("3.2", 2), ("3.5", 4), ("3.83", 3)] {
        let p = ExactPoly::parse(&format!("{lambda}*x*(1-x)"), &["x"]).unwrap().to_float();
        let f = CompiledMap::new(&SimplexMap::new(1, 2, vec![p], "logistic").unwrap());
        let v = classify_orbit(&f, &[0.3], &OrbitOptions::default()).unwrap();
        assert_eq!(v.kind, OrbitKind::Periodic { period }, "lambda = {lambda}");
    }
    let p = ExactPoly::parse("2.5*x*(1-x)", &["x"]).unwrap().to_float();
    let f = CompiledMap::new(&SimplexMap::new(1, 2, vec![p], "logistic").unwrap());
    assert_eq!(classify_orbit(&f, &[0.3], &OrbitOptions::default()).unwrap().kind, OrbitKind::ConvergedFixed);
}

#[test]
fn fixed_points_are_accurate_and_consistent() {
    for name in ["tri:f2", "tri:f4", "tri:f9", "cheb:3", "cheb:5"] {
        let f = catalog(name).unwrap();
        let rep = find_fixed_points(&f, &FixedPointOptions::default());
        assert!(!rep.points.is_empty());
        for p in &rep.points {
            let fx: Vec<f64> = f.polys().iter().map(|q| q.eval_f64(&p.x)).collect();
            let r = fx.iter().zip(&p.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(r < 1e-11, "{name} residual {r}");
            let mods: Vec<f64> = p.eigenvalues.iter().map(|(a, b)| a.hypot(*b)).collect();
            match p.stability {
                Stability::Attracting => assert!(mods.iter().all(|m| *m < 1.0 - 1e-9)),
                Stability::Repelling => assert!(mods.iter().all(|m| *m > 1.0 + 1e-9)),
                Stability::Marginal => assert!(mods.iter().any(|m| (m - 1.0).abs() <= 1e-9)),
                Stability::Saddle => {}
            }
        }
    }
}

#[test]
fn chebyshev_fixed_points_in_closed_form() {
    // with x = sin²θ the fold is sin²(dθ), fixed at θ = πj / (d ± 1)
    let d = 3;
    let rep = find_fixed_points(&chebyshev(d), &FixedPointOptions::default());
    let mut want: Vec<f64> = Vec::new();
    for m in [d - 1, d + 1] {
        for j in 0..=m {
            let x = (std::f64::consts::PI * j as f64 / m as f64).sin().powi(2);
            if !want.iter().any(|w| (w - x).abs() < 1e-9) {
                want.push(x);
            }
        }
    }
    want.sort_by(f64::total_cmp);
    let got: Vec<f64> = rep.points.iter().map(|p| p.x[0]).collect();
    assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9);
    }
    assert!(rep.points.iter().all(|p| p.stability == Stability::Repelling));
}

#[test]
fn nine_fold_vertices_attract() {
    let rep = find_fixed_points(&catalog("tri:f9").unwrap(), &FixedPointOptions::default());
    let att: Vec<&Vec<f64>> = rep.points.iter().filter(|p| p.stability == Stability::Attracting).map(|p| &p.x).collect();
    assert_eq!(att.len(), 2);
    assert!(att.iter().any(|x| (x[0] - 1.0).abs() < 1e-10 && x[1].abs() < 1e-10));
    assert!(att.iter().any(|x| x[0].abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10));
    for v in [[1.0, 0.0], [0.0, 1.0]] {
        let nearest_unstable = rep
            .points
            .iter()
            .filter(|p| p.stability != Stability::Attracting)
            .map(|p| ((p.x[0] - v[0]).powi(2) + (p.x[1] - v[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest_unstable < 0.01);
    }
}

#[test]
fn fixation_records_are_exact() {
    let f9 = catalog("tri:f9").unwrap();
    let opts = FixationOptions { count: 200, master_seed: 5, ..Default::default() };
    let res = fixation_experiment(&f9, &opts);
    let c = CompiledMap::new(&f9);
    for r in &res.records {
        let v = r.vertex.expect("absorbed");
        assert!(v == 1 || v == 2);
        assert!(r.x0.iter().all(|&x| x > 0.0 && x < 0.01));
        let mut x = r.x0.clone();
        for _ in 0..r.time {
            x = c.step(&x, 1e-10).unwrap();
        }
        let target = if v == 1 { [1.0, 0.0] } else { [0.0, 1.0] };
        assert!(((x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2)).sqrt() <= 1e-9);
        assert_eq!(fixation_time(&c, &r.x0, 1e-9, 100_000).time, r.time);
    }
    let again = fixation_experiment(&f9, &opts);
    assert_eq!(again.records, res.records);
}

#[test]
fn small_runs_are_flagged() {
    let res = fixation_experiment(&catalog("tri:f9").unwrap(), &FixationOptions { count: 10, ..Default::default() });
    assert_eq!(res.records.len(), 10);
    assert!(res.fit.unwrap().low_sample);
    assert!(fit_lognormal(&[0, 0]).is_none());
}

#[test]
fn scan_is_order_independent() {
    let f2 = catalog("tri:f2").unwrap().to_float();
    let bary = SimplexMap::new(2, 2, vec![ExactPoly::parse("1/3", &["x", "y"]).unwrap().to_float(); 2], "c").unwrap();
    let opts = ScanOptions { trials: 4, ..Default::default() };
    let rows = deform_scan(&f2, &[f2.clone(), bary.clone()], &opts);
    let swapped = deform_scan(&f2, &[bary, f2.clone()], &opts);
    assert_eq!(rows[0].verdict, Some(Verdict::Green));
    assert_eq!(rows[1].verdict, Some(Verdict::Red));
    assert_eq!(swapped[1].l2_distance, rows[0].l2_distance);
    assert_eq!(swapped[0].n_fixed_points, rows[1].n_fixed_points);
}

#[test]
fn identity_has_exact_ks_behavior() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let sample: Vec<f64> = (0..n)
        .map(|_| (1.0 - (std::f64::consts::PI * rng.random::<f64>()).cos()) / 2.0)
        .collect();
    assert!(ks_statistic(sample, arcsine_cdf) < 1.63 / (n as f64).sqrt());
}
