use simplexfold::cone::build_cone;
use simplexfold::folding::catalog;
use simplexfold::maps::{membership_check, MembershipMode};
use simplexfold::sampler::{deform, deform_many, random_interior_map, random_positive_poly, SamplerConfig};
use simplexfold::simplex::{l2_distance, sample_uniform};

fn config(seed: u64) -> SamplerConfig {
    SamplerConfig::new(build_cone(2, 2, 4).unwrap(), seed, 0.05).unwrap()
}

#[test]
fn positive_draws_are_nonnegative() {
    let cfg = config(1);
    let mut rng = cfg.rng_for(0);
    let pts = sample_uniform(2, 10_000, &mut cfg.rng_for(99));
    for _ in 0..100 {
        let p = random_positive_poly(&cfg, &mut rng);
        assert!(pts.iter().all(|x| p.eval_f64(&x.coords) >= -1e-12));
    }
}

#[test]
fn interior_maps_are_members() {
    let cfg = config(2);
    let mut rng = cfg.rng_for(0);
    for _ in 0..100 {
        let f = random_interior_map(&cfg, &mut rng).unwrap();
        assert!(membership_check(&f, MembershipMode::default()).unwrap().member);
    }
}

#[test]
fn deformations_respect_radius() {
    let cfg = config(3);
    let f2 = catalog("tri:f2").unwrap().to_float();
    for d in deform_many(&f2, &cfg, 100) {
        let d = d.unwrap();
        assert!(d.t > 0.0 && d.t <= 1.0);
        let dist = l2_distance(&f2, &d.map).unwrap();
        assert!(dist <= cfg.epsilon + 1e-9, "{dist}");
        assert!(membership_check(&d.map, MembershipMode::default()).unwrap().member);
    }
}

#[test]
fn large_radius_caps_weight_at_one() {
    let mut cfg = config(4);
    cfg.epsilon = 100.0;
    let f2 = catalog("tri:f2").unwrap().to_float();
    let d = deform(&f2, &cfg, &mut cfg.rng_for(0)).unwrap();
    assert!(d.t <= 1.0);
}

#[test]
fn draws_are_reproducible() {
    let cfg = config(5);
    let f2 = catalog("tri:f2").unwrap().to_float();
    let a: Vec<String> = deform_many(&f2, &cfg, 10).into_iter().map(|d| d.unwrap().map.to_json_value().to_string()).collect();
    let b: Vec<String> = deform_many(&f2, &cfg, 10).into_iter().map(|d| d.unwrap().map.to_json_value().to_string()).collect();
    assert_eq!(a, b);
    let other = config(6);
    let c: Vec<String> = deform_many(&f2, &other, 10).into_iter().map(|d| d.unwrap().map.to_json_value().to_string()).collect();
    assert_ne!(a, c);
}
