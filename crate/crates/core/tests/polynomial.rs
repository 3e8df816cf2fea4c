use num_bigint::BigInt;
use proptest::prelude::*;
use simplexfold::polynomial::{ExactPoly, MultiPoly};
use simplexfold::scalar::{rational_to_f64, Rational};

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Random exact polynomial in 2 variables of degree at most 3.
fn poly2() -> impl Strategy<Value = ExactPoly> {
    prop::collection::vec(((0u32..=3, 0u32..=3), -9i64..=9, 1i64..=4), 0..6).prop_map(|terms| {
        let mut p = ExactPoly::zero(2);
        for ((a, b), n, d) in terms {
            if a + b <= 3 {
                p.add_term(simplexfold::polynomial::Exponent(vec![a, b]), rat(n, d));
            }
        }
        p
    })
}

fn point() -> impl Strategy<Value = (i64, i64)> {
    (0i64..=16, 0i64..=16).prop_filter("in simplex", |(a, b)| a + b <= 16)
}

fn at(p: &ExactPoly, (a, b): (i64, i64)) -> Rational {
    p.evaluate(&[rat(a, 16), rat(b, 16)]).unwrap()
}

proptest! {
    #[test]
    fn ring_laws(p in poly2(), q in poly2(), r in poly2()) {
        prop_assert_eq!(&p + &q, &q + &p);
        prop_assert_eq!(&p * &q, &q * &p);
        prop_assert_eq!(&(&p + &q) * &r, &(&p * &r) + &(&q * &r));
        prop_assert_eq!(&p - &p, ExactPoly::zero(2));
    }

    #[test]
    fn evaluation_is_a_homomorphism(p in poly2(), q in poly2(), x in point()) {
        prop_assert_eq!(at(&(&p * &q), x), at(&p, x) * at(&q, x));
        prop_assert_eq!(at(&(&p + &q), x), at(&p, x) + at(&q, x));
    }

    #[test]
    fn homogenization_agrees_on_simplex(p in poly2(), extra in 0u32..3, x in point()) {
        let k = p.degree() + extra;
        let h = p.homogenize(k).unwrap();
        prop_assert!(h.poly().is_homogeneous_of(k));
        let (a, b) = x;
        let z = rat(16 - a - b, 16);
        let v = h.poly().evaluate(&[rat(a, 16), rat(b, 16), z]).unwrap();
        prop_assert_eq!(v, at(&p, x));
        prop_assert_eq!(h.dehomogenize(), p.clone());
    }

    #[test]
    fn times_sum_preserves_values(p in poly2(), t in 0u32..4) {
        let h = p.homogenize(p.degree()).unwrap();
        let lifted = h.times_sum(t);
        prop_assert_eq!(lifted.degree(), h.degree() + t);
        prop_assert_eq!(lifted.dehomogenize(), p.clone());
        prop_assert_eq!(lifted.normalize_degree().dehomogenize(), p.clone());
    }

    #[test]
    fn display_parses_back(p in poly2()) {
        let s = p.to_string_with(&["x", "y"]);
        prop_assert_eq!(ExactPoly::parse(&s, &["x", "y"]).unwrap(), p);
    }

    #[test]
    fn json_round_trip(p in poly2()) {
        prop_assert_eq!(ExactPoly::from_json_value(&p.to_json_value()).unwrap(), p);
    }

    #[test]
    fn composition_with_coordinates_is_identity(p in poly2()) {
        let xs = [ExactPoly::var(2, 0), ExactPoly::var(2, 1)];
        prop_assert_eq!(p.compose(&xs).unwrap(), p);
    }

    #[test]
    fn derivative_product_rule(p in poly2(), q in poly2()) {
        for v in 0..2 {
            prop_assert_eq!((&p * &q).derivative(v), &(&p.derivative(v) * &q) + &(&p * &q.derivative(v)));
        }
    }

    #[test]
    fn float_conversion_matches(p in poly2(), x in point()) {
        let f = p.to_float();
        let v = f.eval_f64(&[x.0 as f64 / 16.0, x.1 as f64 / 16.0]);
        prop_assert!((v - rational_to_f64(&at(&p, x))).abs() < 1e-9);
    }

    #[test]
    fn exact_division_inverts_product(p in poly2(), q in poly2()) {
        prop_assume!(!q.is_zero());
        prop_assert_eq!((&p * &q).div_exact(&q), Some(p));
    }
}

#[test]
fn parser_examples() {
    let p = ExactPoly::parse("x*(3-4*x)^2", &["x"]).unwrap();
    assert_eq!(p, ExactPoly::parse("9*x - 24*x^2 + 16*x^3", &["x"]).unwrap());
    assert_eq!(ExactPoly::parse("1/3 + 0.25*x", &["x"]).unwrap().coeff(&[1]), rat(1, 4));
    assert!(ExactPoly::parse("x^-1", &["x"]).is_err());
    assert!(ExactPoly::parse("z", &["x"]).is_err());
    assert!(ExactPoly::parse("1/x", &["x"]).is_err());
}

#[test]
fn pow_and_constants() {
    let s = MultiPoly::<Rational>::coordinate_sum(2);
    assert_eq!(s.pow(0), ExactPoly::one(2));
    assert_eq!(s.pow(2), ExactPoly::parse("x^2 + 2*x*y + y^2", &["x", "y"]).unwrap());
    assert_eq!(ExactPoly::constant(2, rat(0, 1)), ExactPoly::zero(2));
}
