use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;
use rcbf_core::polyalg::{Monomial, Polynomial, VariableSpace};

fn space() -> Arc<VariableSpace> {
    VariableSpace::new(&[("x", 2), ("u", 1), ("t", 1)]).unwrap()
}

fn arb_poly() -> impl Strategy<Value = Polynomial> {
    // integer coefficients keep products exact in floating point
    prop::collection::vec((prop::collection::vec(0u8..3, 4), -5i32..=5), 0..6).prop_map(|terms| {
        let s = space();
        Polynomial::from_terms(&s, terms.into_iter().map(|(e, c)| (Monomial::from_exponents(&e), c as f64)))
    })
}

fn arb_real_poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u8..3, 4), -3.0f64..3.0), 0..6).prop_map(|terms| {
        let s = space();
        Polynomial::from_terms(&s, terms.into_iter().map(|(e, c)| (Monomial::from_exponents(&e), c)))
    })
}

proptest! {
    #[test]
    fn product_rule(p in arb_poly(), q in arb_poly(), v in 0usize..4) {
        let lhs = (&p * &q).differentiate(v);
        let rhs = &(&p.differentiate(v) * &q) + &(&p * &q.differentiate(v));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn evaluation_is_multiplicative(p in arb_real_poly(), q in arb_real_poly(),
                                    pt in prop::collection::vec(-10.0f64..10.0, 4)) {
        let pq = (&p * &q).eval_dense(&pt);
        let prod = p.eval_dense(&pt) * q.eval_dense(&pt);
        let scale = 1.0 + pq.abs().max(prod.abs());
        prop_assert!((pq - prod).abs() <= 1e-10 * scale, "{} vs {}", pq, prod);
    }

    #[test]
    fn text_round_trip(p in arb_real_poly()) {
        let back = Polynomial::parse(p.space(), &p.to_string()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn substitution_commutes_with_evaluation(p in arb_real_poly(), c in -2.0f64..2.0,
                                             x in prop::collection::vec(-2.0f64..2.0, 2), u in -2.0f64..2.0) {
        let fixed = p.fix_block("t", &[c]).unwrap();
        let mut a: HashMap<String, Vec<f64>> = HashMap::new();
        a.insert("x".into(), x.clone());
        a.insert("u".into(), vec![u]);
        let lhs = fixed.evaluate(&a).unwrap();
        a.insert("t".into(), vec![c]);
        let rhs = p.evaluate(&a).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }
}
