use proptest::prelude::*;
use rcbf_core::benchmarks::{circular_cbf, elliptical_cbf, vanderpol, U_MAX};
use rcbf_core::model::{
    boundary_grid_oracle, inner_closed_form, inner_solution, lie_derivatives, pop_space, variable_bounds, CbfCandidate,
    ParameterSet, ThetaKind,
};
use rcbf_core::polyalg::{Monomial, Polynomial};
use rcbf_core::popbuild::kkt_system;

fn arb_barrier() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u8..3, 3), -5i32..=5), 1..6).prop_map(|terms| {
        let s = CbfCandidate::cbf_space(2, 1);
        Polynomial::from_terms(&s, terms.into_iter().map(|(e, c)| (Monomial::from_exponents(&e), c as f64)))
    })
}

fn interval() -> ParameterSet {
    ParameterSet::new(ThetaKind::Interval { lo: 0.0, hi: 2.0 }).unwrap()
}

proptest! {
    #[test]
    fn lie_derivatives_are_linear(b1 in arb_barrier(), b2 in arb_barrier()) {
        let m = vanderpol(true).unwrap();
        let c1 = CbfCandidate::new(2, &b1, interval()).unwrap();
        let c2 = CbfCandidate::new(2, &b2, interval()).unwrap();
        let c12 = CbfCandidate::new(2, &(&b1 + &b2), interval()).unwrap();
        let (l1, l2, l12) = (lie_derivatives(&m, &c1).unwrap(), lie_derivatives(&m, &c2).unwrap(), lie_derivatives(&m, &c12).unwrap());
        prop_assert_eq!(&l12.lfb, &(&l1.lfb + &l2.lfb));
        prop_assert_eq!(&l12.lgb[0], &(&l1.lgb[0] + &l2.lgb[0]));
        let (j1, j2, j12) = (l1.ljb.unwrap(), l2.ljb.unwrap(), l12.ljb.unwrap());
        prop_assert_eq!(&j12[0], &(&j1[0] + &j2[0]));
    }

    #[test]
    fn kkt_rows_vanish_at_closed_form(x in prop::collection::vec(-2.0f64..2.0, 2), theta in 0.0f64..2.0) {
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        let lie = lie_derivatives(&m, &c).unwrap();
        let s = inner_solution(&m, &c, &x, &[theta]).unwrap();
        let sp = pop_space(&m, &c, false);
        let lgb = lie.lgb[0].eval_dense(&[x[0], x[1], theta]);
        let lgb_poly = vec![Polynomial::constant(&sp, lgb)];
        let k = kkt_system(&m.control, &lgb_poly, &sp).unwrap();
        let y = [x[0], x[1], s.u[0], s.zeta[0]];
        for p in k.stationarity.iter().chain(&k.complementarity) {
            prop_assert!(p.eval_dense(&y).abs() < 1e-9);
        }
        for p in k.primal.iter().chain(&k.dual) {
            prop_assert!(p.eval_dense(&y) >= -1e-9);
        }
    }
}

#[test]
fn closed_form_on_clean_circle() {
    // L_f b + u_max |L_g b| at 200 boundary points
    let m = vanderpol(false).unwrap();
    let c = circular_cbf().unwrap();
    let lie = lie_derivatives(&m, &c).unwrap();
    for k in 0..200 {
        let theta = 2.0 * (k as f64 + 0.5) / 200.0;
        let a = 2.399963 * k as f64;
        let x = [theta.sqrt() * a.cos(), theta.sqrt() * a.sin()];
        let pt = [x[0], x[1], theta];
        let expect = lie.lfb.eval_dense(&pt) + U_MAX * lie.lgb[0].eval_dense(&pt).abs();
        let got = inner_closed_form(&m, &c, &x, &[theta]).unwrap();
        assert!((got - expect).abs() <= 1e-12, "{got} vs {expect}");
    }
}

#[test]
fn elliptical_bounds_hold_on_samples() {
    let m = vanderpol(true).unwrap();
    let c = elliptical_cbf().unwrap();
    let b = variable_bounds(&m, &c, None).unwrap();
    let mut seed = 0x2545f4914f6cdd1du64;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut n = 0;
    while n < 1000 {
        let t1 = 0.25 + 0.5 * next();
        let t2 = 0.25 + 0.5 * next();
        let t3 = 0.6 * 0.75 * (2.0 * next() - 1.0);
        if t3 * t3 > 0.36 * t1 * t2 {
            continue;
        }
        // boundary point along a random ray: r² xᵀAx = 1
        let a = std::f64::consts::TAU * next();
        let d = [a.cos(), a.sin()];
        let q = t1 * d[0] * d[0] + 2.0 * t3 * d[0] * d[1] + t2 * d[1] * d[1];
        let r = 1.0 / q.sqrt();
        let x = [r * d[0], r * d[1]];
        let s = inner_solution(&m, &c, &x, &[t1, t2, t3]).unwrap();
        let pt = [x[0], x[1], s.z.unwrap(), s.u[0], s.zeta[0], t1, t2, t3];
        for row in &b.rows {
            let v = row.poly.eval_dense(&pt);
            assert!(v >= -1e-9, "{} = {v} at θ = {:?}", row.label, [t1, t2, t3]);
        }
        n += 1;
    }
}

#[test]
fn uncertain_circle_value_is_nonpositive() {
    let m = vanderpol(true).unwrap();
    let c = circular_cbf().unwrap();
    for theta in [0.1, 0.5, 1.0, 1.5, 2.0] {
        let o = boundary_grid_oracle(&m, &c, &[theta], 10_000).unwrap();
        assert!(o.value <= 1e-9, "θ={theta}: {}", o.value);
    }
}
