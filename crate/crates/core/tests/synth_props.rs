use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcbf_core::benchmarks::{circular_cbf, elliptical_cbf, vanderpol};
use rcbf_core::model::{boundary_grid_oracle, ParameterSet, ThetaKind, PARAM};
use rcbf_core::momentrelax::ExtractOptions;
use rcbf_core::polyalg::{Polynomial, VariableSpace};
use rcbf_core::synth::{select_by_metric, synthesize_level, theta_moments, LowerBoundPoly, Sense, SynthOptions, ThetaMeasure};
use rcbf_sdp::{EmbeddedBackend, SolverSettings, Status};

fn backend() -> EmbeddedBackend {
    EmbeddedBackend::new(SolverSettings::default())
}

#[test]
fn interval_moments_match_quadrature() {
    for (lo, hi) in [(0.0, 2.0), (1.0, 2.0), (-0.5, 0.7)] {
        let m = ThetaMeasure::uniform(&ParameterSet::new(ThetaKind::Interval { lo, hi }).unwrap()).unwrap();
        for k in 0..=10u8 {
            let f = |t: f64| t.powi(k as i32) / (hi - lo);
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mut s = f(lo) + f(hi);
            for i in 1..n {
                s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = s * h / 3.0;
            let exact = theta_moments(&m, &[k]).unwrap();
            assert!((exact - quad).abs() <= 1e-12 * quad.abs().max(1.0), "[{lo}, {hi}] β={k}: {exact} vs {quad}");
        }
    }
}

#[test]
fn ellipse_moments_match_sampling() {
    let c = elliptical_cbf().unwrap();
    let m = ThetaMeasure::uniform(&c.theta).unwrap();
    let (lo, hi, xi) = (0.25, 0.75, 0.6);
    let mut betas = vec![];
    for a in 0..=3u8 {
        for b in 0..=3 - a {
            for d in 0..=3 - a - b {
                betas.push([a, b, d]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum = vec![0.0; betas.len()];
    let mut sq = vec![0.0; betas.len()];
    let mut n = 0usize;
    for _ in 0..10_000_000 {
        let t: [f64; 3] = [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(-xi * hi..xi * hi)];
        if t[2] * t[2] > xi * xi * t[0] * t[1] {
            continue;
        }
        n += 1;
        for (k, b) in betas.iter().enumerate() {
            let v: f64 = (0..3).map(|i| t[i].powi(b[i] as i32)).product();
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let nf = n as f64;
    for (k, b) in betas.iter().enumerate() {
        let mean = sum[k] / nf;
        let se = ((sq[k] / nf - mean * mean).max(0.0) / nf).sqrt();
        let exact = theta_moments(&m, b).unwrap();
        assert!((mean - exact).abs() <= 3.0 * se + 1e-15, "β={b:?}: {exact} vs {mean} ± {se}");
    }
}

#[test]
fn clean_lower_bound_is_dominated() {
    let m = vanderpol(false).unwrap();
    let c = circular_cbf().unwrap();
    let l = synthesize_level(&m, &c, 3, &backend(), &SynthOptions::default()).unwrap();
    assert!(!l.bound.tainted, "residual {}", l.bound.residual);
    for k in 0..200 {
        let t = [2.0 * k as f64 / 199.0];
        let g = boundary_grid_oracle(&m, &c, &t, 10_000).unwrap().value;
        assert!(l.bound.eval(&t) <= g + 2e-3, "θ={}: V_3 = {} > V = {g}", t[0], l.bound.eval(&t));
    }
    assert!(l.max.value.abs() <= 1e-3, "max V_3 = {}", l.max.value);
}

fn quadratic(c0: f64, c1: f64, c2: f64) -> LowerBoundPoly {
    let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
    let t = Polynomial::var(&sp, 0);
    let poly = &(&t.pow(2) * c2) + &(&t * c1);
    LowerBoundPoly {
        nu: 1,
        poly: poly.add_constant(c0),
        integral: 0.0,
        status: Status::Optimal,
        residual: 0.0,
        tainted: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn selection_is_sound(center in 0.3f64..1.7, width in 0.1f64..0.5, max in any::<bool>()) {
        // v(t) = width² − (t − center)², nonnegative on [center ± width]
        let v = quadratic(width * width - center * center, 2.0 * center, -1.0);
        let theta = ParameterSet::new(ThetaKind::Interval { lo: 0.0, hi: 2.0 }).unwrap();
        let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
        let metric = Polynomial::var(&sp, 0);
        let sense = if max { Sense::Max } else { Sense::Min };
        if let Ok(s) = select_by_metric(&metric, &v, &theta, sense, 2, &backend(), &ExtractOptions::default()) {
            prop_assert!(v.eval(&s.theta) >= -1e-6);
            prop_assert!(theta.contains(&s.theta, 1e-8));
            let edge = if max { (center + width).min(2.0) } else { (center - width).max(0.0) };
            prop_assert!((s.theta[0] - edge).abs() < 1e-2, "{} vs {}", s.theta[0], edge);
        }
    }
}
