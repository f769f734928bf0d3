use rcbf_core::benchmarks::{circular_cbf, vanderpol};
use rcbf_core::model::boundary_grid_oracle;
use rcbf_core::momentrelax::{verify, VerifyOptions};
use rcbf_core::CoreError;
use rcbf_sdp::{EmbeddedBackend, SolverSettings};

#[test]
fn clean_relaxations_are_monotone_sound_and_extractable() {
    let m = vanderpol(false).unwrap();
    let c = circular_cbf().unwrap();
    let backend = EmbeddedBackend::new(SolverSettings::default());
    for theta in [0.1, 0.5, 0.9, 1.3, 2.0] {
        let oracle = boundary_grid_oracle(&m, &c, &[theta], 10_000).unwrap().value;
        let mut prev: Option<f64> = None;
        let mut solved = 0;
        for kappa in 1..=4 {
            let opts = VerifyOptions {
                kappa,
                ..Default::default()
            };
            let v = match verify(&m, &c, &[theta], &backend, &opts) {
                Err(CoreError::OrderTooLow { .. }) => continue,
                r => r.unwrap(),
            };
            solved += 1;
            if let Some(p) = prev {
                assert!(p <= v.rho + 1e-6, "θ={theta}: ρ_{} = {p} > ρ_{kappa} = {}", kappa - 1, v.rho);
            }
            prev = Some(v.rho);
            assert!(v.rho <= oracle + 1e-4, "θ={theta} κ={kappa}: ρ = {} above V = {oracle}", v.rho);
            assert!(v.moment_min_eig >= -1e-7, "θ={theta} κ={kappa}: λmin = {}", v.moment_min_eig);
            for (val, viol) in v.values.iter().zip(&v.violations) {
                assert!(*viol <= 1e-6, "θ={theta} κ={kappa}: violation {viol}");
                assert!((val - v.rho).abs() <= 1e-4, "θ={theta} κ={kappa}: witness value {val} vs ρ {}", v.rho);
            }
            if kappa == 4 {
                assert!(!v.minimizers.is_empty(), "θ={theta}: no minimizer at κ=4");
            }
        }
        assert!(solved >= 3, "θ={theta}: only {solved} orders solved");
    }
}
