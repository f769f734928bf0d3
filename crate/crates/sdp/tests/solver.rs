use rcbf_sdp::random::random_feasible;
use rcbf_sdp::{parse_sdpa, sdp_solve, write_sdpa, BlockKind, Entry, SdpProblem, SolverSettings, Status};

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn min_corner_entry() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.objective = vec![Entry::new(0, 0, 0, 1.0)];
    p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)], 1.0);
    let s = sdp_solve(&p, &settings()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!(s.primal_objective.abs() < 1e-7, "{}", s.primal_objective);
    assert!((s.x[0].get(1, 1) - 1.0).abs() < 1e-6);
}

#[test]
fn min_trace_with_fixed_corner() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.objective = vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)];
    p.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], 1.0);
    let s = sdp_solve(&p, &settings()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.primal_objective - 1.0).abs() < 1e-7);
    assert!((s.dual_objective - 1.0).abs() < 1e-7);
}

#[test]
fn negative_diagonal_is_infeasible() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.objective = vec![Entry::new(0, 0, 0, 1.0)];
    p.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], -1.0);
    let s = sdp_solve(&p, &settings()).unwrap();
    assert_eq!(s.status, Status::Infeasible);
}

#[test]
fn unbounded_objective_is_reported() {
    // min -X01 with only X00 - X11 = 0 is unbounded below
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.objective = vec![Entry::new(0, 0, 1, -1.0)];
    p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, -1.0), Entry::new(0, 0, 1, 0.5)], 0.0);
    let s = sdp_solve(&p, &settings()).unwrap();
    assert_eq!(s.status, Status::Unbounded);
}

#[test]
fn merged_rows_get_multipliers() {
    // X01 = X11 merges; the dual must still satisfy C - Σ y A = S
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.objective = vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 0, 1, 1.0)];
    p.add_constraint(vec![Entry::new(0, 0, 1, 1.0), Entry::new(0, 1, 1, -1.0)], 0.0);
    p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)], 1.0);
    let s = sdp_solve(&p, &settings()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!(s.residuals.dual < 1e-6, "{:?}", s.residuals);
    assert!((s.primal_objective - s.dual_objective).abs() < 1e-6);
}


#[test]
fn random_feasible_instances_meet_kkt_tolerances() {
    let st = settings();
    for seed in 0..50 {
        let p = random_feasible(seed);
        let s = sdp_solve(&p, &st).unwrap();
        assert_eq!(s.status, Status::Optimal, "seed {seed}: {:?} after {}", s.residuals, s.iterations);
        let gap = (s.primal_objective - s.dual_objective).abs() / (1.0 + s.primal_objective.abs());
        assert!(gap <= 1e-6, "seed {seed}: gap {gap}");
        assert!(s.residuals.primal <= 1e-6, "seed {seed}: {:?}", s.residuals);
        assert!(s.residuals.dual <= 1e-6, "seed {seed}: {:?}", s.residuals);
        assert!(s.min_primal_eigenvalue() >= -1e-7, "seed {seed}");
    }
}

#[test]
fn solves_are_deterministic() {
    let p = random_feasible(7);
    let a = sdp_solve(&p, &settings()).unwrap();
    let b = sdp_solve(&p, &settings()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.primal_objective.to_bits(), b.primal_objective.to_bits());
    assert_eq!(a.y, b.y);
}

#[test]
fn sdpa_round_trip_is_byte_identical() {
    for seed in 0..20 {
        let p = random_feasible(seed);
        let first = write_sdpa(&p);
        let second = write_sdpa(&parse_sdpa(&first).unwrap());
        assert_eq!(first, second);
    }
}
