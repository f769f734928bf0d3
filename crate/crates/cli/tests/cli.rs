use std::process::Command;

use rcbf::checks::CLEAN;
use rcbf::drivers::{run_synthesis, run_verify, run_verify_sweep};
use rcbf::{emit_results, parse_config};

fn clean() -> rcbf::JobConfig {
    parse_config(CLEAN, "clean").unwrap()
}

#[test]
fn sweep_csv_header_and_determinism() {
    let cfg = clean();
    let b = run_verify_sweep(&cfg, &[vec![0.5], vec![1.5]]).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    emit_results(&b, d1.path(), 2).unwrap();
    emit_results(&b, d2.path(), 2).unwrap();
    let csv = std::fs::read_to_string(d1.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("theta,rho,status,x1,x2,rank,seconds\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains(",refuted,"));
    for f in ["sweep.csv", "result.json"] {
        assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
    }
    let back: rcbf::ResultBundle = serde_json::from_slice(&std::fs::read(d1.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(back.schema, "rcbf-result/1");
    assert_eq!(back.sweep.len(), 2);
}

#[test]
fn single_sample_sweep_matches_verify() {
    let cfg = clean();
    let a = run_verify(&cfg, &[0.5]).unwrap();
    let b = run_verify_sweep(&cfg, &[vec![0.5]]).unwrap();
    let (va, vb) = (a.sweep[0].verdict.as_ref().unwrap(), b.sweep[0].verdict.as_ref().unwrap());
    assert_eq!(va.rho, vb.rho);
    assert_eq!(va.minimizers, vb.minimizers);
    // V(0.5) = −0.25 with witnesses on the x2 axis
    assert!((va.rho + 0.25).abs() < 2e-3, "{}", va.rho);
    assert!((a.sweep[0].oracle.unwrap() + 0.25).abs() < 1e-6);
}

#[test]
fn synthesis_writes_one_table_per_order() {
    let mut cfg = clean();
    cfg.synth.nus = vec![2, 3];
    cfg.synth.grid_points = 21;
    cfg.verify.oracle_points = 200;
    let b = run_synthesis(&cfg).unwrap();
    for l in &b.synthesis.as_ref().unwrap().levels {
        assert!(l.error.is_none(), "ν={}: {:?}", l.nu, l.error);
    }
    let d = tempfile::tempdir().unwrap();
    emit_results(&b, d.path(), 2).unwrap();
    for nu in [2, 3] {
        let t = std::fs::read_to_string(d.path().join(format!("vnu_{nu}.csv"))).unwrap();
        assert!(t.starts_with("theta,v_nu,v_grid\n"));
        assert_eq!(t.lines().count(), 22);
    }
    let rep = b.synthesis.unwrap();
    assert!(rep.best_value.is_some());
    for l in &rep.levels {
        for g in &rep.grid {
            assert!(l.eval(&g.theta) <= g.oracle.unwrap() + 2e-3);
        }
    }
}

fn rcbf(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rcbf")).args(args).output().unwrap()
}

#[test]
fn exit_codes() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/vanderpol_clean.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(rcbf(&["verify", "--config", "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(rcbf(&["verify", "--config", root, "--theta", "7", "--out", out]).status.code(), Some(2));
    assert_eq!(rcbf(&["verify", "--config", root, "--theta", "0.5", "--kappa", "1", "--out", out]).status.code(), Some(3));
    let ok = rcbf(&["verify", "--config", root, "--theta", "1.5", "--out", out]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("sweep.csv").exists());
    let sdpa = dir.path().join("p.dat-s");
    let ex = rcbf(&["export-sdpa", "--config", root, "--theta", "0.1", "--out", sdpa.to_str().unwrap()]);
    assert_eq!(ex.status.code(), Some(0));
    let text = std::fs::read_to_string(&sdpa).unwrap();
    assert_eq!(rcbf_sdp::write_sdpa(&rcbf_sdp::parse_sdpa(&text).unwrap()), text);
}
