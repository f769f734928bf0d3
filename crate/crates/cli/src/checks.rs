//! Reproduction checks over the bundled configurations. Each check prints
//! one PASS/FAIL line; expensive runs are cached and shared between checks.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcbf_core::model::{boundary_grid_oracle, variable_bounds};
use rcbf_core::momentrelax::{build_moment_sdp, verify, VerificationVerdict};
use rcbf_core::popbuild::build_verification_pop;
use rcbf_core::synth::{theta_moments, Sense, SynthesisLevel, ThetaMeasure};
use rcbf_sdp::random::random_feasible;
use rcbf_sdp::{parse_sdpa, sdp_solve, write_sdpa, SolverSettings, Status};

use crate::config::{parse_config, JobConfig, Problem};
use crate::drivers::{parameter_grid, run_selection_with, run_synthesis_levels, run_verify_sweep, ResultBundle};

pub const CLEAN: &str = include_str!("../../../configs/vanderpol_clean.json");
pub const UNCERTAIN: &str = include_str!("../../../configs/vanderpol_uncertain.json");
pub const UNCERTAIN_CIRCULAR: &str = include_str!("../../../configs/vanderpol_uncertain_circular.json");

pub const ALL: [usize; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Wall-clock budget in seconds for each solve of the elliptical synthesis.
const ELLIPSE_BUDGET: f64 = 1800.0;

#[derive(Clone, Debug)]
pub struct Check {
    pub id: usize,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {:>2}: {} ({:.1}s) {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

fn bundled(text: &str) -> JobConfig {
    parse_config(text, "bundled").expect("bundled configuration is valid")
}

fn near(x: &[f64], target: &[f64], tol: f64) -> bool {
    x.len() == target.len() && x.iter().zip(target).all(|(a, b)| (a - b).abs() <= tol)
}

fn fmt_pts(p: &[Vec<f64>]) -> String {
    let s: Vec<String> = p
        .iter()
        .map(|x| format!("[{}]", x.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")))
        .collect();
    s.join(" ")
}

struct Synth {
    levels: Vec<Option<SynthesisLevel>>,
    bundle: ResultBundle,
}

impl Synth {
    fn level(&self, nu: usize) -> Option<&SynthesisLevel> {
        self.levels.iter().flatten().find(|l| l.nu == nu)
    }

    fn error(&self, nu: usize) -> String {
        self.bundle
            .synthesis
            .as_ref()
            .and_then(|r| r.levels.iter().find(|l| l.nu == nu).and_then(|l| l.error.clone()))
            .unwrap_or_else(|| "level missing".into())
    }
}

/// Lazily computed runs shared between checks.
#[derive(Default)]
pub struct Suite {
    clean_sweep: Option<Result<ResultBundle, String>>,
    clean_synth: Option<Result<Synth, String>>,
    refined: Option<Result<Synth, String>>,
    ellipse: Option<Result<Synth, String>>,
    oracle_cache: BTreeMap<String, f64>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one criterion.
    pub fn run(&mut self, id: usize) -> Check {
        let start = Instant::now();
        let (pass, detail) = match id {
            1 => self.single_verify(0.1, -0.09, &[vec![0.0, 0.1f64.sqrt()], vec![0.0, -(0.1f64.sqrt())]]),
            2 => self.single_verify(1.1, 0.0, &[vec![1.1f64.sqrt(), 0.0], vec![-(1.1f64.sqrt()), 0.0]]),
            3 => self.validity_pattern(),
            4 => self.oracle_equivalence(),
            5 => self.clean_synthesis(),
            6 => self.dominance(),
            7 => self.refined(),
            8 => self.uncertain_circular(),
            9 => self.uncertain_ellipse(),
            10 => self.selection(),
            11 => self.properties(),
            _ => (false, format!("unknown criterion {id}")),
        };
        Check {
            id,
            pass,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn oracle(&mut self, p: &Problem, tag: &str, theta: &[f64]) -> f64 {
        let key = format!("{tag}{theta:?}");
        if let Some(v) = self.oracle_cache.get(&key) {
            return *v;
        }
        let v = boundary_grid_oracle(&p.model, &p.cbf, theta, 10_000)
            .map(|o| o.value)
            .unwrap_or(f64::NAN);
        self.oracle_cache.insert(key, v);
        v
    }

    fn single_verify(&mut self, theta: f64, rho: f64, targets: &[Vec<f64>]) -> (bool, String) {
        let cfg = bundled(CLEAN);
        let p = cfg.build().expect("bundled");
        let backend = cfg.backend();
        let v = match verify(&p.model, &p.cbf, &[theta], backend.as_ref(), &cfg.verify_options()) {
            Ok(v) => v,
            Err(e) => return (false, format!("θ={theta}: {e}")),
        };
        let xs = v.states(2);
        let located = !xs.is_empty() && xs.iter().all(|x| targets.iter().any(|t| near(x, t, 2e-2)));
        let ok = (v.rho - rho).abs() <= 2e-3 && located && v.seconds <= 60.0;
        (
            ok,
            format!(
                "θ={theta}: ρ={:.6} (target {rho} ± 2e-3), minimizers {} ({:?}), solve {:.1}s",
                v.rho,
                fmt_pts(&xs),
                v.extraction,
                v.seconds
            ),
        )
    }

    fn clean_sweep(&mut self) -> Result<&ResultBundle, String> {
        if self.clean_sweep.is_none() {
            let cfg = bundled(CLEAN);
            let thetas = cfg.verify.thetas.as_ref().expect("bundled sweep").expand().expect("range");
            self.clean_sweep = Some(run_verify_sweep(&cfg, &thetas).map_err(|e| e.to_string()));
        }
        self.clean_sweep.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    fn validity_pattern(&mut self) -> (bool, String) {
        let b = match self.clean_sweep() {
            Ok(b) => b,
            Err(e) => return (false, e),
        };
        let mut bad = vec![];
        for row in &b.sweep {
            let t = row.theta[0];
            let rho = row.verdict.as_ref().map(|v| v.rho).unwrap_or(f64::NAN);
            let valid = t < 1e-9 || t >= 1.0 - 1e-9;
            let ok = if valid { rho >= -2e-3 } else { rho < -2e-3 };
            if !ok {
                bad.push(format!("θ={t}: ρ={rho:.3e}"));
            }
        }
        let verified: Vec<String> = b
            .sweep
            .iter()
            .filter(|r| r.verdict.as_ref().is_some_and(|v| v.rho >= -2e-3))
            .map(|r| format!("{}", r.theta[0]))
            .collect();
        (
            bad.is_empty(),
            format!(
                "{} samples, ρ ≥ −2e-3 at θ ∈ {{{}}}{}",
                b.sweep.len(),
                verified.join(", "),
                if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join(", ")) }
            ),
        )
    }

    fn oracle_equivalence(&mut self) -> (bool, String) {
        let b = match self.clean_sweep() {
            Ok(b) => b.clone(),
            Err(e) => return (false, e),
        };
        let p = b.config.build().expect("bundled");
        let mut worst = (0.0f64, 0.0);
        let mut missing = 0;
        for row in &b.sweep {
            let g = match row.oracle {
                Some(g) => g,
                None => self.oracle(&p, "clean", &row.theta),
            };
            match &row.verdict {
                Some(v) => {
                    let d = (v.rho - g).abs();
                    if !(d <= worst.0) {
                        worst = (d, row.theta[0]);
                    }
                }
                None => missing += 1,
            }
        }
        (
            missing == 0 && worst.0 <= 2e-3,
            format!("max |ρ − V_grid| = {:.2e} at θ={} ({missing} failed solves)", worst.0, worst.1),
        )
    }

    fn synth(cfg: JobConfig) -> Result<Synth, String> {
        run_synthesis_levels(&cfg)
            .map(|(bundle, levels)| Synth { levels, bundle })
            .map_err(|e| e.to_string())
    }

    fn clean_synth(&mut self) -> Result<&Synth, String> {
        if self.clean_synth.is_none() {
            let mut cfg = bundled(CLEAN);
            cfg.synth.nus = vec![3, 4];
            self.clean_synth = Some(Self::synth(cfg));
        }
        self.clean_synth.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    fn refined_synth(&mut self) -> Result<&Synth, String> {
        if self.refined.is_none() {
            let mut cfg = bundled(CLEAN);
            cfg.synth.nus = vec![4];
            cfg.synth.partition = Some(vec![1.0, 2.0]);
            self.refined = Some(Self::synth(cfg));
        }
        self.refined.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    fn ellipse_synth(&mut self) -> Result<&Synth, String> {
        if self.ellipse.is_none() {
            let mut cfg = bundled(UNCERTAIN);
            cfg.synth.nus = vec![3, 4];
            cfg.solver.time_limit = Some(ELLIPSE_BUDGET);
            self.ellipse = Some(Self::synth(cfg));
        }
        self.ellipse.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    fn clean_synthesis(&mut self) -> (bool, String) {
        let s = match self.clean_synth() {
            Ok(s) => s,
            Err(e) => return (false, e),
        };
        let mut ok = true;
        let mut parts = vec![];
        for (nu, targets) in [(3, vec![1.3997, 1.8806]), (4, vec![1.3275])] {
            match s.level(nu) {
                Some(l) => {
                    let located = l.max.maximizers.iter().any(|m| targets.iter().any(|t| (m[0] - t).abs() <= 5e-2));
                    let pass = l.max.value.abs() <= 1e-3 && located;
                    ok &= pass;
                    parts.push(format!(
                        "ν={nu}: V*={:.3e} at {} (targets {targets:?}, {:.0}s)",
                        l.max.value,
                        fmt_pts(&l.max.maximizers),
                        l.seconds
                    ));
                }
                None => {
                    ok = false;
                    parts.push(format!("ν={nu}: {}", s.error(nu)));
                }
            }
        }
        (ok, parts.join("; "))
    }

    fn dominance(&mut self) -> (bool, String) {
        let clean = bundled(CLEAN).build().expect("bundled");
        let unc = bundled(UNCERTAIN).build().expect("bundled");
        let scalar: Vec<Vec<f64>> = (0..200).map(|k| vec![2.0 * k as f64 / 199.0]).collect();
        let ell = {
            let all = parameter_grid(&unc.cbf, 0);
            let step = all.len() as f64 / 200.0;
            (0..200.min(all.len())).map(|k| all[(k as f64 * step) as usize].clone()).collect::<Vec<_>>()
        };
        let mut runs: Vec<(String, &Problem, &str, Vec<Vec<f64>>, Vec<SynthesisLevel>)> = vec![];
        let mut missing = vec![];
        for (tag, res) in [("clean", self.clean_synth().map(|s| s.levels.clone())), ("refined", self.refined_synth().map(|s| s.levels.clone()))] {
            match res {
                Ok(ls) => {
                    let grid = if tag == "refined" {
                        (0..200).map(|k| vec![1.0 + k as f64 / 199.0]).collect()
                    } else {
                        scalar.clone()
                    };
                    runs.push((tag.into(), &clean, "clean", grid, ls.into_iter().flatten().collect()));
                }
                Err(e) => missing.push(format!("{tag}: {e}")),
            }
        }
        match self.ellipse_synth().map(|s| s.levels.clone()) {
            Ok(ls) => runs.push(("ellipse".into(), &unc, "ellipse", ell, ls.into_iter().flatten().collect())),
            Err(e) => missing.push(format!("ellipse: {e}")),
        }
        let mut worst = f64::NEG_INFINITY;
        let mut parts = vec![];
        let mut count = 0;
        let mut clean_gaps = vec![];
        for (tag, p, otag, grid, levels) in runs {
            for l in levels {
                let mut w = f64::NEG_INFINITY;
                let mut gap = 0.0;
                for t in &grid {
                    let g = self.oracle(p, otag, t);
                    w = w.max(l.bound.eval(t) - g);
                    gap += g - l.bound.eval(t);
                }
                if tag == "clean" {
                    clean_gaps.push(format!("ν={}: {:.2e}", l.nu, gap / grid.len() as f64));
                }
                worst = worst.max(w);
                count += 1;
                parts.push(format!("{tag} ν={}: max(V_ν − V_grid) = {w:.2e}", l.nu));
            }
        }
        if !clean_gaps.is_empty() {
            parts.push(format!("clean mean(V_grid − V_ν) {}", clean_gaps.join(", ")));
        }
        if !missing.is_empty() {
            parts.push(format!("missing runs: {}", missing.join("; ")));
        }
        (missing.is_empty() && count > 0 && worst <= 2e-3, parts.join("; "))
    }

    fn refined(&mut self) -> (bool, String) {
        let clean = bundled(CLEAN).build().expect("bundled");
        let s = match self.refined_synth() {
            Ok(s) => s,
            Err(e) => return (false, e),
        };
        let l = match s.level(4) {
            Some(l) => l.clone(),
            None => return (false, format!("ν=4 on [1, 2]: {}", s.error(4))),
        };
        let mut worst = (0.0f64, 1.0);
        for k in 0..200 {
            let t = [1.0 + k as f64 / 199.0];
            let d = (l.bound.eval(&t) - self.oracle(&clean, "clean", &t)).abs();
            if !(d <= worst.0) {
                worst = (d, t[0]);
            }
        }
        (
            worst.0 <= 1e-2,
            format!("max |V_4 − V_grid| on [1, 2] = {:.2e} at θ={:.3} ({:.0}s)", worst.0, worst.1, l.seconds),
        )
    }

    fn uncertain_circular(&mut self) -> (bool, String) {
        let cfg = bundled(UNCERTAIN_CIRCULAR);
        let thetas = cfg.verify.thetas.as_ref().expect("bundled").expand().expect("list");
        let b = match run_verify_sweep(&cfg, &thetas) {
            Ok(b) => b,
            Err(e) => return (false, e.to_string()),
        };
        let rhos: Vec<(f64, Option<f64>)> = b.sweep.iter().map(|r| (r.theta[0], r.verdict.as_ref().map(|v| v.rho))).collect();
        let ok = rhos.len() == 5 && rhos.iter().all(|(_, r)| r.is_some_and(|r| r <= 2e-3));
        let s: Vec<String> = rhos
            .iter()
            .map(|(t, r)| format!("θ={t}: ρ={}", r.map(|r| format!("{r:.3e}")).unwrap_or("error".into())))
            .collect();
        (ok, s.join(", "))
    }

    fn uncertain_ellipse(&mut self) -> (bool, String) {
        let s = match self.ellipse_synth() {
            Ok(s) => s,
            Err(e) => return (false, e),
        };
        let mut ok = true;
        let mut parts = vec![];
        for (nu, value, tol, target, limit) in [
            (3, 0.2376, 0.02, [0.25, 0.2757, 0.1323], f64::INFINITY),
            (4, 1.0606, 0.05, [0.3278, 0.25, 0.1718], ELLIPSE_BUDGET),
        ] {
            match s.level(nu) {
                Some(l) => {
                    let located = l.max.maximizers.iter().any(|m| near(m, &target, 5e-2));
                    let pass = (l.max.value - value).abs() <= tol && located && l.seconds <= limit;
                    ok &= pass;
                    parts.push(format!(
                        "ν={nu}: V*={:.4} at {} (target {value} at {target:?}, {:.0}s)",
                        l.max.value,
                        fmt_pts(&l.max.maximizers),
                        l.seconds
                    ));
                }
                None => {
                    ok = false;
                    parts.push(format!("ν={nu}: {}", s.error(nu)));
                }
            }
        }
        (ok, parts.join("; "))
    }

    fn selection(&mut self) -> (bool, String) {
        let level = match self.ellipse_synth() {
            Ok(s) => s.level(3).cloned(),
            Err(_) => None,
        };
        let mut ok = true;
        let mut parts = vec![];
        for (sense, target) in [(Sense::Max, [0.4714, 0.5236, 0.0893]), (Sense::Min, [0.25, 0.25, 0.15])] {
            let mut cfg = bundled(UNCERTAIN);
            cfg.select.sense = sense;
            cfg.select.nu = 3;
            let res = run_selection_with(&cfg, level.as_ref());
            let sel = res
                .map_err(|e| e.to_string())
                .and_then(|b| {
                    let r = b.selection.expect("selection report");
                    r.selection.ok_or(r.error.unwrap_or_default())
                });
            match sel {
                Ok(s) => {
                    let pass = near(&s.theta, &target, 2e-2);
                    ok &= pass;
                    parts.push(format!("{sense:?}: θ={} det={:.4} (target {target:?})", fmt_pts(&[s.theta.clone()]), s.metric));
                }
                Err(e) => {
                    ok = false;
                    parts.push(format!("{sense:?}: {e}"));
                }
            }
        }
        (ok, parts.join("; "))
    }

    fn properties(&mut self) -> (bool, String) {
        let mut fails = vec![];
        let mut notes = vec![];

        // relaxation monotonicity, PSD moments and witness feasibility
        let cfg = bundled(CLEAN);
        let p = cfg.build().expect("bundled");
        let backend = cfg.backend();
        for theta in [0.3, 1.5] {
            let mut prev: Option<VerificationVerdict> = None;
            for kappa in 2..=4 {
                let mut opts = cfg.verify_options();
                opts.kappa = kappa;
                let v = match verify(&p.model, &p.cbf, &[theta], backend.as_ref(), &opts) {
                    Ok(v) => v,
                    Err(rcbf_core::CoreError::OrderTooLow { .. }) => continue,
                    Err(e) => {
                        fails.push(format!("θ={theta} κ={kappa}: {e}"));
                        continue;
                    }
                };
                if let Some(pv) = &prev {
                    if pv.rho > v.rho + 1e-6 {
                        fails.push(format!("θ={theta}: ρ_{} = {} > ρ_{kappa} = {}", pv.kappa, pv.rho, v.rho));
                    }
                }
                if v.moment_min_eig < -1e-6 {
                    fails.push(format!("θ={theta} κ={kappa}: moment λmin {:.2e}", v.moment_min_eig));
                }
                if let Some(e) = v.violations.iter().find(|e| **e > 1e-6) {
                    fails.push(format!("θ={theta} κ={kappa}: witness violation {e:.2e}"));
                }
                prev = Some(v);
            }
        }
        notes.push("monotonicity/PSD/feasibility at θ ∈ {0.3, 1.5}, κ = 2..4".to_string());

        // KKT residuals on random feasible instances
        let settings = SolverSettings::default();
        let mut worst = 0.0f64;
        for seed in 0..50 {
            let q = random_feasible(seed);
            match sdp_solve(&q, &settings) {
                Ok(s) if s.status == Status::Optimal => worst = worst.max(s.residuals.max()),
                Ok(s) => fails.push(format!("random instance {seed}: {}", s.status)),
                Err(e) => fails.push(format!("random instance {seed}: {e}")),
            }
        }
        if worst > 1e-6 {
            fails.push(format!("random KKT residual {worst:.2e}"));
        }
        notes.push(format!("50 random SDPs, max KKT residual {worst:.1e}"));

        // parameter moments against quadrature and sampling
        let unc = bundled(UNCERTAIN).build().expect("bundled");
        let measure = ThetaMeasure::uniform(&unc.cbf.theta).expect("measure");
        let (dev, samples) = ellipse_moment_deviation(&measure, 10_000_000);
        if dev > 3.0 {
            fails.push(format!("ellipse moments deviate by {dev:.2} standard errors"));
        }
        notes.push(format!("ellipse moments within {dev:.2} SE over {samples} samples"));
        let iv = ThetaMeasure::uniform(&p.cbf.theta).expect("measure");
        for k in 0..=8u8 {
            let exact = 2f64.powi(k as i32) / (k as f64 + 1.0);
            let got = theta_moments(&iv, &[k]).unwrap_or(f64::NAN);
            if !((got - exact).abs() <= 1e-12 * exact.max(1.0)) {
                fails.push(format!("interval moment {k}: {got} vs {exact}"));
            }
        }

        // SDPA round trip on a moment relaxation and random instances
        let bounds = variable_bounds(&p.model, &p.cbf, None).expect("bounds");
        let pop = build_verification_pop(&p.model, &p.cbf, Some(&[0.1]), &bounds, cfg.pop).expect("pop");
        let msdp = build_moment_sdp(&pop, 4).expect("relaxation");
        let mut problems = vec![msdp.sdp];
        problems.extend((0..10).map(random_feasible));
        for (i, q) in problems.iter().enumerate() {
            let a = write_sdpa(q);
            let same = parse_sdpa(&a).map(|r| write_sdpa(&r) == a).unwrap_or(false);
            if !same {
                fails.push(format!("SDPA round trip differs on problem {i}"));
            }
        }
        notes.push(format!("{} SDPA round trips", problems.len()));

        let ok = fails.is_empty();
        if !ok {
            notes.push(format!("failures: {}", fails.join("; ")));
        }
        (ok, notes.join("; "))
    }
}

/// Largest deviation, in standard errors, between the closed-form moments
/// of the uniform measure on the coupled ellipse set and a rejection-sampling
/// estimate, over all monomials of degree ≤ 4.
pub fn ellipse_moment_deviation(m: &ThetaMeasure, draws: usize) -> (f64, usize) {
    let (lo, hi, xi) = match m {
        ThetaMeasure::EllipseCoupled { lo, hi, xi } => (*lo, *hi, *xi),
        _ => return (f64::NAN, 0),
    };
    let mut betas = vec![];
    for a in 0..=4u8 {
        for b in 0..=4 - a {
            for c in 0..=4 - a - b {
                betas.push([a, b, c]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sum = vec![0.0; betas.len()];
    let mut sq = vec![0.0; betas.len()];
    let mut n = 0usize;
    let r = xi * hi;
    for _ in 0..draws {
        let t1 = rng.gen_range(lo..hi);
        let t2 = rng.gen_range(lo..hi);
        let t3 = rng.gen_range(-r..r);
        if t3 * t3 > xi * xi * t1 * t2 {
            continue;
        }
        n += 1;
        for (k, b) in betas.iter().enumerate() {
            let v = t1.powi(b[0] as i32) * t2.powi(b[1] as i32) * t3.powi(b[2] as i32);
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let nf = n as f64;
    let mut worst = 0.0f64;
    for (k, b) in betas.iter().enumerate() {
        let mean = sum[k] / nf;
        let var = (sq[k] / nf - mean * mean).max(0.0);
        let se = (var / nf).sqrt();
        let exact = theta_moments(m, b).unwrap_or(f64::NAN);
        let dev = if se > 0.0 {
            (mean - exact).abs() / se
        } else if (mean - exact).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(dev);
    }
    (worst, n)
}
