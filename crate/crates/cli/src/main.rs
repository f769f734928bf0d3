use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rcbf::checks::{Suite, ALL};
use rcbf::config::{parse_range, ConfigError, JobConfig};
use rcbf::drivers::{run_selection, run_synthesis, run_verify, run_verify_sweep, ResultBundle, RunError};
use rcbf::{emit_results, load_config};
use rcbf_core::model::variable_bounds;
use rcbf_core::momentrelax::build_moment_sdp;
use rcbf_core::popbuild::build_verification_pop;
use rcbf_core::synth::{build_lower_bound_sos, Sense, ThetaMeasure};

#[derive(Parser)]
#[command(name = "rcbf", version, about = "Verify and synthesize robust control barrier functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's `output`, else results/<name>)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify one parameter value
    Verify {
        #[command(flatten)]
        common: Common,
        /// Parameter value, comma separated for vector parameters
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        kappa: Option<usize>,
    },
    /// Verify a list or range of parameter values
    VerifySweep {
        #[command(flatten)]
        common: Common,
        /// "lo:step:hi" for a scalar parameter
        #[arg(long)]
        thetas: Option<String>,
        #[arg(long)]
        kappa: Option<usize>,
    },
    /// Synthesize lower bounds V_ν and maximize them
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        nus: Option<Vec<usize>>,
        /// Breakpoints of a scalar parameter, e.g. 0,1,2
        #[arg(long, value_delimiter = ',')]
        partition: Option<Vec<f64>>,
    },
    /// Optimize a metric over parameters certified by V_ν ≥ 0
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long, value_parser = ["min", "max"])]
        sense: Option<String>,
        #[arg(long)]
        nu: Option<usize>,
    },
    /// Write the moment relaxation (or, with --nu, the lower-bound program) in SDPA format
    ExportSdpa {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        kappa: Option<usize>,
        #[arg(long)]
        nu: Option<usize>,
    },
    /// Run the reproduction checks on the bundled configurations
    SelfTest {
        /// Criteria to run (default: all)
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<usize>>,
    },
}

fn load(path: &PathBuf) -> Result<JobConfig, RunError> {
    Ok(load_config(path)?)
}

fn parse_theta(s: &str) -> Result<Vec<f64>, RunError> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| {
            ConfigError::Invalid {
                field: "--theta".into(),
                msg: e.to_string(),
            }
            .into()
        })
}

fn first_theta(cfg: &JobConfig, arg: Option<&str>) -> Result<Vec<f64>, RunError> {
    if let Some(s) = arg {
        return parse_theta(s);
    }
    let samples = cfg.verify.thetas.as_ref().map(|t| t.expand()).transpose().map_err(|msg| ConfigError::Invalid {
        field: "verify.thetas".into(),
        msg,
    })?;
    samples.and_then(|s| s.into_iter().next()).ok_or_else(|| {
        ConfigError::Invalid {
            field: "--theta".into(),
            msg: "no parameter value given".into(),
        }
        .into()
    })
}

fn finish(b: &ResultBundle, cfg: &JobConfig, out: Option<PathBuf>) -> Result<(), RunError> {
    let dir = out.unwrap_or_else(|| cfg.output_dir());
    let n = cfg.model.f.len();
    for p in emit_results(b, &dir, n)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<(), RunError> {
    match cmd {
        Cmd::Verify { common, theta, kappa } => {
            let mut cfg = load(&common.config)?;
            if let Some(k) = kappa {
                cfg.verify.kappa = k;
            }
            let t = first_theta(&cfg, theta.as_deref())?;
            let b = run_verify(&cfg, &t)?;
            if let Some(v) = b.sweep.first().and_then(|r| r.verdict.as_ref()) {
                println!("θ = {t:?}: ρ = {:.8} ({}), minimizers {:?}", v.rho, v.status.as_str(), v.states(cfg.model.f.len()));
            }
            finish(&b, &cfg, common.out)
        }
        Cmd::VerifySweep { common, thetas, kappa } => {
            let mut cfg = load(&common.config)?;
            if let Some(k) = kappa {
                cfg.verify.kappa = k;
            }
            let samples = match thetas {
                Some(s) => parse_range(&s)
                    .map_err(|msg| ConfigError::Invalid {
                        field: "--thetas".into(),
                        msg,
                    })?
                    .into_iter()
                    .map(|t| vec![t])
                    .collect(),
                None => match &cfg.verify.thetas {
                    Some(t) => t.expand().map_err(|msg| ConfigError::Invalid {
                        field: "verify.thetas".into(),
                        msg,
                    })?,
                    None => {
                        return Err(ConfigError::Invalid {
                            field: "verify.thetas".into(),
                            msg: "no samples given".into(),
                        }
                        .into())
                    }
                },
            };
            let b = run_verify_sweep(&cfg, &samples)?;
            for r in &b.sweep {
                match &r.verdict {
                    Some(v) => println!("θ = {:?}: ρ = {:.6e} {}", r.theta, v.rho, v.status.as_str()),
                    None => println!("θ = {:?}: error: {}", r.theta, r.error.as_deref().unwrap_or("")),
                }
            }
            finish(&b, &cfg, common.out)
        }
        Cmd::Synth { common, nus, partition } => {
            let mut cfg = load(&common.config)?;
            if let Some(n) = nus {
                cfg.synth.nus = n;
            }
            if partition.is_some() {
                cfg.synth.partition = partition;
            }
            cfg.build()?;
            let b = run_synthesis(&cfg)?;
            if let Some(r) = &b.synthesis {
                for l in &r.levels {
                    match &l.error {
                        None => println!(
                            "ν = {}{}: max V_ν = {:.6e} at {:?}{}",
                            l.nu,
                            l.piece.map(|p| format!(" on {p:?}")).unwrap_or_default(),
                            l.maximum.value,
                            l.maximum.maximizers,
                            if l.tainted { " (tainted)" } else { "" }
                        ),
                        Some(e) => println!("ν = {}: failed: {e}", l.nu),
                    }
                }
                if let (Some(v), Some(nu)) = (r.best_value, r.best_nu) {
                    println!("best: {v:.6e} at ν = {nu}, θ = {:?}", r.best_theta.as_deref().unwrap_or(&[]));
                }
            }
            finish(&b, &cfg, common.out)
        }
        Cmd::Select { common, metric, sense, nu } => {
            let mut cfg = load(&common.config)?;
            if let Some(m) = metric {
                cfg.select.metric = m;
            }
            if let Some(s) = sense {
                cfg.select.sense = if s == "min" { Sense::Min } else { Sense::Max };
            }
            if let Some(n) = nu {
                cfg.select.nu = n;
            }
            let b = run_selection(&cfg)?;
            let r = b.selection.as_ref().expect("selection report");
            let failed = r.error.clone();
            if let Some(s) = &r.selection {
                println!("θ = {:?}, metric = {:.6}, V_ν(θ) = {:.3e}", s.theta, s.metric, s.lower_bound);
            }
            finish(&b, &cfg, common.out)?;
            match failed {
                Some(e) => Err(RunError::Failed(e)),
                None => Ok(()),
            }
        }
        Cmd::ExportSdpa {
            config,
            out,
            theta,
            kappa,
            nu,
        } => {
            let cfg = load(&config)?;
            let p = cfg.build()?;
            let bounds = variable_bounds(&p.model, &p.cbf, None)?;
            let sdp = match nu {
                Some(nu) => {
                    let pop = build_verification_pop(&p.model, &p.cbf, None, &bounds, cfg.pop)?;
                    let measure = ThetaMeasure::uniform(&p.cbf.theta)?;
                    build_lower_bound_sos(&pop, nu, &measure)?.0
                }
                None => {
                    let t = first_theta(&cfg, theta.as_deref())?;
                    let pop = build_verification_pop(&p.model, &p.cbf, Some(&t), &bounds, cfg.pop)?;
                    build_moment_sdp(&pop, kappa.unwrap_or(cfg.verify.kappa))?.sdp
                }
            };
            std::fs::write(&out, rcbf_sdp::write_sdpa(&sdp))?;
            info!("{} constraints, {} blocks", sdp.constraints.len(), sdp.blocks.len());
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::SelfTest { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Cmd::SelfTest { criteria } = &cli.cmd {
        let mut suite = Suite::new();
        let mut failed = 0;
        for id in criteria.clone().unwrap_or_else(|| ALL.to_vec()) {
            let c = suite.run(id);
            println!("{c}");
            failed += usize::from(!c.pass);
        }
        return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(4) };
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
