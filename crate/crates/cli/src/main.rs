use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subhmc::config::{Config, KEYS};
use subhmc::expt::{self, Scenario};
use subhmc::sampler::run_chain_traced;
use subhmc::selftest::run_selftest;
use subhmc::{Error, ModelContext, SamplerConfig};

const AFTER_HELP: &str = "\
Configuration precedence (highest first):
  1. KEY=VALUE overrides given after the subcommand (and --seed / --out)
  2. values from the --config file (one `section.key = value` per line, # comments)
  3. built-in defaults (see `subhmc show-config`)

Exit codes: 0 success, 2 unknown key or invalid configuration, 3 numerical divergence, 1 other errors.";

#[derive(Parser)]
#[command(name = "subhmc", version, about = "Hamiltonian Monte Carlo with data subsampling", after_help = AFTER_HELP)]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; same as `run.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; same as `output.dir=PATH`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact and numerical trajectories, full data against fixed batches.
    Trajectory(Overrides),
    /// Acceptance against dimension for calibrated full and subsampled chains.
    Dimscan(Overrides),
    /// Energy along symmetric sweeps and its step-size scan.
    Sweep(Overrides),
    /// Endpoint error against step size for every schedule.
    Plateau(Overrides),
    /// One chain configured by the `model` and `sampler` sections.
    Chain(Overrides),
    /// Run the invariant suite.
    Selftest,
    /// Print the resolved configuration with one line per key.
    ShowConfig(Overrides),
}

#[derive(clap::Args)]
struct Overrides {
    /// `section.key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(cli: &Cli, ov: &Overrides) -> subhmc::Result<Config> {
    let mut all = Vec::new();
    if let Some(s) = cli.seed {
        all.push(format!("run.seed={s}"));
    }
    if let Some(o) = &cli.out {
        all.push(format!("output.dir={}", o.display()));
    }
    all.extend(ov.set.iter().cloned());
    Config::load(cli.config.as_deref(), &all)
}

fn emit(cfg: &Config, result: &dyn Scenario) -> subhmc::Result<()> {
    expt::write_artifacts(&cfg.output_dir, result)?;
    println!("{}", result.summary());
    Ok(())
}

fn chain(cfg: &Config) -> subhmc::Result<()> {
    let ctx = ModelContext::generate(cfg.model_config(cfg.model.d), cfg.model.b)?;
    let sc = SamplerConfig {
        eps: cfg.sampler.eps,
        tau_max: cfg.sampler.tau_max,
        n_iterations: cfg.sampler.iterations,
        warmup_fraction: cfg.sampler.warmup,
        metropolis: cfg.sampler.metropolis,
        schedule: cfg.sampler_schedule(ctx.partition().count()),
        seed: cfg.seed,
    };
    let run = run_chain_traced(&sc, &ctx)?;
    let s = &run.summary;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    std::fs::write(cfg.output_dir.join("chain_summary.csv"), buf)?;
    if cfg.sampler.trace {
        let mut buf = Vec::new();
        run.write_trace_csv(&mut buf)?;
        std::fs::write(cfg.output_dir.join("chain_trace.csv"), buf)?;
    }
    let z_max = s
        .est_mean
        .iter()
        .zip(&s.analytic_mean)
        .zip(&s.mc_se)
        .map(|((e, m), se)| (e - m).abs() / se)
        .fold(0.0, f64::max);
    println!(
        "chain: mean_accept={:.4} est_mean[0]={:.5} analytic_mean[0]={:.5} mc_se[0]={:.2e} max_se_ratio={:.2} within_3se={} mean_abs_z={:.4} divergences={}",
        s.mean_accept, s.est_mean[0], s.analytic_mean[0], s.mc_se[0], z_max, z_max < 3.0, s.mean_abs_z, s.divergences
    );
    if s.divergences > 0 {
        return Err(Error::Divergence {
            step: 0,
            detail: format!("{} of {} trajectories diverged", s.divergences, s.iterations),
        });
    }
    Ok(())
}

fn selftest() -> subhmc::Result<bool> {
    let checks = run_selftest()?;
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    println!("selftest: {}/{} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
    Ok(ok)
}

fn dispatch(cli: &Cli) -> subhmc::Result<bool> {
    match &cli.command {
        Command::Trajectory(ov) => {
            let cfg = resolve(cli, ov)?;
            emit(&cfg, &expt::scenario_trajectory(&cfg)?)?;
        }
        Command::Dimscan(ov) => {
            let cfg = resolve(cli, ov)?;
            emit(&cfg, &expt::scenario_dimscan(&cfg)?)?;
        }
        Command::Sweep(ov) => {
            let cfg = resolve(cli, ov)?;
            emit(&cfg, &expt::scenario_sweep(&cfg)?)?;
        }
        Command::Plateau(ov) => {
            let cfg = resolve(cli, ov)?;
            emit(&cfg, &expt::scenario_plateau(&cfg)?)?;
        }
        Command::Chain(ov) => chain(&resolve(cli, ov)?)?,
        Command::Selftest => return selftest(),
        Command::ShowConfig(ov) => {
            let cfg = resolve(cli, ov)?;
            for (k, help) in KEYS {
                println!("{k} = {}    # {help}", cfg.get(k)?);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Trajectory(_) => "trajectory",
        Command::Dimscan(_) => "dimscan",
        Command::Sweep(_) => "sweep",
        Command::Plateau(_) => "plateau",
        Command::Chain(_) => "chain",
        Command::Selftest => "selftest",
        Command::ShowConfig(_) => "show-config",
    };
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("subhmc {name}: {e}");
            ExitCode::from(match e {
                Error::UnknownKey(_) | Error::Config(_) | Error::Parse { .. } | Error::BatchIndex { .. } => 2,
                Error::Divergence { .. } => 3,
                _ => 1,
            })
        }
    }
}
