//! Flat `section.key = value` configuration.
//!
//! Precedence: command-line overrides, then the configuration file, then the
//! built-in defaults. Every key has a default reproducing the reference
//! experimental setup, so an empty file is a valid configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrate::SubsampleSchedule;
use crate::model::{ModelConfig, TrueMeans};

#[derive(Clone, Debug, PartialEq)]
pub enum MeanSetting {
    Constant(f64),
    Draw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Full,
    Fixed,
    RandomFixed,
    PerStep,
    Sweep,
    PartialSweep,
}

impl ScheduleKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "full" => Self::Full,
            "fixed" => Self::Fixed,
            "random-fixed" => Self::RandomFixed,
            "per-step" => Self::PerStep,
            "sweep" => Self::Sweep,
            "partial-sweep" => Self::PartialSweep,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Fixed => "fixed",
            Self::RandomFixed => "random-fixed",
            Self::PerStep => "per-step",
            Self::Sweep => "sweep",
            Self::PartialSweep => "partial-sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub sigma: f64,
    pub m: f64,
    pub s: f64,
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub mu: MeanSetting,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSection {
    pub eps: f64,
    pub tau_max: f64,
    pub iterations: usize,
    pub warmup: f64,
    pub metropolis: bool,
    pub schedule: ScheduleKind,
    pub batch: usize,
    pub pool: usize,
    pub close_loop: bool,
    pub trace: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySection {
    pub eps: f64,
    pub tau: f64,
    /// `None` starts at the posterior mean.
    pub q0: Option<f64>,
    pub p0: f64,
    pub batch_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimscanSection {
    pub dims: Vec<usize>,
    pub target_accept: f64,
    pub cost_factor: f64,
    pub pool: usize,
    pub iterations: usize,
    pub pilot_iterations: usize,
    pub subsampled_metropolis: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSection {
    pub eps: f64,
    pub sweeps: usize,
    pub eps_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSection {
    pub eps_grid: Vec<f64>,
    pub tau: f64,
    pub pool: usize,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub sampler: SamplerSection,
    pub trajectory: TrajectorySection,
    pub dimscan: DimscanSection,
    pub sweep: SweepSection,
    pub plateau: PlateauSection,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            model: ModelSection { sigma: 2.0, m: 0.0, s: 1.0, n: 500, d: 1, b: 20, mu: MeanSetting::Constant(1.0) },
            sampler: SamplerSection {
                eps: 0.05,
                tau_max: TWO_PI,
                iterations: 5000,
                warmup: 0.1,
                metropolis: true,
                schedule: ScheduleKind::Full,
                batch: 0,
                pool: 5,
                close_loop: false,
                trace: false,
            },
            trajectory: TrajectorySection {
                eps: 0.01,
                tau: TWO_PI,
                q0: None,
                p0: 1.0,
                batch_sizes: vec![20, 100, 250, 500],
            },
            dimscan: DimscanSection {
                dims: vec![1, 2, 5, 10, 20, 50, 100],
                target_accept: 0.9,
                cost_factor: 5.0,
                pool: 5,
                iterations: 2000,
                pilot_iterations: 500,
                subsampled_metropolis: false,
            },
            sweep: SweepSection { eps: 0.0025, sweeps: 500, eps_grid: vec![0.0025, 0.00125, 0.000625] },
            plateau: PlateauSection { eps_grid: vec![0.004, 0.002, 0.001, 0.0005], tau: 1.0, pool: 5, batch: 0 },
        }
    }
}

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("run.seed", "root seed for every random stream"),
    ("output.dir", "directory receiving scenario CSVs"),
    ("model.sigma", "likelihood standard deviation"),
    ("model.m", "prior mean"),
    ("model.s", "prior standard deviation"),
    ("model.N", "observations per dimension"),
    ("model.D", "dimension (chain runs)"),
    ("model.B", "batch size; must divide model.N"),
    ("model.mu", "true mean, a number or `draw` for Normal(0,1) per dimension"),
    ("sampler.eps", "leapfrog step size"),
    ("sampler.tau_max", "integration time is drawn from U(0, tau_max)"),
    ("sampler.iterations", "chain length including warm-up"),
    ("sampler.warmup", "fraction of iterations discarded"),
    ("sampler.metropolis", "apply the full-data Metropolis correction"),
    ("sampler.schedule", "full | fixed | random-fixed | per-step | sweep | partial-sweep"),
    ("sampler.batch", "batch for the fixed schedule (0-based)"),
    ("sampler.pool", "the first `pool` batches feed random and partial schedules"),
    ("sampler.close_loop", "per-step schedule reuses its first batch on the last step"),
    ("sampler.trace", "also write the per-iteration trace"),
    ("trajectory.eps", "step size"),
    ("trajectory.tau", "integration time"),
    ("trajectory.q0", "initial position, a number or `posterior` for the posterior mean"),
    ("trajectory.p0", "initial momentum"),
    ("trajectory.batch_sizes", "subsample sizes compared against the full data"),
    ("dimscan.dims", "dimensions scanned"),
    ("dimscan.target_accept", "calibration target for the full-data step size"),
    ("dimscan.cost_factor", "subsampled step size is the full step size divided by this"),
    ("dimscan.pool", "subsampled variants draw from the first `pool` batches"),
    ("dimscan.iterations", "chain length per variant and dimension"),
    ("dimscan.pilot_iterations", "pilot chain length used by the calibration"),
    ("dimscan.subsampled_metropolis", "apply the Metropolis correction to subsampled chains"),
    ("sweep.eps", "step size of the traced sweep"),
    ("sweep.sweeps", "number of symmetric sweeps"),
    ("sweep.eps_grid", "step sizes of the energy-spread scan"),
    ("plateau.eps_grid", "step sizes compared"),
    ("plateau.tau", "integration time"),
    ("plateau.pool", "batches used by the per-step and partial-sweep variants"),
    ("plateau.batch", "batch used by the fixed variant (0-based)"),
];

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value `{value}` for `{key}`"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let v: Vec<T> = value.split(',').map(|x| num(key, x.trim())).collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(bad(key, value));
    }
    Ok(v)
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "run.seed" => self.seed = num(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "model.sigma" => self.model.sigma = num(key, v)?,
            "model.m" => self.model.m = num(key, v)?,
            "model.s" => self.model.s = num(key, v)?,
            "model.N" => self.model.n = num(key, v)?,
            "model.D" => self.model.d = num(key, v)?,
            "model.B" => self.model.b = num(key, v)?,
            "model.mu" => {
                self.model.mu = if v == "draw" { MeanSetting::Draw } else { MeanSetting::Constant(num(key, v)?) }
            }
            "sampler.eps" => self.sampler.eps = num(key, v)?,
            "sampler.tau_max" => self.sampler.tau_max = num(key, v)?,
            "sampler.iterations" => self.sampler.iterations = num(key, v)?,
            "sampler.warmup" => self.sampler.warmup = num(key, v)?,
            "sampler.metropolis" => self.sampler.metropolis = num(key, v)?,
            "sampler.schedule" => self.sampler.schedule = ScheduleKind::parse(v).ok_or_else(|| bad(key, v))?,
            "sampler.batch" => self.sampler.batch = num(key, v)?,
            "sampler.pool" => self.sampler.pool = num(key, v)?,
            "sampler.close_loop" => self.sampler.close_loop = num(key, v)?,
            "sampler.trace" => self.sampler.trace = num(key, v)?,
            "trajectory.eps" => self.trajectory.eps = num(key, v)?,
            "trajectory.tau" => self.trajectory.tau = num(key, v)?,
            "trajectory.q0" => self.trajectory.q0 = if v == "posterior" { None } else { Some(num(key, v)?) },
            "trajectory.p0" => self.trajectory.p0 = num(key, v)?,
            "trajectory.batch_sizes" => self.trajectory.batch_sizes = list(key, v)?,
            "dimscan.dims" => self.dimscan.dims = list(key, v)?,
            "dimscan.target_accept" => self.dimscan.target_accept = num(key, v)?,
            "dimscan.cost_factor" => self.dimscan.cost_factor = num(key, v)?,
            "dimscan.pool" => self.dimscan.pool = num(key, v)?,
            "dimscan.iterations" => self.dimscan.iterations = num(key, v)?,
            "dimscan.pilot_iterations" => self.dimscan.pilot_iterations = num(key, v)?,
            "dimscan.subsampled_metropolis" => self.dimscan.subsampled_metropolis = num(key, v)?,
            "sweep.eps" => self.sweep.eps = num(key, v)?,
            "sweep.sweeps" => self.sweep.sweeps = num(key, v)?,
            "sweep.eps_grid" => self.sweep.eps_grid = list(key, v)?,
            "plateau.eps_grid" => self.plateau.eps_grid = list(key, v)?,
            "plateau.tau" => self.plateau.tau = num(key, v)?,
            "plateau.pool" => self.plateau.pool = num(key, v)?,
            "plateau.batch" => self.plateau.batch = num(key, v)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "run.seed" => self.seed.to_string(),
            "output.dir" => self.output_dir.display().to_string(),
            "model.sigma" => self.model.sigma.to_string(),
            "model.m" => self.model.m.to_string(),
            "model.s" => self.model.s.to_string(),
            "model.N" => self.model.n.to_string(),
            "model.D" => self.model.d.to_string(),
            "model.B" => self.model.b.to_string(),
            "model.mu" => match self.model.mu {
                MeanSetting::Draw => "draw".into(),
                MeanSetting::Constant(m) => m.to_string(),
            },
            "sampler.eps" => self.sampler.eps.to_string(),
            "sampler.tau_max" => self.sampler.tau_max.to_string(),
            "sampler.iterations" => self.sampler.iterations.to_string(),
            "sampler.warmup" => self.sampler.warmup.to_string(),
            "sampler.metropolis" => self.sampler.metropolis.to_string(),
            "sampler.schedule" => self.sampler.schedule.name().into(),
            "sampler.batch" => self.sampler.batch.to_string(),
            "sampler.pool" => self.sampler.pool.to_string(),
            "sampler.close_loop" => self.sampler.close_loop.to_string(),
            "sampler.trace" => self.sampler.trace.to_string(),
            "trajectory.eps" => self.trajectory.eps.to_string(),
            "trajectory.tau" => self.trajectory.tau.to_string(),
            "trajectory.q0" => self.trajectory.q0.map_or("posterior".into(), |q| q.to_string()),
            "trajectory.p0" => self.trajectory.p0.to_string(),
            "trajectory.batch_sizes" => join(&self.trajectory.batch_sizes),
            "dimscan.dims" => join(&self.dimscan.dims),
            "dimscan.target_accept" => self.dimscan.target_accept.to_string(),
            "dimscan.cost_factor" => self.dimscan.cost_factor.to_string(),
            "dimscan.pool" => self.dimscan.pool.to_string(),
            "dimscan.iterations" => self.dimscan.iterations.to_string(),
            "dimscan.pilot_iterations" => self.dimscan.pilot_iterations.to_string(),
            "dimscan.subsampled_metropolis" => self.dimscan.subsampled_metropolis.to_string(),
            "sweep.eps" => self.sweep.eps.to_string(),
            "sweep.sweeps" => self.sweep.sweeps.to_string(),
            "sweep.eps_grid" => join(&self.sweep.eps_grid),
            "plateau.eps_grid" => join(&self.plateau.eps_grid),
            "plateau.tau" => self.plateau.tau.to_string(),
            "plateau.pool" => self.plateau.pool.to_string(),
            "plateau.batch" => self.plateau.batch.to_string(),
            _ => return Err(Error::UnknownKey(key.to_string())),
        })
    }

    /// Apply `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Error::Config(format!("override `{kv}` is not of the form key=value")))?;
        self.set(k.trim(), v)
    }

    /// Defaults, then `file`, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        for kv in overrides {
            cfg.apply_override(kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The full configuration in file syntax.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive("sampler.eps", self.sampler.eps)?;
        positive("sampler.tau_max", self.sampler.tau_max)?;
        positive("trajectory.eps", self.trajectory.eps)?;
        positive("trajectory.tau", self.trajectory.tau)?;
        positive("dimscan.cost_factor", self.dimscan.cost_factor)?;
        positive("sweep.eps", self.sweep.eps)?;
        positive("plateau.tau", self.plateau.tau)?;
        for (name, grid) in [("sweep.eps_grid", &self.sweep.eps_grid), ("plateau.eps_grid", &self.plateau.eps_grid)] {
            grid.iter().try_for_each(|v| positive(name, *v))?;
        }
        for (name, grid) in
            [("dimscan.dims", &self.dimscan.dims), ("trajectory.batch_sizes", &self.trajectory.batch_sizes)]
        {
            if grid.contains(&0) {
                return Err(Error::Config(format!("`{name}` entries must be positive")));
            }
        }
        if self.sweep.sweeps == 0 || self.dimscan.iterations == 0 || self.dimscan.pilot_iterations == 0 {
            return Err(Error::Config("iteration and sweep counts must be positive".into()));
        }
        self.model_config(self.model.d).validate()
    }

    /// Model configuration of dimension `dim` with the data seed derived from
    /// the root seed.
    pub fn model_config(&self, dim: usize) -> ModelConfig {
        ModelConfig {
            sigma: self.model.sigma,
            prior_mean: self.model.m,
            prior_sd: self.model.s,
            n_data: self.model.n,
            dim,
            means: match self.model.mu {
                MeanSetting::Constant(m) => TrueMeans::Constant(m),
                MeanSetting::Draw => TrueMeans::StandardNormal,
            },
            seed: crate::rng::Stream::new(self.seed).child_seed(crate::rng::keys::DATA),
        }
    }

    /// The chain schedule described by the `sampler` section.
    pub fn sampler_schedule(&self, n_batches: usize) -> SubsampleSchedule {
        let pool: Vec<usize> = (0..self.sampler.pool.min(n_batches)).collect();
        match self.sampler.schedule {
            ScheduleKind::Full => SubsampleSchedule::Full,
            ScheduleKind::Fixed => SubsampleSchedule::FixedBatch(self.sampler.batch),
            ScheduleKind::RandomFixed => SubsampleSchedule::RandomFixedBatch(pool),
            ScheduleKind::PerStep => SubsampleSchedule::PerStepRandom { pool, close_loop: self.sampler.close_loop },
            ScheduleKind::Sweep => SubsampleSchedule::SymmetricSweep((0..n_batches).collect()),
            ScheduleKind::PartialSweep => SubsampleSchedule::PartialSymmetricSweep(pool),
        }
    }
}
