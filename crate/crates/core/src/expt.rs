//! Scenario drivers: each runs one experiment from a [`Config`] and returns a
//! typed result that renders to CSV and a one-line summary.
//!
//! Grid points run in parallel where that pays off; rows are always emitted
//! in grid order so output bytes depend only on the seed and configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::integrate::{
    integrate, integrate_endpoint, steps_for, symmetric_sweep, SubsampleSchedule, TrajectoryRecord,
};
use crate::model::{exact_flow, ModelContext, TrueMeans};
use crate::phase::PhaseState;
use crate::potential::{to_quadratic, PotentialOracle};
use crate::rng::{keys, Stream};
use crate::sampler::{run_chain, SamplerConfig};

/// A named CSV file produced by a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

pub trait Scenario {
    fn artifacts(&self) -> Vec<Artifact>;
    fn summary(&self) -> String;
}

/// Write every artifact into `dir`, creating it if needed. Returns the paths
/// written.
pub fn write_artifacts(dir: &Path, scenario: &dyn Scenario) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    scenario
        .artifacts()
        .into_iter()
        .map(|a| {
            let path = dir.join(&a.name);
            std::fs::write(&path, a.contents)?;
            Ok(path)
        })
        .collect()
}

fn initial_state(cfg: &Config, ctx: &ModelContext) -> Result<PhaseState> {
    let q0 = cfg.trajectory.q0.unwrap_or(ctx.posterior().mean[0]);
    PhaseState::new(vec![q0], vec![cfg.trajectory.p0])
}

fn one_dim(cfg: &Config, batch_size: usize) -> Result<ModelContext> {
    ModelContext::generate(cfg.model_config(1), batch_size)
}

// ---------------------------------------------------------------------------
// trajectory

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub series: String,
    pub t_or_step: f64,
    pub q: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenterOffset {
    pub batch_size: usize,
    /// `|c_batch - c_full|` from the fitted quadratic forms.
    pub analytic: f64,
    /// Midpoint of the numerical trajectory's `q` range minus `c_full`.
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub rows: Vec<TrajectoryRow>,
    /// Largest phase distance between the full-data numerical trajectory
    /// and the exact flow over all steps.
    pub full_max_distance: f64,
    pub offsets: Vec<CenterOffset>,
}

fn push_exact(
    rows: &mut Vec<TrajectoryRow>,
    series: &str,
    qf: &crate::potential::QuadraticForm,
    s0: &PhaseState,
    eps: f64,
    n: usize,
) -> Result<Vec<PhaseState>> {
    let mut states = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * eps;
        let s = exact_flow(qf, s0, t)?;
        rows.push(TrajectoryRow { series: series.into(), t_or_step: t, q: s.q[0], p: s.p[0] });
        states.push(s);
    }
    Ok(states)
}

fn push_numerical(rows: &mut Vec<TrajectoryRow>, series: &str, rec: &TrajectoryRecord) {
    rows.extend(rec.steps.iter().map(|s| TrajectoryRow {
        series: series.into(),
        t_or_step: s.index as f64,
        q: s.state.q[0],
        p: s.state.p[0],
    }));
}

/// Exact and numerical trajectories under the full data and under one fixed
/// batch for each configured batch size, all from the same initial state.
pub fn scenario_trajectory(cfg: &Config) -> Result<TrajectoryResult> {
    let t = &cfg.trajectory;
    let base = one_dim(cfg, cfg.model.n)?;
    let s0 = initial_state(cfg, &base)?;
    let n = steps_for(t.tau, t.eps);
    let full_qf = to_quadratic(base.full() as &dyn PotentialOracle)?;
    let mut rows = Vec::new();
    let exact = push_exact(&mut rows, "exact_full", &full_qf, &s0, t.eps, n)?;
    let mut rng = Stream::new(cfg.seed).derive(keys::SCHEDULE);
    let rec = integrate(&s0, t.eps, n, &SubsampleSchedule::Full, &base, &mut rng)?;
    push_numerical(&mut rows, "numerical_full", &rec);
    let full_max_distance = rec.steps.iter().zip(&exact).map(|(r, e)| r.state.distance(e)).fold(0.0, f64::max);

    let mut offsets = Vec::with_capacity(t.batch_sizes.len());
    for &b in &t.batch_sizes {
        let ctx = ModelContext::new(base.config().clone(), base.data().clone(), b)?;
        let pot = ctx.scaled_batch(0)?;
        let qf = to_quadratic(pot as &dyn PotentialOracle)?;
        push_exact(&mut rows, &format!("exact_B{b}"), &qf, &s0, t.eps, n)?;
        let rec = integrate(&s0, t.eps, n, &SubsampleSchedule::FixedBatch(0), &ctx, &mut rng)?;
        push_numerical(&mut rows, &format!("numerical_B{b}"), &rec);
        let (lo, hi) = rec
            .steps
            .iter()
            .map(|s| s.state.q[0])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| (lo.min(q), hi.max(q)));
        offsets.push(CenterOffset {
            batch_size: b,
            analytic: (qf.center[0] - full_qf.center[0]).abs(),
            measured: (0.5 * (lo + hi) - full_qf.center[0]).abs(),
        });
    }
    Ok(TrajectoryResult { rows, full_max_distance, offsets })
}

impl Scenario for TrajectoryResult {
    fn artifacts(&self) -> Vec<Artifact> {
        let mut s = String::from("series,t_or_step,q,p\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.series, r.t_or_step, r.q, r.p);
        }
        vec![Artifact { name: "trajectory.csv".into(), contents: s }]
    }

    fn summary(&self) -> String {
        let mut s = format!("trajectory: full max distance {:.3e}", self.full_max_distance);
        for o in &self.offsets {
            let _ = write!(s, "; B={} center offset {:.4} (analytic {:.4})", o.batch_size, o.measured, o.analytic);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// step-size calibration

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub eps: f64,
    /// Mean acceptance of the last pilot chain; `None` when no pilot ran.
    pub accept: Option<f64>,
    /// Set when the target could not be met inside the search interval.
    pub warning: bool,
    pub bisections: usize,
}

pub const EPS_MIN: f64 = 1e-4;
pub const EPS_MAX: f64 = 1.0;
const CALIBRATION_WINDOW: f64 = 0.05;
const MAX_BISECTIONS: usize = 20;

/// Bisect the full-data step size on `[1e-4, 1]` with short pilot chains until
/// their mean acceptance is within 0.05 of `target`.
///
/// Targets outside `[0.6, 0.99]` return the nearer boundary (smallest step for
/// high targets) with the warning set, without running a pilot.
pub fn calibrate_eps(
    target: f64,
    ctx: &ModelContext,
    pilot_iterations: usize,
    tau_max: f64,
    seed: u64,
) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!("target acceptance must lie in (0, 1), got {target}")));
    }
    if target > 0.99 {
        return Ok(Calibration { eps: EPS_MIN, accept: None, warning: true, bisections: 0 });
    }
    if target < 0.6 {
        return Ok(Calibration { eps: EPS_MAX, accept: None, warning: true, bisections: 0 });
    }
    let pilot = |eps: f64| -> Result<f64> {
        let sc = SamplerConfig {
            eps,
            tau_max,
            n_iterations: pilot_iterations,
            warmup_fraction: 0.1,
            metropolis: true,
            schedule: SubsampleSchedule::Full,
            seed,
        };
        Ok(run_chain(&sc, ctx)?.mean_accept)
    };
    let (mut lo, mut hi) = (EPS_MIN, EPS_MAX);
    let mut eps = 0.5 * (lo + hi);
    let mut accept = f64::NAN;
    for i in 1..=MAX_BISECTIONS {
        eps = 0.5 * (lo + hi);
        accept = pilot(eps)?;
        if (accept - target).abs() <= CALIBRATION_WINDOW {
            return Ok(Calibration { eps, accept: Some(accept), warning: false, bisections: i });
        }
        if accept > target {
            lo = eps;
        } else {
            hi = eps;
        }
    }
    Ok(Calibration { eps, accept: Some(accept), warning: true, bisections: MAX_BISECTIONS })
}

// ---------------------------------------------------------------------------
// dimension scan

pub const VARIANTS: [&str; 3] = ["full", "fixed_batch", "per_step"];

#[derive(Clone, Debug, PartialEq)]
pub struct DimscanRow {
    pub variant: &'static str,
    pub dim: usize,
    pub eps: f64,
    pub mean_accept: f64,
    pub mean_abs_z: f64,
    pub cost_units: u64,
    pub iterations: usize,
    pub divergences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimscanResult {
    pub rows: Vec<DimscanRow>,
    pub calibrations: Vec<(usize, Calibration)>,
}

impl DimscanResult {
    /// `(D, mean_accept)` for one variant in grid order.
    pub fn accept_curve(&self, variant: &str) -> Vec<(usize, f64)> {
        self.rows.iter().filter(|r| r.variant == variant).map(|r| (r.dim, r.mean_accept)).collect()
    }
}

fn dimscan_point(cfg: &Config, dim: usize) -> Result<(Vec<DimscanRow>, Calibration)> {
    let ds = &cfg.dimscan;
    let mut mc = cfg.model_config(dim);
    // true means drawn per dimension, so the datasets are nested across D
    mc.means = TrueMeans::StandardNormal;
    let ctx = ModelContext::generate(mc, cfg.model.b)?;
    let root = Stream::new(cfg.seed);
    let pilot_seed = root.derive(keys::PILOT).child_seed(dim as u64);
    let cal = calibrate_eps(ds.target_accept, &ctx, ds.pilot_iterations, cfg.sampler.tau_max, pilot_seed)?;
    let pool: Vec<usize> = (0..ds.pool.min(ctx.partition().count())).collect();
    let eps_sub = cal.eps / ds.cost_factor;
    let chain_root = root.derive(keys::CHAIN).derive(dim as u64);
    let variants = [
        (VARIANTS[0], cal.eps, true, SubsampleSchedule::Full),
        (VARIANTS[1], eps_sub, ds.subsampled_metropolis, SubsampleSchedule::RandomFixedBatch(pool.clone())),
        (VARIANTS[2], eps_sub, ds.subsampled_metropolis, SubsampleSchedule::PerStepRandom { pool, close_loop: false }),
    ];
    let rows = variants
        .into_par_iter()
        .enumerate()
        .map(|(i, (variant, eps, metropolis, schedule))| {
            let sc = SamplerConfig {
                eps,
                tau_max: cfg.sampler.tau_max,
                n_iterations: ds.iterations,
                warmup_fraction: cfg.sampler.warmup,
                metropolis,
                schedule,
                seed: chain_root.child_seed(i as u64),
            };
            let s = run_chain(&sc, &ctx)?;
            Ok(DimscanRow {
                variant,
                dim,
                eps,
                mean_accept: s.mean_accept,
                mean_abs_z: s.mean_abs_z,
                cost_units: s.total_cost_units,
                iterations: s.iterations,
                divergences: s.divergences,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, cal))
}

/// Calibrated full-data chains against cost-reduced subsampled chains over
/// the dimension grid.
pub fn scenario_dimscan(cfg: &Config) -> Result<DimscanResult> {
    let points = cfg.dimscan.dims.par_iter().map(|&d| dimscan_point(cfg, d)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut calibrations = Vec::new();
    for ((r, c), &d) in points.into_iter().zip(&cfg.dimscan.dims) {
        rows.extend(r);
        calibrations.push((d, c));
    }
    // variant-major order, then D
    rows.sort_by_key(|r| VARIANTS.iter().position(|v| *v == r.variant));
    Ok(DimscanResult { rows, calibrations })
}

impl Scenario for DimscanResult {
    fn artifacts(&self) -> Vec<Artifact> {
        let mut s = String::from("variant,D,eps,mean_accept,mean_abs_z,cost_units\n");
        for r in &self.rows {
            let _ =
                writeln!(s, "{},{},{},{},{},{}", r.variant, r.dim, r.eps, r.mean_accept, r.mean_abs_z, r.cost_units);
        }
        vec![Artifact { name: "dimscan.csv".into(), contents: s }]
    }

    fn summary(&self) -> String {
        let mut s = String::from("dimscan:");
        for v in VARIANTS {
            let c = self.accept_curve(v);
            if let (Some(first), Some(last)) = (c.first(), c.last()) {
                let _ = write!(s, " {v} accept {:.3} (D={}) -> {:.3} (D={});", first.1, first.0, last.1, last.0);
            }
        }
        let warned = self.calibrations.iter().filter(|(_, c)| c.warning).count();
        let _ = write!(s, " calibration warnings {warned}");
        s
    }
}

// ---------------------------------------------------------------------------
// symmetric sweep

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpread {
    pub eps: f64,
    /// `max |H_full - median(H_full)|` over the states after each sweep.
    pub coarse: f64,
    /// The same over every intermediate state.
    pub intermediate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub trace: TrajectoryRecord,
    pub scan: Vec<SweepSpread>,
}

fn spread(h: &[f64]) -> f64 {
    let mut sorted = h.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    h.iter().map(|x| (x - median).abs()).fold(0.0, f64::max)
}

fn sweep_spread(rec: &TrajectoryRecord, eps: f64) -> SweepSpread {
    let coarse: Vec<f64> = rec.coarse().map(|s| s.h_full).collect();
    let inter: Vec<f64> = rec.steps.iter().map(|s| s.h_full).collect();
    SweepSpread { eps, coarse: spread(&coarse), intermediate: spread(&inter) }
}

/// Symmetric sweeps over every batch: the traced run at `sweep.eps` and the
/// coarse/intermediate energy spread across `sweep.eps_grid`.
pub fn scenario_sweep(cfg: &Config) -> Result<SweepResult> {
    let ctx = one_dim(cfg, cfg.model.b)?;
    let s0 = initial_state(cfg, &ctx)?;
    let all: Vec<usize> = (0..ctx.partition().count()).collect();
    let sw = &cfg.sweep;
    let trace = symmetric_sweep(&s0, sw.eps, sw.sweeps, &all, &ctx)?;
    let scan = sw
        .eps_grid
        .par_iter()
        .map(|&eps| symmetric_sweep(&s0, eps, sw.sweeps, &all, &ctx).map(|r| sweep_spread(&r, eps)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { trace, scan })
}

impl Scenario for SweepResult {
    fn artifacts(&self) -> Vec<Artifact> {
        let mut s = String::from("trace,index,q,p,H_full\n");
        for r in &self.trace.steps {
            let _ = writeln!(s, "intermediate,{},{},{},{}", r.index, r.state.q[0], r.state.p[0], r.h_full);
        }
        for (k, r) in self.trace.coarse().enumerate() {
            let _ = writeln!(s, "coarse,{},{},{},{}", k, r.state.q[0], r.state.p[0], r.h_full);
        }
        let mut scan = String::from("eps,coarse_spread,intermediate_spread\n");
        for r in &self.scan {
            let _ = writeln!(scan, "{},{},{}", r.eps, r.coarse, r.intermediate);
        }
        vec![
            Artifact { name: "sweep.csv".into(), contents: s },
            Artifact { name: "sweep_scan.csv".into(), contents: scan },
        ]
    }

    fn summary(&self) -> String {
        let mut s = String::from("sweep:");
        let own = sweep_spread(&self.trace, self.trace.step_size);
        let _ = write!(s, " coarse spread {:.3e}, intermediate {:.3e}", own.coarse, own.intermediate);
        for w in self.scan.windows(2) {
            let _ = write!(s, "; halving {} -> {} ratio {:.2}", w[0].eps, w[1].eps, w[0].coarse / w[1].coarse);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// error plateau

pub const PLATEAU_VARIANTS: [&str; 5] = ["full", "fixed_batch", "per_step", "partial_sweep", "sweep"];

#[derive(Clone, Debug, PartialEq)]
pub struct PlateauRow {
    pub variant: &'static str,
    pub eps: f64,
    pub endpoint_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateauResult {
    pub rows: Vec<PlateauRow>,
}

impl PlateauResult {
    /// `(eps, endpoint_error)` for one variant in grid order.
    pub fn errors(&self, variant: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.variant == variant).map(|r| (r.eps, r.endpoint_error)).collect()
    }
}

/// Endpoint error against the exact full-data flow for each schedule and
/// step size. Step counts are rounded up to whole sweeps so every schedule
/// integrates the same time `L·ε`.
pub fn scenario_plateau(cfg: &Config) -> Result<PlateauResult> {
    let ctx = one_dim(cfg, cfg.model.b)?;
    let s0 = initial_state(cfg, &ctx)?;
    let pl = &cfg.plateau;
    let j = ctx.partition().count();
    let pool: Vec<usize> = (0..pl.pool.min(j)).collect();
    let schedules = [
        SubsampleSchedule::Full,
        SubsampleSchedule::FixedBatch(pl.batch),
        SubsampleSchedule::PerStepRandom { pool: pool.clone(), close_loop: false },
        SubsampleSchedule::PartialSymmetricSweep(pool),
        SubsampleSchedule::all_batches(&ctx),
    ];
    for s in &schedules {
        s.validate(&ctx)?;
    }
    let unit = schedules.iter().filter_map(SubsampleSchedule::sweep_len).fold(1, lcm);
    let qf = ctx.full_quadratic();
    let root = Stream::new(cfg.seed).derive(keys::SCHEDULE);
    let per_eps = pl
        .eps_grid
        .par_iter()
        .enumerate()
        .map(|(k, &eps)| {
            let n = steps_for(pl.tau, eps).div_ceil(unit) * unit;
            let exact = exact_flow(&qf, &s0, n as f64 * eps)?;
            PLATEAU_VARIANTS
                .iter()
                .zip(&schedules)
                .map(|(&variant, schedule)| {
                    let mut rng = root.derive(k as u64);
                    let (end, _) = integrate_endpoint(&s0, eps, n, schedule, &ctx, &mut rng)?;
                    Ok(PlateauRow { variant, eps, endpoint_error: end.distance(&exact) })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<PlateauRow> = per_eps.into_iter().flatten().collect();
    rows.sort_by_key(|r| PLATEAU_VARIANTS.iter().position(|v| *v == r.variant));
    Ok(PlateauResult { rows })
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

impl Scenario for PlateauResult {
    fn artifacts(&self) -> Vec<Artifact> {
        let mut s = String::from("variant,eps,endpoint_error\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.variant, r.eps, r.endpoint_error);
        }
        vec![Artifact { name: "plateau.csv".into(), contents: s }]
    }

    fn summary(&self) -> String {
        let mut s = String::from("plateau: error(eps_min)/error(eps_max)");
        for v in PLATEAU_VARIANTS {
            let e = self.errors(v);
            if let (Some(a), Some(b)) = (e.first(), e.last()) {
                let (hi, lo) = if a.0 >= b.0 { (a, b) } else { (b, a) };
                let _ = write!(s, " {v} {:.3}", lo.1 / hi.1);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> Config {
        let mut c = Config::default();
        c.trajectory.batch_sizes = vec![20, 500];
        c.sweep.sweeps = 40;
        c.sweep.eps_grid = vec![0.005, 0.0025];
        c
    }

    #[test]
    fn trajectory_full_offset_is_exactly_zero() {
        let r = scenario_trajectory(&quick()).unwrap();
        let full = r.offsets.iter().find(|o| o.batch_size == 500).unwrap();
        assert_eq!(full.analytic, 0.0);
        let b20 = r.offsets.iter().find(|o| o.batch_size == 20).unwrap();
        assert!(b20.analytic > 0.0);
        let csv = &r.artifacts()[0].contents;
        assert!(csv.starts_with("series,t_or_step,q,p\n"));
        assert!(csv.contains("\nexact_B20,") && csv.contains("\nnumerical_full,"));
    }

    #[test]
    fn calibration_boundaries_and_determinism() {
        let ctx = ModelContext::generate(Config::default().model_config(1), 20).unwrap();
        let hi = calibrate_eps(0.999999, &ctx, 100, 1.0, 3).unwrap();
        assert_eq!((hi.eps, hi.warning), (EPS_MIN, true));
        let lo = calibrate_eps(0.3, &ctx, 100, 1.0, 3).unwrap();
        assert_eq!((lo.eps, lo.warning), (EPS_MAX, true));
        let a = calibrate_eps(0.9, &ctx, 200, 1.0, 3).unwrap();
        let b = calibrate_eps(0.9, &ctx, 200, 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert!(!a.warning);
        assert!((a.accept.unwrap() - 0.9).abs() <= 0.05);
        assert!(calibrate_eps(1.5, &ctx, 10, 1.0, 3).is_err());
    }

    #[test]
    fn single_batch_sweep_coarse_matches_even_steps() {
        let mut c = quick();
        c.model.b = c.model.n;
        let r = scenario_sweep(&c).unwrap();
        let coarse: Vec<_> = r.trace.coarse().map(|s| s.index).collect();
        let even: Vec<_> = r.trace.steps.iter().map(|s| s.index).filter(|i| i % 2 == 0).collect();
        assert_eq!(coarse, even);
    }

    #[test]
    fn plateau_rows_in_grid_order() {
        let mut c = quick();
        c.plateau.eps_grid = vec![0.004, 0.002];
        let r = scenario_plateau(&c).unwrap();
        let order: Vec<_> = r.rows.iter().map(|r| (r.variant, r.eps)).collect();
        assert_eq!(order.len(), 10);
        assert_eq!(order[0], ("full", 0.004));
        assert_eq!(order[1], ("full", 0.002));
        assert_eq!(order[9], ("sweep", 0.002));
        let again = scenario_plateau(&c).unwrap();
        assert_eq!(r.artifacts(), again.artifacts());
    }

    #[test]
    fn small_dimscan_is_reproducible() {
        let mut c = Config::default();
        c.dimscan.dims = vec![1, 3];
        c.dimscan.iterations = 60;
        c.dimscan.pilot_iterations = 60;
        let a = scenario_dimscan(&c).unwrap();
        let b = scenario_dimscan(&c).unwrap();
        assert_eq!(a.artifacts(), b.artifacts());
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.accept_curve("per_step").iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 3]);
    }
}
