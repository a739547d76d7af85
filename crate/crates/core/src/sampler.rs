//! The HMC Markov chain: momentum refresh, trajectory, optional Metropolis
//! correction, and posterior-accuracy diagnostics.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::integrate::{integrate_endpoint, steps_for, SubsampleSchedule};
use crate::model::ModelContext;
use crate::phase::{sample_momentum, Hamiltonian, PhaseState};
use crate::rng::{keys, Stream};
use crate::stats;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub eps: f64,
    /// Integration time per trajectory is drawn from `U(0, tau_max)`.
    pub tau_max: f64,
    pub n_iterations: usize,
    pub warmup_fraction: f64,
    pub metropolis: bool,
    pub schedule: SubsampleSchedule,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            eps: 0.05,
            tau_max: 2.0 * std::f64::consts::PI,
            n_iterations: 5000,
            warmup_fraction: 0.1,
            metropolis: true,
            schedule: SubsampleSchedule::Full,
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::Config(format!("tau_max must be positive, got {}", self.tau_max)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warm-up fraction must lie in [0, 1)".into()));
        }
        if !self.metropolis && self.schedule.is_full() {
            return Err(Error::Config("disabling the Metropolis step requires a subsampled schedule".into()));
        }
        if self.n_iterations - self.warmup() == 0 {
            return Err(Error::Config("no iterations left after warm-up".into()));
        }
        Ok(())
    }

    pub fn warmup(&self) -> usize {
        (self.warmup_fraction * self.n_iterations as f64).floor() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Acceptance {
    pub prob: f64,
    pub diverged: bool,
}

/// `min(1, exp(H(initial) − H(proposed)))`; non-finite energies give 0.
pub fn acceptance_probability(h: &Hamiltonian<'_>, initial: &PhaseState, proposed: &PhaseState) -> Result<Acceptance> {
    check_dim(initial.dim(), proposed.dim())?;
    let delta = h.value(initial)? - h.value(proposed)?;
    if !delta.is_finite() {
        return Ok(Acceptance { prob: 0.0, diverged: true });
    }
    Ok(Acceptance { prob: delta.exp().min(1.0), diverged: false })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub q: Vec<f64>,
    pub accept_prob: f64,
    pub accepted: bool,
    pub cost: u64,
    pub diverged: bool,
}

fn unit_cost(ctx: &ModelContext, schedule: &SubsampleSchedule) -> u64 {
    if schedule.is_full() {
        ctx.config().n_data as u64
    } else {
        ctx.partition().size() as u64
    }
}

/// One HMC iteration. Acceptance is always computed with the full-data
/// Hamiltonian; without Metropolis the proposal is taken unconditionally.
pub fn hmc_transition(q: &[f64], cfg: &SamplerConfig, ctx: &ModelContext, rng: &mut Stream) -> Result<Transition> {
    check_dim(ctx.dim(), q.len())?;
    let p = sample_momentum(rng, q.len())?;
    let tau = rng.uniform() * cfg.tau_max;
    let n_steps = steps_for(tau, cfg.eps);
    let initial = PhaseState { q: q.to_vec(), p };
    let (proposal, cost) = match integrate_endpoint(&initial, cfg.eps, n_steps, &cfg.schedule, ctx, rng) {
        Ok(r) => r,
        Err(Error::Divergence { step, .. }) => {
            return Ok(Transition {
                q: q.to_vec(),
                accept_prob: 0.0,
                accepted: false,
                cost: 2 * step as u64 * unit_cost(ctx, &cfg.schedule),
                diverged: true,
            })
        }
        Err(e) => return Err(e),
    };
    let h = Hamiltonian::new(ctx.full())?;
    let acc = acceptance_probability(&h, &initial, &proposal)?;
    let accepted = if cfg.metropolis { rng.uniform() < acc.prob } else { true };
    Ok(Transition {
        q: if accepted { proposal.q } else { q.to_vec() },
        accept_prob: acc.prob,
        accepted,
        cost,
        diverged: acc.diverged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub mean_accept: f64,
    pub est_mean: Vec<f64>,
    pub est_var: Vec<f64>,
    /// Batch-means Monte Carlo standard error of `est_mean`.
    pub mc_se: Vec<f64>,
    pub analytic_mean: Vec<f64>,
    pub analytic_var: Vec<f64>,
    /// Mean over dimensions of `|est_mean − analytic_mean| / posterior sd`.
    pub mean_abs_z: f64,
    pub total_cost_units: u64,
    pub iterations: usize,
    pub divergences: usize,
}

impl ChainSummary {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.est_mean.len();
        write!(w, "mean_accept,mean_abs_z,total_cost_units,iterations,divergences")?;
        for name in ["est_mean", "est_var", "mc_se", "analytic_mean", "analytic_var"] {
            for d in 0..dim {
                write!(w, ",{name}_{d}")?;
            }
        }
        writeln!(w)?;
        write!(
            w,
            "{},{},{},{},{}",
            self.mean_accept, self.mean_abs_z, self.total_cost_units, self.iterations, self.divergences
        )?;
        for col in [&self.est_mean, &self.est_var, &self.mc_se, &self.analytic_mean, &self.analytic_var] {
            for v in col {
                write!(w, ",{v}")?;
            }
        }
        writeln!(w)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub accept_prob: f64,
    pub accepted: bool,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    pub summary: ChainSummary,
    pub trace: Vec<TraceRow>,
}

impl ChainRun {
    /// Post-warm-up draws of coordinate `d`.
    pub fn draws(&self, d: usize, warmup: usize) -> Vec<f64> {
        self.trace[warmup..].iter().map(|r| r.q[d]).collect()
    }

    /// `iter,accept_prob,accepted,q0`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,accept_prob,accepted,q0")?;
        for r in &self.trace {
            writeln!(w, "{},{},{},{}", r.iter, r.accept_prob, u8::from(r.accepted), r.q[0])?;
        }
        Ok(())
    }
}

/// Run a chain from the prior mean, keeping the per-iteration trace.
pub fn run_chain_traced(cfg: &SamplerConfig, ctx: &ModelContext) -> Result<ChainRun> {
    cfg.validate()?;
    cfg.schedule.validate(ctx)?;
    let dim = ctx.dim();
    let warmup = cfg.warmup();
    let stream = Stream::new(cfg.seed).derive(keys::CHAIN);
    let mut q = vec![ctx.config().prior_mean; dim];
    let mut trace = Vec::with_capacity(cfg.n_iterations);
    let mut cost = 0u64;
    let mut divergences = 0;
    for iter in 0..cfg.n_iterations {
        let mut rng = stream.derive(iter as u64);
        let t = hmc_transition(&q, cfg, ctx, &mut rng)?;
        cost += t.cost;
        divergences += usize::from(t.diverged);
        q = t.q;
        trace.push(TraceRow { iter, accept_prob: t.accept_prob, accepted: t.accepted, q: q.clone() });
    }

    let kept = &trace[warmup..];
    let mean_accept = kept.iter().map(|r| r.accept_prob).sum::<f64>() / kept.len() as f64;
    let mut est_mean = Vec::with_capacity(dim);
    let mut est_var = Vec::with_capacity(dim);
    let mut mc_se = Vec::with_capacity(dim);
    for d in 0..dim {
        let xs: Vec<f64> = kept.iter().map(|r| r.q[d]).collect();
        est_mean.push(stats::mean(&xs));
        est_var.push(if xs.len() > 1 { stats::variance(&xs) } else { 0.0 });
        mc_se.push(stats::batch_means_se(&xs));
    }
    let post = ctx.posterior();
    let mean_abs_z =
        est_mean.iter().zip(&post.mean).zip(&post.var).map(|((e, m), v)| (e - m).abs() / v.sqrt()).sum::<f64>()
            / dim as f64;
    let summary = ChainSummary {
        mean_accept,
        est_mean,
        est_var,
        mc_se,
        analytic_mean: post.mean.clone(),
        analytic_var: post.var.clone(),
        mean_abs_z,
        total_cost_units: cost,
        iterations: cfg.n_iterations,
        divergences,
    };
    Ok(ChainRun { summary, trace })
}

pub fn run_chain(cfg: &SamplerConfig, ctx: &ModelContext) -> Result<ChainSummary> {
    run_chain_traced(cfg, ctx).map(|r| r.summary)
}

/// Independent chains on derived seeds, run concurrently and returned in
/// chain order.
pub fn run_chains(cfg: &SamplerConfig, ctx: &ModelContext, n_chains: usize) -> Result<Vec<ChainSummary>> {
    let root = Stream::new(cfg.seed);
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let seed = root.child_seed(c as u64);
            run_chain(&SamplerConfig { seed, ..cfg.clone() }, ctx)
        })
        .collect()
}
