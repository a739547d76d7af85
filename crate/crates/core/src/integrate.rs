//! Strang-split leapfrog and trajectory composition under subsample schedules.

use std::io::Write;

use crate::error::{check_dim, Error, Result};
use crate::model::ModelContext;
use crate::phase::PhaseState;
use crate::potential::PotentialOracle;
use crate::rng::Stream;

/// Per-step energy change (under the step's own Hamiltonian) beyond which a
/// trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Which potential each integrator step uses. Batch indices are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub enum SubsampleSchedule {
    /// Full-data potential `V` at every step.
    Full,
    /// `J·V_j` for one fixed batch over the whole trajectory.
    FixedBatch(usize),
    /// One batch drawn uniformly from the pool at the start of the
    /// trajectory, then held fixed.
    RandomFixedBatch(Vec<usize>),
    /// A fresh batch drawn uniformly from the pool at every step. With
    /// `close_loop` the last step reuses the first step's batch.
    PerStepRandom { pool: Vec<usize>, close_loop: bool },
    /// Every batch, forward then reverse, repeated.
    SymmetricSweep(Vec<usize>),
    /// Forward-then-reverse over a strict subset of the batches.
    PartialSymmetricSweep(Vec<usize>),
}

impl SubsampleSchedule {
    pub fn all_batches(ctx: &ModelContext) -> Self {
        SubsampleSchedule::SymmetricSweep((0..ctx.partition().count()).collect())
    }

    pub fn is_full(&self) -> bool {
        matches!(self, SubsampleSchedule::Full)
    }

    pub fn validate(&self, ctx: &ModelContext) -> Result<()> {
        let count = ctx.partition().count();
        let check = |j: &usize| {
            if *j < count {
                Ok(())
            } else {
                Err(Error::BatchIndex { index: *j, count })
            }
        };
        let distinct = |list: &[usize]| {
            let mut seen = vec![false; count];
            for j in list {
                if std::mem::replace(&mut seen[*j], true) {
                    return Err(Error::Config(format!("batch {j} listed twice in sweep")));
                }
            }
            Ok(seen)
        };
        match self {
            SubsampleSchedule::Full => Ok(()),
            SubsampleSchedule::FixedBatch(j) => check(j),
            SubsampleSchedule::RandomFixedBatch(pool) | SubsampleSchedule::PerStepRandom { pool, .. } => {
                if pool.is_empty() {
                    return Err(Error::Config("empty batch pool".into()));
                }
                pool.iter().try_for_each(check)
            }
            SubsampleSchedule::SymmetricSweep(list) => {
                list.iter().try_for_each(check)?;
                let seen = distinct(list)?;
                if seen.iter().all(|s| *s) {
                    Ok(())
                } else {
                    Err(Error::Config("symmetric sweep must visit every batch".into()))
                }
            }
            SubsampleSchedule::PartialSymmetricSweep(list) => {
                if list.is_empty() {
                    return Err(Error::Config("empty sweep".into()));
                }
                list.iter().try_for_each(check)?;
                distinct(list)?;
                Ok(())
            }
        }
    }

    /// Number of steps in one complete sweep, for sweep schedules.
    pub fn sweep_len(&self) -> Option<usize> {
        match self {
            SubsampleSchedule::SymmetricSweep(l) | SubsampleSchedule::PartialSymmetricSweep(l) => Some(2 * l.len()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    pub state: PhaseState,
    pub h_full: f64,
    pub h_sched: f64,
    pub batch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    /// `n_steps + 1` entries; entry 0 is the initial state.
    pub steps: Vec<StepRecord>,
    pub step_size: f64,
    pub n_steps: usize,
    pub total_cost_units: u64,
    /// Step indices at which a symmetric sweep completes.
    pub sweep_ends: Vec<usize>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &PhaseState {
        &self.steps.last().expect("record holds the initial state").state
    }

    /// States after each complete sweep, preceded by the initial state.
    pub fn coarse(&self) -> impl Iterator<Item = &StepRecord> {
        std::iter::once(&self.steps[0]).chain(self.sweep_ends.iter().map(move |&i| &self.steps[i]))
    }

    /// Long format `step,batch,q0,p0,H_full,H_sched`; with `wide` every
    /// coordinate gets its own `q<d>`/`p<d>` column.
    pub fn write_csv<W: Write>(&self, mut w: W, wide: bool) -> Result<()> {
        let dim = self.steps[0].state.dim();
        let cols = if wide { dim } else { 1 };
        write!(w, "step,batch")?;
        for d in 0..cols {
            write!(w, ",q{d}")?;
        }
        for d in 0..cols {
            write!(w, ",p{d}")?;
        }
        writeln!(w, ",H_full,H_sched")?;
        for s in &self.steps {
            write!(w, "{},", s.index)?;
            if let Some(b) = s.batch {
                write!(w, "{b}")?;
            }
            for v in &s.state.q[..cols] {
                write!(w, ",{v}")?;
            }
            for v in &s.state.p[..cols] {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", s.h_full, s.h_sched)?;
        }
        Ok(())
    }
}

fn kick(p: &mut [f64], grad: &[f64], h: f64) {
    for (pi, g) in p.iter_mut().zip(grad) {
        *pi -= h * g;
    }
}

fn leapfrog_in_place(s: &mut PhaseState, eps: f64, pot: &dyn PotentialOracle, grad: &mut [f64]) {
    pot.gradient_into(&s.q, grad);
    kick(&mut s.p, grad, 0.5 * eps);
    for (q, p) in s.q.iter_mut().zip(&s.p) {
        *q += eps * p;
    }
    pot.gradient_into(&s.q, grad);
    kick(&mut s.p, grad, 0.5 * eps);
}

/// One Strang step: half-kick, drift, half-kick.
pub fn leapfrog_step(s: &PhaseState, eps: f64, pot: &dyn PotentialOracle) -> Result<PhaseState> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {eps}")));
    }
    check_dim(pot.dim(), s.dim())?;
    let mut out = s.clone();
    let mut grad = vec![0.0; s.dim()];
    leapfrog_in_place(&mut out, eps, pot, &mut grad);
    if !out.is_finite() {
        return Err(Error::Divergence { step: 1, detail: "non-finite state".into() });
    }
    Ok(out)
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// Resolves a schedule into the potential used at each step.
struct Stepper<'a> {
    ctx: &'a ModelContext,
    schedule: &'a SubsampleSchedule,
    fixed: Option<usize>,
    first: Option<usize>,
    n_steps: usize,
}

impl<'a> Stepper<'a> {
    fn new(ctx: &'a ModelContext, schedule: &'a SubsampleSchedule, n_steps: usize, rng: &mut Stream) -> Self {
        let fixed = match schedule {
            SubsampleSchedule::FixedBatch(j) => Some(*j),
            SubsampleSchedule::RandomFixedBatch(pool) => Some(pool[rng.index(pool.len())]),
            _ => None,
        };
        Self { ctx, schedule, fixed, first: None, n_steps }
    }

    /// Batch for 0-based step `l`, or `None` for the full potential.
    fn batch(&mut self, l: usize, rng: &mut Stream) -> Option<usize> {
        let sweep = |list: &[usize]| {
            let k = l % (2 * list.len());
            Some(if k < list.len() { list[k] } else { list[2 * list.len() - 1 - k] })
        };
        match self.schedule {
            SubsampleSchedule::Full => None,
            SubsampleSchedule::FixedBatch(_) | SubsampleSchedule::RandomFixedBatch(_) => self.fixed,
            SubsampleSchedule::PerStepRandom { pool, close_loop } => {
                if *close_loop && l + 1 == self.n_steps && l > 0 {
                    return self.first;
                }
                let j = pool[rng.index(pool.len())];
                self.first.get_or_insert(j);
                Some(j)
            }
            SubsampleSchedule::SymmetricSweep(list) | SubsampleSchedule::PartialSymmetricSweep(list) => sweep(list),
        }
    }

    fn potential(&self, batch: Option<usize>) -> &'a dyn PotentialOracle {
        match batch {
            None => self.ctx.full(),
            Some(j) => self.ctx.scaled_batch(j).expect("schedule validated"),
        }
    }
}

/// Observer hook called after every step with `(step, state, potential, batch)`.
type Observer<'o> = dyn FnMut(usize, &PhaseState, &dyn PotentialOracle, Option<usize>) + 'o;

fn drive(
    s0: &PhaseState,
    eps: f64,
    n_steps: usize,
    schedule: &SubsampleSchedule,
    ctx: &ModelContext,
    rng: &mut Stream,
    observe: &mut Observer<'_>,
) -> Result<(PhaseState, u64)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {eps}")));
    }
    if n_steps == 0 {
        return Err(Error::Config("need at least one step".into()));
    }
    check_dim(ctx.dim(), s0.dim())?;
    schedule.validate(ctx)?;
    let mut stepper = Stepper::new(ctx, schedule, n_steps, rng);
    let mut s = s0.clone();
    let mut grad = vec![0.0; s.dim()];
    let mut cost = 0u64;
    for l in 0..n_steps {
        let batch = stepper.batch(l, rng);
        let pot = stepper.potential(batch);
        let before = kinetic(&s.p) + pot.value(&s.q);
        leapfrog_in_place(&mut s, eps, pot, &mut grad);
        cost += 2 * pot.cost_units();
        let after = kinetic(&s.p) + pot.value(&s.q);
        if !s.is_finite() || !after.is_finite() {
            return Err(Error::Divergence { step: l + 1, detail: "non-finite state".into() });
        }
        if (after - before).abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence { step: l + 1, detail: format!("energy jump {:.3e}", after - before) });
        }
        observe(l + 1, &s, pot, batch);
    }
    Ok((s, cost))
}

/// Endpoint and cost of a trajectory without recording intermediate states.
pub fn integrate_endpoint(
    s0: &PhaseState,
    eps: f64,
    n_steps: usize,
    schedule: &SubsampleSchedule,
    ctx: &ModelContext,
    rng: &mut Stream,
) -> Result<(PhaseState, u64)> {
    drive(s0, eps, n_steps, schedule, ctx, rng, &mut |_, _, _, _| {})
}

/// `L` leapfrog steps under `schedule`, recording both the full-data and
/// the schedule's Hamiltonian after every step.
pub fn integrate(
    s0: &PhaseState,
    eps: f64,
    n_steps: usize,
    schedule: &SubsampleSchedule,
    ctx: &ModelContext,
    rng: &mut Stream,
) -> Result<TrajectoryRecord> {
    let full = ctx.full();
    let h_full = |s: &PhaseState| kinetic(&s.p) + full.value(&s.q);
    let mut steps = Vec::with_capacity(n_steps + 1);
    let h0 = h_full(s0);
    steps.push(StepRecord { index: 0, state: s0.clone(), h_full: h0, h_sched: h0, batch: None });
    let sweep_len = schedule.sweep_len();
    let mut sweep_ends = Vec::new();
    let (_, cost) = drive(s0, eps, n_steps, schedule, ctx, rng, &mut |l, s, pot, batch| {
        steps.push(StepRecord {
            index: l,
            state: s.clone(),
            h_full: h_full(s),
            h_sched: kinetic(&s.p) + pot.value(&s.q),
            batch,
        });
        if sweep_len.is_some_and(|n| l % n == 0) {
            sweep_ends.push(l);
        }
    })?;
    // the initial H_sched is measured under the first step's potential
    if let Some(b) = steps.get(1).map(|s| s.batch) {
        let pot: &dyn PotentialOracle = match b {
            None => full,
            Some(j) => ctx.scaled_batch(j)?,
        };
        steps[0].h_sched = kinetic(&s0.p) + pot.value(&s0.q);
    }
    Ok(TrajectoryRecord { steps, step_size: eps, n_steps, total_cost_units: cost, sweep_ends })
}

/// `sweeps` forward-then-reverse passes over `batches`, each sub-step a
/// leapfrog step of `J·V_l`.
pub fn symmetric_sweep(
    s0: &PhaseState,
    eps: f64,
    sweeps: usize,
    batches: &[usize],
    ctx: &ModelContext,
) -> Result<TrajectoryRecord> {
    if batches.is_empty() {
        return Err(Error::Config("sweep needs at least one batch".into()));
    }
    if sweeps == 0 {
        return Err(Error::Config("need at least one sweep".into()));
    }
    let schedule = if batches.len() == ctx.partition().count() {
        SubsampleSchedule::SymmetricSweep(batches.to_vec())
    } else {
        SubsampleSchedule::PartialSymmetricSweep(batches.to_vec())
    };
    // sweeps draw no randomness
    let mut rng = Stream::new(0);
    integrate(s0, eps, sweeps * 2 * batches.len(), &schedule, ctx, &mut rng)
}

/// Euclidean phase-space distance between a trajectory's endpoint and a
/// reference state.
pub fn endpoint_error(rec: &TrajectoryRecord, oracle: &PhaseState) -> Result<f64> {
    check_dim(oracle.dim(), rec.last().dim())?;
    Ok(rec.last().distance(oracle))
}

/// `L = max(1, round(τ/ε))`.
pub fn steps_for(tau: f64, eps: f64) -> usize {
    ((tau / eps).round() as usize).max(1)
}
