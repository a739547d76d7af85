//! Fast invariant suite run by `subhmc selftest`.
//!
//! Each check compares the implementation against an independent reference
//! (finite differences, quadrature, closed-form flows) on small instances.

use crate::error::Result;
use crate::integrate::{integrate_endpoint, leapfrog_step, steps_for, SubsampleSchedule};
use crate::model::{exact_flow, ModelConfig, ModelContext, TrueMeans};
use crate::phase::{Hamiltonian, PhaseState};
use crate::potential::{gradient_fd_error, to_quadratic, PotentialOracle};
use crate::rng::Stream;
use crate::sampler::{run_chain, SamplerConfig};
use crate::stats;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn model(dim: usize, means: TrueMeans) -> ModelConfig {
    ModelConfig { dim, means, seed: 7, ..ModelConfig::default() }
}

fn gradients(ctx: &ModelContext) -> Check {
    let mut rng = Stream::new(11);
    let points: Vec<Vec<f64>> =
        (0..20).map(|_| (0..ctx.dim()).map(|_| 3.0 * rng.standard_normal()).collect()).collect();
    let mut worst = gradient_fd_error(ctx.full(), &points);
    for j in [0, ctx.partition().count() - 1] {
        worst = worst.max(gradient_fd_error(ctx.batch(j).unwrap(), &points));
        worst = worst.max(gradient_fd_error(ctx.scaled_batch(j).unwrap(), &points));
    }
    check("gradient_vs_finite_difference", worst < 1e-6, format!("worst relative error {worst:.2e}"))
}

fn decomposition() -> Result<Check> {
    let cfg = model(3, TrueMeans::StandardNormal);
    let mut worst: f64 = 0.0;
    for b in [20, 100, 500] {
        let ctx = ModelContext::generate(cfg.clone(), b)?;
        let mut rng = Stream::new(b as u64);
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| 5.0 * rng.standard_normal()).collect();
            let full = ctx.full().gradient(&q);
            let mut sum = vec![0.0; 3];
            for j in 0..ctx.partition().count() {
                for (s, g) in sum.iter_mut().zip(ctx.batch(j)?.gradient(&q)) {
                    *s += g;
                }
            }
            for (a, b) in full.iter().zip(&sum) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    Ok(check("batch_gradients_sum_to_full", worst < 1e-12, format!("worst relative error {worst:.2e}")))
}

fn posterior_quadrature() -> Result<Check> {
    let ctx = ModelContext::generate(model(1, TrueMeans::Constant(1.0)), 20)?;
    let post = ctx.posterior();
    let (m, sd) = (post.mean[0], post.var[0].sqrt());
    let n = 100_000;
    let (a, b) = (m - 10.0 * sd, m + 10.0 * sd);
    let h = (b - a) / n as f64;
    let v0 = ctx.full().value(&[m]);
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * (v0 - ctx.full().value(&[x])).exp();
        z += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let qm = s1 / z;
    let qv = s2 / z - qm * qm;
    let em = (qm - m).abs() / m.abs().max(sd);
    let ev = (qv - post.var[0]).abs() / post.var[0];
    Ok(check("posterior_vs_quadrature", em < 1e-6 && ev < 1e-6, format!("mean rel {em:.1e}, var rel {ev:.1e}")))
}

fn flow_oracle(ctx: &ModelContext) -> Result<Check> {
    let qf = ctx.full_quadratic();
    let h = |s: &PhaseState| {
        0.5 * s.p.iter().map(|p| p * p).sum::<f64>()
            + 0.5 * s.q.iter().zip(&qf.center).zip(&qf.stiffness).map(|((q, c), l)| l * (q - c) * (q - c)).sum::<f64>()
    };
    let s0 = PhaseState::new(vec![0.3, -1.2, 2.0], vec![1.0, 0.5, -0.25])?;
    let mut dh: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for k in 1..=20 {
        let t = 0.137 * k as f64;
        let s = exact_flow(&qf, &s0, t)?;
        dh = dh.max((h(&s) - h(&s0)).abs() / h(&s0));
        let two = exact_flow(&qf, &exact_flow(&qf, &s0, 0.4 * t)?, 0.6 * t)?;
        comp = comp.max(two.distance(&s));
    }
    Ok(check(
        "exact_flow_conserves_and_composes",
        dh < 1e-12 && comp < 1e-12,
        format!("relative energy drift {dh:.1e}, composition gap {comp:.1e}"),
    ))
}

fn reversibility(ctx: &ModelContext) -> Result<Check> {
    let s0 = PhaseState::new(vec![0.3, -1.2, 2.0], vec![1.0, 0.5, -0.25])?;
    let mut s = s0.clone();
    for _ in 0..200 {
        s = leapfrog_step(&s, 0.05, ctx.full())?;
    }
    let mut back = s.flipped();
    for _ in 0..200 {
        back = leapfrog_step(&back, 0.05, ctx.full())?;
    }
    let gap = back.flipped().distance(&s0);
    Ok(check("leapfrog_reversibility", gap < 1e-8, format!("recovery gap {gap:.1e}")))
}

fn volume(ctx: &ModelContext) -> Result<Check> {
    // the step map is affine on a quadratic target, so unit differences give
    // its Jacobian exactly up to round-off
    let pot = ctx.scaled_batch(0)?;
    let base = leapfrog_step(&PhaseState::new(vec![0.0; 3], vec![0.0; 3])?, 0.05, pot)?;
    let mut worst: f64 = 0.0;
    for d in 0..3 {
        let mut eq = PhaseState::new(vec![0.0; 3], vec![0.0; 3])?;
        eq.q[d] = 1.0;
        let mut ep = eq.clone();
        ep.q[d] = 0.0;
        ep.p[d] = 1.0;
        let a = leapfrog_step(&eq, 0.05, pot)?;
        let b = leapfrog_step(&ep, 0.05, pot)?;
        let det = (a.q[d] - base.q[d]) * (b.p[d] - base.p[d]) - (b.q[d] - base.q[d]) * (a.p[d] - base.p[d]);
        worst = worst.max((det - 1.0).abs());
    }
    Ok(check("leapfrog_unit_determinant", worst < 1e-12, format!("max |det - 1| {worst:.1e}")))
}

fn second_order(ctx1: &ModelContext) -> Result<Check> {
    // a grid inside the stability region 0 < ε < 2/ω
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let s0 = PhaseState::new(vec![ctx1.posterior().mean[0]], vec![1.0])?;
    let qf = ctx1.full_quadratic();
    let mut err = Vec::new();
    for &e in &eps {
        let n = steps_for(1.0, e);
        let (end, _) = integrate_endpoint(&s0, e, n, &SubsampleSchedule::Full, ctx1, &mut Stream::new(0))?;
        err.push(end.distance(&exact_flow(&qf, &s0, n as f64 * e)?));
    }
    let slope = stats::log_log_slope(&eps, &err);
    Ok(check("leapfrog_second_order", (1.8..=2.2).contains(&slope), format!("log-log slope {slope:.3}")))
}

fn bias(ctx1: &ModelContext) -> Result<Check> {
    let s0 = PhaseState::new(vec![ctx1.posterior().mean[0]], vec![1.0])?;
    let full = ctx1.full_quadratic();
    let biased = to_quadratic(ctx1.scaled_batch(0)? as &dyn PotentialOracle)?;
    let (eps, n) = (0.0005, 2000);
    let t = eps * n as f64;
    let (fixed, _) = integrate_endpoint(&s0, eps, n, &SubsampleSchedule::FixedBatch(0), ctx1, &mut Stream::new(0))?;
    let target = exact_flow(&full, &s0, t)?;
    let predicted = exact_flow(&biased, &s0, t)?.distance(&target);
    let measured = fixed.distance(&target);
    let rel = (measured - predicted).abs() / predicted;
    let sweep = SubsampleSchedule::all_batches(ctx1);
    let (sw, _) = integrate_endpoint(&s0, eps, n, &sweep, ctx1, &mut Stream::new(0))?;
    let sweep_err = sw.distance(&target);
    Ok(check(
        "fixed_batch_bias_matches_biased_flow",
        rel < 0.1 && sweep_err < 0.1 * measured,
        format!("fixed error {measured:.3e} vs biased-flow {predicted:.3e}; sweep error {sweep_err:.1e}"),
    ))
}

fn sampler(ctx1: &ModelContext) -> Result<Check> {
    let cfg = SamplerConfig { n_iterations: 2000, seed: 5, ..SamplerConfig::default() };
    let s = run_chain(&cfg, ctx1)?;
    let z = (s.est_mean[0] - s.analytic_mean[0]).abs() / s.mc_se[0];
    let ok = z < 3.0 && (0.0..=1.0).contains(&s.mean_accept) && s.divergences == 0;
    Ok(check("chain_recovers_posterior_mean", ok, format!("|mean error| = {z:.2} s.e., accept {:.3}", s.mean_accept)))
}

fn energy_check(ctx: &ModelContext) -> Result<Check> {
    let h = Hamiltonian::new(ctx.full())?;
    let s0 = PhaseState::new(vec![0.3, -1.2, 2.0], vec![1.0, 0.5, -0.25])?;
    let s1 = leapfrog_step(&s0, 1e-3, ctx.full())?;
    let dh = (h.value(&s1)? - h.value(&s0)?).abs();
    Ok(check("small_step_energy_change", dh < 1e-3, format!("|ΔH| {dh:.1e} after one step of 1e-3")))
}

/// Run every check; never stops early.
pub fn run_selftest() -> Result<Vec<Check>> {
    let ctx3 = ModelContext::generate(model(3, TrueMeans::StandardNormal), 20)?;
    let ctx1 = ModelContext::generate(model(1, TrueMeans::Constant(1.0)), 20)?;
    Ok(vec![
        gradients(&ctx3),
        decomposition()?,
        posterior_quadrature()?,
        flow_oracle(&ctx3)?,
        reversibility(&ctx3)?,
        volume(&ctx3)?,
        energy_check(&ctx3)?,
        second_order(&ctx1)?,
        bias(&ctx1)?,
        sampler(&ctx1)?,
    ])
}
