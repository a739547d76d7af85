use std::sync::OnceLock;

use subhmc::sampler::run_chain_traced;
use subhmc::stats::{ks_p_value, ks_statistic_normal};
use subhmc::{run_chain, ModelConfig, ModelContext, SamplerConfig, SubsampleSchedule};

fn default_1d() -> &'static ModelContext {
    static C: OnceLock<ModelContext> = OnceLock::new();
    C.get_or_init(|| ModelContext::generate(ModelConfig::default(), 20).unwrap())
}

#[test]
fn full_chain_recovers_posterior() {
    let c = default_1d();
    let cfg = SamplerConfig { eps: 0.05, n_iterations: 5000, seed: 1, ..SamplerConfig::default() };
    let s = run_chain(&cfg, c).unwrap();
    assert!((s.est_mean[0] - s.analytic_mean[0]).abs() < 3.0 * s.mc_se[0]);
    // an ESS of at least 100 bounds the error by 3 sd/10
    assert!((s.est_mean[0] - s.analytic_mean[0]).abs() < 0.3 * s.analytic_var[0].sqrt());
    assert!((s.est_var[0] / s.analytic_var[0] - 1.0).abs() < 0.1);
    assert_eq!(s.divergences, 0);
}

#[test]
fn full_chain_passes_kolmogorov_smirnov() {
    let c = default_1d();
    let cfg = SamplerConfig { eps: 0.05, n_iterations: 11_112, seed: 2, ..SamplerConfig::default() };
    let run = run_chain_traced(&cfg, c).unwrap();
    let draws = run.draws(0, cfg.warmup());
    assert!(draws.len() >= 10_000);
    let post = c.posterior();
    let d = ks_statistic_normal(&draws, post.mean[0], post.var[0].sqrt());
    let p = ks_p_value(d, draws.len());
    assert!(p > 1e-3, "KS D={d} p={p}");
}

#[test]
fn acceptance_falls_as_step_grows() {
    let c = default_1d();
    let eps = [0.025, 0.05, 0.1, 0.2];
    let mut violations = 0;
    for seed in 0..20 {
        let acc: Vec<f64> = eps
            .iter()
            .map(|&e| {
                run_chain(&SamplerConfig { eps: e, n_iterations: 300, seed, ..SamplerConfig::default() }, c)
                    .unwrap()
                    .mean_accept
            })
            .collect();
        violations += acc.windows(2).filter(|w| w[1] > w[0]).count();
    }
    assert!(violations <= 2, "{violations} violations");
}

fn accept(schedule: SubsampleSchedule, eps: f64, metropolis: bool) -> subhmc::ChainSummary {
    let cfg = SamplerConfig { eps, n_iterations: 2000, metropolis, schedule, seed: 9, ..SamplerConfig::default() };
    run_chain(&cfg, default_1d()).unwrap()
}

#[test]
fn fixed_batch_acceptance_ignores_step_size() {
    let pool = SubsampleSchedule::RandomFixedBatch((0..5).collect());
    let (a, b) = (accept(pool.clone(), 0.02, false).mean_accept, accept(pool, 0.01, false).mean_accept);
    assert!((a - b).abs() < 0.1, "{a} vs {b}");
    let (fa, fb) = (
        accept(SubsampleSchedule::Full, 0.1, true).mean_accept,
        accept(SubsampleSchedule::Full, 0.05, true).mean_accept,
    );
    assert!(fb > fa, "{fb} vs {fa}");
}

#[test]
fn fixed_batch_is_worse_than_full() {
    let full = accept(SubsampleSchedule::Full, 0.05, true);
    let fixed = accept(SubsampleSchedule::RandomFixedBatch((0..5).collect()), 0.05, false);
    assert!(fixed.mean_accept < full.mean_accept - 0.2);
    assert!(fixed.mean_abs_z > full.mean_abs_z);
}
