use std::sync::OnceLock;

use proptest::prelude::*;
use subhmc::integrate::TrajectoryRecord;
use subhmc::potential::PotentialOracle;
use subhmc::{
    exact_flow, integrate, leapfrog_step, symmetric_sweep, DataSet, ModelConfig, ModelContext, PhaseState, Stream,
    SubsampleSchedule, TrueMeans,
};

fn default_1d() -> &'static ModelContext {
    static C: OnceLock<ModelContext> = OnceLock::new();
    C.get_or_init(|| ModelContext::generate(ModelConfig::default(), 20).unwrap())
}

fn three_d(b: usize) -> ModelContext {
    let cfg = ModelConfig { dim: 3, means: TrueMeans::StandardNormal, seed: 4, ..ModelConfig::default() };
    ModelContext::generate(cfg, b).unwrap()
}

fn schedules() -> impl Strategy<Value = SubsampleSchedule> {
    prop_oneof![
        Just(SubsampleSchedule::Full),
        (0usize..25).prop_map(SubsampleSchedule::FixedBatch),
        Just(SubsampleSchedule::RandomFixedBatch((0..5).collect())),
        any::<bool>().prop_map(|c| SubsampleSchedule::PerStepRandom { pool: (0..5).collect(), close_loop: c }),
        Just(SubsampleSchedule::SymmetricSweep((0..25).collect())),
        Just(SubsampleSchedule::PartialSymmetricSweep(vec![3, 0, 7])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_schedule_is_reversible(q in -1.0f64..3.0, p in -3.0f64..3.0, steps in 1usize..400) {
        let c = default_1d();
        let s0 = PhaseState::new(vec![q], vec![p]).unwrap();
        let mut rng = Stream::new(0);
        let fwd = integrate(&s0, 0.05, steps, &SubsampleSchedule::Full, c, &mut rng).unwrap();
        let back = integrate(&fwd.last().flipped(), 0.05, steps, &SubsampleSchedule::Full, c, &mut rng).unwrap();
        prop_assert!(back.last().flipped().distance(&s0) < 1e-8);
    }

    #[test]
    fn sweep_is_reversible(q in -1.0f64..3.0, p in -3.0f64..3.0, sweeps in 1usize..20) {
        let c = default_1d();
        let s0 = PhaseState::new(vec![q], vec![p]).unwrap();
        let all: Vec<usize> = (0..25).collect();
        let fwd = symmetric_sweep(&s0, 0.01, sweeps, &all, c).unwrap();
        // forward-then-reverse is a palindrome, so the same sweeps undo it
        let back = symmetric_sweep(&fwd.last().flipped(), 0.01, sweeps, &all, c).unwrap();
        prop_assert!(back.last().flipped().distance(&s0) < 1e-8);
    }

    #[test]
    fn step_map_has_unit_determinant(j in 0usize..25, eps in 0.001f64..0.17) {
        let c = three_d(20);
        let pot = c.scaled_batch(j).unwrap();
        let zero = PhaseState::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let base = leapfrog_step(&zero, eps, pot).unwrap();
        for d in 0..3 {
            let mut a = zero.clone();
            a.q[d] = 1.0;
            let mut b = zero.clone();
            b.p[d] = 1.0;
            let (a, b) = (leapfrog_step(&a, eps, pot).unwrap(), leapfrog_step(&b, eps, pot).unwrap());
            let det = (a.q[d] - base.q[d]) * (b.p[d] - base.p[d]) - (b.q[d] - base.q[d]) * (a.p[d] - base.p[d]);
            prop_assert!((det - 1.0).abs() < 1e-12, "det {det}");
        }
    }

    #[test]
    fn batch_values_telescope_up_to_a_constant(q in prop::collection::vec(-5.0f64..5.0, 3), b in prop::sample::select(vec![20usize, 100, 500])) {
        let c = three_d(b);
        let sum = |q: &[f64]| (0..c.partition().count()).map(|j| c.batch(j).unwrap().value(q)).sum::<f64>();
        let zero = [0.0; 3];
        let k0 = sum(&zero) - c.full().value(&zero);
        let k = sum(&q) - c.full().value(&q);
        prop_assert!((k - k0).abs() < 1e-9 * c.full().value(&q).abs().max(1.0));
        let g = c.full().gradient(&q);
        let mut gs = [0.0; 3];
        for j in 0..c.partition().count() {
            for (s, x) in gs.iter_mut().zip(c.batch(j).unwrap().gradient(&q)) {
                *s += x;
            }
        }
        for (a, s) in g.iter().zip(&gs) {
            prop_assert!((a - s).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn exact_flow_composes(q in -3.0f64..3.0, p in -3.0f64..3.0, s in 0.0f64..5.0, t in 0.0f64..5.0) {
        let c = default_1d();
        let qf = c.full_quadratic();
        let s0 = PhaseState::new(vec![q], vec![p]).unwrap();
        let two = exact_flow(&qf, &exact_flow(&qf, &s0, s).unwrap(), t).unwrap();
        let one = exact_flow(&qf, &s0, s + t).unwrap();
        prop_assert!(two.distance(&one) < 1e-12 * (1.0 + s0.q[0].abs() + s0.p[0].abs()) * 10.0);
    }

    #[test]
    fn record_length_and_cost_bookkeeping(schedule in schedules(), steps in 1usize..120, seed in any::<u64>()) {
        let c = default_1d();
        let s0 = PhaseState::new(vec![1.0], vec![0.5]).unwrap();
        let rec: TrajectoryRecord = integrate(&s0, 0.01, steps, &schedule, c, &mut Stream::new(seed)).unwrap();
        prop_assert_eq!(rec.steps.len(), steps + 1);
        // every step evaluates two gradients of its own oracle
        let per_step: u64 = rec.steps[1..]
            .iter()
            .map(|s| if s.batch.is_some() { 2 * 20 } else { 2 * 500 })
            .sum();
        prop_assert_eq!(rec.total_cost_units, per_step);
        if let SubsampleSchedule::PerStepRandom { close_loop: true, .. } = schedule {
            prop_assert_eq!(rec.steps[1].batch, rec.steps[steps].batch);
        }
    }

    #[test]
    fn dataset_csv_round_trips(dim in 1usize..4, n in 1usize..30, seed in any::<u64>()) {
        let cfg = ModelConfig { dim, n_data: n, means: TrueMeans::StandardNormal, seed, ..ModelConfig::default() };
        let data = subhmc::generate_data(&cfg, &Stream::new(seed)).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = DataSet::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.x, data.x);
    }
}
