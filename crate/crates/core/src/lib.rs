//! Hamiltonian Monte Carlo with data subsampling.
//!
//! Full-data and subsampled leapfrog integrators, the HMC chain built on
//! them, and a conjugate-Gaussian model whose posterior and Hamiltonian flow
//! are known in closed form, so every trajectory and every chain can be
//! checked against an exact answer.

pub mod config;
pub mod error;
pub mod expt;
pub mod integrate;
pub mod model;
pub mod phase;
pub mod potential;
pub mod rng;
pub mod sampler;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
pub use integrate::{
    endpoint_error, integrate, integrate_endpoint, leapfrog_step, steps_for, symmetric_sweep, SubsampleSchedule,
    TrajectoryRecord,
};
pub use model::{
    analytic_posterior, batch_potential, bias_gradient, exact_flow, full_potential, generate_data, BatchPartition,
    DataSet, ModelConfig, ModelContext, Posterior, TrueMeans,
};
pub use phase::{hamiltonian_value, kinetic_gradient, sample_momentum, Hamiltonian, KineticEnergy, PhaseState};
pub use potential::{scaled_potential, to_quadratic, PotentialOracle, QuadraticForm, QuadraticPotential};
pub use rng::Stream;
pub use sampler::{acceptance_probability, hmc_transition, run_chain, ChainSummary, SamplerConfig};
