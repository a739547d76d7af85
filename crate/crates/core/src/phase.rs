//! Phase-space states and the separable Hamiltonian `H(q, p) = T(p) + V(q)`.

use crate::error::{check_dim, Error, Result};
use crate::potential::PotentialOracle;
use crate::rng::Stream;

/// Position and momentum of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Config("phase state needs dimension >= 1".into()));
        }
        check_dim(q.len(), p.len())?;
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    /// Same position, momentum negated.
    pub fn flipped(&self) -> Self {
        Self { q: self.q.clone(), p: self.p.iter().map(|v| -v).collect() }
    }

    /// Euclidean distance in the joint `(q, p)` space.
    pub fn distance(&self, other: &PhaseState) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Euclidean-Gaussian kinetic energy `T(p) = |p|^2 / 2` (identity mass).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KineticEnergy {
    dim: usize,
}

impl KineticEnergy {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("kinetic energy needs dimension >= 1".into()));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, p.len())?;
        Ok(p.to_vec())
    }
}

pub fn kinetic_gradient(k: &KineticEnergy, p: &[f64]) -> Result<Vec<f64>> {
    k.gradient(p)
}

/// Separable Hamiltonian over a borrowed potential oracle.
#[derive(Clone, Copy)]
pub struct Hamiltonian<'a> {
    pub kinetic: KineticEnergy,
    pub potential: &'a dyn PotentialOracle,
}

impl<'a> Hamiltonian<'a> {
    pub fn new(potential: &'a dyn PotentialOracle) -> Result<Self> {
        Ok(Self { kinetic: KineticEnergy::new(potential.dim())?, potential })
    }

    pub fn value(&self, s: &PhaseState) -> Result<f64> {
        check_dim(self.kinetic.dim(), s.q.len())?;
        check_dim(self.kinetic.dim(), s.p.len())?;
        Ok(self.kinetic.value(&s.p) + self.potential.value(&s.q))
    }
}

pub fn hamiltonian_value(h: &Hamiltonian<'_>, s: &PhaseState) -> Result<f64> {
    h.value(s)
}

/// `dim` independent standard-normal momenta.
pub fn sample_momentum(rng: &mut Stream, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Config("momentum dimension must be >= 1".into()));
    }
    Ok((0..dim).map(|_| rng.standard_normal()).collect())
}
