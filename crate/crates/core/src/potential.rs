//! Potential-energy oracles and their quadratic canonical form.

use crate::error::{check_dim, Error, Result};

/// Potential energy `V(q)` with its gradient.
///
/// `cost_units` is the number of data points touched by one gradient
/// evaluation; integrators charge it once per half-kick.
pub trait PotentialOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &[f64]) -> f64;

    fn gradient_into(&self, q: &[f64], grad: &mut [f64]);

    fn cost_units(&self) -> u64;

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(q, &mut g);
        g
    }
}

impl<P: PotentialOracle + ?Sized> PotentialOracle for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, q: &[f64]) -> f64 {
        (**self).value(q)
    }
    fn gradient_into(&self, q: &[f64], grad: &mut [f64]) {
        (**self).gradient_into(q, grad)
    }
    fn cost_units(&self) -> u64 {
        (**self).cost_units()
    }
}

/// `V ≡ 0`.
#[derive(Clone, Debug)]
pub struct ZeroPotential {
    dim: usize,
}

impl ZeroPotential {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl PotentialOracle for ZeroPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _q: &[f64]) -> f64 {
        0.0
    }
    fn gradient_into(&self, _q: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
    }
    fn cost_units(&self) -> u64 {
        1
    }
}

/// `factor · V`, the between-trajectory approximation `V ≈ J·V_j`.
#[derive(Clone, Debug)]
pub struct ScaledPotential<P> {
    inner: P,
    factor: f64,
}

impl<P: PotentialOracle> ScaledPotential<P> {
    pub fn new(inner: P, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self { inner, factor })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl<P: PotentialOracle> PotentialOracle for ScaledPotential<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, q: &[f64]) -> f64 {
        self.factor * self.inner.value(q)
    }
    fn gradient_into(&self, q: &[f64], grad: &mut [f64]) {
        self.inner.gradient_into(q, grad);
        for g in grad.iter_mut() {
            *g *= self.factor;
        }
    }
    fn cost_units(&self) -> u64 {
        self.inner.cost_units()
    }
}

pub fn scaled_potential<P: PotentialOracle>(inner: P, factor: f64) -> Result<ScaledPotential<P>> {
    ScaledPotential::new(inner, factor)
}

/// Diagonal quadratic `V(q) = Σ_d ½ λ_d (q_d − c_d)²`, up to a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub stiffness: Vec<f64>,
    pub center: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(stiffness: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        check_dim(stiffness.len(), center.len())?;
        if stiffness.is_empty() {
            return Err(Error::Config("quadratic form needs dimension >= 1".into()));
        }
        if let Some(l) = stiffness.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("stiffness must be positive, got {l}")));
        }
        Ok(Self { stiffness, center })
    }

    pub fn dim(&self) -> usize {
        self.stiffness.len()
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticPotential {
    pub form: QuadraticForm,
}

impl QuadraticPotential {
    pub fn new(form: QuadraticForm) -> Self {
        Self { form }
    }
}

impl PotentialOracle for QuadraticPotential {
    fn dim(&self) -> usize {
        self.form.dim()
    }
    fn value(&self, q: &[f64]) -> f64 {
        self.form.stiffness.iter().zip(&self.form.center).zip(q).map(|((l, c), x)| 0.5 * l * (x - c) * (x - c)).sum()
    }
    fn gradient_into(&self, q: &[f64], grad: &mut [f64]) {
        for (d, g) in grad.iter_mut().enumerate() {
            *g = self.form.stiffness[d] * (q[d] - self.form.center[d]);
        }
    }
    fn cost_units(&self) -> u64 {
        1
    }
}

/// Recover the diagonal quadratic form behind an oracle.
///
/// Stiffness and center are fitted from gradients at `q = 0` and `q = 1`,
/// then the fit is checked against gradient and value differences at a third
/// point. Oracles that are not separable quadratics are rejected.
pub fn to_quadratic(pot: &dyn PotentialOracle) -> Result<QuadraticForm> {
    let dim = pot.dim();
    let g0 = pot.gradient(&vec![0.0; dim]);
    let g1 = pot.gradient(&vec![1.0; dim]);
    let stiffness: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
    if stiffness.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Unsupported("potential is not a convex quadratic".into()));
    }
    let center: Vec<f64> = g0.iter().zip(&stiffness).map(|(g, l)| -g / l).collect();
    let form = QuadraticForm { stiffness, center };

    let probe: Vec<f64> = (0..dim).map(|d| -0.7 + 0.3 * (d % 5) as f64).collect();
    let gp = pot.gradient(&probe);
    let fit = QuadraticPotential::new(form.clone());
    let gf = fit.gradient(&probe);
    let scale = form.stiffness.iter().cloned().fold(1.0, f64::max);
    for (a, b) in gp.iter().zip(&gf) {
        if (a - b).abs() > 1e-9 * scale * (1.0 + a.abs()) {
            return Err(Error::Unsupported("gradient is not affine in q".into()));
        }
    }
    let origin = vec![0.0; dim];
    let dv = pot.value(&probe) - pot.value(&origin);
    let dv_fit = fit.value(&probe) - fit.value(&origin);
    if (dv - dv_fit).abs() > 1e-9 * (1.0 + dv.abs()) * scale {
        return Err(Error::Unsupported("value is not the quadratic matching its gradient".into()));
    }
    Ok(form)
}

/// Largest relative error between an oracle's gradient and central finite
/// differences of its value, over the given points.
pub fn gradient_fd_error(pot: &dyn PotentialOracle, points: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for q in points {
        let g = pot.gradient(q);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        for d in 0..q.len() {
            let h = 1e-6 * q[d].abs().max(1.0);
            let mut hi = q.clone();
            let mut lo = q.clone();
            hi[d] += h;
            lo[d] -= h;
            let fd = (pot.value(&hi) - pot.value(&lo)) / (2.0 * h);
            worst = worst.max((fd - g[d]).abs() / gnorm);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quartic;
    impl PotentialOracle for Quartic {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, q: &[f64]) -> f64 {
            q[0].powi(4)
        }
        fn gradient_into(&self, q: &[f64], g: &mut [f64]) {
            g[0] = 4.0 * q[0].powi(3);
        }
        fn cost_units(&self) -> u64 {
            1
        }
    }

    #[test]
    fn unit_quadratic_round_trips() {
        let qf = QuadraticForm::new(vec![1.0], vec![0.0]).unwrap();
        let back = to_quadratic(&QuadraticPotential::new(qf.clone())).unwrap();
        assert_eq!(back, qf);
    }

    #[test]
    fn non_quadratic_is_unsupported() {
        assert!(matches!(to_quadratic(&Quartic), Err(Error::Unsupported(_))));
    }

    #[test]
    fn scaling() {
        let qf = QuadraticForm::new(vec![2.0, 3.0], vec![0.5, -0.5]).unwrap();
        let base = QuadraticPotential::new(qf);
        let q = [0.1, 0.9];
        let same = scaled_potential(&base, 1.0).unwrap();
        assert_eq!(same.value(&q), base.value(&q));
        assert_eq!(same.gradient(&q), base.gradient(&q));
        let tripled = scaled_potential(&base, 3.0).unwrap();
        let g = base.gradient(&q);
        assert_eq!(tripled.gradient(&q), vec![3.0 * g[0], 3.0 * g[1]]);
        assert_eq!(tripled.cost_units(), base.cost_units());
        assert!(scaled_potential(&base, 0.0).is_err());
    }

    #[test]
    fn bad_stiffness_rejected() {
        assert!(QuadraticForm::new(vec![0.0], vec![0.0]).is_err());
        assert!(QuadraticForm::new(vec![1.0], vec![0.0, 1.0]).is_err());
    }
}
