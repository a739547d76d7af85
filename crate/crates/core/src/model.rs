//! Conjugate-Gaussian experimental model.
//!
//! Per dimension `d`, observations `x_{d,n} ~ Normal(μ_d, σ²)` with prior
//! `μ_d ~ Normal(m, s²)`. The potential is the negative log posterior with
//! constants kept, so that the batch potentials sum to the full one exactly.

use std::io::{BufRead, Write};

use crate::error::{check_dim, Error, Result};
use crate::phase::PhaseState;
use crate::potential::{PotentialOracle, QuadraticForm, ScaledPotential};
use crate::rng::{keys, Stream};

/// How the true per-dimension means are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum TrueMeans {
    /// Same mean in every dimension.
    Constant(f64),
    /// Explicit vector of length `dim`.
    PerDim(Vec<f64>),
    /// `μ_d ~ Normal(0, 1)` from a dedicated substream.
    StandardNormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub sigma: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub n_data: usize,
    pub dim: usize,
    pub means: TrueMeans,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            prior_mean: 0.0,
            prior_sd: 1.0,
            n_data: 500,
            dim: 1,
            means: TrueMeans::Constant(1.0),
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(Error::Config(format!("prior sd must be positive, got {}", self.prior_sd)));
        }
        if self.n_data == 0 {
            return Err(Error::Config("need at least one observation".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        if let TrueMeans::PerDim(mu) = &self.means {
            check_dim(self.dim, mu.len())?;
        }
        Ok(())
    }
}

/// Observations laid out as `dim` rows of `n_data` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    pub x: Vec<Vec<f64>>,
    pub mu_true: Option<Vec<f64>>,
}

impl DataSet {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn n_data(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,index,value")?;
        for (d, row) in self.x.iter().enumerate() {
            for (n, v) in row.iter().enumerate() {
                writeln!(w, "{d},{n},{v}")?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "dim,index,value" {
            return Err(Error::Parse { line: 1, msg: "expected header `dim,index,value`".into() });
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse { line: lineno, msg: msg.to_string() };
            let mut it = line.split(',');
            let d: usize = it.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad `dim`"))?;
            let n: usize = it.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad `index`"))?;
            let v: f64 = it.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad `value`"))?;
            if it.next().is_some() {
                return Err(bad("too many columns"));
            }
            if d > rows.len() || (d == rows.len() && n != 0) {
                return Err(bad("rows must be ordered by dim then index"));
            }
            if d == rows.len() {
                rows.push(Vec::new());
            }
            if n != rows[d].len() {
                return Err(bad("rows must be ordered by dim then index"));
            }
            rows[d].push(v);
        }
        if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(Error::Parse { line: 0, msg: "ragged or empty data".into() });
        }
        Ok(Self { x: rows, mu_true: None })
    }
}

pub fn generate_data(cfg: &ModelConfig, rng: &Stream) -> Result<DataSet> {
    cfg.validate()?;
    let mu = match &cfg.means {
        TrueMeans::Constant(m) => vec![*m; cfg.dim],
        TrueMeans::PerDim(v) => v.clone(),
        TrueMeans::StandardNormal => {
            let mut s = rng.derive(keys::MEANS);
            (0..cfg.dim).map(|_| s.standard_normal()).collect()
        }
    };
    let data = rng.derive(keys::DATA);
    let x = mu
        .iter()
        .enumerate()
        .map(|(d, m)| {
            let mut s = data.derive(d as u64);
            (0..cfg.n_data).map(|_| m + cfg.sigma * s.standard_normal()).collect()
        })
        .collect();
    Ok(DataSet { x, mu_true: Some(mu) })
}

/// `count` contiguous batches of `size` observations; batch `j` owns
/// indices `j·size .. (j+1)·size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPartition {
    count: usize,
    size: usize,
}

impl BatchPartition {
    pub fn new(n_data: usize, size: usize) -> Result<Self> {
        if size == 0 || !n_data.is_multiple_of(size) {
            return Err(Error::Config(format!("batch size {size} does not divide {n_data} observations")));
        }
        Ok(Self { count: n_data / size, size })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn range(&self, j: usize) -> Result<std::ops::Range<usize>> {
        if j >= self.count {
            return Err(Error::BatchIndex { index: j, count: self.count });
        }
        Ok(j * self.size..(j + 1) * self.size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct DimStats {
    count: f64,
    mean: f64,
    // Σ (x − mean)²
    scatter: f64,
}

impl DimStats {
    fn of(xs: &[f64]) -> Self {
        let count = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / count;
        let scatter = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        Self { count, mean, scatter }
    }
}

/// `Σ_{d, n∈S} (q_d − x_{d,n})²/(2σ²) + w·Σ_d (q_d − m)²/(2s²)` over a
/// subset `S` of the data, with prior weight `w`.
#[derive(Clone, Debug)]
pub struct GaussianPotential {
    stats: Vec<DimStats>,
    inv_sigma2: f64,
    prior_mean: f64,
    prior_precision: f64,
    prior_weight: f64,
    cost: u64,
}

impl GaussianPotential {
    fn over(cfg: &ModelConfig, data: &DataSet, range: std::ops::Range<usize>, prior_weight: f64) -> Self {
        let cost = range.len() as u64;
        Self {
            stats: data.x.iter().map(|row| DimStats::of(&row[range.clone()])).collect(),
            inv_sigma2: 1.0 / (cfg.sigma * cfg.sigma),
            prior_mean: cfg.prior_mean,
            prior_precision: 1.0 / (cfg.prior_sd * cfg.prior_sd),
            prior_weight,
            cost,
        }
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }
}

impl PotentialOracle for GaussianPotential {
    fn dim(&self) -> usize {
        self.stats.len()
    }

    fn value(&self, q: &[f64]) -> f64 {
        self.stats
            .iter()
            .zip(q)
            .map(|(st, &x)| {
                let r = x - st.mean;
                let a = x - self.prior_mean;
                0.5 * self.inv_sigma2 * (st.count * r * r + st.scatter)
                    + 0.5 * self.prior_weight * self.prior_precision * a * a
            })
            .sum()
    }

    fn gradient_into(&self, q: &[f64], grad: &mut [f64]) {
        for ((g, st), &x) in grad.iter_mut().zip(&self.stats).zip(q) {
            *g = self.inv_sigma2 * st.count * (x - st.mean)
                + self.prior_weight * self.prior_precision * (x - self.prior_mean);
        }
    }

    fn cost_units(&self) -> u64 {
        self.cost
    }
}

fn check_data(cfg: &ModelConfig, data: &DataSet) -> Result<()> {
    cfg.validate()?;
    check_dim(cfg.dim, data.dim())?;
    check_dim(cfg.n_data, data.n_data())?;
    if data.x.iter().any(|r| r.len() != cfg.n_data) {
        return Err(Error::Config("ragged data set".into()));
    }
    Ok(())
}

pub fn full_potential(cfg: &ModelConfig, data: &DataSet) -> Result<GaussianPotential> {
    check_data(cfg, data)?;
    Ok(GaussianPotential::over(cfg, data, 0..cfg.n_data, 1.0))
}

/// Batch `j` potential `V_j`, carrying `1/J` of the prior so `Σ_j V_j = V`.
pub fn batch_potential(
    cfg: &ModelConfig,
    data: &DataSet,
    part: &BatchPartition,
    j: usize,
) -> Result<GaussianPotential> {
    check_data(cfg, data)?;
    check_dim(cfg.n_data, part.count() * part.size())?;
    let range = part.range(j)?;
    Ok(GaussianPotential::over(cfg, data, range, 1.0 / part.count() as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Posterior {
    pub fn sd(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

pub fn analytic_posterior(cfg: &ModelConfig, data: &DataSet) -> Result<Posterior> {
    check_data(cfg, data)?;
    let n = cfg.n_data as f64;
    let (s2, sig2) = (cfg.prior_sd * cfg.prior_sd, cfg.sigma * cfg.sigma);
    let denom = sig2 + n * s2;
    let mean = data
        .x
        .iter()
        .map(|row| {
            let xbar = row.iter().sum::<f64>() / n;
            (n * xbar * s2 + cfg.prior_mean * sig2) / denom
        })
        .collect();
    Ok(Posterior { mean, var: vec![sig2 * s2 / denom; cfg.dim] })
}

/// Closed-form harmonic-oscillator flow of `T + ½ Σ λ_d (q_d − c_d)²`.
pub fn exact_flow(qf: &QuadraticForm, s: &PhaseState, t: f64) -> Result<PhaseState> {
    check_dim(qf.dim(), s.dim())?;
    let mut q = Vec::with_capacity(s.dim());
    let mut p = Vec::with_capacity(s.dim());
    for d in 0..s.dim() {
        let w = qf.stiffness[d].sqrt();
        let (sn, cs) = (w * t).sin_cos();
        let r = s.q[d] - qf.center[d];
        q.push(qf.center[d] + r * cs + s.p[d] / w * sn);
        p.push(-w * r * sn + s.p[d] * cs);
    }
    Ok(PhaseState { q, p })
}

/// `∇V(q) − ∇approx(q)`: the per-step gradient discrepancy of a subsampled
/// potential.
pub fn bias_gradient(full: &dyn PotentialOracle, approx: &dyn PotentialOracle, q: &[f64]) -> Result<Vec<f64>> {
    check_dim(full.dim(), approx.dim())?;
    check_dim(full.dim(), q.len())?;
    let a = full.gradient(q);
    let b = approx.gradient(q);
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
}

/// A generated data set with its partition and every oracle built over it.
#[derive(Clone, Debug)]
pub struct ModelContext {
    config: ModelConfig,
    data: DataSet,
    partition: BatchPartition,
    posterior: Posterior,
    full: GaussianPotential,
    batches: Vec<GaussianPotential>,
    scaled: Vec<ScaledPotential<GaussianPotential>>,
}

impl ModelContext {
    pub fn new(config: ModelConfig, data: DataSet, batch_size: usize) -> Result<Self> {
        check_data(&config, &data)?;
        let partition = BatchPartition::new(config.n_data, batch_size)?;
        let full = full_potential(&config, &data)?;
        let batches = (0..partition.count())
            .map(|j| batch_potential(&config, &data, &partition, j))
            .collect::<Result<Vec<_>>>()?;
        let factor = partition.count() as f64;
        let scaled = batches.iter().map(|b| ScaledPotential::new(b.clone(), factor)).collect::<Result<Vec<_>>>()?;
        let posterior = analytic_posterior(&config, &data)?;
        Ok(Self { config, data, partition, posterior, full, batches, scaled })
    }

    /// Generate data from `config.seed` and build the context.
    pub fn generate(config: ModelConfig, batch_size: usize) -> Result<Self> {
        let data = generate_data(&config, &Stream::new(config.seed))?;
        Self::new(config, data, batch_size)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn partition(&self) -> &BatchPartition {
        &self.partition
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn full(&self) -> &GaussianPotential {
        &self.full
    }

    pub fn batch(&self, j: usize) -> Result<&GaussianPotential> {
        self.batches.get(j).ok_or(Error::BatchIndex { index: j, count: self.batches.len() })
    }

    /// `J·V_j`.
    pub fn scaled_batch(&self, j: usize) -> Result<&ScaledPotential<GaussianPotential>> {
        self.scaled.get(j).ok_or(Error::BatchIndex { index: j, count: self.scaled.len() })
    }

    pub fn full_quadratic(&self) -> QuadraticForm {
        QuadraticForm { stiffness: vec![self.stiffness(); self.dim()], center: self.posterior.mean.clone() }
    }

    /// Shared stiffness `N/σ² + 1/s²` of the full and every scaled batch potential.
    pub fn stiffness(&self) -> f64 {
        let c = &self.config;
        c.n_data as f64 / (c.sigma * c.sigma) + 1.0 / (c.prior_sd * c.prior_sd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{gradient_fd_error, to_quadratic, QuadraticPotential};

    fn default_ctx(dim: usize, b: usize) -> ModelContext {
        let cfg = ModelConfig { dim, ..ModelConfig::default() };
        ModelContext::generate(cfg, b).unwrap()
    }

    fn random_points(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = Stream::new(seed);
        (0..n).map(|_| (0..dim).map(|_| 3.0 * r.standard_normal()).collect()).collect()
    }

    fn single_obs(x: f64) -> (ModelConfig, DataSet) {
        let cfg = ModelConfig {
            sigma: 1.0,
            prior_mean: 0.0,
            prior_sd: 1.0,
            n_data: 1,
            dim: 1,
            means: TrueMeans::Constant(0.0),
            seed: 0,
        };
        (cfg, DataSet { x: vec![vec![x]], mu_true: None })
    }

    #[test]
    fn degenerate_noise_returns_means() {
        let cfg =
            ModelConfig { sigma: 1e-8, dim: 3, means: TrueMeans::PerDim(vec![1.0, -2.0, 0.5]), ..Default::default() };
        let data = generate_data(&cfg, &Stream::new(4)).unwrap();
        for (row, mu) in data.x.iter().zip([1.0, -2.0, 0.5]) {
            assert!(row.iter().all(|x| (x - mu).abs() < 1e-6));
        }
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let cfg = ModelConfig::default();
        let data = generate_data(&cfg, &Stream::new(cfg.seed)).unwrap();
        let mean = data.x[0].iter().sum::<f64>() / 500.0;
        assert!((mean - 1.0).abs() < 4.0 * 2.0 / 500f64.sqrt(), "{mean}");
    }

    #[test]
    fn generation_is_deterministic_and_nested() {
        let cfg = ModelConfig { dim: 5, means: TrueMeans::StandardNormal, ..Default::default() };
        let a = generate_data(&cfg, &Stream::new(9)).unwrap();
        let b = generate_data(&cfg, &Stream::new(9)).unwrap();
        assert_eq!(a, b);
        let small = generate_data(&ModelConfig { dim: 2, ..cfg }, &Stream::new(9)).unwrap();
        assert_eq!(small.x[..], a.x[..2]);
    }

    #[test]
    fn full_gradient_vanishes_at_posterior_mean() {
        let ctx = default_ctx(3, 20);
        let g = ctx.full().gradient(&ctx.posterior().mean);
        assert!(g.iter().all(|v| v.abs() < 1e-10), "{g:?}");
    }

    #[test]
    fn single_observation_potential() {
        let (cfg, data) = single_obs(0.0);
        let v = full_potential(&cfg, &data).unwrap();
        for q in [-1.5, 0.0, 0.3, 2.0] {
            assert!((v.value(&[q]) - q * q).abs() < 1e-14);
            assert!((v.gradient(&[q])[0] - 2.0 * q).abs() < 1e-14);
        }
        assert_eq!(v.cost_units(), 1);
    }

    #[test]
    fn single_observation_posterior() {
        let (cfg, data) = single_obs(2.0);
        let post = analytic_posterior(&cfg, &data).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-15);
        assert!((post.var[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flat_prior_limit() {
        let cfg = ModelConfig { prior_sd: 1e6, ..Default::default() };
        let data = generate_data(&cfg, &Stream::new(2)).unwrap();
        let post = analytic_posterior(&cfg, &data).unwrap();
        let xbar = data.x[0].iter().sum::<f64>() / 500.0;
        assert!((post.mean[0] - xbar).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_gradients() {
        let ctx = default_ctx(4, 20);
        let pts = random_points(4, 100, 17);
        assert!(gradient_fd_error(ctx.full(), &pts) < 1e-6);
        assert!(gradient_fd_error(ctx.batch(3).unwrap(), &pts) < 1e-6);
        assert!(gradient_fd_error(ctx.scaled_batch(7).unwrap(), &pts) < 1e-6);
    }

    #[test]
    fn batch_gradients_telescope() {
        for b in [20, 100, 500] {
            let ctx = default_ctx(2, b);
            for q in random_points(2, 20, b as u64) {
                let full = ctx.full().gradient(&q);
                let mut sum = [0.0; 2];
                for j in 0..ctx.partition().count() {
                    for (s, g) in sum.iter_mut().zip(ctx.batch(j).unwrap().gradient(&q)) {
                        *s += g;
                    }
                }
                for (a, b) in sum.iter().zip(&full) {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
                let vsum: f64 = (0..ctx.partition().count()).map(|j| ctx.batch(j).unwrap().value(&q)).sum();
                let v = ctx.full().value(&q);
                assert!((vsum - v).abs() <= 1e-11 * v.abs());
            }
        }
    }

    #[test]
    fn single_batch_is_full() {
        let ctx = default_ctx(2, 500);
        let q = [0.3, -0.8];
        assert_eq!(ctx.batch(0).unwrap().value(&q), ctx.full().value(&q));
        assert_eq!(ctx.scaled_batch(0).unwrap().gradient(&q), ctx.full().gradient(&q));
        assert!(ctx.batch(1).is_err());
    }

    #[test]
    fn batch_center_matches_grid_minimum() {
        let ctx = default_ctx(1, 20);
        let cfg = ctx.config();
        let j = 4;
        let range = ctx.partition().range(j).unwrap();
        let bmean = ctx.data().x[0][range].iter().sum::<f64>() / 20.0;
        let n = cfg.n_data as f64;
        let center = (bmean * n * 1.0 + cfg.prior_mean * 4.0) / (4.0 + n * 1.0);
        // dense grid minimization of V_j, independent of the closed form
        let v = ctx.batch(j).unwrap();
        let (lo, hi, steps) = (-3.0, 5.0, 800_001);
        let h = (hi - lo) / (steps - 1) as f64;
        let argmin = (0..steps)
            .map(|i| lo + i as f64 * h)
            .min_by(|a, b| v.value(&[*a]).partial_cmp(&v.value(&[*b])).unwrap())
            .unwrap();
        assert!((argmin - center).abs() <= h, "{argmin} vs {center}");
        let qf = to_quadratic(ctx.scaled_batch(j).unwrap()).unwrap();
        assert!((qf.center[0] - center).abs() < 1e-10);
    }

    #[test]
    fn posterior_mean_is_grid_minimum_of_hamiltonian_at_rest() {
        let ctx = default_ctx(1, 20);
        let v = ctx.full();
        let (lo, hi, steps) = (-2.0, 3.0, 500_001);
        let h = (hi - lo) / (steps - 1) as f64;
        let argmin = (0..steps)
            .map(|i| lo + i as f64 * h)
            .min_by(|a, b| v.value(&[*a]).partial_cmp(&v.value(&[*b])).unwrap())
            .unwrap();
        assert!((argmin - ctx.posterior().mean[0]).abs() <= h);
    }

    #[test]
    fn quadratic_forms_share_stiffness() {
        let ctx = default_ctx(3, 20);
        let full = to_quadratic(ctx.full()).unwrap();
        for (l, c) in full.stiffness.iter().zip(&full.center) {
            assert!((l - 126.0).abs() < 1e-9);
            assert!(c.is_finite());
        }
        for (a, b) in full.center.iter().zip(&ctx.posterior().mean) {
            assert!((a - b).abs() < 1e-10);
        }
        for j in 0..ctx.partition().count() {
            let qf = to_quadratic(ctx.scaled_batch(j).unwrap()).unwrap();
            for l in &qf.stiffness {
                assert!((l - 126.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bias_gradient_properties() {
        let ctx = default_ctx(3, 20);
        let q = [0.4, -1.0, 2.0];
        assert!(bias_gradient(ctx.full(), ctx.full(), &q).unwrap().iter().all(|v| *v == 0.0));
        let jn = ctx.partition().count();
        let mut mean = [0.0; 3];
        let mut nonzero = false;
        for j in 0..jn {
            let b = bias_gradient(ctx.full(), ctx.scaled_batch(j).unwrap(), &q).unwrap();
            nonzero |= b.iter().any(|v| v.abs() > 1e-6);
            for (m, v) in mean.iter_mut().zip(b) {
                *m += v / jn as f64;
            }
        }
        assert!(nonzero);
        let gscale = ctx.full().gradient(&q).iter().fold(1.0f64, |a, v| a.max(v.abs()));
        assert!(mean.iter().all(|v| v.abs() < 1e-12 * gscale), "{mean:?}");
    }

    #[test]
    fn bias_norm_grows_with_dimension() {
        let mean_norm = |dim: usize| {
            let cfg = ModelConfig { dim, means: TrueMeans::StandardNormal, ..Default::default() };
            let ctx = ModelContext::generate(cfg, 20).unwrap();
            let pts = random_points(dim, 100, 3);
            pts.iter()
                .map(|q| {
                    let b = bias_gradient(ctx.full(), ctx.scaled_batch(0).unwrap(), q).unwrap();
                    b.iter().map(|v| v * v).sum::<f64>().sqrt()
                })
                .sum::<f64>()
                / 100.0
        };
        assert!(mean_norm(50) > mean_norm(1));
    }

    #[test]
    fn exact_flow_basics() {
        let qf = QuadraticForm::new(vec![1.0], vec![0.0]).unwrap();
        let s = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(exact_flow(&qf, &s, 0.0).unwrap(), s);
        let quarter = exact_flow(&qf, &s, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(quarter.q[0].abs() < 1e-15 && (quarter.p[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_flow_composes_and_conserves() {
        let ctx = default_ctx(3, 20);
        let qf = ctx.full_quadratic();
        let pot = QuadraticPotential::new(qf.clone());
        let h = crate::phase::Hamiltonian::new(ctx.full()).unwrap();
        let hq = crate::phase::Hamiltonian::new(&pot).unwrap();
        let mut r = Stream::new(8);
        for _ in 0..20 {
            let s = PhaseState::new(
                ctx.posterior().mean.iter().map(|m| m + 0.2 * r.standard_normal()).collect(),
                (0..3).map(|_| r.standard_normal()).collect(),
            )
            .unwrap();
            let a = exact_flow(&qf, &exact_flow(&qf, &s, 0.3).unwrap(), 0.4).unwrap();
            let b = exact_flow(&qf, &s, 0.7).unwrap();
            assert!(a.distance(&b) < 1e-12);
            let h0 = h.value(&s).unwrap();
            let hq0 = hq.value(&s).unwrap();
            for k in 0..=100 {
                let st = exact_flow(&qf, &s, k as f64).unwrap();
                // the quadratic fit drops a constant, so compare against both forms
                assert!((hq.value(&st).unwrap() - hq0).abs() <= 1e-12 * hq0.abs().max(1.0));
                assert!((h.value(&st).unwrap() - h0).abs() <= 1e-12 * h0.abs());
            }
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let cfg = ModelConfig { dim: 2, n_data: 10, ..Default::default() };
        let data = generate_data(&cfg, &Stream::new(1)).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = DataSet::read_csv(&buf[..]).unwrap();
        assert_eq!(back.x, data.x);
        assert!(DataSet::read_csv(&b"d,i,v\n0,0,1\n"[..]).is_err());
        assert!(DataSet::read_csv(&b"dim,index,value\n0,1,1\n"[..]).is_err());
        assert!(DataSet::read_csv(&b"dim,index,value\n0,0,x\n"[..]).is_err());
    }

    #[test]
    fn partition_rejects_non_divisor() {
        assert!(BatchPartition::new(500, 400).is_err());
        let p = BatchPartition::new(500, 20).unwrap();
        assert_eq!(p.count(), 25);
        assert_eq!(p.range(24).unwrap(), 480..500);
        assert!(matches!(p.range(25), Err(Error::BatchIndex { .. })));
    }
}
