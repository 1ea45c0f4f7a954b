//! Sequential Monte Carlo approximation of the smoothed EM recursion.
//!
//! Each iteration moves every particle through the smoothing kernel, draws a
//! fresh data point for it, weights it by the potential `g(y|x) / h_n(y)`,
//! builds the Gaussian-mixture estimate from the weighted cloud and then
//! resamples when the effective sample size drops below the threshold.

mod estimate;
mod potentials;
mod resample;

use std::sync::Arc;
use std::time::Duration;

use log::warn;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{FredholmProblem, Points, SamplerFn, SmoothingKernel};
use crate::error::{Error, Result};
use crate::timing::Stopwatch;

pub use estimate::{estimate_density, plugin_bandwidth, silverman_factor, DensityEstimate};
pub use potentials::{
    approximate_per_particle, approximate_shared, effective_sample_size, exact_potentials,
    mixture_density_at, normalize_weights, PotentialTable,
};
pub use resample::{multinomial_ancestors, offspring_counts};

/// Closed-form potential `G_n(x, y)` used in place of the particle
/// approximation when it is known.
pub trait ExactPotential: Send + Sync {
    /// `iteration` counts steps from 1.
    fn potential(&self, iteration: usize, x: &[f64], y: &[f64]) -> f64;
}

#[derive(Clone, Default)]
pub enum PotentialMode {
    #[default]
    Approximate,
    Exact(Arc<dyn ExactPotential>),
}

impl std::fmt::Debug for PotentialMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PotentialMode::Approximate => f.write_str("Approximate"),
            PotentialMode::Exact(_) => f.write_str("Exact"),
        }
    }
}

#[derive(Clone, Default)]
pub enum InitialDensity {
    #[default]
    Uniform,
    /// Every particle starts at this point.
    Point(Vec<f64>),
    Custom(SamplerFn),
}

impl std::fmt::Debug for InitialDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialDensity::Uniform => f.write_str("Uniform"),
            InitialDensity::Point(p) => write!(f, "Point({p:?})"),
            InitialDensity::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// How the `M` data replicates per iteration are assigned to particles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReplicateScheme {
    /// One set of `M` points used by every particle. The first
    /// `min(M, N)` points are the particles' own fresh draws.
    #[default]
    Shared,
    /// `M` points per particle, the first being the particle's own draw.
    /// Costs `O(N^2 M)` with approximate potentials.
    PerParticle,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum HistoryPolicy {
    #[default]
    None,
    All,
    /// Keep estimates at these iterations (1-based).
    At(Vec<usize>),
}

impl HistoryPolicy {
    fn keeps(&self, iteration: usize) -> bool {
        match self {
            HistoryPolicy::None => false,
            HistoryPolicy::All => true,
            HistoryPolicy::At(v) => v.contains(&iteration),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmsConfig {
    pub n_particles: usize,
    pub n_replicates: usize,
    pub n_iterations: usize,
    pub epsilon: f64,
    /// Resample when `ESS < resample_threshold * N`.
    pub resample_threshold: f64,
    pub seed: u64,
    pub initial: InitialDensity,
    pub replicate_scheme: ReplicateScheme,
    pub history: HistoryPolicy,
    /// Average the estimates of the last `k` iterations; `0` or `1` is off.
    pub average_last: usize,
    /// Work unit for the blocked reductions. Results depend on it, the
    /// worker count does not.
    pub block_size: usize,
}

impl EmsConfig {
    pub fn new(n_particles: usize, epsilon: f64) -> Self {
        EmsConfig {
            n_particles,
            n_replicates: n_particles,
            n_iterations: 100,
            epsilon,
            resample_threshold: 0.5,
            seed: 0,
            initial: InitialDensity::Uniform,
            replicate_scheme: ReplicateScheme::Shared,
            history: HistoryPolicy::None,
            average_last: 0,
            block_size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::arg("N", "need at least 2 particles"));
        }
        if self.n_replicates < 1 {
            return Err(Error::arg("M", "need at least 1 replicate"));
        }
        if self.n_iterations < 1 {
            return Err(Error::arg("n_iterations", "need at least 1 iteration"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::arg("resample_threshold", "must lie in (0, 1]"));
        }
        if self.block_size == 0 {
            return Err(Error::arg("block_size", "must be positive"));
        }
        Ok(())
    }
}

/// Weighted particle pairs `(X, Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    pub xs: Points,
    pub ys: Points,
    pub weights: Vec<f64>,
    pub iteration: usize,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn resampled(&self, ancestors: &[usize]) -> ParticleCloud {
        let n = ancestors.len();
        ParticleCloud {
            xs: self.xs.gather(ancestors),
            ys: self.ys.gather(ancestors),
            weights: vec![1.0 / n as f64; n],
            iteration: self.iteration,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// ESS of the normalized weights the estimate is built from; drives
    /// resampling.
    pub ess: f64,
    /// ESS of this iteration's potentials alone. Equal to `ess` when the
    /// previous iteration resampled.
    pub potential_ess: f64,
    pub resampled: bool,
    /// `s_N`.
    pub bandwidth: f64,
    pub wall_time: Duration,
}

/// Draw the initial cloud: `X ~ f_1`, `Y ~ h`, uniform weights.
pub fn init_cloud(problem: &FredholmProblem, config: &EmsConfig, rng: &mut dyn RngCore) -> Result<ParticleCloud> {
    config.validate()?;
    let n = config.n_particles;
    let dx = problem.x_domain.dim();
    let mut xs = Points::new(dx, vec![0.0; n * dx]);
    for i in 0..n {
        let out = xs.get_mut(i);
        match &config.initial {
            InitialDensity::Uniform => problem.x_domain.sample_uniform(rng, out),
            InitialDensity::Point(p) => {
                if !problem.x_domain.contains(p) {
                    return Err(Error::arg("initial", "starting point lies outside the domain"));
                }
                out.copy_from_slice(p);
            }
            InitialDensity::Custom(f) => {
                f(rng, out);
                if !problem.x_domain.contains(out) {
                    return Err(Error::arg("initial", "custom sampler left the domain"));
                }
            }
        }
    }
    let ys = problem.data.sample_n(rng, n)?;
    Ok(ParticleCloud {
        xs,
        ys,
        weights: vec![1.0 / n as f64; n],
        iteration: 0,
    })
}

/// Move each `X` through the smoothing kernel and draw a fresh `Y ~ h`.
pub fn mutate(
    cloud: &ParticleCloud,
    kernel: &SmoothingKernel,
    problem: &FredholmProblem,
    rng: &mut dyn RngCore,
) -> Result<ParticleCloud> {
    let mut next = cloud.clone();
    for i in 0..cloud.len() {
        kernel.sample(cloud.xs.get(i), rng, next.xs.get_mut(i))?;
        problem.data.sample_into(rng, next.ys.get_mut(i))?;
    }
    next.iteration += 1;
    Ok(next)
}

fn draw_replicates(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    config: &EmsConfig,
    rng: &mut dyn RngCore,
) -> Result<Points> {
    let n = cloud.len();
    let m = config.n_replicates;
    let dy = problem.y_domain.dim();
    match config.replicate_scheme {
        ReplicateScheme::Shared => {
            let own = m.min(n);
            let mut pts = Points::with_capacity(dy, m);
            for i in 0..own {
                pts.push(cloud.ys.get(i));
            }
            let mut y = vec![0.0; dy];
            for _ in own..m {
                problem.data.sample_into(rng, &mut y)?;
                pts.push(&y);
            }
            Ok(pts)
        }
        ReplicateScheme::PerParticle => {
            let mut pts = Points::with_capacity(dy, n * m);
            let mut y = vec![0.0; dy];
            for i in 0..n {
                pts.push(cloud.ys.get(i));
                for _ in 1..m {
                    problem.data.sample_into(rng, &mut y)?;
                    pts.push(&y);
                }
            }
            Ok(pts)
        }
    }
}

/// Potentials for a freshly mutated cloud.
pub fn compute_potentials(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    config: &EmsConfig,
    mode: &PotentialMode,
    rng: &mut dyn RngCore,
) -> Result<PotentialTable> {
    let replicates = draw_replicates(cloud, problem, config, rng)?;
    let m = config.n_replicates;
    let per_particle = config.replicate_scheme == ReplicateScheme::PerParticle;
    match mode {
        PotentialMode::Approximate if per_particle => approximate_per_particle(
            problem.kernel.as_ref(),
            &cloud.xs,
            &cloud.weights,
            &replicates,
            m,
            config.block_size,
        ),
        PotentialMode::Approximate => approximate_shared(
            problem.kernel.as_ref(),
            &cloud.xs,
            &cloud.weights,
            &replicates,
            config.block_size,
        ),
        PotentialMode::Exact(p) => Ok(exact_potentials(
            p.as_ref(),
            cloud.iteration,
            &cloud.xs,
            &replicates,
            m,
            per_particle,
            config.block_size,
        )),
    }
}

/// Result of one iteration.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// Cloud to feed into the next iteration (resampled or carrying weights).
    pub cloud: ParticleCloud,
    pub estimate: DensityEstimate,
    pub diagnostics: IterationDiagnostics,
    pub potentials: PotentialTable,
}

pub fn step(
    cloud: &ParticleCloud,
    problem: &FredholmProblem,
    config: &EmsConfig,
    mode: &PotentialMode,
    rng: &mut dyn RngCore,
) -> Result<StepOutput> {
    let clock = Stopwatch::start();
    let kernel = SmoothingKernel::new(config.epsilon, problem.x_domain.clone())?;
    let moved = mutate(cloud, &kernel, problem, rng)?;
    let table = compute_potentials(&moved, problem, config, mode, rng)?;

    let combined: Vec<f64> = moved
        .weights
        .iter()
        .zip(&table.values)
        .map(|(w, g)| w * g)
        .collect();
    let weights = normalize_weights(&combined)?;
    let n = moved.len();
    let ess = effective_sample_size(&weights);
    if ess < 0.01 * n as f64 {
        warn!("iteration {}: ESS {ess:.1} is below 1% of N = {n}", moved.iteration);
    }

    let (s, sigma) = plugin_bandwidth(&moved.xs, &weights, ess, &problem.x_domain);
    let estimate = estimate_density(&moved.xs, &weights, config.epsilon, (s, &sigma), &problem.x_domain);

    let resampled = ess < config.resample_threshold * n as f64;
    let next = if resampled {
        let ancestors = multinomial_ancestors(&weights, n, rng)?;
        moved.resampled(&ancestors)
    } else {
        ParticleCloud { weights, ..moved }
    };
    let diagnostics = IterationDiagnostics {
        iteration: next.iteration,
        ess,
        potential_ess: effective_sample_size(&table.values),
        resampled,
        bandwidth: s,
        wall_time: clock.elapsed(),
    };
    Ok(StepOutput {
        cloud: next,
        estimate,
        diagnostics,
        potentials: table,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub estimate: DensityEstimate,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// `(iteration, estimate)` pairs kept by the history policy.
    pub history: Vec<(usize, DensityEstimate)>,
    pub cloud: ParticleCloud,
}

/// Run `config.n_iterations` steps with an RNG seeded from `config.seed`.
pub fn run(problem: &FredholmProblem, config: &EmsConfig, mode: &PotentialMode) -> Result<RunOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_with_rng(problem, config, mode, &mut rng)
}

pub fn run_with_rng(
    problem: &FredholmProblem,
    config: &EmsConfig,
    mode: &PotentialMode,
    rng: &mut dyn RngCore,
) -> Result<RunOutput> {
    let mut cloud = init_cloud(problem, config, rng)?;
    let mut diagnostics = Vec::with_capacity(config.n_iterations);
    let mut history = Vec::new();
    let mut tail = Vec::new();
    let keep_tail = config.average_last.max(1);
    let mut last = None;
    for _ in 0..config.n_iterations {
        let out = step(&cloud, problem, config, mode, rng)?;
        let it = out.diagnostics.iteration;
        if config.history.keeps(it) {
            history.push((it, out.estimate.clone()));
        }
        if config.n_iterations - it < keep_tail && keep_tail > 1 {
            tail.push(out.estimate.clone());
        }
        diagnostics.push(out.diagnostics);
        cloud = out.cloud;
        last = Some(out.estimate);
    }
    let estimate = if tail.len() > 1 {
        DensityEstimate::average(&tail)
    } else {
        last.expect("at least one iteration")
    };
    Ok(RunOutput {
        estimate,
        diagnostics,
        history,
        cloud,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DataSource, Domain};
    use crate::kernels::{FnKernel, GaussianKernel};
    use crate::numeric::normal_cdf;
    use rand_distr::{Distribution, Normal};

    fn gaussian_problem() -> FredholmProblem {
        let d = Domain::unit(1);
        let sh = (0.043f64.powi(2) + 0.045f64.powi(2)).sqrt();
        let normal = Normal::new(0.5, sh).unwrap();
        let sampler: SamplerFn = Arc::new(move |rng: &mut dyn RngCore, out: &mut [f64]| {
            out[0] = normal.sample(rng);
        });
        let data = DataSource::exact(d.clone(), sampler, None);
        FredholmProblem::new(d.clone(), d, Arc::new(GaussianKernel::new(0.045).unwrap()), data, None).unwrap()
    }

    #[test]
    fn init_uniform_three_particles() {
        let p = gaussian_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = init_cloud(&p, &EmsConfig::new(3, 0.01), &mut rng).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.xs.iter().all(|x| (0.0..=1.0).contains(&x[0])));
        assert_eq!(c.weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn init_point_mass() {
        let p = gaussian_problem();
        let mut cfg = EmsConfig::new(10, 0.01);
        cfg.initial = InitialDensity::Point(vec![0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = init_cloud(&p, &cfg, &mut rng).unwrap();
        assert!(c.xs.iter().all(|x| x[0] == 0.5));
    }

    #[test]
    fn init_uniform_mean() {
        let p = gaussian_problem();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = init_cloud(&p, &EmsConfig::new(n, 0.01), &mut rng).unwrap();
        let mean = c.xs.as_flat().iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 4.0 / (12.0 * n as f64).sqrt());
    }

    #[test]
    fn mutate_dirac_kernel_keeps_positions() {
        let p = gaussian_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = init_cloud(&p, &EmsConfig::new(50, 0.01), &mut rng).unwrap();
        let k = SmoothingKernel::new(1e-300, p.x_domain.clone()).unwrap();
        let m = mutate(&c, &k, &p, &mut rng).unwrap();
        assert_eq!(m.xs, c.xs);
        assert_eq!(m.iteration, 1);
        assert!(m.ys.iter().all(|y| p.y_domain.contains(y)));
    }

    #[test]
    fn mutate_spread_matches_truncated_normal() {
        let p = gaussian_problem();
        let mut cfg = EmsConfig::new(10_000, 0.1);
        cfg.initial = InitialDensity::Point(vec![0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = init_cloud(&p, &cfg, &mut rng).unwrap();
        let k = SmoothingKernel::new(0.1, p.x_domain.clone()).unwrap();
        let m = mutate(&c, &k, &p, &mut rng).unwrap();
        let xs = m.xs.as_flat();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        // symmetric truncation to [-5 sd, 5 sd]: variance factor 1 - 2 a phi(a) / (2 Phi(a) - 1)
        let a: f64 = 5.0;
        let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mass = 2.0 * normal_cdf(a, 0.0, 1.0) - 1.0;
        let want = 0.1 * (1.0 - 2.0 * a * phi / mass).sqrt();
        assert!((sd - want).abs() < 0.05 * want, "sd {sd} vs {want}");
    }

    #[test]
    fn constant_kernel_keeps_uniform_weights() {
        let d = Domain::unit(1);
        let data = DataSource::empirical(d.clone(), Points::from_scalars(vec![0.2, 0.4, 0.9])).unwrap();
        let p = FredholmProblem::new(d.clone(), d, Arc::new(FnKernel::new(1, 1, |_, _| 1.0)), data, None).unwrap();
        let cfg = EmsConfig::new(20, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = init_cloud(&p, &cfg, &mut rng).unwrap();
        let out = step(&c, &p, &cfg, &PotentialMode::Approximate, &mut rng).unwrap();
        assert!(out.cloud.weights.iter().all(|w| (w - 0.05).abs() < 1e-15));
        assert!((out.diagnostics.ess - 20.0).abs() < 1e-9);
        assert!(!out.diagnostics.resampled);
    }

    #[test]
    fn step_contract_and_determinism() {
        let p = gaussian_problem();
        let mut cfg = EmsConfig::new(200, 0.01);
        cfg.n_iterations = 5;
        cfg.seed = 77;
        let a = run(&p, &cfg, &PotentialMode::Approximate).unwrap();
        let b = run(&p, &cfg, &PotentialMode::Approximate).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.estimate, b.estimate);
        for d in &a.diagnostics {
            assert!(d.ess >= 1.0 && d.ess <= 200.0);
        }
        let s: f64 = a.cloud.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(a.diagnostics.len(), 5);
    }

    #[test]
    fn one_iteration_equals_one_step() {
        let p = gaussian_problem();
        let mut cfg = EmsConfig::new(100, 0.01);
        cfg.n_iterations = 1;
        cfg.seed = 5;
        let r = run(&p, &cfg, &PotentialMode::Approximate).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = init_cloud(&p, &cfg, &mut rng).unwrap();
        let s = step(&c, &p, &cfg, &PotentialMode::Approximate, &mut rng).unwrap();
        assert_eq!(r.estimate, s.estimate);
        assert_eq!(r.cloud, s.cloud);
    }

    #[test]
    fn history_and_averaging() {
        let p = gaussian_problem();
        let mut cfg = EmsConfig::new(50, 0.01);
        cfg.n_iterations = 6;
        cfg.history = HistoryPolicy::At(vec![1, 4]);
        cfg.average_last = 3;
        let r = run(&p, &cfg, &PotentialMode::Approximate).unwrap();
        assert_eq!(r.history.iter().map(|h| h.0).collect::<Vec<_>>(), vec![1, 4]);
        assert_eq!(r.estimate.len(), 150);
        assert!((r.estimate.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(EmsConfig::new(1, 0.1).validate().is_err());
        assert!(EmsConfig::new(10, 0.0).validate().is_err());
        let mut c = EmsConfig::new(10, 0.1);
        c.resample_threshold = 1.5;
        assert!(c.validate().is_err());
        c.resample_threshold = 1.0;
        assert!(c.validate().is_ok());
    }
}
