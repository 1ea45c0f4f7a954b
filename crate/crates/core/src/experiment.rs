//! Seeded, replicated experiment runs and their on-disk artifacts.

use std::cell::RefCell;
use std::path::Path;
use std::sync::Arc;

use log::info;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{AnalyticGaussianSpec, ExactGaussianPotential};
use crate::domain::{CellSampler, DataSource, Domain, FredholmProblem, Points, SamplerFn};
use crate::error::{Error, Result};
use crate::grid::{discretize_problem, ib_weights, run_grid, GridModel, KdeBandwidth, Smoother, SmoothingMatrix};
use crate::io::pgm::{write_image, write_pgm};
use crate::io::table::{format_float, write_metrics_csv, write_table, write_text, MetricsRow};
use crate::io::{ExperimentConfig, ExperimentKind, InitSpec, Method};
use crate::metrics::{ise, ise_pixels, kl_numeric, match_distance, pointwise_mse, MetricsReport};
use crate::numeric::trapezoid_grid;
use crate::particle::{self, DensityEstimate, EmsConfig, HistoryPolicy, InitialDensity, PotentialMode};
use crate::problems::{
    analytic_gaussian_problem, benchmark_mixture, motion_deblur_problem, pet_problem, shepp_logan_phantom,
    synthetic_scene, GaussianMixture, ImageDensity,
};
use crate::timing::Stopwatch;

/// Number of evenly spaced probes for the pointwise MSE.
pub const MSE_PROBES: usize = 100;
/// Quadrature nodes on the data axis for the numerical KL divergence.
pub const KL_NODES: usize = 10_000;

/// RNG for replicate `r`: the base seed selects the key, `r` the stream.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Stream reserved for simulating the observed data of image problems.
pub const DATA_STREAM: u64 = u64::MAX;

/// A problem ready to be solved, plus what is needed to score it.
#[derive(Clone)]
pub struct Prepared {
    pub problem: FredholmProblem,
    pub kind: ExperimentKind,
    /// Truth as pixel masses (image problems).
    pub truth_image: Option<ImageDensity>,
    /// Observed data as an image (image problems).
    pub data_image: Option<ImageDensity>,
    /// Pixel-grid model for grid methods on image problems.
    pub grid: Option<GridModel>,
    /// Law of the true `f` for 1D problems.
    pub truth_mixture: Option<GaussianMixture>,
}

fn truth_sampler(prepared: &Prepared) -> Option<SamplerFn> {
    let domain = prepared.problem.x_domain.clone();
    if let Some(m) = prepared.truth_mixture.clone() {
        return Some(Arc::new(move |rng: &mut dyn RngCore, out: &mut [f64]| loop {
            let x = m.sample(rng);
            if domain.contains(&[x]) {
                out[0] = x;
                return;
            }
        }));
    }
    let img = prepared.truth_image.clone()?;
    let cells = CellSampler::new(img.edges(), img.pixels().to_vec()).ok()?;
    Some(Arc::new(move |rng: &mut dyn RngCore, out: &mut [f64]| cells.sample(rng, out)))
}

/// Build the problem selected by `config`. Image data are simulated once
/// from a dedicated stream of the base seed.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let kind = match config.experiment {
        ExperimentKind::Sweep => ExperimentKind::Analytic,
        k => k,
    };
    let mut data_rng = replicate_rng(config.seed, DATA_STREAM);
    match kind {
        ExperimentKind::Analytic | ExperimentKind::Sweep => Ok(Prepared {
            problem: analytic_gaussian_problem(config.mu, config.sigma_f, config.sigma_g)?,
            kind,
            truth_image: None,
            data_image: None,
            grid: None,
            truth_mixture: Some(GaussianMixture::new(vec![(1.0, config.mu, config.sigma_f)])?),
        }),
        ExperimentKind::Mixture => Ok(Prepared {
            problem: crate::problems::gaussian_mixture_problem()?,
            kind,
            truth_image: None,
            data_image: None,
            grid: None,
            truth_mixture: Some(benchmark_mixture().0),
        }),
        ExperimentKind::Deblur => {
            let sharp = match &config.image {
                Some(p) => crate::io::read_image(p)?,
                None => synthetic_scene(config.width, config.height)?,
            };
            let d = motion_deblur_problem(&sharp, config.blur_length, config.blur_sigma, config.noise_level, &mut data_rng)?;
            Ok(Prepared {
                grid: Some(d.grid_model()?),
                problem: d.problem,
                kind,
                truth_image: Some(d.sharp),
                data_image: Some(d.blurred),
                truth_mixture: None,
            })
        }
        ExperimentKind::Pet => {
            let phantom = shepp_logan_phantom(config.width, config.height, config.phantom)?;
            let d = pet_problem(
                &phantom,
                config.n_angles,
                config.n_offsets,
                config.offset_range,
                config.pet_sigma,
                config.total_counts,
                &mut data_rng,
            )?;
            let s = &d.sinogram;
            let sino = ImageDensity::new(
                s.n_angles,
                s.n_offsets,
                s.counts.clone(),
                d.problem.y_domain.clone(),
            )?
            .normalized()?;
            Ok(Prepared {
                problem: d.problem,
                kind,
                truth_image: Some(d.phantom),
                data_image: Some(sino),
                grid: None,
                truth_mixture: None,
            })
        }
    }
}

/// A fitted reconstruction.
#[derive(Clone, Debug)]
pub enum Fitted {
    Particle(DensityEstimate),
    Grid(GridModel),
}

impl Fitted {
    pub fn values_1d(&self, xs: &[f64]) -> Vec<f64> {
        match self {
            Fitted::Particle(e) => e.evaluate_1d(xs),
            Fitted::Grid(g) => xs.iter().map(|x| g.density_at(&[*x])).collect(),
        }
    }

    /// Masses on the cells of `edges` (grid models must share them).
    pub fn cell_masses(&self, edges: &[Vec<f64>]) -> Vec<f64> {
        match self {
            Fitted::Particle(e) => e.cell_masses(edges),
            Fitted::Grid(g) => g.f.clone(),
        }
    }

    /// Mean and variance of the first coordinate.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            Fitted::Particle(e) => (e.mean()[0], e.variance()[0]),
            Fitted::Grid(g) => {
                let (m, v) = g.moments();
                (m[0], v[0])
            }
        }
    }
}

/// ESS diagnostics of one iteration, as fractions of `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssPoint {
    pub iteration: usize,
    pub ess_fraction: f64,
    pub potential_ess_fraction: f64,
    pub resampled: bool,
    pub bandwidth: f64,
}

/// Output of one replicate.
#[derive(Clone, Debug)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub report: MetricsReport,
    pub fitted: Fitted,
    /// Per-iteration particle diagnostics; empty for grid methods.
    pub ess_trace: Vec<EssPoint>,
    /// `(iteration, estimate)` snapshots.
    pub snapshots: Vec<(usize, Fitted)>,
}

/// Sizes swept by [`run_sweep`] or fixed by a single run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSize {
    pub n_particles: usize,
    pub n_replicates: usize,
    pub epsilon: f64,
}

impl RunSize {
    pub fn of(config: &ExperimentConfig) -> Self {
        RunSize {
            n_particles: config.n_particles,
            n_replicates: config.n_replicates,
            epsilon: config.epsilon,
        }
    }
}

fn history_policy(config: &ExperimentConfig) -> HistoryPolicy {
    match (config.emit_per_iteration, config.snapshot_iterations.is_empty()) {
        (false, _) => HistoryPolicy::None,
        (true, true) => HistoryPolicy::All,
        (true, false) => HistoryPolicy::At(config.snapshot_iterations.clone()),
    }
}

fn analytic_spec(config: &ExperimentConfig, epsilon: f64) -> Result<AnalyticGaussianSpec> {
    AnalyticGaussianSpec::new(config.mu, config.sigma_f, config.sigma_g, epsilon)
}

/// Gaussian `N(mu, var)` restricted to the domain by rejection.
fn gaussian_init(mu: f64, var: f64, domain: Domain) -> SamplerFn {
    let m = GaussianMixture::new(vec![(1.0, mu, var.sqrt())]).expect("positive variance");
    Arc::new(move |rng: &mut dyn RngCore, out: &mut [f64]| loop {
        let x = m.sample(rng);
        if domain.contains(&[x]) {
            out[0] = x;
            return;
        }
    })
}

/// Particle configuration and potential mode for one run.
pub fn particle_setup(
    config: &ExperimentConfig,
    prepared: &Prepared,
    size: RunSize,
    seed: u64,
) -> Result<(EmsConfig, PotentialMode)> {
    let mut ems = EmsConfig::new(size.n_particles, size.epsilon);
    ems.n_replicates = size.n_replicates;
    ems.n_iterations = config.n_iterations;
    ems.resample_threshold = config.resample_threshold;
    ems.seed = seed;
    ems.replicate_scheme = config.replicate_scheme;
    ems.history = history_policy(config);
    ems.average_last = config.average_last;
    ems.block_size = config.block_size;
    let dim = prepared.problem.x_domain.dim();
    if config.method == Method::SmcExact {
        if prepared.kind != ExperimentKind::Analytic {
            return Err(Error::Config {
                key: "method".into(),
                reason: "smc-exact needs the analytic experiment".into(),
            });
        }
        let spec = analytic_spec(config, size.epsilon)?;
        // exact potentials assume a Gaussian iterate centered at mu
        let (init, var0) = match config.init {
            InitSpec::Uniform => (None, 1.0 / 12.0),
            InitSpec::Truth => (None, spec.sigma_f2),
            InitSpec::Dirac(x) if x == config.mu => (Some(InitialDensity::Point(vec![x])), 0.0),
            InitSpec::Dirac(_) => {
                return Err(Error::Config {
                    key: "init".into(),
                    reason: "smc-exact supports a Dirac start only at mu".into(),
                })
            }
        };
        ems.initial = init.unwrap_or_else(|| {
            InitialDensity::Custom(gaussian_init(config.mu, var0, prepared.problem.x_domain.clone()))
        });
        let potential = ExactGaussianPotential::new(spec, var0, config.n_iterations);
        return Ok((ems, PotentialMode::Exact(Arc::new(potential))));
    }
    ems.initial = match config.init {
        InitSpec::Uniform => InitialDensity::Uniform,
        InitSpec::Dirac(x) if dim == 1 => InitialDensity::Point(vec![x]),
        InitSpec::Dirac(_) => {
            return Err(Error::Config {
                key: "init".into(),
                reason: "Dirac starts are supported on 1D problems only".into(),
            })
        }
        InitSpec::Truth => InitialDensity::Custom(truth_sampler(prepared).ok_or_else(|| Error::Config {
            key: "init".into(),
            reason: "problem has no truth to start from".into(),
        })?),
    };
    Ok((ems, PotentialMode::Approximate))
}

fn grid_model(config: &ExperimentConfig, prepared: &Prepared) -> Result<GridModel> {
    if let Some(g) = &prepared.grid {
        return Ok(g.clone());
    }
    if prepared.problem.x_domain.dim() != 1 {
        return Err(Error::Config {
            key: "method".into(),
            reason: format!("grid methods are not available for the {} experiment", prepared.kind),
        });
    }
    discretize_problem(&prepared.problem, &[config.bins_x], &[config.bins_y])
}

fn smoother(config: &ExperimentConfig, model: &GridModel, epsilon: f64) -> Result<Option<Smoother>> {
    Ok(match config.method {
        Method::EmsGaussian => Some(Smoother::gaussian(&model.x_edges, epsilon)?),
        Method::Ems3Point => Some(Smoother {
            axes: model
                .x_edges
                .iter()
                .map(|e| SmoothingMatrix::three_point(e.len() - 1))
                .collect::<Result<_>>()?,
        }),
        _ => None,
    })
}

/// Final estimate, ESS trace and `(iteration, estimate)` snapshots.
pub type FitOutput = (Fitted, Vec<EssPoint>, Vec<(usize, Fitted)>);

/// Fit one replicate without scoring it.
pub fn fit(
    config: &ExperimentConfig,
    prepared: &Prepared,
    size: RunSize,
    replicate: usize,
) -> Result<FitOutput> {
    let mut rng = replicate_rng(config.seed, replicate as u64);
    if config.method.is_particle() {
        let (ems, mode) = particle_setup(config, prepared, size, config.seed)?;
        let out = if prepared.kind == ExperimentKind::Mixture {
            // resample from a finite sample of h, the same one IB smooths
            let observations = prepared.problem.data.sample_n(&mut rng, config.n_observations)?;
            let data = DataSource::empirical(prepared.problem.y_domain.clone(), observations)?;
            let problem = prepared.problem.clone().with_data(data)?;
            particle::run_with_rng(&problem, &ems, &mode, &mut rng)?
        } else {
            particle::run_with_rng(&prepared.problem, &ems, &mode, &mut rng)?
        };
        let n = size.n_particles as f64;
        let trace = out
            .diagnostics
            .iter()
            .map(|d| EssPoint {
                iteration: d.iteration,
                ess_fraction: d.ess / n,
                potential_ess_fraction: d.potential_ess / n,
                resampled: d.resampled,
                bandwidth: d.bandwidth,
            })
            .collect();
        let snaps = out.history.into_iter().map(|(i, e)| (i, Fitted::Particle(e))).collect();
        return Ok((Fitted::Particle(out.estimate), trace, snaps));
    }
    let mut model = grid_model(config, prepared)?;
    if config.method == Method::Ib {
        let samples = prepared.problem.data.sample_n(&mut rng, config.n_observations)?;
        model = ib_weights(&samples, &model, KdeBandwidth::Silverman)?;
    }
    let sm = smoother(config, &model, size.epsilon)?;
    let keep = config.emit_per_iteration;
    let (fitted, history) = run_grid(&model, sm.as_ref(), config.n_iterations, keep)?;
    let wanted = |i: usize| config.snapshot_iterations.is_empty() || config.snapshot_iterations.contains(&i);
    let snaps = history
        .into_iter()
        .enumerate()
        .filter(|(i, _)| wanted(i + 1))
        .map(|(i, f)| (i + 1, Fitted::Grid(fitted.clone().with_f(f))))
        .collect();
    Ok((Fitted::Grid(fitted), Vec::new(), snaps))
}

/// Nodes and weights of the trapezoid rule on a 1D domain.
fn nodes_1d(domain: &Domain, n: usize) -> (Vec<f64>, Vec<f64>) {
    trapezoid_grid(domain.lower()[0], domain.upper()[0], n)
}

/// `int h log(h / h_hat)` over the data interval for a 1D reconstruction.
pub fn kl_1d(problem: &FredholmProblem, fitted: &Fitted, x_nodes: usize) -> Result<f64> {
    let h = problem
        .data
        .density()
        .ok_or_else(|| Error::arg("data", "KL needs the data density"))?;
    let (xs, ws) = nodes_1d(&problem.x_domain, x_nodes);
    let fv = fitted.values_1d(&xs);
    let pts = Points::from_scalars(xs);
    let weighted: Vec<f64> = ws.iter().zip(&fv).map(|(w, f)| w * f).collect();
    let row = RefCell::new(vec![0.0; pts.len()]);
    let h_hat = |y: &[f64]| {
        let mut row = row.borrow_mut();
        problem.kernel.density_over(y, &pts, &mut row);
        row.iter().zip(&weighted).map(|(g, w)| g * w).sum()
    };
    kl_numeric(|y| h(y), h_hat, &problem.y_domain, KL_NODES)
}

/// ISE against the truth on `nodes` trapezoid nodes (1D problems).
pub fn ise_1d(problem: &FredholmProblem, fitted: &Fitted, nodes: usize) -> Result<f64> {
    let truth = problem.truth.as_ref().ok_or_else(|| Error::arg("truth", "problem has no truth"))?;
    match fitted {
        Fitted::Particle(e) => ise(|x| e.density(x), |x| truth(x), &problem.x_domain, nodes),
        Fitted::Grid(g) => ise(|x| g.density_at(x), |x| truth(x), &problem.x_domain, nodes),
    }
}

/// Evenly spaced probe points for the pointwise MSE (bin centers).
pub fn mse_probes(domain: &Domain) -> Vec<f64> {
    let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
    (0..MSE_PROBES)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / MSE_PROBES as f64)
        .collect()
}

/// Score one fitted replicate.
pub fn score(config: &ExperimentConfig, prepared: &Prepared, fitted: &Fitted) -> Result<MetricsReport> {
    let (mean_est, var_est) = fitted.moments();
    let mut report = MetricsReport {
        mean_est,
        var_est,
        ..MetricsReport::default()
    };
    match &prepared.truth_image {
        None => {
            report.ise_f = ise_1d(&prepared.problem, fitted, config.density_nodes)?;
            report.kl = Some(kl_1d(&prepared.problem, fitted, config.density_nodes)?);
        }
        Some(truth) => {
            let masses = fitted.cell_masses(&truth.edges());
            let area = truth.pixel_area();
            let est: Vec<f64> = masses.iter().map(|m| m / area).collect();
            report.ise_f = ise_pixels(&est, &truth.density_values(), area)?;
            report.match_distance = Some(match_distance(&masses, truth.pixels())?);
        }
    }
    Ok(report)
}

/// Fit and score replicate `r`.
pub fn run_replicate(config: &ExperimentConfig, prepared: &Prepared, size: RunSize, r: usize) -> Result<ReplicateOutcome> {
    let clock = Stopwatch::start();
    let (fitted, ess_trace, snapshots) = fit(config, prepared, size, r)?;
    let runtime = clock.elapsed();
    let mut report = score(config, prepared, &fitted)?;
    report.runtime = runtime;
    report.ess_trace = ess_trace.iter().map(|t| t.ess_fraction).collect();
    Ok(ReplicateOutcome {
        replicate: r,
        report,
        fitted,
        ess_trace,
        snapshots,
    })
}

/// Worker pool honoring `FREDHOLM_THREADS`.
#[cfg(feature = "parallel")]
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FREDHOLM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config {
                key: "FREDHOLM_THREADS".into(),
                reason: format!("expected a positive integer, got `{v}`"),
            })?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::arg("threads", e.to_string()))
}

/// All replicates of one run size, in replicate order.
pub fn run_replicates(config: &ExperimentConfig, prepared: &Prepared, size: RunSize) -> Result<Vec<ReplicateOutcome>> {
    let run = |r: usize| run_replicate(config, prepared, size, r);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        worker_pool()?.install(|| (0..config.replicates).into_par_iter().map(run).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..config.replicates).map(run).collect()
    }
}

/// Replicate summary for one run size.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub size: RunSize,
    pub replicates: usize,
    pub mean_ise: f64,
    pub sd_ise: f64,
    pub mse_p95: Option<f64>,
    pub mean_kl: Option<f64>,
    pub mean_match_distance: Option<f64>,
    pub mean_mean: f64,
    pub mean_variance: f64,
    pub mean_runtime_ms: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_sd(&v).0)
}

/// Pointwise MSE at the 95th percentile over [`mse_probes`] (1D only).
pub fn mse_p95_1d(prepared: &Prepared, outcomes: &[ReplicateOutcome]) -> Result<Option<f64>> {
    if outcomes.len() < 2 || prepared.truth_image.is_some() {
        return Ok(None);
    }
    let truth = prepared.problem.truth.as_ref().ok_or_else(|| Error::arg("truth", "problem has no truth"))?;
    let probes = mse_probes(&prepared.problem.x_domain);
    let t: Vec<f64> = probes.iter().map(|x| truth(&[*x])).collect();
    let reps: Vec<Vec<f64>> = outcomes.iter().map(|o| o.fitted.values_1d(&probes)).collect();
    pointwise_mse(&reps, &t, 95.0).map(Some)
}

pub fn aggregate(method: Method, size: RunSize, prepared: &Prepared, outcomes: &[ReplicateOutcome]) -> Result<Aggregate> {
    let ises: Vec<f64> = outcomes.iter().map(|o| o.report.ise_f).collect();
    let (mean_ise, sd_ise) = mean_sd(&ises);
    Ok(Aggregate {
        method,
        size,
        replicates: outcomes.len(),
        mean_ise,
        sd_ise,
        mse_p95: mse_p95_1d(prepared, outcomes)?,
        mean_kl: mean_opt(outcomes.iter().map(|o| o.report.kl)),
        mean_match_distance: mean_opt(outcomes.iter().map(|o| o.report.match_distance)),
        mean_mean: mean_sd(&outcomes.iter().map(|o| o.report.mean_est).collect::<Vec<_>>()).0,
        mean_variance: mean_sd(&outcomes.iter().map(|o| o.report.var_est).collect::<Vec<_>>()).0,
        mean_runtime_ms: mean_sd(&outcomes.iter().map(|o| o.report.runtime.as_secs_f64() * 1e3).collect::<Vec<_>>()).0,
    })
}

const AGGREGATE_HEADER: [&str; 13] = [
    "method",
    "N",
    "M",
    "epsilon",
    "replicates",
    "mean_ise_f",
    "sd_ise_f",
    "mse_p95",
    "mean_kl",
    "mean_match_distance",
    "mean_mean",
    "mean_variance",
    "mean_runtime_ms",
];

impl Aggregate {
    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        vec![
            self.method.to_string(),
            self.size.n_particles.to_string(),
            self.size.n_replicates.to_string(),
            format_float(self.size.epsilon),
            self.replicates.to_string(),
            format_float(self.mean_ise),
            format_float(self.sd_ise),
            opt(self.mse_p95),
            opt(self.mean_kl),
            opt(self.mean_match_distance),
            format_float(self.mean_mean),
            format_float(self.mean_variance),
            format!("{:.3}", self.mean_runtime_ms),
        ]
    }
}

/// Everything a run or sweep produced.
#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<Aggregate>,
}

fn rows_for(method: Method, size: RunSize, outcomes: &[ReplicateOutcome]) -> Vec<MetricsRow> {
    outcomes
        .iter()
        .map(|o| MetricsRow {
            replicate: o.replicate,
            method: method.to_string(),
            n_particles: size.n_particles,
            n_replicates: size.n_replicates,
            epsilon: size.epsilon,
            report: o.report.clone(),
        })
        .collect()
}

fn density_grid(domain: &Domain, n: usize) -> Vec<f64> {
    let (lo, hi) = (domain.lower()[0], domain.upper()[0]);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
}

fn write_densities(dir: &Path, config: &ExperimentConfig, prepared: &Prepared, tag: &str, outcomes: &[ReplicateOutcome]) -> Result<()> {
    match &prepared.truth_image {
        None => {
            let xs = density_grid(&prepared.problem.x_domain, config.density_nodes);
            let truth = prepared.problem.truth.clone();
            let t: Vec<f64> = xs.iter().map(|x| truth.as_ref().map_or(f64::NAN, |f| f(&[*x]))).collect();
            let mut header = vec!["x".to_string(), "truth".to_string()];
            header.extend(outcomes.iter().map(|o| format!("replicate_{}", o.replicate)));
            let cols: Vec<Vec<f64>> = outcomes.iter().map(|o| o.fitted.values_1d(&xs)).collect();
            let rows = (0..xs.len()).map(|i| {
                let mut r = vec![format_float(xs[i]), format_float(t[i])];
                r.extend(cols.iter().map(|c| format_float(c[i])));
                r
            });
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            write_table(&dir.join(format!("density{tag}.csv")), &h, rows)?;
            if config.emit_per_iteration {
                let mut lines = Vec::new();
                for o in outcomes {
                    for (it, f) in &o.snapshots {
                        let v = f.values_1d(&xs);
                        for (x, y) in xs.iter().zip(&v) {
                            lines.push(vec![
                                o.replicate.to_string(),
                                it.to_string(),
                                format_float(*x),
                                format_float(*y),
                            ]);
                        }
                    }
                }
                write_table(&dir.join(format!("snapshots{tag}.csv")), &["replicate", "iteration", "x", "density"], lines)?;
            }
        }
        Some(truth) => {
            let edges = truth.edges();
            let (w, h) = (truth.width(), truth.height());
            for o in outcomes {
                let m = o.fitted.cell_masses(&edges);
                write_pgm(&dir.join(format!("estimate{tag}_r{}.pgm", o.replicate)), w, h, &m)?;
                for (it, f) in &o.snapshots {
                    let m = f.cell_masses(&edges);
                    write_pgm(&dir.join(format!("estimate{tag}_r{}_it{it}.pgm", o.replicate)), w, h, &m)?;
                }
            }
        }
    }
    Ok(())
}

fn write_ess(path: &Path, outcomes: &[ReplicateOutcome]) -> Result<()> {
    let rows = outcomes.iter().flat_map(|o| {
        o.ess_trace.iter().map(move |e| {
            vec![
                o.replicate.to_string(),
                e.iteration.to_string(),
                format_float(e.ess_fraction),
                format_float(e.potential_ess_fraction),
                e.resampled.to_string(),
                format_float(e.bandwidth),
            ]
        })
    });
    let header = ["replicate", "iteration", "ess_fraction", "potential_ess_fraction", "resampled", "bandwidth"];
    write_table(path, &header, rows)
}

fn write_common(dir: &Path, config: &ExperimentConfig, prepared: &Prepared) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("manifest"), &config.to_manifest())?;
    if let Some(t) = &prepared.truth_image {
        write_image(t, &dir.join("truth.pgm"))?;
    }
    if let Some(d) = &prepared.data_image {
        write_image(d, &dir.join("data.pgm"))?;
    }
    Ok(())
}

/// Run `config.replicates` replicates and write the artifacts to
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    if config.experiment == ExperimentKind::Sweep {
        return run_sweep(config);
    }
    let prepared = prepare(config)?;
    let dir = config.output_dir.as_path();
    write_common(dir, config, &prepared)?;
    let size = RunSize::of(config);
    info!("{} / {}: {} replicates", config.experiment, config.method, config.replicates);
    let outcomes = run_replicates(config, &prepared, size)?;
    let rows = rows_for(config.method, size, &outcomes);
    let agg = aggregate(config.method, size, &prepared, &outcomes)?;
    write_metrics_csv(&rows, &dir.join("metrics.csv"))?;
    write_table(&dir.join("aggregate.csv"), &AGGREGATE_HEADER, [agg.fields()])?;
    write_ess(&dir.join("ess.csv"), &outcomes)?;
    write_densities(dir, config, &prepared, "", &outcomes)?;
    Ok(ExperimentSummary {
        rows,
        aggregates: vec![agg],
    })
}

/// Cartesian sweep over `sweep_N x sweep_M x sweep_epsilon`; an empty list
/// falls back to the single configured value. `M` follows `N` when no `M`
/// list is given.
pub fn sweep_sizes(config: &ExperimentConfig) -> Vec<RunSize> {
    let ns = if config.sweep_n.is_empty() { vec![config.n_particles] } else { config.sweep_n.clone() };
    let es = if config.sweep_epsilon.is_empty() { vec![config.epsilon] } else { config.sweep_epsilon.clone() };
    let mut out = Vec::new();
    for &n in &ns {
        let ms = if config.sweep_m.is_empty() {
            vec![if config.sweep_n.is_empty() { config.n_replicates } else { n }]
        } else {
            config.sweep_m.clone()
        };
        for &m in &ms {
            for &e in &es {
                out.push(RunSize {
                    n_particles: n,
                    n_replicates: m,
                    epsilon: e,
                });
            }
        }
    }
    out
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let prepared = prepare(config)?;
    let dir = config.output_dir.as_path();
    write_common(dir, config, &prepared)?;
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    let mut all = Vec::new();
    for (k, size) in sweep_sizes(config).into_iter().enumerate() {
        info!(
            "sweep point {k}: N = {}, M = {}, epsilon = {}",
            size.n_particles, size.n_replicates, size.epsilon
        );
        let outcomes = run_replicates(config, &prepared, size)?;
        rows.extend(rows_for(config.method, size, &outcomes));
        aggregates.push(aggregate(config.method, size, &prepared, &outcomes)?);
        write_densities(dir, config, &prepared, &format!("_s{k}"), &outcomes)?;
        all.extend(outcomes);
    }
    write_metrics_csv(&rows, &dir.join("metrics.csv"))?;
    write_table(&dir.join("aggregate.csv"), &AGGREGATE_HEADER, aggregates.iter().map(Aggregate::fields))?;
    write_ess(&dir.join("ess.csv"), &all)?;
    Ok(ExperimentSummary { rows, aggregates })
}
