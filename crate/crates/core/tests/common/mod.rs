//! Property checks shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fredholm::domain::{Domain, ForwardKernel, Points};
use fredholm::grid::{discrete_kl, em_step, uniform_edges, GridModel, SmoothingMatrix, Transfer};
use fredholm::grid::{axis_transfer, Matrix};
use fredholm::kernels::GaussianKernel;
use fredholm::numeric::normal_interval_mass;
use fredholm::particle::{
    approximate_shared, effective_sample_size, multinomial_ancestors, normalize_weights, offspring_counts, run,
    DensityEstimate, EmsConfig, PotentialMode,
};
use fredholm::problems::analytic_gaussian_problem;

pub type Check = std::result::Result<(), TestCaseError>;

pub fn positive_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1e3f64, 1..200)
}

pub fn weights_normalize(values: &[f64]) -> Check {
    let w = normalize_weights(values).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let total: f64 = values.iter().sum();
    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (wi, vi) in w.iter().zip(values) {
        prop_assert!(*wi >= 0.0);
        prop_assert!((wi - vi / total).abs() <= 1e-12 * (1.0 + vi / total));
    }
    Ok(())
}

pub fn ess_bounds_and_scale(values: &[f64], scale: f64) -> Check {
    let n = values.len() as f64;
    let ess = effective_sample_size(values);
    prop_assert!(ess >= 1.0 - 1e-9 && ess <= n + 1e-9, "ess {ess} outside [1, {n}]");
    let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
    let ess2 = effective_sample_size(&scaled);
    prop_assert!((ess - ess2).abs() <= 1e-9 * ess, "{ess} vs {ess2}");
    Ok(())
}

/// With `lo <= g <= hi` on the domains, every single-replicate potential
/// `g(y | x) / sum_k w_k g(y | x_k)` lies in `[lo / hi, hi / lo]`.
pub fn potentials_bounded(sigma: f64, xs: Vec<f64>, weights: Vec<f64>, ys: Vec<f64>) -> Check {
    let dom = Domain::unit(1);
    let kernel = GaussianKernel::new(sigma).unwrap().on_domains(&dom, &dom);
    let b = kernel.bounds();
    let hi = b.upper.expect("bounded on a compact domain");
    let lo = b.lower;
    prop_assert!(lo > 0.0);
    let w = normalize_weights(&weights).unwrap();
    let m = ys.len() as f64;
    let table = approximate_shared(&kernel, &Points::from_scalars(xs), &w, &Points::from_scalars(ys), 16)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    for v in &table.values {
        let per = v / m;
        prop_assert!(per >= lo / hi * (1.0 - 1e-12) && per <= hi / lo * (1.0 + 1e-12), "{per} outside [{}, {}]", lo / hi, hi / lo);
    }
    Ok(())
}

/// Multinomial offspring counts: Pearson chi-square against `N w` over
/// `draws` repetitions, compared with a generous quantile.
pub fn resampling_unbiased(weights: &[f64], seed: u64) -> Check {
    let w = normalize_weights(weights).unwrap();
    let k = w.len();
    let n = 200;
    let draws = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = vec![0.0; k];
    for _ in 0..draws {
        let a = multinomial_ancestors(&w, n, &mut rng).unwrap();
        let counts = offspring_counts(&a, k);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += *c as f64;
        }
    }
    let total = (n * draws) as f64;
    let chi2: f64 = totals
        .iter()
        .zip(&w)
        .filter(|(_, wi)| **wi * total > 0.0)
        .map(|(o, wi)| (o - wi * total).powi(2) / (wi * total))
        .sum();
    let dof = (k - 1).max(1) as f64;
    // mean dof, sd sqrt(2 dof); six sd keeps false alarms negligible
    prop_assert!(chi2 < dof + 6.0 * (2.0 * dof).sqrt() + 10.0, "chi2 {chi2} with {dof} dof");
    Ok(())
}

/// Random row-stochastic transfer on `b` solution and `d` data bins.
pub fn random_model(b: usize, d: usize, f: Vec<f64>, h: Vec<f64>, sigma: f64) -> GridModel {
    let x_edges = uniform_edges(&Domain::unit(1), &[b]).unwrap();
    let y_edges = uniform_edges(&Domain::unit(1), &[d]).unwrap();
    let m: Matrix = axis_transfer(&x_edges[0], &y_edges[0], |c, lo, hi| normal_interval_mass(lo, hi, c, sigma)).unwrap();
    let fsum: f64 = f.iter().sum();
    GridModel::new(x_edges, y_edges, h, Transfer::Dense(m))
        .unwrap()
        .with_f(f.iter().map(|v| v / fsum).collect())
}

pub fn model_inputs() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, f64)> {
    (2usize..30, 2usize..30, 0.03..0.5f64).prop_flat_map(|(b, d, s)| {
        (
            Just(b),
            Just(d),
            prop::collection::vec(0.01..1.0f64, b),
            prop::collection::vec(0.01..1.0f64, d),
            Just(s),
        )
    })
}

pub fn em_conserves_mass_and_descends(model: &GridModel, steps: usize) -> Check {
    let mut m = model.clone();
    let mut kl = discrete_kl(&m);
    for _ in 0..steps {
        m = em_step(&m).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((m.f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(m.f.iter().all(|v| *v >= 0.0));
        let next = discrete_kl(&m);
        prop_assert!(next <= kl + 1e-12, "KL rose from {kl} to {next}");
        kl = next;
    }
    Ok(())
}

pub fn smoothing_rows_stochastic(bins: usize, epsilon: f64) -> Check {
    let edges = uniform_edges(&Domain::unit(1), &[bins]).unwrap();
    for m in [
        SmoothingMatrix::gaussian(&edges[0], epsilon).unwrap(),
        SmoothingMatrix::three_point(bins).unwrap(),
        SmoothingMatrix::uniform(bins),
    ] {
        for r in 0..bins {
            let row = &m.entries.data[r * bins..(r + 1) * bins];
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "row {r} of {:?}", m.kind);
        }
    }
    Ok(())
}

fn bits(e: &DensityEstimate) -> Vec<u64> {
    e.centers()
        .iter()
        .flatten()
        .chain(e.weights())
        .chain(e.component_variance())
        .map(|v| v.to_bits())
        .collect()
}

pub fn seed_determinism(seed: u64, n: usize) -> Check {
    let problem = analytic_gaussian_problem(0.5, 0.043, 0.045).unwrap();
    let mut cfg = EmsConfig::new(n, 0.01);
    cfg.n_iterations = 4;
    cfg.seed = seed;
    let a = run(&problem, &cfg, &PotentialMode::Approximate).unwrap();
    let b = run(&problem, &cfg, &PotentialMode::Approximate).unwrap();
    prop_assert_eq!(bits(&a.estimate), bits(&b.estimate));
    cfg.seed = seed.wrapping_add(1);
    let c = run(&problem, &cfg, &PotentialMode::Approximate).unwrap();
    prop_assert_ne!(bits(&a.estimate), bits(&c.estimate));
    Ok(())
}

/// On `[0, 1]` the mixture integrates to `1 - leakage`.
pub fn mixture_integrates_to_one(centers: Vec<f64>, weights: Vec<f64>, bandwidth: f64) -> Check {
    let w = normalize_weights(&weights).unwrap();
    let e = DensityEstimate::new(Points::from_scalars(centers), w, &[bandwidth * bandwidth], Domain::unit(1));
    let nodes = 20_001;
    let xs: Vec<f64> = (0..nodes).map(|i| i as f64 / (nodes - 1) as f64).collect();
    let v = e.evaluate_1d(&xs);
    let h = 1.0 / (nodes - 1) as f64;
    let inside: f64 = h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[nodes - 1]));
    let total = inside + e.leakage();
    prop_assert!((total - 1.0).abs() < 1e-4, "inside {inside}, leakage {}", e.leakage());
    Ok(())
}

pub fn centers_weights(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0.0..1.0f64, n),
        prop::collection::vec(0.01..1.0f64, n),
    )
}

/// Run every property with `cases` cases each; returns the failures.
pub fn run_all(cases: u32) -> Vec<(String, String)> {
    let mut failures = Vec::new();
    let runner = || TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    macro_rules! check {
        ($name:expr, $strategy:expr, $body:expr) => {
            if let Err(e) = runner().run(&$strategy, $body) {
                failures.push(($name.to_string(), e.to_string()));
            }
        };
    }
    check!("weight normalization", positive_weights(), |v| weights_normalize(&v));
    check!("ESS bounds and scale invariance", (positive_weights(), 1e-6..1e6f64), |(v, s)| ess_bounds_and_scale(&v, s));
    check!(
        "potential bounds",
        (
            0.2..1.0f64,
            prop::collection::vec(0.0..1.0f64, 1..40),
            prop::collection::vec(0.0..1.0f64, 1..40)
        )
            .prop_flat_map(|(s, xs, ys)| {
                let n = xs.len();
                (Just(s), Just(xs), prop::collection::vec(0.01..1.0f64, n), Just(ys))
            }),
        |(s, xs, w, ys)| potentials_bounded(s, xs, w, ys)
    );
    check!(
        "resampling chi-square",
        (prop::collection::vec(0.05..1.0f64, 2..12), any::<u64>()),
        |(w, seed)| resampling_unbiased(&w, seed)
    );
    check!("EM mass conservation and KL descent", model_inputs(), |(b, d, f, h, s)| {
        em_conserves_mass_and_descends(&random_model(b, d, f, h, s), 10)
    });
    check!("smoothing rows stochastic", (3usize..80, 0.0..0.5f64), |(b, e)| smoothing_rows_stochastic(b, e));
    check!("seed determinism", (any::<u64>(), 20usize..120), |(s, n)| seed_determinism(s, n));
    check!(
        "mixture integrates to one",
        (1usize..50, 0.005..0.3f64).prop_flat_map(|(n, bw)| (centers_weights(n), Just(bw))),
        |((c, w), bw)| mixture_integrates_to_one(c, w, bw)
    );
    failures
}
