//! Scores for reconstructions: integrated and pointwise squared error,
//! numerical KL divergence, match distance and convergence-rate fits.

use std::time::Duration;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::numeric::{nearest_rank, trapezoid_grid};

/// Tensor trapezoid rule with `nodes` per axis applied to `f`.
fn tensor_trapezoid(domain: &Domain, nodes: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..domain.dim())
        .map(|k| trapezoid_grid(domain.lower()[k], domain.upper()[k], nodes))
        .collect();
    let d = axes.len();
    let total = nodes.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for k in 0..d {
            let i = rem % nodes;
            rem /= nodes;
            x[k] = axes[k].0[i];
            w *= axes[k].1[i];
        }
        acc += w * f(&x);
    }
    acc
}

/// Integrated squared error by trapezoid quadrature on `nodes` per axis.
pub fn ise(
    estimate: impl Fn(&[f64]) -> f64,
    truth: impl Fn(&[f64]) -> f64,
    domain: &Domain,
    nodes: usize,
) -> Result<f64> {
    if nodes < 2 {
        return Err(Error::arg("nodes", "need at least 2 quadrature nodes"));
    }
    let v = tensor_trapezoid(domain, nodes, |x| {
        let e = estimate(x) - truth(x);
        e * e
    });
    Ok(v.max(0.0))
}

/// ISE for values on a pixel grid: Riemann sum of squared differences.
pub fn ise_pixels(a: &[f64], b: &[f64], pixel_area: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} pixels", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * pixel_area)
}

/// `replicates[r][c]` is replicate `r` evaluated at probe `c`. Returns the
/// nearest-rank `percentile` across probes of the replicate-averaged squared
/// error.
pub fn pointwise_mse(replicates: &[Vec<f64>], truth: &[f64], percentile: f64) -> Result<f64> {
    if replicates.len() < 2 {
        return Err(Error::arg("replicates", "need at least 2 replicates"));
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::arg("percentile", "must lie in (0, 100)"));
    }
    if replicates.iter().any(|r| r.len() != truth.len()) || truth.is_empty() {
        return Err(Error::DimensionMismatch("replicate and probe counts differ".into()));
    }
    let r = replicates.len() as f64;
    let mse: Vec<f64> = truth
        .iter()
        .enumerate()
        .map(|(c, t)| replicates.iter().map(|rep| (rep[c] - t).powi(2)).sum::<f64>() / r)
        .collect();
    Ok(nearest_rank(&mse, percentile))
}

const KL_FLOOR: f64 = 1e-300;

/// `int h log(h / h_hat)` by trapezoid quadrature over `interval`.
pub fn kl_numeric(
    h: impl Fn(&[f64]) -> f64,
    h_hat: impl Fn(&[f64]) -> f64,
    interval: &Domain,
    nodes: usize,
) -> Result<f64> {
    if nodes < 2 {
        return Err(Error::arg("nodes", "need at least 2 quadrature nodes"));
    }
    let mut violation = None;
    let mut index = 0;
    let v = tensor_trapezoid(interval, nodes, |y| {
        let a = h(y);
        let b = h_hat(y);
        index += 1;
        if a > 1e-12 && !(b > 0.0) && violation.is_none() {
            violation = Some(index - 1);
        }
        if a <= 0.0 {
            return 0.0;
        }
        a * (a.max(KL_FLOOR) / b.max(KL_FLOOR)).ln()
    });
    match violation {
        Some(bin) => Err(Error::SupportMismatch { bin }),
        None => Ok(v),
    }
}

/// L1 distance between row-major cumulative sums, divided by the pixel
/// count. Both inputs are normalized to unit mass first.
pub fn match_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} pixels", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyData);
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::Normalization("image has no mass".into()));
    }
    let (mut ca, mut cb, mut acc) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ca += x / sa;
        cb += y / sb;
        acc += (ca - cb).abs();
    }
    Ok(acc / a.len() as f64)
}

/// Least-squares slope of `log(rmse)` against `log(N)`.
pub fn rate_fit(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.iter().any(|(n, e)| !(*n > 0.0 && *e > 0.0)) {
        return Err(Error::arg("errors", "N and rmse must be positive"));
    }
    let mut ns: Vec<f64> = errors.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::arg("errors", "need at least 3 distinct N values"));
    }
    let k = errors.len() as f64;
    let xs: Vec<f64> = errors.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Scores for one replicate of one method.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub ise_f: f64,
    pub ise_h: Option<f64>,
    pub mse_p95: Option<f64>,
    pub kl: Option<f64>,
    pub match_distance: Option<f64>,
    pub mean_est: f64,
    pub var_est: f64,
    pub ess_trace: Vec<f64>,
    pub runtime: Duration,
}
