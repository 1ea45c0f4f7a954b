//! Gaussian-mixture density estimate built from a weighted particle cloud.

use log::warn;

use crate::domain::{Domain, Points};
use crate::numeric::{exp_neg, normal_interval_mass, sum_fixed, weighted_moments, INV_SQRT_2PI};

/// Silverman's Gaussian-reference factor `(4 / (d + 2))^{1/(d+4)} ess^{-1/(d+4)}`.
pub fn silverman_factor(dim: usize, ess: f64) -> f64 {
    let d = dim as f64;
    (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * ess.powf(-1.0 / (d + 4.0))
}

/// Plug-in bandwidth: returns `(s_N, diag(Sigma))` for weighted positions.
/// An axis with zero spread gets `Sigma_kk` chosen so that the bandwidth
/// `s_N sqrt(Sigma_kk)` is `1e-6` of the axis width.
pub fn plugin_bandwidth(xs: &Points, weights: &[f64], ess: f64, domain: &Domain) -> (f64, Vec<f64>) {
    let s = silverman_factor(xs.dim(), ess.max(1.0));
    let sigma = (0..xs.dim())
        .map(|k| {
            let (_, var) = weighted_moments(xs.iter().map(|p| p[k]), weights);
            if var > 0.0 {
                var
            } else {
                warn!("zero weighted variance on axis {k}; using fallback bandwidth");
                let bw = 1e-6 * domain.width(k);
                (bw / s).powi(2)
            }
        })
        .collect();
    (s, sigma)
}

/// `sum_i w_i prod_k N(x_k; c_ik, v_ik)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    centers: Points,
    weights: Vec<f64>,
    variances: Points,
    domain: Domain,
}

impl DensityEstimate {
    /// Mixture with a common per-axis variance.
    pub fn new(centers: Points, weights: Vec<f64>, variance: &[f64], domain: Domain) -> Self {
        assert_eq!(centers.len(), weights.len());
        assert_eq!(variance.len(), centers.dim());
        let variances = Points::filled(centers.dim(), centers.len(), variance);
        DensityEstimate {
            centers,
            weights,
            variances,
            domain,
        }
    }

    /// Equal-weight average of several estimates on the same domain.
    pub fn average(parts: &[DensityEstimate]) -> Self {
        assert!(!parts.is_empty());
        let dim = parts[0].centers.dim();
        let scale = 1.0 / parts.len() as f64;
        let mut centers = Points::with_capacity(dim, 0);
        let mut variances = Points::with_capacity(dim, 0);
        let mut weights = Vec::new();
        for p in parts {
            for i in 0..p.len() {
                centers.push(p.centers.get(i));
                variances.push(p.variances.get(i));
                weights.push(p.weights[i] * scale);
            }
        }
        DensityEstimate {
            centers,
            weights,
            variances,
            domain: parts[0].domain.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn centers(&self) -> &Points {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Per-axis variance of the first component (all components share it
    /// unless the estimate is an average).
    pub fn component_variance(&self) -> &[f64] {
        self.variances.get(0)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut total = 0.0;
        for i in 0..self.len() {
            let c = self.centers.get(i);
            let v = self.variances.get(i);
            let mut p = self.weights[i];
            for k in 0..d {
                let dx = x[k] - c[k];
                p *= INV_SQRT_2PI / v[k].sqrt() * (-0.5 * dx * dx / v[k]).exp();
            }
            total += p;
        }
        total
    }

    /// Evaluate at many points of a one-dimensional estimate.
    pub fn evaluate_1d(&self, xs: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim(), 1);
        let mut out = vec![0.0; xs.len()];
        let mut contrib = vec![0.0; xs.len()];
        for i in 0..self.len() {
            let c = self.centers.get(i)[0];
            let v = self.variances.get(i)[0];
            let scale = self.weights[i] * INV_SQRT_2PI / v.sqrt();
            let k = 0.5 / v;
            for (o, &x) in contrib.iter_mut().zip(xs) {
                let d = x - c;
                *o = scale * exp_neg(-d * d * k);
            }
            for (o, c) in out.iter_mut().zip(&contrib) {
                *o += c;
            }
        }
        out
    }

    /// Evaluate a two-dimensional estimate on the tensor grid
    /// `cols x rows`, returned row-major (`rows` outer).
    pub fn evaluate_grid_2d(&self, cols: &[f64], rows: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim(), 2);
        let (w, h) = (cols.len(), rows.len());
        let mut out = vec![0.0; w * h];
        let mut fx = vec![0.0; w];
        let mut fy = vec![0.0; h];
        for i in 0..self.len() {
            let c = self.centers.get(i);
            let v = self.variances.get(i);
            let (kx, ky) = (0.5 / v[0], 0.5 / v[1]);
            let scale = self.weights[i] * INV_SQRT_2PI * INV_SQRT_2PI / (v[0] * v[1]).sqrt();
            for (o, &x) in fx.iter_mut().zip(cols) {
                let d = x - c[0];
                *o = exp_neg(-d * d * kx);
            }
            for (o, &y) in fy.iter_mut().zip(rows) {
                let d = y - c[1];
                *o = scale * exp_neg(-d * d * ky);
            }
            for (r, &gy) in fy.iter().enumerate() {
                if gy == 0.0 {
                    continue;
                }
                let row = &mut out[r * w..(r + 1) * w];
                for (o, &gx) in row.iter_mut().zip(&fx) {
                    *o += gy * gx;
                }
            }
        }
        out
    }

    /// Mixture mass in each cell of the grid with the given per-axis edges,
    /// in flat order with axis 0 fastest.
    pub fn cell_masses(&self, edges: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(edges.len(), self.dim());
        let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut out = vec![0.0; total];
        let mut factors: Vec<Vec<f64>> = counts.iter().map(|&n| vec![0.0; n]).collect();
        for i in 0..self.len() {
            let c = self.centers.get(i);
            let v = self.variances.get(i);
            for k in 0..self.dim() {
                let sd = v[k].sqrt();
                for (b, f) in factors[k].iter_mut().enumerate() {
                    *f = normal_interval_mass(edges[k][b], edges[k][b + 1], c[k], sd);
                }
            }
            for (flat, o) in out.iter_mut().enumerate() {
                let mut rem = flat;
                let mut p = self.weights[i];
                for k in 0..self.dim() {
                    p *= factors[k][rem % counts[k]];
                    rem /= counts[k];
                }
                *o += p;
            }
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| weighted_moments(self.centers.iter().map(|p| p[k]), &self.weights).0)
            .collect()
    }

    /// Per-axis variance of the mixture.
    pub fn variance(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let (_, spread) = weighted_moments(self.centers.iter().map(|p| p[k]), &self.weights);
                let inner: Vec<f64> = (0..self.len())
                    .map(|i| self.weights[i] * self.variances.get(i)[k])
                    .collect();
                spread + sum_fixed(&inner) / sum_fixed(&self.weights)
            })
            .collect()
    }

    /// Mixture mass falling outside the domain.
    pub fn leakage(&self) -> f64 {
        let inside: f64 = (0..self.len())
            .map(|i| {
                let c = self.centers.get(i);
                let v = self.variances.get(i);
                let m: f64 = (0..self.dim())
                    .map(|k| {
                        normal_interval_mass(
                            self.domain.lower()[k],
                            self.domain.upper()[k],
                            c[k],
                            v[k].sqrt(),
                        )
                    })
                    .product();
                self.weights[i] * m
            })
            .sum();
        (1.0 - inside).max(0.0)
    }
}

/// Closed-form KDE-then-smooth estimate: each particle becomes a Gaussian of
/// per-axis variance `s_N^2 Sigma_kk + eps^2`.
pub fn estimate_density(
    xs: &Points,
    weights: &[f64],
    epsilon: f64,
    bandwidth: (f64, &[f64]),
    domain: &Domain,
) -> DensityEstimate {
    let (s, sigma) = bandwidth;
    let variance: Vec<f64> = sigma.iter().map(|v| s * s * v + epsilon * epsilon).collect();
    DensityEstimate::new(xs.clone(), weights.to_vec(), &variance, domain.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{normal_pdf, trapezoid};

    #[test]
    fn silverman_in_one_dimension() {
        let n = 1000.0f64;
        let want = (4.0f64 / 3.0).powf(0.2) * n.powf(-0.2);
        assert!((silverman_factor(1, n) - want).abs() < 1e-15);
        assert!(((4.0f64 / 3.0).powf(0.2) - 1.059_223_841_048_812_4).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_uniform_weights_is_sample_variance() {
        let xs = Points::from_scalars(vec![0.1, 0.4, 0.5, 0.9]);
        let w = vec![0.25; 4];
        let (_, sigma) = plugin_bandwidth(&xs, &w, 4.0, &Domain::unit(1));
        let mean = 0.475;
        let var = [0.1, 0.4, 0.5, 0.9]
            .iter()
            .map(|x: &f64| (x - mean).powi(2))
            .sum::<f64>()
            / 4.0;
        assert!((sigma[0] - var).abs() < 1e-15);
    }

    #[test]
    fn zero_spread_falls_back() {
        let xs = Points::from_scalars(vec![0.5; 10]);
        let w = vec![0.1; 10];
        let (s, sigma) = plugin_bandwidth(&xs, &w, 10.0, &Domain::unit(1));
        assert!((s * sigma[0].sqrt() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn single_particle_is_one_gaussian() {
        let est = estimate_density(
            &Points::from_scalars(vec![0.3]),
            &[1.0],
            0.01,
            (0.5, &[0.0004]),
            &Domain::unit(1),
        );
        let var: f64 = 0.25 * 0.0004 + 1e-4;
        for x in [0.2, 0.3, 0.35] {
            assert!((est.density(&[x]) - normal_pdf(x, 0.3, var.sqrt())).abs() < 1e-12);
        }
        assert!((est.variance()[0] - var).abs() < 1e-15);
    }

    #[test]
    fn interior_mixture_integrates_to_one() {
        let xs = Points::from_scalars((0..50).map(|i| 0.3 + 0.4 * i as f64 / 49.0).collect());
        let w = vec![1.0 / 50.0; 50];
        let est = estimate_density(&xs, &w, 0.01, (0.3, &[0.01]), &Domain::unit(1));
        let mass = trapezoid(0.0, 1.0, 10_001, |x| est.density(&[x]));
        assert!(mass >= 0.99 && mass <= 1.0 + 1e-9, "mass {mass}");
        assert!((mass + est.leakage() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fast_paths_match_direct_evaluation() {
        let xs = Points::from_scalars(vec![0.2, 0.6, 0.61]);
        let est = estimate_density(&xs, &[0.5, 0.3, 0.2], 0.02, (0.5, &[0.01]), &Domain::unit(1));
        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let fast = est.evaluate_1d(&grid);
        for (x, f) in grid.iter().zip(&fast) {
            assert!((est.density(&[*x]) - f).abs() < 1e-12);
        }

        let mut pts = Points::with_capacity(2, 3);
        pts.push(&[0.2, 0.3]);
        pts.push(&[0.7, 0.5]);
        pts.push(&[0.4, 0.9]);
        let dom = Domain::unit(2);
        let est = estimate_density(&pts, &[0.2, 0.5, 0.3], 0.05, (0.4, &[0.02, 0.03]), &dom);
        let cols = [0.1, 0.5, 0.8];
        let rows = [0.2, 0.6];
        let g = est.evaluate_grid_2d(&cols, &rows);
        for (r, y) in rows.iter().enumerate() {
            for (c, x) in cols.iter().enumerate() {
                let d = est.density(&[*x, *y]);
                assert!((g[r * 3 + c] - d).abs() < 1e-12 * d.max(1.0));
            }
        }
        let edges = vec![vec![-10.0, 0.5, 10.0], vec![-10.0, 10.0]];
        let m = est.cell_masses(&edges);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_has_unit_weight() {
        let a = estimate_density(&Points::from_scalars(vec![0.2]), &[1.0], 0.1, (0.0, &[0.0]), &Domain::unit(1));
        let b = estimate_density(&Points::from_scalars(vec![0.8]), &[1.0], 0.2, (0.0, &[0.0]), &Domain::unit(1));
        let avg = DensityEstimate::average(&[a.clone(), b.clone()]);
        assert!((avg.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let x = [0.5];
        assert!((avg.density(&x) - 0.5 * (a.density(&x) + b.density(&x))).abs() < 1e-14);
        assert!((avg.mean()[0] - 0.5).abs() < 1e-15);
    }
}
