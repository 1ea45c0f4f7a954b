//! Closed-form results for the Gaussian problem
//! `f = N(mu, sf2)`, `g(y | x) = N(y; x, sg2)`, `h = N(mu, sf2 + sg2)`,
//! smoothed with `K(x', x) = N(x; x', eps^2)`.
//!
//! One smoothed EM step maps a Gaussian iterate of variance `s` to a Gaussian
//! of variance `post(s) + eps^2`, where `post(s)` is the variance after the EM
//! reweighting. Its fixed point solves
//!
//! ```text
//! s^3 + s^2 (sg2 - sh2 - eps^2) - 2 eps^2 sg2 s - eps^2 sg2^2 = 0.
//! ```
//!
//! [`FixedPointForm::Inhomogeneous`] selects the variant
//! `s^3 + s^2 (sg2 - sh2) - 2 eps^2 sg2 s - 2 eps^2 sg2 = 0`.
//! It agrees at `eps = 0` but is not homogeneous in the
//! variances and drifts away from the iterated map as `eps` grows.

use crate::error::{Error, Result};
use crate::numeric::{bisect, normal_pdf};
use crate::particle::ExactPotential;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticGaussianSpec {
    pub mu: f64,
    pub sigma_f2: f64,
    pub sigma_g2: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FixedPointForm {
    /// Fixed point of the iterated variance map.
    #[default]
    Derived,
    /// The inhomogeneous variant, kept for comparison.
    Inhomogeneous,
}

impl AnalyticGaussianSpec {
    pub fn new(mu: f64, sigma_f: f64, sigma_g: f64, epsilon: f64) -> Result<Self> {
        if !(sigma_f > 0.0 && sigma_g > 0.0) {
            return Err(Error::arg("sigma", "standard deviations must be positive"));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::arg("epsilon", format!("must be nonnegative, got {epsilon}")));
        }
        Ok(AnalyticGaussianSpec {
            mu,
            sigma_f2: sigma_f * sigma_f,
            sigma_g2: sigma_g * sigma_g,
            epsilon,
        })
    }

    pub fn sigma_h2(&self) -> f64 {
        self.sigma_f2 + self.sigma_g2
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Variance after the EM reweighting of a `N(mu, s)` iterate, before
    /// smoothing. The factor `h / h_n` is Gaussian with precision
    /// `a = 1/sh2 - 1/(s + sg2)`, which is negative when `s < sf2`;
    /// convolving it with `g` contributes precision `a / (1 + sg2 a)`.
    pub fn em_variance(&self, s: f64) -> f64 {
        let a = 1.0 / self.sigma_h2() - 1.0 / (s + self.sigma_g2);
        1.0 / (1.0 / s + a / (1.0 + self.sigma_g2 * a))
    }

    /// One smoothed EM step on the variance.
    pub fn ems_variance(&self, s: f64) -> f64 {
        self.em_variance(s) + self.epsilon * self.epsilon
    }

    /// Fixed-point cubic evaluated at `s`.
    pub fn cubic(&self, form: FixedPointForm, s: f64) -> f64 {
        let (sg2, sh2) = (self.sigma_g2, self.sigma_h2());
        let e2 = self.epsilon * self.epsilon;
        match form {
            FixedPointForm::Derived => {
                s * s * s + s * s * (sg2 - sh2 - e2) - 2.0 * e2 * sg2 * s - e2 * sg2 * sg2
            }
            FixedPointForm::Inhomogeneous => {
                s * s * s + s * s * (sg2 - sh2) - 2.0 * e2 * sg2 * s - 2.0 * e2 * sg2
            }
        }
    }
}

/// Positive root of the fixed-point cubic.
pub fn ems_fixed_point_variance(spec: &AnalyticGaussianSpec) -> Result<f64> {
    ems_fixed_point_variance_with(spec, FixedPointForm::Derived)
}

pub fn ems_fixed_point_variance_with(spec: &AnalyticGaussianSpec, form: FixedPointForm) -> Result<f64> {
    let e2 = spec.epsilon * spec.epsilon;
    let lo = 1e-15;
    let mut hi = spec.sigma_h2() + 10.0 * e2 * spec.sigma_g2 + 1.0;
    let f = |s: f64| spec.cubic(form, s);
    for _ in 0..=5 {
        if f(lo).signum() != f(hi).signum() {
            return bisect(lo, hi, 1e-14, f)
                .ok_or_else(|| Error::Bracketing("bisection failed after bracketing".into()));
        }
        hi *= 10.0;
    }
    Err(Error::Bracketing(format!(
        "no sign change on [{lo:e}, {hi:e}] for {spec:?}"
    )))
}

/// `KL(h, N(mu, s + sg2))` in closed form.
pub fn kl_at_fixed_point(spec: &AnalyticGaussianSpec, sigma_ems2: f64) -> f64 {
    let v = sigma_ems2 + spec.sigma_g2;
    let sh2 = spec.sigma_h2();
    let kl = 0.5 * (v / sh2).ln() + sh2 / (2.0 * v) - 0.5;
    kl.max(0.0)
}

/// `g(y | x) / h_n(y)` for a Gaussian iterate of variance `sigma_n2`.
pub fn exact_potential(spec: &AnalyticGaussianSpec, sigma_n2: f64, x: f64, y: f64) -> f64 {
    let sg = spec.sigma_g2.sqrt();
    let sn = (spec.sigma_g2 + sigma_n2).sqrt();
    let zg = (y - x) / sg;
    let zn = (y - spec.mu) / sn;
    // ratio taken in log space so that far tails do not produce 0/0
    (sn / sg) * (-0.5 * (zg * zg - zn * zn)).exp()
}

/// Exact potentials for the particle solver, tracking the iterate variance
/// through the smoothed EM map. Iteration `n = 1` has variance
/// `initial_variance + eps^2` because each step starts with a mutation.
#[derive(Clone, Debug)]
pub struct ExactGaussianPotential {
    spec: AnalyticGaussianSpec,
    variances: Vec<f64>,
}

impl ExactGaussianPotential {
    pub fn new(spec: AnalyticGaussianSpec, initial_variance: f64, n_iterations: usize) -> Self {
        let mut variances = Vec::with_capacity(n_iterations.max(1));
        let mut s = initial_variance + spec.epsilon * spec.epsilon;
        for _ in 0..n_iterations.max(1) {
            variances.push(s);
            s = spec.ems_variance(s);
        }
        ExactGaussianPotential { spec, variances }
    }

    /// Variance of the iterate weighted at iteration `n` (1-based).
    pub fn variance_at(&self, n: usize) -> f64 {
        let i = n.saturating_sub(1).min(self.variances.len() - 1);
        self.variances[i]
    }
}

impl ExactPotential for ExactGaussianPotential {
    fn potential(&self, iteration: usize, x: &[f64], y: &[f64]) -> f64 {
        exact_potential(&self.spec, self.variance_at(iteration), x[0], y[0])
    }
}

/// Density of `h_n = N(mu, sg2 + s)`.
pub fn iterate_data_density(spec: &AnalyticGaussianSpec, s: f64, y: f64) -> f64 {
    normal_pdf(y, spec.mu, (spec.sigma_g2 + s).sqrt())
}
