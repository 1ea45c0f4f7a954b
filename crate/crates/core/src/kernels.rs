//! Forward kernels used by the bundled problems.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::domain::{Domain, ForwardKernel, KernelBounds, Points};
use crate::error::{Error, Result};
use crate::numeric::{exp_neg, normal_interval_mass, INV_SQRT_2PI};

/// `g(y | x) = N(y; x, sigma^2)` in one dimension.
#[derive(Clone, Debug)]
pub struct GaussianKernel {
    sigma: f64,
    bounds: KernelBounds,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(GaussianKernel {
            sigma,
            bounds: KernelBounds {
                lower: 0.0,
                upper: Some(INV_SQRT_2PI / sigma),
            },
        })
    }

    /// Sharpen the declared bounds using the largest `|x - y|` possible on
    /// the given intervals.
    pub fn on_domains(mut self, x: &Domain, y: &Domain) -> Self {
        let reach = (x.upper()[0] - y.lower()[0]).max(y.upper()[0] - x.lower()[0]);
        let z = reach / self.sigma;
        self.bounds.lower = INV_SQRT_2PI / self.sigma * (-0.5 * z * z).exp();
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl ForwardKernel for GaussianKernel {
    fn x_dim(&self) -> usize {
        1
    }

    fn y_dim(&self) -> usize {
        1
    }

    fn density(&self, y: &[f64], x: &[f64]) -> f64 {
        let z = (y[0] - x[0]) / self.sigma;
        INV_SQRT_2PI / self.sigma * (-0.5 * z * z).exp()
    }

    fn density_over(&self, y: &[f64], xs: &Points, out: &mut [f64]) {
        let scale = INV_SQRT_2PI / self.sigma;
        let k = 0.5 / (self.sigma * self.sigma);
        let y = y[0];
        for (o, &x) in out.iter_mut().zip(xs.as_flat()) {
            let d = y - x;
            *o = scale * exp_neg(-d * d * k);
        }
    }

    fn bounds(&self) -> KernelBounds {
        self.bounds
    }

    fn cell_mass(&self, x: &[f64], cell: &Domain) -> f64 {
        normal_interval_mass(cell.lower()[0], cell.upper()[0], x[0], self.sigma)
    }
}

/// Horizontal motion blur with Gaussian vertical spread:
/// `g(u, v | x, y) = N(v; y, sigma^2) 1{|x - u| <= b/2} / b`.
#[derive(Clone, Debug)]
pub struct MotionBlurKernel {
    length: f64,
    sigma: f64,
}

impl MotionBlurKernel {
    /// `length` and `sigma` are in domain units.
    pub fn new(length: f64, sigma: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::arg("b", format!("must be positive, got {length}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(MotionBlurKernel { length, sigma })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl ForwardKernel for MotionBlurKernel {
    fn x_dim(&self) -> usize {
        2
    }

    fn y_dim(&self) -> usize {
        2
    }

    fn density(&self, y: &[f64], x: &[f64]) -> f64 {
        if (x[0] - y[0]).abs() > 0.5 * self.length {
            return 0.0;
        }
        let z = (y[1] - x[1]) / self.sigma;
        INV_SQRT_2PI / self.sigma * (-0.5 * z * z).exp() / self.length
    }

    fn density_over(&self, y: &[f64], xs: &Points, out: &mut [f64]) {
        let scale = INV_SQRT_2PI / (self.sigma * self.length);
        let k = 0.5 / (self.sigma * self.sigma);
        let half = 0.5 * self.length;
        let (u, v) = (y[0], y[1]);
        for (o, p) in out.iter_mut().zip(xs.as_flat().chunks_exact(2)) {
            let dv = v - p[1];
            let inside = if (p[0] - u).abs() <= half { scale } else { 0.0 };
            *o = inside * exp_neg(-dv * dv * k);
        }
    }

    fn cell_mass(&self, x: &[f64], cell: &Domain) -> f64 {
        let half = 0.5 * self.length;
        let lo = cell.lower()[0].max(x[0] - half);
        let hi = cell.upper()[0].min(x[0] + half);
        if hi <= lo {
            return 0.0;
        }
        (hi - lo) / self.length
            * normal_interval_mass(cell.lower()[1], cell.upper()[1], x[1], self.sigma)
    }
}

/// Radial projection kernel on `(phi, xi)`:
/// `g(phi, xi | x, y) = N(xi; x cos(phi) + y sin(phi), sigma^2) / (2 pi)`.
#[derive(Clone, Debug)]
pub struct PetKernel {
    sigma: f64,
}

impl PetKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(PetKernel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl ForwardKernel for PetKernel {
    fn x_dim(&self) -> usize {
        2
    }

    fn y_dim(&self) -> usize {
        2
    }

    fn density(&self, y: &[f64], x: &[f64]) -> f64 {
        let (s, c) = y[0].sin_cos();
        let z = (y[1] - x[0] * c - x[1] * s) / self.sigma;
        INV_SQRT_2PI / self.sigma * (-0.5 * z * z).exp() / (2.0 * PI)
    }

    fn density_over(&self, y: &[f64], xs: &Points, out: &mut [f64]) {
        let (s, c) = y[0].sin_cos();
        let xi = y[1];
        let scale = INV_SQRT_2PI / self.sigma / (2.0 * PI);
        let k = 0.5 / (self.sigma * self.sigma);
        for (o, p) in out.iter_mut().zip(xs.as_flat().chunks_exact(2)) {
            let d = xi - p[0] * c - p[1] * s;
            *o = scale * exp_neg(-d * d * k);
        }
    }

    /// Angular extent times the offset mass at the mid angle.
    fn cell_mass(&self, x: &[f64], cell: &Domain) -> f64 {
        let phi = 0.5 * (cell.lower()[0] + cell.upper()[0]);
        let (s, c) = phi.sin_cos();
        let mean = x[0] * c + x[1] * s;
        cell.width(0) / (2.0 * PI)
            * normal_interval_mass(cell.lower()[1], cell.upper()[1], mean, self.sigma)
    }
}

/// Kernel defined by a closure, for user-supplied models.
#[derive(Clone)]
pub struct FnKernel {
    f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    x_dim: usize,
    y_dim: usize,
    bounds: KernelBounds,
}

impl FnKernel {
    /// `f(y, x)` evaluates `g(y | x)`.
    pub fn new(
        x_dim: usize,
        y_dim: usize,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnKernel {
            f: Arc::new(f),
            x_dim,
            y_dim,
            bounds: KernelBounds::UNKNOWN,
        }
    }

    pub fn with_bounds(mut self, bounds: KernelBounds) -> Self {
        self.bounds = bounds;
        self
    }
}

impl ForwardKernel for FnKernel {
    fn x_dim(&self) -> usize {
        self.x_dim
    }

    fn y_dim(&self) -> usize {
        self.y_dim
    }

    fn density(&self, y: &[f64], x: &[f64]) -> f64 {
        (self.f)(y, x)
    }

    fn bounds(&self) -> KernelBounds {
        self.bounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::trapezoid;

    #[test]
    fn gaussian_fast_path_matches_scalar() {
        let k = GaussianKernel::new(0.045).unwrap();
        let xs = Points::from_scalars((0..37).map(|i| i as f64 / 36.0).collect());
        let mut out = vec![0.0; xs.len()];
        k.density_over(&[0.41], &xs, &mut out);
        for (i, x) in xs.iter().enumerate() {
            let d = k.density(&[0.41], x);
            assert!((out[i] - d).abs() <= 1e-13 * d.max(1e-300), "{} vs {}", out[i], d);
        }
    }

    #[test]
    fn gaussian_bounds_hold_on_unit_interval() {
        let d = Domain::unit(1);
        let k = GaussianKernel::new(0.3).unwrap().on_domains(&d, &d);
        let b = k.bounds();
        for i in 0..=20 {
            for j in 0..=20 {
                let g = k.density(&[i as f64 / 20.0], &[j as f64 / 20.0]);
                assert!(g >= b.lower * (1.0 - 1e-12) && g <= b.upper.unwrap());
            }
        }
    }

    #[test]
    fn blur_kernel_is_a_density() {
        let k = MotionBlurKernel::new(0.2, 0.02).unwrap();
        let x = [0.5, 0.5];
        // integrate over u in [0.3, 0.7], v in [0.3, 0.7]
        let mass = trapezoid(0.3, 0.7, 801, |u| {
            trapezoid(0.3, 0.7, 801, |v| k.density(&[u, v], &x))
        });
        assert!((mass - 1.0).abs() < 5e-3, "mass {mass}");
        let cell = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((k.cell_mass(&x, &cell) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blur_fast_path_matches_scalar() {
        let k = MotionBlurKernel::new(0.1, 0.02).unwrap();
        let mut xs = Points::with_capacity(2, 50);
        for i in 0..50 {
            xs.push(&[i as f64 / 49.0, 0.5 + 0.001 * i as f64]);
        }
        let mut out = vec![0.0; 50];
        k.density_over(&[0.5, 0.51], &xs, &mut out);
        for (i, x) in xs.iter().enumerate() {
            let d = k.density(&[0.5, 0.51], x);
            assert!((out[i] - d).abs() <= 1e-13 * d.max(1e-300));
        }
    }

    #[test]
    fn pet_kernel_is_a_density_over_angle_and_offset() {
        let k = PetKernel::new(0.05).unwrap();
        let x = [0.2, -0.1];
        let mass = trapezoid(0.0, 2.0 * PI, 401, |phi| {
            trapezoid(-1.5, 1.5, 1201, |xi| k.density(&[phi, xi], &x))
        });
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn pet_fast_path_matches_scalar() {
        let k = PetKernel::new(0.02).unwrap();
        let mut xs = Points::with_capacity(2, 40);
        for i in 0..40 {
            let t = i as f64 / 39.0;
            xs.push(&[t - 0.5, 0.3 - 0.6 * t]);
        }
        let y = [1.1, 0.05];
        let mut out = vec![0.0; 40];
        k.density_over(&y, &xs, &mut out);
        for (i, x) in xs.iter().enumerate() {
            let d = k.density(&y, x);
            assert!((out[i] - d).abs() <= 1e-13 * d.max(1e-300));
        }
    }
}
