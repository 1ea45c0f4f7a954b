//! Ready-made instances: the analytic Gaussian problem, a two-component
//! mixture, motion deblurring and a PET-style reconstruction.

mod image;
mod phantom;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson, StandardNormal};

pub use image::{image_to_sampler, ImageDensity};
pub use phantom::{shepp_logan_phantom, Ellipse, PhantomSpec, PhantomVariant};

use crate::domain::{CellSampler, DataSource, DataSourceKind, DensityFn, Domain, FredholmProblem, SamplerFn};
use crate::error::{Error, Result};
use crate::grid::{axis_transfer, GridModel, Transfer};
use crate::kernels::{GaussianKernel, MotionBlurKernel, PetKernel};
use crate::numeric::{normal_cdf, normal_interval_mass, normal_pdf};

/// Finite mixture of univariate normals.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    /// `(weight, mean, sd)`; weights sum to 1.
    pub components: Vec<(f64, f64, f64)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::arg("components", "mixture needs a component"));
        }
        if components.iter().any(|&(w, _, s)| !(w > 0.0 && s > 0.0)) {
            return Err(Error::arg("components", "weights and sds must be positive"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        Ok(GaussianMixture {
            components: components.into_iter().map(|(w, m, s)| (w / total, m, s)).collect(),
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|&(w, m, s)| w * normal_pdf(x, m, s)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|&(w, m, s)| w * normal_cdf(x, m, s)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|&(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components
            .iter()
            .map(|&(w, m, s)| w * (s * s + (m - mu).powi(2)))
            .sum()
    }

    /// Law of `X + Z` with `Z ~ N(0, sigma^2)` independent.
    pub fn convolve(&self, sigma: f64) -> Self {
        GaussianMixture {
            components: self
                .components
                .iter()
                .map(|&(w, m, s)| (w, m, (s * s + sigma * sigma).sqrt()))
                .collect(),
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let mut u: f64 = rng.random();
        for &(w, m, s) in &self.components {
            if u < w {
                let z: f64 = rng.sample(StandardNormal);
                return m + s * z;
            }
            u -= w;
        }
        let &(_, m, s) = self.components.last().expect("nonempty");
        let z: f64 = rng.sample(StandardNormal);
        m + s * z
    }
}

fn mixture_problem(f: GaussianMixture, sigma_g: f64) -> Result<FredholmProblem> {
    let domain = Domain::unit(1);
    let h = f.convolve(sigma_g);
    let h_pdf = h.clone();
    let sampler: SamplerFn = Arc::new(move |rng: &mut dyn RngCore, out: &mut [f64]| out[0] = h.sample(rng));
    let density: DensityFn = Arc::new(move |y: &[f64]| h_pdf.pdf(y[0]));
    let truth: DensityFn = Arc::new(move |x: &[f64]| f.pdf(x[0]));
    let kernel = GaussianKernel::new(sigma_g)?.on_domains(&domain, &domain);
    FredholmProblem::new(
        domain.clone(),
        domain.clone(),
        Arc::new(kernel),
        DataSource::exact(domain, sampler, Some(density)),
        Some(truth),
    )
}

/// `f = N(mu, sigma_f^2)`, `g(y|x) = N(y; x, sigma_g^2)` on `[0, 1]`.
pub fn analytic_gaussian_problem(mu: f64, sigma_f: f64, sigma_g: f64) -> Result<FredholmProblem> {
    if !(sigma_f > 0.0 && sigma_g > 0.0) {
        return Err(Error::arg("sigma", "standard deviations must be positive"));
    }
    mixture_problem(GaussianMixture::new(vec![(1.0, mu, sigma_f)])?, sigma_g)
}

/// The benchmark mixture `f` and its blurred version `h` (`sigma_g = 0.045`).
pub fn benchmark_mixture() -> (GaussianMixture, GaussianMixture) {
    let f = GaussianMixture::new(vec![(1.0 / 3.0, 0.3, 0.015), (2.0 / 3.0, 0.5, 0.043)]).expect("valid");
    let h = f.convolve(0.045);
    (f, h)
}

/// `f = 1/3 N(0.3, 0.015^2) + 2/3 N(0.5, 0.043^2)` blurred by `N(0, 0.045^2)`.
pub fn gaussian_mixture_problem() -> Result<FredholmProblem> {
    mixture_problem(benchmark_mixture().0, 0.045)
}

/// Fraction of `[lo, hi]` covered by `[c - half, c + half]`, over `2 half`.
fn box_overlap(c: f64, half: f64, lo: f64, hi: f64) -> f64 {
    let a = lo.max(c - half);
    let b = hi.min(c + half);
    if b > a {
        (b - a) / (2.0 * half)
    } else {
        0.0
    }
}

/// Separable pixel-grid transfer for the motion blur: horizontal box of
/// `length` and vertical Gaussian of `sigma`, both in domain units, with
/// mass leaving the image folded back by row renormalization.
pub fn deblur_transfer(edges: &[Vec<f64>], length: f64, sigma: f64) -> Result<Transfer> {
    let half = 0.5 * length;
    let a0 = axis_transfer(&edges[0], &edges[0], |x, lo, hi| box_overlap(x, half, lo, hi))?;
    let a1 = axis_transfer(&edges[1], &edges[1], |y, lo, hi| normal_interval_mass(lo, hi, y, sigma))?;
    Ok(Transfer::Separable([a0, a1]))
}

/// Output of [`motion_deblur_problem`].
#[derive(Clone, Debug)]
pub struct DeblurData {
    pub problem: FredholmProblem,
    pub sharp: ImageDensity,
    pub blurred: ImageDensity,
    pub transfer: Transfer,
}

impl DeblurData {
    /// Pixel-grid model for Richardson-Lucy on the blurred image.
    pub fn grid_model(&self) -> Result<GridModel> {
        GridModel::new(
            self.sharp.edges(),
            self.blurred.edges(),
            self.blurred.pixels().to_vec(),
            self.transfer.clone(),
        )
    }
}

/// Blur `sharp` by a horizontal motion of `length_px` pixels and a vertical
/// Gaussian of `sigma` (domain units), then apply multiplicative noise
/// `1 + noise_level z` with `z` standard normal, clamp and renormalize.
pub fn motion_deblur_problem(
    sharp: &ImageDensity,
    length_px: f64,
    sigma: f64,
    noise_level: f64,
    rng: &mut dyn RngCore,
) -> Result<DeblurData> {
    if !(noise_level >= 0.0) {
        return Err(Error::arg("noise_level", "must be nonnegative"));
    }
    let sharp = sharp.clone().normalized()?;
    let (pw, _) = sharp.pixel_size();
    let length = length_px * pw;
    if !(length < sharp.domain().width(0)) {
        return Err(Error::arg("b", "blur length must be smaller than the image width"));
    }
    let kernel = MotionBlurKernel::new(length, sigma)?;
    let edges = sharp.edges();
    let transfer = deblur_transfer(&edges, length, sigma)?;
    let model = GridModel::new(
        edges.clone(),
        edges,
        vec![1.0; sharp.pixels().len()],
        transfer.clone(),
    )?
    .with_f(sharp.pixels().to_vec());
    let mut blurred = model.predicted();
    if noise_level > 0.0 {
        for b in blurred.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *b = (*b * (1.0 + noise_level * z)).max(0.0);
        }
    }
    let blurred = ImageDensity::new(sharp.width(), sharp.height(), blurred, sharp.domain().clone())?.normalized()?;
    let problem = FredholmProblem::new(
        sharp.domain().clone(),
        sharp.domain().clone(),
        Arc::new(kernel),
        image_to_sampler(&blurred)?,
        Some(sharp.density_fn()),
    )?;
    Ok(DeblurData {
        problem,
        sharp,
        blurred,
        transfer,
    })
}

/// Synthetic test scene: bars and disks on a dim background, normalized
/// over the aspect-preserving box.
pub fn synthetic_scene(width: usize, height: usize) -> Result<ImageDensity> {
    let aspect = width as f64 / height as f64;
    let mut px = vec![0.0; width * height];
    for r in 0..height {
        let y = (r as f64 + 0.5) / height as f64;
        for c in 0..width {
            let x = (c as f64 + 0.5) / height as f64;
            let u = x / aspect;
            let mut v = 0.1;
            // three vertical bars of increasing width
            for (k, w) in [0.02, 0.035, 0.05].iter().enumerate() {
                let left = 0.08 + 0.1 * k as f64;
                if u >= left && u < left + w && y > 0.2 && y < 0.8 {
                    v = 1.0;
                }
            }
            // horizontal bar
            if u > 0.45 && u < 0.9 && y > 0.15 && y < 0.25 {
                v = 0.8;
            }
            // two disks
            for &(cx, cy, rad, val) in &[(0.6, 0.55, 0.15, 0.6), (0.82, 0.6, 0.08, 1.0)] {
                let (dx, dy) = ((u - cx) * aspect, y - cy);
                if dx * dx + dy * dy < rad * rad {
                    v = val;
                }
            }
            px[r * width + c] = v;
        }
    }
    ImageDensity::with_aspect_domain(width, height, px)?.normalized()
}

/// Simulated PET acquisition.
#[derive(Clone, Debug)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_offsets: usize,
    /// Cell edges: angles on axis 0, offsets on axis 1.
    pub edges: Vec<Vec<f64>>,
    /// Noise-free cell masses, angle index fastest.
    pub expected: Vec<f64>,
    /// Poisson counts in the same layout.
    pub counts: Vec<f64>,
}

/// Output of [`pet_problem`].
#[derive(Clone, Debug)]
pub struct PetData {
    pub problem: FredholmProblem,
    pub phantom: ImageDensity,
    pub sinogram: Sinogram,
}

/// Forward-project `phantom` onto `n_angles` angle cells centered at
/// `2 pi (a + 1/2) / n_angles` and `n_offsets` offset cells evenly spaced
/// over `[-offset_range, offset_range]` pixels, then draw Poisson counts
/// with mean `total_counts` times the cell mass.
pub fn pet_problem(
    phantom: &ImageDensity,
    n_angles: usize,
    n_offsets: usize,
    offset_range: f64,
    sigma: f64,
    total_counts: u64,
    rng: &mut dyn RngCore,
) -> Result<PetData> {
    if total_counts == 0 {
        return Err(Error::arg("total_counts", "must be positive"));
    }
    if n_angles < 2 || n_offsets < 2 {
        return Err(Error::arg("sinogram", "need at least 2 angles and 2 offsets"));
    }
    if !(offset_range > 0.0) {
        return Err(Error::arg("offset_range", "must be positive"));
    }
    let phantom = phantom.clone().normalized()?;
    let kernel = PetKernel::new(sigma)?;
    let (pw, ph) = phantom.pixel_size();
    let step = 2.0 * offset_range / (n_offsets - 1) as f64;
    let reach = (offset_range + 0.5 * step) * pw;
    let angle_edges: Vec<f64> = (0..=n_angles).map(|a| 2.0 * PI * a as f64 / n_angles as f64).collect();
    let offset_edges: Vec<f64> = (0..=n_offsets)
        .map(|j| -reach + 2.0 * reach * j as f64 / n_offsets as f64)
        .collect();
    let cell = 2.0 * reach / n_offsets as f64;
    let trig: Vec<(f64, f64)> = (0..n_angles)
        .map(|a| (2.0 * PI * (a as f64 + 0.5) / n_angles as f64).sin_cos())
        .collect();

    // 2x2 sub-pixel points spread each pixel's mass before projecting
    let mut expected = vec![0.0; n_angles * n_offsets];
    let span = 8.0 * sigma;
    for r in 0..phantom.height() {
        for c in 0..phantom.width() {
            let m = phantom.at(r, c);
            if m == 0.0 {
                continue;
            }
            let [cx, cy] = phantom.pixel_center(r, c);
            for (sx, sy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                let (x, y) = (cx + sx * pw, cy + sy * ph);
                for (a, &(s, co)) in trig.iter().enumerate() {
                    let mean = x * co + y * s;
                    let lo = (((mean - span + reach) / cell).floor().max(0.0)) as usize;
                    let hi = ((((mean + span + reach) / cell).ceil()) as usize).min(n_offsets);
                    for j in lo..hi {
                        let mass = normal_interval_mass(offset_edges[j], offset_edges[j + 1], mean, sigma);
                        expected[a + n_angles * j] += 0.25 * m * mass / n_angles as f64;
                    }
                }
            }
        }
    }
    let mut counts = vec![0.0; expected.len()];
    for (k, e) in expected.iter().enumerate() {
        let lambda = total_counts as f64 * e;
        if lambda > 0.0 {
            let p = Poisson::new(lambda).map_err(|e| Error::arg("total_counts", e.to_string()))?;
            counts[k] = p.sample(&mut *rng);
        }
    }
    if counts.iter().all(|c| *c == 0.0) {
        return Err(Error::EmptyData);
    }
    let edges = vec![angle_edges, offset_edges];
    let y_domain = Domain::new(vec![0.0, -reach], vec![2.0 * PI, reach])?;
    let data = DataSource::cells(
        y_domain.clone(),
        CellSampler::new(edges.clone(), counts.clone())?,
        DataSourceKind::EmpiricalBootstrap,
    );
    let problem = FredholmProblem::new(
        phantom.domain().clone(),
        y_domain,
        Arc::new(kernel),
        data,
        Some(phantom.density_fn()),
    )?;
    Ok(PetData {
        problem,
        phantom,
        sinogram: Sinogram {
            n_angles,
            n_offsets,
            edges,
            expected,
            counts,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::simpson;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_h_variance_monte_carlo() {
        let p = analytic_gaussian_problem(0.5, 0.043, 0.045).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ys = p.data.sample_n(&mut rng, 1_000_000).unwrap().axis(0);
        let n = ys.len() as f64;
        let m = ys.iter().sum::<f64>() / n;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
        let want = 0.043f64.powi(2) + 0.045f64.powi(2);
        assert!((v / want - 1.0).abs() < 0.01, "{v} vs {want}");
    }

    #[test]
    fn mixture_truth_moments() {
        let (f, h) = benchmark_mixture();
        assert!((f.mean() - 0.43333).abs() < 1e-5);
        assert!((f.variance() - 0.010196).abs() < 1e-6);
        assert!((h.cdf(0.0) + 1.0 - h.cdf(1.0)) < 1e-10);
        let total = simpson(-1.0, 2.0, 3000, |y| h.pdf(y));
        assert!((total - 1.0).abs() < 1e-10);
        let p = gaussian_mixture_problem().unwrap();
        let t = p.truth.unwrap();
        assert!((t(&[0.3]) - f.pdf(0.3)).abs() < 1e-15);
    }

    fn point_image(w: usize, h: usize, r: usize, c: usize) -> ImageDensity {
        let mut px = vec![0.0; w * h];
        px[r * w + c] = 1.0;
        ImageDensity::with_aspect_domain(w, h, px).unwrap()
    }

    #[test]
    fn identity_blur_keeps_image() {
        let sharp = synthetic_scene(40, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = motion_deblur_problem(&sharp, 1e-9, 1e-9, 0.0, &mut rng).unwrap();
        for (a, b) in d.blurred.pixels().iter().zip(sharp.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_streak() {
        let (w, h) = (80, 40);
        let sharp = point_image(w, h, 20, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = 2.0 / h as f64;
        let d = motion_deblur_problem(&sharp, 16.0, sigma, 0.0, &mut rng).unwrap();
        assert!((d.blurred.pixels().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let row: Vec<f64> = (0..w).map(|c| d.blurred.at(20, c)).collect();
        let lit = row.iter().filter(|v| **v > 0.0).count();
        // 15 full pixels plus two half pixels at the ends
        assert_eq!(lit, 17);
        assert!((row[40] - 2.0 * row[32]).abs() < 1e-12);
        let col: Vec<f64> = (0..h).map(|r| d.blurred.at(r, 40)).collect();
        let peak = col[20];
        let ph = 1.0 / h as f64;
        let ratio = col[22] / peak;
        let want = normal_interval_mass(1.5 * ph, 2.5 * ph, 0.0, sigma) / normal_interval_mass(-0.5 * ph, 0.5 * ph, 0.0, sigma);
        assert!((ratio - want).abs() < 1e-9);
        assert!((col[18] - col[22]).abs() < 1e-15);
    }

    #[test]
    fn deblur_rejects_wide_blur() {
        let sharp = synthetic_scene(20, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(motion_deblur_problem(&sharp, 25.0, 0.02, 0.0, &mut rng).is_err());
    }

    #[test]
    fn deblur_noise_keeps_normalization() {
        let sharp = synthetic_scene(60, 30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = motion_deblur_problem(&sharp, 8.0, 0.02, 0.005, &mut rng).unwrap();
        assert!((d.blurred.pixels().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.blurred.pixels().iter().all(|p| *p >= 0.0));
        let m = d.grid_model().unwrap();
        assert_eq!(m.x_bins(), 1800);
    }

    #[test]
    fn pet_central_impulse() {
        let mut px = vec![0.0; 32 * 32];
        for (r, c) in [(15, 15), (15, 16), (16, 15), (16, 16)] {
            px[r * 32 + c] = 1.0;
        }
        let img = ImageDensity::new(32, 32, px, Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = pet_problem(&img, 16, 47, 23.0, 0.02, 100_000, &mut rng).unwrap();
        let s = &d.sinogram;
        assert!((s.expected.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for a in 0..16 {
            let column: Vec<f64> = (0..47).map(|j| s.expected[a + 16 * j]).collect();
            let central: f64 = column[21..26].iter().sum();
            let total: f64 = column.iter().sum();
            assert!(central / total > 0.99, "angle {a}: {}", central / total);
        }
    }

    #[test]
    fn pet_opposite_angles_mirror() {
        let phantom = shepp_logan_phantom(32, 32, PhantomVariant::Modified).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = pet_problem(&phantom, 16, 47, 23.0, 0.02, 100_000, &mut rng).unwrap();
        let s = &d.sinogram;
        assert!((s.expected.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for a in 0..8 {
            for j in 0..47 {
                let x = s.expected[a + 16 * j];
                let y = s.expected[a + 8 + 16 * (46 - j)];
                assert!((x - y).abs() < 1e-12);
            }
        }
        let total: f64 = s.counts.iter().sum();
        assert!((total / 100_000.0 - 1.0).abs() < 0.02);
        assert!(pet_problem(&phantom, 16, 47, 23.0, 0.02, 0, &mut rng).is_err());
    }
}
