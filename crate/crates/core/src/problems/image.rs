use std::sync::Arc;

use crate::domain::{CellSampler, DataSource, DataSourceKind, DensityFn, Domain};
use crate::error::{Error, Result};

/// Nonnegative pixel masses over a 2D box. Pixel `(row, col)` sits at index
/// `row * width + col`; columns run along axis 0 and rows along axis 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDensity {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    domain: Domain,
    normalized: bool,
}

impl ImageDensity {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, domain: Domain) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image", "width and height must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if domain.dim() != 2 {
            return Err(Error::DimensionMismatch("images live on a 2D box".into()));
        }
        if pixels.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::arg("image", "pixel values must be finite and nonnegative"));
        }
        Ok(ImageDensity {
            width,
            height,
            pixels,
            domain,
            normalized: false,
        })
    }

    /// Aspect-preserving box `[0, width/height] x [0, 1]`.
    pub fn aspect_domain(width: usize, height: usize) -> Domain {
        Domain::new(vec![0.0, 0.0], vec![width as f64 / height as f64, 1.0])
            .expect("positive extents")
    }

    pub fn with_aspect_domain(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(width, height, pixels, Self::aspect_domain(width, height))
    }

    /// Rescale so the pixels sum to 1.
    pub fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.pixels.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyData);
        }
        for p in self.pixels.iter_mut() {
            *p /= total;
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn pixel_size(&self) -> (f64, f64) {
        (
            self.domain.width(0) / self.width as f64,
            self.domain.width(1) / self.height as f64,
        )
    }

    pub fn pixel_area(&self) -> f64 {
        let (w, h) = self.pixel_size();
        w * h
    }

    /// Cell edges along axis 0 (columns) and axis 1 (rows).
    pub fn edges(&self) -> Vec<Vec<f64>> {
        let axis = |k: usize, n: usize| -> Vec<f64> {
            let (lo, hi) = (self.domain.lower()[k], self.domain.upper()[k]);
            (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
        };
        vec![axis(0, self.width), axis(1, self.height)]
    }

    /// Center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let (pw, ph) = self.pixel_size();
        [
            self.domain.lower()[0] + (col as f64 + 0.5) * pw,
            self.domain.lower()[1] + (row as f64 + 0.5) * ph,
        ]
    }

    /// Piecewise-constant density values (mass over pixel area).
    pub fn density_values(&self) -> Vec<f64> {
        let a = self.pixel_area();
        self.pixels.iter().map(|p| p / a).collect()
    }

    /// Piecewise-constant density at a point; zero outside the box.
    pub fn density_at(&self, x: &[f64]) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        let (pw, ph) = self.pixel_size();
        let col = (((x[0] - self.domain.lower()[0]) / pw) as usize).min(self.width - 1);
        let row = (((x[1] - self.domain.lower()[1]) / ph) as usize).min(self.height - 1);
        self.at(row, col) / self.pixel_area()
    }

    pub fn density_fn(&self) -> DensityFn {
        let me = self.clone();
        Arc::new(move |x: &[f64]| me.density_at(x))
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let mut pixels = vec![0.0; self.pixels.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                pixels[r * self.width + c] = self.at(r, self.width - 1 - c);
            }
        }
        ImageDensity {
            pixels,
            ..self.clone()
        }
    }
}

/// Bootstrap sampler: a pixel drawn by mass, then a uniform point in it.
pub fn image_to_sampler(image: &ImageDensity) -> Result<DataSource> {
    let cells = CellSampler::new(image.edges(), image.pixels.clone())?;
    Ok(DataSource::cells(
        image.domain.clone(),
        cells,
        DataSourceKind::EmpiricalBootstrap,
    ))
}
