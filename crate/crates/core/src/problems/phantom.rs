use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::problems::ImageDensity;

/// One additive ellipse on `[-1, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Counter-clockwise rotation in degrees.
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation.to_radians().sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = (dx * c + dy * s) / self.semi_axes[0];
        let v = (-dx * s + dy * c) / self.semi_axes[1];
        u * u + v * v <= 1.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PhantomVariant {
    /// The 1974 ellipse table.
    #[default]
    Original,
    /// Higher-contrast intensities (Toft).
    Modified,
}

/// Ellipse list plus raster size.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub ellipses: Vec<Ellipse>,
    pub width: usize,
    pub height: usize,
}

// (a, b, x0, y0, rotation, original intensity, modified intensity)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64, f64); 10] = [
    (0.69, 0.92, 0.0, 0.0, 0.0, 2.0, 1.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0, -0.98, -0.8),
    (0.11, 0.31, 0.22, 0.0, -18.0, -0.02, -0.2),
    (0.16, 0.41, -0.22, 0.0, 18.0, -0.02, -0.2),
    (0.21, 0.25, 0.0, 0.35, 0.0, 0.01, 0.1),
    (0.046, 0.046, 0.0, 0.1, 0.0, 0.01, 0.1),
    (0.046, 0.046, 0.0, -0.1, 0.0, 0.01, 0.1),
    (0.046, 0.023, -0.08, -0.605, 0.0, 0.01, 0.1),
    (0.023, 0.023, 0.0, -0.606, 0.0, 0.01, 0.1),
    (0.023, 0.046, 0.06, -0.605, 0.0, 0.01, 0.1),
];

impl PhantomSpec {
    pub fn shepp_logan(width: usize, height: usize, variant: PhantomVariant) -> Self {
        let ellipses = SHEPP_LOGAN
            .iter()
            .map(|&(a, b, x0, y0, rot, orig, modi)| Ellipse {
                center: [x0, y0],
                semi_axes: [a, b],
                rotation: rot,
                intensity: match variant {
                    PhantomVariant::Original => orig,
                    PhantomVariant::Modified => modi,
                },
            })
            .collect();
        PhantomSpec {
            ellipses,
            width,
            height,
        }
    }

    /// Intensity at `(x, y)`, clamped at zero.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        self.ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum::<f64>()
            .max(0.0)
    }

    /// Sample at pixel centers of `[-1, 1]^2`. Row 0 is the top of the
    /// picture, so the ellipse table is read at `(x, -y)`.
    pub fn rasterize(&self) -> Result<ImageDensity> {
        let domain = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0])?;
        let mut pixels = vec![0.0; self.width * self.height];
        for r in 0..self.height {
            let y = -1.0 + 2.0 * (r as f64 + 0.5) / self.height as f64;
            for c in 0..self.width {
                let x = -1.0 + 2.0 * (c as f64 + 0.5) / self.width as f64;
                pixels[r * self.width + c] = self.intensity(x, -y);
            }
        }
        ImageDensity::new(self.width, self.height, pixels, domain)?.normalized()
    }
}

/// Normalized Shepp-Logan head phantom on `[-1, 1]^2`.
pub fn shepp_logan_phantom(width: usize, height: usize, variant: PhantomVariant) -> Result<ImageDensity> {
    if width < 16 || height < 16 {
        return Err(Error::arg("resolution", "phantom needs at least 16x16 pixels"));
    }
    PhantomSpec::shepp_logan(width, height, variant).rasterize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_bright_corners_dark() {
        let p = shepp_logan_phantom(64, 64, PhantomVariant::Original).unwrap();
        assert!(p.at(32, 32) > 0.0);
        for (r, c) in [(0, 0), (0, 63), (63, 0), (63, 63)] {
            assert_eq!(p.at(r, c), 0.0);
        }
        assert!((p.pixels().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nearly_mirror_symmetric() {
        // the two inner dark ellipses differ in size, which only shows up
        // once their contrast is raised
        let p = shepp_logan_phantom(128, 128, PhantomVariant::Original).unwrap();
        let m = p.mirrored();
        let l1: f64 = p.pixels().iter().zip(m.pixels()).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 1e-2, "{l1}");
    }

    #[test]
    fn top_of_head_is_row_zero() {
        // the small ellipse at y0 = 0.35 lies in the upper half of the picture
        let spec = PhantomSpec::shepp_logan(64, 64, PhantomVariant::Modified);
        assert!(spec.intensity(0.0, 0.35) > spec.intensity(0.0, -0.35));
        let img = spec.rasterize().unwrap();
        // y = 0.35 in table coordinates maps to row (1 - 0.35) / 2 * 64 ~ 20
        assert!(img.at(20, 32) > img.at(43, 32));
    }

    #[test]
    fn rejects_tiny_resolution() {
        assert!(shepp_logan_phantom(8, 64, PhantomVariant::Original).is_err());
    }
}
