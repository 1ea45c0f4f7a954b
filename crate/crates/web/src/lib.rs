//! Browser bindings: an analytic SMC run, a motion-deblurring run and the
//! Shepp-Logan phantom, each returning plain arrays for a canvas.

use wasm_bindgen::prelude::*;

use fredholm::analytic::{ems_fixed_point_variance, AnalyticGaussianSpec};
use fredholm::experiment::{fit, prepare, score, Fitted, RunSize};
use fredholm::io::ExperimentConfig;
use fredholm::numeric::trapezoid_grid;
use fredholm::problems::{shepp_logan_phantom, PhantomVariant};

const MU: f64 = 0.5;
const SIGMA_F: f64 = 0.043;
const SIGMA_G: f64 = 0.045;
const CURVE_POINTS: usize = 400;

fn config(pairs: &[(&str, String)]) -> fredholm::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in pairs {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

#[wasm_bindgen]
pub struct AnalyticDemo {
    xs: Vec<f64>,
    estimate: Vec<f64>,
    truth: Vec<f64>,
    ess: Vec<f64>,
    variance: f64,
    fixed_point_variance: f64,
    ise: f64,
}

#[wasm_bindgen]
impl AnalyticDemo {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn estimate(&self) -> Vec<f64> {
        self.estimate.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    /// ESS / N per iteration.
    #[wasm_bindgen(getter)]
    pub fn ess(&self) -> Vec<f64> {
        self.ess.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn variance(&self) -> f64 {
        self.variance
    }

    #[wasm_bindgen(getter = fixedPointVariance)]
    pub fn fixed_point_variance(&self) -> f64 {
        self.fixed_point_variance
    }

    #[wasm_bindgen(getter)]
    pub fn ise(&self) -> f64 {
        self.ise
    }
}

fn analytic(n_particles: usize, epsilon: f64, iterations: usize, seed: u32) -> fredholm::Result<AnalyticDemo> {
    let cfg = config(&[
        ("experiment", "analytic".into()),
        ("method", "smc".into()),
        ("N", n_particles.to_string()),
        ("M", n_particles.to_string()),
        ("epsilon", epsilon.to_string()),
        ("n_iterations", iterations.to_string()),
        ("seed", seed.to_string()),
    ])?;
    let prepared = prepare(&cfg)?;
    let (fitted, trace, _) = fit(&cfg, &prepared, RunSize::of(&cfg), 0)?;
    let report = score(&cfg, &prepared, &fitted)?;
    let (xs, _) = trapezoid_grid(0.0, 1.0, CURVE_POINTS);
    let truth = prepared.problem.truth.as_ref().expect("analytic truth");
    let spec = AnalyticGaussianSpec::new(MU, SIGMA_F, SIGMA_G, epsilon)?;
    Ok(AnalyticDemo {
        estimate: fitted.values_1d(&xs),
        truth: xs.iter().map(|x| truth(&[*x])).collect(),
        xs,
        ess: trace.iter().map(|t| t.ess_fraction).collect(),
        variance: report.var_est,
        fixed_point_variance: ems_fixed_point_variance(&spec)?,
        ise: report.ise_f,
    })
}

/// SMC on `f = N(0.5, 0.043^2)` blurred by `N(0, 0.045^2)`.
#[wasm_bindgen(js_name = runAnalytic)]
pub fn run_analytic(n_particles: usize, epsilon: f64, iterations: usize, seed: u32) -> Result<AnalyticDemo, JsError> {
    analytic(n_particles, epsilon, iterations, seed).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct ImageDemo {
    width: usize,
    height: usize,
    truth: Vec<f64>,
    data: Vec<f64>,
    estimate: Vec<f64>,
    ise: f64,
    match_distance: f64,
}

#[wasm_bindgen]
impl ImageDemo {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel masses.
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn estimate(&self) -> Vec<f64> {
        self.estimate.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ise(&self) -> f64 {
        self.ise
    }

    #[wasm_bindgen(getter = matchDistance)]
    pub fn match_distance(&self) -> f64 {
        self.match_distance
    }
}

fn deblur(method: &str, blur_length: f64, n_particles: usize, iterations: usize, seed: u32) -> fredholm::Result<ImageDemo> {
    let cfg = config(&[
        ("experiment", "deblur".into()),
        ("method", method.into()),
        ("N", n_particles.to_string()),
        ("M", n_particles.to_string()),
        ("width", "96".into()),
        ("height", "48".into()),
        ("blur_length", blur_length.to_string()),
        ("n_iterations", iterations.to_string()),
        ("seed", seed.to_string()),
    ])?;
    let prepared = prepare(&cfg)?;
    let (fitted, _, _) = fit(&cfg, &prepared, RunSize::of(&cfg), 0)?;
    let report = score(&cfg, &prepared, &fitted)?;
    let truth = prepared.truth_image.as_ref().expect("deblur truth");
    let data = prepared.data_image.as_ref().expect("deblur data");
    let estimate = match &fitted {
        Fitted::Grid(g) => g.f.clone(),
        Fitted::Particle(e) => e.cell_masses(&truth.edges()),
    };
    Ok(ImageDemo {
        width: truth.width(),
        height: truth.height(),
        truth: truth.pixels().to_vec(),
        data: data.pixels().to_vec(),
        estimate,
        ise: report.ise_f,
        match_distance: report.match_distance.unwrap_or(f64::NAN),
    })
}

/// Motion-blur a synthetic 96x48 scene and reconstruct it with `method`
/// (`smc`, `rl`, `em`, `ems-gaussian`, `ems-3point`).
#[wasm_bindgen(js_name = runDeblur)]
pub fn run_deblur(
    method: &str,
    blur_length: f64,
    n_particles: usize,
    iterations: usize,
    seed: u32,
) -> Result<ImageDemo, JsError> {
    deblur(method, blur_length, n_particles, iterations, seed).map_err(|e| JsError::new(&e.to_string()))
}

fn phantom_pixels(size: usize, modified: bool) -> fredholm::Result<Vec<f64>> {
    let variant = if modified { PhantomVariant::Modified } else { PhantomVariant::Original };
    Ok(shepp_logan_phantom(size, size, variant)?.into_pixels())
}

/// Row-major `size x size` phantom, normalized to unit mass.
#[wasm_bindgen]
pub fn phantom(size: usize, modified: bool) -> Result<Vec<f64>, JsError> {
    phantom_pixels(size, modified).map_err(|e| JsError::new(&e.to_string()))
}
