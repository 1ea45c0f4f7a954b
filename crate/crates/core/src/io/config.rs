//! `key = value` experiment configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::particle::ReplicateScheme;
use crate::problems::PhantomVariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Analytic,
    Mixture,
    Deblur,
    Pet,
    /// Cartesian sweep on the analytic problem.
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Smc,
    SmcExact,
    Em,
    EmsGaussian,
    Ems3Point,
    Ib,
    Rl,
}

impl Method {
    pub fn is_particle(self) -> bool {
        matches!(self, Method::Smc | Method::SmcExact)
    }
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($name:literal => $variant:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!(concat!("unknown ", $what, " `{}`; expected one of: {}"), s, [$($name),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(ExperimentKind, "experiment",
    "analytic" => ExperimentKind::Analytic,
    "mixture" => ExperimentKind::Mixture,
    "deblur" => ExperimentKind::Deblur,
    "pet" => ExperimentKind::Pet,
    "sweep" => ExperimentKind::Sweep,
);

keyword_enum!(Method, "method",
    "smc" => Method::Smc,
    "smc-exact" => Method::SmcExact,
    "em" => Method::Em,
    "ems-gaussian" => Method::EmsGaussian,
    "ems-3point" => Method::Ems3Point,
    "ib" => Method::Ib,
    "rl" => Method::Rl,
);

/// Starting distribution for particle runs.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Uniform,
    /// All particles at one point (1D problems).
    Dirac(f64),
    /// Draws from the true `f` (scoring experiments only).
    Truth,
}

impl FromStr for InitSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(InitSpec::Uniform),
            "truth" => Ok(InitSpec::Truth),
            _ => match s.strip_prefix("dirac:") {
                Some(v) => v
                    .parse()
                    .map(InitSpec::Dirac)
                    .map_err(|_| format!("bad Dirac location `{v}`")),
                None => Err(format!("unknown init `{s}`; expected uniform, truth or dirac:<x>")),
            },
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Uniform => f.write_str("uniform"),
            InitSpec::Truth => f.write_str("truth"),
            InitSpec::Dirac(x) => write!(f, "dirac:{x}"),
        }
    }
}

fn scheme_from_str(s: &str) -> std::result::Result<ReplicateScheme, String> {
    match s {
        "shared" => Ok(ReplicateScheme::Shared),
        "per-particle" => Ok(ReplicateScheme::PerParticle),
        _ => Err(format!("unknown replicate scheme `{s}`; expected shared or per-particle")),
    }
}

fn scheme_name(s: ReplicateScheme) -> &'static str {
    match s {
        ReplicateScheme::Shared => "shared",
        ReplicateScheme::PerParticle => "per-particle",
    }
}

fn phantom_from_str(s: &str) -> std::result::Result<PhantomVariant, String> {
    match s {
        "original" => Ok(PhantomVariant::Original),
        "modified" => Ok(PhantomVariant::Modified),
        _ => Err(format!("unknown phantom `{s}`; expected original or modified")),
    }
}

fn phantom_name(p: PhantomVariant) -> &'static str {
    match p {
        PhantomVariant::Original => "original",
        PhantomVariant::Modified => "modified",
    }
}

/// Every knob of a run. Field docs name the config key where it differs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub method: Method,
    /// `N`
    pub n_particles: usize,
    /// `M`
    pub n_replicates: usize,
    /// `B`
    pub bins_x: usize,
    /// `D`
    pub bins_y: usize,
    pub n_iterations: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub replicates: usize,
    pub output_dir: PathBuf,
    pub emit_per_iteration: bool,
    pub resample_threshold: f64,
    pub replicate_scheme: ReplicateScheme,
    pub init: InitSpec,
    pub average_last: usize,
    pub block_size: usize,
    pub mu: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
    /// Sample size behind the Iterative Bayes KDE.
    pub n_observations: usize,
    pub density_nodes: usize,
    pub width: usize,
    pub height: usize,
    /// Blur length in pixels.
    pub blur_length: f64,
    pub blur_sigma: f64,
    pub noise_level: f64,
    /// Optional PGM file with the sharp image; a synthetic scene otherwise.
    pub image: Option<PathBuf>,
    pub phantom: PhantomVariant,
    pub n_angles: usize,
    pub n_offsets: usize,
    /// Half-range of offsets in pixels.
    pub offset_range: f64,
    pub pet_sigma: f64,
    pub total_counts: u64,
    pub sweep_n: Vec<usize>,
    pub sweep_m: Vec<usize>,
    pub sweep_epsilon: Vec<f64>,
    /// Iterations at which density snapshots are written (empty: all).
    pub snapshot_iterations: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Analytic,
            method: Method::Smc,
            n_particles: 1000,
            n_replicates: 1000,
            bins_x: 100,
            bins_y: 100,
            n_iterations: 100,
            epsilon: 1e-3,
            seed: 1,
            replicates: 1,
            output_dir: PathBuf::from("out"),
            emit_per_iteration: false,
            resample_threshold: 0.5,
            replicate_scheme: ReplicateScheme::Shared,
            init: InitSpec::Uniform,
            average_last: 1,
            block_size: 64,
            mu: 0.5,
            sigma_f: 0.043,
            sigma_g: 0.045,
            n_observations: 1000,
            density_nodes: 1000,
            width: 150,
            height: 75,
            blur_length: 32.0,
            blur_sigma: 0.02,
            noise_level: 0.005,
            image: None,
            phantom: PhantomVariant::Original,
            n_angles: 64,
            n_offsets: 95,
            offset_range: 47.0,
            pet_sigma: 0.02,
            total_counts: 100_000,
            sweep_n: Vec::new(),
            sweep_m: Vec::new(),
            sweep_epsilon: Vec::new(),
            snapshot_iterations: Vec::new(),
        }
    }
}

/// Recognized keys with a one-line description, in manifest order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("experiment", "analytic, mixture, deblur, pet or sweep"),
    ("method", "smc, smc-exact, em, ems-gaussian, ems-3point, ib or rl"),
    ("N", "number of particles"),
    ("M", "replicate draws from h per iteration (default N)"),
    ("B", "solution bins for grid methods"),
    ("D", "data bins for grid methods"),
    ("n_iterations", "iterations per run"),
    ("epsilon", "smoothing width"),
    ("seed", "base seed; replicate r uses the stream (seed, r)"),
    ("replicates", "independent repetitions"),
    ("output_dir", "directory for artifacts"),
    ("emit_per_iteration", "write density snapshots per iteration"),
    ("resample_threshold", "resample when ESS < threshold * N"),
    ("replicate_scheme", "shared or per-particle"),
    ("init", "uniform, truth or dirac:<x>"),
    ("average_last", "average the estimates of the last k iterations"),
    ("block_size", "particles per reduction block"),
    ("mu", "analytic problem: mean of f"),
    ("sigma_f", "analytic problem: sd of f"),
    ("sigma_g", "analytic problem: sd of g"),
    ("n_observations", "samples behind the Iterative Bayes KDE"),
    ("density_nodes", "grid points for exported 1D densities"),
    ("width", "image width in pixels"),
    ("height", "image height in pixels"),
    ("blur_length", "motion blur length in pixels"),
    ("blur_sigma", "vertical blur sd in domain units"),
    ("noise_level", "multiplicative noise level"),
    ("image", "sharp image (PGM); synthetic scene if empty"),
    ("phantom", "original or modified"),
    ("n_angles", "PET projection angles"),
    ("n_offsets", "PET offsets per angle"),
    ("offset_range", "PET offset half-range in pixels"),
    ("pet_sigma", "PET alignment sd in domain units"),
    ("total_counts", "expected PET counts"),
    ("sweep_N", "comma list of N values"),
    ("sweep_M", "comma list of M values"),
    ("sweep_epsilon", "comma list of epsilon values"),
    ("snapshot_iterations", "comma list of iterations to snapshot (empty: all)"),
];

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn word<T>(key: &str, r: std::result::Result<T, String>) -> Result<T> {
    r.map_err(|e| bad(key, e))
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, format!("cannot parse `{value}` as {}", std::any::type_name::<T>())))
}

fn parse_positive(key: &str, value: &str) -> Result<usize> {
    let v: i64 = parse_num(key, value)?;
    if v <= 0 {
        return Err(bad(key, format!("must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got `{value}`"))),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Assign one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => self.experiment = word(key, v.parse())?,
            "method" => self.method = word(key, v.parse())?,
            "N" => self.n_particles = parse_positive(key, v)?,
            "M" => self.n_replicates = parse_positive(key, v)?,
            "B" => self.bins_x = parse_positive(key, v)?,
            "D" => self.bins_y = parse_positive(key, v)?,
            "n_iterations" => self.n_iterations = parse_positive(key, v)?,
            "epsilon" => {
                let e: f64 = parse_num(key, v)?;
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(bad(key, format!("must be finite and nonnegative, got {e}")));
                }
                self.epsilon = e;
            }
            "seed" => self.seed = parse_num(key, v)?,
            "replicates" => self.replicates = parse_positive(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "emit_per_iteration" => self.emit_per_iteration = parse_bool(key, v)?,
            "resample_threshold" => {
                let t: f64 = parse_num(key, v)?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(bad(key, "must lie in [0, 1]"));
                }
                self.resample_threshold = t;
            }
            "replicate_scheme" => self.replicate_scheme = word(key, scheme_from_str(v))?,
            "init" => self.init = word(key, v.parse())?,
            "average_last" => self.average_last = parse_positive(key, v)?,
            "block_size" => self.block_size = parse_positive(key, v)?,
            "mu" => self.mu = parse_num(key, v)?,
            "sigma_f" => self.sigma_f = parse_num(key, v)?,
            "sigma_g" => self.sigma_g = parse_num(key, v)?,
            "n_observations" => self.n_observations = parse_positive(key, v)?,
            "density_nodes" => self.density_nodes = parse_positive(key, v)?,
            "width" => self.width = parse_positive(key, v)?,
            "height" => self.height = parse_positive(key, v)?,
            "blur_length" => self.blur_length = parse_num(key, v)?,
            "blur_sigma" => self.blur_sigma = parse_num(key, v)?,
            "noise_level" => self.noise_level = parse_num(key, v)?,
            "image" => self.image = (!v.is_empty()).then(|| PathBuf::from(v)),
            "phantom" => self.phantom = word(key, phantom_from_str(v))?,
            "n_angles" => self.n_angles = parse_positive(key, v)?,
            "n_offsets" => self.n_offsets = parse_positive(key, v)?,
            "offset_range" => self.offset_range = parse_num(key, v)?,
            "pet_sigma" => self.pet_sigma = parse_num(key, v)?,
            "total_counts" => self.total_counts = parse_positive(key, v)? as u64,
            "sweep_N" => self.sweep_n = parse_list(key, v)?,
            "sweep_M" => self.sweep_m = parse_list(key, v)?,
            "sweep_epsilon" => self.sweep_epsilon = parse_list(key, v)?,
            "snapshot_iterations" => self.snapshot_iterations = parse_list(key, v)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Fully resolved `(key, value)` pairs in [`CONFIG_KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        CONFIG_KEYS
            .iter()
            .map(|&(k, _)| {
                let v = match k {
                    "experiment" => self.experiment.to_string(),
                    "method" => self.method.to_string(),
                    "N" => self.n_particles.to_string(),
                    "M" => self.n_replicates.to_string(),
                    "B" => self.bins_x.to_string(),
                    "D" => self.bins_y.to_string(),
                    "n_iterations" => self.n_iterations.to_string(),
                    "epsilon" => self.epsilon.to_string(),
                    "seed" => self.seed.to_string(),
                    "replicates" => self.replicates.to_string(),
                    "output_dir" => self.output_dir.display().to_string(),
                    "emit_per_iteration" => self.emit_per_iteration.to_string(),
                    "resample_threshold" => self.resample_threshold.to_string(),
                    "replicate_scheme" => scheme_name(self.replicate_scheme).to_string(),
                    "init" => self.init.to_string(),
                    "average_last" => self.average_last.to_string(),
                    "block_size" => self.block_size.to_string(),
                    "mu" => self.mu.to_string(),
                    "sigma_f" => self.sigma_f.to_string(),
                    "sigma_g" => self.sigma_g.to_string(),
                    "n_observations" => self.n_observations.to_string(),
                    "density_nodes" => self.density_nodes.to_string(),
                    "width" => self.width.to_string(),
                    "height" => self.height.to_string(),
                    "blur_length" => self.blur_length.to_string(),
                    "blur_sigma" => self.blur_sigma.to_string(),
                    "noise_level" => self.noise_level.to_string(),
                    "image" => self.image.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                    "phantom" => phantom_name(self.phantom).to_string(),
                    "n_angles" => self.n_angles.to_string(),
                    "n_offsets" => self.n_offsets.to_string(),
                    "offset_range" => self.offset_range.to_string(),
                    "pet_sigma" => self.pet_sigma.to_string(),
                    "total_counts" => self.total_counts.to_string(),
                    "sweep_N" => join(&self.sweep_n),
                    "sweep_M" => join(&self.sweep_m),
                    "sweep_epsilon" => join(&self.sweep_epsilon),
                    "snapshot_iterations" => join(&self.snapshot_iterations),
                    _ => unreachable!("key table and entries disagree"),
                };
                (k, v)
            })
            .collect()
    }

    /// The resolved config as config-file text.
    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("sigma_f", self.sigma_f),
            ("sigma_g", self.sigma_g),
            ("blur_length", self.blur_length),
            ("blur_sigma", self.blur_sigma),
            ("pet_sigma", self.pet_sigma),
            ("offset_range", self.offset_range),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(bad(key, "must be positive"));
            }
        }
        if !(self.noise_level >= 0.0) {
            return Err(bad("noise_level", "must be nonnegative"));
        }
        if self.sweep_n.contains(&0) {
            return Err(bad("sweep_N", "values must be positive"));
        }
        if self.sweep_m.contains(&0) {
            return Err(bad("sweep_M", "values must be positive"));
        }
        if self.sweep_epsilon.iter().any(|e| !(*e >= 0.0)) {
            return Err(bad("sweep_epsilon", "values must be nonnegative"));
        }
        Ok(())
    }
}

/// Split config text into `(key, value)` pairs. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Apply layers of pairs in order (later wins) and fill defaults.
/// `experiment` and `method` are required, and `N` for particle methods
/// unless a sweep supplies it.
/// `M` defaults to `N`.
pub fn resolve_config(layers: &[&[(String, String)]]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = BTreeSet::new();
    for layer in layers {
        for (k, v) in layer.iter() {
            cfg.set(k, v)?;
            seen.insert(k.as_str());
        }
    }
    for key in ["experiment", "method"] {
        if !seen.contains(key) {
            return Err(bad(key, "required key is missing"));
        }
    }
    if cfg.method.is_particle() && !seen.contains("N") && cfg.experiment != ExperimentKind::Sweep && cfg.sweep_n.is_empty() {
        return Err(bad("N", "required for particle methods"));
    }
    if !seen.contains("M") {
        cfg.n_replicates = cfg.n_particles;
    }
    cfg.check()?;
    Ok(cfg)
}

/// Read an optional config file and apply flag overrides on top.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let base = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    resolve_config(&[&base, overrides])
}
