//! Problem model: box domains, forward kernels, data sources, the smoothing
//! kernel and the transform that turns a positive-kernel equation into the
//! probability-density form the solvers expect.

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::{normal_interval_mass, trapezoid_grid};

/// Maximum rejection attempts before a truncated draw is abandoned.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Axis-aligned bounded box.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Domain { lower, upper })
    }

    /// `[lo, hi]` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Domain::new(vec![lo], vec![hi])
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Domain::new(vec![0.0; dim], vec![1.0; dim]).expect("unit box is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn sample_uniform(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.lower[k] + self.width(k) * rng.random::<f64>();
        }
    }

    /// Tensor-product trapezoid nodes with `nodes` points per axis.
    pub fn quadrature(&self, nodes: usize) -> (Points, Vec<f64>) {
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..self.dim())
            .map(|k| trapezoid_grid(self.lower[k], self.upper[k], nodes))
            .collect();
        let total: usize = axes.iter().map(|a| a.0.len()).product();
        let mut pts = Points::with_capacity(self.dim(), total);
        let mut ws = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        let mut p = vec![0.0; self.dim()];
        for _ in 0..total {
            let mut w = 1.0;
            for k in 0..self.dim() {
                p[k] = axes[k].0[idx[k]];
                w *= axes[k].1[idx[k]];
            }
            pts.push(&p);
            ws.push(w);
            for k in 0..self.dim() {
                idx[k] += 1;
                if idx[k] < nodes {
                    break;
                }
                idx[k] = 0;
            }
        }
        (pts, ws)
    }
}

/// A set of points of common dimension stored contiguously.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Points { dim, data }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Points {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_scalars(xs: Vec<f64>) -> Self {
        Points { dim: 1, data: xs }
    }

    pub fn filled(dim: usize, n: usize, p: &[f64]) -> Self {
        assert_eq!(p.len(), dim);
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            data.extend_from_slice(p);
        }
        Points { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        self.data.extend_from_slice(p);
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// Flat coordinate storage, point-major.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Coordinates of one axis, copied out.
    pub fn axis(&self, k: usize) -> Vec<f64> {
        self.iter().map(|p| p[k]).collect()
    }

    pub fn gather(&self, indices: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.push(self.get(i));
        }
        out
    }
}

/// Declared (A1)-style bounds `lower <= g(y|x) <= upper` for a kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelBounds {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl KernelBounds {
    pub const UNKNOWN: KernelBounds = KernelBounds {
        lower: 0.0,
        upper: None,
    };

    /// The `m_g` constant when both bounds are finite and nondegenerate:
    /// the smallest `m` with `1/m <= g <= m`.
    pub fn mixing_constant(&self) -> Option<f64> {
        match self.upper {
            Some(hi) if self.lower > 0.0 => Some(hi.max(1.0 / self.lower)),
            _ => None,
        }
    }
}

/// Density `g(y | x)` of a Markov kernel from the solution space to the data
/// space.
pub trait ForwardKernel: Send + Sync {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;

    /// `g(y | x)`.
    fn density(&self, y: &[f64], x: &[f64]) -> f64;

    /// `out[i] = g(y | xs[i])`. Kernels override this with a vectorized loop.
    fn density_over(&self, y: &[f64], xs: &Points, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(xs.iter()) {
            *o = self.density(y, x);
        }
    }

    fn bounds(&self) -> KernelBounds {
        KernelBounds::UNKNOWN
    }

    /// Probability that `Y` lands in `cell` given `x`. The default is a
    /// midpoint rule on a 4-per-axis subgrid.
    fn cell_mass(&self, x: &[f64], cell: &Domain) -> f64 {
        const SUB: usize = 4;
        let d = cell.dim();
        let total = SUB.pow(d as u32);
        let mut y = vec![0.0; d];
        let mut s = 0.0;
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..d {
                let i = rem % SUB;
                rem /= SUB;
                y[k] = cell.lower()[k] + cell.width(k) * (i as f64 + 0.5) / SUB as f64;
            }
            s += self.density(&y, x);
        }
        s * cell.volume() / total as f64
    }
}

impl fmt::Debug for dyn ForwardKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ForwardKernel({} -> {})", self.x_dim(), self.y_dim())
    }
}

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSourceKind {
    /// Fresh draws from a known law.
    ExactSampler,
    /// Draws with replacement from a stored sample or a discretized image.
    EmpiricalBootstrap,
    /// Inverse-CDF draws from a density tabulated on a grid.
    Tabulated,
}

/// Categorical choice over the cells of a rectangular grid followed by
/// uniform jitter inside the chosen cell. Axis 0 varies fastest.
#[derive(Clone, Debug)]
pub struct CellSampler {
    edges: Vec<Vec<f64>>,
    index: WeightedIndex<f64>,
    masses: Vec<f64>,
}

impl CellSampler {
    pub fn new(edges: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        let cells: usize = edges.iter().map(|e| e.len().saturating_sub(1)).product();
        if cells != masses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} cells but {} masses",
                cells,
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::arg("masses", "must be finite and nonnegative"));
        }
        let index = WeightedIndex::new(&masses).map_err(|_| Error::EmptyData)?;
        let total: f64 = masses.iter().sum();
        let masses = masses.iter().map(|m| m / total).collect();
        Ok(CellSampler {
            edges,
            index,
            masses,
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    pub fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let mut cell = self.index.sample(rng);
        for (k, o) in out.iter_mut().enumerate() {
            let n = self.edges[k].len() - 1;
            let i = cell % n;
            cell /= n;
            let (lo, hi) = (self.edges[k][i], self.edges[k][i + 1]);
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
    }
}

#[derive(Clone)]
enum Sampler {
    Exact(SamplerFn),
    Empirical(Points),
    Cells(CellSampler),
}

/// Source of draws from the data density `h`.
#[derive(Clone)]
pub struct DataSource {
    kind: DataSourceKind,
    support: Domain,
    density: Option<DensityFn>,
    sampler: Sampler,
}

impl fmt::Debug for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataSource")
            .field("kind", &self.kind)
            .field("support", &self.support)
            .field("has_density", &self.density.is_some())
            .finish()
    }
}

impl DataSource {
    /// Exact draws; values falling outside `support` are redrawn.
    pub fn exact(support: Domain, sampler: SamplerFn, density: Option<DensityFn>) -> Self {
        DataSource {
            kind: DataSourceKind::ExactSampler,
            support,
            density,
            sampler: Sampler::Exact(sampler),
        }
    }

    /// Bootstrap from a fixed sample. Points outside `support` are rejected.
    pub fn empirical(support: Domain, samples: Points) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyData);
        }
        if samples.dim() != support.dim() {
            return Err(Error::DimensionMismatch(format!(
                "samples have dimension {}, support {}",
                samples.dim(),
                support.dim()
            )));
        }
        if let Some(p) = samples.iter().find(|p| !support.contains(p)) {
            return Err(Error::arg("samples", format!("{p:?} lies outside the support")));
        }
        Ok(DataSource {
            kind: DataSourceKind::EmpiricalBootstrap,
            support,
            density: None,
            sampler: Sampler::Empirical(samples),
        })
    }

    /// Draws from a discretized distribution over grid cells. `kind` is the
    /// label the caller wants to report.
    pub fn cells(support: Domain, cells: CellSampler, kind: DataSourceKind) -> Self {
        DataSource {
            kind,
            support,
            density: None,
            sampler: Sampler::Cells(cells),
        }
    }

    pub fn with_density(mut self, density: DensityFn) -> Self {
        self.density = Some(density);
        self
    }

    pub fn kind(&self) -> DataSourceKind {
        self.kind
    }

    pub fn support(&self) -> &Domain {
        &self.support
    }

    pub fn density(&self) -> Option<&DensityFn> {
        self.density.as_ref()
    }

    pub fn samples(&self) -> Option<&Points> {
        match &self.sampler {
            Sampler::Empirical(p) => Some(p),
            _ => None,
        }
    }

    pub fn cell_sampler(&self) -> Option<&CellSampler> {
        match &self.sampler {
            Sampler::Cells(c) => Some(c),
            _ => None,
        }
    }

    pub fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        match &self.sampler {
            Sampler::Exact(f) => {
                for _ in 0..MAX_REJECTIONS {
                    f(rng, out);
                    if self.support.contains(out) {
                        return Ok(());
                    }
                }
                Err(Error::RejectionExhausted {
                    attempts: MAX_REJECTIONS,
                    epsilon: f64::NAN,
                })
            }
            Sampler::Empirical(pts) => {
                let i = rng.random_range(0..pts.len());
                out.copy_from_slice(pts.get(i));
                Ok(())
            }
            Sampler::Cells(c) => {
                c.sample(rng, out);
                Ok(())
            }
        }
    }

    pub fn sample_n(&self, rng: &mut dyn RngCore, n: usize) -> Result<Points> {
        let d = self.support.dim();
        let mut out = Points::new(d, vec![0.0; n * d]);
        for i in 0..n {
            self.sample_into(rng, out.get_mut(i))?;
        }
        Ok(out)
    }
}

/// Truncated isotropic Gaussian smoothing kernel
/// `K(v, u) = T(u - v) 1_X(u) / Z(v)` with `T = N(0, eps^2 I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingKernel {
    epsilon: f64,
    domain: Domain,
}

impl SmoothingKernel {
    pub fn new(epsilon: f64, domain: Domain) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::arg("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(SmoothingKernel { epsilon, domain })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `Z(v) = prod_k P(lower_k <= v_k + eps Z <= upper_k)`.
    pub fn normalizer(&self, v: &[f64]) -> f64 {
        (0..self.domain.dim())
            .map(|k| {
                normal_interval_mass(self.domain.lower()[k], self.domain.upper()[k], v[k], self.epsilon)
            })
            .product()
    }

    pub fn density(&self, v: &[f64], u: &[f64]) -> f64 {
        if !self.domain.contains(u) {
            return 0.0;
        }
        let d = self.domain.dim();
        let e2 = self.epsilon * self.epsilon;
        let r2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        let t = (-0.5 * r2 / e2).exp() / (2.0 * std::f64::consts::PI * e2).powf(0.5 * d as f64);
        t / self.normalizer(v)
    }

    /// Draw `u ~ K(v, .)` into `out`. The box makes the truncated law a product
    /// over axes, so each axis is rejected independently.
    pub fn sample(&self, v: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        for k in 0..self.domain.dim() {
            let (lo, hi) = (self.domain.lower()[k], self.domain.upper()[k]);
            let mut accepted = false;
            for _ in 0..MAX_REJECTIONS {
                let z: f64 = rng.sample(StandardNormal);
                let u = v[k] + self.epsilon * z;
                if u >= lo && u <= hi {
                    out[k] = u;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::RejectionExhausted {
                    attempts: MAX_REJECTIONS,
                    epsilon: self.epsilon,
                });
            }
        }
        Ok(())
    }
}

/// One instance of `h(y) = int f(x) g(y | x) dx`.
#[derive(Clone)]
pub struct FredholmProblem {
    pub x_domain: Domain,
    pub y_domain: Domain,
    pub kernel: Arc<dyn ForwardKernel>,
    pub data: DataSource,
    /// Ground-truth `f`, used for scoring only.
    pub truth: Option<DensityFn>,
}

impl fmt::Debug for FredholmProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FredholmProblem")
            .field("x_domain", &self.x_domain)
            .field("y_domain", &self.y_domain)
            .field("data", &self.data)
            .field("has_truth", &self.truth.is_some())
            .finish()
    }
}

impl FredholmProblem {
    pub fn new(
        x_domain: Domain,
        y_domain: Domain,
        kernel: Arc<dyn ForwardKernel>,
        data: DataSource,
        truth: Option<DensityFn>,
    ) -> Result<Self> {
        if kernel.x_dim() != x_domain.dim() || kernel.y_dim() != y_domain.dim() {
            return Err(Error::DimensionMismatch(format!(
                "kernel maps {} -> {} but domains are {} -> {}",
                kernel.x_dim(),
                kernel.y_dim(),
                x_domain.dim(),
                y_domain.dim()
            )));
        }
        if data.support() != &y_domain {
            return Err(Error::DimensionMismatch(
                "data support differs from the data domain".into(),
            ));
        }
        Ok(FredholmProblem {
            x_domain,
            y_domain,
            kernel,
            data,
            truth,
        })
    }

    pub fn with_data(mut self, data: DataSource) -> Result<Self> {
        if data.support() != &self.y_domain {
            return Err(Error::DimensionMismatch(
                "data support differs from the data domain".into(),
            ));
        }
        self.data = data;
        Ok(self)
    }
}

pub type RawKernelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// `g(y|x) / int_Y g(y'|x) dy'` with the normalizer computed by quadrature.
struct NormalizedKernel {
    raw: RawKernelFn,
    nodes: Points,
    weights: Vec<f64>,
    x_dim: usize,
}

impl NormalizedKernel {
    fn mass(&self, x: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| w * (self.raw)(y, x))
            .sum()
    }
}

impl ForwardKernel for NormalizedKernel {
    fn x_dim(&self) -> usize {
        self.x_dim
    }

    fn y_dim(&self) -> usize {
        self.nodes.dim()
    }

    fn density(&self, y: &[f64], x: &[f64]) -> f64 {
        (self.raw)(y, x) / self.mass(x)
    }
}

/// Maps a solution of the normalized equation back to the original scale:
/// `f(x) = f~(x) * int h / int_Y g(y'|x) dy'`.
#[derive(Clone)]
pub struct Unnormalizer {
    raw: RawKernelFn,
    nodes: Points,
    weights: Vec<f64>,
    h_mass: f64,
}

impl fmt::Debug for Unnormalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Unnormalizer").field("h_mass", &self.h_mass).finish()
    }
}

impl Unnormalizer {
    pub fn factor(&self, x: &[f64]) -> f64 {
        let gm: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| w * (self.raw)(y, x))
            .sum();
        self.h_mass / gm
    }

    pub fn data_mass(&self) -> f64 {
        self.h_mass
    }
}

/// Recast a positive-kernel equation as one between probability densities.
///
/// Positivity is checked at every quadrature node (and at a probe grid in
/// `x` for the kernel); shifting a signed problem to make it positive is left
/// to the caller.
pub fn normalize_problem(
    h_raw: DensityFn,
    g_raw: RawKernelFn,
    x_domain: Domain,
    y_domain: Domain,
    quadrature_nodes: usize,
) -> Result<(FredholmProblem, Unnormalizer)> {
    if quadrature_nodes < 16 {
        return Err(Error::arg("quadrature_nodes", "need at least 16 per axis"));
    }
    let (nodes, weights) = y_domain.quadrature(quadrature_nodes);
    let mut h_mass = 0.0;
    for (y, w) in nodes.iter().zip(&weights) {
        let v = h_raw(y);
        if !(v > 0.0) {
            return Err(Error::Normalization(format!("h is {v} at quadrature node {y:?}")));
        }
        h_mass += w * v;
    }
    if !h_mass.is_finite() {
        return Err(Error::Normalization("integral of h is not finite".into()));
    }
    let (x_probe, _) = x_domain.quadrature(quadrature_nodes.min(16));
    for x in x_probe.iter() {
        let mut mass = 0.0;
        for (y, w) in nodes.iter().zip(&weights) {
            let v = g_raw(y, x);
            if !(v > 0.0) {
                return Err(Error::Normalization(format!(
                    "g(y|x) is {v} at y = {y:?}, x = {x:?}"
                )));
            }
            mass += w * v;
        }
        if !mass.is_finite() {
            return Err(Error::Normalization(format!("integral of g(.|{x:?}) is not finite")));
        }
    }

    let kernel = NormalizedKernel {
        raw: g_raw.clone(),
        nodes: nodes.clone(),
        weights: weights.clone(),
        x_dim: x_domain.dim(),
    };

    // tabulated sampler: cells between quadrature nodes, mass by the midpoint
    let edges: Vec<Vec<f64>> = (0..y_domain.dim())
        .map(|k| trapezoid_grid(y_domain.lower()[k], y_domain.upper()[k], quadrature_nodes).0)
        .collect();
    let cells = grid_cells(&edges);
    let masses: Vec<f64> = cells
        .iter()
        .map(|c| h_raw(&c.center()) * c.volume())
        .collect();
    let sampler = CellSampler::new(edges, masses)?;
    let h_density: DensityFn = {
        let h = h_raw.clone();
        Arc::new(move |y: &[f64]| h(y) / h_mass)
    };
    let data = DataSource::cells(y_domain.clone(), sampler, DataSourceKind::Tabulated)
        .with_density(h_density);
    let problem = FredholmProblem::new(x_domain, y_domain, Arc::new(kernel), data, None)?;
    let unnormalizer = Unnormalizer {
        raw: g_raw,
        nodes,
        weights,
        h_mass,
    };
    Ok((problem, unnormalizer))
}

/// Cells of a rectangular grid in flat order (axis 0 fastest).
pub fn grid_cells(edges: &[Vec<f64>]) -> Vec<Domain> {
    let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut lo = Vec::with_capacity(edges.len());
            let mut hi = Vec::with_capacity(edges.len());
            for (k, e) in edges.iter().enumerate() {
                let i = rem % counts[k];
                rem /= counts[k];
                lo.push(e[i]);
                hi.push(e[i + 1]);
            }
            Domain::new(lo, hi).expect("grid edges are increasing")
        })
        .collect()
}
