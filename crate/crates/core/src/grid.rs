//! Deterministic baselines on a bin grid: EM (Richardson-Lucy), EM with a
//! smoothing matrix, and Iterative Bayes.
//!
//! All vectors hold bin masses that sum to one. The transfer matrix row `b`
//! is the probability of each data bin given solution bin `b`, renormalized
//! over the data grid.

use crate::domain::{grid_cells, Domain, FredholmProblem, Points};
use crate::error::{Error, Result};
use crate::numeric::{normal_interval_mass, simpson, sum_fixed};
use crate::particle::silverman_factor;

/// Equally spaced edges of `bins` cells on every axis of `domain`.
pub fn uniform_edges(domain: &Domain, bins: &[usize]) -> Result<Vec<Vec<f64>>> {
    if bins.len() != domain.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} bin counts for a {}-dimensional domain",
            bins.len(),
            domain.dim()
        )));
    }
    bins.iter()
        .enumerate()
        .map(|(k, &n)| {
            if n < 2 {
                return Err(Error::arg("bins", "need at least 2 bins per axis"));
            }
            let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
            Ok((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
        })
        .collect()
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn normalize_rows(&mut self) -> Result<()> {
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let s = sum_fixed(row);
            if !(s > 0.0) {
                return Err(Error::Normalization(format!("row {r} has no mass on the grid")));
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(())
    }

    /// `out[c] = sum_r v[r] M[r, c]`.
    fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(r)) {
                *o += vr * m;
            }
        }
        out
    }

    /// `out[r] = sum_c M[r, c] v[c]`.
    fn right_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(m, x)| m * x).sum())
            .collect()
    }
}

/// Transfer operator from solution bins to data bins.
#[derive(Clone, Debug, PartialEq)]
pub enum Transfer {
    Dense(Matrix),
    /// Two-axis Kronecker product; flat index is `i0 + n0 * i1`.
    Separable([Matrix; 2]),
}

impl Transfer {
    /// `pred[d] = sum_b f[b] g[b, d]`.
    fn forward(&self, f: &[f64]) -> Vec<f64> {
        match self {
            Transfer::Dense(m) => m.left_mul(f),
            Transfer::Separable([a0, a1]) => {
                // F is (n1 rows) x (n0 cols); pred = A1^T F A0
                let (b0, b1) = (a0.rows, a1.rows);
                let (d0, d1) = (a0.cols, a1.cols);
                let mut tmp = vec![0.0; b1 * d0];
                for r in 0..b1 {
                    let row = a0.left_mul(&f[r * b0..(r + 1) * b0]);
                    tmp[r * d0..(r + 1) * d0].copy_from_slice(&row);
                }
                let mut out = vec![0.0; d1 * d0];
                for r in 0..b1 {
                    for (j1, &w) in a1.row(r).iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let dst = &mut out[j1 * d0..(j1 + 1) * d0];
                        for (o, t) in dst.iter_mut().zip(&tmp[r * d0..(r + 1) * d0]) {
                            *o += w * t;
                        }
                    }
                }
                out
            }
        }
    }

    /// `back[b] = sum_d g[b, d] ratio[d]`.
    fn backward(&self, ratio: &[f64]) -> Vec<f64> {
        match self {
            Transfer::Dense(m) => m.right_mul(ratio),
            Transfer::Separable([a0, a1]) => {
                let (b0, b1) = (a0.rows, a1.rows);
                let (d0, d1) = (a0.cols, a1.cols);
                let mut tmp = vec![0.0; d1 * b0];
                for j1 in 0..d1 {
                    let row = a0.right_mul(&ratio[j1 * d0..(j1 + 1) * d0]);
                    tmp[j1 * b0..(j1 + 1) * b0].copy_from_slice(&row);
                }
                let mut out = vec![0.0; b1 * b0];
                for r in 0..b1 {
                    let dst = &mut out[r * b0..(r + 1) * b0];
                    for (j1, &w) in a1.row(r).iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        for (o, t) in dst.iter_mut().zip(&tmp[j1 * b0..(j1 + 1) * b0]) {
                            *o += w * t;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Piecewise-constant discretization of an equation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridModel {
    pub x_edges: Vec<Vec<f64>>,
    pub y_edges: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub transfer: Transfer,
}

fn cell_count(edges: &[Vec<f64>]) -> usize {
    edges.iter().map(|e| e.len() - 1).product()
}

impl GridModel {
    /// Assemble a model; `f` starts uniform and `h` is normalized.
    pub fn new(x_edges: Vec<Vec<f64>>, y_edges: Vec<Vec<f64>>, h: Vec<f64>, transfer: Transfer) -> Result<Self> {
        let b = cell_count(&x_edges);
        let d = cell_count(&y_edges);
        if h.len() != d {
            return Err(Error::DimensionMismatch(format!("{} data masses for {d} bins", h.len())));
        }
        let (tb, td) = match &transfer {
            Transfer::Dense(m) => (m.rows, m.cols),
            Transfer::Separable([a0, a1]) => (a0.rows * a1.rows, a0.cols * a1.cols),
        };
        if (tb, td) != (b, d) {
            return Err(Error::DimensionMismatch(format!(
                "transfer is {tb} x {td}, grid is {b} x {d}"
            )));
        }
        if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("h", "bin masses must be finite and nonnegative"));
        }
        let total = sum_fixed(&h);
        if !(total > 0.0) {
            return Err(Error::EmptyData);
        }
        let h = h.iter().map(|v| v / total).collect();
        Ok(GridModel {
            x_edges,
            y_edges,
            f: vec![1.0 / b as f64; b],
            h,
            transfer,
        })
    }

    pub fn x_bins(&self) -> usize {
        self.f.len()
    }

    pub fn y_bins(&self) -> usize {
        self.h.len()
    }

    pub fn with_f(mut self, f: Vec<f64>) -> Self {
        assert_eq!(f.len(), self.f.len());
        self.f = f;
        self
    }

    /// `sum_b f_b g_{bd}`.
    pub fn predicted(&self) -> Vec<f64> {
        self.transfer.forward(&self.f)
    }

    pub fn x_cells(&self) -> Vec<Domain> {
        grid_cells(&self.x_edges)
    }

    pub fn x_centers(&self) -> Points {
        let cells = self.x_cells();
        let mut p = Points::with_capacity(self.x_edges.len(), cells.len());
        for c in &cells {
            p.push(&c.center());
        }
        p
    }

    /// Density values `f_b / vol_b`.
    pub fn density_values(&self) -> Vec<f64> {
        self.x_cells()
            .iter()
            .zip(&self.f)
            .map(|(c, m)| m / c.volume())
            .collect()
    }

    /// Piecewise-constant density at `x` (zero outside the grid).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        let mut flat = 0;
        let mut stride = 1;
        for (k, e) in self.x_edges.iter().enumerate() {
            let n = e.len() - 1;
            if x[k] < e[0] || x[k] > e[n] {
                return 0.0;
            }
            let w = (e[n] - e[0]) / n as f64;
            let i = (((x[k] - e[0]) / w) as usize).min(n - 1);
            flat += i * stride;
            stride *= n;
        }
        let vol: f64 = self.x_edges.iter().map(|e| (e[e.len() - 1] - e[0]) / (e.len() - 1) as f64).product();
        self.f[flat] / vol
    }

    /// Mean and variance per axis from the bin centers.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.x_centers();
        let d = self.x_edges.len();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for k in 0..d {
            mean[k] = c.iter().zip(&self.f).map(|(p, m)| p[k] * m).sum();
            var[k] = c
                .iter()
                .zip(&self.f)
                .map(|(p, m)| m * (p[k] - mean[k]).powi(2))
                .sum();
        }
        (mean, var)
    }
}

/// Per-axis transfer factor: `mass(x_center, lo, hi)` is the probability of
/// data bin `[lo, hi]` given solution bin center `x_center`. Rows are
/// renormalized over the data grid.
pub fn axis_transfer(
    x_edges: &[f64],
    y_edges: &[f64],
    mass: impl Fn(f64, f64, f64) -> f64,
) -> Result<Matrix> {
    let xc = centers(x_edges);
    let ny = y_edges.len() - 1;
    let mut m = Matrix::zeros(xc.len(), ny);
    for (b, &x) in xc.iter().enumerate() {
        for d in 0..ny {
            m.data[b * ny + d] = mass(x, y_edges[d], y_edges[d + 1]);
        }
    }
    m.normalize_rows()?;
    Ok(m)
}

/// Bin masses of a density by composite Simpson per bin (1D) or a midpoint
/// rule on an 8-per-axis subgrid (higher dimensions).
fn density_bin_masses(density: &dyn Fn(&[f64]) -> f64, edges: &[Vec<f64>]) -> Vec<f64> {
    let cells = grid_cells(edges);
    if edges.len() == 1 {
        return cells
            .iter()
            .map(|c| simpson(c.lower()[0], c.upper()[0], 16, |y| density(&[y])))
            .collect();
    }
    const SUB: usize = 8;
    let d = edges.len();
    let total = SUB.pow(d as u32);
    let mut y = vec![0.0; d];
    cells
        .iter()
        .map(|c| {
            let mut s = 0.0;
            for flat in 0..total {
                let mut rem = flat;
                for k in 0..d {
                    y[k] = c.lower()[k] + c.width(k) * ((rem % SUB) as f64 + 0.5) / SUB as f64;
                    rem /= SUB;
                }
                s += density(&y);
            }
            s * c.volume() / total as f64
        })
        .collect()
}

/// Dense discretization on equally spaced bins. `h` comes from the data
/// density, or from a cell sampler defined on the same grid.
pub fn discretize_problem(problem: &FredholmProblem, x_bins: &[usize], y_bins: &[usize]) -> Result<GridModel> {
    let x_edges = uniform_edges(&problem.x_domain, x_bins)?;
    let y_edges = uniform_edges(&problem.y_domain, y_bins)?;
    let b = cell_count(&x_edges);
    let d = cell_count(&y_edges);
    if (b as u64) * (d as u64) > 50_000_000 {
        return Err(Error::arg(
            "bins",
            format!("dense transfer of {b} x {d} is too large; build a separable model instead"),
        ));
    }
    let h = if let Some(density) = problem.data.density() {
        density_bin_masses(density.as_ref(), &y_edges)
    } else if let Some(cells) = problem.data.cell_sampler().filter(|c| c.edges() == y_edges.as_slice()) {
        cells.masses().to_vec()
    } else {
        return Err(Error::arg(
            "data",
            "no density or matching histogram for h; use the Iterative Bayes path",
        ));
    };
    let x_cells = grid_cells(&x_edges);
    let y_cells = grid_cells(&y_edges);
    let mut m = Matrix::zeros(b, d);
    for (i, xc) in x_cells.iter().enumerate() {
        let x = xc.center();
        for (j, yc) in y_cells.iter().enumerate() {
            m.data[i * d + j] = problem.kernel.cell_mass(&x, yc);
        }
    }
    m.normalize_rows()?;
    GridModel::new(x_edges, y_edges, h, Transfer::Dense(m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothingKind {
    Gaussian,
    ThreePoint,
}

/// Row-stochastic smoothing matrix on one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingMatrix {
    pub entries: Matrix,
    pub kind: SmoothingKind,
}

impl SmoothingMatrix {
    /// `K[b, k] ~ exp(-(c_b - c_k)^2 / (2 eps^2))` on bin centers.
    pub fn gaussian(edges: &[f64], epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::arg("epsilon", "must be nonnegative"));
        }
        let c = centers(edges);
        let n = c.len();
        let entries = if epsilon == 0.0 {
            Matrix::identity(n)
        } else {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let z = (c[i] - c[j]) / epsilon;
                    m.data[i * n + j] = (-0.5 * z * z).exp();
                }
            }
            m.normalize_rows()?;
            m
        };
        Ok(SmoothingMatrix {
            entries,
            kind: SmoothingKind::Gaussian,
        })
    }

    /// Interior rows `(1/4, 1/2, 1/4)`; boundary rows truncated and
    /// renormalized.
    pub fn three_point(bins: usize) -> Result<Self> {
        if bins < 3 {
            return Err(Error::arg("bins", "three-point smoothing needs at least 3 bins"));
        }
        let mut m = Matrix::zeros(bins, bins);
        for b in 0..bins {
            for (offset, w) in [(-1i64, 0.25), (0, 0.5), (1, 0.25)] {
                let k = b as i64 + offset;
                if k >= 0 && (k as usize) < bins {
                    m.data[b * bins + k as usize] = w;
                }
            }
        }
        m.normalize_rows()?;
        Ok(SmoothingMatrix {
            entries: m,
            kind: SmoothingKind::ThreePoint,
        })
    }

    pub fn uniform(bins: usize) -> Self {
        SmoothingMatrix {
            entries: Matrix {
                rows: bins,
                cols: bins,
                data: vec![1.0 / bins as f64; bins * bins],
            },
            kind: SmoothingKind::Gaussian,
        }
    }

    pub fn identity(bins: usize) -> Self {
        SmoothingMatrix {
            entries: Matrix::identity(bins),
            kind: SmoothingKind::Gaussian,
        }
    }
}

/// Smoothing applied to a whole grid: one matrix per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Smoother {
    pub axes: Vec<SmoothingMatrix>,
}

impl Smoother {
    pub fn single(m: SmoothingMatrix) -> Self {
        Smoother { axes: vec![m] }
    }

    pub fn gaussian(x_edges: &[Vec<f64>], epsilon: f64) -> Result<Self> {
        Ok(Smoother {
            axes: x_edges
                .iter()
                .map(|e| SmoothingMatrix::gaussian(e, epsilon))
                .collect::<Result<_>>()?,
        })
    }

    /// `f'[k] = sum_b f[b] K[b, k]` along each axis in turn.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let counts: Vec<usize> = self.axes.iter().map(|a| a.entries.rows).collect();
        let mut cur = f.to_vec();
        let mut stride = 1;
        for (axis, sm) in self.axes.iter().enumerate() {
            let n = counts[axis];
            let mut next = vec![0.0; cur.len()];
            let outer = cur.len() / (n * stride);
            let mut line = vec![0.0; n];
            for o in 0..outer {
                for s in 0..stride {
                    for (i, l) in line.iter_mut().enumerate() {
                        *l = cur[o * n * stride + i * stride + s];
                    }
                    let out = sm.entries.left_mul(&line);
                    for (i, v) in out.iter().enumerate() {
                        next[o * n * stride + i * stride + s] = *v;
                    }
                }
            }
            cur = next;
            stride *= n;
        }
        cur
    }
}

/// One EM (Richardson-Lucy) update.
pub fn em_step(model: &GridModel) -> Result<GridModel> {
    let pred = model.predicted();
    let mut ratio = vec![0.0; pred.len()];
    for (d, (r, (&p, &h))) in ratio.iter_mut().zip(pred.iter().zip(&model.h)).enumerate() {
        if h > 0.0 {
            if !(p > 0.0) {
                return Err(Error::SupportMismatch { bin: d });
            }
            *r = h / p;
        }
    }
    let back = model.transfer.backward(&ratio);
    let f = model.f.iter().zip(&back).map(|(f, b)| f * b).collect();
    Ok(GridModel { f, ..model.clone() })
}

/// EM update followed by smoothing and renormalization.
pub fn ems_step(model: &GridModel, smoother: &Smoother) -> Result<GridModel> {
    let em = em_step(model)?;
    let mut f = smoother.apply(&em.f);
    let s = sum_fixed(&f);
    for v in f.iter_mut() {
        *v /= s;
    }
    Ok(GridModel { f, ..em })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum KdeBandwidth {
    /// Gaussian-reference rule `(4/(d+2))^{1/(d+4)} sd n^{-1/(d+4)}` per axis.
    #[default]
    Silverman,
    Fixed(f64),
}

/// Replace `h` with the bin masses of a Gaussian KDE of `samples`.
pub fn ib_weights(samples: &Points, model: &GridModel, rule: KdeBandwidth) -> Result<GridModel> {
    if samples.len() < 2 {
        return Err(Error::arg("samples", "need at least 2 samples"));
    }
    let d = samples.dim();
    if d != model.y_edges.len() {
        return Err(Error::DimensionMismatch("sample dimension differs from the data grid".into()));
    }
    let n = samples.len() as f64;
    let bw: Vec<f64> = (0..d)
        .map(|k| match rule {
            KdeBandwidth::Fixed(b) => b,
            KdeBandwidth::Silverman => {
                let xs = samples.axis(k);
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                silverman_factor(d, n) * var.sqrt()
            }
        })
        .collect();
    if bw.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::arg("samples", "KDE bandwidth is zero"));
    }
    let counts: Vec<usize> = model.y_edges.iter().map(|e| e.len() - 1).collect();
    let mut h = vec![0.0; model.y_bins()];
    let mut factors: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();
    for p in samples.iter() {
        for k in 0..d {
            let e = &model.y_edges[k];
            for (b, f) in factors[k].iter_mut().enumerate() {
                *f = normal_interval_mass(e[b], e[b + 1], p[k], bw[k]);
            }
        }
        for (flat, o) in h.iter_mut().enumerate() {
            let mut rem = flat;
            let mut v = 1.0;
            for k in 0..d {
                v *= factors[k][rem % counts[k]];
                rem /= counts[k];
            }
            *o += v;
        }
    }
    let total = sum_fixed(&h);
    if !(total > 0.0) {
        return Err(Error::EmptyData);
    }
    for v in h.iter_mut() {
        *v /= total;
    }
    Ok(GridModel { h, ..model.clone() })
}

/// Iterate `n_iterations` EM (no smoother) or EMS steps; `history` holds
/// `f` after every step when requested.
pub fn run_grid(
    model: &GridModel,
    smoother: Option<&Smoother>,
    n_iterations: usize,
    keep_history: bool,
) -> Result<(GridModel, Vec<Vec<f64>>)> {
    let mut cur = model.clone();
    let mut history = Vec::new();
    for _ in 0..n_iterations {
        cur = match smoother {
            Some(s) => ems_step(&cur, s)?,
            None => em_step(&cur)?,
        };
        if keep_history {
            history.push(cur.f.clone());
        }
    }
    Ok((cur, history))
}

/// `sum_d h_d log(h_d / (f^T g)_d)`.
pub fn discrete_kl(model: &GridModel) -> f64 {
    model
        .predicted()
        .iter()
        .zip(&model.h)
        .filter(|(_, h)| **h > 0.0)
        .map(|(p, h)| h * (h / p.max(1e-300)).ln())
        .sum()
}

/// Transfer factor for a Gaussian kernel on one axis.
pub fn gaussian_axis_transfer(x_edges: &[f64], y_edges: &[f64], sigma: f64) -> Result<Matrix> {
    axis_transfer(x_edges, y_edges, |x, lo, hi| normal_interval_mass(lo, hi, x, sigma))
}
