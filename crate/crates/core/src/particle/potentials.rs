//! Importance potentials `g(y | x) / h_n(y)` and weight bookkeeping.
//!
//! All reductions run over fixed-size blocks whose partial results are
//! combined in block order, so values do not depend on the worker count.

use crate::domain::{ForwardKernel, Points};
use crate::error::{Error, Result};
use crate::numeric::sum_fixed;

use super::ExactPotential;

/// Unnormalized potentials for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTable {
    /// `sum_j G(X^i, Y^{ij})` per particle.
    pub values: Vec<f64>,
    /// `h_n^N` at the shared replicate points; empty when not applicable.
    pub mixture_cache: Vec<f64>,
}

/// `h_n^N(y) = sum_i w_i g(y | X^i)`; with uniform weights this is the
/// particle mean.
pub fn mixture_density_at(
    kernel: &dyn ForwardKernel,
    xs: &Points,
    weights: &[f64],
    y: &[f64],
) -> Result<f64> {
    let mut row = vec![0.0; xs.len()];
    kernel.density_over(y, xs, &mut row);
    let h = weighted_sum(&row, weights);
    check_mixture(h, y)?;
    Ok(h)
}

fn check_mixture(h: f64, y: &[f64]) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::KernelUnderflow {
            y: y.to_vec(),
            value: h,
        })
    }
}

/// `sum_i w_i row_i` with eight interleaved accumulators.
fn weighted_sum(row: &[f64], weights: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = row.chunks_exact(8).zip(weights.chunks_exact(8));
    for (r, w) in chunks {
        for l in 0..8 {
            acc[l] += r[l] * w[l];
        }
    }
    let tail = row.len() - row.len() % 8;
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in tail..row.len() {
        s += row[i] * weights[i];
    }
    s
}

/// Map `f` over `0..n_blocks` and collect in block order, in parallel when
/// the feature is on.
fn map_blocks<T: Send>(n_blocks: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_blocks).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_blocks).map(f).collect()
    }
}

fn add_into(acc: &mut [f64], part: &[f64]) {
    for (a, p) in acc.iter_mut().zip(part) {
        *a += p;
    }
}

/// Approximate potentials at replicate points shared by every particle:
/// `values[i] = sum_j g(Y^j | X^i) / h_n^N(Y^j)`.
pub fn approximate_shared(
    kernel: &dyn ForwardKernel,
    xs: &Points,
    prior_weights: &[f64],
    replicates: &Points,
    block_size: usize,
) -> Result<PotentialTable> {
    let n = xs.len();
    let m = replicates.len();
    let n_blocks = m.div_ceil(block_size);
    let parts = map_blocks(n_blocks, |b| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut partial = vec![0.0; n];
        let mut row = vec![0.0; n];
        let lo = b * block_size;
        let hi = (lo + block_size).min(m);
        let mut cache = Vec::with_capacity(hi - lo);
        for j in lo..hi {
            let y = replicates.get(j);
            kernel.density_over(y, xs, &mut row);
            let h = weighted_sum(&row, prior_weights);
            check_mixture(h, y)?;
            let inv = 1.0 / h;
            for (p, r) in partial.iter_mut().zip(&row) {
                *p += r * inv;
            }
            cache.push(h);
        }
        Ok((partial, cache))
    });
    let mut values = vec![0.0; n];
    let mut mixture_cache = Vec::with_capacity(m);
    for part in parts {
        let (partial, cache) = part?;
        add_into(&mut values, &partial);
        mixture_cache.extend(cache);
    }
    Ok(PotentialTable {
        values,
        mixture_cache,
    })
}

/// Approximate potentials with replicate points drawn per particle:
/// `replicates` holds `n * m` points, particle `i` owning `i*m .. (i+1)*m`.
pub fn approximate_per_particle(
    kernel: &dyn ForwardKernel,
    xs: &Points,
    prior_weights: &[f64],
    replicates: &Points,
    m: usize,
    block_size: usize,
) -> Result<PotentialTable> {
    let n = xs.len();
    let n_blocks = n.div_ceil(block_size);
    let parts = map_blocks(n_blocks, |b| -> Result<Vec<f64>> {
        let mut row = vec![0.0; n];
        let lo = b * block_size;
        let hi = (lo + block_size).min(n);
        let mut out = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let mut v = 0.0;
            for j in 0..m {
                let y = replicates.get(i * m + j);
                kernel.density_over(y, xs, &mut row);
                let h = weighted_sum(&row, prior_weights);
                check_mixture(h, y)?;
                v += row[i] / h;
            }
            out.push(v);
        }
        Ok(out)
    });
    let mut values = Vec::with_capacity(n);
    for p in parts {
        values.extend(p?);
    }
    Ok(PotentialTable {
        values,
        mixture_cache: Vec::new(),
    })
}

/// Exact potentials summed over replicates. With `per_particle`, particle
/// `i` uses replicates `i*m .. (i+1)*m`; otherwise all `m` are shared.
pub fn exact_potentials(
    potential: &dyn ExactPotential,
    iteration: usize,
    xs: &Points,
    replicates: &Points,
    m: usize,
    per_particle: bool,
    block_size: usize,
) -> PotentialTable {
    let n = xs.len();
    let n_blocks = n.div_ceil(block_size);
    let parts = map_blocks(n_blocks, |b| {
        let lo = b * block_size;
        let hi = (lo + block_size).min(n);
        (lo..hi)
            .map(|i| {
                let x = xs.get(i);
                (0..m)
                    .map(|j| {
                        let y = if per_particle {
                            replicates.get(i * m + j)
                        } else {
                            replicates.get(j)
                        };
                        potential.potential(iteration, x, y)
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    PotentialTable {
        values: parts.into_iter().flatten().collect(),
        mixture_cache: Vec::new(),
    }
}

/// `values / sum(values)`, with the sum taken in fixed order.
pub fn normalize_weights(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::DegeneratePotentials(format!("value {v} is not a finite nonnegative number")));
    }
    let total = sum_fixed(values);
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePotentials(format!("sum of values is {total}")));
    }
    let mut w: Vec<f64> = values.iter().map(|v| v / total).collect();
    // one more pass removes the rounding drift of the division
    let s = sum_fixed(&w);
    if s != 1.0 {
        for x in w.iter_mut() {
            *x /= s;
        }
    }
    Ok(w)
}

/// `(sum G)^2 / sum G^2`, computed after scaling by the maximum for range.
pub fn effective_sample_size(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return 1.0;
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / max).collect();
    let sq: Vec<f64> = scaled.iter().map(|v| v * v).collect();
    let s = sum_fixed(&scaled);
    let ess = s * s / sum_fixed(&sq);
    ess.clamp(1.0, values.len() as f64)
}
