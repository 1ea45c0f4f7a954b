//! Small numerical kernels shared by the solvers.
//!
//! The hot loops of the particle solver evaluate millions of Gaussian
//! densities per iteration, so `exp_neg` is a branch-free polynomial
//! exponential that the compiler can vectorize. It agrees with `f64::exp`
//! to a few ulps over the whole range where the result is a normal float.

use std::f64::consts::LOG2_E;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
const ROUND_SHIFT: f64 = 6_755_399_441_055_744.0;

/// `exp(x)` for `x <= 0`, vectorizable. Inputs below -708 flush to ~1e-308.
#[inline(always)]
pub fn exp_neg(x: f64) -> f64 {
    let x = x.max(-708.0);
    let kf = x * LOG2_E + ROUND_SHIFT;
    let k = kf - ROUND_SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // low bits of the shifted sum hold k as a two's complement integer
    let bits = kf.to_bits().wrapping_add(1023) << 52;
    p * f64::from_bits(bits)
}

/// Sum with eight interleaved accumulators. The association order depends
/// only on the slice length, so results are reproducible.
#[inline]
pub fn sum_fixed(values: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = values.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for l in 0..8 {
            acc[l] += c[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for &t in tail {
        s += t;
    }
    s
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    INV_SQRT_2PI / sd * (-0.5 * z * z).exp()
}

#[inline]
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// Probability that `N(mean, sd^2)` falls in `[lo, hi]`, computed in the tail
/// that avoids cancellation.
pub fn normal_interval_mass(lo: f64, hi: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 || !sd.is_finite() {
        return if mean >= lo && mean < hi { 1.0 } else { 0.0 };
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let s = std::f64::consts::SQRT_2;
    if a > 0.0 {
        0.5 * (libm::erfc(a / s) - libm::erfc(b / s))
    } else if b < 0.0 {
        0.5 * (libm::erfc(-b / s) - libm::erfc(-a / s))
    } else {
        1.0 - 0.5 * (libm::erfc(-a / s) + libm::erfc(b / s))
    }
}

/// out[i] = scale * exp(-(xs[i] - center)^2 * inv_two_var)
#[inline]
pub fn gaussian_row(center: f64, xs: &[f64], inv_two_var: f64, scale: f64, out: &mut [f64]) {
    debug_assert_eq!(xs.len(), out.len());
    for (o, &x) in out.iter_mut().zip(xs) {
        let d = x - center;
        *o = scale * exp_neg(-d * d * inv_two_var);
    }
}

/// Composite trapezoid rule of `f` on `[a, b]` with `nodes` points.
pub fn trapezoid(a: f64, b: f64, nodes: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    assert!(nodes >= 2);
    let h = (b - a) / (nodes - 1) as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..nodes - 1 {
        s += f(a + h * i as f64);
    }
    s * h
}

/// Trapezoid weights for `nodes` equally spaced points on `[a, b]`.
pub fn trapezoid_grid(a: f64, b: f64, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(nodes >= 2);
    let h = (b - a) / (nodes - 1) as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| a + h * i as f64).collect();
    let mut ws = vec![h; nodes];
    ws[0] = 0.5 * h;
    ws[nodes - 1] = 0.5 * h;
    (xs, ws)
}

/// Composite Simpson rule with an even number of subintervals.
pub fn simpson(a: f64, b: f64, intervals: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Weighted mean and (biased) variance of `xs`; weights need not be normalized.
pub fn weighted_moments(xs: impl Iterator<Item = f64> + Clone, ws: &[f64]) -> (f64, f64) {
    let total: f64 = ws.iter().sum();
    let mean = xs.clone().zip(ws).map(|(x, w)| w * x).sum::<f64>() / total;
    let var = xs
        .zip(ws)
        .map(|(x, w)| {
            let d = x - mean;
            w * d * d
        })
        .sum::<f64>()
        / total;
    (mean, var)
}

/// Bisection for a sign change of `f` on `[lo, hi]` to relative tolerance `rtol`.
pub fn bisect(mut lo: f64, mut hi: f64, rtol: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= rtol * mid.abs() || mid == lo || mid == hi {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Nearest-rank percentile (`p` in (0, 100)) of unsorted values.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_neg_matches_std() {
        let mut worst = 0.0f64;
        for i in 0..200_000 {
            let x = -700.0 * i as f64 / 200_000.0;
            let rel = ((exp_neg(x) - x.exp()) / x.exp()).abs();
            worst = worst.max(rel);
        }
        assert!(worst < 2e-15, "worst relative error {worst:e}");
        assert_eq!(exp_neg(0.0), 1.0);
    }

    #[test]
    fn sum_fixed_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1001).map(|i| i as f64).collect();
        assert_eq!(sum_fixed(&v), 501_501.0);
        assert_eq!(sum_fixed(&[]), 0.0);
    }

    #[test]
    fn interval_mass_is_stable_in_tails() {
        let m = normal_interval_mass(10.0, 11.0, 0.0, 1.0);
        let direct = normal_cdf(11.0, 0.0, 1.0) - normal_cdf(10.0, 0.0, 1.0);
        assert!(m > 0.0 && m < 1e-22);
        assert_eq!(direct, 0.0);
        let full = normal_interval_mass(-40.0, 40.0, 0.0, 1.0);
        assert!((full - 1.0).abs() < 1e-15);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let v = simpson(0.0, 2.0, 4, |x| x * x * x - x);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nearest_rank_percentile() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(nearest_rank(&v, 50.0), 3.0);
        assert_eq!(nearest_rank(&v, 95.0), 5.0);
        assert_eq!(nearest_rank(&v, 1.0), 1.0);
    }
}
