//! Multinomial resampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;

use crate::error::{Error, Result};

/// `n` ancestor indices drawn i.i.d. from the categorical law `weights`,
/// in draw order.
pub fn multinomial_ancestors(weights: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights)
        .map_err(|e| Error::DegeneratePotentials(format!("cannot resample: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Offspring count per particle for a list of ancestors.
pub fn offspring_counts(ancestors: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &a in ancestors {
        counts[a] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_weights_copy_one_particle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = multinomial_ancestors(&[0.0, 0.0, 1.0, 0.0], 4, &mut rng).unwrap();
        assert_eq!(a, vec![2; 4]);
    }

    #[test]
    fn binomial_count_for_two_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let mut w = vec![0.0; n];
        w[0] = 0.9;
        w[1] = 0.1;
        let a = multinomial_ancestors(&w, n, &mut rng).unwrap();
        let c = offspring_counts(&a, n);
        let sd = (n as f64 * 0.09).sqrt();
        assert!((c[0] as f64 - 9000.0).abs() < 4.0 * sd, "count {}", c[0]);
        assert_eq!(c[0] + c[1], n);
    }

    #[test]
    fn zero_weights_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(multinomial_ancestors(&[0.0, 0.0], 2, &mut rng).is_err());
    }
}
