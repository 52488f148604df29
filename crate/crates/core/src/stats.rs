//! Small statistics helpers: pairwise summation and batch-means intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Two-sided Student-t quantile `t_{1 − (1 − level)/2, dof}`.
pub fn t_quantile(level: f64, dof: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof.max(1) as f64).expect("valid Student t");
    dist.inverse_cdf(0.5 + 0.5 * level)
}

/// Mean and 95% half-width treating `batch_means` as independent replicates.
pub fn batch_means_ci(batch_means: &[f64]) -> (f64, f64) {
    let m = mean(batch_means);
    let n = batch_means.len();
    if n < 2 {
        return (m, f64::INFINITY);
    }
    let half = t_quantile(0.95, n - 1) * (variance(batch_means) / n as f64).sqrt();
    (m, half)
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent 64-bit seed from a root seed and a list of indices.
pub fn derive_seed(root: u64, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(root), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}
