//! Sample statistics for Monte Carlo estimates.

use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::linalg::pairwise_sum;

/// Result of a Monte Carlo estimation: sample mean with standard error.
///
/// `std_error = sample standard deviation / sqrt(samples)`; the reported
/// 95% confidence interval is `mean ± 1.96·std_error`. `aborted_paths` is
/// always zero for a valid estimate: explosion aborts the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean: DVector<f64>,
    pub std_error: DVector<f64>,
    pub samples: usize,
    pub seed: u64,
    pub aborted_paths: usize,
}

impl MCEstimate {
    /// Mean/SE from per-sample contributions, one vector per sample, laid
    /// out as `contributions[sample][component]`. Reduction is pairwise in
    /// sample order, so the result is independent of worker scheduling.
    pub fn from_samples(dim: usize, contributions: &[Vec<f64>], seed: u64) -> Self {
        let n = contributions.len();
        assert!(n > 0, "no samples");
        let mut mean = DVector::zeros(dim);
        let mut se = DVector::zeros(dim);
        let mut comp = Vec::with_capacity(n);
        for j in 0..dim {
            comp.clear();
            comp.extend(contributions.iter().map(|c| c[j]));
            let m = pairwise_sum(&comp) / n as f64;
            mean[j] = m;
            if n > 1 {
                let sq: Vec<f64> = comp.iter().map(|x| (x - m) * (x - m)).collect();
                let var = pairwise_sum(&sq) / (n - 1) as f64;
                se[j] = (var / n as f64).sqrt();
            }
        }
        MCEstimate {
            mean,
            std_error: se,
            samples: n,
            seed,
            aborted_paths: 0,
        }
    }

    pub fn from_scalar_samples(contributions: &[f64], seed: u64) -> Self {
        let wrapped: Vec<Vec<f64>> = contributions.iter().map(|&x| alloc::vec![x]).collect();
        Self::from_samples(1, &wrapped, seed)
    }

    /// Scalar accessors for one-dimensional estimates.
    pub fn value(&self) -> f64 {
        self.mean[0]
    }

    pub fn se(&self) -> f64 {
        self.std_error[0]
    }

    /// `mean ± 1.96·SE` per component.
    pub fn ci95(&self) -> (DVector<f64>, DVector<f64>) {
        (
            &self.mean - &self.std_error * 1.96,
            &self.mean + &self.std_error * 1.96,
        )
    }

    /// Largest componentwise standard error.
    pub fn max_se(&self) -> f64 {
        self.std_error.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `|mean - target| <= k·SE` componentwise, with an epsilon floor for
    /// exactly-deterministic weights.
    pub fn within_k_se(&self, target: &DVector<f64>, k: f64) -> bool {
        self.mean
            .iter()
            .zip(target.iter())
            .zip(self.std_error.iter())
            .all(|((m, t), s)| (m - t).abs() <= k * s + 1e-12)
    }
}

/// Mean and standard error of a scalar slice (two-pass, pairwise sums).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_se(&xs);
        assert!((m - 2.5).abs() < 1e-15);
        // sample variance 5/3, SE = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn vector_estimate_componentwise() {
        let samples = alloc::vec![alloc::vec![1.0, 10.0], alloc::vec![3.0, 14.0]];
        let est = MCEstimate::from_samples(2, &samples, 0);
        assert!((est.mean[0] - 2.0).abs() < 1e-15);
        assert!((est.mean[1] - 12.0).abs() < 1e-15);
    }
}
