//! Statistical battery: rank tests, Type-II ANOVA with permutation p-values,
//! percentile bootstrap and logistic regression.

pub mod anova;
pub mod bootstrap;
pub mod linalg;
pub mod logistic;

pub use anova::{anova_with_permutation, permutation_p, two_way_anova_type2, AnovaRow, AnovaTable, Factor, PermutationOptions};
pub use bootstrap::{bootstrap_ci, bootstrap_ci_with, quantile_linear, BootstrapInterval};
pub use logistic::{average_marginal_effects, logistic_fit, LogisticFit, MarginalEffect, PredictorKind};
pub use rank_tests::{friedman, mann_whitney, mann_whitney_with, wilcoxon_signed_rank, MannWhitneyOptions};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// U, W or χ² depending on the test.
    pub statistic: f64,
    /// Absent for the Friedman test.
    pub z: Option<f64>,
    pub p_two_sided: f64,
    /// Rank-biserial r for the two-sample tests, Kendall's W for Friedman.
    pub effect_size: f64,
    pub n_values: Vec<usize>,
}

/// `|z| / √n`.
pub fn effect_size_r(z: f64, n: usize) -> f64 {
    z.abs() / (n as f64).sqrt()
}

/// Kendall's W from a Friedman statistic: `χ² / (n (k − 1))`.
pub fn kendall_w(chi2: f64, n: usize, k: usize) -> f64 {
    chi2 / (n as f64 * (k as f64 - 1.0))
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.sf(z.abs())).min(1.0)
}

/// Average (mid) ranks starting at 1, plus the tie-group sizes.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share rank (i+1 + j) / 2.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// `Σ (t³ − t)` over tie groups.
pub(crate) fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}
