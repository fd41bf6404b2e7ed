use std::time::Instant;

use nudge_core::stats::{effect_size_r, kendall_w};

use crate::common::Outcome;

const TOLERANCE: f64 = 0.005;

/// (source, z, n, published r).
const R_TUPLES: &[(&str, f64, usize, f64)] = &[
    ("H1 offset groups", -11.307, 3495, 0.187),
    ("H2 decoy groups", -0.505, 3495, 0.009),
    ("H3 CO vs CNO", -24.141, 1285, 0.673),
    ("H3 CO vs ND", -1.401, 1285, 0.039),
    ("H4 SO vs CO", -4.610, 1285, 0.129),
    ("H4 SO vs ND", -5.253, 1285, 0.147),
    ("sceptics SO vs ND", -5.31, 1244, 0.151),
    ("offset groups CN", 6.564, 713, 0.246),
    ("offset groups DE", 4.089, 638, 0.162),
    ("offset groups IN", 3.072, 714, 0.115),
    ("offset groups SG", 5.776, 694, 0.219),
    ("offset groups US", 5.115, 729, 0.189),
    ("decoy groups CN", 0.687, 713, 0.026),
    ("decoy groups DE", -0.321, 638, 0.013),
    ("decoy groups IN", 0.522, 714, 0.020),
    ("decoy groups SG", -1.862, 694, 0.071),
    ("decoy groups US", 0.167, 729, 0.006),
    ("CO vs ND CN", -0.41, 167, 0.03),
    ("CO vs CNO CN", -7.70, 167, 0.60),
    ("CO vs ND DE", -1.59, 221, 0.11),
    ("CO vs CNO DE", -9.65, 221, 0.65),
    ("CO vs ND IN", -0.27, 321, 0.02),
    ("CO vs CNO IN", -14.70, 321, 0.82),
    ("CO vs ND SG", -0.97, 231, 0.06),
    ("CO vs CNO SG", -7.82, 231, 0.51),
    ("CO vs ND US", -0.59, 345, 0.03),
    ("CO vs CNO US", -13.01, 345, 0.70),
    ("SO vs ND CN", -0.26, 167, 0.02),
    ("SO vs CO CN", -0.28, 167, 0.02),
    ("SO vs ND DE", -3.59, 221, 0.24),
    ("SO vs CO DE", -2.32, 221, 0.16),
    ("SO vs ND IN", -0.62, 321, 0.03),
    ("SO vs CO IN", -0.87, 321, 0.05),
    ("SO vs ND SG", -4.22, 231, 0.28),
    ("SO vs CO SG", -3.40, 231, 0.22),
    ("SO vs ND US", -3.38, 345, 0.18),
    ("SO vs CO US", -3.15, 345, 0.17),
    ("sceptics CN", -0.327, 206, 0.023),
    ("sceptics DE", -4.144, 269, 0.253),
    ("sceptics IN", -0.124, 238, 0.008),
    ("sceptics SG", -4.268, 209, 0.295),
    ("sceptics US", -3.304, 322, 0.184),
];

/// (source, chi², n, k, published W).
const W_TUPLES: &[(&str, f64, usize, usize, f64)] = &[
    ("H3 Friedman", 844.065, 1285, 3, 0.328),
    ("H4 Friedman", 70.916, 1285, 3, 0.028),
];

pub fn check() -> Outcome {
    let started = Instant::now();
    let mut worst: (f64, &str) = (0.0, "");
    let mut failures = Vec::new();
    for &(label, z, n, published) in R_TUPLES {
        let dev = (effect_size_r(z, n) - published).abs();
        if dev > worst.0 {
            worst = (dev, label);
        }
        if dev > TOLERANCE {
            failures.push(format!("{label}: r = {:.4}, published {published}", effect_size_r(z, n)));
        }
    }
    for &(label, chi2, n, k, published) in W_TUPLES {
        let dev = (kendall_w(chi2, n, k) - published).abs();
        if dev > worst.0 {
            worst = (dev, label);
        }
        if dev > TOLERANCE {
            failures.push(format!("{label}: W = {:.4}, published {published}", kendall_w(chi2, n, k)));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let total = R_TUPLES.len() + W_TUPLES.len();
    let detail = format!(
        "{}/{total} tuples within ±{TOLERANCE}; largest deviation {:.4} ({})",
        total - failures.len(),
        worst.0,
        worst.1
    );
    Outcome::new(failures.is_empty() && elapsed < 1.0, detail).with_report(failures)
}
