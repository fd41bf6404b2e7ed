//! Binomial logistic regression by IRLS, and average marginal effects.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::linalg::{OrthoBasis, SymMatrix};
use super::normal_two_sided_p;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const REL_TOL: f64 = 1e-10;
/// Linear predictors beyond this magnitude mean fitted probabilities of 0 or 1.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Row-major inverse Fisher information at the estimate.
    pub covariance: Vec<f64>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    /// McFadden: `1 − logLik / logLik₀` against the intercept-only model.
    pub pseudo_r2: f64,
    pub lr_statistic: f64,
    pub lr_p_value: f64,
    pub converged: bool,
    pub separation: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn linear(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(x, b)| x * b).sum()
}

fn log_likelihood(x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(y).map(|(row, yi)| {
        let eta = linear(row, beta);
        yi * eta - softplus(eta)
    }).sum()
}

fn information(x: &[Vec<f64>], beta: &[f64]) -> SymMatrix {
    let p = beta.len();
    let mut info = SymMatrix::zeros(p);
    for row in x {
        let mu = sigmoid(linear(row, beta));
        let w = mu * (1.0 - mu);
        for i in 0..p {
            for j in 0..=i {
                info.add(i, j, w * row[i] * row[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            let v = info.get(i, j);
            info.data[j * p + i] = v;
        }
    }
    info
}

/// Maximum-likelihood fit of `y ~ x`. Rows of `x` are observations; the
/// design should contain an intercept column, since the pseudo-R² and the
/// likelihood-ratio test compare against the intercept-only model.
///
/// Iterates Newton/IRLS steps (halving a step that lowers the likelihood)
/// until the relative log-likelihood change drops below 1e-10 or 100
/// iterations pass. Separation is flagged rather than raised.
pub fn logistic_fit(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<LogisticFit> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidInput(format!("design has {n} rows, outcome has {}", y.len())));
    }
    let p = names.len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput(format!("every design row needs {p} columns")));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidInput("logistic outcome must be 0 or 1".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design contains a non-finite value".into()));
    }
    let columns: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let refs: Vec<(&str, &[f64])> = names.iter().zip(&columns).map(|(nm, c)| (nm.as_str(), c.as_slice())).collect();
    OrthoBasis::new(&refs)?;

    let mut beta = vec![0.0; p];
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let info = information(x, &beta);
        let mut score = vec![0.0; p];
        for (row, yi) in x.iter().zip(y) {
            let r = yi - sigmoid(linear(row, &beta));
            score.iter_mut().zip(row).for_each(|(s, xi)| *s += r * xi);
        }
        let step = match info.solve(&score) {
            Ok(s) => s,
            Err(j) if separation => {
                let _ = j;
                break;
            }
            Err(j) => return Err(Error::RankDeficient(names[j].clone())),
        };
        let mut t = 1.0;
        let (mut cand, mut cand_ll);
        loop {
            cand = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect::<Vec<f64>>();
            cand_ll = log_likelihood(x, y, &cand);
            if cand_ll >= ll || t < 1e-8 {
                break;
            }
            t /= 2.0;
        }
        let change = (cand_ll - ll).abs();
        beta = cand;
        let prev = ll;
        ll = cand_ll;
        if x.iter().any(|row| linear(row, &beta).abs() > SEPARATION_ETA) {
            separation = true;
        }
        if change <= REL_TOL * prev.abs() {
            converged = true;
            break;
        }
    }
    if separation {
        converged = false;
    }

    let (covariance, std_errors) = match information(x, &beta).inverse() {
        Ok(inv) => {
            let se = (0..p).map(|i| inv.get(i, i).max(0.0).sqrt()).collect();
            (inv.data, se)
        }
        Err(_) => (vec![f64::NAN; p * p], vec![f64::NAN; p]),
    };
    let z_values: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = z_values.iter().map(|z| if z.is_finite() { normal_two_sided_p(*z) } else { f64::NAN }).collect();

    let ybar = y.iter().sum::<f64>() / n as f64;
    let null_ll = if ybar > 0.0 && ybar < 1.0 {
        n as f64 * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln())
    } else {
        0.0
    };
    let k = p as f64;
    let lr = (2.0 * (ll - null_ll)).max(0.0);
    let lr_p_value = if p > 1 {
        ChiSquared::new(k - 1.0).map(|d| d.sf(lr)).unwrap_or(f64::NAN)
    } else {
        1.0
    };
    Ok(LogisticFit {
        names: names.to_vec(),
        coefficients: beta,
        std_errors,
        z_values,
        p_values,
        covariance,
        log_likelihood: ll,
        null_log_likelihood: null_ll,
        aic: 2.0 * k - 2.0 * ll,
        bic: k * (n as f64).ln() - 2.0 * ll,
        pseudo_r2: if null_ll < 0.0 { 1.0 - ll / null_ll } else { 0.0 },
        lr_statistic: lr,
        lr_p_value,
        converged,
        separation,
        iterations,
        n_obs: n,
    })
}

impl LogisticFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(linear(row, &self.coefficients))
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.coefficients.len() + j]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictorKind {
    Intercept,
    /// A 0/1 indicator. `siblings` are the other indicators of the same
    /// categorical factor, zeroed in both counterfactuals.
    Level { siblings: Vec<usize> },
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub name: String,
    pub ame: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Average marginal effect of every non-intercept column, with delta-method
/// standard errors.
///
/// Indicators: mean of `P(x_j = 1) − P(x_j = 0)` with the other covariates
/// at their observed values. Continuous: mean of `β_j p (1 − p)`.
pub fn average_marginal_effects(fit: &LogisticFit, x: &[Vec<f64>], kinds: &[PredictorKind]) -> Result<Vec<MarginalEffect>> {
    if !fit.converged {
        return Err(Error::Domain("marginal effects need a converged fit".into()));
    }
    let p = fit.coefficients.len();
    if kinds.len() != p {
        return Err(Error::InvalidInput(format!("{} predictor kinds for {p} coefficients", kinds.len())));
    }
    let n = x.len() as f64;
    let mut out = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        let mut ame = 0.0;
        let mut grad = vec![0.0; p];
        match kind {
            PredictorKind::Intercept => continue,
            PredictorKind::Level { siblings } => {
                for row in x {
                    let mut on = row.clone();
                    let mut off = row.clone();
                    for &s in siblings {
                        on[s] = 0.0;
                        off[s] = 0.0;
                    }
                    on[j] = 1.0;
                    off[j] = 0.0;
                    let (p1, p0) = (fit.predict(&on), fit.predict(&off));
                    ame += p1 - p0;
                    for k in 0..p {
                        grad[k] += p1 * (1.0 - p1) * on[k] - p0 * (1.0 - p0) * off[k];
                    }
                }
            }
            PredictorKind::Continuous => {
                let bj = fit.coefficients[j];
                for row in x {
                    let mu = fit.predict(row);
                    let w = mu * (1.0 - mu);
                    ame += bj * w;
                    for k in 0..p {
                        grad[k] += bj * w * (1.0 - 2.0 * mu) * row[k];
                    }
                    grad[j] += w;
                }
            }
        }
        ame /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        let mut var = 0.0;
        for a in 0..p {
            for b in 0..p {
                var += grad[a] * fit.cov(a, b) * grad[b];
            }
        }
        let se = var.max(0.0).sqrt();
        let z = if se > 0.0 { ame / se } else { 0.0 };
        out.push(MarginalEffect { name: fit.names[j].clone(), ame, std_error: se, z, p_value: normal_two_sided_p(z) });
    }
    Ok(out)
}
