//! Two-way Type-II ANOVA with interaction, and permutation p-values.
//!
//! Factors use treatment coding (first level in sorted order is the
//! reference). Type-II sums of squares:
//!
//! ```text
//! SS(A)   = RSS(B)     − RSS(A + B)
//! SS(B)   = RSS(A)     − RSS(A + B)
//! SS(A:B) = RSS(A + B) − RSS(A + B + A:B)
//! ```
//!
//! with the residual taken from the full model. η² divides by the sum of the
//! table's sum-of-squares column (effects plus residual).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::linalg::OrthoBasis;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub labels: Vec<String>,
}

impl Factor {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Self {
        Factor { name: name.into(), labels }
    }

    fn levels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.labels.clone();
        l.sort();
        l.dedup();
        l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub effect: String,
    pub sum_sq: f64,
    pub df: f64,
    /// Absent on the residual row.
    pub f: Option<f64>,
    pub p_parametric: Option<f64>,
    pub p_permutation: Option<f64>,
    pub eta_sq: f64,
    pub partial_eta_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    /// A, B, A:B, in that order.
    pub effects: Vec<AnovaRow>,
    pub residual: AnovaRow,
    pub n_obs: usize,
}

impl AnovaTable {
    pub fn effect(&self, name: &str) -> Option<&AnovaRow> {
        self.effects.iter().find(|r| r.effect == name)
    }
}

/// The four nested least-squares fits needed for Type-II sums of squares.
struct Design {
    a_only: OrthoBasis,
    b_only: OrthoBasis,
    additive: OrthoBasis,
    full: OrthoBasis,
    df: [f64; 3],
    df_resid: f64,
    names: [String; 3],
}

fn dummies(f: &Factor) -> Result<Vec<(String, Vec<f64>)>> {
    let levels = f.levels();
    if levels.len() < 2 {
        return Err(Error::InvalidInput(format!("factor `{}` needs at least 2 levels", f.name)));
    }
    let index: BTreeMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    Ok(levels[1..]
        .iter()
        .enumerate()
        .map(|(j, lvl)| {
            let col = f.labels.iter().map(|l| if index[l.as_str()] == j + 1 { 1.0 } else { 0.0 }).collect();
            (format!("{}[{}]", f.name, lvl), col)
        })
        .collect())
}

impl Design {
    fn new(n: usize, a: &Factor, b: &Factor) -> Result<Self> {
        if a.labels.len() != n || b.labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "factor lengths ({}, {}) differ from {n} values",
                a.labels.len(),
                b.labels.len()
            )));
        }
        let ones = vec![1.0; n];
        let da = dummies(a)?;
        let db = dummies(b)?;
        let inter_name = format!("{}:{}", a.name, b.name);
        let mut dab = Vec::new();
        for (na, ca) in &da {
            for (nb, cb) in &db {
                dab.push((format!("{na}:{nb}"), ca.iter().zip(cb).map(|(x, y)| x * y).collect::<Vec<f64>>()));
            }
        }
        let cols = |sets: &[&Vec<(String, Vec<f64>)>]| -> Vec<(String, Vec<f64>)> {
            let mut c = vec![("Intercept".to_string(), ones.clone())];
            for s in sets {
                c.extend(s.iter().cloned());
            }
            c
        };
        let basis = |c: &[(String, Vec<f64>)], term_of: &dyn Fn(&str) -> String| -> Result<OrthoBasis> {
            let names: Vec<String> = c.iter().map(|(n, _)| term_of(n)).collect();
            let refs: Vec<(&str, &[f64])> = names.iter().zip(c).map(|(n, (_, v))| (n.as_str(), v.as_slice())).collect();
            OrthoBasis::new(&refs)
        };
        let term_of = |col: &str| -> String {
            if col == "Intercept" {
                "Intercept".into()
            } else if col.contains(':') {
                format!("{inter_name} ({col})")
            } else {
                col.to_string()
            }
        };
        let full = basis(&cols(&[&da, &db, &dab]), &term_of)?;
        let n_f = n as f64;
        let df_resid = n_f - full.rank() as f64;
        if df_resid < 1.0 {
            return Err(Error::InvalidInput("no residual degrees of freedom".into()));
        }
        Ok(Design {
            a_only: basis(&cols(&[&da]), &term_of)?,
            b_only: basis(&cols(&[&db]), &term_of)?,
            additive: basis(&cols(&[&da, &db]), &term_of)?,
            full,
            df: [da.len() as f64, db.len() as f64, dab.len() as f64],
            df_resid,
            names: [a.name.clone(), b.name.clone(), inter_name],
        })
    }

    /// Sums of squares at rounding level relative to the total are reported as zero.
    fn sums_of_squares(&self, y: &[f64]) -> ([f64; 3], f64) {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let tol = 1e-12 * y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let clean = |v: f64| if v <= tol { 0.0 } else { v };
        let rss_add = self.additive.rss(y);
        let rss_full = self.full.rss(y);
        let ss = [
            clean(self.b_only.rss(y) - rss_add),
            clean(self.a_only.rss(y) - rss_add),
            clean(rss_add - rss_full),
        ];
        (ss, clean(rss_full))
    }

    fn f_stats(&self, y: &[f64]) -> [f64; 3] {
        let (ss, rss) = self.sums_of_squares(y);
        let ms_res = rss / self.df_resid;
        let mut f = [0.0; 3];
        for i in 0..3 {
            f[i] = f_ratio(ss[i] / self.df[i], ms_res);
        }
        f
    }
}

/// Zero effect is F = 0 even over zero error; a real effect over zero error is infinite.
fn f_ratio(ms: f64, ms_res: f64) -> f64 {
    if ms == 0.0 {
        0.0
    } else if ms_res == 0.0 {
        f64::INFINITY
    } else {
        ms / ms_res
    }
}

pub fn two_way_anova_type2(values: &[f64], a: &Factor, b: &Factor) -> Result<AnovaTable> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("ANOVA values must be finite".into()));
    }
    let design = Design::new(values.len(), a, b)?;
    let (ss, rss) = design.sums_of_squares(values);
    let f = design.f_stats(values);
    let total: f64 = ss.iter().sum::<f64>() + rss;
    let share = |x: f64| if total > 0.0 { x / total } else { 0.0 };
    let effects = (0..3)
        .map(|i| {
            let p = if f[i].is_finite() {
                FisherSnedecor::new(design.df[i], design.df_resid).map(|d| d.sf(f[i]).clamp(0.0, 1.0)).ok()
            } else {
                Some(0.0)
            };
            AnovaRow {
                effect: design.names[i].clone(),
                sum_sq: ss[i],
                df: design.df[i],
                f: Some(f[i]),
                p_parametric: p,
                p_permutation: None,
                eta_sq: share(ss[i]),
                partial_eta_sq: Some(if ss[i] + rss > 0.0 { ss[i] / (ss[i] + rss) } else { 0.0 }),
            }
        })
        .collect();
    Ok(AnovaTable {
        effects,
        residual: AnovaRow {
            effect: "Residual".into(),
            sum_sq: rss,
            df: design.df_resid,
            f: None,
            p_parametric: None,
            p_permutation: None,
            eta_sq: share(rss),
            partial_eta_sq: None,
        },
        n_obs: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationOptions {
    pub n_perm: usize,
    pub seed: u64,
    /// Report `(count + 1) / (n_perm + 1)` instead of `count / n_perm`.
    pub add_one: bool,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        PermutationOptions { n_perm: 1000, seed: 0, add_one: false }
    }
}

/// Fraction of value-column shuffles whose F reaches the observed F, per
/// effect (A, B, A:B). Each shuffle draws from its own seed.
pub fn permutation_p(values: &[f64], a: &Factor, b: &Factor, opts: PermutationOptions, executor: &Executor) -> Result<[f64; 3]> {
    if opts.n_perm == 0 {
        return Err(Error::Config("permutation count must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("ANOVA values must be finite".into()));
    }
    let design = Design::new(values.len(), a, b)?;
    let observed = design.f_stats(values);
    let hits = executor.map(opts.n_perm, |i| {
        let mut y = values.to_vec();
        y.shuffle(&mut rng_from(derive_seed(opts.seed, &[i as u64])));
        let f = design.f_stats(&y);
        [f[0] >= observed[0], f[1] >= observed[1], f[2] >= observed[2]]
    });
    let mut p = [0.0; 3];
    for (e, pe) in p.iter_mut().enumerate() {
        let count = hits.iter().filter(|h| h[e]).count() as f64;
        *pe = if opts.add_one { (count + 1.0) / (opts.n_perm as f64 + 1.0) } else { count / opts.n_perm as f64 };
    }
    Ok(p)
}

/// Runs the ANOVA and fills in the permutation p-values.
pub fn anova_with_permutation(values: &[f64], a: &Factor, b: &Factor, opts: PermutationOptions, executor: &Executor) -> Result<AnovaTable> {
    let mut table = two_way_anova_type2(values, a, b)?;
    let p = permutation_p(values, a, b, opts, executor)?;
    for (row, pp) in table.effects.iter_mut().zip(p) {
        row.p_permutation = Some(pp);
    }
    Ok(table)
}
