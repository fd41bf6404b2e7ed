//! Small dense linear algebra for regression fits.

use crate::error::{Error, Result};

/// Relative norm below which a column counts as a linear combination of earlier ones.
const ALIAS_TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of a design's column space, built column by column with
/// modified Gram-Schmidt (two passes).
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    q: Vec<Vec<f64>>,
}

impl OrthoBasis {
    /// `columns` pairs each column with the model term it belongs to; the term
    /// is named in the error when a column is aliased.
    pub fn new(columns: &[(&str, &[f64])]) -> Result<Self> {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
        for (term, col) in columns {
            let scale = dot(col, col).sqrt();
            let mut v = col.to_vec();
            for _ in 0..2 {
                for e in &q {
                    let c = dot(e, &v);
                    v.iter_mut().zip(e).for_each(|(vi, ei)| *vi -= c * ei);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if scale == 0.0 || norm <= ALIAS_TOL * scale {
                return Err(Error::RankDeficient((*term).to_string()));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
        Ok(OrthoBasis { q })
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    /// Residual sum of squares of `y` after projecting onto the basis.
    pub fn rss(&self, y: &[f64]) -> f64 {
        let mut r = y.to_vec();
        for e in &self.q {
            let c = dot(e, &r);
            r.iter_mut().zip(e).for_each(|(ri, ei)| *ri -= c * ei);
        }
        dot(&r, &r)
    }
}

/// Symmetric positive-definite matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    /// Lower Cholesky factor; fails on a non-positive pivot at `index`.
    pub fn cholesky(&self) -> std::result::Result<Vec<f64>, usize> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 1e-12 * self.get(j, j).abs().max(1e-300)) {
                return Err(j);
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(l)
    }

    pub fn solve(&self, b: &[f64]) -> std::result::Result<Vec<f64>, usize> {
        let l = self.cholesky()?;
        Ok(chol_solve(&l, self.n, b))
    }

    pub fn inverse(&self) -> std::result::Result<SymMatrix, usize> {
        let l = self.cholesky()?;
        let n = self.n;
        let mut inv = SymMatrix::zeros(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = chol_solve(&l, n, &e);
            for i in 0..n {
                inv.data[i * n + j] = col[i];
            }
        }
        Ok(inv)
    }

    pub fn quad_form(&self, g: &[f64]) -> f64 {
        let n = self.n;
        (0..n).map(|i| g[i] * (0..n).map(|j| self.get(i, j) * g[j]).sum::<f64>()).sum()
    }
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
