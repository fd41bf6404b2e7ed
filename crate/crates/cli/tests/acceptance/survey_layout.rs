//! Survey-analysis substitutes: published identities and exact oracles,
//! table layouts on the bundled fixture, and the logistic fit against an
//! independent Newton solver.

use std::path::Path;

use nudge_core::stats::logistic_fit;

use crate::common::{binary, run_ok, workspace_root, Outcome};
use crate::{effect_sizes, exact_oracles};

const HP: [f64; 32] = [
    110., 110., 93., 110., 175., 105., 245., 62., 95., 123., 123., 180., 180., 180., 205., 215., 230., 66., 52., 65., 97., 150.,
    150., 245., 175., 66., 91., 113., 264., 175., 335., 109.,
];
const WT: [f64; 32] = [
    2.620, 2.875, 2.320, 3.215, 3.440, 3.460, 3.570, 3.190, 3.150, 3.440, 3.440, 4.070, 3.730, 3.780, 5.250, 5.424, 5.345, 2.200,
    1.615, 1.835, 2.465, 3.520, 3.435, 3.840, 3.845, 1.935, 2.140, 1.513, 3.170, 2.770, 3.570, 2.780,
];
const AM: [f64; 32] = [
    1., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 1., 1., 1., 1., 1., 1., 1.,
];
/// Intercept, hp, wt and log-likelihood from a reference statistics package.
const REFERENCE: [f64; 4] = [18.86629872, 0.0362556, -8.08347518, -5.029555236133495];

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Newton-Raphson on the logistic log-likelihood; returns (beta, loglik).
fn newton_logit(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            for j in 0..p {
                grad[j] += (yi - mu) * row[j];
                for k in 0..p {
                    hess[j][k] += mu * (1.0 - mu) * row[j] * row[k];
                }
            }
        }
        let step = solve(hess, grad);
        let size: f64 = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if size < 1e-13 {
            break;
        }
    }
    let ll = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            yi * eta - (1.0 + eta.exp()).ln()
        })
        .sum();
    (beta, ll)
}

fn logistic_check(report: &mut Vec<String>) -> bool {
    let design: Vec<Vec<f64>> = HP.iter().zip(&WT).map(|(&h, &w)| vec![1.0, h, w]).collect();
    let names = ["Intercept", "hp", "wt"].map(String::from);
    let fit = logistic_fit(&design, &AM, &names).expect("logistic fit");
    let (oracle, oracle_ll) = newton_logit(&design, &AM);

    let vs_oracle = fit.coefficients.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let vs_reference = fit.coefficients.iter().zip(&REFERENCE[..3]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ll_dev = (fit.log_likelihood - oracle_ll).abs().max((fit.log_likelihood - REFERENCE[3]).abs());
    let ok = fit.converged && vs_oracle <= 1e-6 && vs_reference <= 1e-6 && ll_dev <= 1e-6;
    report.push(format!(
        "logistic am ~ hp + wt (32 obs): coefficients {:?}; max |diff| vs Newton oracle {vs_oracle:.2e}, vs reference package {vs_reference:.2e}; log-likelihood diff {ll_dev:.2e}",
        fit.coefficients
    ));
    ok
}

fn read_table(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path).expect("table csv");
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

fn layout_check(report: &mut Vec<String>) -> bool {
    let fixtures = workspace_root().join("crates/core/fixtures");
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        binary()
            .arg("analyze")
            .arg("--respondents")
            .arg(fixtures.join("respondents.csv"))
            .arg("--groups")
            .arg(fixtures.join("groups.csv"))
            .arg("-o")
            .arg(dir.path())
            .args(["--n-perm", "200", "--n-boot", "500"]),
    );
    let countries = ["China", "Germany", "India", "Singapore", "US"];
    let mut ok = true;
    let mut check = |name: &str, cond: bool| {
        if !cond {
            report.push(format!("layout mismatch: {name}"));
        }
        ok &= cond;
    };

    let group_headers = |n1: &str, n2: &str, sig: &str| -> Vec<String> {
        ["Country", n1, n2, "U statistic", "p-value", "z-value", "r effect size", sig].map(String::from).to_vec()
    };
    let offset = read_table(&dir.path().join("tables/offset_groups.csv"));
    check("offset_groups header", offset[0] == group_headers("n1 (not fully offset)", "n2 (fully offset)", "Significant at α=0.01"));
    check("offset_groups countries", offset[1..].iter().map(|r| r[0].as_str()).eq(countries));
    let decoy = read_table(&dir.path().join("tables/decoy_groups.csv"));
    check("decoy_groups header", decoy[0] == group_headers("n1 (not increase)", "n2 (increase)", "Significance at α=0.01"));
    check("decoy_groups countries", decoy[1..].iter().map(|r| r[0].as_str()).eq(countries));
    for t in [&offset, &decoy] {
        check("group table flags", t[1..].iter().all(|r| r[7] == "True" || r[7] == "False"));
    }

    let paired = ["Country", "Test Type", "n", "W", "z-value", "r effect size", "p-value", "Significant (α=0.005)"].map(String::from);
    for (file, labels) in [
        ("country_optimal.csv", ["Country-optimal vs No-decoy", "Country-optimal vs Country-non-optimal"]),
        ("personalized.csv", ["Segment-optimal vs No-decoy", "Segment-optimal vs Country-optimal"]),
    ] {
        let t = read_table(&dir.path().join("tables").join(file));
        check(file, t[0] == paired);
        check(file, t.len() == 1 + 2 * countries.len());
        for (i, country) in countries.iter().enumerate() {
            let (a, b) = (&t[1 + 2 * i], &t[2 + 2 * i]);
            check(file, a[0] == *country && b[0].is_empty() && a[1] == labels[0] && b[1] == labels[1]);
        }
    }

    let sceptics = read_table(&dir.path().join("tables/sceptics.csv"));
    let sceptic_headers =
        ["Country", "n (pairs)", "W statistic", "z statistic", "p-value", "Effect size (r)", "Significant (α=0.01)"].map(String::from);
    check("sceptics header", sceptics[0] == sceptic_headers);
    check("sceptics countries", sceptics[1..].iter().map(|r| r[0].as_str()).eq(countries.iter().copied().chain(["All"])));
    check("sceptics flags", sceptics[1..].iter().all(|r| r[6] == "Yes" || r[6] == "No"));

    let hypotheses: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("hypotheses.json")).unwrap()).unwrap();
    let ids: Vec<&str> = hypotheses.as_array().unwrap().iter().map(|h| h["id"].as_str().unwrap()).collect();
    check("hypotheses H1-H4", ids == ["H1", "H2", "H3", "H4"]);
    report.push(format!(
        "fixture tables: offset/decoy groups, country-optimal, segment-optimal and sceptic layouts {}; hypotheses {ids:?}",
        if ok { "match" } else { "DIFFER" }
    ));
    ok
}

pub fn check() -> Outcome {
    let mut report = Vec::new();
    let identities = effect_sizes::check();
    let oracles = exact_oracles::check();
    report.push(format!("effect-size identities: {}", identities.detail));
    report.push(format!("exact oracles: {}", oracles.detail));
    let layout = layout_check(&mut report);
    let logistic = logistic_check(&mut report);
    let pass = identities.pass && oracles.pass && layout && logistic;
    Outcome::new(pass, "identities, exact oracles, table layouts and logistic fit").with_report(report)
}
