//! Byte-identical artifacts across concurrency settings.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nudge_core::exec::{Execution, Executor};
use nudge_core::study::{generate_fixture, run_exploratory, screen, AttentionPolicy, ExploratoryOptions, FixtureSpec, Thresholds};

use crate::common::{binary, list_files, run_ok, workspace_root, Outcome};

fn simulate(out: &Path, concurrency: usize) -> f64 {
    let started = Instant::now();
    let config = workspace_root().join("configs/default.toml");
    run_ok(binary().arg("simulate").arg("-c").arg(&config).arg("-o").arg(out).arg("--concurrency").arg(concurrency.to_string()));
    started.elapsed().as_secs_f64()
}

/// Files present in only one tree, or with different bytes.
fn differences(a: &Path, b: &Path) -> (usize, Vec<String>) {
    let fa = list_files(a);
    let fb = list_files(b);
    let mut diffs = Vec::new();
    if fa != fb {
        diffs.push(format!("file lists differ: {fa:?} vs {fb:?}"));
        return (fa.len(), diffs);
    }
    for f in &fa {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            diffs.push(format!("{} differs", f.display()));
        }
    }
    (fa.len(), diffs)
}

fn exploratory_json(executor: &Executor) -> String {
    let fixture = generate_fixture(&FixtureSpec::default()).unwrap();
    let included = screen(fixture.records, AttentionPolicy::Require).unwrap().included;
    let opts = ExploratoryOptions { seed: 7, n_perm: 1000, n_boot: 5000, ci_level: 0.95 };
    let report = run_exploratory(&included, &fixture.groups, &Thresholds::default(), &opts, executor).unwrap();
    serde_json::to_string(&report).unwrap()
}

pub fn check() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("c1");
    let eight = dir.path().join("c8");
    let t1 = simulate(&one, 1);
    let t8 = simulate(&eight, 8);
    let (files, mut diffs) = differences(&one, &eight);
    let mut report = vec![format!(
        "full default sweep: {files} artifacts, concurrency 1 took {t1:.1}s, concurrency 8 took {t8:.1}s, {} differing",
        diffs.len()
    )];

    let mut runs = BTreeMap::new();
    for (label, policy) in [
        ("sequential", Execution::Sequential),
        ("8 workers", Execution::Parallel { threads: 8 }),
        ("8 workers again", Execution::Parallel { threads: 8 }),
    ] {
        runs.insert(label, exploratory_json(&Executor::new(policy)));
    }
    let reference = &runs["sequential"];
    for (label, json) in &runs {
        if json != reference {
            diffs.push(format!("exploratory report under {label} differs from the sequential run"));
        }
    }
    report.push(format!(
        "permutation ANOVA and bootstrap report ({} bytes) identical across {} executor runs: {}",
        reference.len(),
        runs.len(),
        runs.values().all(|j| j == reference)
    ));
    report.extend(diffs.iter().take(10).cloned());
    Outcome::new(diffs.is_empty(), format!("{files} simulation artifacts and the exploratory report are byte-identical"))
        .with_report(report)
}
