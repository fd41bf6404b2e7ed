//! `analyze`: screening, the hypothesis battery and the exploratory tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::manifest::{write_artifact, write_manifest, Manifest};
use nudge_core::exec::Executor;
use nudge_core::personas::Country;
use nudge_core::study::ingest::{Exclusion, ScreenCounts};
use nudge_core::study::{
    cross_check_group_sizes, load_groups, load_respondents, load_respondents_lenient, run_battery, run_exploratory, screen,
    ExploratoryOptions, HypothesisReport, Thresholds, ValidationReport, REFERENCE_TARGET_GROUP,
};

pub struct Overrides {
    pub respondents: Option<PathBuf>,
    pub groups: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_perm: Option<usize>,
    pub n_boot: Option<usize>,
    pub check_reference_groups: bool,
}

fn open(kind: &str, path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {kind} file {}", path.display()))
}

#[derive(Serialize)]
struct ScreeningReport<'a> {
    validation: &'a ValidationReport,
    counts: &'a BTreeMap<Country, ScreenCounts>,
    excluded: &'a [Exclusion],
}

#[derive(Serialize)]
struct AnalyzeDetails {
    respondents_file: String,
    groups_file: String,
    seed: u64,
    n_perm: usize,
    n_boot: usize,
    respondents_loaded: usize,
    respondents_excluded: usize,
    respondents_analyzed: usize,
    thresholds: Thresholds,
    decisions: BTreeMap<String, String>,
}

fn battery_markdown(reports: &[HypothesisReport]) -> String {
    let mut s = String::from("## Confirmatory hypotheses\n\n");
    s += "| Hypothesis | Omnibus statistic | Omnibus p | Comparison | Statistic | z | p | alpha | Decision |\n";
    s += "|---|---|---|---|---|---|---|---|---|\n";
    for r in reports {
        let (ostat, op) = match &r.omnibus {
            Some(o) => (format!("{:.3}", o.statistic), format!("{:.3e}", o.p_two_sided)),
            None => (String::new(), String::new()),
        };
        if r.pairwise.is_empty() {
            s += &format!("| {} | {ostat} | {op} | (not run) | | | | {} | {} |\n", r.id, r.threshold, r.decision.as_str());
        }
        for (i, p) in r.pairwise.iter().enumerate() {
            let (id, os, opv, dec) =
                if i == 0 { (r.id.as_str(), ostat.as_str(), op.as_str(), r.decision.as_str()) } else { ("", "", "", "") };
            s += &format!(
                "| {id} | {os} | {opv} | {} ({}) | {:.1} | {:.3} | {:.3e} | {} | {dec} |\n",
                p.label,
                p.decision.as_str(),
                p.result.statistic,
                p.result.z.unwrap_or(0.0),
                p.result.p_two_sided,
                p.threshold
            );
        }
    }
    s
}

pub fn run(loaded: LoadedConfig, ov: Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let respondents = ov
        .respondents
        .clone()
        .or(cfg.paths.respondents.clone())
        .context("analyze needs a respondent file: pass --respondents or set paths.respondents")?;
    let groups_path = ov
        .groups
        .clone()
        .or(cfg.paths.groups.clone())
        .context("analyze needs a predicted-groups file: pass --groups or set paths.groups")?;
    let out = ov.out.clone().or(cfg.paths.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out/analyze"));
    let settings = &cfg.analysis;
    let seed = ov.seed.unwrap_or(settings.seed);
    let n_perm = ov.n_perm.unwrap_or(settings.n_perm);
    let n_boot = ov.n_boot.unwrap_or(settings.n_boot);

    let source = open("respondent", &respondents)?;
    let (records, validation) = if settings.lenient {
        load_respondents_lenient(source)
    } else {
        load_respondents(source)
    }
    .with_context(|| format!("loading respondents from {}", respondents.display()))?;
    for d in &validation.diagnostics {
        eprintln!("warning: {d}");
    }
    let groups =
        load_groups(open("groups", &groups_path)?).with_context(|| format!("loading groups from {}", groups_path.display()))?;
    let loaded_n = records.len();
    let screened = screen(records, settings.attention)?;
    if ov.check_reference_groups {
        for w in cross_check_group_sizes(&screened.included, &groups, &REFERENCE_TARGET_GROUP) {
            eprintln!("warning: {w}");
        }
    }

    let thresholds = Thresholds::default();
    let battery = run_battery(&screened.included, &groups, &thresholds)?;
    let opts = ExploratoryOptions { seed, n_perm, n_boot, ci_level: settings.ci_level };
    let exploratory = run_exploratory(&screened.included, &groups, &thresholds, &opts, &Executor::sequential())?;

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = BTreeMap::new();
    let screening = ScreeningReport { validation: &validation, counts: &screened.counts, excluded: &screened.excluded };
    write_artifact(&out, "screening.json", &serde_json::to_vec_pretty(&screening)?, &mut outputs)?;
    write_artifact(&out, "hypotheses.json", &serde_json::to_vec_pretty(&battery)?, &mut outputs)?;
    write_artifact(&out, "exploratory.json", &serde_json::to_vec_pretty(&exploratory)?, &mut outputs)?;

    let mut md = format!("# Survey analysis\n\n{}\n\n", thresholds.describe());
    md += "## Screening\n\n| Country | Loaded | Excluded | Analysed |\n|---|---|---|---|\n";
    for (c, n) in &screened.counts {
        md += &format!("| {} | {} | {} | {} |\n", c.code(), n.loaded, n.excluded, n.included);
    }
    md += "\n";
    md += &battery_markdown(&battery);
    md += "\n## Exploratory analyses\n\n";
    for (stem, table) in exploratory.tables() {
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_artifact(&out, &format!("tables/{stem}.csv"), &buf, &mut outputs)?;
        md += &table.to_markdown();
        md += "\n";
    }
    write_artifact(&out, "report.md", md.as_bytes(), &mut outputs)?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "analyze",
        config_sha256: loaded.sha256.clone(),
        details: AnalyzeDetails {
            respondents_file: respondents.display().to_string(),
            groups_file: groups_path.display().to_string(),
            seed,
            n_perm,
            n_boot,
            respondents_loaded: loaded_n,
            respondents_excluded: screened.excluded.len(),
            respondents_analyzed: screened.included.len(),
            thresholds,
            decisions: battery.iter().map(|r| (r.id.clone(), r.decision.as_str().to_string())).collect(),
        },
        outputs,
    };
    write_manifest(&out, &manifest)?;
    for r in &battery {
        println!("{}: {}", r.id, r.decision.as_str());
    }
    eprintln!("analysed {} of {} respondents into {}", screened.included.len(), loaded_n, out.display());
    Ok(())
}
