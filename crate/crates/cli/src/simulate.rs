//! `simulate`: the sweep and its selection artifacts.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::{LoadedConfig, RunConfig};
use crate::manifest::{write_artifact, write_manifest, Manifest};
use nudge_core::agents::cache::ResponseCache;
use nudge_core::agents::rate_limit::TokenBucket;
use nudge_core::agents::remote::{HttpTransport, RemoteAgent, RetryPolicy, DEFAULT_API_URL, ENV_API_KEY, ENV_API_URL};
use nudge_core::agents::synthetic::SyntheticAgent;
use nudge_core::agents::{Backend, ChoiceAgent};
use nudge_core::decoy_space::DecoyGrid;
use nudge_core::exec::{Execution, Executor};
use nudge_core::personas::{write_segments_csv, Country};
use nudge_core::scenario::draw_situations;
use nudge_core::simulation::{
    analyze_sweep, run_sweep, sweep_fingerprint, write_heatmap_csv, write_sweep_csv, Checkpoint, Schedule, SweepAnalysis,
    SweepPlan,
};
use nudge_core::study::write_groups_csv;

pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub concurrency: Option<usize>,
}

pub fn api_key() -> Result<String> {
    std::env::var(ENV_API_KEY)
        .or_else(|_| std::env::var("OPENAI_API_KEY"))
        .map_err(|_| anyhow::anyhow!("remote_llm backend needs an API key in ${ENV_API_KEY} (or $OPENAI_API_KEY)"))
}

fn build_agent(cfg: &RunConfig, out: &std::path::Path) -> Result<Box<dyn ChoiceAgent>> {
    match cfg.agent.backend {
        Backend::Synthetic => Ok(Box::new(SyntheticAgent::new(cfg.synthetic.clone(), cfg.agent.temperature)?)),
        Backend::RemoteLlm => {
            let key = api_key()?;
            let endpoint = cfg
                .remote
                .endpoint
                .clone()
                .or_else(|| std::env::var(ENV_API_URL).ok())
                .unwrap_or_else(|| DEFAULT_API_URL.to_string());
            let transport = HttpTransport::new(endpoint, key, Duration::from_secs(cfg.remote.timeout_secs));
            let cache_path = cfg.paths.cache.clone().unwrap_or_else(|| out.join("responses.jsonl"));
            let mut agent = RemoteAgent::new(cfg.agent.clone(), Arc::new(transport))?
                .with_cache(Arc::new(ResponseCache::open(&cache_path)?))
                .with_retry(RetryPolicy { base_delay_ms: cfg.remote.base_delay_ms, max_delay_ms: cfg.remote.max_delay_ms });
            if let Some(rate) = cfg.remote.rate_limit_per_sec {
                if !(rate > 0.0) {
                    bail!("remote.rate_limit_per_sec must be positive");
                }
                agent = agent.with_rate_limit(Arc::new(TokenBucket::new(cfg.remote.burst.max(1), rate)));
            }
            if let Some(log) = &cfg.remote.audit_log {
                agent = agent.with_audit_log(log)?;
            }
            Ok(Box::new(agent))
        }
    }
}

#[derive(Serialize)]
struct SimulateDetails {
    master_seed: u64,
    agent: String,
    fingerprint: String,
    segments: usize,
    cells: usize,
    situations: usize,
    schedule: Schedule,
    calls_per_cell: usize,
    calls_per_segment: usize,
    total_calls: u64,
    invalid_rate: f64,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> nudge_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn selection_csv(analysis: &SweepAnalysis, grid: &DecoyGrid) -> Result<Vec<u8>> {
    let mut out = String::from("country,selection,rank,cell_id,mu,offset_fraction,delta\n");
    for (country, sel) in &analysis.country_selection {
        let effects = &analysis.effects.by_country[country];
        for (kind, ids) in [("optimal", &sel.optimal), ("non_optimal", &sel.non_optimal)] {
            for (rank, &id) in ids.iter().enumerate() {
                let c = grid.cells()[id];
                out += &format!(
                    "{},{kind},{},{id},{:.2},{:.2},{}\n",
                    country.code(),
                    rank + 1,
                    c.mu,
                    c.offset_fraction,
                    effects[id].delta
                );
            }
        }
    }
    Ok(out.into_bytes())
}

fn segment_optimal_csv(analysis: &SweepAnalysis, grid: &DecoyGrid) -> Result<Vec<u8>> {
    let mut out = String::from("segment,rank,cell_id,mu,offset_fraction,delta\n");
    for (seg, ids) in &analysis.segment_optimal.by_segment {
        let effects = &analysis.effects.by_segment[seg];
        for (rank, &id) in ids.iter().enumerate() {
            let c = grid.cells()[id];
            out += &format!("{},{},{id},{:.2},{:.2},{}\n", seg.key(), rank + 1, c.mu, c.offset_fraction, effects[id].delta);
        }
    }
    Ok(out.into_bytes())
}

pub fn run(loaded: LoadedConfig, ov: Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let seed = ov.seed.or(cfg.master_seed).context("simulate needs a master seed: set master_seed or pass --seed")?;
    cfg.validate()?;
    if cfg.agent.backend == Backend::RemoteLlm {
        api_key()?;
    }
    let out = ov.out.clone().or(cfg.paths.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out/simulate"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let segments = cfg.segments()?;
    let grid = cfg.grid()?;
    let plan = SweepPlan {
        master_seed: seed,
        draws: draw_situations(seed, cfg.situations, &cfg.ranges)?,
        fx: cfg.fx.clone(),
        bottles_per_kg: cfg.bottles_per_kg,
        schedule: cfg.schedule,
    };
    let agent = build_agent(cfg, &out)?;
    let ceiling = ov
        .concurrency
        .or(cfg.concurrency)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if ceiling == 0 {
        bail!("concurrency must be at least 1");
    }
    let executor = Executor::new(Execution::with_ceiling(ceiling));
    let fingerprint = sweep_fingerprint(&plan, &grid, agent.as_ref())?;
    let checkpoint = Checkpoint::open(out.join("checkpoint.jsonl"), &fingerprint)?;
    if !checkpoint.is_empty() {
        eprintln!("resuming: {} finished (segment, cell) runs found", checkpoint.len());
    }

    let result = run_sweep(&plan, &segments, &grid, agent.as_ref(), &executor, Some(&checkpoint))?;
    let analysis = analyze_sweep(&result, &grid, cfg.selection_size, cfg.segment_top_k)?;

    let mut outputs = BTreeMap::new();
    write_artifact(&out, "segments.csv", &csv_bytes(|b| write_segments_csv(&segments, b))?, &mut outputs)?;
    write_artifact(&out, "grid.csv", &csv_bytes(|b| grid.write_csv(b))?, &mut outputs)?;
    write_artifact(&out, "sweep.csv", &csv_bytes(|b| write_sweep_csv(&result, &analysis, &grid, b))?, &mut outputs)?;
    write_artifact(&out, "country_cells.csv", &selection_csv(&analysis, &grid)?, &mut outputs)?;
    write_artifact(&out, "segment_optimal.csv", &segment_optimal_csv(&analysis, &grid)?, &mut outputs)?;
    write_artifact(&out, "groups.csv", &csv_bytes(|b| write_groups_csv(&analysis.groups, b))?, &mut outputs)?;

    for (country, effects) in &analysis.effects.by_country {
        let deltas: Vec<f64> = effects.iter().map(|e| e.delta).collect();
        let rel = format!("heatmaps/delta_{}.csv", country.code());
        write_artifact(&out, &rel, &csv_bytes(|b| write_heatmap_csv(&grid, &deltas, b))?, &mut outputs)?;
    }
    let mut counts: BTreeMap<Country, Vec<f64>> = BTreeMap::new();
    for (seg, ids) in &analysis.segment_optimal.by_segment {
        let row = counts.entry(seg.country).or_insert_with(|| vec![0.0; grid.len()]);
        for &id in ids {
            row[id] += 1.0;
        }
    }
    for (country, values) in &counts {
        let rel = format!("heatmaps/segment_optimal_{}.csv", country.code());
        write_artifact(&out, &rel, &csv_bytes(|b| write_heatmap_csv(&grid, values, b))?, &mut outputs)?;
    }

    let calls_per_cell = cfg.schedule.calls_per_cell(plan.draws.len());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        config_sha256: loaded.sha256.clone(),
        details: SimulateDetails {
            master_seed: seed,
            agent: agent.describe(),
            fingerprint,
            segments: segments.len(),
            cells: grid.len(),
            situations: plan.draws.len(),
            schedule: cfg.schedule,
            calls_per_cell,
            calls_per_segment: calls_per_cell * (grid.len() + 1),
            total_calls: result.total_calls(),
            invalid_rate: result.invalid_rate(),
        },
        outputs,
    };
    write_manifest(&out, &manifest)?;
    eprintln!(
        "simulated {} segments x {} conditions ({} calls, invalid rate {:.4}) into {}",
        segments.len(),
        grid.len() + 1,
        result.total_calls(),
        result.invalid_rate(),
        out.display()
    );
    Ok(())
}
