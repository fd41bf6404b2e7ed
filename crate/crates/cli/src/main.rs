//! `decoy-nudge`: simulation sweep, survey analysis and impact accounting.

mod analyze;
mod config;
mod manifest;
mod simulate;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use nudge_core::decoy_space::{DecoyGrid, DEFAULT_AREA1_LADDER};
use nudge_core::impact::{compute_impact, write_impact_csv};
use nudge_core::personas::Country;
use nudge_core::study::{generate_fixture, write_groups_csv, write_respondents_csv, FixtureSpec};

#[derive(Parser)]
#[command(name = "decoy-nudge", version, about = "Decoy-nudge simulation, survey analysis and CO2 impact accounting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArg {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the segment × decoy-cell sweep and write the selection artifacts.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `paths.output_dir`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Overrides `concurrency`.
        #[arg(long)]
        concurrency: Option<usize>,
    },
    /// Run the hypothesis battery and exploratory analyses on respondent data.
    Analyze {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `paths.respondents`.
        #[arg(long)]
        respondents: Option<PathBuf>,
        /// Overrides `paths.groups`.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Overrides `analysis.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `analysis.n_perm`.
        #[arg(long)]
        n_perm: Option<usize>,
        /// Overrides `analysis.n_boot`.
        #[arg(long)]
        n_boot: Option<usize>,
        /// Compare decoy-group sizes with the published survey counts.
        #[arg(long)]
        check_reference_groups: bool,
    },
    /// Compute the CO2 impact table.
    Impact {
        #[command(flatten)]
        config: ConfigArg,
        /// Impact inputs TOML; overrides the config's `[impact]` and `paths.impact`.
        #[arg(long)]
        inputs: Option<PathBuf>,
        /// Directory for impact.csv and impact.json; the CSV always goes to stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a configuration without running anything.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Write the decoy grid as CSV.
    ExportGrid {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated Area-I offset ladder; overrides the config.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<f64>>,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic respondent file and matching predicted groups.
    GenerateFixture {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_country: Option<usize>,
        /// Comma-separated country codes.
        #[arg(long, value_delimiter = ',')]
        countries: Option<Vec<Country>>,
        #[arg(long)]
        scenarios_per_condition: Option<u32>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, seed, out, concurrency } => {
            let loaded = RunConfig::load_or_default(config.config.as_deref())?;
            simulate::run(loaded, simulate::Overrides { seed, out, concurrency })
        }
        Command::Analyze { config, respondents, groups, out, seed, n_perm, n_boot, check_reference_groups } => {
            let loaded = RunConfig::load_or_default(config.config.as_deref())?;
            analyze::run(
                loaded,
                analyze::Overrides { respondents, groups, out, seed, n_perm, n_boot, check_reference_groups },
            )
        }
        Command::Impact { config, inputs, out } => impact(config.config.as_deref(), inputs.as_deref(), out.as_deref()),
        Command::ValidateConfig { config } => validate_config(config.config.as_deref()),
        Command::ExportGrid { config, ladder, out } => export_grid(config.config.as_deref(), ladder, out.as_deref()),
        Command::GenerateFixture { out, seed, per_country, countries, scenarios_per_condition } => {
            let mut spec = FixtureSpec::default();
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = per_country {
                spec.respondents_per_country = n;
            }
            if let Some(c) = countries {
                spec.countries = c;
            }
            if let Some(k) = scenarios_per_condition {
                spec.scenarios_per_condition = k;
            }
            generate(&spec, &out)
        }
    }
}

fn impact(config: Option<&Path>, inputs: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = match inputs {
        Some(p) => config::load_impact(p)?,
        None => {
            let loaded = RunConfig::load_or_default(config)?;
            loaded
                .config
                .impact_inputs()?
                .context("no impact inputs: pass --inputs or set [impact] / paths.impact in the config")?
        }
    };
    let table = compute_impact(&cfg)?;
    let mut csv = Vec::new();
    write_impact_csv(&table, &mut csv)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("impact.csv"), &csv)?;
        std::fs::write(dir.join("impact.json"), serde_json::to_vec_pretty(&table)?)?;
    }
    std::io::stdout().write_all(&csv)?;
    Ok(())
}

fn validate_config(path: Option<&Path>) -> Result<()> {
    let loaded = RunConfig::load_or_default(path)?;
    let cfg = &loaded.config;
    cfg.validate()?;
    if cfg.agent.backend == nudge_core::agents::Backend::RemoteLlm {
        simulate::api_key()?;
    }
    let segments = cfg.segments()?.len();
    let cells = cfg.grid()?.len();
    let per_cell = cfg.schedule.calls_per_cell(cfg.situations);
    println!("config ok ({})", loaded.sha256);
    println!("segments: {segments}");
    println!("cells: {cells} (+ no-decoy baseline)");
    println!("calls per (segment, cell): {per_cell}");
    println!("calls per segment: {}", per_cell * (cells + 1));
    println!("total calls: {}", per_cell * (cells + 1) * segments);
    Ok(())
}

fn export_grid(config: Option<&Path>, ladder: Option<Vec<f64>>, out: Option<&Path>) -> Result<()> {
    let grid = match ladder {
        Some(l) => DecoyGrid::new(&l)?,
        None if config.is_some() => RunConfig::load_or_default(config)?.config.grid()?,
        None => DecoyGrid::new(&DEFAULT_AREA1_LADDER)?,
    };
    let mut buf = Vec::new();
    grid.write_csv(&mut buf)?;
    match out {
        Some(p) => std::fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn generate(spec: &FixtureSpec, out: &Path) -> Result<()> {
    let fixture = generate_fixture(spec)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut buf = Vec::new();
    write_respondents_csv(&fixture.records, &mut buf)?;
    std::fs::write(out.join("respondents.csv"), &buf)?;
    let mut buf = Vec::new();
    write_groups_csv(&fixture.groups, &mut buf)?;
    std::fs::write(out.join("groups.csv"), &buf)?;
    std::fs::write(out.join("fixture.json"), serde_json::to_vec_pretty(spec)?)?;
    eprintln!("wrote {} respondents to {}", fixture.records.len(), out.display());
    Ok(())
}
