//! Run configuration loaded from TOML.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nudge_core::agents::synthetic::SyntheticCoefficients;
use nudge_core::agents::{AgentConfig, Backend};
use nudge_core::decoy_space::{DecoyGrid, DEFAULT_AREA1_LADDER};
use nudge_core::impact::ImpactConfig;
use nudge_core::personas::{enumerate_segments, Country, Segment};
use nudge_core::scenario::{FxTable, SituationRanges, DEFAULT_BOTTLES_PER_KG, DEFAULT_SITUATIONS};
use nudge_core::simulation::{Schedule, DEFAULT_SELECTION_SIZE};
use nudge_core::study::AttentionPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    /// Falls back to `$DECOY_NUDGE_API_URL`, then the OpenAI endpoint.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    /// Requests per second; unlimited when absent.
    pub rate_limit_per_sec: Option<f64>,
    pub burst: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// JSONL log of every request and reply.
    pub audit_log: Option<PathBuf>,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            endpoint: None,
            timeout_secs: 60,
            rate_limit_per_sec: None,
            burst: 10,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            audit_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoySettings {
    pub ladder: Vec<f64>,
    /// Subset of grid cell ids to sweep; all cells when empty.
    pub cells: Vec<usize>,
}

impl Default for DecoySettings {
    fn default() -> Self {
        DecoySettings { ladder: DEFAULT_AREA1_LADDER.to_vec(), cells: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub output_dir: Option<PathBuf>,
    /// Response cache for the remote backend.
    pub cache: Option<PathBuf>,
    pub respondents: Option<PathBuf>,
    /// Predicted groups, as written by `simulate`.
    pub groups: Option<PathBuf>,
    /// Impact inputs in their own TOML file.
    pub impact: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub seed: u64,
    pub n_perm: usize,
    pub n_boot: usize,
    pub ci_level: f64,
    pub attention: AttentionPolicy,
    /// Drop invalid rows instead of failing.
    pub lenient: bool,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings { seed: 0, n_perm: 1000, n_boot: 5000, ci_level: 0.95, attention: AttentionPolicy::Require, lenient: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required by `simulate`.
    pub master_seed: Option<u64>,
    /// Worker ceiling for the sweep; 1 runs sequentially. Defaults to the
    /// number of available cores.
    pub concurrency: Option<usize>,
    /// Restricts the sweep to these countries; all when empty.
    pub countries: Vec<Country>,
    /// Explicit segment keys; overrides `countries` when non-empty.
    pub segments: Vec<String>,
    pub situations: usize,
    pub bottles_per_kg: f64,
    pub selection_size: usize,
    pub segment_top_k: usize,
    pub agent: AgentConfig,
    pub synthetic: SyntheticCoefficients,
    pub remote: RemoteSettings,
    pub schedule: Schedule,
    pub decoy: DecoySettings,
    pub ranges: SituationRanges,
    pub fx: FxTable,
    pub paths: Paths,
    pub analysis: AnalysisSettings,
    pub impact: Option<ImpactConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: None,
            concurrency: None,
            countries: Vec::new(),
            segments: Vec::new(),
            situations: DEFAULT_SITUATIONS,
            bottles_per_kg: DEFAULT_BOTTLES_PER_KG,
            selection_size: DEFAULT_SELECTION_SIZE,
            segment_top_k: DEFAULT_SELECTION_SIZE,
            agent: AgentConfig::default(),
            synthetic: SyntheticCoefficients::default(),
            remote: RemoteSettings::default(),
            schedule: Schedule::default(),
            decoy: DecoySettings::default(),
            ranges: SituationRanges::default(),
            fx: FxTable::default(),
            paths: Paths::default(),
            analysis: AnalysisSettings::default(),
            impact: None,
        }
    }
}

/// A parsed config plus where it came from.
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the file bytes; empty config when no file was given.
    pub sha256: String,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).with_context(|| format!("config {} is not UTF-8", path.display()))?;
        let mut config: RunConfig = toml::from_str(text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [
            &mut config.paths.output_dir,
            &mut config.paths.cache,
            &mut config.paths.respondents,
            &mut config.paths.groups,
            &mut config.paths.impact,
            &mut config.remote.audit_log,
        ] {
            resolve(&base, p);
        }
        Ok(LoadedConfig { config, sha256: hex::encode(Sha256::digest(&bytes)) })
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<LoadedConfig> {
        match path {
            Some(p) => RunConfig::load(p),
            None => Ok(LoadedConfig { config: RunConfig::default(), sha256: hex::encode(Sha256::digest(b"")) }),
        }
    }

    pub fn segments(&self) -> Result<Vec<Segment>> {
        if !self.segments.is_empty() {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            for key in &self.segments {
                let seg = Segment::parse_key(key)?;
                if !seen.insert(seg) {
                    bail!("segment {key} listed twice");
                }
                out.push(seg);
            }
            return Ok(out);
        }
        let wanted: BTreeSet<Country> =
            if self.countries.is_empty() { Country::ALL.into_iter().collect() } else { self.countries.iter().copied().collect() };
        Ok(enumerate_segments().into_iter().filter(|s| wanted.contains(&s.country)).collect())
    }

    pub fn grid(&self) -> Result<DecoyGrid> {
        let grid = DecoyGrid::new(&self.decoy.ladder)?;
        if self.decoy.cells.is_empty() {
            Ok(grid)
        } else {
            Ok(grid.restrict(&self.decoy.cells)?)
        }
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.schedule.validate()?;
        self.ranges.validate()?;
        if self.agent.backend == Backend::Synthetic {
            self.synthetic.validate()?;
        }
        if self.situations == 0 {
            bail!("situations must be positive");
        }
        if !(self.bottles_per_kg > 0.0) {
            bail!("bottles_per_kg must be positive");
        }
        if self.selection_size == 0 || self.segment_top_k == 0 {
            bail!("selection_size and segment_top_k must be positive");
        }
        if self.concurrency == Some(0) {
            bail!("concurrency must be at least 1");
        }
        let segments = self.segments()?;
        for c in segments.iter().map(|s| s.country).collect::<BTreeSet<_>>() {
            self.fx.coefficient(c)?;
        }
        self.grid()?;
        if let Some(impact) = &self.impact {
            impact.validate()?;
        }
        if !(self.analysis.ci_level > 0.0 && self.analysis.ci_level < 1.0) {
            bail!("analysis.ci_level must lie in (0, 1)");
        }
        if self.analysis.n_perm == 0 || self.analysis.n_boot == 0 {
            bail!("analysis.n_perm and analysis.n_boot must be positive");
        }
        for (name, p) in [
            ("paths.respondents", &self.paths.respondents),
            ("paths.groups", &self.paths.groups),
            ("paths.impact", &self.paths.impact),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{name} points to {}, which does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// Impact inputs from `[impact]` or from the file under `paths.impact`.
    pub fn impact_inputs(&self) -> Result<Option<ImpactConfig>> {
        if let Some(i) = &self.impact {
            return Ok(Some(i.clone()));
        }
        match &self.paths.impact {
            Some(p) => Ok(Some(load_impact(p)?)),
            None => Ok(None),
        }
    }
}

pub fn load_impact(path: &Path) -> Result<ImpactConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading impact inputs {}", path.display()))?;
    let cfg: ImpactConfig = toml::from_str(&text).with_context(|| format!("parsing impact inputs {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}
