//! Full factorial sweep over segments × (baseline + grid cells), with
//! checkpointing and CSV export.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::select::{
    cell_effects, country_optimal_deltas, predicted_groups, select_country_cells, select_segment_optimal, CellSelection,
    EffectTable, PredictedGroups, SegmentOptimal,
};
use super::{offsetting_probability, run_cell, OffsettingEstimate, ProbabilityMode, ResponseTally, SweepPlan};
use crate::agents::ChoiceAgent;
use crate::decoy_space::{DecoyGrid, AREA2_MU, AREA2_OFFSETS};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::personas::{Country, Segment};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointRecord {
    fingerprint: String,
    segment: String,
    cell_id: Option<usize>,
    tally: ResponseTally,
}

/// Append-only JSONL record of finished (segment, cell) tallies.
///
/// Records written under a different fingerprint are ignored on load, so a
/// changed configuration never reuses stale tallies.
pub struct Checkpoint {
    fingerprint: String,
    done: HashMap<(String, Option<usize>), ResponseTally>,
    file: Mutex<File>,
}

impl Checkpoint {
    pub fn open(path: impl AsRef<Path>, fingerprint: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut done = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                // A torn final line from an interrupted run is skipped.
                let Ok(rec) = serde_json::from_str::<CheckpointRecord>(&line) else { continue };
                if rec.fingerprint == fingerprint {
                    done.insert((rec.segment, rec.cell_id), rec.tally);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Checkpoint { fingerprint: fingerprint.to_string(), done, file: Mutex::new(file) })
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    fn get(&self, segment: &Segment, cell_id: Option<usize>) -> Option<ResponseTally> {
        self.done.get(&(segment.key(), cell_id)).copied()
    }

    fn record(&self, segment: &Segment, cell_id: Option<usize>, tally: &ResponseTally) -> Result<()> {
        let rec = CheckpointRecord { fingerprint: self.fingerprint.clone(), segment: segment.key(), cell_id, tally: *tally };
        let mut line = serde_json::to_vec(&rec)?;
        line.push(b'\n');
        let mut f = self.file.lock().expect("checkpoint file poisoned");
        f.write_all(&line)?;
        f.flush()?;
        Ok(())
    }
}

/// Raw tallies of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub baseline: BTreeMap<Segment, ResponseTally>,
    /// Indexed by cell id.
    pub per_cell: BTreeMap<Segment, Vec<ResponseTally>>,
}

impl SweepResult {
    pub fn total_calls(&self) -> u64 {
        self.baseline.values().chain(self.per_cell.values().flatten()).map(|t| t.total()).sum()
    }

    pub fn invalid_rate(&self) -> f64 {
        let total = self.total_calls();
        if total == 0 {
            return 0.0;
        }
        let invalid: u64 = self.baseline.values().chain(self.per_cell.values().flatten()).map(|t| t.n_invalid).sum();
        invalid as f64 / total as f64
    }

    pub fn estimates(&self) -> Result<(BTreeMap<Segment, OffsettingEstimate>, BTreeMap<Segment, Vec<OffsettingEstimate>>)> {
        let baseline = self
            .baseline
            .iter()
            .map(|(s, t)| Ok((*s, offsetting_probability(t, ProbabilityMode::Pairwise)?)))
            .collect::<Result<_>>()?;
        let per_cell = self
            .per_cell
            .iter()
            .map(|(s, ts)| {
                let est = ts.iter().map(|t| offsetting_probability(t, ProbabilityMode::Decoy)).collect::<Result<_>>()?;
                Ok((*s, est))
            })
            .collect::<Result<_>>()?;
        Ok((baseline, per_cell))
    }
}

/// Fingerprint of everything that determines a sweep's tallies.
pub fn sweep_fingerprint(plan: &SweepPlan, grid: &DecoyGrid, agent: &dyn ChoiceAgent) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(plan)?);
    h.update(serde_json::to_vec(grid)?);
    h.update(agent.describe().as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Runs the baseline and every grid cell for each segment.
///
/// Cells run one after another; the calls inside a cell fan out over the
/// executor. Finished cells found in `checkpoint` are not re-run.
pub fn run_sweep(
    plan: &SweepPlan,
    segments: &[Segment],
    grid: &DecoyGrid,
    agent: &dyn ChoiceAgent,
    executor: &Executor,
    checkpoint: Option<&Checkpoint>,
) -> Result<SweepResult> {
    let mut baseline = BTreeMap::new();
    let mut per_cell = BTreeMap::new();
    for seg in segments {
        let run = |cell_id: Option<usize>| -> Result<ResponseTally> {
            if let Some(t) = checkpoint.and_then(|c| c.get(seg, cell_id)) {
                return Ok(t);
            }
            let cell = cell_id.map(|id| (id, &grid.cells()[id]));
            let tally = run_cell(plan, seg, cell, agent, executor)?;
            if let Some(c) = checkpoint {
                c.record(seg, cell_id, &tally)?;
            }
            Ok(tally)
        };
        baseline.insert(*seg, run(None)?);
        let cells = (0..grid.len()).map(|id| run(Some(id))).collect::<Result<Vec<_>>>()?;
        per_cell.insert(*seg, cells);
    }
    Ok(SweepResult { baseline, per_cell })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAnalysis {
    pub baseline: BTreeMap<Segment, OffsettingEstimate>,
    pub per_cell: BTreeMap<Segment, Vec<OffsettingEstimate>>,
    pub effects: EffectTable,
    pub country_selection: BTreeMap<Country, CellSelection>,
    pub segment_optimal: SegmentOptimal,
    pub country_optimal_delta: BTreeMap<Segment, f64>,
    pub groups: BTreeMap<Segment, PredictedGroups>,
}

pub fn analyze_sweep(result: &SweepResult, grid: &DecoyGrid, selection_size: usize, segment_top_k: usize) -> Result<SweepAnalysis> {
    let (baseline, per_cell) = result.estimates()?;
    let effects = cell_effects(grid, &baseline, &per_cell)?;
    let country_selection = effects
        .by_country
        .iter()
        .map(|(c, e)| Ok((*c, select_country_cells(e, grid.len(), selection_size)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let segment_optimal = select_segment_optimal(&effects.by_segment, grid.len(), segment_top_k)?;
    let country_optimal_delta = country_optimal_deltas(&effects, &country_selection)?;
    let groups = predicted_groups(&baseline, &country_optimal_delta)?;
    Ok(SweepAnalysis { baseline, per_cell, effects, country_selection, segment_optimal, country_optimal_delta, groups })
}

/// One row per (segment, baseline or cell): tallies, probability and delta.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, analysis: &SweepAnalysis, grid: &DecoyGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "segment", "cell_id", "mu", "offset_fraction", "n_target", "n_competitor", "n_decoy", "n_invalid", "probability",
        "delta",
    ])?;
    for (seg, base) in &result.baseline {
        let p = analysis.baseline.get(seg).ok_or_else(|| Error::MissingSegment(seg.key()))?;
        w.write_record([
            seg.key(),
            String::new(),
            String::new(),
            String::new(),
            base.n_target.to_string(),
            base.n_competitor.to_string(),
            base.n_decoy.to_string(),
            base.n_invalid.to_string(),
            p.probability.to_string(),
            String::new(),
        ])?;
        let tallies = result.per_cell.get(seg).ok_or_else(|| Error::MissingSegment(seg.key()))?;
        let effects = analysis.effects.by_segment.get(seg).ok_or_else(|| Error::MissingSegment(seg.key()))?;
        let estimates = analysis.per_cell.get(seg).ok_or_else(|| Error::MissingSegment(seg.key()))?;
        for (id, ((t, e), est)) in tallies.iter().zip(effects).zip(estimates).enumerate() {
            let cell = grid.cells()[id];
            w.write_record([
                seg.key(),
                id.to_string(),
                format!("{:.2}", cell.mu),
                format!("{:.2}", cell.offset_fraction),
                t.n_target.to_string(),
                t.n_competitor.to_string(),
                t.n_decoy.to_string(),
                t.n_invalid.to_string(),
                est.probability.to_string(),
                e.delta.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Heatmap grid: one row per offset fraction (descending), one column per μ
/// (ascending). Cells outside the grid are left empty.
pub fn write_heatmap_csv<W: Write>(grid: &DecoyGrid, values: &[f64], out: W) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidInput(format!("heatmap needs {} values, got {}", grid.len(), values.len())));
    }
    let mut mus: Vec<f64> = AREA2_MU.to_vec();
    mus.extend(crate::decoy_space::AREA1_MU);
    let mut offsets: Vec<f64> = grid.ladder().to_vec();
    offsets.extend(AREA2_OFFSETS);
    offsets.sort_by(|a, b| b.total_cmp(a));
    offsets.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["offset_fraction".to_string()];
    header.extend(mus.iter().map(|m| format!("mu={m:.2}")));
    w.write_record(&header)?;
    for off in offsets {
        let mut row = vec![format!("{off:.2}")];
        for &mu in &mus {
            let v = grid
                .id_of(&crate::decoy_space::DecoyCell::new(mu, off))
                .map(|id| values[id].to_string())
                .unwrap_or_default();
            row.push(v);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
