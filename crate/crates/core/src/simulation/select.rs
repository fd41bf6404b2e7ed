//! Per-cell effects and decoy selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::OffsettingEstimate;
use crate::decoy_space::{DecoyCell, DecoyGrid};
use crate::error::{Error, Result};
use crate::personas::{Country, Segment};

pub const DEFAULT_SELECTION_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEffect {
    pub cell_id: usize,
    pub cell: DecoyCell,
    /// Decoy-condition probability minus the no-decoy probability.
    pub delta: f64,
}

/// Effects per segment and averaged per country, each indexed by cell id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub by_segment: BTreeMap<Segment, Vec<CellEffect>>,
    pub by_country: BTreeMap<Country, Vec<CellEffect>>,
}

pub fn cell_effects(
    grid: &DecoyGrid,
    baseline: &BTreeMap<Segment, OffsettingEstimate>,
    per_cell: &BTreeMap<Segment, Vec<OffsettingEstimate>>,
) -> Result<EffectTable> {
    if let Some(seg) = per_cell.keys().find(|s| !baseline.contains_key(s)) {
        return Err(Error::MissingSegment(format!("{} has no baseline estimate", seg.key())));
    }
    let mut by_segment = BTreeMap::new();
    for (seg, base) in baseline {
        let cells = per_cell
            .get(seg)
            .ok_or_else(|| Error::MissingSegment(format!("{} has no decoy estimates", seg.key())))?;
        if cells.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} has {} cell estimates, grid has {}",
                seg.key(),
                cells.len(),
                grid.len()
            )));
        }
        let effects = grid
            .cells()
            .iter()
            .zip(cells)
            .enumerate()
            .map(|(id, (cell, est))| CellEffect { cell_id: id, cell: *cell, delta: est.probability - base.probability })
            .collect();
        by_segment.insert(*seg, effects);
    }

    let mut by_country = BTreeMap::new();
    for country in Country::ALL {
        let members: Vec<&Vec<CellEffect>> =
            by_segment.iter().filter(|(s, _)| s.country == country).map(|(_, e)| e).collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let averaged = grid
            .cells()
            .iter()
            .enumerate()
            .map(|(id, cell)| CellEffect {
                cell_id: id,
                cell: *cell,
                delta: members.iter().map(|e| e[id].delta).sum::<f64>() / n,
            })
            .collect();
        by_country.insert(country, averaged);
    }
    Ok(EffectTable { by_segment, by_country })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSelection {
    /// Largest deltas first.
    pub optimal: Vec<usize>,
    /// Smallest deltas first.
    pub non_optimal: Vec<usize>,
}

/// Cell ids ranked by delta, descending; ties go to the lower id.
fn ranked_desc(effects: &[CellEffect]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..effects.len()).collect();
    ids.sort_by(|&a, &b| effects[b].delta.total_cmp(&effects[a].delta).then(effects[a].cell_id.cmp(&effects[b].cell_id)));
    ids.into_iter().map(|i| effects[i].cell_id).collect()
}

fn ranked_asc(effects: &[CellEffect]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..effects.len()).collect();
    ids.sort_by(|&a, &b| effects[a].delta.total_cmp(&effects[b].delta).then(effects[a].cell_id.cmp(&effects[b].cell_id)));
    ids.into_iter().map(|i| effects[i].cell_id).collect()
}

/// Top and bottom cells of a country's averaged effects.
///
/// `expected_cells` is the grid size; anything shorter is rejected. The
/// selection size shrinks to the cell count for grids smaller than it.
pub fn select_country_cells(effects: &[CellEffect], expected_cells: usize, size: usize) -> Result<CellSelection> {
    if effects.len() < expected_cells {
        return Err(Error::InvalidInput(format!(
            "selection needs {expected_cells} cells, got {}",
            effects.len()
        )));
    }
    if effects.iter().any(|e| !e.delta.is_finite()) {
        return Err(Error::InvalidInput("non-finite delta in selection input".into()));
    }
    let k = size.min(effects.len());
    Ok(CellSelection {
        optimal: ranked_desc(effects).into_iter().take(k).collect(),
        non_optimal: ranked_asc(effects).into_iter().take(k).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOptimal {
    pub by_segment: BTreeMap<Segment, Vec<usize>>,
    /// Indexed by cell id: number of segments listing the cell among their top cells.
    pub counts: Vec<usize>,
}

pub fn select_segment_optimal(effects: &BTreeMap<Segment, Vec<CellEffect>>, n_cells: usize, top_k: usize) -> Result<SegmentOptimal> {
    let mut by_segment = BTreeMap::new();
    let mut counts = vec![0usize; n_cells];
    for (seg, e) in effects {
        if e.len() != n_cells {
            return Err(Error::InvalidInput(format!("{} has {} cells, expected {n_cells}", seg.key(), e.len())));
        }
        let top: Vec<usize> = ranked_desc(e).into_iter().take(top_k.min(n_cells)).collect();
        for &id in &top {
            counts[id] += 1;
        }
        by_segment.insert(*seg, top);
    }
    Ok(SegmentOptimal { by_segment, counts })
}

/// Each segment's mean delta over its country's optimal cells.
pub fn country_optimal_deltas(table: &EffectTable, selections: &BTreeMap<Country, CellSelection>) -> Result<BTreeMap<Segment, f64>> {
    let mut out = BTreeMap::new();
    for (seg, effects) in &table.by_segment {
        let sel = selections
            .get(&seg.country)
            .ok_or_else(|| Error::InvalidInput(format!("no cell selection for {}", seg.country)))?;
        if sel.optimal.is_empty() {
            return Err(Error::InvalidInput(format!("empty optimal set for {}", seg.country)));
        }
        let mean = sel.optimal.iter().map(|&id| effects[id].delta).sum::<f64>() / sel.optimal.len() as f64;
        out.insert(*seg, mean);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedGroups {
    /// 1 when the baseline offsetting probability is exactly 1.
    pub offset_group: u8,
    /// 1 when the country-optimal decoy raises the probability.
    pub decoy_group: u8,
}

pub fn predicted_groups(
    baseline: &BTreeMap<Segment, OffsettingEstimate>,
    country_optimal_delta: &BTreeMap<Segment, f64>,
) -> Result<BTreeMap<Segment, PredictedGroups>> {
    let mut out = BTreeMap::new();
    for (seg, base) in baseline {
        let delta = country_optimal_delta
            .get(seg)
            .ok_or_else(|| Error::MissingSegment(format!("{} has no country-optimal delta", seg.key())))?;
        out.insert(
            *seg,
            PredictedGroups {
                offset_group: if base.probability == 1.0 { 1 } else { 2 },
                decoy_group: if *delta > 0.0 { 1 } else { 2 },
            },
        );
    }
    Ok(out)
}
