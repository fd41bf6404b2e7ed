//! The 45-cell decoy grid and decoy attribute arithmetic.
//!
//! Area I holds dominated decoys: priced at or above the target and offsetting
//! no more than it. Area II holds decoys slightly cheaper than the target but
//! with a much smaller offset. Cell ids follow the stable order: Area I by μ
//! ascending then offset descending, followed by Area II in the same order.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AREA1_MU: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const AREA2_MU: [f64; 2] = [-0.2, -0.1];
pub const AREA2_OFFSETS: [f64; 5] = [0.7, 0.6, 0.5, 0.4, 0.3];
pub const DEFAULT_AREA1_LADDER: [f64; 6] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5];

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyCell {
    pub mu: f64,
    pub offset_fraction: f64,
}

impl DecoyCell {
    pub fn new(mu: f64, offset_fraction: f64) -> Self {
        DecoyCell { mu, offset_fraction }
    }

    pub fn is_degenerate(&self) -> bool {
        self.mu.abs() < EPS && (self.offset_fraction - 1.0).abs() < EPS
    }

    /// Short label such as `mu+0.30_off0.50`.
    pub fn label(&self) -> String {
        format!("mu{:+.2}_off{:.2}", self.mu, self.offset_fraction)
    }
}

impl fmt::Display for DecoyCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoyArea {
    #[serde(rename = "area_i_dominated")]
    AreaIDominated,
    #[serde(rename = "area_ii_nondominated")]
    AreaIINondominated,
}

impl DecoyArea {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoyArea::AreaIDominated => "area_i_dominated",
            DecoyArea::AreaIINondominated => "area_ii_nondominated",
        }
    }
}

/// The enumerated grid together with the Area-I ladder that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyGrid {
    ladder: Vec<f64>,
    cells: Vec<DecoyCell>,
}

impl DecoyGrid {
    pub fn new(area1_ladder: &[f64]) -> Result<Self> {
        let cells = enumerate_cells(area1_ladder)?;
        Ok(DecoyGrid { ladder: area1_ladder.to_vec(), cells })
    }

    pub fn cells(&self) -> &[DecoyCell] {
        &self.cells
    }

    /// Keeps only the listed cells, in the given order. Ids are renumbered
    /// to positions in `ids`.
    pub fn restrict(&self, ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Config("cell subset is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut cells = Vec::with_capacity(ids.len());
        for &id in ids {
            let cell = self.cells.get(id).ok_or_else(|| Error::Config(format!("cell id {id} is outside the grid (0..{})", self.cells.len())))?;
            if !seen.insert(id) {
                return Err(Error::Config(format!("cell id {id} listed twice")));
            }
            cells.push(*cell);
        }
        Ok(DecoyGrid { ladder: self.ladder.clone(), cells })
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Stable id of a cell, if it belongs to this grid.
    pub fn id_of(&self, cell: &DecoyCell) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| (c.mu - cell.mu).abs() < EPS && (c.offset_fraction - cell.offset_fraction).abs() < EPS)
    }

    pub fn classify(&self, cell: &DecoyCell) -> Result<DecoyArea> {
        if self.id_of(cell).is_none() {
            return Err(Error::Domain(format!("cell {cell} is not in the decoy grid")));
        }
        classify_cell(cell)
    }

    /// Writes `cell_id,mu,offset_fraction,area`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_id", "mu", "offset_fraction", "area"])?;
        for (id, c) in self.cells.iter().enumerate() {
            let area = classify_cell(c)?;
            w.write_record([
                id.to_string(),
                format!("{:.2}", c.mu),
                format!("{:.2}", c.offset_fraction),
                area.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Default for DecoyGrid {
    fn default() -> Self {
        DecoyGrid::new(&DEFAULT_AREA1_LADDER).expect("default ladder is valid")
    }
}

/// Enumerates the grid: 35 Area-I cells then 10 Area-II cells.
///
/// The ladder must hold six strictly decreasing fractions in (0, 1] starting
/// at 1.0, so that dropping the cell identical to the target leaves 35.
pub fn enumerate_cells(area1_ladder: &[f64]) -> Result<Vec<DecoyCell>> {
    if area1_ladder.len() != 6 {
        return Err(Error::Config(format!(
            "area-I offset ladder must have 6 levels, got {}",
            area1_ladder.len()
        )));
    }
    if area1_ladder.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
        return Err(Error::Config("area-I offset ladder values must lie in (0, 1]".into()));
    }
    if area1_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("area-I offset ladder must be strictly decreasing".into()));
    }
    if (area1_ladder[0] - 1.0).abs() > EPS {
        return Err(Error::Config("area-I offset ladder must start at 1.0 (full offset)".into()));
    }

    let mut cells = Vec::with_capacity(45);
    for mu in AREA1_MU {
        for &off in area1_ladder {
            let cell = DecoyCell::new(mu, off);
            if !cell.is_degenerate() {
                cells.push(cell);
            }
        }
    }
    for mu in AREA2_MU {
        for off in AREA2_OFFSETS {
            cells.push(DecoyCell::new(mu, off));
        }
    }
    debug_assert_eq!(cells.len(), 45);
    Ok(cells)
}

/// `target + mu * (target - competitor)`; requires `target > competitor > 0`.
pub fn decoy_price(target_price: f64, competitor_price: f64, mu: f64) -> Result<f64> {
    if !(competitor_price > 0.0) || !(target_price > competitor_price) {
        return Err(Error::Domain(format!(
            "decoy geometry needs target > competitor > 0 (target {target_price}, competitor {competitor_price})"
        )));
    }
    Ok(target_price + mu * (target_price - competitor_price))
}

/// Decoy offset as a share of the target's offset.
pub fn decoy_offset(target_offset: f64, cell: &DecoyCell) -> Result<f64> {
    if !(target_offset > 0.0) {
        return Err(Error::Domain(format!("target offset must be positive, got {target_offset}")));
    }
    Ok(target_offset * cell.offset_fraction)
}

pub fn classify_cell(cell: &DecoyCell) -> Result<DecoyArea> {
    if cell.is_degenerate() {
        return Err(Error::Domain("cell (mu=0, offset=1.0) duplicates the target and is not in the grid".into()));
    }
    if !(0.0..=1.0).contains(&cell.offset_fraction) {
        return Err(Error::Domain(format!("offset fraction {} outside [0, 1]", cell.offset_fraction)));
    }
    if cell.mu >= 0.0 {
        // Weakly worse on price and offset, strictly on at least one.
        let price_worse = cell.mu >= 0.0;
        let offset_worse = cell.offset_fraction <= 1.0;
        let strict = cell.mu > EPS || cell.offset_fraction < 1.0 - EPS;
        if !(price_worse && offset_worse && strict) {
            return Err(Error::Domain(format!("cell {cell} is not dominated by the target")));
        }
        Ok(DecoyArea::AreaIDominated)
    } else {
        if cell.mu <= -1.0 || cell.offset_fraction >= 1.0 {
            return Err(Error::Domain(format!("cell {cell} does not lie between competitor and target")));
        }
        Ok(DecoyArea::AreaIINondominated)
    }
}
