//! Replication schedule, response tallies and offsetting probabilities.
//!
//! One (segment, cell) run presents every situation draw in several seeded
//! option orders and repeats each presentation a fixed number of times. The
//! default schedule is 30 draws × 4 orders × 25 repetitions = 3000 calls.

mod select;
mod sweep;

pub use select::{
    cell_effects, country_optimal_deltas, predicted_groups, select_country_cells, select_segment_optimal, CellEffect,
    CellSelection, EffectTable, PredictedGroups, SegmentOptimal, DEFAULT_SELECTION_SIZE,
};
pub use sweep::{
    analyze_sweep, run_sweep, sweep_fingerprint, write_heatmap_csv, write_sweep_csv, Checkpoint, SweepAnalysis, SweepResult,
};

use serde::{Deserialize, Serialize};

use crate::agents::{prompt_digest, Choice, ChoiceAgent, ChoiceRequest};
use crate::decoy_space::DecoyCell;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::personas::{render_system_prompt, Segment};
use crate::scenario::{build_scenario, render_user_prompt, FxTable, OptionOrder, SituationDraw};
use crate::seeding::{derive_seed, hash_str, rng_from};

const ORDER_STREAM: u64 = 0x006f_7264_6572;
const SAMPLE_STREAM: u64 = 0x7361_6d70_6c65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub orders_per_draw: usize,
    pub repetitions: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { orders_per_draw: 4, repetitions: 25 }
    }
}

impl Schedule {
    pub fn calls_per_cell(&self, n_draws: usize) -> usize {
        n_draws * self.orders_per_draw * self.repetitions
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders_per_draw == 0 || self.repetitions == 0 {
            return Err(Error::Config("schedule needs at least one order and one repetition".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseTally {
    pub n_target: u64,
    pub n_competitor: u64,
    pub n_decoy: u64,
    pub n_invalid: u64,
}

impl ResponseTally {
    pub fn record(&mut self, choice: Choice) {
        match choice {
            Choice::Target => self.n_target += 1,
            Choice::Competitor => self.n_competitor += 1,
            Choice::Decoy => self.n_decoy += 1,
            Choice::Invalid => self.n_invalid += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.valid() + self.n_invalid
    }

    pub fn valid(&self) -> u64 {
        self.n_target + self.n_competitor + self.n_decoy
    }

    pub fn merge(&mut self, other: &ResponseTally) {
        self.n_target += other.n_target;
        self.n_competitor += other.n_competitor;
        self.n_decoy += other.n_decoy;
        self.n_invalid += other.n_invalid;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMode {
    /// Two options shown: target share of valid responses.
    Pairwise,
    /// Decoy shown: target share among target and competitor choices.
    Decoy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsettingEstimate {
    pub probability: f64,
    pub n_valid: u64,
    pub mode: ProbabilityMode,
}

/// Offsetting probability from a tally. Invalid responses never enter a denominator.
pub fn offsetting_probability(tally: &ResponseTally, mode: ProbabilityMode) -> Result<OffsettingEstimate> {
    let valid = tally.valid();
    if valid == 0 {
        return Err(Error::NoInformation);
    }
    let probability = match mode {
        ProbabilityMode::Pairwise => tally.n_target as f64 / valid as f64,
        ProbabilityMode::Decoy => {
            let denom = tally.n_target + tally.n_competitor;
            if denom == 0 {
                0.0
            } else {
                tally.n_target as f64 / denom as f64
            }
        }
    };
    Ok(OffsettingEstimate { probability, n_valid: valid, mode })
}

/// Inputs shared by every (segment, cell) run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub master_seed: u64,
    pub draws: Vec<SituationDraw>,
    pub fx: FxTable,
    pub bottles_per_kg: f64,
    pub schedule: Schedule,
}

/// Grid slot used in seed derivation: 0 for the no-decoy baseline, id + 1 otherwise.
pub fn cell_slot(cell_id: Option<usize>) -> u64 {
    cell_id.map(|id| id as u64 + 1).unwrap_or(0)
}

/// Presentation order for one (cell, draw, order index); shared by all segments.
pub fn presentation_order(master_seed: u64, cell_id: Option<usize>, draw: usize, order_idx: usize, k: usize) -> OptionOrder {
    let seed = derive_seed(master_seed, &[ORDER_STREAM, cell_slot(cell_id), draw as u64, order_idx as u64]);
    OptionOrder::shuffled(k, &mut rng_from(seed))
}

pub fn sample_index(master_seed: u64, segment: &Segment, cell_id: Option<usize>, draw: usize, order_idx: usize, rep: usize) -> u64 {
    sample_index_for(master_seed, hash_str(&segment.key()), cell_id, draw, order_idx, rep)
}

fn sample_index_for(master_seed: u64, segment_hash: u64, cell_id: Option<usize>, draw: usize, order_idx: usize, rep: usize) -> u64 {
    derive_seed(master_seed, &[SAMPLE_STREAM, segment_hash, cell_slot(cell_id), draw as u64, order_idx as u64, rep as u64])
}

struct Presentation {
    scenario: crate::scenario::ChoiceScenario,
    order: OptionOrder,
    user_prompt: String,
    digest: u64,
}

/// Runs the full schedule for one segment and one grid cell (or the baseline).
pub fn run_cell(
    plan: &SweepPlan,
    segment: &Segment,
    cell: Option<(usize, &DecoyCell)>,
    agent: &dyn ChoiceAgent,
    executor: &Executor,
) -> Result<ResponseTally> {
    plan.schedule.validate()?;
    let system_prompt = render_system_prompt(segment);
    let cell_id = cell.map(|(id, _)| id);
    let orders = plan.schedule.orders_per_draw;
    let reps = plan.schedule.repetitions;

    let mut presentations = Vec::with_capacity(plan.draws.len() * orders);
    for (d, draw) in plan.draws.iter().enumerate() {
        let scenario = build_scenario(draw, segment.country, cell.map(|(_, c)| c), &plan.fx, plan.bottles_per_kg)?;
        for o in 0..orders {
            let order = presentation_order(plan.master_seed, cell_id, d, o, scenario.option_count());
            let user_prompt = render_user_prompt(&scenario, &order)?;
            let digest = prompt_digest(&system_prompt, &user_prompt);
            presentations.push(Presentation { scenario: scenario.clone(), order, user_prompt, digest });
        }
    }

    let n_calls = presentations.len() * reps;
    let segment_hash = hash_str(&segment.key());
    let choices = executor.try_map(n_calls, |i| {
        let (p_idx, rep) = (i / reps, i % reps);
        let p = &presentations[p_idx];
        let request = ChoiceRequest {
            segment,
            scenario: &p.scenario,
            system_prompt: &system_prompt,
            user_prompt: &p.user_prompt,
            order: &p.order,
            sample_index: sample_index_for(plan.master_seed, segment_hash, cell_id, p_idx / orders, p_idx % orders, rep),
            prompt_digest: p.digest,
        };
        agent.choose(&request).map(|r| r.choice)
    })?;

    let mut tally = ResponseTally::default();
    for c in choices {
        tally.record(c);
    }
    Ok(tally)
}
