//! Persona-conditioned logit agent.
//!
//! Utility of a presented option:
//!
//! ```text
//! U = price · (p − p_c) / p_c
//!   + (offset + shift(segment)) · f
//!   + [option is target and a decoy is shown] · attraction(cell) · scale(segment)
//! ```
//!
//! where `p` is the option's price, `p_c` the competitor's price and `f` the
//! option's offset fraction. `shift(segment)` sums the persona shifts that
//! apply. For an Area-I cell with price adjustment μ ≥ 0 and offset gap
//! `g = 1 − f_decoy`, `attraction = dominance·μ·g − single_dimension·(μ + g)`;
//! for an Area-II cell `attraction = area2·g`. `scale(segment)` is
//! `saturated_scale` when the segment both trusts and is concerned, else 1.
//!
//! Choice probabilities are `softmax(U / temperature)` over presented options.
//! Temperature zero picks the argmax.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentResponse, ChoiceAgent, ChoiceRequest, Choice};
use crate::decoy_space::DecoyCell;
use crate::error::{Error, Result};
use crate::personas::{AgeGroup, Concern, Country, Gender, IncomeGroup, Segment, Trust};
use crate::scenario::{ChoiceScenario, OptionRole, TicketOption};
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonaShifts {
    pub trust: f64,
    pub concern: f64,
    pub income_above_median: f64,
    pub age_below_median: f64,
    pub woman: f64,
    pub country: BTreeMap<Country, f64>,
}

impl Default for PersonaShifts {
    fn default() -> Self {
        PersonaShifts {
            trust: 1.6,
            concern: 1.2,
            income_above_median: 0.3,
            age_below_median: 0.2,
            woman: 0.0,
            country: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractionCoefficients {
    pub dominance: f64,
    pub single_dimension: f64,
    pub area2: f64,
    pub saturated_scale: f64,
}

impl Default for AttractionCoefficients {
    fn default() -> Self {
        AttractionCoefficients { dominance: 6.0, single_dimension: 0.8, area2: -0.8, saturated_scale: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCoefficients {
    pub price: f64,
    pub offset: f64,
    pub shifts: PersonaShifts,
    pub attraction: AttractionCoefficients,
}

impl Default for SyntheticCoefficients {
    fn default() -> Self {
        SyntheticCoefficients {
            price: -20.0,
            offset: -1.0,
            shifts: PersonaShifts::default(),
            attraction: AttractionCoefficients::default(),
        }
    }
}

impl SyntheticCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(self.price < 0.0) {
            return Err(Error::Config("synthetic price coefficient must be negative".into()));
        }
        Ok(())
    }

    pub fn persona_shift(&self, segment: &Segment) -> f64 {
        let s = &self.shifts;
        let mut shift = 0.0;
        if segment.trust == Trust::Trusts {
            shift += s.trust;
        }
        if segment.concern == Concern::Concerned {
            shift += s.concern;
        }
        if segment.income == IncomeGroup::AboveMedian {
            shift += s.income_above_median;
        }
        if segment.age == AgeGroup::BelowMedian {
            shift += s.age_below_median;
        }
        if segment.gender == Gender::Woman {
            shift += s.woman;
        }
        shift + s.country.get(&segment.country).copied().unwrap_or(0.0)
    }

    /// Bonus added to the target's utility when `cell` is shown.
    pub fn attraction(&self, segment: &Segment, cell: &DecoyCell) -> f64 {
        let a = &self.attraction;
        let gap = 1.0 - cell.offset_fraction;
        let raw = if cell.mu >= 0.0 {
            a.dominance * cell.mu * gap - a.single_dimension * (cell.mu + gap)
        } else {
            a.area2 * gap
        };
        if segment.trust == Trust::Trusts && segment.concern == Concern::Concerned {
            raw * a.saturated_scale
        } else {
            raw
        }
    }

    /// Utility of one option; `target_bonus` is added when `is_target`.
    pub fn utility(&self, segment: &Segment, option: &TicketOption, competitor_price: f64, target_bonus: f64, is_target: bool) -> f64 {
        let rel_price = (option.price - competitor_price) / competitor_price;
        let mut u = self.price * rel_price + (self.offset + self.persona_shift(segment)) * option.offset_fraction;
        if is_target {
            u += target_bonus;
        }
        u
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticAgent {
    coefficients: SyntheticCoefficients,
    temperature: f64,
}

impl SyntheticAgent {
    pub fn new(coefficients: SyntheticCoefficients, temperature: f64) -> Result<Self> {
        coefficients.validate()?;
        if !(temperature >= 0.0) {
            return Err(Error::Config(format!("temperature must be >= 0, got {temperature}")));
        }
        Ok(SyntheticAgent { coefficients, temperature })
    }

    pub fn coefficients(&self) -> &SyntheticCoefficients {
        &self.coefficients
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn option_utility(&self, segment: &Segment, scenario: &ChoiceScenario, role: OptionRole) -> Option<f64> {
        let option = scenario.option(role)?;
        let bonus = match (&scenario.decoy, &scenario.decoy_cell) {
            (Some(_), Some(cell)) => self.coefficients.attraction(segment, cell),
            _ => 0.0,
        };
        Some(self.coefficients.utility(segment, option, scenario.competitor.price, bonus, role == OptionRole::Target))
    }

    /// Choice probabilities for `roles`, in the given order.
    pub fn probabilities(&self, segment: &Segment, scenario: &ChoiceScenario, roles: &[OptionRole]) -> Vec<f64> {
        let utils: Vec<f64> = roles
            .iter()
            .map(|r| self.option_utility(segment, scenario, *r).unwrap_or(f64::NEG_INFINITY))
            .collect();
        if self.temperature == 0.0 {
            let best = argmax_canonical(roles, &utils);
            return roles.iter().map(|r| if *r == best { 1.0 } else { 0.0 }).collect();
        }
        let max = utils.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = utils.iter().map(|u| ((u - max) / self.temperature).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }
}

/// Highest-utility role; ties go to the earliest role in canonical order.
fn argmax_canonical(roles: &[OptionRole], utils: &[f64]) -> OptionRole {
    let mut best: Option<(OptionRole, f64)> = None;
    for (r, u) in roles.iter().zip(utils) {
        best = match best {
            None => Some((*r, *u)),
            Some((br, bu)) if *u > bu || (*u == bu && *r < br) => Some((*r, *u)),
            keep => keep,
        };
    }
    best.expect("at least one option").0
}

impl ChoiceAgent for SyntheticAgent {
    fn choose(&self, request: &ChoiceRequest<'_>) -> Result<AgentResponse> {
        let roles = request.order.roles();
        let probs = self.probabilities(request.segment, request.scenario, roles);
        let mut rng = rng_from(derive_seed(request.prompt_digest, &[request.sample_index]));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut position = roles.len();
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                position = i + 1;
                break;
            }
        }
        // Rounding can leave u >= acc; land on the last option with mass.
        if position == roles.len() && probs[position - 1] == 0.0 {
            position = probs.iter().rposition(|p| *p > 0.0).map(|i| i + 1).unwrap_or(1);
        }
        let choice = roles.get(position - 1).copied().map(Choice::from).unwrap_or(Choice::Invalid);
        Ok(AgentResponse { choice, raw_text: position.to_string(), latency_ms: 0, attempt_count: 1 })
    }

    fn describe(&self) -> String {
        format!(
            "synthetic:t={}:{}",
            self.temperature,
            serde_json::to_string(&self.coefficients).unwrap_or_default()
        )
    }
}
