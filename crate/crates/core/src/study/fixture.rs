//! Synthetic respondent generator with known condition effects.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ChoiceRole, Condition, ControlChoice, ControlRole, RespondentRecord, ScenarioChoice, ATTENTION_CHECKS,
};
use crate::error::{Error, Result};
use crate::personas::{enumerate_segments, Concern, Country, Gender, IncomeGroup, Segment, Trust};
use crate::seeding::{derive_seed, rng_from};
use crate::simulation::PredictedGroups;

/// Target-choice probabilities before clamping. Group 1 of the decoy split
/// responds to the decoys; group 2 does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureEffects {
    pub base_offset_group1: f64,
    pub base_offset_group2: f64,
    pub sceptic_shift: f64,
    pub country_optimal_uplift: f64,
    pub non_optimal_drop: f64,
    pub personalized_uplift: f64,
    /// Share of decoy-condition scenarios where the decoy is picked.
    pub decoy_rate: f64,
    /// Change in target probability per currency unit of price difference
    /// above `price_centre`.
    pub price_slope: f64,
    pub price_centre: f64,
}

impl Default for FixtureEffects {
    fn default() -> Self {
        FixtureEffects {
            base_offset_group1: 0.75,
            base_offset_group2: 0.45,
            sceptic_shift: -0.15,
            country_optimal_uplift: 0.12,
            non_optimal_drop: 0.2,
            personalized_uplift: 0.1,
            decoy_rate: 0.08,
            price_slope: -0.006,
            price_centre: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub countries: Vec<Country>,
    pub respondents_per_country: usize,
    pub scenarios_per_condition: u32,
    /// Probability that a respondent fails one control scenario.
    pub attention_fail_rate: f64,
    pub effects: FixtureEffects,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 20240601,
            countries: Country::ALL.to_vec(),
            respondents_per_country: 80,
            scenarios_per_condition: 3,
            attention_fail_rate: 0.05,
            effects: FixtureEffects::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub records: Vec<RespondentRecord>,
    pub groups: BTreeMap<Segment, PredictedGroups>,
}

/// Group assignment used by the fixture: concerned trusting segments fully
/// offset, and the decoy responds for segments where gender and income
/// levels are mixed.
pub fn fixture_groups(segment: &Segment) -> PredictedGroups {
    let offset = segment.concern == Concern::Concerned && segment.trust == Trust::Trusts;
    let decoy = (segment.gender == Gender::Woman) != (segment.income == IncomeGroup::BelowMedian);
    PredictedGroups { offset_group: if offset { 1 } else { 2 }, decoy_group: if decoy { 1 } else { 2 } }
}

impl FixtureSpec {
    /// Target-choice probability per condition for a segment, at the
    /// central price.
    pub fn probability(&self, segment: &Segment, condition: Condition) -> f64 {
        let e = &self.effects;
        let g = fixture_groups(segment);
        let mut base = if g.offset_group == 1 { e.base_offset_group1 } else { e.base_offset_group2 };
        if segment.trust == Trust::NotTrusts {
            base += e.sceptic_shift;
        }
        let responds = g.decoy_group == 1;
        let p = match condition {
            Condition::NoDecoy | Condition::CountryUniversal => base,
            Condition::CountryOptimal if responds => base + e.country_optimal_uplift,
            Condition::CountryNonOptimal if responds => base - e.non_optimal_drop,
            Condition::Personalized if responds => base + e.country_optimal_uplift + e.personalized_uplift,
            Condition::Personalized if segment.trust == Trust::NotTrusts => base + e.personalized_uplift,
            _ => base,
        };
        p.clamp(0.02, 0.98)
    }

    fn validate(&self) -> Result<()> {
        if self.countries.is_empty() || self.respondents_per_country == 0 || self.scenarios_per_condition == 0 {
            return Err(Error::Config("fixture needs countries, respondents and scenarios".into()));
        }
        for (name, v) in [("attention_fail_rate", self.attention_fail_rate), ("decoy_rate", self.effects.decoy_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let segments: Vec<Segment> = enumerate_segments().into_iter().filter(|s| spec.countries.contains(&s.country)).collect();
    let groups = segments.iter().map(|s| (*s, fixture_groups(s))).collect();
    let conditions = [
        Condition::NoDecoy,
        Condition::CountryOptimal,
        Condition::CountryNonOptimal,
        Condition::CountryUniversal,
        Condition::Personalized,
    ];
    let e = &spec.effects;
    let mut records = Vec::new();
    for (ci, &country) in spec.countries.iter().enumerate() {
        let pool: Vec<&Segment> = segments.iter().filter(|s| s.country == country).collect();
        for i in 0..spec.respondents_per_country {
            let mut rng = rng_from(derive_seed(spec.seed, &[ci as u64, i as u64]));
            let segment = *pool[rng.random_range(0..pool.len())];
            let mut index = 0u32;
            let mut choices = BTreeMap::new();
            for c in conditions {
                let p = spec.probability(&segment, c);
                let mut list = Vec::new();
                for _ in 0..spec.scenarios_per_condition {
                    let price: f64 = (rng.random_range(500..=6000) as f64) / 100.0;
                    let pt = (p + e.price_slope * (price - e.price_centre)).clamp(0.01, 0.99);
                    let role = if c != Condition::NoDecoy && rng.random::<f64>() < e.decoy_rate {
                        ChoiceRole::Decoy
                    } else if rng.random::<f64>() < pt {
                        ChoiceRole::Target
                    } else {
                        ChoiceRole::Competitor
                    };
                    let flight_type = if index % 2 == 0 { "short_haul" } else { "long_haul" };
                    list.push(ScenarioChoice {
                        scenario_index: index,
                        role,
                        flight_type: Some(flight_type.into()),
                        price_difference: Some(price),
                    });
                    index += 1;
                }
                choices.insert(c, list);
            }
            let fail_at = (rng.random::<f64>() < spec.attention_fail_rate).then(|| rng.random_range(0..ATTENTION_CHECKS));
            let controls = (0..ATTENTION_CHECKS)
                .map(|k| ControlChoice {
                    scenario_index: index + k as u32,
                    role: if fail_at == Some(k) { ControlRole::Dominated } else { ControlRole::Dominant },
                })
                .collect();
            records.push(RespondentRecord { id: format!("{}-{:04}", country.code(), i + 1), segment, choices, controls });
        }
    }
    Ok(Fixture { records, groups })
}
