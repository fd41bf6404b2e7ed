//! Survey respondents: ingestion, attention screening, RST, the confirmatory
//! hypothesis battery and the exploratory country analyses.

pub mod battery;
pub mod exploratory;
pub mod fixture;
pub mod ingest;
pub mod tables;

pub use battery::{run_battery, Decision, HypothesisReport, PairwiseResult};
pub use exploratory::{run_exploratory, ExploratoryOptions, ExploratoryReport};
pub use fixture::{generate_fixture, Fixture, FixtureSpec};
pub use ingest::{
    apply_attention_checks, load_groups, load_respondents, load_respondents_lenient, screen, write_groups_csv,
    write_respondents_csv, AttentionPolicy, RowDiagnostic, ScreenOutcome, ValidationReport,
};
pub use tables::Table;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::personas::{Segment, Trust};

/// Survey condition of a choice scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    NoDecoy,
    CountryOptimal,
    CountryNonOptimal,
    CountryUniversal,
    Personalized,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::NoDecoy,
        Condition::CountryOptimal,
        Condition::CountryNonOptimal,
        Condition::CountryUniversal,
        Condition::Personalized,
    ];

    /// Conditions every respondent must carry. The universal decoy is optional.
    pub const REQUIRED: [Condition; 4] =
        [Condition::NoDecoy, Condition::CountryOptimal, Condition::CountryNonOptimal, Condition::Personalized];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NoDecoy => "no_decoy",
            Condition::CountryOptimal => "country_optimal",
            Condition::CountryNonOptimal => "country_non_optimal",
            Condition::CountryUniversal => "country_universal",
            Condition::Personalized => "personalized",
        }
    }

    /// Label used in report rows.
    pub fn title(self) -> &'static str {
        match self {
            Condition::NoDecoy => "No-decoy",
            Condition::CountryOptimal => "Country-optimal",
            Condition::CountryNonOptimal => "Country-non-optimal",
            Condition::CountryUniversal => "Country-universal",
            Condition::Personalized => "Segment-optimal",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown condition `{s}`")))
    }
}

/// Condition label of the attention-check control rows.
pub const ATTENTION_CONDITION: &str = "attention_check";

/// Number of control scenarios every unscreened respondent answers.
pub const ATTENTION_CHECKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceRole {
    Target,
    Competitor,
    Decoy,
}

impl ChoiceRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChoiceRole::Target => "target",
            ChoiceRole::Competitor => "competitor",
            ChoiceRole::Decoy => "decoy",
        }
    }
}

impl FromStr for ChoiceRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "target" => Ok(ChoiceRole::Target),
            "competitor" => Ok(ChoiceRole::Competitor),
            "decoy" => Ok(ChoiceRole::Decoy),
            other => Err(Error::InvalidInput(format!("unknown role `{other}`"))),
        }
    }
}

/// Answer to a control scenario with one strictly dominant option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlRole {
    Dominant,
    Dominated,
}

impl ControlRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlRole::Dominant => "dominant",
            ControlRole::Dominated => "dominated",
        }
    }
}

impl FromStr for ControlRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dominant" => Ok(ControlRole::Dominant),
            "dominated" => Ok(ControlRole::Dominated),
            other => Err(Error::InvalidInput(format!("unknown control role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioChoice {
    pub scenario_index: u32,
    pub role: ChoiceRole,
    pub flight_type: Option<String>,
    /// Carbon-neutral minus standard ticket price, when recorded.
    pub price_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlChoice {
    pub scenario_index: u32,
    pub role: ControlRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub id: String,
    pub segment: Segment,
    pub choices: BTreeMap<Condition, Vec<ScenarioChoice>>,
    pub controls: Vec<ControlChoice>,
}

impl RespondentRecord {
    pub fn is_sceptic(&self) -> bool {
        self.segment.trust == Trust::NotTrusts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RstValue {
    pub value: f64,
    pub n_target: u32,
    pub n_competitor: u32,
}

/// Relative share of target choices over target plus competitor choices in
/// one condition. Decoy choices leave the denominator; all-decoy gives 0.
pub fn compute_rst(record: &RespondentRecord, condition: Condition) -> Result<RstValue> {
    let choices = record
        .choices
        .get(&condition)
        .ok_or_else(|| Error::InvalidInput(format!("respondent {} has no `{condition}` scenarios", record.id)))?;
    let n_target = choices.iter().filter(|c| c.role == ChoiceRole::Target).count() as u32;
    let n_competitor = choices.iter().filter(|c| c.role == ChoiceRole::Competitor).count() as u32;
    let denom = n_target + n_competitor;
    let value = if denom == 0 { 0.0 } else { n_target as f64 / denom as f64 };
    Ok(RstValue { value, n_target, n_competitor })
}

/// Respondent subset an analysis runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    All,
    /// Respondents who do not trust offset programmes.
    Sceptics,
}

impl Cohort {
    pub fn admits(self, record: &RespondentRecord) -> bool {
        match self {
            Cohort::All => true,
            Cohort::Sceptics => record.is_sceptic(),
        }
    }
}

/// Significance thresholds per analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// H1, H2 and the H3/H4 omnibus tests.
    pub confirmatory: f64,
    /// H3/H4 pairwise follow-ups.
    pub confirmatory_post_hoc: f64,
    /// Per-country group comparisons (H1.1, H2.1) and the sceptic cohort.
    pub exploratory_groups: f64,
    /// Per-country condition comparisons (H3.1, H4.1).
    pub exploratory_post_hoc: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { confirmatory: 0.05, confirmatory_post_hoc: 0.016, exploratory_groups: 0.01, exploratory_post_hoc: 0.005 }
    }
}

impl Thresholds {
    /// One-line statement of the mapping, printed atop every report.
    pub fn describe(&self) -> String {
        format!(
            "alpha: H1/H2 and H3/H4 omnibus {}; H3/H4 pairwise {}; H1.1/H2.1 and sceptics {}; H3.1/H4.1 per-country {}",
            self.confirmatory, self.confirmatory_post_hoc, self.exploratory_groups, self.exploratory_post_hoc
        )
    }
}

/// Target-group sizes per country as published for the survey sample,
/// used to sanity-check predicted groups when that dataset is loaded.
pub const REFERENCE_TARGET_GROUP: [(crate::personas::Country, usize); 5] = [
    (crate::personas::Country::CN, 167),
    (crate::personas::Country::DE, 221),
    (crate::personas::Country::IN, 321),
    (crate::personas::Country::SG, 231),
    (crate::personas::Country::US, 345),
];

/// Warnings for countries whose decoy-group-1 size differs from `expected`.
pub fn cross_check_group_sizes(
    records: &[RespondentRecord],
    groups: &BTreeMap<Segment, crate::simulation::PredictedGroups>,
    expected: &[(crate::personas::Country, usize)],
) -> Vec<String> {
    let mut warnings = Vec::new();
    for &(country, n) in expected {
        let got = records
            .iter()
            .filter(|r| r.segment.country == country)
            .filter(|r| groups.get(&r.segment).is_some_and(|g| g.decoy_group == 1))
            .count();
        if got != n {
            warnings.push(format!("{country}: decoy group 1 has {got} respondents, reference is {n}"));
        }
    }
    warnings
}
