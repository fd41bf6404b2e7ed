//! Confirmatory hypotheses H1 to H4.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compute_rst, Condition, RespondentRecord, Thresholds};
use crate::error::{Error, Result};
use crate::personas::{Country, Segment};
use crate::simulation::PredictedGroups;
use crate::stats::{friedman, mann_whitney, wilcoxon_signed_rank, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Confirmed,
    Rejected,
    NotSignificant,
}

impl Decision {
    /// Significant in the predicted direction confirms; significant against
    /// it rejects.
    pub fn from_test(p: f64, threshold: f64, expected_direction: bool) -> Self {
        if p >= threshold {
            Decision::NotSignificant
        } else if expected_direction {
            Decision::Confirmed
        } else {
            Decision::Rejected
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Confirmed => "confirmed",
            Decision::Rejected => "rejected",
            Decision::NotSignificant => "not_significant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    /// e.g. `Country-optimal vs No-decoy`; the first named side is `x`.
    pub label: String,
    pub test: String,
    pub result: TestResult,
    pub threshold: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub id: String,
    pub description: String,
    pub threshold_note: String,
    pub omnibus: Option<TestResult>,
    pub omnibus_threshold: Option<f64>,
    pub pairwise: Vec<PairwiseResult>,
    /// Threshold applied to the pairwise tests.
    pub threshold: f64,
    pub decision: Decision,
}

/// Per-respondent RSTs for the analysed conditions.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RstRow {
    pub country: Country,
    pub sceptic: bool,
    pub groups: PredictedGroups,
    pub no_decoy: f64,
    pub country_optimal: f64,
    pub country_non_optimal: f64,
    pub personalized: f64,
}

impl RstRow {
    pub fn get(&self, c: Condition) -> f64 {
        match c {
            Condition::NoDecoy => self.no_decoy,
            Condition::CountryOptimal => self.country_optimal,
            Condition::CountryNonOptimal => self.country_non_optimal,
            Condition::Personalized => self.personalized,
            Condition::CountryUniversal => unreachable!("universal condition is not tabulated"),
        }
    }
}

pub(crate) fn rst_rows(records: &[RespondentRecord], groups: &BTreeMap<Segment, PredictedGroups>) -> Result<Vec<RstRow>> {
    records
        .iter()
        .map(|r| {
            let g = groups
                .get(&r.segment)
                .ok_or_else(|| Error::MissingSegment(format!("{} (respondent {}) has no predicted group", r.segment.key(), r.id)))?;
            Ok(RstRow {
                country: r.segment.country,
                sceptic: r.is_sceptic(),
                groups: *g,
                no_decoy: compute_rst(r, Condition::NoDecoy)?.value,
                country_optimal: compute_rst(r, Condition::CountryOptimal)?.value,
                country_non_optimal: compute_rst(r, Condition::CountryNonOptimal)?.value,
                personalized: compute_rst(r, Condition::Personalized)?.value,
            })
        })
        .collect()
}

fn in_context(id: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::InvalidInput(format!("{id}: {e}"))
}

fn non_empty(id: &str, what: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{id}: {what} is empty")));
    }
    Ok(())
}

fn between_groups(
    id: &str,
    description: &str,
    rows: &[RstRow],
    group_of: impl Fn(&RstRow) -> u8,
    value: impl Fn(&RstRow) -> f64,
    label: &str,
    thresholds: &Thresholds,
) -> Result<HypothesisReport> {
    let x: Vec<f64> = rows.iter().filter(|r| group_of(r) == 1).map(&value).collect();
    let y: Vec<f64> = rows.iter().filter(|r| group_of(r) == 2).map(&value).collect();
    non_empty(id, "group 1", &x)?;
    non_empty(id, "group 2", &y)?;
    let result = mann_whitney(&x, &y).map_err(in_context(id))?;
    let alpha = thresholds.confirmatory;
    let decision = Decision::from_test(result.p_two_sided, alpha, result.z.unwrap_or(0.0) > 0.0);
    Ok(HypothesisReport {
        id: id.into(),
        description: description.into(),
        threshold_note: thresholds.describe(),
        omnibus: None,
        omnibus_threshold: None,
        pairwise: vec![PairwiseResult { label: label.into(), test: "mann_whitney".into(), result, threshold: alpha, decision }],
        threshold: alpha,
        decision,
    })
}

/// Friedman over `conditions` on decoy group 1, then Wilcoxon of the first
/// condition against each of the other two when the omnibus test is
/// significant.
fn within_group(
    id: &str,
    description: &str,
    rows: &[RstRow],
    conditions: [Condition; 3],
    thresholds: &Thresholds,
) -> Result<HypothesisReport> {
    let g1: Vec<&RstRow> = rows.iter().filter(|r| r.groups.decoy_group == 1).collect();
    if g1.is_empty() {
        return Err(Error::InvalidInput(format!("{id}: decoy group 1 is empty")));
    }
    let matrix: Vec<Vec<f64>> = g1.iter().map(|r| conditions.iter().map(|&c| r.get(c)).collect()).collect();
    let omnibus = friedman(&matrix).map_err(in_context(id))?;
    let omnibus_alpha = thresholds.confirmatory;
    let alpha = thresholds.confirmatory_post_hoc;
    let mut pairwise = Vec::new();
    let decision = if omnibus.p_two_sided >= omnibus_alpha {
        Decision::NotSignificant
    } else {
        let lead = conditions[0];
        let x: Vec<f64> = g1.iter().map(|r| r.get(lead)).collect();
        for &other in &conditions[1..] {
            let y: Vec<f64> = g1.iter().map(|r| r.get(other)).collect();
            let result = wilcoxon_signed_rank(&x, &y).map_err(in_context(id))?;
            let decision = Decision::from_test(result.p_two_sided, alpha, result.z.unwrap_or(0.0) > 0.0);
            pairwise.push(PairwiseResult {
                label: format!("{} vs {}", lead.title(), other.title()),
                test: "wilcoxon_signed_rank".into(),
                result,
                threshold: alpha,
                decision,
            });
        }
        if pairwise.iter().all(|p| p.decision == Decision::Confirmed) {
            Decision::Confirmed
        } else if pairwise.iter().any(|p| p.decision == Decision::Rejected) {
            Decision::Rejected
        } else {
            Decision::NotSignificant
        }
    };
    Ok(HypothesisReport {
        id: id.into(),
        description: description.into(),
        threshold_note: thresholds.describe(),
        omnibus: Some(omnibus),
        omnibus_threshold: Some(omnibus_alpha),
        pairwise,
        threshold: alpha,
        decision,
    })
}

/// Runs H1 to H4 on screened respondents.
pub fn run_battery(
    records: &[RespondentRecord],
    groups: &BTreeMap<Segment, PredictedGroups>,
    thresholds: &Thresholds,
) -> Result<Vec<HypothesisReport>> {
    let rows = rst_rows(records, groups)?;
    Ok(vec![
        between_groups(
            "H1",
            "no-decoy RST is higher in the group predicted to fully offset",
            &rows,
            |r| r.groups.offset_group,
            |r| r.no_decoy,
            "Offset group 1 vs Offset group 2",
            thresholds,
        )?,
        between_groups(
            "H2",
            "country-optimal minus no-decoy RST is higher in the group predicted to respond to the decoy",
            &rows,
            |r| r.groups.decoy_group,
            |r| r.country_optimal - r.no_decoy,
            "Decoy group 1 vs Decoy group 2",
            thresholds,
        )?,
        within_group(
            "H3",
            "in decoy group 1 the country-optimal decoy raises RST over no decoy and over the non-optimal decoy",
            &rows,
            [Condition::CountryOptimal, Condition::NoDecoy, Condition::CountryNonOptimal],
            thresholds,
        )?,
        within_group(
            "H4",
            "in decoy group 1 the segment-optimal decoy raises RST over no decoy and over the country-optimal decoy",
            &rows,
            [Condition::Personalized, Condition::NoDecoy, Condition::CountryOptimal],
            thresholds,
        )?,
    ])
}
