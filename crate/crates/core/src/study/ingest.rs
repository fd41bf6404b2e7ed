//! Respondent CSV ingestion and attention screening.
//!
//! One row per respondent-scenario with columns
//! `respondent_id,country,gender,age_group,income_group,concern,trust,condition,scenario_index,chosen_role`
//! and the optional `flight_type,price_difference`. Control scenarios use
//! condition `attention_check` with role `dominant` or `dominated`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    Condition, ControlChoice, ControlRole, RespondentRecord, ScenarioChoice, ChoiceRole, ATTENTION_CHECKS,
    ATTENTION_CONDITION,
};
use crate::error::{Error, Result};
use crate::personas::{Country, Segment};
use crate::simulation::PredictedGroups;

pub const REQUIRED_COLUMNS: [&str; 10] = [
    "respondent_id",
    "country",
    "gender",
    "age_group",
    "income_group",
    "concern",
    "trust",
    "condition",
    "scenario_index",
    "chosen_role",
];
pub const OPTIONAL_COLUMNS: [&str; 2] = ["flight_type", "price_difference"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    /// 1-based line in the file; absent for respondent-level problems.
    pub line: Option<u64>,
    pub respondent: Option<String>,
    pub message: String,
}

impl std::fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.line, &self.respondent) {
            (Some(l), _) => write!(f, "line {l}: {}", self.message),
            (None, Some(r)) => write!(f, "respondent {r}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub respondents: usize,
    pub diagnostics: Vec<RowDiagnostic>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

enum Parsed {
    Scenario(Condition, ScenarioChoice),
    Control(ControlChoice),
}

struct Columns {
    idx: [usize; 10],
    flight_type: Option<usize>,
    price_difference: Option<usize>,
}

fn resolve_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing: Vec<&str> = REQUIRED_COLUMNS.iter().copied().filter(|c| find(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing column(s): {}", missing.join(", "))));
    }
    let mut idx = [0; 10];
    for (slot, name) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = find(name).unwrap();
    }
    Ok(Columns { idx, flight_type: find(OPTIONAL_COLUMNS[0]), price_difference: find(OPTIONAL_COLUMNS[1]) })
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> std::result::Result<(String, Segment, Parsed), String> {
    let field = |i: usize| row.get(cols.idx[i]).map(str::trim).unwrap_or("");
    for (i, name) in REQUIRED_COLUMNS.iter().enumerate() {
        if field(i).is_empty() {
            return Err(format!("empty `{name}`"));
        }
    }
    let err = |e: Error| e.to_string();
    let segment = Segment {
        country: field(1).parse::<Country>().map_err(err)?,
        gender: field(2).parse().map_err(err)?,
        age: field(3).parse().map_err(err)?,
        income: field(4).parse().map_err(err)?,
        concern: field(5).parse().map_err(err)?,
        trust: field(6).parse().map_err(err)?,
    };
    let scenario_index: u32 = field(8).parse().map_err(|_| format!("scenario_index `{}` is not a count", field(8)))?;
    let condition = field(7);
    let role = field(9);
    let parsed = if condition == ATTENTION_CONDITION {
        Parsed::Control(ControlChoice { scenario_index, role: role.parse::<ControlRole>().map_err(err)? })
    } else {
        let condition: Condition = condition.parse().map_err(err)?;
        let role: ChoiceRole = role.parse().map_err(err)?;
        if condition == Condition::NoDecoy && role == ChoiceRole::Decoy {
            return Err("role `decoy` is impossible under condition `no_decoy`".into());
        }
        let flight_type = cols.flight_type.and_then(|i| row.get(i)).map(str::trim).filter(|s| !s.is_empty()).map(String::from);
        let price_difference = match cols.price_difference.and_then(|i| row.get(i)).map(str::trim).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("price_difference `{s}` is not a number"))?),
        };
        Parsed::Scenario(condition, ScenarioChoice { scenario_index, role, flight_type, price_difference })
    };
    Ok((field(0).to_string(), segment, parsed))
}

/// Reads respondents, dropping invalid rows and incomplete respondents and
/// recording why. Fails only on file-level schema problems.
pub fn load_respondents_lenient<R: Read>(source: R) -> Result<(Vec<RespondentRecord>, ValidationReport)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Schema("respondent file is empty".into()));
    }
    let cols = resolve_columns(&headers)?;

    let mut report = ValidationReport::default();
    let mut order: Vec<String> = Vec::new();
    let mut records: HashMap<String, RespondentRecord> = HashMap::new();
    let mut seen: HashMap<String, Vec<(String, u32)>> = HashMap::new();

    for row in reader.records() {
        let row = row?;
        report.rows_read += 1;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let (id, segment, parsed) = match parse_row(&row, &cols) {
            Ok(v) => v,
            Err(message) => {
                let respondent = row.get(cols.idx[0]).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
                report.diagnostics.push(RowDiagnostic { line: Some(line), respondent, message });
                continue;
            }
        };
        let key = match &parsed {
            Parsed::Scenario(c, s) => (c.as_str().to_string(), s.scenario_index),
            Parsed::Control(c) => (ATTENTION_CONDITION.to_string(), c.scenario_index),
        };
        let record = records.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            RespondentRecord { id: id.clone(), segment, choices: BTreeMap::new(), controls: Vec::new() }
        });
        if record.segment != segment {
            report.diagnostics.push(RowDiagnostic {
                line: Some(line),
                respondent: Some(id),
                message: "demographics differ from this respondent's earlier rows".into(),
            });
            continue;
        }
        let keys = seen.entry(id.clone()).or_default();
        if keys.contains(&key) {
            report.diagnostics.push(RowDiagnostic {
                line: Some(line),
                respondent: Some(id),
                message: format!("duplicate scenario {} under `{}`", key.1, key.0),
            });
            continue;
        }
        keys.push(key);
        match parsed {
            Parsed::Scenario(c, s) => record.choices.entry(c).or_default().push(s),
            Parsed::Control(c) => record.controls.push(c),
        }
        report.rows_accepted += 1;
    }
    if report.rows_read == 0 {
        return Err(Error::Schema("respondent file has a header but no rows".into()));
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut record = records.remove(&id).unwrap();
        let missing: Vec<&str> =
            Condition::REQUIRED.iter().filter(|c| !record.choices.contains_key(c)).map(|c| c.as_str()).collect();
        if !missing.is_empty() {
            report.diagnostics.push(RowDiagnostic {
                line: None,
                respondent: Some(id),
                message: format!("no scenarios for condition(s) {}", missing.join(", ")),
            });
            continue;
        }
        for v in record.choices.values_mut() {
            v.sort_by_key(|c| c.scenario_index);
        }
        record.controls.sort_by_key(|c| c.scenario_index);
        out.push(record);
    }
    report.respondents = out.len();
    Ok((out, report))
}

/// Reads respondents and fails on any invalid row, listing the diagnostics.
pub fn load_respondents<R: Read>(source: R) -> Result<(Vec<RespondentRecord>, ValidationReport)> {
    let (records, report) = load_respondents_lenient(source)?;
    if !report.is_clean() {
        const SHOWN: usize = 20;
        let mut msg = format!("{} invalid row(s) or respondent(s)", report.diagnostics.len());
        for d in report.diagnostics.iter().take(SHOWN) {
            msg.push_str("; ");
            msg.push_str(&d.to_string());
        }
        if report.diagnostics.len() > SHOWN {
            msg.push_str("; ...");
        }
        return Err(Error::Schema(msg));
    }
    Ok((records, report))
}

pub fn write_respondents_csv<W: Write>(records: &[RespondentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.extend(OPTIONAL_COLUMNS);
    w.write_record(&header)?;
    for r in records {
        let s = &r.segment;
        let demo = [
            r.id.clone(),
            s.country.code().to_string(),
            s.gender.to_string(),
            s.age.to_string(),
            s.income.to_string(),
            s.concern.to_string(),
            s.trust.to_string(),
        ];
        for c in &r.controls {
            let mut row = demo.to_vec();
            row.extend([ATTENTION_CONDITION.into(), c.scenario_index.to_string(), c.role.as_str().into(), String::new(), String::new()]);
            w.write_record(&row)?;
        }
        for (cond, choices) in &r.choices {
            for c in choices {
                let mut row = demo.to_vec();
                row.extend([
                    cond.as_str().into(),
                    c.scenario_index.to_string(),
                    c.role.as_str().into(),
                    c.flight_type.clone().unwrap_or_default(),
                    c.price_difference.map(|p| p.to_string()).unwrap_or_default(),
                ]);
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionPolicy {
    /// Every respondent must carry all control scenarios.
    Require,
    /// Respondents without control rows count as already screened.
    AssumeScreened,
}

/// True when every control scenario picked the dominant option.
pub fn apply_attention_checks(record: &RespondentRecord) -> Result<bool> {
    if record.controls.len() != ATTENTION_CHECKS {
        return Err(Error::InvalidInput(format!(
            "respondent {} has {} of {ATTENTION_CHECKS} control scenarios",
            record.id,
            record.controls.len()
        )));
    }
    Ok(record.controls.iter().all(|c| c.role == ControlRole::Dominant))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub country: Country,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenCounts {
    pub loaded: usize,
    pub excluded: usize,
    pub included: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenOutcome {
    pub included: Vec<RespondentRecord>,
    pub excluded: Vec<Exclusion>,
    pub counts: BTreeMap<Country, ScreenCounts>,
}

/// Splits respondents into those analysed and those excluded by the
/// attention checks.
pub fn screen(records: Vec<RespondentRecord>, policy: AttentionPolicy) -> Result<ScreenOutcome> {
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    let mut counts: BTreeMap<Country, ScreenCounts> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.segment.country).or_default();
        c.loaded += 1;
        let pass = if policy == AttentionPolicy::AssumeScreened && r.controls.is_empty() {
            true
        } else {
            apply_attention_checks(&r)?
        };
        if pass {
            c.included += 1;
            included.push(r);
        } else {
            c.excluded += 1;
            excluded.push(Exclusion {
                id: r.id,
                country: r.segment.country,
                reason: "chose a dominated option in a control scenario".into(),
            });
        }
    }
    Ok(ScreenOutcome { included, excluded, counts })
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupRow {
    segment: String,
    offset_group: u8,
    decoy_group: u8,
}

pub fn write_groups_csv<W: Write>(groups: &BTreeMap<Segment, PredictedGroups>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (seg, g) in groups {
        w.serialize(GroupRow { segment: seg.key(), offset_group: g.offset_group, decoy_group: g.decoy_group })?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_groups<R: Read>(source: R) -> Result<BTreeMap<Segment, PredictedGroups>> {
    let mut out = BTreeMap::new();
    for (i, row) in csv::Reader::from_reader(source).deserialize::<GroupRow>().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("groups row {}: {e}", i + 1)))?;
        for (name, v) in [("offset_group", row.offset_group), ("decoy_group", row.decoy_group)] {
            if v != 1 && v != 2 {
                return Err(Error::Schema(format!("groups row {}: {name} must be 1 or 2, got {v}", i + 1)));
            }
        }
        let seg = Segment::parse_key(&row.segment)?;
        out.insert(seg, PredictedGroups { offset_group: row.offset_group, decoy_group: row.decoy_group });
    }
    if out.is_empty() {
        return Err(Error::Schema("groups file has no rows".into()));
    }
    Ok(out)
}
