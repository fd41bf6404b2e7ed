//! Property checks on generated respondent files: RST bounds, strict and
//! lenient ingestion, attention screening and the sample sizes the
//! confirmatory tests report.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use nudge_core::personas::{enumerate_segments, Segment};
use nudge_core::study::fixture::fixture_groups;
use nudge_core::study::{
    compute_rst, load_respondents, load_respondents_lenient, run_battery, screen, AttentionPolicy, Condition, Thresholds,
};

use crate::common::Outcome;

const CASES: u32 = 300;

#[derive(Debug, Clone)]
struct Respondent {
    segment: Segment,
    /// Roles per required condition: 0 target, 1 competitor, 2 decoy.
    choices: [Vec<u8>; 4],
    /// True marks a dominated pick in that control scenario.
    controls: [bool; 3],
}

const ROLES: [&str; 3] = ["target", "competitor", "decoy"];

fn respondent() -> impl Strategy<Value = Respondent> {
    let segments = enumerate_segments();
    let roles = |decoy: bool| prop::collection::vec(if decoy { 0u8..3 } else { 0u8..2 }, 1..6);
    (
        0..segments.len(),
        roles(false),
        roles(true),
        roles(true),
        roles(true),
        prop::array::uniform3(prop::bool::weighted(0.15)),
    )
        .prop_map(move |(s, nd, co, cno, p, controls)| Respondent {
            segment: segments[s],
            choices: [nd, co, cno, p],
            controls,
        })
}

fn csv_line(id: &str, seg: &Segment, condition: &str, index: usize, role: &str) -> String {
    format!(
        "{id},{},{},{},{},{},{},{condition},{index},{role}\n",
        seg.country.code(),
        seg.gender.as_str(),
        seg.age.as_str(),
        seg.income.as_str(),
        seg.concern.as_str(),
        seg.trust.as_str()
    )
}

/// CSV text for the respondents, with ids `r0`, `r1`, ...
fn render(respondents: &[Respondent]) -> String {
    let mut out = String::from(
        "respondent_id,country,gender,age_group,income_group,concern,trust,condition,scenario_index,chosen_role\n",
    );
    for (i, r) in respondents.iter().enumerate() {
        let id = format!("r{i}");
        let mut index = 0;
        for (c, roles) in Condition::REQUIRED.iter().zip(&r.choices) {
            for &role in roles {
                out.push_str(&csv_line(&id, &r.segment, c.as_str(), index, ROLES[role as usize]));
                index += 1;
            }
        }
        for &dominated in &r.controls {
            out.push_str(&csv_line(&id, &r.segment, "attention_check", index, if dominated { "dominated" } else { "dominant" }));
            index += 1;
        }
    }
    out
}

fn expected_rst(roles: &[u8]) -> f64 {
    let t = roles.iter().filter(|&&r| r == 0).count();
    let c = roles.iter().filter(|&&r| r == 1).count();
    if t + c == 0 {
        0.0
    } else {
        t as f64 / (t + c) as f64
    }
}

fn check_case(respondents: &[Respondent], corrupt_at: usize) -> Result<(), TestCaseError> {
    let text = render(respondents);
    let (records, report) = load_respondents(text.as_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(records.len(), respondents.len());
    prop_assert!(report.is_clean());

    for (rec, r) in records.iter().zip(respondents) {
        for (c, roles) in Condition::REQUIRED.iter().zip(&r.choices) {
            let v = compute_rst(rec, *c).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&v), "RST {} out of range", v);
            prop_assert_eq!(v, expected_rst(roles));
            if roles.iter().all(|&x| x == 2) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    // A decoy pick under no_decoy: strict load fails, lenient load drops that row only.
    let victim = corrupt_at % respondents.len();
    let mut corrupted = text.clone();
    corrupted.push_str(&csv_line(&format!("r{victim}"), &respondents[victim].segment, "no_decoy", 999, "decoy"));
    prop_assert!(load_respondents(corrupted.as_bytes()).is_err());
    let (lenient, lreport) = load_respondents_lenient(corrupted.as_bytes()).unwrap();
    prop_assert_eq!(lreport.diagnostics.len(), 1);
    let diag = &lreport.diagnostics[0];
    let victim_id = format!("r{victim}");
    prop_assert_eq!(diag.respondent.as_deref(), Some(victim_id.as_str()));
    prop_assert!(diag.message.contains("no_decoy"));
    prop_assert_eq!(&lenient, &records);

    // Screening excludes exactly the respondents with a dominated pick.
    let failing: BTreeSet<String> = respondents
        .iter()
        .enumerate()
        .filter(|(_, r)| r.controls.iter().any(|&d| d))
        .map(|(i, _)| format!("r{i}"))
        .collect();
    let outcome = screen(records, AttentionPolicy::Require).unwrap();
    let excluded: BTreeSet<String> = outcome.excluded.iter().map(|e| e.id.clone()).collect();
    prop_assert_eq!(&excluded, &failing);
    prop_assert!(outcome.included.iter().all(|r| !failing.contains(&r.id)));
    prop_assert_eq!(outcome.included.len() + outcome.excluded.len(), respondents.len());

    // Confirmatory test sizes follow the included respondents' groups.
    let groups: BTreeMap<Segment, _> = enumerate_segments().iter().map(|s| (*s, fixture_groups(s))).collect();
    let count = |f: &dyn Fn(&Segment) -> bool| outcome.included.iter().filter(|r| f(&r.segment)).count();
    let off1 = count(&|s| fixture_groups(s).offset_group == 1);
    let off2 = count(&|s| fixture_groups(s).offset_group == 2);
    let dec1 = count(&|s| fixture_groups(s).decoy_group == 1);
    let dec2 = count(&|s| fixture_groups(s).decoy_group == 2);
    match run_battery(&outcome.included, &groups, &Thresholds::default()) {
        Ok(reports) => {
            prop_assert!(off1 > 0 && off2 > 0 && dec1 > 1 && dec2 > 0);
            prop_assert_eq!(&reports[0].pairwise[0].result.n_values, &vec![off1, off2]);
            prop_assert_eq!(&reports[1].pairwise[0].result.n_values, &vec![dec1, dec2]);
            for h in &reports[2..] {
                prop_assert_eq!(&h.omnibus.as_ref().unwrap().n_values, &vec![dec1, 3]);
                for p in &h.pairwise {
                    prop_assert!(p.result.n_values[0] <= dec1);
                }
            }
        }
        Err(e) => {
            // Empty groups are named; Friedman needs two subjects in decoy group 1.
            let msg = e.to_string();
            if off1 == 0 || off2 == 0 || dec1 == 0 || dec2 == 0 {
                prop_assert!(msg.contains("empty"), "{}", msg);
            } else {
                prop_assert!(dec1 == 1 && msg.contains("at least 2"), "battery failed unexpectedly: {}", msg);
            }
        }
    }
    Ok(())
}

pub fn check() -> Outcome {
    let started = Instant::now();
    let config = Config { cases: CASES, failure_persistence: None, ..Config::default() };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[7u8; 32]);
    let mut runner = TestRunner::new_with_rng(config, rng);
    let strategy = (prop::collection::vec(respondent(), 1..25), any::<usize>());
    let result = runner.run(&strategy, |(respondents, corrupt_at)| check_case(&respondents, corrupt_at));
    let elapsed = started.elapsed().as_secs_f64();
    match result {
        Ok(()) => Outcome::new(
            elapsed < 60.0,
            format!("{CASES} generated respondent files: RST, ingest, screening and test sizes hold"),
        ),
        Err(e) => Outcome::fail(format!("property violated: {e}")),
    }
}
