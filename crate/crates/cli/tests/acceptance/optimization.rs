//! Monte-Carlo sweep against closed-form cell probabilities of the
//! synthetic agent.
//!
//! The synthetic agent's choice probabilities do not depend on the
//! presentation order, and every draw gets the same number of calls, so the
//! expected tallies are sums of per-draw probabilities: the baseline
//! estimate targets the mean target probability and a decoy cell targets
//! Σ P(target) / Σ (P(target) + P(competitor)) over draws.

use std::collections::BTreeMap;
use std::time::Instant;

use nudge_core::agents::synthetic::{SyntheticAgent, SyntheticCoefficients};
use nudge_core::decoy_space::{DecoyCell, DecoyGrid, DEFAULT_AREA1_LADDER};
use nudge_core::exec::Executor;
use nudge_core::personas::{Country, Segment};
use nudge_core::scenario::{build_scenario, draw_situations, FxTable, OptionRole, SituationRanges};
use nudge_core::simulation::{analyze_sweep, run_sweep, Schedule, SweepPlan};

use crate::common::Outcome;

const SEED: u64 = 424_242;
const TOLERANCE: f64 = 0.03;
const MIN_SHARE: f64 = 0.95;
const GAP: f64 = 0.05;
const SELECTION: usize = 5;

pub const SEGMENTS: [&str; 8] = [
    "de_woman_age_lo_inc_lo_concern_notrust",
    "de_man_age_hi_inc_hi_noconcern_trust",
    "de_woman_age_hi_inc_lo_noconcern_notrust",
    "de_man_age_lo_inc_hi_concern_notrust",
    "sg_man_age_lo_inc_lo_noconcern_notrust",
    "sg_woman_age_hi_inc_hi_concern_notrust",
    "sg_man_age_hi_inc_lo_noconcern_trust",
    "sg_woman_age_lo_inc_hi_noconcern_notrust",
];

fn analytic(agent: &SyntheticAgent, plan: &SweepPlan, segment: &Segment, cell: Option<&DecoyCell>) -> f64 {
    let mut target = 0.0;
    let mut competitor = 0.0;
    for draw in &plan.draws {
        let s = build_scenario(draw, segment.country, cell, &plan.fx, plan.bottles_per_kg).unwrap();
        let roles = s.roles();
        let p = agent.probabilities(segment, &s, &roles);
        for (r, pr) in roles.iter().zip(&p) {
            match r {
                OptionRole::Target => target += pr,
                OptionRole::Competitor => competitor += pr,
                OptionRole::Decoy => {}
            }
        }
    }
    match cell {
        None => target / plan.draws.len() as f64,
        Some(_) => target / (target + competitor),
    }
}

/// Ids ranked by value, descending (or ascending), ties to the lower id.
fn ranked(values: &[f64], descending: bool) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..values.len()).collect();
    ids.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        (if descending { o.reverse() } else { o }).then(a.cmp(&b))
    });
    ids
}

/// Mean analytic delta per country and cell over that country's segments.
fn analytic_deltas(agent: &SyntheticAgent, plan: &SweepPlan, segments: &[Segment], grid: &DecoyGrid) -> BTreeMap<Country, Vec<f64>> {
    let mut sums: BTreeMap<Country, (usize, Vec<f64>)> = BTreeMap::new();
    for seg in segments {
        let base = analytic(agent, plan, seg, None);
        let (n, d) = sums.entry(seg.country).or_insert_with(|| (0, vec![0.0; grid.len()]));
        *n += 1;
        for (id, cell) in grid.cells().iter().enumerate() {
            d[id] += analytic(agent, plan, seg, Some(cell)) - base;
        }
    }
    sums.into_iter().map(|(c, (n, d))| (c, d.into_iter().map(|v| v / n as f64).collect())).collect()
}

/// Cells of the designed instance: the five best and five worst cells by
/// mean analytic delta across countries, plus every cell that sits at least
/// `GAP` inside both groups in every country.
fn designed_cells(deltas: &BTreeMap<Country, Vec<f64>>, n_cells: usize) -> Vec<usize> {
    let mean: Vec<f64> = (0..n_cells).map(|i| deltas.values().map(|d| d[i]).sum::<f64>() / deltas.len() as f64).collect();
    let order = ranked(&mean, true);
    let top = &order[..SELECTION];
    let bottom = &order[n_cells - SELECTION..];
    let mut ids: Vec<usize> = top.iter().chain(bottom).copied().collect();
    for &id in &order[SELECTION..n_cells - SELECTION] {
        let inside = deltas.values().all(|d| {
            let top_min = top.iter().map(|&i| d[i]).fold(f64::INFINITY, f64::min);
            let bottom_max = bottom.iter().map(|&i| d[i]).fold(f64::NEG_INFINITY, f64::max);
            d[id] <= top_min - GAP && d[id] >= bottom_max + GAP
        });
        if inside {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    ids
}

pub fn check() -> Outcome {
    let started = Instant::now();
    let segments: Vec<Segment> = SEGMENTS.iter().map(|k| Segment::parse_key(k).unwrap()).collect();
    let full = DecoyGrid::new(&DEFAULT_AREA1_LADDER).unwrap();
    let agent = SyntheticAgent::new(SyntheticCoefficients::default(), 0.8).unwrap();
    let plan = SweepPlan {
        master_seed: SEED,
        draws: draw_situations(SEED, 30, &SituationRanges::default()).unwrap(),
        fx: FxTable::default(),
        bottles_per_kg: 50.0,
        schedule: Schedule::default(),
    };
    let calls = plan.schedule.calls_per_cell(plan.draws.len());

    // Cell probabilities on the full grid.
    let result = run_sweep(&plan, &segments, &full, &agent, &Executor::default(), None).unwrap();
    let analysis = analyze_sweep(&result, &full, SELECTION, SELECTION).unwrap();
    let mut within = 0usize;
    let mut total = 0usize;
    let mut worst = 0.0f64;
    for seg in &segments {
        let mut estimates = vec![(analytic(&agent, &plan, seg, None), analysis.baseline[seg].probability)];
        for (id, cell) in full.cells().iter().enumerate() {
            estimates.push((analytic(&agent, &plan, seg, Some(cell)), analysis.per_cell[seg][id].probability));
        }
        for (exact, mc) in estimates {
            let dev = (exact - mc).abs();
            worst = worst.max(dev);
            total += 1;
            if dev <= TOLERANCE {
                within += 1;
            }
        }
    }
    let share = within as f64 / total as f64;
    let mut report = vec![format!(
        "{} segments x {} cells + baseline at {calls} calls each: {within}/{total} probabilities within ±{TOLERANCE} ({:.1}%), worst {:.4}",
        segments.len(),
        full.len(),
        100.0 * share,
        worst
    )];

    // Selection on the designed, well-separated subset of cells.
    let full_deltas = analytic_deltas(&agent, &plan, &segments, &full);
    let ids = designed_cells(&full_deltas, full.len());
    let grid = full.restrict(&ids).unwrap();
    report.push(format!("designed instance: {} of {} cells {:?}", ids.len(), full.len(), ids));
    let result = run_sweep(&plan, &segments, &grid, &agent, &Executor::default(), None).unwrap();
    let analysis = analyze_sweep(&result, &grid, SELECTION, SELECTION).unwrap();
    let analytic_delta = analytic_deltas(&agent, &plan, &segments, &grid);

    let mut selections_ok = true;
    let mut gaps_ok = true;
    for (country, deltas) in &analytic_delta {
        let desc = ranked(deltas, true);
        let asc = ranked(deltas, false);
        let top_gap = deltas[desc[SELECTION - 1]] - deltas[desc[SELECTION]];
        let bottom_gap = deltas[asc[SELECTION]] - deltas[asc[SELECTION - 1]];
        let sel = &analysis.country_selection[country];
        let original = |v: &[usize]| v.iter().map(|&i| ids[i]).collect::<Vec<_>>();
        let mut want_top: Vec<usize> = desc[..SELECTION].to_vec();
        let mut want_bottom: Vec<usize> = asc[..SELECTION].to_vec();
        let mut got_top = sel.optimal.clone();
        let mut got_bottom = sel.non_optimal.clone();
        let ordered = got_top == want_top && got_bottom == want_bottom;
        want_top.sort_unstable();
        want_bottom.sort_unstable();
        got_top.sort_unstable();
        got_bottom.sort_unstable();
        let same = want_top == got_top && want_bottom == got_bottom;
        gaps_ok &= top_gap >= GAP && bottom_gap >= GAP;
        selections_ok &= same;
        report.push(format!(
            "{}: analytic top-5 {:?} bottom-5 {:?} (full-grid ids); boundary gaps {:.3}/{:.3}; selected {:?}/{:?}; sets {} order {}",
            country.code(),
            original(&desc[..SELECTION]),
            original(&asc[..SELECTION]),
            top_gap,
            bottom_gap,
            original(&sel.optimal),
            original(&sel.non_optimal),
            if same { "match" } else { "DIFFER" },
            if ordered { "match" } else { "differs" }
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    report.push(format!("runtime {elapsed:.1}s (limit 300s)"));
    let pass = share >= MIN_SHARE && gaps_ok && selections_ok && elapsed < 300.0;
    let detail = format!(
        "{:.1}% of cell probabilities within ±{TOLERANCE}; separation ≥{GAP} {}; selections {}",
        100.0 * share,
        if gaps_ok { "holds" } else { "FAILS" },
        if selections_ok { "match analytic top/bottom 5" } else { "differ from analytic" }
    );
    Outcome::new(pass, detail).with_report(report)
}
