//! Exploratory analyses: two-way permutation ANOVAs with country, per-country
//! post-hoc tests, the sceptic cohort, per-country logistic models and
//! bootstrap intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::battery::{rst_rows, RstRow};
use super::tables::{fixed, sci, Table};
use super::{ChoiceRole, Condition, RespondentRecord, Thresholds};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::personas::{AgeGroup, Concern, Country, Gender, IncomeGroup, Segment, Trust};
use crate::seeding::derive_seed;
use crate::simulation::PredictedGroups;
use crate::stats::{
    anova_with_permutation, average_marginal_effects, bootstrap_ci, logistic_fit, mann_whitney, wilcoxon_signed_rank,
    AnovaTable, BootstrapInterval, Factor, LogisticFit, MarginalEffect, PermutationOptions, PredictorKind, TestResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploratoryOptions {
    pub seed: u64,
    pub n_perm: usize,
    pub n_boot: usize,
    pub ci_level: f64,
}

impl Default for ExploratoryOptions {
    fn default() -> Self {
        ExploratoryOptions { seed: 0, n_perm: 1000, n_boot: 5000, ci_level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAnova {
    pub id: String,
    pub response: String,
    pub table: AnovaTable,
}

/// Mann-Whitney comparison of group 2 (`n1`) against group 1 (`n2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub country: Country,
    pub n1: usize,
    pub n2: usize,
    pub result: TestResult,
    pub threshold: f64,
    pub significant: bool,
}

/// Wilcoxon comparison of paired conditions within one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub country: Option<Country>,
    pub label: String,
    pub n: usize,
    pub result: TestResult,
    pub threshold: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryLogistic {
    pub country: Country,
    pub fit: Option<LogisticFit>,
    pub marginal_effects: Vec<MarginalEffect>,
    /// Why the fit or its marginal effects are missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub country: Option<Country>,
    pub population: String,
    pub condition: String,
    pub n: usize,
    pub interval: BootstrapInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploratoryReport {
    pub threshold_note: String,
    pub anovas: Vec<NamedAnova>,
    pub offset_groups: Vec<GroupComparison>,
    pub decoy_groups: Vec<GroupComparison>,
    pub country_optimal: Vec<PairedComparison>,
    pub personalized: Vec<PairedComparison>,
    pub sceptics: Vec<PairedComparison>,
    pub sceptics_pooled: Option<PairedComparison>,
    pub logistic: Vec<CountryLogistic>,
    pub bootstrap: Vec<BootstrapRow>,
}

fn countries(rows: &[RstRow]) -> Vec<Country> {
    let mut c: Vec<Country> = rows.iter().map(|r| r.country).collect();
    c.sort();
    c.dedup();
    c
}

fn group_anova(
    id: &str,
    response: &str,
    rows: &[RstRow],
    group_of: impl Fn(&RstRow) -> u8,
    value: impl Fn(&RstRow) -> f64,
    perm: PermutationOptions,
    executor: &Executor,
) -> Result<NamedAnova> {
    let values: Vec<f64> = rows.iter().map(&value).collect();
    let group = Factor::new("group", rows.iter().map(|r| format!("group{}", group_of(r))).collect());
    let country = Factor::new("country", rows.iter().map(|r| r.country.code().to_string()).collect());
    let table = anova_with_permutation(&values, &group, &country, perm, executor)
        .map_err(|e| Error::InvalidInput(format!("{id}: {e}")))?;
    Ok(NamedAnova { id: id.into(), response: response.into(), table })
}

/// Stacks decoy-group-1 RSTs for `conditions` in long form and fits
/// decoy type × country.
fn condition_anova(
    id: &str,
    rows: &[RstRow],
    conditions: [Condition; 3],
    perm: PermutationOptions,
    executor: &Executor,
) -> Result<NamedAnova> {
    let mut values = Vec::new();
    let mut kind = Vec::new();
    let mut country = Vec::new();
    for r in rows.iter().filter(|r| r.groups.decoy_group == 1) {
        for c in conditions {
            values.push(r.get(c));
            kind.push(c.as_str().to_string());
            country.push(r.country.code().to_string());
        }
    }
    let table = anova_with_permutation(
        &values,
        &Factor::new("decoy_type", kind),
        &Factor::new("country", country),
        perm,
        executor,
    )
    .map_err(|e| Error::InvalidInput(format!("{id}: {e}")))?;
    Ok(NamedAnova { id: id.into(), response: "RST".into(), table })
}

fn group_post_hocs(
    id: &str,
    rows: &[RstRow],
    group_of: impl Fn(&RstRow) -> u8,
    value: impl Fn(&RstRow) -> f64,
    threshold: f64,
) -> Result<Vec<GroupComparison>> {
    let mut out = Vec::new();
    for country in countries(rows) {
        let in_c = rows.iter().filter(|r| r.country == country);
        let x: Vec<f64> = in_c.clone().filter(|r| group_of(r) == 2).map(&value).collect();
        let y: Vec<f64> = in_c.filter(|r| group_of(r) == 1).map(&value).collect();
        if x.is_empty() || y.is_empty() {
            return Err(Error::InvalidInput(format!("{id}: {country} lacks one of the two groups")));
        }
        let result = mann_whitney(&x, &y).map_err(|e| Error::InvalidInput(format!("{id} {country}: {e}")))?;
        out.push(GroupComparison {
            country,
            n1: x.len(),
            n2: y.len(),
            significant: result.p_two_sided < threshold,
            result,
            threshold,
        });
    }
    Ok(out)
}

fn paired(
    id: &str,
    country: Option<Country>,
    rows: &[&RstRow],
    lead: Condition,
    other: Condition,
    threshold: f64,
) -> Result<PairedComparison> {
    let x: Vec<f64> = rows.iter().map(|r| r.get(lead)).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.get(other)).collect();
    let where_ = country.map(|c| format!(" {c}")).unwrap_or_default();
    let result = wilcoxon_signed_rank(&x, &y).map_err(|e| Error::InvalidInput(format!("{id}{where_}: {e}")))?;
    Ok(PairedComparison {
        country,
        label: format!("{} vs {}", lead.title(), other.title()),
        n: x.len(),
        significant: result.p_two_sided < threshold,
        result,
        threshold,
    })
}

fn condition_post_hocs(
    id: &str,
    rows: &[RstRow],
    lead: Condition,
    others: [Condition; 2],
    threshold: f64,
) -> Result<Vec<PairedComparison>> {
    let mut out = Vec::new();
    for country in countries(rows) {
        let sel: Vec<&RstRow> = rows.iter().filter(|r| r.country == country && r.groups.decoy_group == 1).collect();
        if sel.is_empty() {
            return Err(Error::InvalidInput(format!("{id}: {country} has no decoy-group-1 respondents")));
        }
        for other in others {
            out.push(paired(id, Some(country), &sel, lead, other, threshold)?);
        }
    }
    Ok(out)
}

/// Names of the logistic predictors, in design-column order after the intercept.
pub const LOGISTIC_PREDICTORS: [&str; 6] =
    ["Age (Lower)", "Concern (Yes)", "Gender (Woman)", "Income (Lower)", "Trust (Yes)", "Price difference"];

/// One observation per no-decoy scenario where the target or competitor was
/// chosen; decoy-free by construction. Price difference enters only when
/// every observation carries it.
fn logistic_design(records: &[&RespondentRecord]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<String>, Vec<PredictorKind>) {
    let obs: Vec<(&Segment, ChoiceRole, Option<f64>)> = records
        .iter()
        .flat_map(|r| {
            r.choices.get(&Condition::NoDecoy).into_iter().flatten().map(move |c| (&r.segment, c.role, c.price_difference))
        })
        .filter(|(_, role, _)| *role != ChoiceRole::Decoy)
        .collect();
    let with_price = !obs.is_empty() && obs.iter().all(|o| o.2.is_some());
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let mut x = Vec::with_capacity(obs.len());
    let mut y = Vec::with_capacity(obs.len());
    for (s, role, price) in &obs {
        let mut row = vec![
            1.0,
            ind(s.age == AgeGroup::BelowMedian),
            ind(s.concern == Concern::Concerned),
            ind(s.gender == Gender::Woman),
            ind(s.income == IncomeGroup::BelowMedian),
            ind(s.trust == Trust::Trusts),
        ];
        if with_price {
            row.push(price.unwrap());
        }
        x.push(row);
        y.push(ind(*role == ChoiceRole::Target));
    }
    let n_pred = if with_price { 6 } else { 5 };
    let mut names = vec!["Intercept".to_string()];
    names.extend(LOGISTIC_PREDICTORS[..n_pred].iter().map(|s| s.to_string()));
    let mut kinds = vec![PredictorKind::Intercept];
    kinds.extend((0..5).map(|_| PredictorKind::Level { siblings: vec![] }));
    if with_price {
        kinds.push(PredictorKind::Continuous);
    }
    (x, y, names, kinds)
}

fn country_logistic(country: Country, records: &[&RespondentRecord]) -> CountryLogistic {
    let (x, y, names, kinds) = logistic_design(records);
    match logistic_fit(&x, &y, &names) {
        Err(e) => CountryLogistic { country, fit: None, marginal_effects: vec![], note: Some(e.to_string()) },
        Ok(fit) => match average_marginal_effects(&fit, &x, &kinds) {
            Ok(me) => CountryLogistic { country, fit: Some(fit), marginal_effects: me, note: None },
            Err(e) => CountryLogistic { country, fit: Some(fit), marginal_effects: vec![], note: Some(e.to_string()) },
        },
    }
}

/// Runs the exploratory battery on screened respondents.
pub fn run_exploratory(
    records: &[RespondentRecord],
    groups: &BTreeMap<Segment, PredictedGroups>,
    thresholds: &Thresholds,
    opts: &ExploratoryOptions,
    executor: &Executor,
) -> Result<ExploratoryReport> {
    let rows = rst_rows(records, groups)?;
    let perm = |i: u64| PermutationOptions { n_perm: opts.n_perm, seed: derive_seed(opts.seed, &[i]), add_one: false };

    let anovas = vec![
        group_anova("H1.1", "no-decoy RST", &rows, |r| r.groups.offset_group, |r| r.no_decoy, perm(1), executor)?,
        group_anova(
            "H2.1",
            "country-optimal minus no-decoy RST",
            &rows,
            |r| r.groups.decoy_group,
            |r| r.country_optimal - r.no_decoy,
            perm(2),
            executor,
        )?,
        condition_anova(
            "H3.1",
            &rows,
            [Condition::NoDecoy, Condition::CountryOptimal, Condition::CountryNonOptimal],
            perm(3),
            executor,
        )?,
        condition_anova(
            "H4.1",
            &rows,
            [Condition::NoDecoy, Condition::CountryOptimal, Condition::Personalized],
            perm(4),
            executor,
        )?,
    ];

    let offset_groups =
        group_post_hocs("H1.1", &rows, |r| r.groups.offset_group, |r| r.no_decoy, thresholds.exploratory_groups)?;
    let decoy_groups = group_post_hocs(
        "H2.1",
        &rows,
        |r| r.groups.decoy_group,
        |r| r.country_optimal - r.no_decoy,
        thresholds.exploratory_groups,
    )?;
    let country_optimal = condition_post_hocs(
        "H3.1",
        &rows,
        Condition::CountryOptimal,
        [Condition::NoDecoy, Condition::CountryNonOptimal],
        thresholds.exploratory_post_hoc,
    )?;
    let personalized = condition_post_hocs(
        "H4.1",
        &rows,
        Condition::Personalized,
        [Condition::NoDecoy, Condition::CountryOptimal],
        thresholds.exploratory_post_hoc,
    )?;

    let mut sceptics = Vec::new();
    for country in countries(&rows) {
        let sel: Vec<&RstRow> = rows.iter().filter(|r| r.country == country && r.sceptic).collect();
        if !sel.is_empty() {
            sceptics.push(paired(
                "sceptics",
                Some(country),
                &sel,
                Condition::Personalized,
                Condition::NoDecoy,
                thresholds.exploratory_groups,
            )?);
        }
    }
    let all_sceptics: Vec<&RstRow> = rows.iter().filter(|r| r.sceptic).collect();
    let sceptics_pooled = if all_sceptics.is_empty() {
        None
    } else {
        Some(paired(
            "sceptics",
            None,
            &all_sceptics,
            Condition::Personalized,
            Condition::NoDecoy,
            thresholds.exploratory_groups,
        )?)
    };

    let mut by_country: BTreeMap<Country, Vec<&RespondentRecord>> = BTreeMap::new();
    for r in records {
        by_country.entry(r.segment.country).or_default().push(r);
    }
    let logistic = by_country.iter().map(|(c, recs)| country_logistic(*c, recs)).collect();

    let mut bootstrap = Vec::new();
    let mut boot = |country: Option<Country>, population: &str, condition: &str, values: Vec<f64>| -> Result<()> {
        if values.is_empty() {
            return Ok(());
        }
        let seed = derive_seed(opts.seed, &[0xB007, bootstrap.len() as u64]);
        let interval = bootstrap_ci(&values, opts.n_boot, opts.ci_level, seed, executor)?;
        bootstrap.push(BootstrapRow {
            country,
            population: population.into(),
            condition: condition.into(),
            n: values.len(),
            interval,
        });
        Ok(())
    };
    let scopes: Vec<Option<Country>> = std::iter::once(None).chain(countries(&rows).into_iter().map(Some)).collect();
    for scope in scopes {
        let in_scope = |r: &&RstRow| scope.is_none_or(|c| r.country == c);
        for g in [1u8, 2] {
            let v = rows.iter().filter(in_scope).filter(|r| r.groups.offset_group == g).map(|r| r.no_decoy).collect();
            boot(scope, &format!("offset group {g}"), "no_decoy", v)?;
        }
        for g in [1u8, 2] {
            let v = rows
                .iter()
                .filter(in_scope)
                .filter(|r| r.groups.decoy_group == g)
                .map(|r| r.country_optimal - r.no_decoy)
                .collect();
            boot(scope, &format!("decoy group {g}"), "country_optimal minus no_decoy", v)?;
        }
        for c in [Condition::NoDecoy, Condition::CountryOptimal, Condition::CountryNonOptimal, Condition::Personalized] {
            let v = rows.iter().filter(in_scope).filter(|r| r.groups.decoy_group == 1).map(|r| r.get(c)).collect();
            boot(scope, "decoy group 1", c.as_str(), v)?;
        }
        for c in [Condition::NoDecoy, Condition::Personalized] {
            let v = rows.iter().filter(in_scope).filter(|r| r.sceptic).map(|r| r.get(c)).collect();
            boot(scope, "sceptics", c.as_str(), v)?;
        }
    }

    Ok(ExploratoryReport {
        threshold_note: thresholds.describe(),
        anovas,
        offset_groups,
        decoy_groups,
        country_optimal,
        personalized,
        sceptics,
        sceptics_pooled,
        logistic,
        bootstrap,
    })
}

fn country_name(c: Country) -> &'static str {
    match c {
        Country::US => "US",
        other => other.display_name(),
    }
}

fn yes_no(b: bool, words: (&str, &str)) -> String {
    if b { words.0 } else { words.1 }.to_string()
}

fn group_table(title: &str, n1: &str, n2: &str, sig: &str, rows: &[GroupComparison], u_decimals: usize) -> Table {
    let mut t = Table::new(title, &["Country", n1, n2, "U statistic", "p-value", "z-value", "r effect size", sig]);
    for r in rows {
        t.push(vec![
            country_name(r.country).into(),
            r.n1.to_string(),
            r.n2.to_string(),
            fixed(r.result.statistic, u_decimals),
            sci(r.result.p_two_sided),
            fixed(r.result.z.unwrap_or(0.0), 3),
            fixed(r.result.effect_size, 3),
            yes_no(r.significant, ("True", "False")),
        ]);
    }
    t
}

fn condition_table(title: &str, rows: &[PairedComparison], threshold: f64) -> Table {
    let sig = format!("Significant (α={threshold})");
    let mut t = Table::new(title, &["Country", "Test Type", "n", "W", "z-value", "r effect size", "p-value", &sig]);
    let mut last: Option<Country> = None;
    for r in rows {
        let name = if r.country == last { String::new() } else { r.country.map(country_name).unwrap_or("All").into() };
        last = r.country;
        t.push(vec![
            name,
            r.label.clone(),
            r.n.to_string(),
            fixed(r.result.statistic, 1),
            fixed(r.result.z.unwrap_or(0.0), 2),
            fixed(r.result.effect_size, 2),
            sci(r.result.p_two_sided),
            yes_no(r.significant, ("True", "False")),
        ]);
    }
    t
}

impl ExploratoryReport {
    pub fn anova_table(&self) -> Table {
        let mut t = Table::new(
            "Two-way ANOVA (Type II) with permutation p-values",
            &["Analysis", "Response", "Effect", "Sum Sq", "df", "F", "p (parametric)", "p (permutation)", "eta²", "partial eta²"],
        );
        let opt = |v: Option<f64>, f: fn(f64) -> String| v.map(f).unwrap_or_default();
        for a in &self.anovas {
            for row in a.table.effects.iter().chain(std::iter::once(&a.table.residual)) {
                t.push(vec![
                    a.id.clone(),
                    a.response.clone(),
                    row.effect.clone(),
                    fixed(row.sum_sq, 4),
                    format!("{}", row.df),
                    opt(row.f, |v| fixed(v, 3)),
                    opt(row.p_parametric, sci),
                    opt(row.p_permutation, |v| fixed(v, 3)),
                    fixed(row.eta_sq, 3),
                    opt(row.partial_eta_sq, |v| fixed(v, 3)),
                ]);
            }
        }
        t
    }

    /// Offset groups per country.
    pub fn offset_group_table(&self) -> Table {
        let a = self.offset_groups.first().map(|r| r.threshold).unwrap_or(0.01);
        group_table(
            "No-decoy RST: predicted not fully offset vs fully offset (Mann-Whitney)",
            "n1 (not fully offset)",
            "n2 (fully offset)",
            &format!("Significant at α={a}"),
            &self.offset_groups,
            1,
        )
    }

    /// Decoy groups per country.
    pub fn decoy_group_table(&self) -> Table {
        let a = self.decoy_groups.first().map(|r| r.threshold).unwrap_or(0.01);
        group_table(
            "Change in RST under the country-optimal decoy: predicted not increase vs increase (Mann-Whitney)",
            "n1 (not increase)",
            "n2 (increase)",
            &format!("Significance at α={a}"),
            &self.decoy_groups,
            2,
        )
    }

    pub fn country_optimal_table(&self) -> Table {
        let a = self.country_optimal.first().map(|r| r.threshold).unwrap_or(0.005);
        condition_table("Country-optimal decoy per country (Wilcoxon signed-rank)", &self.country_optimal, a)
    }

    pub fn personalized_table(&self) -> Table {
        let a = self.personalized.first().map(|r| r.threshold).unwrap_or(0.005);
        condition_table("Segment-optimal decoy per country (Wilcoxon signed-rank)", &self.personalized, a)
    }

    pub fn sceptics_table(&self) -> Table {
        let a = self.sceptics.first().map(|r| r.threshold).unwrap_or(0.01);
        let sig = format!("Significant (α={a})");
        let mut t = Table::new(
            "Sceptical travellers: segment-optimal decoy vs no decoy (Wilcoxon signed-rank)",
            &["Country", "n (pairs)", "W statistic", "z statistic", "p-value", "Effect size (r)", &sig],
        );
        for r in self.sceptics.iter().chain(self.sceptics_pooled.as_ref()) {
            t.push(vec![
                r.country.map(country_name).unwrap_or("All").into(),
                r.n.to_string(),
                fixed(r.result.statistic, 1),
                fixed(r.result.z.unwrap_or(0.0), 3),
                fixed(r.result.p_two_sided, 5),
                fixed(r.result.effect_size, 3),
                yes_no(r.significant, ("Yes", "No")),
            ]);
        }
        t
    }

    pub fn logistic_fit_table(&self) -> Table {
        let mut t = Table::new(
            "Logistic regression fit per country",
            &["Country", "n", "Log-Likelihood", "AIC", "BIC", "Pseudo R²", "LR p-value", "Note"],
        );
        for l in &self.logistic {
            match &l.fit {
                Some(f) => t.push(vec![
                    country_name(l.country).into(),
                    f.n_obs.to_string(),
                    fixed(f.log_likelihood, 3),
                    fixed(f.aic, 3),
                    fixed(f.bic, 3),
                    fixed(f.pseudo_r2, 3),
                    format!("{:.2e}", f.lr_p_value),
                    l.note.clone().unwrap_or_default(),
                ]),
                None => t.push(vec![
                    country_name(l.country).into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    l.note.clone().unwrap_or_default(),
                ]),
            }
        }
        t
    }

    /// Marginal effects with predictors as rows and countries as columns.
    pub fn marginal_effects_table(&self) -> Table {
        let cols: Vec<String> = self.logistic.iter().map(|l| format!("{} AME", country_name(l.country))).collect();
        let mut headers = vec!["Predictor"];
        headers.extend(cols.iter().map(String::as_str));
        let mut t = Table::new("Average marginal effects on offsetting probability (* p < 0.05)", &headers);
        for name in LOGISTIC_PREDICTORS {
            let mut row = vec![name.to_string()];
            let mut any = false;
            for l in &self.logistic {
                match l.marginal_effects.iter().find(|m| m.name == name) {
                    Some(m) => {
                        any = true;
                        let star = if m.p_value < 0.05 { "*" } else { "" };
                        row.push(format!("{} (p = {}{star})", fixed(m.ame, 3), format!("{:.2e}", m.p_value)));
                    }
                    None => row.push(String::new()),
                }
            }
            if any {
                t.push(row);
            }
        }
        t
    }

    pub fn bootstrap_table(&self) -> Table {
        let level = self.bootstrap.first().map(|b| b.interval.level).unwrap_or(0.95);
        let lo = format!("{:.1}% lower", 100.0 * level);
        let hi = format!("{:.1}% upper", 100.0 * level);
        let mut t = Table::new("Bootstrap intervals of mean RST", &["Country", "Population", "Condition", "n", "Mean", &lo, &hi]);
        for b in &self.bootstrap {
            t.push(vec![
                b.country.map(country_name).unwrap_or("All").into(),
                b.population.clone(),
                b.condition.clone(),
                b.n.to_string(),
                fixed(b.interval.estimate, 4),
                fixed(b.interval.lower, 4),
                fixed(b.interval.upper, 4),
            ]);
        }
        t
    }

    /// Every table in report order, keyed by a file stem.
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        vec![
            ("anova", self.anova_table()),
            ("offset_groups", self.offset_group_table()),
            ("decoy_groups", self.decoy_group_table()),
            ("country_optimal", self.country_optimal_table()),
            ("personalized", self.personalized_table()),
            ("sceptics", self.sceptics_table()),
            ("logistic_fit", self.logistic_fit_table()),
            ("marginal_effects", self.marginal_effects_table()),
            ("bootstrap", self.bootstrap_table()),
        ]
    }
}
