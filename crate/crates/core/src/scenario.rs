//! Randomized booking situations and the user-role prompt.
//!
//! Situations are drawn once for the Singapore base currency and converted to
//! each country with a fixed coefficient. The competitor fare scales with
//! flight hours (`price_multiplier` is a fare per hour); the target adds the
//! cost of offsetting all emissions (`offset_multiplier` per tonne of CO₂).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoy_space::{decoy_offset, decoy_price, DecoyCell};
use crate::error::{Error, Result};
use crate::personas::Country;
use crate::seeding::rng_from;

pub const DEFAULT_SITUATIONS: usize = 30;
pub const DEFAULT_BOTTLES_PER_KG: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() || self.min > self.max || self.min <= 0.0 {
            return Err(Error::Config(format!(
                "range `{name}` must satisfy 0 < min <= max (got {}..{})",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Sampling ranges for situation draws. The defaults are reconstructed
/// values, not measured tariffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SituationRanges {
    /// Hours.
    pub flight_hours: Range,
    /// kg CO₂ per flight hour.
    pub emission_multiplier: Range,
    /// Base-currency fare per flight hour.
    pub price_multiplier: Range,
    /// Base-currency offset tariff per tonne CO₂.
    pub offset_multiplier: Range,
}

impl Default for SituationRanges {
    fn default() -> Self {
        SituationRanges {
            flight_hours: Range::new(1.0, 14.0),
            emission_multiplier: Range::new(60.0, 120.0),
            price_multiplier: Range::new(75.0, 225.0),
            offset_multiplier: Range::new(20.0, 60.0),
        }
    }
}

impl SituationRanges {
    pub fn validate(&self) -> Result<()> {
        self.flight_hours.validate("flight_hours")?;
        self.emission_multiplier.validate("emission_multiplier")?;
        self.price_multiplier.validate("price_multiplier")?;
        self.offset_multiplier.validate("offset_multiplier")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SituationDraw {
    pub flight_hours: f64,
    pub emission_multiplier: f64,
    pub price_multiplier: f64,
    pub offset_multiplier: f64,
    pub draw_index: usize,
}

/// Draws `n` situations uniformly from `ranges` with a seeded generator.
pub fn draw_situations(seed: u64, n: usize, ranges: &SituationRanges) -> Result<Vec<SituationDraw>> {
    if n == 0 {
        return Err(Error::InvalidInput("at least one situation must be drawn".into()));
    }
    ranges.validate()?;
    let mut rng = rng_from(seed);
    let mut uniform = |r: &Range| if r.min == r.max { r.min } else { rng.random_range(r.min..=r.max) };
    Ok((0..n)
        .map(|draw_index| SituationDraw {
            flight_hours: uniform(&ranges.flight_hours),
            emission_multiplier: uniform(&ranges.emission_multiplier),
            price_multiplier: uniform(&ranges.price_multiplier),
            offset_multiplier: uniform(&ranges.offset_multiplier),
            draw_index,
        })
        .collect())
}

/// Currency conversion coefficients relative to the Singapore base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxTable(pub BTreeMap<Country, f64>);

impl FxTable {
    pub fn coefficient(&self, country: Country) -> Result<f64> {
        match self.0.get(&country) {
            Some(&c) if c > 0.0 && c.is_finite() => Ok(c),
            Some(&c) => Err(Error::Config(format!("fx coefficient for {country} must be positive, got {c}"))),
            None => Err(Error::Config(format!("fx table has no entry for {country}"))),
        }
    }
}

impl Default for FxTable {
    /// Illustrative SGD-based coefficients; replace with the rates of record.
    fn default() -> Self {
        FxTable(BTreeMap::from([
            (Country::CN, 5.35),
            (Country::DE, 0.69),
            (Country::IN, 62.0),
            (Country::SG, 1.0),
            (Country::US, 0.74),
        ]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionRole {
    Target,
    Competitor,
    Decoy,
}

impl OptionRole {
    pub fn as_str(self) -> &'static str {
        match self {
            OptionRole::Target => "target",
            OptionRole::Competitor => "competitor",
            OptionRole::Decoy => "decoy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TicketOption {
    pub price: f64,
    /// Share of flight emissions offset, in [0, 1].
    pub offset_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScenario {
    pub country: Country,
    pub draw_index: usize,
    pub flight_hours: f64,
    pub emissions_kg: f64,
    pub bottles_number: u64,
    pub currency: String,
    pub target: TicketOption,
    pub competitor: TicketOption,
    pub decoy: Option<TicketOption>,
    pub decoy_cell: Option<DecoyCell>,
}

impl ChoiceScenario {
    pub fn option(&self, role: OptionRole) -> Option<&TicketOption> {
        match role {
            OptionRole::Target => Some(&self.target),
            OptionRole::Competitor => Some(&self.competitor),
            OptionRole::Decoy => self.decoy.as_ref(),
        }
    }

    /// Roles present, in canonical order.
    pub fn roles(&self) -> Vec<OptionRole> {
        let mut r = vec![OptionRole::Target, OptionRole::Competitor];
        if self.decoy.is_some() {
            r.push(OptionRole::Decoy);
        }
        r
    }

    pub fn option_count(&self) -> usize {
        if self.decoy.is_some() {
            3
        } else {
            2
        }
    }
}

/// Builds the scenario for one country, optionally with a decoy.
pub fn build_scenario(
    draw: &SituationDraw,
    country: Country,
    cell: Option<&DecoyCell>,
    fx: &FxTable,
    bottles_per_kg: f64,
) -> Result<ChoiceScenario> {
    let coefficient = fx.coefficient(country)?;
    let emissions_kg = draw.flight_hours * draw.emission_multiplier;
    if !(emissions_kg > 0.0) {
        return Err(Error::Domain("situation produces no emissions".into()));
    }
    let base_competitor = draw.flight_hours * draw.price_multiplier;
    let base_target = base_competitor + emissions_kg / 1000.0 * draw.offset_multiplier;

    let target = TicketOption { price: base_target * coefficient, offset_fraction: 1.0 };
    let competitor = TicketOption { price: base_competitor * coefficient, offset_fraction: 0.0 };
    let decoy = match cell {
        Some(c) => Some(TicketOption {
            price: decoy_price(target.price, competitor.price, c.mu)?,
            offset_fraction: decoy_offset(target.offset_fraction, c)?,
        }),
        None => None,
    };
    Ok(ChoiceScenario {
        country,
        draw_index: draw.draw_index,
        flight_hours: draw.flight_hours,
        emissions_kg,
        bottles_number: (emissions_kg * bottles_per_kg).round() as u64,
        currency: country.currency().to_string(),
        target,
        competitor,
        decoy,
        decoy_cell: cell.copied(),
    })
}

/// A presentation order: a permutation of the roles present in a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OptionOrder(Vec<OptionRole>);

impl OptionOrder {
    pub fn new(roles: Vec<OptionRole>) -> Result<Self> {
        let mut sorted = roles.clone();
        sorted.sort();
        let valid = sorted == [OptionRole::Target, OptionRole::Competitor]
            || sorted == [OptionRole::Target, OptionRole::Competitor, OptionRole::Decoy];
        if !valid {
            return Err(Error::InvalidInput(format!("{roles:?} is not a permutation of the presented options")));
        }
        Ok(OptionOrder(roles))
    }

    pub fn canonical(k: usize) -> Self {
        if k == 3 {
            OptionOrder(vec![OptionRole::Target, OptionRole::Competitor, OptionRole::Decoy])
        } else {
            OptionOrder(vec![OptionRole::Target, OptionRole::Competitor])
        }
    }

    /// Uniformly random permutation of the `k` canonical roles.
    pub fn shuffled<R: Rng>(k: usize, rng: &mut R) -> Self {
        let mut roles = OptionOrder::canonical(k).0;
        for i in (1..roles.len()).rev() {
            let j = rng.random_range(0..=i);
            roles.swap(i, j);
        }
        OptionOrder(roles)
    }

    pub fn roles(&self) -> &[OptionRole] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Role shown at 1-based `position`.
    pub fn role_at(&self, position: usize) -> Option<OptionRole> {
        position.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    pub fn compact(&self) -> String {
        self.0.iter().map(|r| &r.as_str()[..1]).collect::<Vec<_>>().join("")
    }
}

/// Rounds half-up to cents and prints two decimals.
pub fn format_money(amount: f64) -> String {
    let scaled = amount * 100.0;
    // Representation error can leave x.5 slightly below; nudge by a relative ulp-scale amount.
    let cents = (scaled + scaled.abs() * 1e-12).round();
    format!("{:.2}", cents / 100.0)
}

fn format_hours(hours: f64) -> String {
    let s = format!("{hours:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn format_percent(fraction: f64) -> String {
    format!("{}%", (fraction * 100.0).round() as i64)
}

/// Renders the user-role prompt with options numbered in `order`.
pub fn render_user_prompt(scenario: &ChoiceScenario, order: &OptionOrder) -> Result<String> {
    let k = scenario.option_count();
    if order.len() != k || scenario.roles().iter().any(|r| !order.roles().contains(r)) {
        return Err(Error::InvalidInput(format!(
            "order {:?} does not match the {k} presented options",
            order.roles()
        )));
    }
    let currency = &scenario.currency;
    let options: Vec<String> = order
        .roles()
        .iter()
        .enumerate()
        .map(|(i, role)| {
            let n = i + 1;
            match role {
                OptionRole::Target => {
                    format!("{n}. Pay {} {currency} and fully offset emissions", format_money(scenario.target.price))
                }
                OptionRole::Competitor => {
                    format!("{n}. Pay {} {currency} and not offset emissions", format_money(scenario.competitor.price))
                }
                OptionRole::Decoy => {
                    let d = scenario.decoy.as_ref().expect("decoy role present");
                    format!(
                        "{n}. Pay {} {currency} and offset {} emissions",
                        format_money(d.price),
                        format_percent(d.offset_fraction)
                    )
                }
            }
        })
        .collect();
    Ok(format!(
        "You are planning a {hours}-hour flight. This flight produces {emissions} kg of CO₂ emissions which is \
         equivalent to producing {bottles} plastic water bottles. Using all the information below, consider {count} \
         options: {options}. Which option would you choose? Please give your answer only with the option number \
         without any words.",
        hours = format_hours(scenario.flight_hours),
        emissions = scenario.emissions_kg.round() as i64,
        bottles = scenario.bottles_number,
        count = if k == 3 { "three" } else { "two" },
        options = options.join("; "),
    ))
}

/// Writes scenarios as JSON lines.
pub fn write_scenarios_jsonl<W: Write>(scenarios: &[ChoiceScenario], mut out: W) -> Result<()> {
    for s in scenarios {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_scenarios_jsonl<R: BufRead>(input: R) -> Result<Vec<ChoiceScenario>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: ChoiceScenario = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("scenario line {}: {e}", i + 1)))?;
        out.push(s);
    }
    Ok(out)
}
