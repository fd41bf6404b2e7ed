//! Annual aviation CO₂ per country, the part produced by sceptical
//! travellers, and the reduction a decoy uplift would buy.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::personas::Country;

/// Grams per megatonne.
const GRAMS_PER_MT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryImpactInputs {
    pub country: Country,
    pub flights_per_person: f64,
    /// Persons, not millions.
    pub population: f64,
    pub sceptic_share: f64,
    /// Offsetting-probability increase among sceptics; 0 when not significant.
    #[serde(default)]
    pub uplift: f64,
    /// Overrides the global mean distance.
    #[serde(default)]
    pub mean_distance_km: Option<f64>,
    /// Overrides the global emission factor.
    #[serde(default)]
    pub emission_factor_g_per_km: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactConfig {
    pub mean_distance_km: f64,
    pub emission_factor_g_per_km: f64,
    pub countries: Vec<CountryImpactInputs>,
    /// Data sources carried through as metadata, label → URL.
    #[serde(default)]
    pub sources: BTreeMap<String, String>,
}

impl ImpactConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a non-negative number, got {v}")))
            }
        };
        let fraction = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        nonneg("mean_distance_km", self.mean_distance_km)?;
        nonneg("emission_factor_g_per_km", self.emission_factor_g_per_km)?;
        if self.countries.is_empty() {
            return Err(Error::Config("impact inputs list no countries".into()));
        }
        for c in &self.countries {
            let tag = c.country.code();
            nonneg(&format!("{tag}.flights_per_person"), c.flights_per_person)?;
            nonneg(&format!("{tag}.population"), c.population)?;
            fraction(&format!("{tag}.sceptic_share"), c.sceptic_share)?;
            fraction(&format!("{tag}.uplift"), c.uplift)?;
            if let Some(d) = c.mean_distance_km {
                nonneg(&format!("{tag}.mean_distance_km"), d)?;
            }
            if let Some(f) = c.emission_factor_g_per_km {
                nonneg(&format!("{tag}.emission_factor_g_per_km"), f)?;
            }
        }
        Ok(())
    }
}

/// Flights × persons × km × g/km, in megatonnes.
pub fn country_emissions(flights_per_person: f64, population: f64, mean_distance_km: f64, emission_factor_g_per_km: f64) -> f64 {
    flights_per_person * population * mean_distance_km * emission_factor_g_per_km / GRAMS_PER_MT
}

pub fn sceptic_emissions(total_mt: f64, share: f64) -> f64 {
    total_mt * share
}

pub fn decoy_reduction(sceptic_mt: f64, uplift: f64) -> f64 {
    sceptic_mt * uplift
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub country: Country,
    pub flights_per_person: f64,
    pub population: f64,
    pub sceptic_people: f64,
    pub sceptic_share: f64,
    pub mean_distance_km: f64,
    pub emission_factor_g_per_km: f64,
    pub total_mt: f64,
    pub sceptic_mt: f64,
    pub reduction_mt: f64,
    pub uplift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactTable {
    pub rows: Vec<ImpactRow>,
    pub total_mt: f64,
    pub sceptic_mt: f64,
    pub reduction_mt: f64,
    pub sources: BTreeMap<String, String>,
}

pub fn compute_impact(config: &ImpactConfig) -> Result<ImpactTable> {
    config.validate()?;
    let rows: Vec<ImpactRow> = config
        .countries
        .iter()
        .map(|c| {
            let distance = c.mean_distance_km.unwrap_or(config.mean_distance_km);
            let factor = c.emission_factor_g_per_km.unwrap_or(config.emission_factor_g_per_km);
            let total = country_emissions(c.flights_per_person, c.population, distance, factor);
            let sceptic = sceptic_emissions(total, c.sceptic_share);
            ImpactRow {
                country: c.country,
                flights_per_person: c.flights_per_person,
                population: c.population,
                sceptic_people: c.population * c.sceptic_share,
                sceptic_share: c.sceptic_share,
                mean_distance_km: distance,
                emission_factor_g_per_km: factor,
                total_mt: total,
                sceptic_mt: sceptic,
                reduction_mt: decoy_reduction(sceptic, c.uplift),
                uplift: c.uplift,
            }
        })
        .collect();
    Ok(ImpactTable {
        total_mt: rows.iter().map(|r| r.total_mt).sum(),
        sceptic_mt: rows.iter().map(|r| r.sceptic_mt).sum(),
        reduction_mt: rows.iter().map(|r| r.reduction_mt).sum(),
        rows,
        sources: config.sources.clone(),
    })
}

/// Megatonnes at display precision: one decimal from 10 Mt up, two below.
pub fn display_mt(v: f64) -> String {
    if v >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn percent(f: f64) -> String {
    format!("{:.0}%", 100.0 * f)
}

pub const IMPACT_COLUMNS: [&str; 9] = [
    "Country",
    "Flights per person",
    "Number of people x10^6 ppl",
    "Number of sceptical travellers x10^6 ppl",
    "Mean duration km",
    "Offset Multiplier CO2 g/km",
    "Total CO2 emissions produced x10^6 tons",
    "CO2 emission produced by sceptical travelers x10^6 tons",
    "CO2 emission reduction by decoy x10^6 tons",
];

/// Writes the table with a closing total row. Countries without uplift show
/// `-` for the reduction.
pub fn write_impact_csv<W: Write>(table: &ImpactTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(IMPACT_COLUMNS)?;
    for r in &table.rows {
        let reduction =
            if r.uplift > 0.0 { format!("{} ({})", display_mt(r.reduction_mt), percent(r.uplift)) } else { "-".into() };
        w.write_record([
            r.country.code().to_string(),
            format!("{}", r.flights_per_person),
            format!("{:.1}", r.population / 1e6),
            format!("{:.1} ({})", r.sceptic_people / 1e6, percent(r.sceptic_share)),
            format!("{}", r.mean_distance_km),
            format!("{}", r.emission_factor_g_per_km),
            display_mt(r.total_mt),
            display_mt(r.sceptic_mt),
            reduction,
        ])?;
    }
    w.write_record([
        "Total".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        display_mt(table.total_mt),
        display_mt(table.sceptic_mt),
        format!("{:.1}", table.reduction_mt),
    ])?;
    w.flush()?;
    Ok(())
}
