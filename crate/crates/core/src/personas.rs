//! Air-traveller segments and the persona system prompt.
//!
//! A segment is one cell of country × gender × age × income × concern ×
//! trust. Enumeration order is country (CN, DE, IN, SG, US), then gender,
//! age, income, concern and trust, each in its declared level order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Country {
    CN,
    DE,
    IN,
    SG,
    US,
}

impl Country {
    pub const ALL: [Country; 5] = [Country::CN, Country::DE, Country::IN, Country::SG, Country::US];

    /// Name as it appears in the persona prompt.
    pub fn display_name(self) -> &'static str {
        match self {
            Country::CN => "China",
            Country::DE => "Germany",
            Country::IN => "India",
            Country::SG => "Singapore",
            Country::US => "the United States",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Country::CN => "CN",
            Country::DE => "DE",
            Country::IN => "IN",
            Country::SG => "SG",
            Country::US => "US",
        }
    }

    /// ISO 4217 code of the local currency.
    pub fn currency(self) -> &'static str {
        match self {
            Country::CN => "CNY",
            Country::DE => "EUR",
            Country::IN => "INR",
            Country::SG => "SGD",
            Country::US => "USD",
        }
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Country {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CN" | "CHINA" => Ok(Country::CN),
            "DE" | "GERMANY" => Ok(Country::DE),
            "IN" | "INDIA" => Ok(Country::IN),
            "SG" | "SINGAPORE" => Ok(Country::SG),
            "US" | "USA" | "UNITED STATES" => Ok(Country::US),
            other => Err(Error::InvalidInput(format!("unknown country `{other}`"))),
        }
    }
}

macro_rules! binary_level {
    ($name:ident { $first:ident => $first_s:literal, $second:ident => $second_s:literal }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $first,
            $second,
        }

        impl $name {
            pub const ALL: [$name; 2] = [$name::$first, $name::$second];

            pub fn as_str(self) -> &'static str {
                match self {
                    $name::$first => $first_s,
                    $name::$second => $second_s,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $first_s => Ok($name::$first),
                    $second_s => Ok($name::$second),
                    other => Err(Error::InvalidInput(format!(
                        concat!("unknown ", stringify!($name), " level `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

binary_level!(Gender { Man => "man", Woman => "woman" });
binary_level!(AgeGroup { BelowMedian => "below_median", AboveMedian => "above_median" });
binary_level!(IncomeGroup { BelowMedian => "below_median", AboveMedian => "above_median" });
binary_level!(Concern { Concerned => "concerned", NotConcerned => "not_concerned" });
binary_level!(Trust { Trusts => "trusts", NotTrusts => "not_trusts" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub country: Country,
    pub gender: Gender,
    pub age: AgeGroup,
    pub income: IncomeGroup,
    pub concern: Concern,
    pub trust: Trust,
}

impl Segment {
    /// Stable join key, e.g. `sg_man_age_hi_inc_hi_concern_trust`.
    pub fn key(&self) -> String {
        format!(
            "{}_{}_age_{}_inc_{}_{}_{}",
            self.country.code().to_ascii_lowercase(),
            self.gender.as_str(),
            match self.age {
                AgeGroup::AboveMedian => "hi",
                AgeGroup::BelowMedian => "lo",
            },
            match self.income {
                IncomeGroup::AboveMedian => "hi",
                IncomeGroup::BelowMedian => "lo",
            },
            match self.concern {
                Concern::Concerned => "concern",
                Concern::NotConcerned => "noconcern",
            },
            match self.trust {
                Trust::Trusts => "trust",
                Trust::NotTrusts => "notrust",
            },
        )
    }

    pub fn parse_key(key: &str) -> Result<Segment> {
        let bad = || Error::InvalidInput(format!("malformed segment key `{key}`"));
        let parts: Vec<&str> = key.split('_').collect();
        if parts.len() != 8 || parts[2] != "age" || parts[4] != "inc" {
            return Err(bad());
        }
        let hi_lo = |s: &str| match s {
            "hi" => Ok(true),
            "lo" => Ok(false),
            _ => Err(bad()),
        };
        Ok(Segment {
            country: parts[0].parse()?,
            gender: parts[1].parse()?,
            age: if hi_lo(parts[3])? { AgeGroup::AboveMedian } else { AgeGroup::BelowMedian },
            income: if hi_lo(parts[5])? { IncomeGroup::AboveMedian } else { IncomeGroup::BelowMedian },
            concern: match parts[6] {
                "concern" => Concern::Concerned,
                "noconcern" => Concern::NotConcerned,
                _ => return Err(bad()),
            },
            trust: match parts[7] {
                "trust" => Trust::Trusts,
                "notrust" => Trust::NotTrusts,
                _ => return Err(bad()),
            },
        })
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// All 160 segments in stable order.
pub fn enumerate_segments() -> Vec<Segment> {
    let mut out = Vec::with_capacity(160);
    for country in Country::ALL {
        for gender in Gender::ALL {
            for age in AgeGroup::ALL {
                for income in IncomeGroup::ALL {
                    for concern in Concern::ALL {
                        for trust in Trust::ALL {
                            out.push(Segment { country, gender, age, income, concern, trust });
                        }
                    }
                }
            }
        }
    }
    out
}

pub const CONCERN_NEGATIVE: &str = "cannot say that you concern";
pub const TRUST_NEGATIVE: &str = "cannot say that you believe";

/// Renders the system-role persona prompt for a segment.
pub fn render_system_prompt(segment: &Segment) -> String {
    let gender = segment.gender.as_str();
    let age = median_phrase(segment.age == AgeGroup::AboveMedian);
    let income = median_phrase(segment.income == IncomeGroup::AboveMedian);
    let concern = match segment.concern {
        Concern::Concerned => "concern",
        Concern::NotConcerned => CONCERN_NEGATIVE,
    };
    let trust = match segment.trust {
        Trust::Trusts => "believe",
        Trust::NotTrusts => TRUST_NEGATIVE,
    };
    format!(
        "You are a {gender}, aged {age}, permanently resides in {country}, and your monthly income is {income}. \
         You {concern} environment protection in your daily life and {trust} that the money you pay for carbon \
         offsets are really used to offset emissions.",
        country = segment.country.display_name(),
    )
}

fn median_phrase(above: bool) -> &'static str {
    if above {
        "above median"
    } else {
        "below median"
    }
}

/// Writes the segment list as CSV: key plus one column per field.
pub fn write_segments_csv<W: Write>(segments: &[Segment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "country", "gender", "age", "income", "concern", "trust"])?;
    for s in segments {
        w.write_record([
            s.key().as_str(),
            s.country.code(),
            s.gender.as_str(),
            s.age.as_str(),
            s.income.as_str(),
            s.concern.as_str(),
            s.trust.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
