use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HcError, Result};
use crate::hosting_capacity::{DayType, IntervalIndex};
use crate::scenarios::library::ProfileLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvSiteClass {
    Residential,
    Commercial,
}

impl PvSiteClass {
    pub fn label(self) -> &'static str {
        match self {
            PvSiteClass::Residential => "residential",
            PvSiteClass::Commercial => "commercial",
        }
    }
}

impl fmt::Display for PvSiteClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PvSiteClass {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residential" => Ok(PvSiteClass::Residential),
            "commercial" => Ok(PvSiteClass::Commercial),
            _ => Err(HcError::InvalidArgument(format!("unknown PV site class `{s}`"))),
        }
    }
}

/// January peak output per system, kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvRatings {
    pub residential_kw: f64,
    pub commercial_kw: f64,
}

impl Default for PvRatings {
    fn default() -> Self {
        PvRatings {
            residential_kw: 2.5,
            commercial_kw: 30.0,
        }
    }
}

impl PvRatings {
    pub fn rating(&self, class: PvSiteClass) -> f64 {
        match class {
            PvSiteClass::Residential => self.residential_kw,
            PvSiteClass::Commercial => self.commercial_kw,
        }
    }
}

/// Hourly kW of one system of `class` on a weekday of `month`.
pub fn pv_profile(
    library: &ProfileLibrary,
    ratings: &PvRatings,
    class: PvSiteClass,
    month: u8,
) -> Result<[f64; 24]> {
    if !(1..=12).contains(&month) {
        return Err(HcError::InvalidArgument(format!("month {month} missing from PV library")));
    }
    let shape = library.get(class.label())?;
    let rating = ratings.rating(class);
    let mut out = [0.0; 24];
    for (h, v) in out.iter_mut().enumerate() {
        let i = IntervalIndex::new(month, DayType::Weekday, h as u8)?;
        *v = shape[i.ordinal()] * rating;
    }
    Ok(out)
}
