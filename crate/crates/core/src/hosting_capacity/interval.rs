use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{HcError, Result};

pub const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Number of grid intervals: 12 months x 2 day types x 24 hours.
pub const GRID_LEN: usize = 576;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub const ALL: [DayType; 2] = [DayType::Weekday, DayType::Weekend];

    pub fn code(self) -> &'static str {
        match self {
            DayType::Weekday => "WD",
            DayType::Weekend => "WE",
        }
    }

    /// Share of a month's days falling on this day type.
    pub fn share(self) -> f64 {
        match self {
            DayType::Weekday => 5.0 / 7.0,
            DayType::Weekend => 2.0 / 7.0,
        }
    }
}

impl FromStr for DayType {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wd" | "weekday" => Ok(DayType::Weekday),
            "we" | "weekend" => Ok(DayType::Weekend),
            _ => Err(HcError::InvalidArgument(format!("unknown day type `{s}`"))),
        }
    }
}

/// One cell of the month x day-type x hour grid. Months are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalIndex {
    pub month: u8,
    pub day_type: DayType,
    pub hour: u8,
}

impl IntervalIndex {
    pub fn new(month: u8, day_type: DayType, hour: u8) -> Result<Self> {
        if !(1..=12).contains(&month) || hour > 23 {
            return Err(HcError::InvalidArgument(format!(
                "interval month {month} / hour {hour} out of range"
            )));
        }
        Ok(IntervalIndex {
            month,
            day_type,
            hour,
        })
    }

    /// All 576 intervals in (month, day type, hour) order.
    pub fn all() -> impl Iterator<Item = IntervalIndex> {
        (1..=12u8).flat_map(|month| {
            DayType::ALL.into_iter().flat_map(move |day_type| {
                (0..24u8).map(move |hour| IntervalIndex {
                    month,
                    day_type,
                    hour,
                })
            })
        })
    }

    /// Dense position in [`IntervalIndex::all`] order.
    pub fn ordinal(self) -> usize {
        let d = match self.day_type {
            DayType::Weekday => 0,
            DayType::Weekend => 1,
        };
        (self.month as usize - 1) * 48 + d * 24 + self.hour as usize
    }

    pub fn from_ordinal(i: usize) -> Result<Self> {
        if i >= GRID_LEN {
            return Err(HcError::InvalidArgument(format!("interval ordinal {i} out of range")));
        }
        let day_type = if (i % 48) < 24 {
            DayType::Weekday
        } else {
            DayType::Weekend
        };
        Ok(IntervalIndex {
            month: (i / 48) as u8 + 1,
            day_type,
            hour: (i % 24) as u8,
        })
    }

    /// Hours per year this interval stands for.
    pub fn weight_hours(self) -> f64 {
        self.day_type.share() * DAYS_IN_MONTH[self.month as usize - 1] as f64
    }
}

impl fmt::Display for IntervalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.month, self.day_type.code(), self.hour)
    }
}

impl FromStr for IntervalIndex {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HcError::InvalidArgument(format!("interval `{s}` is not of the form M/WD/H"));
        let mut parts = s.split('/');
        let (Some(m), Some(d), Some(h), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let month = m.trim().parse().map_err(|_| bad())?;
        let hour = h.trim().parse().map_err(|_| bad())?;
        IntervalIndex::new(month, d.trim().parse()?, hour)
    }
}

/// Demand statistic used for single-interval studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    P10,
    P90,
    AvgWeekday,
    AvgWeekend,
}

impl Stat {
    pub const ALL: [Stat; 4] = [Stat::P10, Stat::P90, Stat::AvgWeekday, Stat::AvgWeekend];

    pub fn code(self) -> &'static str {
        match self {
            Stat::P10 => "P10",
            Stat::P90 => "P90",
            Stat::AvgWeekday => "AVGWD",
            Stat::AvgWeekend => "AVGWE",
        }
    }
}

/// Either a grid cell or an hour of a statistical day profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntervalKey {
    Grid(IntervalIndex),
    Stat { stat: Stat, hour: u8 },
}

impl IntervalKey {
    pub fn grid() -> impl Iterator<Item = IntervalKey> {
        IntervalIndex::all().map(IntervalKey::Grid)
    }

    pub fn stat(stat: Stat, hour: u8) -> IntervalKey {
        IntervalKey::Stat { stat, hour }
    }

    pub fn hour(self) -> u8 {
        match self {
            IntervalKey::Grid(i) => i.hour,
            IntervalKey::Stat { hour, .. } => hour,
        }
    }

    pub fn as_grid(self) -> Option<IntervalIndex> {
        match self {
            IntervalKey::Grid(i) => Some(i),
            IntervalKey::Stat { .. } => None,
        }
    }
}

impl fmt::Display for IntervalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalKey::Grid(i) => i.fmt(f),
            IntervalKey::Stat { stat, hour } => write!(f, "{}/{}", stat.code(), hour),
        }
    }
}

impl FromStr for IntervalKey {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some((code, hour)) = s.split_once('/') {
            if let Some(stat) = Stat::ALL.into_iter().find(|st| st.code() == code) {
                let hour: u8 = hour
                    .parse()
                    .ok()
                    .filter(|h| *h < 24)
                    .ok_or_else(|| HcError::InvalidArgument(format!("bad hour in `{s}`")))?;
                return Ok(IntervalKey::Stat { stat, hour });
            }
        }
        s.parse().map(IntervalKey::Grid)
    }
}

impl Serialize for IntervalKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IntervalKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    #[test]
    fn grid_has_576_distinct_cells_in_ordinal_order() {
        let all: Vec<_> = IntervalIndex::all().collect();
        assert_eq!(all.len(), GRID_LEN);
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), GRID_LEN);
        for (i, k) in all.iter().enumerate() {
            assert_eq!(k.ordinal(), i);
            assert_eq!(IntervalIndex::from_ordinal(i).unwrap(), *k);
        }
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn weights_cover_a_year() {
        let total: f64 = IntervalIndex::all().map(|i| i.weight_hours()).sum();
        assert!((total - 8760.0).abs() < 1e-9);
    }

    #[test]
    fn labels_round_trip() {
        for k in IntervalKey::grid().chain([IntervalKey::stat(Stat::P10, 13), IntervalKey::stat(Stat::AvgWeekend, 0)]) {
            let s = k.to_string();
            assert_eq!(s.parse::<IntervalKey>().unwrap(), k, "{s}");
        }
        assert_eq!("7/WE/18".parse::<IntervalIndex>().unwrap().to_string(), "7/WE/18");
        assert!("13/WD/1".parse::<IntervalIndex>().is_err());
        assert!("1/XX/1".parse::<IntervalIndex>().is_err());
        assert!("1/WD".parse::<IntervalIndex>().is_err());
        assert!("P10/24".parse::<IntervalKey>().is_err());
        let json = serde_json::to_string(&IntervalKey::stat(Stat::P90, 17)).unwrap();
        assert_eq!(json, "\"P90/17\"");
    }
}
