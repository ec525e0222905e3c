use serde::{Deserialize, Serialize};

use crate::error::{HcError, Result};
use crate::hosting_capacity::{DayType, IntervalIndex, DAYS_IN_MONTH};

pub const DAYS_PER_YEAR: usize = 365;

/// One calendar day of hourly demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Day {
    pub month: u8,
    pub day_type: DayType,
    pub hours: [f64; 24],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPercentiles {
    pub p10: [f64; 24],
    pub p90: [f64; 24],
    pub mean: [f64; 24],
    pub mean_weekday: [f64; 24],
    pub mean_weekend: [f64; 24],
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Per-hour p10/p90 across days plus mean day profiles. Needs a year of days.
pub fn demand_percentiles(history: &[Day]) -> Result<DemandPercentiles> {
    if history.len() < DAYS_PER_YEAR {
        return Err(HcError::InsufficientHistory {
            got: history.len(),
            need: DAYS_PER_YEAR,
        });
    }
    let mut out = DemandPercentiles {
        p10: [0.0; 24],
        p90: [0.0; 24],
        mean: [0.0; 24],
        mean_weekday: [0.0; 24],
        mean_weekend: [0.0; 24],
    };
    let mut column = Vec::with_capacity(history.len());
    for h in 0..24 {
        column.clear();
        column.extend(history.iter().map(|d| d.hours[h]));
        column.sort_by(f64::total_cmp);
        out.p10[h] = nearest_rank(&column, 0.10);
        out.p90[h] = nearest_rank(&column, 0.90);
        out.mean[h] = column.iter().sum::<f64>() / column.len() as f64;
        for (dt, slot) in [
            (DayType::Weekday, &mut out.mean_weekday),
            (DayType::Weekend, &mut out.mean_weekend),
        ] {
            let (sum, n) = history
                .iter()
                .filter(|d| d.day_type == dt)
                .fold((0.0, 0usize), |(s, n), d| (s + d.hours[h], n + 1));
            slot[h] = if n == 0 { 0.0 } else { sum / n as f64 };
        }
    }
    Ok(out)
}

/// (month, day type) of each day of a 365-day year starting on a Monday.
pub fn calendar() -> Vec<(u8, DayType)> {
    let mut days = Vec::with_capacity(DAYS_PER_YEAR);
    for (m, &n) in DAYS_IN_MONTH.iter().enumerate() {
        for _ in 0..n {
            let dt = if days.len() % 7 < 5 {
                DayType::Weekday
            } else {
                DayType::Weekend
            };
            days.push((m as u8 + 1, dt));
        }
    }
    days
}

/// Expands a grid profile into a calendar year of days.
pub fn history_from_grid(grid: impl Fn(IntervalIndex) -> f64) -> Vec<Day> {
    calendar()
        .into_iter()
        .map(|(month, day_type)| {
            let mut hours = [0.0; 24];
            for (h, v) in hours.iter_mut().enumerate() {
                *v = grid(IntervalIndex {
                    month,
                    day_type,
                    hour: h as u8,
                });
            }
            Day {
                month,
                day_type,
                hours,
            }
        })
        .collect()
}
