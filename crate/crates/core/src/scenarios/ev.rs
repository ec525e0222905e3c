use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HcError, Result};
use crate::hosting_capacity::DayType;

const BUILTIN_TEMPLATES: &str = include_str!("../../data/ev_templates.json");

/// Active chargers per 1000 EVs at the 45 mi/day reference point.
pub const REFERENCE_MIX: [u32; 6] = [331, 132, 30, 79, 82, 2];
pub const REFERENCE_MILES: f64 = 45.0;

/// Monthly average daily miles per vehicle, January first.
pub const DEFAULT_DAILY_MILES: [f64; 12] = [24.0, 24.0, 26.0, 26.0, 26.0, 28.0, 28.0, 28.0, 26.0, 26.0, 26.0, 24.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargerClass {
    HomeL1,
    HomeL2,
    WorkL1,
    WorkL2,
    PublicL2,
    Dcfc,
}

impl ChargerClass {
    pub const ALL: [ChargerClass; 6] = [
        ChargerClass::HomeL1,
        ChargerClass::HomeL2,
        ChargerClass::WorkL1,
        ChargerClass::WorkL2,
        ChargerClass::PublicL2,
        ChargerClass::Dcfc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ChargerClass::HomeL1 => "home_l1",
            ChargerClass::HomeL2 => "home_l2",
            ChargerClass::WorkL1 => "work_l1",
            ChargerClass::WorkL2 => "work_l2",
            ChargerClass::PublicL2 => "public_l2",
            ChargerClass::Dcfc => "dcfc",
        }
    }

    fn is_home(self) -> bool {
        matches!(self, ChargerClass::HomeL1 | ChargerClass::HomeL2)
    }
}

impl fmt::Display for ChargerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargingStrategy {
    Immediate,
    /// Evening home sessions wait until 23:00.
    Delayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerPower {
    pub l1: f64,
    pub l2: f64,
    pub dcfc: f64,
}

impl Default for ChargerPower {
    fn default() -> Self {
        ChargerPower {
            l1: 1.4,
            l2: 6.2,
            dcfc: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvFleetSpec {
    pub ev_count: u32,
    pub daily_miles_by_month: [f64; 12],
    pub pct_bev: f64,
    pub pct_sedan: f64,
    pub charger_power: ChargerPower,
    pub home_charging_access: f64,
    /// Resplits home chargers between L1 and L2; `None` keeps the reference split.
    pub home_l1_share: Option<f64>,
    /// Resplits workplace chargers; `None` keeps the reference split.
    pub work_l1_share: Option<f64>,
    pub strategy: ChargingStrategy,
    pub kwh_per_mile: f64,
}

impl Default for EvFleetSpec {
    fn default() -> Self {
        EvFleetSpec {
            ev_count: 0,
            daily_miles_by_month: DEFAULT_DAILY_MILES,
            pct_bev: 0.5,
            pct_sedan: 0.8,
            charger_power: ChargerPower::default(),
            home_charging_access: 1.0,
            home_l1_share: None,
            work_l1_share: None,
            strategy: ChargingStrategy::Immediate,
            kwh_per_mile: 0.30,
        }
    }
}

impl EvFleetSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("pct_bev", Some(self.pct_bev)),
            ("pct_sedan", Some(self.pct_sedan)),
            ("home_charging_access", Some(self.home_charging_access)),
            ("home_l1_share", self.home_l1_share),
            ("work_l1_share", self.work_l1_share),
        ];
        for (name, v) in fractions {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(HcError::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
                }
            }
        }
        if self.daily_miles_by_month.iter().any(|m| !(*m >= 0.0)) || !(self.kwh_per_mile > 0.0) {
            return Err(HcError::InvalidArgument("miles and kWh/mi must be non-negative".into()));
        }
        Ok(())
    }

    pub fn mean_daily_miles(&self) -> f64 {
        self.daily_miles_by_month.iter().sum::<f64>() / 12.0
    }

    /// Daily charging energy in `month` (1-based), kWh.
    pub fn daily_energy_kwh(&self, month: u8) -> f64 {
        self.ev_count as f64 * self.daily_miles_by_month[month as usize - 1] * self.kwh_per_mile
    }

    pub fn power(&self, level: ChargerLevel) -> f64 {
        match level {
            ChargerLevel::L1 => self.charger_power.l1,
            ChargerLevel::L2 => self.charger_power.l2,
            ChargerLevel::Dcfc => self.charger_power.dcfc,
        }
    }
}

/// Unrounded charger counts per class.
fn mix_weights(fleet: &EvFleetSpec) -> BTreeMap<ChargerClass, f64> {
    let scale = fleet.ev_count as f64 / 1000.0 * fleet.mean_daily_miles() / REFERENCE_MILES;
    let mut w: BTreeMap<ChargerClass, f64> = ChargerClass::ALL
        .iter()
        .zip(REFERENCE_MIX)
        .map(|(&c, n)| (c, n as f64 * scale))
        .collect();
    let resplit = |w: &mut BTreeMap<ChargerClass, f64>, l1: ChargerClass, l2: ChargerClass, share: Option<f64>| {
        if let Some(s) = share {
            let total = w[&l1] + w[&l2];
            w.insert(l1, total * s);
            w.insert(l2, total * (1.0 - s));
        }
    };
    resplit(&mut w, ChargerClass::HomeL1, ChargerClass::HomeL2, fleet.home_l1_share);
    resplit(&mut w, ChargerClass::WorkL1, ChargerClass::WorkL2, fleet.work_l1_share);
    let mut deficit = 0.0;
    for c in [ChargerClass::HomeL1, ChargerClass::HomeL2] {
        let full = w[&c];
        let kept = full * fleet.home_charging_access;
        deficit += full - kept;
        w.insert(c, kept);
    }
    *w.get_mut(&ChargerClass::PublicL2).unwrap() += deficit;
    w
}

/// Active chargers per class, rounded half up. The 1000 EV / 45 mi point
/// reproduces [`REFERENCE_MIX`].
pub fn ev_charger_mix(fleet: &EvFleetSpec) -> BTreeMap<ChargerClass, u32> {
    mix_weights(fleet)
        .into_iter()
        .map(|(c, w)| (c, (w + 0.5 + 1e-9).floor() as u32))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargerLevel {
    L1,
    L2,
    Dcfc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargerTemplate {
    pub level: ChargerLevel,
    pub session_kwh: f64,
    pub weekday_activity: f64,
    pub weekend_activity: f64,
    /// Share of sessions starting in each hour.
    pub weekday_arrivals: Vec<f64>,
    pub weekend_arrivals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvTemplates {
    pub efficiency_kwh_per_mile: f64,
    pub classes: BTreeMap<String, ChargerTemplate>,
}

impl EvTemplates {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("bundled ev templates")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: EvTemplates = serde_json::from_str(text)?;
        for (name, c) in &t.classes {
            if c.weekday_arrivals.len() != 24 || c.weekend_arrivals.len() != 24 {
                return Err(HcError::InvalidArgument(format!(
                    "template `{name}` needs 24 arrival shares per day type"
                )));
            }
            if !(c.session_kwh > 0.0) {
                return Err(HcError::InvalidArgument(format!("template `{name}` has no session energy")));
            }
        }
        Ok(t)
    }

    pub fn get(&self, class: ChargerClass) -> Result<&ChargerTemplate> {
        self.classes
            .get(class.label())
            .ok_or_else(|| HcError::MissingTemplate(class.label().to_string()))
    }
}

/// Fleet charging demand in kW for each hour of a `month` / `day_type` day.
/// The shape comes from the charger mix and templates; its integral is
/// `ev_count x miles(month) x kwh_per_mile`.
pub fn ev_profile(
    fleet: &EvFleetSpec,
    templates: &EvTemplates,
    month: u8,
    day_type: DayType,
) -> Result<[f64; 24]> {
    if !(1..=12).contains(&month) {
        return Err(HcError::InvalidArgument(format!("month {month} out of range")));
    }
    let mut kw = [0.0; 24];
    let energy = fleet.daily_energy_kwh(month);
    if energy <= 0.0 {
        return Ok(kw);
    }
    for (class, n) in mix_weights(fleet) {
        let t = templates.get(class)?;
        if n <= 0.0 {
            continue;
        }
        let (arrivals, activity) = match day_type {
            DayType::Weekday => (&t.weekday_arrivals, t.weekday_activity),
            DayType::Weekend => (&t.weekend_arrivals, t.weekend_activity),
        };
        let total: f64 = arrivals.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let power = fleet.power(t.level);
        let duration = t.session_kwh / power;
        for (a, share) in arrivals.iter().enumerate() {
            let mut start = a as f64;
            if fleet.strategy == ChargingStrategy::Delayed && class.is_home() && (16..23).contains(&a) {
                start = 23.0;
            }
            let sessions = n * activity * share / total;
            spread_session(&mut kw, start, duration, sessions * power);
        }
    }
    let raw: f64 = kw.iter().sum();
    if raw > 0.0 {
        let k = energy / raw;
        kw.iter_mut().for_each(|v| *v *= k);
    }
    Ok(kw)
}

/// Adds `kw` over `[start, start + hours)` on a 24 h ring.
fn spread_session(kw: &mut [f64; 24], start: f64, hours: f64, power: f64) {
    let mut t = start;
    let end = start + hours;
    while t < end - 1e-12 {
        let slot_end = t.floor() + 1.0;
        let take = slot_end.min(end) - t;
        kw[(t.floor() as usize) % 24] += power * take;
        t += take;
    }
}
