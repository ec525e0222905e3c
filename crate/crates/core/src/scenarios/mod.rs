//! Interval load, PV and EV profiles and penetration scenarios.

pub mod ev;
pub mod library;
pub mod penetration;
pub mod percentiles;
pub mod pv;

pub use ev::{
    ev_charger_mix, ev_profile, ChargerClass, ChargerLevel, ChargerPower, ChargingStrategy,
    EvFleetSpec, EvTemplates, DEFAULT_DAILY_MILES, REFERENCE_MIX,
};
pub use library::{ProfileKind, ProfileLibrary, Shape};
pub use penetration::{apply_penetration, PenetrationScenario, PvSite, ScenarioLibraries, ScenarioLoads, STANDARD_LEVELS};
pub use percentiles::{demand_percentiles, history_from_grid, Day, DemandPercentiles};
pub use pv::{pv_profile, PvRatings, PvSiteClass};
