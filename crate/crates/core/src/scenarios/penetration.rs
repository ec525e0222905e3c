use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HcError, Result};
use crate::hosting_capacity::{DayType, IntervalIndex, IntervalKey, LoadModel, Stat, GRID_LEN};
use crate::network::Network;
use crate::power_flow::NodeLoads;
use crate::scenarios::ev::{ev_profile, EvFleetSpec, EvTemplates};
use crate::scenarios::library::ProfileLibrary;
use crate::scenarios::percentiles::{demand_percentiles, history_from_grid};
use crate::scenarios::pv::{PvRatings, PvSiteClass};

/// The PV and EV levels of the 3 x 3 study matrix.
pub const STANDARD_LEVELS: [f64; 3] = [0.0, 0.20, 0.40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetrationScenario {
    #[serde(default)]
    pub id: String,
    pub pv_level: f64,
    pub ev_level: f64,
    #[serde(default)]
    pub placement_seed: u64,
}

impl PenetrationScenario {
    pub fn new(pv_level: f64, ev_level: f64, placement_seed: u64) -> Self {
        PenetrationScenario {
            id: Self::default_id(pv_level, ev_level),
            pv_level,
            ev_level,
            placement_seed,
        }
    }

    /// `pv20-ev40` style id.
    pub fn default_id(pv: f64, ev: f64) -> String {
        format!("pv{:02}-ev{:02}", (pv * 100.0).round() as u32, (ev * 100.0).round() as u32)
    }

    /// All nine PV x EV combinations, PV-major.
    pub fn standard(placement_seed: u64) -> Vec<Self> {
        STANDARD_LEVELS
            .iter()
            .flat_map(|&pv| STANDARD_LEVELS.iter().map(move |&ev| Self::new(pv, ev, placement_seed)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pv_level", self.pv_level), ("ev_level", self.ev_level)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(HcError::InvalidArgument(format!(
                    "scenario `{}`: {name} = {v} outside [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }

    fn id_or_default(&self) -> String {
        if self.id.is_empty() {
            Self::default_id(self.pv_level, self.ev_level)
        } else {
            self.id.clone()
        }
    }
}

/// Shape libraries and fleet assumptions shared by every scenario.
#[derive(Debug, Clone)]
pub struct ScenarioLibraries {
    pub load: ProfileLibrary,
    pub pv: ProfileLibrary,
    pub ev_templates: EvTemplates,
    /// Fleet assumptions; `ev_count` is overwritten per scenario.
    pub fleet: EvFleetSpec,
    pub pv_ratings: PvRatings,
}

impl Default for ScenarioLibraries {
    fn default() -> Self {
        ScenarioLibraries {
            load: ProfileLibrary::builtin_load(),
            pv: ProfileLibrary::builtin_pv(),
            ev_templates: EvTemplates::builtin(),
            fleet: EvFleetSpec::default(),
            pv_ratings: PvRatings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvSite {
    pub node_id: String,
    pub class: PvSiteClass,
    pub systems: u32,
}

/// Per-interval (kW, kvar) of one node.
#[derive(Debug, Clone)]
struct NodeSeries {
    node: usize,
    grid: Vec<[f64; 2]>,
    /// Stat rows in [`Stat::ALL`] order, 24 hours each.
    stats: Vec<[f64; 2]>,
}

/// Net node demand of one penetration scenario at any interval.
#[derive(Debug, Clone)]
pub struct ScenarioLoads {
    scenario: PenetrationScenario,
    id: String,
    node_count: usize,
    series: Vec<NodeSeries>,
    ev_count: u32,
    ev_grid_kw: Vec<f64>,
    pv_sites: Vec<PvSite>,
}

fn stat_row(stat: Stat) -> usize {
    Stat::ALL.iter().position(|s| *s == stat).expect("listed")
}

/// Expands a scenario onto the network: base load shapes, EVs in proportion
/// to customers and PV on a seeded sample of customers.
pub fn apply_penetration(
    network: &Network,
    scenario: &PenetrationScenario,
    libs: &ScenarioLibraries,
) -> Result<ScenarioLoads> {
    scenario.validate()?;
    libs.fleet.validate()?;
    let n = network.nodes().len();
    let mut p = vec![vec![0.0; GRID_LEN]; n];
    let mut q = vec![vec![0.0; GRID_LEN]; n];
    let mut touched = vec![false; n];

    for l in network.loads() {
        let node = network.node_idx(&l.node_id).expect("validated");
        let shape = libs.load.resolve(&l.profile_id)?;
        let qp = l.q_per_p();
        for i in 0..GRID_LEN {
            let kw = l.peak_kw * shape[i];
            p[node][i] += kw;
            q[node][i] += kw * qp;
        }
        touched[node] = true;
    }

    let customers: u64 = network.loads().iter().map(|l| l.customer_count as u64).sum();

    // EV demand, unity power factor, split by customer share
    let ev_count = (scenario.ev_level * customers as f64).round() as u32;
    let mut ev_grid_kw = vec![0.0; GRID_LEN];
    if ev_count > 0 {
        let fleet = EvFleetSpec {
            ev_count,
            ..libs.fleet.clone()
        };
        for month in 1..=12u8 {
            for dt in DayType::ALL {
                let day = ev_profile(&fleet, &libs.ev_templates, month, dt)?;
                for (h, kw) in day.iter().enumerate() {
                    ev_grid_kw[IntervalIndex::new(month, dt, h as u8)?.ordinal()] = *kw;
                }
            }
        }
        for l in network.loads() {
            let node = network.node_idx(&l.node_id).expect("validated");
            let share = l.customer_count as f64 / customers as f64;
            for i in 0..GRID_LEN {
                p[node][i] += ev_grid_kw[i] * share;
            }
            touched[node] = true;
        }
    }

    // PV on a seeded sample of customer slots
    let pv_count = (scenario.pv_level * customers as f64).round() as usize;
    let mut pv_sites: Vec<PvSite> = Vec::new();
    if pv_count > 0 {
        let mut slots: Vec<usize> = network
            .loads()
            .iter()
            .enumerate()
            .flat_map(|(li, l)| std::iter::repeat_n(li, l.customer_count as usize))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.placement_seed);
        slots.shuffle(&mut rng);
        let mut per_load = vec![0u32; network.loads().len()];
        for &li in slots.iter().take(pv_count) {
            per_load[li] += 1;
        }
        let res = pv_kw_grid(libs, PvSiteClass::Residential)?;
        let com = pv_kw_grid(libs, PvSiteClass::Commercial)?;
        for (li, &systems) in per_load.iter().enumerate() {
            if systems == 0 {
                continue;
            }
            let l = &network.loads()[li];
            let node = network.node_idx(&l.node_id).expect("validated");
            let class = if l.profile_id.starts_with("commercial") && network.nodes()[node].phases.len() == 3 {
                PvSiteClass::Commercial
            } else {
                PvSiteClass::Residential
            };
            let shape = if class == PvSiteClass::Commercial { &com } else { &res };
            for i in 0..GRID_LEN {
                p[node][i] -= systems as f64 * shape[i];
            }
            touched[node] = true;
            pv_sites.push(PvSite {
                node_id: l.node_id.clone(),
                class,
                systems,
            });
        }
    }

    let series = (0..n)
        .into_par_iter()
        .filter(|&node| touched[node])
        .map(|node| {
            let grid: Vec<[f64; 2]> = (0..GRID_LEN).map(|i| [p[node][i], q[node][i]]).collect();
            let hp = demand_percentiles(&history_from_grid(|i| grid[i.ordinal()][0]))?;
            let hq = demand_percentiles(&history_from_grid(|i| grid[i.ordinal()][1]))?;
            let mut stats = vec![[0.0; 2]; Stat::ALL.len() * 24];
            for stat in Stat::ALL {
                let (a, b) = match stat {
                    Stat::P10 => (&hp.p10, &hq.p10),
                    Stat::P90 => (&hp.p90, &hq.p90),
                    Stat::AvgWeekday => (&hp.mean_weekday, &hq.mean_weekday),
                    Stat::AvgWeekend => (&hp.mean_weekend, &hq.mean_weekend),
                };
                for h in 0..24 {
                    stats[stat_row(stat) * 24 + h] = [a[h], b[h]];
                }
            }
            Ok(NodeSeries { node, grid, stats })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ScenarioLoads {
        id: scenario.id_or_default(),
        scenario: scenario.clone(),
        node_count: n,
        series,
        ev_count,
        ev_grid_kw,
        pv_sites,
    })
}

/// kW per system over the grid.
fn pv_kw_grid(libs: &ScenarioLibraries, class: PvSiteClass) -> Result<Vec<f64>> {
    let rating = libs.pv_ratings.rating(class);
    Ok(libs.pv.get(class.label())?.iter().map(|v| v * rating).collect())
}

impl ScenarioLoads {
    pub fn scenario(&self) -> &PenetrationScenario {
        &self.scenario
    }

    pub fn ev_count(&self) -> u32 {
        self.ev_count
    }

    pub fn pv_sites(&self) -> &[PvSite] {
        &self.pv_sites
    }

    pub fn pv_systems(&self) -> u32 {
        self.pv_sites.iter().map(|s| s.systems).sum()
    }

    /// Fleet charging demand summed over nodes, kW.
    pub fn ev_kw(&self, interval: IntervalIndex) -> f64 {
        self.ev_grid_kw[interval.ordinal()]
    }

    /// Net (kW, kvar) of one node at a grid interval.
    pub fn node_value(&self, node: usize, interval: IntervalIndex) -> Complex64 {
        self.series
            .iter()
            .find(|s| s.node == node)
            .map(|s| {
                let [p, q] = s.grid[interval.ordinal()];
                Complex64::new(p, q)
            })
            .unwrap_or_default()
    }
}

impl LoadModel for ScenarioLoads {
    fn scenario_id(&self) -> &str {
        &self.id
    }

    fn node_loads(&self, key: IntervalKey) -> Result<NodeLoads> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.node_count];
        for s in &self.series {
            let [p, q] = match key {
                IntervalKey::Grid(i) => s.grid[i.ordinal()],
                IntervalKey::Stat { stat, hour } => s.stats[stat_row(stat) * 24 + hour as usize],
            };
            out[s.node] = Complex64::new(p, q);
        }
        Ok(NodeLoads::from_vec(out))
    }
}
