//! Seeded synthetic radial feeders.
//!
//! A feeder is a three-phase mainline chain with one- to three-phase laterals
//! hanging off it. The mainline is cut into switching blocks by SCADA
//! boundary switches; a feeder pair is joined end to end by a normally-open tie.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Impedance, LoadPoint, Network, NetworkParts, Node, Phase, PhaseSet, Section, SourceBus, Switch,
};
use crate::error::{HcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductorSpec {
    pub r_ohm_per_mile: f64,
    pub x_ohm_per_mile: f64,
    pub rating_amps: f64,
}

impl ConductorSpec {
    fn impedance(&self, miles: f64) -> Impedance {
        Impedance {
            r: self.r_ohm_per_mile * miles,
            x: self.x_ohm_per_mile * miles,
        }
    }
}

fn mainline_conductor() -> ConductorSpec {
    ConductorSpec {
        r_ohm_per_mile: 0.12,
        x_ohm_per_mile: 0.37,
        rating_amps: 800.0,
    }
}

fn three_phase_lateral_conductor() -> ConductorSpec {
    ConductorSpec {
        r_ohm_per_mile: 0.31,
        x_ohm_per_mile: 0.5,
        rating_amps: 340.0,
    }
}

fn lateral_conductor() -> ConductorSpec {
    ConductorSpec {
        r_ohm_per_mile: 0.59,
        x_ohm_per_mile: 0.6,
        rating_amps: 230.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeederSpec {
    pub feeder_id: String,
    pub section_count: usize,
    pub peak_mw: f64,
    pub min_mw: f64,
    pub conductor_miles: f64,
    pub customer_count: u32,
    /// Target share of three-phase sections (approximate).
    pub three_phase_fraction: f64,
    pub seed: u64,
    pub nominal_kv_ll: f64,
    pub voltage_setpoint: f64,
    pub switching_blocks: usize,
    /// Share of sections on the mainline.
    pub mainline_section_share: f64,
    /// Share of conductor miles on the mainline.
    pub mainline_length_share: f64,
    /// Share of peak demand served as commercial load on three-phase nodes.
    pub commercial_share: f64,
    pub mainline: ConductorSpec,
    pub lateral_three_phase: ConductorSpec,
    pub lateral: ConductorSpec,
}

impl Default for FeederSpec {
    fn default() -> Self {
        FeederSpec {
            feeder_id: "F".into(),
            section_count: 1,
            peak_mw: 0.0,
            min_mw: 0.0,
            conductor_miles: 1.0,
            customer_count: 0,
            three_phase_fraction: 0.35,
            seed: 0,
            nominal_kv_ll: 12.47,
            voltage_setpoint: 1.03,
            switching_blocks: 3,
            mainline_section_share: 0.1,
            mainline_length_share: 0.1,
            commercial_share: 0.25,
            mainline: mainline_conductor(),
            lateral_three_phase: three_phase_lateral_conductor(),
            lateral: lateral_conductor(),
        }
    }
}

impl FeederSpec {
    /// 1376 sections, 11.3/5.6 MW peak/min, 62.2 conductor miles, 1306 customers.
    pub fn reference_f1() -> Self {
        FeederSpec {
            feeder_id: "F1".into(),
            section_count: 1376,
            peak_mw: 11.3,
            min_mw: 5.6,
            conductor_miles: 62.2,
            customer_count: 1306,
            seed: 1,
            ..FeederSpec::default()
        }
    }

    /// 825 sections, 9.4/1.2 MW peak/min, 48.7 conductor miles, 1382 customers.
    pub fn reference_f2() -> Self {
        FeederSpec {
            feeder_id: "F2".into(),
            section_count: 825,
            peak_mw: 9.4,
            min_mw: 1.2,
            conductor_miles: 48.7,
            customer_count: 1382,
            seed: 2,
            ..FeederSpec::default()
        }
    }

    pub fn min_ratio(&self) -> f64 {
        if self.peak_mw > 0.0 {
            self.min_mw / self.peak_mw
        } else {
            1.0
        }
    }

    fn check(&self) -> Result<()> {
        let fail = |m: String| Err(HcError::InfeasibleSpec(m));
        if self.section_count == 0 {
            return fail(if self.peak_mw > 0.0 {
                "zero sections cannot carry nonzero load".into()
            } else {
                "a feeder needs at least its head section".into()
            });
        }
        if !(self.peak_mw >= 0.0) || !(self.min_mw >= 0.0) || self.min_mw > self.peak_mw {
            return fail(format!(
                "need 0 <= min ({}) <= peak ({})",
                self.min_mw, self.peak_mw
            ));
        }
        if !(self.conductor_miles >= 0.0) {
            return fail("conductor miles must be non-negative".into());
        }
        if !(self.nominal_kv_ll > 0.0) {
            return fail("nominal voltage must be positive".into());
        }
        for (name, v) in [
            ("three_phase_fraction", self.three_phase_fraction),
            ("mainline_section_share", self.mainline_section_share),
            ("mainline_length_share", self.mainline_length_share),
            ("commercial_share", self.commercial_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TieSpec {
    pub length_miles: f64,
    pub conductor: ConductorSpec,
}

impl Default for TieSpec {
    fn default() -> Self {
        TieSpec {
            length_miles: 0.5,
            conductor: mainline_conductor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederPairSpec {
    pub feeders: [FeederSpec; 2],
    #[serde(default)]
    pub tie: TieSpec,
}

impl FeederPairSpec {
    pub fn reference_pair() -> Self {
        FeederPairSpec {
            feeders: [FeederSpec::reference_f1(), FeederSpec::reference_f2()],
            tie: TieSpec::default(),
        }
    }
}

struct Built {
    parts: NetworkParts,
    last_mainline_node: String,
}

// single-phase taps rotate through A, B, C to keep the mainline roughly balanced
fn pick_lateral_phases(rng: &mut ChaCha8Rng, three_phase_prob: f64, turn: &mut usize) -> PhaseSet {
    if rng.gen::<f64>() < three_phase_prob {
        return PhaseSet::ABC;
    }
    let first = Phase::ALL[*turn % 3];
    *turn += 1;
    if rng.gen::<f64>() < 0.15 {
        let second = Phase::ALL[(first.index() + 1) % 3];
        [first, second].into_iter().collect()
    } else {
        PhaseSet::single(first)
    }
}

/// Largest-remainder integer split of `total` proportionally to `weights`.
fn apportion(total: u32, weights: &[f64]) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u32> = exact.iter().map(|e| e.floor() as u32).collect();
    let mut left = total - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn build_feeder(spec: &FeederSpec) -> Result<Built> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fid = &spec.feeder_id;
    let n = spec.section_count;
    let mainline = ((n as f64 * spec.mainline_section_share).round() as usize).clamp(1, n);
    let laterals = n - mainline;

    // node 0 is the source; node i (i >= 1) is fed by section i
    let mut parent = vec![usize::MAX];
    let mut phases = vec![PhaseSet::ABC];
    for i in 1..=mainline {
        parent.push(i - 1);
        phases.push(PhaseSet::ABC);
    }
    let target_three = spec.three_phase_fraction * n as f64 - mainline as f64;
    let three_phase_prob = if laterals > 0 {
        (target_three / laterals as f64).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut lateral_nodes: Vec<usize> = Vec::with_capacity(laterals);
    let mut turn = 0usize;
    for _ in 0..laterals {
        let idx = parent.len();
        let start_new = lateral_nodes.is_empty() || rng.gen::<f64>() < 0.08;
        let (p, ph) = if start_new {
            let p = rng.gen_range(1..=mainline);
            (p, pick_lateral_phases(&mut rng, three_phase_prob, &mut turn))
        } else {
            let recent = lateral_nodes.len().min(6);
            let p = lateral_nodes[lateral_nodes.len() - 1 - rng.gen_range(0..recent)];
            let mut ph = phases[p];
            if ph.len() > 1 && rng.gen::<f64>() < 0.1 {
                let keep: Vec<Phase> = ph.iter().collect();
                ph = PhaseSet::single(keep[turn % keep.len()]);
                turn += 1;
            }
            (p, ph)
        };
        parent.push(p);
        phases.push(ph);
        lateral_nodes.push(idx);
    }

    // lengths, normalized so the totals are exact
    let main_miles = if laterals == 0 {
        spec.conductor_miles
    } else {
        spec.conductor_miles * spec.mainline_length_share
    };
    let lat_miles = spec.conductor_miles - main_miles;
    let mut length = vec![0.0; n + 1];
    let main_w: Vec<f64> = (0..mainline).map(|_| rng.gen_range(0.6..1.4)).collect();
    let lat_w: Vec<f64> = (0..laterals).map(|_| rng.gen_range(0.3..1.7)).collect();
    let main_sum: f64 = main_w.iter().sum();
    let lat_sum: f64 = lat_w.iter().sum();
    for i in 0..mainline {
        length[i + 1] = main_miles * main_w[i] / main_sum;
    }
    for j in 0..laterals {
        length[mainline + 1 + j] = lat_miles * lat_w[j] / lat_sum;
    }

    let mut distance = vec![0.0; n + 1];
    for i in 1..=n {
        distance[i] = distance[parent[i]] + length[i];
    }

    let v_ln = spec.nominal_kv_ll * 1000.0 / 3f64.sqrt();
    let node_id = |i: usize| {
        if i == 0 {
            format!("{fid}-src")
        } else {
            format!("{fid}-n{i}")
        }
    };
    let nodes: Vec<Node> = (0..=n)
        .map(|i| Node {
            id: node_id(i),
            phases: phases[i],
            distance_from_source: distance[i],
            nominal_voltage: v_ln,
        })
        .collect();
    let sections: Vec<Section> = (1..=n)
        .map(|i| {
            let conductor = if i <= mainline {
                &spec.mainline
            } else if phases[i].len() == 3 {
                &spec.lateral_three_phase
            } else {
                &spec.lateral
            };
            Section {
                id: format!("{fid}-s{i}"),
                from_node: node_id(parent[i]),
                to_node: node_id(i),
                phases: phases[i],
                impedance: conductor.impedance(length[i]),
                length: length[i],
                thermal_rating: conductor.rating_amps,
            }
        })
        .collect();

    let mut switches = vec![Switch {
        id: format!("{fid}-brk"),
        section_id: format!("{fid}-s1"),
        scada_controlled: true,
        normally_open: false,
        switching_block_boundary: false,
    }];
    let mut boundary_positions: Vec<usize> = (1..spec.switching_blocks)
        .map(|k| (k as f64 * mainline as f64 / spec.switching_blocks as f64).round() as usize)
        .filter(|&j| j >= 1 && j < mainline)
        .collect();
    boundary_positions.dedup();
    for (k, j) in boundary_positions.iter().enumerate() {
        switches.push(Switch {
            id: format!("{fid}-bnd{}", k + 1),
            section_id: format!("{fid}-s{}", j + 1),
            scada_controlled: true,
            normally_open: false,
            switching_block_boundary: true,
        });
    }

    let ratio = spec.min_ratio();
    let peak_kw = spec.peak_mw * 1000.0;
    let mut loads = Vec::new();
    if peak_kw > 0.0 {
        let three_phase_nodes: Vec<usize> = (1..=n).filter(|&i| phases[i].len() == 3).collect();
        let wanted_commercial = ((spec.customer_count as f64 * 0.02).round() as usize).max(1);
        let mut commercial: Vec<usize> = three_phase_nodes
            .choose_multiple(&mut rng, wanted_commercial.min(three_phase_nodes.len()))
            .copied()
            .collect();
        commercial.sort_unstable();
        let mut residential: Vec<usize> = if lateral_nodes.is_empty() {
            (1..=n).collect()
        } else {
            lateral_nodes.clone()
        };
        residential.retain(|i| commercial.binary_search(i).is_err());
        if residential.is_empty() {
            residential = commercial.clone();
            commercial.clear();
        }
        let commercial_kw = if commercial.is_empty() {
            0.0
        } else {
            peak_kw * spec.commercial_share
        };
        let residential_kw = peak_kw - commercial_kw;
        let res_customers = spec.customer_count.saturating_sub(commercial.len() as u32);

        let weights: Vec<f64> = residential.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
        let customers = apportion(res_customers, &weights);
        let share: Vec<f64> = if res_customers > 0 {
            customers.iter().map(|&c| c as f64).collect()
        } else {
            weights.clone()
        };
        let share_sum: f64 = share.iter().sum();
        for (k, &node) in residential.iter().enumerate() {
            if share[k] <= 0.0 {
                continue;
            }
            loads.push(LoadPoint {
                node_id: node_id(node),
                peak_kw: residential_kw * share[k] / share_sum,
                power_factor: 0.95,
                profile_id: format!("residential@{ratio:.4}"),
                customer_count: customers[k],
            });
        }
        let com_weights: Vec<f64> = commercial.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
        let com_sum: f64 = com_weights.iter().sum();
        let com_customers = u32::from(spec.customer_count >= commercial.len() as u32);
        for (k, &node) in commercial.iter().enumerate() {
            loads.push(LoadPoint {
                node_id: node_id(node),
                peak_kw: commercial_kw * com_weights[k] / com_sum,
                power_factor: 0.9,
                profile_id: format!("commercial@{ratio:.4}"),
                customer_count: com_customers,
            });
        }
    }

    Ok(Built {
        parts: NetworkParts {
            feeder_ids: vec![fid.clone()],
            nodes,
            sections,
            switches,
            sources: vec![SourceBus {
                node_id: node_id(0),
                voltage_setpoint: spec.voltage_setpoint,
                feeder_id: fid.clone(),
                head_section_id: format!("{fid}-s1"),
            }],
            loads,
            configurations: Vec::new(),
        },
        last_mainline_node: node_id(mainline),
    })
}

/// Deterministic radial feeder matching the spec's section count exactly and
/// its peak load and conductor miles to floating-point precision.
pub fn generate_synthetic_feeder(spec: &FeederSpec) -> Result<Network> {
    Network::new(build_feeder(spec)?.parts)
}

/// Two synthetic feeders joined mainline-end to mainline-end by a normally-open
/// SCADA tie switch.
pub fn generate_feeder_pair(spec: &FeederPairSpec) -> Result<Network> {
    let [a, b] = &spec.feeders;
    if a.feeder_id == b.feeder_id {
        return Err(HcError::InfeasibleSpec("feeder ids must differ".into()));
    }
    if (a.nominal_kv_ll - b.nominal_kv_ll).abs() > 1e-9 {
        return Err(HcError::InfeasibleSpec(
            "tied feeders must share a nominal voltage".into(),
        ));
    }
    let first = build_feeder(a)?;
    let second = build_feeder(b)?;
    let mut parts = first.parts;
    let other = second.parts;
    parts.feeder_ids.extend(other.feeder_ids);
    parts.nodes.extend(other.nodes);
    parts.sections.extend(other.sections);
    parts.switches.extend(other.switches);
    parts.sources.extend(other.sources);
    parts.loads.extend(other.loads);

    let tie_id = format!("TIE-{}-{}", a.feeder_id, b.feeder_id);
    parts.sections.push(Section {
        id: tie_id.clone(),
        from_node: first.last_mainline_node,
        to_node: second.last_mainline_node,
        phases: PhaseSet::ABC,
        impedance: spec.tie.conductor.impedance(spec.tie.length_miles),
        length: spec.tie.length_miles,
        thermal_rating: spec.tie.conductor.rating_amps,
    });
    parts.switches.push(Switch {
        id: format!("{tie_id}-sw"),
        section_id: tie_id,
        scada_controlled: true,
        normally_open: true,
        switching_block_boundary: true,
    });
    Network::new(parts)
}
