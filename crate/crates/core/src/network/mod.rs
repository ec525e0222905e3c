//! Multi-feeder radial network model.
//!
//! A [`Network`] is immutable once built. Switching states live in
//! [`Configuration`]s, and [`apply_configuration`] derives an
//! [`EnergizedView`] without touching the network itself.

mod io;
mod synth;
mod topology;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{HcError, Result};

pub use io::{FeederDocument, SCHEMA_VERSION};
pub use synth::{
    generate_feeder_pair, generate_synthetic_feeder, ConductorSpec, FeederPairSpec, FeederSpec,
    TieSpec,
};
pub use topology::{
    apply_configuration, sections_by_distance, validate_radiality, Diagnostic, EnergizedView,
    PhaseClass, RadialityReport, Tree,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'A',
            Phase::B => 'B',
            Phase::C => 'C',
        }
    }
}

/// Subset of {A, B, C}, serialized as a string such as `"ABC"` or `"B"`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);
    pub const EMPTY: PhaseSet = PhaseSet(0);

    pub fn single(phase: Phase) -> Self {
        PhaseSet(1 << phase.index())
    }

    pub fn contains(self, phase: Phase) -> bool {
        self.0 & (1 << phase.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl FromIterator<Phase> for PhaseSet {
    fn from_iter<I: IntoIterator<Item = Phase>>(iter: I) -> Self {
        PhaseSet(iter.into_iter().fold(0, |acc, p| acc | (1 << p.index())))
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl FromStr for PhaseSet {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'A' => Ok(Phase::A),
                'B' => Ok(Phase::B),
                'C' => Ok(Phase::C),
                other => Err(HcError::InvalidNetwork(format!(
                    "bad phase letter `{other}` in `{s}`"
                ))),
            })
            .collect()
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Series impedance of a section, ohms per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub phases: PhaseSet,
    /// Miles along the normal-configuration path from the serving source.
    pub distance_from_source: f64,
    /// Line-to-ground volts.
    pub nominal_voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub phases: PhaseSet,
    pub impedance: Impedance,
    /// Miles.
    pub length: f64,
    /// Amperes per phase.
    pub thermal_rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub id: String,
    pub section_id: String,
    pub scada_controlled: bool,
    pub normally_open: bool,
    /// Marks a load-transfer point between switching blocks (ties included).
    pub switching_block_boundary: bool,
}

impl Switch {
    /// SCADA-controlled transfer device, the kind the zero-flow rule applies to.
    pub fn is_transfer_device(&self) -> bool {
        self.scada_controlled && self.switching_block_boundary
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceBus {
    pub node_id: String,
    /// Per unit of the source node's nominal voltage.
    pub voltage_setpoint: f64,
    pub feeder_id: String,
    pub head_section_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub node_id: String,
    pub peak_kw: f64,
    pub power_factor: f64,
    pub profile_id: String,
    pub customer_count: u32,
}

impl LoadPoint {
    pub fn peak_kva(&self) -> f64 {
        self.peak_kw / self.power_factor
    }

    /// Reactive-to-real ratio implied by the (lagging) power factor.
    pub fn q_per_p(&self) -> f64 {
        (1.0 / (self.power_factor * self.power_factor) - 1.0).max(0.0).sqrt()
    }
}

/// Switch states relative to the normal (base) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: String,
    #[serde(default)]
    pub open_switches: BTreeSet<String>,
    #[serde(default)]
    pub closed_switches: BTreeSet<String>,
    #[serde(default = "unit_probability")]
    pub probability: f64,
}

fn unit_probability() -> f64 {
    1.0
}

pub const BASE_CONFIGURATION: &str = "base";

impl Configuration {
    /// Every switch in its normal state.
    pub fn base() -> Self {
        Configuration {
            id: BASE_CONFIGURATION.to_string(),
            open_switches: BTreeSet::new(),
            closed_switches: BTreeSet::new(),
            probability: 1.0,
        }
    }

    pub fn is_base(&self) -> bool {
        self.open_switches.is_empty() && self.closed_switches.is_empty()
    }
}

/// Raw collections, validated into a [`Network`] by [`Network::new`].
#[derive(Debug, Clone, Default)]
pub struct NetworkParts {
    pub feeder_ids: Vec<String>,
    pub nodes: Vec<Node>,
    pub sections: Vec<Section>,
    pub switches: Vec<Switch>,
    pub sources: Vec<SourceBus>,
    pub loads: Vec<LoadPoint>,
    pub configurations: Vec<Configuration>,
}

#[derive(Debug, Clone)]
pub struct Network {
    parts: NetworkParts,
    node_index: HashMap<String, usize>,
    section_index: HashMap<String, usize>,
    switch_index: HashMap<String, usize>,
    section_ends: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
    switches_by_section: Vec<Vec<usize>>,
    loads_by_node: Vec<Vec<usize>>,
    source_nodes: Vec<usize>,
    head_sections: Vec<usize>,
}

fn index_unique<'a>(
    kind: &'static str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.to_string(), i).is_some() {
            return Err(HcError::InvalidNetwork(format!("duplicate {kind} id `{id}`")));
        }
    }
    Ok(map)
}

impl Network {
    /// Validates every element invariant and base-configuration radiality.
    pub fn new(parts: NetworkParts) -> Result<Self> {
        let node_index = index_unique("node", parts.nodes.iter().map(|n| n.id.as_str()))?;
        let section_index = index_unique("section", parts.sections.iter().map(|s| s.id.as_str()))?;
        let switch_index = index_unique("switch", parts.switches.iter().map(|s| s.id.as_str()))?;
        let bad = |msg: String| Err(HcError::InvalidNetwork(msg));

        for n in &parts.nodes {
            if n.phases.is_empty() {
                return bad(format!("node `{}` has no phases", n.id));
            }
            if !(n.distance_from_source >= 0.0) {
                return bad(format!("node `{}` has negative distance", n.id));
            }
            if !(n.nominal_voltage > 0.0) {
                return bad(format!("node `{}` has non-positive nominal voltage", n.id));
            }
        }

        let lookup = |id: &str, owner: &str| -> Result<usize> {
            node_index.get(id).copied().ok_or_else(|| {
                HcError::InvalidNetwork(format!("`{owner}` references unknown node `{id}`"))
            })
        };

        let mut section_ends = Vec::with_capacity(parts.sections.len());
        let mut adjacency = vec![Vec::new(); parts.nodes.len()];
        for (si, s) in parts.sections.iter().enumerate() {
            let f = lookup(&s.from_node, &s.id)?;
            let t = lookup(&s.to_node, &s.id)?;
            if f == t {
                return bad(format!("section `{}` is a self-loop", s.id));
            }
            if !(s.thermal_rating > 0.0) {
                return bad(format!("section `{}` has non-positive thermal rating", s.id));
            }
            if !(s.length >= 0.0) {
                return bad(format!("section `{}` has negative length", s.id));
            }
            if s.phases.is_empty()
                || !s.phases.is_subset(parts.nodes[f].phases)
                || !s.phases.is_subset(parts.nodes[t].phases)
            {
                return bad(format!(
                    "section `{}` phases {} are not a subset of its endpoints",
                    s.id, s.phases
                ));
            }
            if !(s.impedance.r >= 0.0) || !s.impedance.x.is_finite() {
                return bad(format!("section `{}` has invalid impedance", s.id));
            }
            section_ends.push((f, t));
            adjacency[f].push((si, t));
            adjacency[t].push((si, f));
        }

        let mut switches_by_section = vec![Vec::new(); parts.sections.len()];
        for (wi, w) in parts.switches.iter().enumerate() {
            let si = *section_index.get(&w.section_id).ok_or_else(|| {
                HcError::InvalidNetwork(format!(
                    "switch `{}` references unknown section `{}`",
                    w.id, w.section_id
                ))
            })?;
            switches_by_section[si].push(wi);
        }

        let mut source_nodes = Vec::new();
        let mut head_sections = Vec::new();
        for src in &parts.sources {
            let ni = lookup(&src.node_id, &format!("source {}", src.feeder_id))?;
            if !(0.9..=1.1).contains(&src.voltage_setpoint) {
                return bad(format!(
                    "source `{}` setpoint {} pu outside [0.9, 1.1]",
                    src.node_id, src.voltage_setpoint
                ));
            }
            let hs = *section_index.get(&src.head_section_id).ok_or_else(|| {
                HcError::InvalidNetwork(format!(
                    "source `{}` head section `{}` does not exist",
                    src.node_id, src.head_section_id
                ))
            })?;
            let (a, b) = section_ends[hs];
            if a != ni && b != ni {
                return bad(format!(
                    "head section `{}` does not touch source node `{}`",
                    src.head_section_id, src.node_id
                ));
            }
            source_nodes.push(ni);
            head_sections.push(hs);
        }

        let mut loads_by_node = vec![Vec::new(); parts.nodes.len()];
        for (li, l) in parts.loads.iter().enumerate() {
            let ni = lookup(&l.node_id, "load")?;
            if !(l.peak_kw >= 0.0) {
                return bad(format!("load at `{}` has negative peak", l.node_id));
            }
            if !(l.power_factor > 0.0 && l.power_factor <= 1.0) {
                return bad(format!("load at `{}` has power factor outside (0, 1]", l.node_id));
            }
            loads_by_node[ni].push(li);
        }

        let network = Network {
            parts,
            node_index,
            section_index,
            switch_index,
            section_ends,
            adjacency,
            switches_by_section,
            loads_by_node,
            source_nodes,
            head_sections,
        };

        let report = validate_radiality(&network, &Configuration::base())?;
        if !report.radial {
            return Err(HcError::NonRadial {
                config: BASE_CONFIGURATION.to_string(),
                diagnostics: report.diagnostics,
            });
        }
        if let Some(island) = report.diagnostics.iter().find(|d| matches!(d, Diagnostic::Island { .. })) {
            return bad(format!("base configuration leaves nodes unserved: {island}"));
        }
        for c in &network.parts.configurations {
            for id in c.open_switches.iter().chain(&c.closed_switches) {
                if !network.switch_index.contains_key(id) {
                    return bad(format!("configuration `{}` references unknown switch `{id}`", c.id));
                }
            }
        }
        Ok(network)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.parts.nodes
    }

    pub fn sections(&self) -> &[Section] {
        &self.parts.sections
    }

    pub fn switches(&self) -> &[Switch] {
        &self.parts.switches
    }

    pub fn sources(&self) -> &[SourceBus] {
        &self.parts.sources
    }

    pub fn loads(&self) -> &[LoadPoint] {
        &self.parts.loads
    }

    pub fn feeder_ids(&self) -> &[String] {
        &self.parts.feeder_ids
    }

    /// Configurations stored with the network (may be empty).
    pub fn configurations(&self) -> &[Configuration] {
        &self.parts.configurations
    }

    pub fn parts(&self) -> &NetworkParts {
        &self.parts
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn section_idx(&self, id: &str) -> Option<usize> {
        self.section_index.get(id).copied()
    }

    pub fn switch_idx(&self, id: &str) -> Option<usize> {
        self.switch_index.get(id).copied()
    }

    pub fn section_ends(&self, section: usize) -> (usize, usize) {
        self.section_ends[section]
    }

    /// `(section, neighbour)` pairs incident to a node.
    pub fn adjacent(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn switches_on(&self, section: usize) -> &[usize] {
        &self.switches_by_section[section]
    }

    pub fn loads_at(&self, node: usize) -> &[usize] {
        &self.loads_by_node[node]
    }

    pub fn source_node(&self, source: usize) -> usize {
        self.source_nodes[source]
    }

    pub fn head_section(&self, source: usize) -> usize {
        self.head_sections[source]
    }

    /// Replace the stored configuration list; the network is otherwise unchanged.
    pub fn with_configurations(&self, configurations: Vec<Configuration>) -> Result<Network> {
        let mut parts = self.parts.clone();
        parts.configurations = configurations;
        Network::new(parts)
    }

    pub fn total_peak_kw(&self) -> f64 {
        self.parts.loads.iter().map(|l| l.peak_kw).sum()
    }

    pub fn total_length(&self) -> f64 {
        self.parts.sections.iter().map(|s| s.length).sum()
    }
}
