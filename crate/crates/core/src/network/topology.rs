use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Configuration, Network, PhaseSet, Section, SourceBus};
use crate::error::{HcError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Closing `section_id` creates a second path between energized nodes.
    Loop {
        section_id: String,
        sources: Vec<String>,
    },
    /// Nodes reachable from no source.
    Island { node_ids: Vec<String> },
}

impl Diagnostic {
    pub fn is_violation(&self) -> bool {
        matches!(self, Diagnostic::Loop { .. })
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Loop { section_id, sources } => {
                write!(f, "loop through section `{section_id}`")?;
                if sources.len() > 1 {
                    write!(f, " joining sources {}", sources.join(", "))?;
                }
                Ok(())
            }
            Diagnostic::Island { node_ids } => {
                let shown: Vec<_> = node_ids.iter().take(5).map(String::as_str).collect();
                write!(f, "island of {} node(s) [{}", node_ids.len(), shown.join(", "))?;
                if node_ids.len() > shown.len() {
                    write!(f, ", ...")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialityReport {
    pub radial: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Open/closed state of every switch under a configuration (`true` = open).
fn switch_states(network: &Network, config: &Configuration) -> Result<Vec<bool>> {
    let mut open: Vec<bool> = network.switches().iter().map(|s| s.normally_open).collect();
    for id in &config.open_switches {
        let i = network.switch_idx(id).ok_or_else(|| HcError::UnknownSwitch(id.clone()))?;
        open[i] = true;
    }
    for id in &config.closed_switches {
        let i = network.switch_idx(id).ok_or_else(|| HcError::UnknownSwitch(id.clone()))?;
        if config.open_switches.contains(id) {
            return Err(HcError::InvalidArgument(format!(
                "switch `{id}` is both opened and closed in configuration `{}`",
                config.id
            )));
        }
        open[i] = false;
    }
    Ok(open)
}

fn section_conducts(network: &Network, open: &[bool], section: usize) -> bool {
    network.switches_on(section).iter().all(|&w| !open[w])
}

/// One energized tree rooted at a source, nodes in breadth-first order.
#[derive(Debug, Clone)]
pub struct Tree {
    pub source: usize,
    pub nodes: Vec<usize>,
    /// Local index of each node's parent; the root points at itself.
    pub parent: Vec<usize>,
    /// Section feeding each local node; `usize::MAX` for the root.
    pub section: Vec<usize>,
    /// Phases energized at each local node (node phases narrowed along the path).
    pub phases: Vec<PhaseSet>,
}

impl Tree {
    pub fn root(&self) -> usize {
        self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

struct Traversal {
    trees: Vec<Tree>,
    node_slot: Vec<Option<(u32, u32)>>,
    diagnostics: Vec<Diagnostic>,
}

fn traverse(network: &Network, open: &[bool]) -> Traversal {
    let n = network.nodes().len();
    let mut node_slot: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut section_used = vec![false; network.sections().len()];
    let mut trees = Vec::with_capacity(network.sources().len());
    let mut diagnostics = Vec::new();
    let source_label = |t: usize| network.sources()[t].feeder_id.clone();

    for (si, _) in network.sources().iter().enumerate() {
        let root = network.source_node(si);
        let tree_idx = trees.len();
        if let Some((other, _)) = node_slot[root] {
            diagnostics.push(Diagnostic::Loop {
                section_id: network.sections()[network.head_section(si)].id.clone(),
                sources: vec![source_label(other as usize), source_label(si)],
            });
            trees.push(Tree {
                source: si,
                nodes: Vec::new(),
                parent: Vec::new(),
                section: Vec::new(),
                phases: Vec::new(),
            });
            continue;
        }
        let mut tree = Tree {
            source: si,
            nodes: vec![root],
            parent: vec![0],
            section: vec![usize::MAX],
            phases: vec![network.nodes()[root].phases],
        };
        node_slot[root] = Some((tree_idx as u32, 0));
        let mut queue = VecDeque::from([0usize]);
        while let Some(local) = queue.pop_front() {
            let u = tree.nodes[local];
            for &(sec, v) in network.adjacent(u) {
                if section_used[sec] || !section_conducts(network, open, sec) {
                    continue;
                }
                section_used[sec] = true;
                match node_slot[v] {
                    None => {
                        let idx = tree.nodes.len();
                        node_slot[v] = Some((tree_idx as u32, idx as u32));
                        let phases = network.nodes()[v]
                            .phases
                            .intersection(network.sections()[sec].phases)
                            .intersection(tree.phases[local]);
                        tree.nodes.push(v);
                        tree.parent.push(local);
                        tree.section.push(sec);
                        tree.phases.push(phases);
                        queue.push_back(idx);
                    }
                    Some((other, _)) => {
                        let mut sources = vec![source_label(si)];
                        if other as usize != tree_idx {
                            sources.push(source_label(trees[other as usize].source));
                        }
                        diagnostics.push(Diagnostic::Loop {
                            section_id: network.sections()[sec].id.clone(),
                            sources,
                        });
                    }
                }
            }
        }
        trees.push(tree);
    }

    // group unserved nodes into islands over conducting sections
    let mut seen = vec![false; n];
    for start in 0..n {
        if node_slot[start].is_some() || seen[start] {
            continue;
        }
        let mut island = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            island.push(network.nodes()[u].id.clone());
            for &(sec, v) in network.adjacent(u) {
                if !seen[v] && node_slot[v].is_none() && section_conducts(network, open, sec) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        island.sort();
        diagnostics.push(Diagnostic::Island { node_ids: island });
    }

    Traversal {
        trees,
        node_slot,
        diagnostics,
    }
}

/// Checks that every energized node has exactly one path to exactly one source.
/// Islands are reported but do not break radiality.
pub fn validate_radiality(network: &Network, config: &Configuration) -> Result<RadialityReport> {
    let open = switch_states(network, config)?;
    let t = traverse(network, &open);
    Ok(RadialityReport {
        radial: !t.diagnostics.iter().any(Diagnostic::is_violation),
        diagnostics: t.diagnostics,
    })
}

/// Read-only energization of a network under one configuration.
#[derive(Debug, Clone)]
pub struct EnergizedView<'a> {
    network: &'a Network,
    config_id: String,
    open: Vec<bool>,
    trees: Vec<Tree>,
    node_slot: Vec<Option<(u32, u32)>>,
    section_slot: Vec<Option<(u32, u32)>>,
    islands: Vec<Diagnostic>,
}

pub fn apply_configuration<'a>(
    network: &'a Network,
    config: &Configuration,
) -> Result<EnergizedView<'a>> {
    let open = switch_states(network, config)?;
    let t = traverse(network, &open);
    if t.diagnostics.iter().any(Diagnostic::is_violation) {
        return Err(HcError::NonRadial {
            config: config.id.clone(),
            diagnostics: t.diagnostics,
        });
    }
    let mut section_slot = vec![None; network.sections().len()];
    for (ti, tree) in t.trees.iter().enumerate() {
        for (local, &sec) in tree.section.iter().enumerate().skip(1) {
            section_slot[sec] = Some((ti as u32, local as u32));
        }
    }
    Ok(EnergizedView {
        network,
        config_id: config.id.clone(),
        open,
        trees: t.trees,
        node_slot: t.node_slot,
        section_slot,
        islands: t.diagnostics,
    })
}

impl<'a> EnergizedView<'a> {
    pub fn network(&self) -> &'a Network {
        self.network
    }

    pub fn config_id(&self) -> &str {
        &self.config_id
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// `(tree, local index)` of an energized node.
    pub fn node_slot(&self, node: usize) -> Option<(usize, usize)> {
        self.node_slot[node].map(|(t, l)| (t as usize, l as usize))
    }

    /// `(tree, local index of the downstream node)` of an energized section.
    pub fn section_slot(&self, section: usize) -> Option<(usize, usize)> {
        self.section_slot[section].map(|(t, l)| (t as usize, l as usize))
    }

    pub fn is_energized(&self, node: usize) -> bool {
        self.node_slot[node].is_some()
    }

    pub fn section_energized(&self, section: usize) -> bool {
        self.section_slot[section].is_some()
    }

    pub fn switch_open(&self, switch: usize) -> bool {
        self.open[switch]
    }

    pub fn serving_source(&self, node: usize) -> Option<&'a SourceBus> {
        self.node_slot(node)
            .map(|(t, _)| &self.network.sources()[self.trees[t].source])
    }

    /// Index (into `trees`) of the tree fed by a source.
    pub fn tree_of_source(&self, source: usize) -> Option<usize> {
        self.trees
            .iter()
            .position(|t| t.source == source && !t.is_empty())
    }

    /// Sections from the node up to its source, nearest first.
    pub fn upstream_path(&self, node: usize) -> Vec<&'a Section> {
        let Some((t, mut local)) = self.node_slot(node) else {
            return Vec::new();
        };
        let tree = &self.trees[t];
        let mut path = Vec::new();
        while local != 0 {
            path.push(&self.network.sections()[tree.section[local]]);
            local = tree.parent[local];
        }
        path
    }

    /// Nodes not reached by any source; their load drops out of the analysis.
    pub fn de_energized_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_slot.len()).filter(|&n| self.node_slot[n].is_none())
    }

    pub fn islands(&self) -> &[Diagnostic] {
        &self.islands
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseClass {
    ThreePhase,
    OneTwoPhase,
}

impl PhaseClass {
    pub fn of(phases: PhaseSet) -> Self {
        if phases.len() == 3 {
            PhaseClass::ThreePhase
        } else {
            PhaseClass::OneTwoPhase
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PhaseClass::ThreePhase => "three_phase",
            PhaseClass::OneTwoPhase => "one_two_phase",
        }
    }
}

impl std::str::FromStr for PhaseClass {
    type Err = HcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_phase" | "3" => Ok(PhaseClass::ThreePhase),
            "one_two_phase" | "1-2" => Ok(PhaseClass::OneTwoPhase),
            _ => Err(HcError::InvalidArgument(format!("unknown phase class `{s}`"))),
        }
    }
}

/// Buckets base-energized sections of one phase class by the distance of their
/// `to_node`; bucket `k` covers `[k, k+1) * bucket_miles`.
pub fn sections_by_distance(
    network: &Network,
    bucket_miles: f64,
    phase_class: PhaseClass,
) -> Result<BTreeMap<u64, Vec<String>>> {
    if !(bucket_miles > 0.0) {
        return Err(HcError::InvalidArgument(format!(
            "bucket width must be positive, got {bucket_miles}"
        )));
    }
    let view = apply_configuration(network, &Configuration::base())?;
    let mut buckets: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for (si, s) in network.sections().iter().enumerate() {
        if !view.section_energized(si) || PhaseClass::of(s.phases) != phase_class {
            continue;
        }
        let (_, to) = network.section_ends(si);
        let d = network.nodes()[to].distance_from_source;
        buckets
            .entry((d / bucket_miles).floor() as u64)
            .or_default()
            .push(s.id.clone());
    }
    Ok(buckets)
}
