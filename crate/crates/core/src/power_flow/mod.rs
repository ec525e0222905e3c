//! Forward-backward sweep power flow on an energized radial view.
//!
//! Each phase is solved as an independent single-phase circuit (no mutual
//! coupling). Loads are constant power. The solver is generic over the
//! floating-point type; see [`crate::Solution`] for the `f64` alias.

mod volt_var;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{HcError, Result};
use crate::network::{EnergizedView, Network, Phase, PhaseSet};
use crate::scalar::Scalar;

pub use volt_var::{apply_volt_var, VoltVarCurve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on max |dV| between sweeps, per unit.
    pub tolerance_pu: f64,
    pub max_iterations: usize,
    pub volt_var: VoltVarCurve,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance_pu: 1e-6,
            max_iterations: 50,
            volt_var: VoltVarCurve::default(),
        }
    }
}

/// Complex demand per network node in kVA, indexed like `Network::nodes()`.
/// A negative real part acts as net generation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeLoads(Vec<Complex64>);

impl NodeLoads {
    pub fn zeros(nodes: usize) -> Self {
        NodeLoads(vec![Complex64::new(0.0, 0.0); nodes])
    }

    pub fn from_vec(values: Vec<Complex64>) -> Self {
        NodeLoads(values)
    }

    pub fn from_ids<'s>(
        network: &Network,
        entries: impl IntoIterator<Item = (&'s str, Complex64)>,
    ) -> Result<Self> {
        let mut loads = NodeLoads::zeros(network.nodes().len());
        for (id, s) in entries {
            let n = network.node_idx(id).ok_or_else(|| HcError::UnknownId {
                kind: "node",
                id: id.to_string(),
            })?;
            loads.0[n] += s;
        }
        Ok(loads)
    }

    /// Every load point at its peak, reactive power from its power factor.
    pub fn peak(network: &Network) -> Self {
        let mut loads = NodeLoads::zeros(network.nodes().len());
        for l in network.loads() {
            let n = network.node_idx(&l.node_id).expect("validated");
            loads.0[n] += Complex64::new(l.peak_kw, l.peak_kw * l.q_per_p());
        }
        loads
    }

    pub fn get(&self, node: usize) -> Complex64 {
        self.0.get(node).copied().unwrap_or_default()
    }

    pub fn add(&mut self, node: usize, s: Complex64) {
        self.0[node] += s;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn total(&self) -> Complex64 {
        self.0.iter().sum()
    }
}

/// DER injections in kW/kvar, generation positive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InjectionSet {
    injections: BTreeMap<usize, Complex64>,
    pub volt_var_enabled: bool,
}

impl InjectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(node: usize, s: Complex64) -> Self {
        let mut set = Self::new();
        set.insert(node, s);
        set
    }

    pub fn insert(&mut self, node: usize, s: Complex64) {
        *self.injections.entry(node).or_default() += s;
    }

    pub fn from_ids<'s>(
        network: &Network,
        entries: impl IntoIterator<Item = (&'s str, Complex64)>,
    ) -> Result<Self> {
        let mut set = Self::new();
        for (id, s) in entries {
            let n = network.node_idx(id).ok_or_else(|| HcError::UnknownId {
                kind: "node",
                id: id.to_string(),
            })?;
            set.insert(n, s);
        }
        Ok(set)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.injections.iter().map(|(&n, &s)| (n, s))
    }

    pub fn is_empty(&self) -> bool {
        self.injections.is_empty()
    }

    pub fn total_kw(&self) -> f64 {
        self.injections.values().map(|s| s.re).sum()
    }
}

struct TreeModel<T> {
    z: Vec<Complex<T>>,
    v_nominal: Vec<T>,
    v_source: [Complex<T>; 3],
}

/// Per-view solver state: impedances and bases converted to `T` once, reused
/// across many solves.
pub struct PowerFlow<'v, T: Scalar> {
    view: &'v EnergizedView<'v>,
    models: Vec<TreeModel<T>>,
    options: SolverOptions,
}

/// Voltages and branch currents of one energized tree.
#[derive(Debug, Clone)]
pub struct TreeSolution<T> {
    pub tree: usize,
    /// Volts, per local node and phase (zero on absent phases).
    pub voltages: Vec<[Complex<T>; 3]>,
    /// Amperes into each local node's feeding section; the root entry holds
    /// the total current leaving the source.
    pub currents: Vec<[Complex<T>; 3]>,
    pub losses_kw: T,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution<'v, T> {
    view: &'v EnergizedView<'v>,
    trees: Vec<Option<TreeSolution<T>>>,
}

fn phase_rotation<T: Scalar>(phase: Phase) -> Complex<T> {
    let angle = -2.0 * std::f64::consts::PI / 3.0 * phase.index() as f64;
    Complex::new(T::of(angle.cos()), T::of(angle.sin()))
}

fn to_t<T: Scalar>(c: Complex64) -> Complex<T> {
    Complex::new(T::of(c.re), T::of(c.im))
}

impl<'v, T: Scalar> PowerFlow<'v, T> {
    pub fn new(view: &'v EnergizedView<'v>, options: SolverOptions) -> Self {
        let network = view.network();
        let models = view
            .trees()
            .iter()
            .map(|tree| {
                let mut z = vec![Complex::new(T::zero(), T::zero()); tree.len()];
                for (local, &sec) in tree.section.iter().enumerate().skip(1) {
                    let imp = network.sections()[sec].impedance;
                    z[local] = Complex::new(T::of(imp.r), T::of(imp.x));
                }
                let v_nominal = tree
                    .nodes
                    .iter()
                    .map(|&n| T::of(network.nodes()[n].nominal_voltage))
                    .collect::<Vec<_>>();
                let mut v_source = [Complex::new(T::zero(), T::zero()); 3];
                if !tree.is_empty() {
                    let src = &network.sources()[tree.source];
                    let mag = T::of(src.voltage_setpoint) * v_nominal[0];
                    for p in Phase::ALL {
                        v_source[p.index()] = phase_rotation::<T>(p).scale(mag);
                    }
                }
                TreeModel {
                    z,
                    v_nominal,
                    v_source,
                }
            })
            .collect();
        PowerFlow {
            view,
            models,
            options,
        }
    }

    pub fn view(&self) -> &'v EnergizedView<'v> {
        self.view
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Solves every energized tree.
    pub fn solve(
        &self,
        loads: &NodeLoads,
        injections: &InjectionSet,
    ) -> Result<PowerFlowSolution<'v, T>> {
        let mut per_tree: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); self.models.len()];
        for (node, s) in injections.iter() {
            let (t, local) = self
                .view
                .node_slot(node)
                .ok_or_else(|| HcError::DeEnergized(self.view.network().nodes()[node].id.clone()))?;
            per_tree[t].push((local, s));
        }
        let trees = (0..self.models.len())
            .map(|t| {
                (!self.view.trees()[t].is_empty()).then(|| {
                    self.sweep(t, loads, &per_tree[t], injections.volt_var_enabled, None)
                })
            })
            .collect();
        Ok(PowerFlowSolution {
            view: self.view,
            trees,
        })
    }

    /// Solves a single tree, optionally warm-started from an earlier solution
    /// of the same tree. Injections must lie in that tree.
    pub fn solve_tree(
        &self,
        tree: usize,
        loads: &NodeLoads,
        injections: &InjectionSet,
        warm: Option<&TreeSolution<T>>,
    ) -> Result<PowerFlowSolution<'v, T>> {
        let mut local_inj = Vec::new();
        for (node, s) in injections.iter() {
            match self.view.node_slot(node) {
                Some((t, local)) if t == tree => local_inj.push((local, s)),
                Some(_) => {
                    return Err(HcError::InvalidArgument(format!(
                        "injection at `{}` lies outside the solved tree",
                        self.view.network().nodes()[node].id
                    )))
                }
                None => {
                    return Err(HcError::DeEnergized(
                        self.view.network().nodes()[node].id.clone(),
                    ))
                }
            }
        }
        let warm = warm.filter(|w| w.tree == tree).map(|w| w.voltages.as_slice());
        let mut trees: Vec<Option<TreeSolution<T>>> = vec![None; self.models.len()];
        trees[tree] = Some(self.sweep(tree, loads, &local_inj, injections.volt_var_enabled, warm));
        Ok(PowerFlowSolution {
            view: self.view,
            trees,
        })
    }

    fn sweep(
        &self,
        ti: usize,
        loads: &NodeLoads,
        injections: &[(usize, Complex64)],
        volt_var: bool,
        warm: Option<&[[Complex<T>; 3]]>,
    ) -> TreeSolution<T> {
        let tree = &self.view.trees()[ti];
        let model = &self.models[ti];
        let k = tree.len();
        let zero = Complex::new(T::zero(), T::zero());
        let va_per_kva = T::of(1000.0);
        let tol = T::of(self.options.tolerance_pu);

        // net demand per local node and phase, VA
        let mut demand = vec![[zero; 3]; k];
        let spread = |demand: &mut [[Complex<T>; 3]], local: usize, s: Complex64, phases: PhaseSet| {
            if phases.is_empty() {
                return;
            }
            let share = to_t::<T>(s / phases.len() as f64) * va_per_kva;
            for p in phases.iter() {
                demand[local][p.index()] += share;
            }
        };
        for (local, &node) in tree.nodes.iter().enumerate() {
            let s = loads.get(node);
            if s != Complex64::default() {
                spread(&mut demand, local, s, tree.phases[local]);
            }
        }
        // volt-var units: (local, phase, rated VA per phase)
        let mut vv_units: Vec<(usize, usize, T)> = Vec::new();
        for &(local, s) in injections {
            let phases = tree.phases[local];
            if volt_var {
                spread(&mut demand, local, -Complex64::new(s.re, 0.0), phases);
                if !phases.is_empty() {
                    let rated = T::of(s.norm() * 1000.0 / phases.len() as f64);
                    for p in phases.iter() {
                        vv_units.push((local, p.index(), rated));
                    }
                }
            } else {
                spread(&mut demand, local, -s, phases);
            }
        }
        let mut q_vv = vec![T::zero(); vv_units.len()];
        // per-unit relaxation, halved whenever the update changes direction
        let mut relax = vec![T::of(0.5); vv_units.len()];
        let mut last_step = vec![T::zero(); vv_units.len()];

        let mut v: Vec<[Complex<T>; 3]> = match warm {
            Some(w) if w.len() == k => w.to_vec(),
            _ => (0..k)
                .map(|local| {
                    let mut row = [zero; 3];
                    for p in tree.phases[local].iter() {
                        row[p.index()] = model.v_source[p.index()];
                    }
                    row
                })
                .collect(),
        };
        for p in tree.phases[0].iter() {
            v[0][p.index()] = model.v_source[p.index()];
        }
        let mut j = vec![[zero; 3]; k];
        let mut demand_eff = demand.clone();
        let mut converged = false;
        let mut iterations = 0;
        let half = T::of(0.5);
        let min_relax = T::of(1.0 / 64.0);

        let backward = |v: &[[Complex<T>; 3]], demand: &[[Complex<T>; 3]], j: &mut [[Complex<T>; 3]]| {
            for local in 0..k {
                for p in tree.phases[local].iter() {
                    let i = p.index();
                    j[local][i] = if demand[local][i] == zero {
                        zero
                    } else {
                        (demand[local][i] / v[local][i]).conj()
                    };
                }
            }
            for local in (1..k).rev() {
                let parent = tree.parent[local];
                for p in tree.phases[local].iter() {
                    let i = p.index();
                    let add = j[local][i];
                    j[parent][i] += add;
                }
            }
        };

        for it in 1..=self.options.max_iterations {
            iterations = it;
            let mut dq_max = T::zero();
            if !vv_units.is_empty() {
                demand_eff.copy_from_slice(&demand);
                for (u, &(local, i, rated)) in vv_units.iter().enumerate() {
                    let v_pu = v[local][i].norm() / model.v_nominal[local];
                    let target = self.options.volt_var.reactive_fraction(v_pu) * rated;
                    let raw = target - q_vv[u];
                    if raw * last_step[u] < T::zero() {
                        relax[u] = (relax[u] * half).max(min_relax);
                    }
                    let step = raw * relax[u];
                    last_step[u] = step;
                    q_vv[u] += step;
                    if rated > T::zero() {
                        dq_max = dq_max.max(step.abs() / rated);
                    }
                    demand_eff[local][i] -= Complex::new(T::zero(), q_vv[u]);
                }
            }
            let d = if vv_units.is_empty() { &demand } else { &demand_eff };
            backward(&v, d, &mut j);

            let mut dv_max = T::zero();
            for local in 1..k {
                let parent = tree.parent[local];
                let z = model.z[local];
                for p in tree.phases[local].iter() {
                    let i = p.index();
                    let nv = v[parent][i] - z * j[local][i];
                    let dv = (nv - v[local][i]).norm() / model.v_nominal[local];
                    if !(dv <= dv_max) {
                        dv_max = dv;
                    }
                    v[local][i] = nv;
                }
            }
            if !dv_max.is_finite() {
                break;
            }
            if dv_max <= tol && dq_max <= tol * T::of(10.0) {
                converged = true;
                break;
            }
        }
        let d = if vv_units.is_empty() { &demand } else { &demand_eff };
        backward(&v, d, &mut j);

        let mut losses = T::zero();
        for local in 1..k {
            let parent = tree.parent[local];
            for p in tree.phases[local].iter() {
                let i = p.index();
                losses += ((v[parent][i] - v[local][i]) * j[local][i].conj()).re;
            }
        }
        let finite = v
            .iter()
            .all(|row| row.iter().all(|c| c.re.is_finite() && c.im.is_finite()));
        TreeSolution {
            tree: ti,
            voltages: v,
            currents: j,
            losses_kw: losses / va_per_kva,
            converged: converged && finite,
            iterations,
        }
    }
}

/// Solve every tree of `view` with default options in `f64`.
pub fn solve<'v>(
    view: &'v EnergizedView<'v>,
    loads: &NodeLoads,
    injections: &InjectionSet,
) -> Result<PowerFlowSolution<'v, f64>> {
    PowerFlow::<f64>::new(view, SolverOptions::default()).solve(loads, injections)
}

impl<'v, T: Scalar> PowerFlowSolution<'v, T> {
    pub fn view(&self) -> &'v EnergizedView<'v> {
        self.view
    }

    /// True when every solved tree converged.
    pub fn converged(&self) -> bool {
        self.trees.iter().flatten().all(|t| t.converged)
    }

    pub fn iterations(&self) -> usize {
        self.trees.iter().flatten().map(|t| t.iterations).max().unwrap_or(0)
    }

    pub fn losses_kw(&self) -> f64 {
        self.trees.iter().flatten().map(|t| t.losses_kw.f64()).sum()
    }

    pub fn tree_solution(&self, tree: usize) -> Option<&TreeSolution<T>> {
        self.trees.get(tree).and_then(Option::as_ref)
    }

    pub fn solved_trees(&self) -> impl Iterator<Item = &TreeSolution<T>> {
        self.trees.iter().flatten()
    }

    /// Per-unit complex voltage at a node on one phase.
    pub fn node_voltage_pu(&self, node: usize, phase: Phase) -> Option<Complex<T>> {
        let (t, local) = self.view.node_slot(node)?;
        let sol = self.trees[t].as_ref()?;
        if !self.view.trees()[t].phases[local].contains(phase) {
            return None;
        }
        let base = T::of(self.view.network().nodes()[node].nominal_voltage);
        Some(sol.voltages[local][phase.index()].unscale(base))
    }

    pub fn voltage_magnitude_pu(&self, node: usize, phase: Phase) -> Option<f64> {
        self.node_voltage_pu(node, phase).map(|v| v.norm().f64())
    }

    /// Sending-end complex power into a section, kVA, positive away from the source.
    pub fn branch_flow_kva(&self, section: usize, phase: Phase) -> Option<Complex<T>> {
        let (t, local) = self.view.section_slot(section)?;
        let sol = self.trees[t].as_ref()?;
        if !self.view.trees()[t].phases[local].contains(phase) {
            return None;
        }
        let parent = self.view.trees()[t].parent[local];
        let i = phase.index();
        Some((sol.voltages[parent][i] * sol.currents[local][i].conj()).unscale(T::of(1000.0)))
    }

    pub fn branch_current_amps(&self, section: usize, phase: Phase) -> Option<f64> {
        let (t, local) = self.view.section_slot(section)?;
        let sol = self.trees[t].as_ref()?;
        if !self.view.trees()[t].phases[local].contains(phase) {
            return None;
        }
        Some(sol.currents[local][phase.index()].norm().f64())
    }

    /// Real power through a section summed over its phases, kW.
    pub fn section_kw(&self, section: usize) -> Option<f64> {
        let (t, _) = self.view.section_slot(section)?;
        self.trees[t].as_ref()?;
        Some(
            Phase::ALL
                .into_iter()
                .filter_map(|p| self.branch_flow_kva(section, p))
                .map(|s| s.re.f64())
                .sum(),
        )
    }

    /// Total complex power delivered by a source (root load included), kVA.
    pub fn source_kva(&self, source: usize) -> Option<Complex64> {
        let t = self.view.tree_of_source(source)?;
        let sol = self.trees[t].as_ref()?;
        let s: Complex<T> = self.view.trees()[t].phases[0]
            .iter()
            .map(|p| sol.voltages[0][p.index()] * sol.currents[0][p.index()].conj())
            .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b);
        Some(Complex64::new(s.re.f64() / 1000.0, s.im.f64() / 1000.0))
    }

    /// `node,phase,voltage_pu` rows for every solved node.
    pub fn voltages_csv(&self) -> String {
        let mut out = String::from("node,phase,voltage_pu\n");
        for (n, node) in self.view.network().nodes().iter().enumerate() {
            for p in Phase::ALL {
                if let Some(v) = self.voltage_magnitude_pu(n, p) {
                    let _ = writeln!(out, "{},{},{:.6}", node.id, p.letter(), v);
                }
            }
        }
        out
    }

    /// `section,phase,kw,kvar` rows for every solved section.
    pub fn flows_csv(&self) -> String {
        let mut out = String::from("section,phase,kw,kvar\n");
        for (s, section) in self.view.network().sections().iter().enumerate() {
            for p in Phase::ALL {
                if let Some(f) = self.branch_flow_kva(s, p) {
                    let _ = writeln!(
                        out,
                        "{},{},{:.3},{:.3}",
                        section.id,
                        p.letter(),
                        f.re.f64(),
                        f.im.f64()
                    );
                }
            }
        }
        out
    }
}

/// Real power through a source's head section, kW; negative is reverse flow.
pub fn head_flow<T: Scalar>(solution: &PowerFlowSolution<'_, T>, source: usize) -> Result<f64> {
    if !solution.converged() {
        return Err(HcError::NotConverged);
    }
    let network = solution.view().network();
    let head = network.head_section(source);
    solution.section_kw(head).ok_or_else(|| {
        HcError::DeEnergized(network.sections()[head].id.clone())
    })
}

/// Real power through a closed switch's section toward its load side, kW.
pub fn device_flow<T: Scalar>(solution: &PowerFlowSolution<'_, T>, switch: usize) -> Result<f64> {
    if !solution.converged() {
        return Err(HcError::NotConverged);
    }
    let view = solution.view();
    let sw = &view.network().switches()[switch];
    if view.switch_open(switch) {
        return Err(HcError::SwitchOpen(sw.id.clone()));
    }
    let section = view
        .network()
        .section_idx(&sw.section_id)
        .expect("switch sections are validated");
    solution
        .section_kw(section)
        .ok_or_else(|| HcError::DeEnergized(sw.section_id.clone()))
}

#[cfg(test)]
mod tests;
