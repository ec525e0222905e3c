//! Builders and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hc_core::criteria::{evaluate, first_failure, CriteriaRegime, Criterion};
use hc_core::hosting_capacity::HcKind;
use hc_core::network::{
    apply_configuration, generate_synthetic_feeder, Configuration, FeederSpec, Impedance, LoadPoint, Network,
    NetworkParts, Node, Phase, PhaseSet, Section, SourceBus, Switch,
};
use hc_core::power_flow::{solve, InjectionSet, NodeLoads};

pub const V_NOM: f64 = 7200.0;

pub fn node(id: &str, phases: PhaseSet, distance: f64) -> Node {
    Node {
        id: id.into(),
        phases,
        distance_from_source: distance,
        nominal_voltage: V_NOM,
    }
}

pub fn section(id: &str, from: &str, to: &str, phases: PhaseSet, r: f64, x: f64, rating: f64) -> Section {
    Section {
        id: id.into(),
        from_node: from.into(),
        to_node: to.into(),
        phases,
        impedance: Impedance { r, x },
        length: 0.5,
        thermal_rating: rating,
    }
}

pub fn switch(id: &str, section: &str, scada: bool, open: bool) -> Switch {
    Switch {
        id: id.into(),
        section_id: section.into(),
        scada_controlled: scada,
        normally_open: open,
        switching_block_boundary: true,
    }
}

pub fn source(node: &str, feeder: &str, head: &str, setpoint: f64) -> SourceBus {
    SourceBus {
        node_id: node.into(),
        voltage_setpoint: setpoint,
        feeder_id: feeder.into(),
        head_section_id: head.into(),
    }
}

pub fn load(node: &str, kw: f64, pf: f64) -> LoadPoint {
    LoadPoint {
        node_id: node.into(),
        peak_kw: kw,
        power_factor: pf,
        profile_id: "residential".into(),
        customer_count: 1,
    }
}

pub fn abc() -> PhaseSet {
    "ABC".parse().unwrap()
}

/// Two-bus single-phase feeder with the given impedance in ohms.
pub fn two_bus(r: f64, x: f64, kw: f64, pf: f64) -> Network {
    let a: PhaseSet = "A".parse().unwrap();
    Network::new(NetworkParts {
        feeder_ids: vec!["F".into()],
        nodes: vec![node("src", a, 0.0), node("n1", a, 1.0)],
        sections: vec![section("s1", "src", "n1", a, r, x, 400.0)],
        switches: vec![],
        sources: vec![source("src", "F", "s1", 1.0)],
        loads: vec![load("n1", kw, pf)],
        configurations: vec![],
    })
    .unwrap()
}

/// |V2| in pu at a constant-power load `p + jq` (pu) behind `r + jx` (pu).
pub fn two_bus_closed_form(p: f64, q: f64, r: f64, x: f64, v1: f64) -> f64 {
    let b = 2.0 * (p * r + q * x) - v1 * v1;
    let c = (p * p + q * q) * (r * r + x * x);
    ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

/// Random radial feeder of `n` nodes with mixed phasing and loads.
pub fn random_tree(seed: u64, n: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases = vec![abc()];
    let mut nodes = vec![node("src", abc(), 0.0)];
    let mut sections = Vec::new();
    let mut loads = Vec::new();
    for i in 1..n {
        let p = rng.gen_range(0..i);
        let parent_ph = phases[p];
        let ph = if parent_ph.len() > 1 && rng.gen_bool(0.4) {
            let options: Vec<Phase> = parent_ph.iter().collect();
            PhaseSet::single(options[rng.gen_range(0..options.len())])
        } else {
            parent_ph
        };
        phases.push(ph);
        let id = format!("n{i}");
        let from = if p == 0 { "src".to_string() } else { format!("n{p}") };
        nodes.push(node(&id, ph, i as f64));
        sections.push(section(
            &format!("s{i}"),
            &from,
            &id,
            ph,
            rng.gen_range(0.05..1.5),
            rng.gen_range(0.05..1.5),
            400.0,
        ));
        if rng.gen_bool(0.8) {
            loads.push(load(&id, rng.gen_range(10.0..250.0), rng.gen_range(0.85..1.0)));
        }
    }
    Network::new(NetworkParts {
        feeder_ids: vec!["F".into()],
        nodes,
        sections,
        switches: vec![],
        sources: vec![source("src", "F", "s1", rng.gen_range(1.0..1.05))],
        loads,
        configurations: vec![],
    })
    .unwrap()
}

/// Per-phase Newton-Raphson on the bus admittance matrix in rectangular
/// coordinates with a finite-difference Jacobian. Returns |V| in pu indexed
/// by `[node][phase]` (NaN where the phase is absent).
pub fn newton_raphson(network: &Network, loads: &NodeLoads) -> Vec<[f64; 3]> {
    let n = network.nodes().len();
    let mut out = vec![[f64::NAN; 3]; n];
    let src = network.source_node(0);
    let setpoint = network.sources()[0].voltage_setpoint;
    for phase in Phase::ALL {
        let members: Vec<usize> = (0..n).filter(|&i| network.nodes()[i].phases.contains(phase)).collect();
        let pos = |node: usize| members.iter().position(|&m| m == node);
        let m = members.len();
        let mut y = vec![vec![Complex64::default(); m]; m];
        for (si, s) in network.sections().iter().enumerate() {
            if !s.phases.contains(phase) {
                continue;
            }
            let (a, b) = network.section_ends(si);
            let (a, b) = (pos(a).unwrap(), pos(b).unwrap());
            let yy = Complex64::new(1.0, 0.0) / Complex64::new(s.impedance.r, s.impedance.x);
            y[a][a] += yy;
            y[b][b] += yy;
            y[a][b] -= yy;
            y[b][a] -= yy;
        }
        // constant-power demand per phase, VA
        let demand: Vec<Complex64> = members
            .iter()
            .map(|&i| {
                let k = network.nodes()[i].phases.len() as f64;
                loads.get(i) * 1000.0 / k
            })
            .collect();
        let s_idx = pos(src).unwrap();
        let vs = Complex64::new(setpoint * network.nodes()[src].nominal_voltage, 0.0);
        let unknown: Vec<usize> = (0..m).filter(|&k| k != s_idx).collect();
        let assemble = |x: &DVector<f64>| {
            let mut v = vec![vs; m];
            for (u, &k) in unknown.iter().enumerate() {
                v[k] = Complex64::new(x[2 * u], x[2 * u + 1]);
            }
            v
        };
        let mismatch = |x: &DVector<f64>| {
            let v = assemble(x);
            let mut f = DVector::zeros(2 * unknown.len());
            for (u, &k) in unknown.iter().enumerate() {
                let i: Complex64 = (0..m).map(|j| y[k][j] * v[j]).sum();
                let s = v[k] * i.conj() + demand[k];
                f[2 * u] = s.re;
                f[2 * u + 1] = s.im;
            }
            f
        };
        let mut x = DVector::zeros(2 * unknown.len());
        for u in 0..unknown.len() {
            x[2 * u] = vs.re;
        }
        for _ in 0..(if unknown.is_empty() { 0 } else { 50 }) {
            let f = mismatch(&x);
            let dim = x.len();
            let mut jac = DMatrix::zeros(dim, dim);
            for c in 0..dim {
                let h = 1e-4;
                let mut xp = x.clone();
                xp[c] += h;
                let mut xm = x.clone();
                xm[c] -= h;
                let col = (mismatch(&xp) - mismatch(&xm)) / (2.0 * h);
                jac.set_column(c, &col);
            }
            let dx = jac.lu().solve(&(-f)).expect("nonsingular Jacobian");
            x += &dx;
            if dx.amax() < 1e-9 * V_NOM {
                break;
            }
        }
        let v = assemble(&x);
        for (k, &node) in members.iter().enumerate() {
            out[node][phase.index()] = v[k].norm() / network.nodes()[node].nominal_voltage;
        }
    }
    out
}

/// Small seeded feeder from the synthetic generator.
pub fn small_feeder(seed: u64, sections: usize) -> Network {
    generate_synthetic_feeder(&FeederSpec {
        feeder_id: format!("T{seed}"),
        section_count: sections,
        peak_mw: 1.2 + 0.3 * seed as f64,
        min_mw: 0.3,
        conductor_miles: 4.0 + 5.0 * seed as f64,
        customer_count: 30 + 5 * seed as u32,
        seed,
        switching_blocks: 2,
        ..FeederSpec::default()
    })
    .unwrap()
}

/// Loads scaled from peak.
pub fn scaled_peak(network: &Network, factor: f64) -> NodeLoads {
    NodeLoads::from_vec(NodeLoads::peak(network).as_slice().iter().map(|s| s * factor).collect())
}

/// 1 kW sweep from zero using full-network solves: the last passing kW
/// before the first failure, with that failure's criterion, or `cap`.
pub fn brute_force_hc(
    network: &Network,
    regime: &CriteriaRegime,
    loads: &NodeLoads,
    section_id: &str,
    kind: HcKind,
    cap: u64,
) -> (u64, Option<Criterion>) {
    let view = apply_configuration(network, &Configuration::base()).unwrap();
    let s = network.section_idx(section_id).unwrap();
    let (_, node) = network.section_ends(s);
    let base = solve(&view, loads, &InjectionSet::new()).unwrap();
    for x in 0..=cap {
        let sign = if kind == HcKind::Generation { 1.0 } else { -1.0 };
        let inj = if x == 0 {
            InjectionSet::new()
        } else {
            InjectionSet::single(node, Complex64::new(sign * x as f64, 0.0))
        };
        let with = solve(&view, loads, &inj).unwrap();
        let without = if kind == HcKind::Generation { &base } else { &with };
        if let Some(c) = first_failure(&evaluate(&with, without, regime)) {
            return (x.saturating_sub(1), Some(c));
        }
    }
    (cap, None)
}
