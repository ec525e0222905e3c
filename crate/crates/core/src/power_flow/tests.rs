use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::network::fixtures::*;
use crate::network::{apply_configuration, Configuration, Network, NetworkParts};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Single-phase chain src -> n1 -> ... with the given section impedances (ohms).
fn chain(z: &[(f64, f64)], phases: &str) -> Network {
    let mut nodes = vec![node("src", phases, 0.0)];
    let mut sections = Vec::new();
    for (i, &(r, x)) in z.iter().enumerate() {
        let from = if i == 0 { "src".to_string() } else { format!("n{i}") };
        let to = format!("n{}", i + 1);
        nodes.push(node(&to, phases, (i + 1) as f64));
        sections.push(section(&format!("s{}", i + 1), &from, &to, phases, r, x));
    }
    Network::new(NetworkParts {
        feeder_ids: vec!["F".into()],
        nodes,
        sections,
        switches: vec![switch("sw2", "s2", true, false, true)]
            .into_iter()
            .filter(|_| z.len() >= 2)
            .collect(),
        sources: vec![source("src", "F", "s1")],
        loads: vec![],
        configurations: vec![],
    })
    .unwrap()
}

fn two_bus_oracle(p: f64, q: f64, r: f64, x: f64, v1: f64) -> f64 {
    let b = 2.0 * (p * r + q * x) - v1 * v1;
    let cc = (p * p + q * q) * (r * r + x * x);
    ((-b + (b * b - 4.0 * cc).sqrt()) / 2.0).sqrt()
}

#[test]
fn zero_load_gives_flat_profile() {
    let net = two_feeder_pair();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let sol = solve(&view, &NodeLoads::zeros(net.nodes().len()), &InjectionSet::new()).unwrap();
    assert!(sol.converged());
    for n in 0..net.nodes().len() {
        for p in Phase::ALL {
            assert!((sol.voltage_magnitude_pu(n, p).unwrap() - 1.0).abs() < 1e-12);
        }
    }
    for s in 0..net.sections().len() {
        if let Some(kw) = sol.section_kw(s) {
            assert_eq!(kw, 0.0);
        }
    }
    assert_eq!(sol.losses_kw(), 0.0);
}

#[test]
fn two_bus_matches_closed_form() {
    // per-phase base 1000 kVA at 7200 V
    let z_base = 7200.0 * 7200.0 / 1.0e6;
    let net = chain(&[(0.01 * z_base, 0.02 * z_base)], "A");
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("n1", c(100.0, 50.0))]).unwrap();
    let sol = solve(&view, &loads, &InjectionSet::new()).unwrap();
    assert!(sol.converged());
    let v2 = sol.voltage_magnitude_pu(1, Phase::A).unwrap();
    let expected = two_bus_oracle(0.10, 0.05, 0.01, 0.02, 1.0);
    assert!((v2 - expected).abs() < 1e-6, "{v2} vs {expected}");
}

#[test]
fn lossless_local_balance_zeroes_head_flow() {
    let net = two_feeder_pair();
    let mut parts = net.parts().clone();
    for s in &mut parts.sections {
        s.impedance = crate::network::Impedance { r: 0.0, x: 0.0 };
    }
    let net = Network::new(parts).unwrap();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("a1", c(100.0, 0.0)), ("a2", c(200.0, 0.0))]).unwrap();
    let inj = InjectionSet::from_ids(&net, [("a1", c(100.0, 0.0)), ("a2", c(200.0, 0.0))]).unwrap();
    let sol = solve(&view, &loads, &inj).unwrap();
    assert!(head_flow(&sol, 0).unwrap().abs() < 1e-9);
}

#[test]
fn head_flow_sign_convention() {
    let net = two_feeder_pair();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("a2", c(300.0, 0.0))]).unwrap();
    let sol = solve(&view, &loads, &InjectionSet::new()).unwrap();
    assert!(head_flow(&sol, 0).unwrap() > 300.0);

    let inj = InjectionSet::from_ids(&net, [("a2", c(400.0, 0.0))]).unwrap();
    let sol = solve(&view, &loads, &inj).unwrap();
    assert!(head_flow(&sol, 0).unwrap() < 0.0);
}

#[test]
fn device_flow_includes_downstream_losses() {
    let (r1, x1, r2, x2) = (0.3, 0.6, 0.5, 0.4);
    let net = chain(&[(r1, x1), (r2, x2)], "A");
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("n2", c(200.0, 0.0))]).unwrap();
    let sol = solve(&view, &loads, &InjectionSet::new()).unwrap();
    // chain reduces to a two-bus case with the summed impedance
    let z_base = 7200.0 * 7200.0 / 1.0e6;
    let v2 = two_bus_oracle(0.2, 0.0, (r1 + r2) / z_base, (x1 + x2) / z_base, 1.0) * 7200.0;
    let current = 200_000.0 / v2;
    let expected = 200.0 + current * current * r2 / 1000.0;
    let got = device_flow(&sol, 0).unwrap();
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
}

#[test]
fn device_flow_lossless_balance_and_zero() {
    let net = chain(&[(0.0, 0.0), (0.0, 0.0)], "ABC");
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("n2", c(200.0, 0.0))]).unwrap();
    let inj = InjectionSet::from_ids(&net, [("n2", c(300.0, 0.0))]).unwrap();
    let sol = solve(&view, &loads, &inj).unwrap();
    assert!((device_flow(&sol, 0).unwrap() + 100.0).abs() < 1e-9);

    let sol = solve(&view, &NodeLoads::zeros(3), &InjectionSet::new()).unwrap();
    assert_eq!(device_flow(&sol, 0).unwrap(), 0.0);
}

#[test]
fn device_flow_through_open_switch_is_an_error() {
    let net = two_feeder_pair();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let sol = solve(&view, &NodeLoads::zeros(net.nodes().len()), &InjectionSet::new()).unwrap();
    let tie = net.switch_idx("t").unwrap();
    assert!(matches!(device_flow(&sol, tie), Err(HcError::SwitchOpen(_))));
}

#[test]
fn injection_at_dead_node_is_rejected() {
    let net = two_feeder_pair();
    let mut cfg = Configuration::base();
    cfg.id = "o".into();
    cfg.open_switches.insert("m1".into());
    let view = apply_configuration(&net, &cfg).unwrap();
    let inj = InjectionSet::from_ids(&net, [("a2", c(10.0, 0.0))]).unwrap();
    let err = solve(&view, &NodeLoads::zeros(net.nodes().len()), &inj).unwrap_err();
    assert!(matches!(err, HcError::DeEnergized(id) if id == "a2"));
}

#[test]
fn divergent_case_reports_unconverged() {
    let net = chain(&[(5.0, 10.0)], "A");
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("n1", c(20_000.0, 0.0))]).unwrap();
    let sol = solve(&view, &loads, &InjectionSet::new()).unwrap();
    assert!(!sol.converged());
    assert!(matches!(head_flow(&sol, 0), Err(HcError::NotConverged)));
}

#[test]
fn f32_solver_tracks_f64() {
    let net = two_feeder_pair();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::from_ids(&net, [("a2", c(900.0, 300.0)), ("b2", c(400.0, 100.0))]).unwrap();
    let single = PowerFlow::<f32>::new(&view, SolverOptions::default())
        .solve(&loads, &InjectionSet::new())
        .unwrap();
    let double = solve(&view, &loads, &InjectionSet::new()).unwrap();
    assert!(single.converged());
    for n in 0..net.nodes().len() {
        let a = single.voltage_magnitude_pu(n, Phase::B).unwrap();
        let b = double.voltage_magnitude_pu(n, Phase::B).unwrap();
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn volt_var_pulls_voltage_toward_deadband() {
    let net = chain(&[(0.8, 1.6), (0.8, 1.6)], "ABC");
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let loads = NodeLoads::zeros(3);
    let mut inj = InjectionSet::from_ids(&net, [("n2", c(3000.0, 0.0))]).unwrap();
    let plain = solve(&view, &loads, &inj).unwrap();
    inj.volt_var_enabled = true;
    let vv = solve(&view, &loads, &inj).unwrap();
    assert!(plain.converged() && vv.converged());
    let v_plain = plain.voltage_magnitude_pu(2, Phase::A).unwrap();
    let v_vv = vv.voltage_magnitude_pu(2, Phase::A).unwrap();
    assert!(v_plain > 1.02, "{v_plain}");
    assert!(v_vv < v_plain);
    // absorbed vars show up as reactive flow toward the DER
    assert!(vv.branch_flow_kva(1, Phase::A).unwrap().im > 0.0);
}

#[test]
fn single_tree_solve_matches_full_solve() {
    let net = two_feeder_pair();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let pf = PowerFlow::<f64>::new(&view, SolverOptions::default());
    let loads = NodeLoads::from_ids(&net, [("a2", c(500.0, 100.0)), ("b1", c(80.0, 0.0))]).unwrap();
    let inj = InjectionSet::from_ids(&net, [("a1", c(250.0, 0.0))]).unwrap();
    let full = pf.solve(&loads, &inj).unwrap();
    let warm = full.tree_solution(0).cloned();
    let one = pf.solve_tree(0, &loads, &inj, warm.as_ref()).unwrap();
    let a2 = net.node_idx("a2").unwrap();
    let d = one.voltage_magnitude_pu(a2, Phase::C).unwrap() - full.voltage_magnitude_pu(a2, Phase::C).unwrap();
    assert!(d.abs() < 1e-9);
    assert!(one.voltage_magnitude_pu(net.node_idx("b1").unwrap(), Phase::A).is_none());
    let other_tree = InjectionSet::from_ids(&net, [("b1", c(1.0, 0.0))]).unwrap();
    assert!(pf.solve_tree(0, &loads, &other_tree, None).is_err());
}

#[test]
fn csv_rows_cover_every_phase() {
    let net = two_feeder_pair();
    let view = apply_configuration(&net, &Configuration::base()).unwrap();
    let sol = solve(&view, &NodeLoads::zeros(net.nodes().len()), &InjectionSet::new()).unwrap();
    assert_eq!(sol.voltages_csv().lines().count(), 1 + 6 * 3);
    assert_eq!(sol.flows_csv().lines().count(), 1 + 4 * 3);
    assert!(sol.voltages_csv().starts_with("node,phase,voltage_pu\n"));
    assert!(sol.flows_csv().starts_with("section,phase,kw,kvar\n"));
}

/// Random radial tree: each node i >= 1 hangs off a random earlier node.
fn random_tree(parents: &[usize], z: &[(f64, f64)], phases: &[u8]) -> Network {
    let mut nodes = vec![node("n0", "ABC", 0.0)];
    let mut sections = Vec::new();
    let mut node_phases = vec![PhaseSet::ABC];
    for (i, &p) in parents.iter().enumerate() {
        let idx = i + 1;
        let parent = p % idx;
        let ph = match phases[i] % 4 {
            0 => node_phases[parent],
            k => {
                let first = node_phases[parent].iter().next().unwrap();
                if k == 1 {
                    PhaseSet::single(first)
                } else {
                    node_phases[parent]
                }
            }
        };
        node_phases.push(ph);
        nodes.push(node(&format!("n{idx}"), &ph.to_string(), 0.0));
        sections.push(section(
            &format!("s{idx}"),
            &format!("n{parent}"),
            &format!("n{idx}"),
            &ph.to_string(),
            z[i].0,
            z[i].1,
        ));
    }
    let mut parts = NetworkParts {
        feeder_ids: vec!["F".into()],
        nodes,
        sections,
        switches: vec![],
        sources: vec![source("n0", "F", "s1")],
        loads: vec![],
        configurations: vec![],
    };
    // the first section must leave the source
    parts.sections[0].from_node = "n0".into();
    Network::new(parts).unwrap()
}

type TreeParts = (Vec<usize>, Vec<(f64, f64)>, Vec<u8>, Vec<f64>);

fn tree_strategy() -> impl Strategy<Value = TreeParts> {
    (2usize..10).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..100, n),
            proptest::collection::vec((0.05f64..1.0, 0.05f64..1.0), n),
            proptest::collection::vec(0u8..4, n),
            proptest::collection::vec(0.0f64..300.0, n + 1),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_is_conserved((parents, z, phases, kw) in tree_strategy(), inj_kw in 0.0f64..600.0) {
        let net = random_tree(&parents, &z, &phases);
        let view = apply_configuration(&net, &Configuration::base()).unwrap();
        let n = net.nodes().len();
        let loads = NodeLoads::from_vec((0..n).map(|i| c(kw[i], kw[i] * 0.3)).collect());
        let inj = InjectionSet::single(n - 1, c(inj_kw, 0.0));
        let sol = solve(&view, &loads, &inj).unwrap();
        prop_assume!(sol.converged());
        let source = sol.source_kva(0).unwrap().re;
        let served: f64 = (0..n).filter(|&i| !view.trees()[0].phases[view.node_slot(i).unwrap().1].is_empty()).map(|i| kw[i]).sum();
        let balance = served + sol.losses_kw() - inj_kw;
        prop_assert!((source - balance).abs() < 1e-3, "{} vs {}", source, balance);
    }

    #[test]
    fn voltage_never_rises_downstream_without_der((parents, z, phases, kw) in tree_strategy()) {
        let net = random_tree(&parents, &z, &phases);
        let view = apply_configuration(&net, &Configuration::base()).unwrap();
        let n = net.nodes().len();
        let loads = NodeLoads::from_vec((0..n).map(|i| c(kw[i], 0.0)).collect());
        let sol = solve(&view, &loads, &InjectionSet::new()).unwrap();
        prop_assert!(sol.converged());
        let tree = &view.trees()[0];
        for local in 1..tree.len() {
            let parent = tree.nodes[tree.parent[local]];
            for p in tree.phases[local].iter() {
                let child_v = sol.voltage_magnitude_pu(tree.nodes[local], p).unwrap();
                let parent_v = sol.voltage_magnitude_pu(parent, p).unwrap();
                prop_assert!(child_v <= parent_v + 1e-9);
            }
        }
    }

    #[test]
    fn impedance_scaling_with_no_load_is_flat((parents, z, phases, _kw) in tree_strategy()) {
        let net = random_tree(&parents, &z, &phases);
        let doubled: Vec<(f64, f64)> = z.iter().map(|&(r, x)| (2.0 * r, 2.0 * x)).collect();
        let net2 = random_tree(&parents, &doubled, &phases);
        let view = apply_configuration(&net, &Configuration::base()).unwrap();
        let view2 = apply_configuration(&net2, &Configuration::base()).unwrap();
        let n = net.nodes().len();
        let a = solve(&view, &NodeLoads::zeros(n), &InjectionSet::new()).unwrap();
        let b = solve(&view2, &NodeLoads::zeros(n), &InjectionSet::new()).unwrap();
        for i in 0..n {
            for p in Phase::ALL {
                prop_assert_eq!(a.voltage_magnitude_pu(i, p), b.voltage_magnitude_pu(i, p));
            }
        }
    }
}
