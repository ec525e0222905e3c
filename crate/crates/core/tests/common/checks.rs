//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a short detail line on success.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use super::*;
use hc_core::criteria::CriteriaRegime;
use hc_core::hosting_capacity::{DayType, HcEngine, HcKind, IntervalIndex, IntervalKey, Limit, Stat, DAYS_IN_MONTH};
use hc_core::network::{apply_configuration, Configuration, Phase};
use hc_core::power_flow::{solve, InjectionSet, NodeLoads};
use hc_core::reconfiguration::expected_outcome;
use hc_core::scenarios::{
    apply_penetration, ev_charger_mix, ev_profile, pv_profile, EvFleetSpec, EvTemplates, PenetrationScenario,
    ProfileLibrary, PvRatings, PvSiteClass, ScenarioLibraries,
};
use hc_core::study::{run_study, StudyConfig};

pub type Check = Result<String, String>;

/// Two-bus closed form over an impedance/load grid, then random trees
/// against Newton-Raphson.
pub fn check_power_flow() -> Check {
    let z_base = V_NOM * V_NOM / 1.0e6;
    let mut worst_two_bus = 0.0f64;
    for (r, x) in [(0.01, 0.02), (0.03, 0.01), (0.005, 0.05)] {
        for (kw, pf) in [(50.0, 1.0), (150.0, 0.9), (300.0, 0.95)] {
            let net = two_bus(r * z_base, x * z_base, kw, pf);
            let view = apply_configuration(&net, &Configuration::base()).map_err(|e| e.to_string())?;
            let loads = NodeLoads::peak(&net);
            let sol = solve(&view, &loads, &InjectionSet::new()).map_err(|e| e.to_string())?;
            let s = loads.get(1);
            let want = two_bus_closed_form(s.re / 1000.0, s.im / 1000.0, r, x, 1.0);
            let got = sol.voltage_magnitude_pu(1, Phase::A).unwrap();
            worst_two_bus = worst_two_bus.max((got - want).abs());
        }
    }
    if worst_two_bus >= 1e-6 {
        return Err(format!("two-bus error {worst_two_bus:.2e} pu"));
    }
    let mut worst_nr = 0.0f64;
    for seed in 0..12 {
        let net = random_tree(seed, 3 + (seed as usize % 8));
        let view = apply_configuration(&net, &Configuration::base()).map_err(|e| e.to_string())?;
        let loads = NodeLoads::peak(&net);
        let sol = solve(&view, &loads, &InjectionSet::new()).map_err(|e| e.to_string())?;
        let nr = newton_raphson(&net, &loads);
        for (i, row) in nr.iter().enumerate() {
            for p in net.nodes()[i].phases.iter() {
                worst_nr = worst_nr.max((sol.voltage_magnitude_pu(i, p).unwrap() - row[p.index()]).abs());
            }
        }
    }
    if worst_nr >= 1e-5 {
        return Err(format!("tree error vs Newton-Raphson {worst_nr:.2e} pu"));
    }
    Ok(format!("two-bus max err {worst_two_bus:.1e} pu, 12 trees max err {worst_nr:.1e} pu"))
}

/// Search results equal a 1 kW sweep on every section of seeded feeders.
pub fn check_feeders(seeds: &[u64]) -> Check {
    let mut compared = 0;
    let mut limits = BTreeMap::new();
    for &seed in seeds {
        let net = small_feeder(seed, 16 + 2 * seed as usize);
        if net.sections().len() > 30 {
            return Err(format!("seed {seed}: {} sections", net.sections().len()));
        }
        let view = apply_configuration(&net, &Configuration::base()).unwrap();
        for regime in [CriteriaRegime::classical(), CriteriaRegime::opflex()] {
            let engine = HcEngine::<f64>::new(&view, &regime).unwrap();
            for (kind, loads) in [
                (HcKind::Generation, scaled_peak(&net, 0.3)),
                (HcKind::Load, scaled_peak(&net, 1.0)),
            ] {
                let prep = engine.prepare(IntervalKey::stat(Stat::P10, 12), loads.clone()).unwrap();
                for s in engine.energized_sections() {
                    let id = &net.sections()[s].id;
                    let got = engine.search(&prep, s, kind).unwrap();
                    let cap = engine.cap_kw(s).unwrap() as u64;
                    let (kw, crit) = brute_force_hc(&net, &regime, &loads, id, kind, cap);
                    let want = match crit {
                        Some(c) => Limit::Criterion(c),
                        None => Limit::Cap,
                    };
                    if got.kw != kw as f64 || got.limit != want {
                        return Err(format!(
                            "seed {seed} {} {kind} {id}: search {} ({}) vs sweep {kw} ({want})",
                            regime.name, got.kw, got.limit
                        ));
                    }
                    *limits.entry(want.to_string()).or_insert(0) += 1;
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} section/kind/regime searches exact; limits {limits:?}"))
}

/// Small generated pair used by the bundle tests.
pub fn small_pair() -> serde_json::Value {
    json!({"generate": {"feeders": [
        {"feeder_id": "A", "section_count": 40, "peak_mw": 1.6, "min_mw": 0.4, "conductor_miles": 6.0,
         "customer_count": 80, "seed": 11},
        {"feeder_id": "B", "section_count": 30, "peak_mw": 1.2, "min_mw": 0.2, "conductor_miles": 5.0,
         "customer_count": 70, "seed": 12}
    ]}})
}

/// Study config over `network` with `extra` fields merged in.
pub fn study_config(dir: &Path, network: serde_json::Value, extra: serde_json::Value) -> StudyConfig {
    let mut v = json!({"network": network, "output_dir": "out", "seed": 4});
    for (k, val) in extra.as_object().unwrap() {
        v[k] = val.clone();
    }
    StudyConfig::from_json(&serde_json::to_string_pretty(&v).unwrap(), dir).unwrap()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Hours per year one grid entry stands for, from the bare calendar.
pub fn weight_hours(month: u8, day_type: &str) -> f64 {
    let days = DAYS_IN_MONTH[month as usize - 1] as f64;
    if day_type == "WD" {
        days * 5.0 / 7.0
    } else {
        days * 2.0 / 7.0
    }
}

/// Flat equals the profile minimum and lost opportunity matches a
/// recomputation from `results.csv`, for a profile-mode study over
/// `sections` of `network`.
pub fn check_profile_identity(dir: &Path, network: serde_json::Value, sections: &[&str]) -> Check {
    let cfg = study_config(
        dir,
        network,
        json!({
            "mode": "profile",
            "regimes": ["classical", "opflex"],
            "configurations": "base",
            "scenarios": [{"pv_level": 0.2, "ev_level": 0.2}],
            "sections": sections
        }),
    );
    run_study(&cfg).map_err(|e| e.to_string())?;
    let out = dir.join("out");
    type Key = (String, String, String);
    let mut profiles: BTreeMap<Key, Vec<(u8, String, f64)>> = BTreeMap::new();
    for line in read(&out.join("results.csv")).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parts: Vec<&str> = f[5].split('/').collect();
        profiles
            .entry((f[0].into(), f[1].into(), f[2].into()))
            .or_default()
            .push((parts[0].parse().unwrap(), parts[1].to_string(), f[6].parse().unwrap()));
    }
    let mut checked = 0;
    let mut total_lost = 0.0;
    for line in read(&out.join("flat_summary.csv")).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let key = (f[0].to_string(), f[1].to_string(), f[2].to_string());
        let (flat, lost): (f64, f64) = (f[5].parse().unwrap(), f[8].parse().unwrap());
        let p = &profiles[&key];
        if p.len() != 576 {
            return Err(format!("{key:?}: {} intervals", p.len()));
        }
        let min = p.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
        if min != flat {
            return Err(format!("{key:?}: flat {flat} vs min {min}"));
        }
        let recomputed: f64 = p.iter().map(|(m, d, kw)| (kw - min) * weight_hours(*m, d)).sum();
        if lost < 0.0 || (recomputed - lost).abs() > 0.1 {
            return Err(format!("{key:?}: lost {lost} vs {recomputed}"));
        }
        total_lost += lost;
        checked += 1;
    }
    Ok(format!("{checked} section profiles, flat = min exactly, lost kWh {total_lost:.0} recomputed within 0.1"))
}

pub const EXPECTED_MIX: [u32; 6] = [331, 132, 30, 79, 82, 2];
pub const MONTHLY_MILES: [f64; 12] = [24.0, 24.0, 26.0, 26.0, 26.0, 28.0, 28.0, 28.0, 26.0, 26.0, 26.0, 24.0];

/// Charger mix at the reference fleet and the daily energy identity, both
/// for the bare fleet model and for a scenario placed on `network`.
pub fn check_ev_anchors(network: &hc_core::network::Network) -> Check {
    let fleet = EvFleetSpec {
        ev_count: 1000,
        daily_miles_by_month: [45.0; 12],
        ..EvFleetSpec::default()
    };
    let mix: Vec<u32> = ev_charger_mix(&fleet).values().copied().collect();
    if mix != EXPECTED_MIX {
        return Err(format!("mix {mix:?}"));
    }
    let templates = EvTemplates::builtin();
    let mut worst = 0.0f64;
    for count in [1000, 250] {
        let fleet = EvFleetSpec {
            ev_count: count,
            daily_miles_by_month: MONTHLY_MILES,
            ..EvFleetSpec::default()
        };
        for m in 1..=12u8 {
            let want = count as f64 * MONTHLY_MILES[m as usize - 1] * 0.30;
            for d in [DayType::Weekday, DayType::Weekend] {
                let got: f64 = ev_profile(&fleet, &templates, m, d).map_err(|e| e.to_string())?.iter().sum();
                worst = worst.max((got - want).abs() / want);
            }
        }
    }
    let libs = ScenarioLibraries::default();
    let loads = apply_penetration(network, &PenetrationScenario::new(0.0, 0.4, 7), &libs).map_err(|e| e.to_string())?;
    let n = loads.ev_count() as f64;
    if n == 0.0 {
        return Err("no EVs placed at 40%".into());
    }
    for m in 1..=12u8 {
        let want = n * MONTHLY_MILES[m as usize - 1] * 0.30;
        for d in [DayType::Weekday, DayType::Weekend] {
            let got: f64 = (0..24).map(|h| loads.ev_kw(IntervalIndex::new(m, d, h).unwrap())).sum();
            worst = worst.max((got - want).abs() / want);
        }
    }
    if worst > 0.01 {
        return Err(format!("daily energy off by {:.2}%", worst * 100.0));
    }
    Ok(format!("mix {mix:?}; daily energy max rel err {worst:.1e} over 12 months x 2 day types ({n} EVs placed)"))
}

pub fn check_pv_anchors() -> Check {
    let lib = ProfileLibrary::builtin_pv();
    let r = PvRatings::default();
    let max = |class| -> Result<f64, String> {
        let p = pv_profile(&lib, &r, class, 1).map_err(|e| e.to_string())?;
        Ok(p.iter().copied().fold(0.0, f64::max))
    };
    let (com, res) = (max(PvSiteClass::Commercial)?, max(PvSiteClass::Residential)?);
    if (com - 30.0).abs() / 30.0 > 0.02 || (res - 2.5).abs() / 2.5 > 0.02 {
        return Err(format!("January maxima {com} / {res} kW"));
    }
    Ok(format!("January maxima {com:.3} / {res:.3} kW"))
}

/// The two-configuration example worked by hand.
pub fn check_expected_outcome() -> Check {
    let pairs = [(0.9, Some(1000.0)), (0.1, Some(0.0))];
    let a = expected_outcome(&pairs, 0.05).map_err(|e| e.to_string())?;
    let b = expected_outcome(&pairs, 0.2).map_err(|e| e.to_string())?;
    let got = (a.expectation_kw, a.chance_constrained_kw, b.chance_constrained_kw);
    if got != (900.0, 0.0, 1000.0) {
        return Err(format!("{got:?}"));
    }
    if expected_outcome(&[(0.9, Some(1.0)), (0.2, Some(1.0))], 0.05).is_ok() {
        return Err("probability sum 1.1 accepted".into());
    }
    Ok(format!("expectation {}, chance-constrained {} (eps 0.05) / {} (eps 0.2)", got.0, got.1, got.2))
}
