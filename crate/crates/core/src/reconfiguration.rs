//! Transfer analysis over switching configurations.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::CriteriaRegime;
use crate::error::{HcError, Result};
use crate::hosting_capacity::{
    HcEngine, HcEntry, HcKind, HcOptions, HcResult, IntervalKey, Limit, LoadModel, Stat,
};
use crate::network::{
    apply_configuration, validate_radiality, Configuration, Network, PhaseClass,
};

/// Config id used for rows aggregated over configurations.
pub const MIN_OVER_CONFIGS: &str = "min";

/// Default probability of each transfer configuration.
pub const DEFAULT_TRANSFER_PROBABILITY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Base first, then transfers in tie / boundary order.
    pub configurations: Vec<Configuration>,
    /// Candidates dropped because they loop or leave base-served nodes dead.
    pub rejected_non_radial: usize,
}

/// Base plus one close-tie / open-boundary configuration for every normally
/// open tie and every closed block-boundary switch between that tie and a
/// source. Probabilities follow [`assign_probabilities`] with the default.
pub fn enumerate_configurations(network: &Network) -> Result<Enumeration> {
    let base = apply_configuration(network, &Configuration::base())?;
    let ties: Vec<usize> = network
        .switches()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.normally_open)
        .map(|(i, _)| i)
        .collect();
    let mut configurations = vec![Configuration::base()];
    let mut seen = BTreeSet::new();
    let mut rejected = 0;
    for &t in &ties {
        let tie = &network.switches()[t];
        let sec = network.section_idx(&tie.section_id).expect("validated");
        let (a, b) = network.section_ends(sec);
        let mut boundaries = Vec::new();
        for end in [a, b] {
            for path_sec in base.upstream_path(end) {
                let ps = network.section_idx(&path_sec.id).expect("validated");
                for &w in network.switches_on(ps) {
                    let sw = &network.switches()[w];
                    if sw.switching_block_boundary && !sw.normally_open && !boundaries.contains(&w) {
                        boundaries.push(w);
                    }
                }
            }
        }
        for w in boundaries {
            let boundary = &network.switches()[w];
            let key = (tie.id.clone(), boundary.id.clone());
            if !seen.insert(key) {
                continue;
            }
            let id = if ties.len() == 1 {
                format!("xfer-{}", boundary.id)
            } else {
                format!("xfer-{}-{}", tie.id, boundary.id)
            };
            let cfg = Configuration {
                id,
                open_switches: [boundary.id.clone()].into(),
                closed_switches: [tie.id.clone()].into(),
                probability: 0.0,
            };
            let report = validate_radiality(network, &cfg)?;
            // a transfer must pick up the whole block it cuts off
            let restores = report.radial
                && apply_configuration(network, &cfg)?
                    .de_energized_nodes()
                    .all(|n| !base.is_energized(n));
            if restores {
                configurations.push(cfg);
            } else {
                rejected += 1;
            }
        }
    }
    assign_probabilities(&mut configurations, DEFAULT_TRANSFER_PROBABILITY)?;
    Ok(Enumeration {
        configurations,
        rejected_non_radial: rejected,
    })
}

/// Gives every non-base configuration `transfer_p` and the base the rest.
pub fn assign_probabilities(configs: &mut [Configuration], transfer_p: f64) -> Result<()> {
    let transfers = configs.iter().filter(|c| !c.is_base()).count();
    let base_p = 1.0 - transfer_p * transfers as f64;
    if !(0.0..=1.0).contains(&transfer_p) || base_p < 0.0 {
        return Err(HcError::InvalidArgument(format!(
            "transfer probability {transfer_p} leaves base probability {base_p}"
        )));
    }
    for c in configs {
        c.probability = if c.is_base() { base_p } else { transfer_p };
    }
    Ok(())
}

pub fn check_probabilities(configs: &[Configuration]) -> Result<()> {
    let sum: f64 = configs.iter().map(|c| c.probability).sum();
    if (sum - 1.0).abs() > 1e-9 || configs.iter().any(|c| c.probability < 0.0) {
        return Err(HcError::ProbabilitySum(sum));
    }
    Ok(())
}

/// Per-section results under one configuration; de-energized sections are absent.
#[derive(Debug, Clone)]
pub struct ConfigResults {
    pub config: Configuration,
    pub results: Vec<HcResult>,
}

impl ConfigResults {
    pub fn get(&self, section_id: &str) -> Option<&HcResult> {
        self.results.iter().find(|r| r.section_id == section_id)
    }
}

/// HC of `sections` at `keys` under each configuration.
#[allow(clippy::too_many_arguments)]
pub fn hc_by_configuration(
    network: &Network,
    configs: &[Configuration],
    regime: &CriteriaRegime,
    model: &dyn LoadModel,
    kind: HcKind,
    keys: &[IntervalKey],
    sections: &[usize],
    options: &HcOptions,
) -> Result<Vec<ConfigResults>> {
    configs
        .par_iter()
        .map(|cfg| {
            let view = apply_configuration(network, cfg)?;
            let engine = HcEngine::<f64>::with_options(&view, regime, options.clone())?;
            let live: Vec<usize> = sections
                .iter()
                .copied()
                .filter(|&s| view.section_energized(s))
                .collect();
            let results = engine.sweep(&live, model, kind, keys)?;
            Ok(ConfigResults {
                config: cfg.clone(),
                results,
            })
        })
        .collect()
}

/// Per section and key, the minimum HC over configurations that energize the
/// section. Entries record the configuration that set the minimum; a section
/// dead everywhere gets 0 kW with [`Limit::DeEnergized`].
pub fn aggregate_transfer(per_config: &[ConfigResults], section_ids: &[String], keys: &[IntervalKey]) -> Vec<HcResult> {
    let Some(first) = per_config.first() else {
        return Vec::new();
    };
    let (kind, regime) = first
        .results
        .first()
        .map(|r| (r.kind, r.regime.clone()))
        .unwrap_or((HcKind::Generation, String::new()));
    let scenario = first.results.first().map(|r| r.scenario.clone()).unwrap_or_default();
    let lookup: Vec<BTreeMap<&str, &HcResult>> = per_config
        .iter()
        .map(|c| c.results.iter().map(|r| (r.section_id.as_str(), r)).collect())
        .collect();
    section_ids
        .iter()
        .map(|sid| {
            let mut profile = BTreeMap::new();
            for key in keys {
                let mut best: Option<HcEntry> = None;
                for (ci, c) in per_config.iter().enumerate() {
                    let Some(e) = lookup[ci].get(sid.as_str()).and_then(|r| r.profile.get(key)) else {
                        continue;
                    };
                    if best.as_ref().is_none_or(|b| e.kw < b.kw) {
                        let mut e = e.clone();
                        e.config = Some(c.config.id.clone());
                        best = Some(e);
                    }
                }
                let entry = best.unwrap_or(HcEntry {
                    kw: 0.0,
                    limit: Limit::DeEnergized,
                    config: None,
                    linear_fallback: false,
                });
                profile.insert(*key, entry);
            }
            HcResult::from_profile(sid.clone(), kind, regime.clone(), MIN_OVER_CONFIGS, scenario.clone(), profile)
        })
        .collect()
}

/// Transfer-aware HC of one section over the full grid.
pub fn transfer_hc(
    network: &Network,
    section_id: &str,
    regime: &CriteriaRegime,
    model: &dyn LoadModel,
    configs: &[Configuration],
    kind: HcKind,
) -> Result<HcResult> {
    if !configs.iter().any(Configuration::is_base) {
        return Err(HcError::InvalidArgument(
            "transfer analysis needs the base configuration".into(),
        ));
    }
    let s = network.section_idx(section_id).ok_or_else(|| HcError::UnknownId {
        kind: "section",
        id: section_id.to_string(),
    })?;
    let keys: Vec<_> = IntervalKey::grid().collect();
    let per = hc_by_configuration(network, configs, regime, model, kind, &keys, &[s], &HcOptions::default())?;
    Ok(aggregate_transfer(&per, &[section_id.to_string()], &keys).remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub section_id: String,
    pub scenario: String,
    pub feeder_id: String,
    pub phase_class: PhaseClass,
    pub hc_opflex_kw: f64,
    pub hc_transfer_kw: f64,
    pub diff_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiffReport {
    pub rows: Vec<DiffRow>,
    pub by_feeder: BTreeMap<String, f64>,
    pub by_phase_class: BTreeMap<String, f64>,
    pub by_scenario: BTreeMap<String, f64>,
    pub positive: usize,
    pub negative: usize,
}

/// Flat HC difference opflex minus transfer, matched on (section, scenario).
pub fn opflex_vs_transfer_diff(
    network: &Network,
    opflex: &[HcResult],
    transfer: &[HcResult],
) -> Result<DiffReport> {
    let key = |r: &HcResult| (r.scenario.clone(), r.section_id.clone());
    let a: BTreeMap<_, _> = opflex.iter().map(|r| (key(r), r)).collect();
    let b: BTreeMap<_, _> = transfer.iter().map(|r| (key(r), r)).collect();
    let unmatched: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .map(|(sc, s)| format!("{s} ({sc})"))
        .collect();
    if !unmatched.is_empty() {
        return Err(HcError::MismatchedSections(unmatched));
    }
    let base = apply_configuration(network, &Configuration::base())?;
    let mut report = DiffReport::default();
    for ((scenario, sid), ra) in &a {
        let rb = b[&(scenario.clone(), sid.clone())];
        let si = network.section_idx(sid).ok_or_else(|| HcError::UnknownId {
            kind: "section",
            id: sid.clone(),
        })?;
        let (_, to) = network.section_ends(si);
        let feeder_id = base
            .serving_source(to)
            .map(|s| s.feeder_id.clone())
            .unwrap_or_default();
        let phase_class = PhaseClass::of(network.sections()[si].phases);
        let diff = ra.flat_kw - rb.flat_kw;
        *report.by_feeder.entry(feeder_id.clone()).or_default() += diff;
        *report.by_phase_class.entry(phase_class.label().into()).or_default() += diff;
        *report.by_scenario.entry(scenario.clone()).or_default() += diff;
        if diff > 0.0 {
            report.positive += 1;
        } else if diff < 0.0 {
            report.negative += 1;
        }
        report.rows.push(DiffRow {
            section_id: sid.clone(),
            scenario: scenario.clone(),
            feeder_id,
            phase_class,
            hc_opflex_kw: ra.flat_kw,
            hc_transfer_kw: rb.flat_kw,
            diff_kw: diff,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    pub expectation_kw: f64,
    pub chance_constrained_kw: f64,
    pub epsilon: f64,
}

/// Both expected-outcome statistics from per-configuration `(probability,
/// HC)` pairs. `None` marks a configuration where the section is dead; those
/// are dropped and the remaining probabilities renormalized.
pub fn expected_outcome(per_config: &[(f64, Option<f64>)], epsilon: f64) -> Result<ExpectedOutcome> {
    let sum: f64 = per_config.iter().map(|(p, _)| p).sum();
    if (sum - 1.0).abs() > 1e-9 || per_config.iter().any(|(p, _)| *p < 0.0) {
        return Err(HcError::ProbabilitySum(sum));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(HcError::InvalidArgument(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let mut live: Vec<(f64, f64)> = per_config
        .iter()
        .filter_map(|&(p, hc)| hc.map(|h| (p, h)))
        .collect();
    let mass: f64 = live.iter().map(|(p, _)| p).sum();
    if live.is_empty() || mass <= 0.0 {
        return Ok(ExpectedOutcome {
            expectation_kw: 0.0,
            chance_constrained_kw: 0.0,
            epsilon,
        });
    }
    if (mass - 1.0).abs() > 1e-12 {
        for (p, _) in &mut live {
            *p /= mass;
        }
    }
    let expectation_kw = live.iter().map(|(p, h)| p * h).sum();
    live.sort_by(|a, b| b.1.total_cmp(&a.1));
    let target = 1.0 - epsilon - 1e-12;
    let mut cum = 0.0;
    let mut chance = live.last().map(|l| l.1).unwrap_or(0.0);
    for (i, &(p, h)) in live.iter().enumerate() {
        cum += p;
        // configs tied on HC count together
        let tied_next = live.get(i + 1).is_some_and(|n| n.1 == h);
        if cum >= target && !tied_next {
            chance = h;
            break;
        }
    }
    Ok(ExpectedOutcome {
        expectation_kw,
        chance_constrained_kw: chance,
        epsilon,
    })
}

/// Hours of the mean weekday and weekend profiles.
pub fn expected_outcome_keys() -> Vec<IntervalKey> {
    [Stat::AvgWeekday, Stat::AvgWeekend]
        .into_iter()
        .flat_map(|s| (0..24).map(move |h| IntervalKey::stat(s, h)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionExpectedOutcome {
    pub section_id: String,
    /// (config id, probability, flat HC over the average-day hours).
    pub per_config: Vec<(String, f64, Option<f64>)>,
    pub outcome: ExpectedOutcome,
}

/// Expected-outcome HC of one section on average weekday/weekend demand.
pub fn expected_outcome_hc(
    network: &Network,
    section_id: &str,
    regime: &CriteriaRegime,
    model: &dyn LoadModel,
    configs: &[Configuration],
    kind: HcKind,
    epsilon: f64,
) -> Result<SectionExpectedOutcome> {
    check_probabilities(configs)?;
    let s = network.section_idx(section_id).ok_or_else(|| HcError::UnknownId {
        kind: "section",
        id: section_id.to_string(),
    })?;
    let keys = expected_outcome_keys();
    let per = hc_by_configuration(network, configs, regime, model, kind, &keys, &[s], &HcOptions::default())?;
    let per_config: Vec<(String, f64, Option<f64>)> = per
        .iter()
        .map(|c| (c.config.id.clone(), c.config.probability, c.get(section_id).map(|r| r.flat_kw)))
        .collect();
    let pairs: Vec<(f64, Option<f64>)> = per_config.iter().map(|(_, p, h)| (*p, *h)).collect();
    Ok(SectionExpectedOutcome {
        section_id: section_id.to_string(),
        outcome: expected_outcome(&pairs, epsilon)?,
        per_config,
    })
}

/// Histogram bin width for the load census, kW.
pub const CENSUS_BIN_KW: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub config: String,
    pub sections: usize,
    pub zero_hc: usize,
    /// Bin lower edge (kW) to section count.
    pub histogram: BTreeMap<u64, usize>,
}

/// Per configuration, distribution of flat load HC and the zero-HC count.
pub fn load_hc_census(per_config: &[ConfigResults]) -> Vec<CensusRow> {
    per_config
        .iter()
        .map(|c| {
            let mut histogram = BTreeMap::new();
            let mut zero = 0;
            for r in &c.results {
                if r.flat_kw <= 0.0 {
                    zero += 1;
                }
                let bin = (r.flat_kw / CENSUS_BIN_KW).floor().max(0.0) as u64 * CENSUS_BIN_KW as u64;
                *histogram.entry(bin).or_insert(0) += 1;
            }
            CensusRow {
                config: c.config.id.clone(),
                sections: c.results.len(),
                zero_hc: zero,
                histogram,
            }
        })
        .collect()
}
