//! Study orchestration: run-config in, results bundle out, reports from the bundle.

pub mod bundle;
pub mod config;
pub mod report;
pub mod svg;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

pub use bundle::{Bundle, Cell, FileEntry, FlatRow, Manifest, ResultRow, SectionRow};
pub use config::{ConfigSelection, NetworkSource, ProfilePaths, ScenarioSelection, StudyConfig, StudyMode};
pub use report::{render_report, write_report, Report, ReportKind, ReportOptions};

use crate::criteria::CriteriaRegime;
use crate::error::{HcError, Result};
use crate::hosting_capacity::{lost_der_opportunity, HcEngine, HcKind, HcOptions, HcResult, IntervalKey, LoadModel};
use crate::network::{apply_configuration, generate_feeder_pair, Configuration, Network, PhaseClass};
use crate::reconfiguration::enumerate_configurations;
use crate::scenarios::{apply_penetration, EvTemplates, PenetrationScenario, ProfileKind, ProfileLibrary, ScenarioLibraries};

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct StudySummary {
    pub output_dir: PathBuf,
    pub cells: usize,
    pub result_rows: usize,
    pub sections: usize,
    pub configurations: Vec<String>,
    pub scenarios: Vec<String>,
}

/// Resolved study echoed into `study.json`.
#[derive(Debug, Clone, Serialize)]
struct ResolvedStudy<'a> {
    seed: u64,
    mode: StudyMode,
    kinds: &'a [HcKind],
    regimes: Vec<String>,
    configurations: Vec<&'a Configuration>,
    scenarios: &'a [PenetrationScenario],
    sections: usize,
    hc_options: &'a HcOptions,
}

pub fn load_network(source: &NetworkSource) -> Result<Network> {
    match source {
        NetworkSource::Path(p) => Network::load(p).map_err(|e| match e {
            HcError::Io(io) => HcError::Config(format!("cannot read network {}: {io}", p.display())),
            other => other,
        }),
        NetworkSource::Generate { generate } => generate_feeder_pair(generate),
    }
}

/// Attaches the configurations named by `selection`. Configurations stored
/// in the network file win over enumeration.
pub fn resolve_configurations(network: &Network, selection: &ConfigSelection) -> Result<(Network, Vec<Configuration>)> {
    let mut known: Vec<Configuration> = if network.configurations().is_empty() {
        enumerate_configurations(network)?.configurations
    } else {
        network.configurations().to_vec()
    };
    if !known.iter().any(Configuration::is_base) {
        known.insert(0, Configuration::base());
    }
    let chosen = match selection {
        ConfigSelection::Named(n) if n == "base" => vec![Configuration::base()],
        ConfigSelection::Named(_) => known.clone(),
        ConfigSelection::List(ids) => ids
            .iter()
            .map(|id| {
                known.iter().find(|c| &c.id == id).cloned().ok_or_else(|| {
                    HcError::Config(format!(
                        "unknown configuration `{id}` (known: {})",
                        known.iter().map(|c| c.id.as_str()).collect::<Vec<_>>().join(", ")
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok((network.with_configurations(known)?, chosen))
}

fn libraries(cfg: &StudyConfig) -> Result<ScenarioLibraries> {
    let mut libs = ScenarioLibraries::default();
    let open = |p: &PathBuf| {
        std::fs::File::open(p).map_err(|e| HcError::Config(format!("cannot read {}: {e}", p.display())))
    };
    if let Some(p) = &cfg.profiles.load {
        libs.load = ProfileLibrary::from_csv(ProfileKind::Load, open(p)?)?;
    }
    if let Some(p) = &cfg.profiles.pv {
        libs.pv = ProfileLibrary::from_csv(ProfileKind::Pv, open(p)?)?;
    }
    if let Some(p) = &cfg.profiles.ev_templates {
        libs.ev_templates = EvTemplates::from_json(&std::fs::read_to_string(p)?)?;
    }
    if let Some(f) = &cfg.fleet {
        libs.fleet = f.clone();
    }
    Ok(libs)
}

fn first_key_at(result: &HcResult) -> String {
    result
        .profile
        .iter()
        .find(|(_, e)| e.kw == result.flat_kw)
        .map(|(k, _)| k.to_string())
        .unwrap_or_default()
}

/// Runs every (scenario, regime, configuration, kind) cell and writes the bundle.
pub fn run_study(cfg: &StudyConfig) -> Result<StudySummary> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let scenarios = cfg.scenario_list();
    let mut manifest = Manifest {
        format: 1,
        seed: cfg.seed,
        mode: cfg.mode,
        cells: Vec::new(),
        files: Vec::new(),
    };
    if scenarios.is_empty() {
        bundle::write_manifest(out, &manifest)?;
        return Ok(StudySummary {
            output_dir: out.clone(),
            cells: 0,
            result_rows: 0,
            sections: 0,
            configurations: Vec::new(),
            scenarios: Vec::new(),
        });
    }

    let raw = load_network(&cfg.network)?;
    let (network, configs) = resolve_configurations(&raw, &cfg.configurations)?;
    let regimes = cfg
        .regimes
        .iter()
        .map(|r| CriteriaRegime::preset(r))
        .collect::<Result<Vec<_>>>()?;
    let libs = libraries(cfg)?;
    let base = apply_configuration(&network, &Configuration::base())?;
    let sections: Vec<usize> = match &cfg.sections {
        None => (0..network.sections().len()).filter(|&s| base.section_energized(s)).collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                network
                    .section_idx(id)
                    .ok_or_else(|| HcError::Config(format!("unknown section `{id}` in `sections`")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let views = configs
        .iter()
        .map(|c| apply_configuration(&network, c))
        .collect::<Result<Vec<_>>>()?;

    let mut results: Vec<(Cell, Vec<HcResult>)> = Vec::new();
    for sc in &scenarios {
        let loads = apply_penetration(&network, sc, &libs)?;
        let jobs: Vec<(usize, usize, HcKind)> = (0..regimes.len())
            .flat_map(|r| (0..views.len()).flat_map(move |v| cfg.kinds.iter().map(move |&k| (r, v, k))))
            .collect();
        let done = jobs
            .par_iter()
            .map(|&(r, v, kind)| {
                let view = &views[v];
                let engine = HcEngine::<f64>::with_options(view, &regimes[r], cfg.hc_options.clone())?;
                let live: Vec<usize> = sections.iter().copied().filter(|&s| view.section_energized(s)).collect();
                let keys: Vec<IntervalKey> = match cfg.mode {
                    StudyMode::Flat => vec![loads.flat_key(kind)?],
                    StudyMode::Profile => IntervalKey::grid().collect(),
                };
                let res = engine.sweep(&live, &loads, kind, &keys)?;
                let cell = Cell {
                    regime: regimes[r].name.clone(),
                    config: configs[v].id.clone(),
                    scenario: loads.scenario_id().to_string(),
                    kind,
                };
                Ok((cell, res))
            })
            .collect::<Result<Vec<_>>>()?;
        results.extend(done);
    }

    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for (cell, res) in &results {
        for r in res {
            for (key, e) in &r.profile {
                rows.push(ResultRow {
                    section_id: r.section_id.clone(),
                    kind: cell.kind,
                    regime: cell.regime.clone(),
                    config: cell.config.clone(),
                    scenario: cell.scenario.clone(),
                    interval: key.to_string(),
                    hc_kw: e.kw,
                    binding_criterion: e.binding_label(),
                });
            }
            flat.push(FlatRow {
                section_id: r.section_id.clone(),
                kind: cell.kind,
                regime: cell.regime.clone(),
                config: cell.config.clone(),
                scenario: cell.scenario.clone(),
                hc_kw: r.flat_kw,
                binding_criterion: r.flat_binding_label(),
                interval: first_key_at(r),
                lost_kwh: lost_der_opportunity(r),
            });
        }
    }
    let section_rows: Vec<SectionRow> = sections
        .iter()
        .map(|&s| {
            let sec = &network.sections()[s];
            let (_, to) = network.section_ends(s);
            SectionRow {
                section_id: sec.id.clone(),
                feeder_id: base.serving_source(to).map(|b| b.feeder_id.clone()).unwrap_or_default(),
                phase_class: PhaseClass::of(sec.phases).label().to_string(),
                distance_mi: network.nodes()[to].distance_from_source,
            }
        })
        .collect();

    bundle::write_csv(
        &out.join(bundle::RESULTS),
        &rows,
        &["section_id", "kind", "regime", "config", "scenario", "interval", "hc_kw", "binding_criterion"],
    )?;
    bundle::write_csv(
        &out.join(bundle::FLAT_SUMMARY),
        &flat,
        &["section_id", "kind", "regime", "config", "scenario", "hc_kw", "binding_criterion", "interval", "lost_kwh"],
    )?;
    bundle::write_csv(
        &out.join(bundle::SECTIONS),
        &section_rows,
        &["section_id", "feeder_id", "phase_class", "distance_mi"],
    )?;
    std::fs::write(out.join(bundle::NETWORK), network.to_json()? + "\n")?;
    let resolved = ResolvedStudy {
        seed: cfg.seed,
        mode: cfg.mode,
        kinds: &cfg.kinds,
        regimes: regimes.iter().map(|r| r.name.clone()).collect(),
        configurations: configs.iter().collect(),
        scenarios: &scenarios,
        sections: sections.len(),
        hc_options: &cfg.hc_options,
    };
    std::fs::write(out.join(bundle::STUDY), serde_json::to_string_pretty(&resolved)? + "\n")?;

    manifest.cells = results.iter().map(|(c, _)| c.clone()).collect();
    let files: Vec<String> = [bundle::RESULTS, bundle::FLAT_SUMMARY, bundle::SECTIONS, bundle::NETWORK, bundle::STUDY]
        .iter()
        .map(|s| s.to_string())
        .collect();
    bundle::record_files(out, &mut manifest, &files)?;
    bundle::write_manifest(out, &manifest)?;

    Ok(StudySummary {
        output_dir: out.clone(),
        cells: manifest.cells.len(),
        result_rows: rows.len(),
        sections: sections.len(),
        configurations: configs.iter().map(|c| c.id.clone()).collect(),
        scenarios: scenarios.iter().map(|s| s.id.clone()).collect(),
    })
}
