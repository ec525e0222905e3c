//! `hc`: run studies, render reports, generate feeders and solve snapshots.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use hc_core::criteria::{evaluate, CriteriaRegime};
use hc_core::hosting_capacity::{HcKind, IntervalKey, LoadModel};
use hc_core::network::{apply_configuration, generate_feeder_pair, generate_synthetic_feeder, FeederPairSpec, FeederSpec, Network};
use hc_core::power_flow::{head_flow, solve, InjectionSet};
use hc_core::scenarios::{apply_penetration, PenetrationScenario, ScenarioLibraries};
use hc_core::study::{run_study, write_report, Bundle, ReportKind, ReportOptions, StudyConfig};
use hc_core::HcError;

#[derive(Parser)]
#[command(name = "hc", version, about = "Feeder hosting-capacity studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study from a JSON run-config and write the results bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a report into <bundle>/reports.
    Report {
        /// distance, limits, diff, load_census or profile
        #[arg(long)]
        kind: String,
        #[arg(long)]
        bundle: PathBuf,
        /// generation or load; each report has its own default
        #[arg(long)]
        hc_kind: Option<String>,
        #[arg(long)]
        regime: Option<String>,
        #[arg(long, default_value = "base")]
        config: String,
        #[arg(long, default_value = "opflex")]
        regime_a: String,
        #[arg(long, default_value = "transfer")]
        regime_b: String,
        /// Configuration of side b in `diff`; minimum over all when omitted.
        #[arg(long)]
        config_b: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        bucket_miles: f64,
        #[arg(long)]
        section: Option<String>,
    },
    /// Generate a synthetic feeder (or feeder pair) as network JSON.
    GenFeeder {
        /// Feeder or feeder-pair spec JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one interval and print a JSON summary.
    Solve {
        #[arg(long)]
        network: PathBuf,
        /// M/WD/H grid interval or a stat key such as P90/17.
        #[arg(long)]
        interval: String,
        #[arg(long, default_value = "base")]
        config: String,
        #[arg(long, default_value_t = 0.0)]
        pv: f64,
        #[arg(long, default_value_t = 0.0)]
        ev: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Marks a failure that should exit with code 3.
#[derive(Debug)]
struct Numerical(String);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Numerical>().is_some() {
            return 3;
        }
        if let Some(HcError::NotConverged) = cause.downcast_ref::<HcError>() {
            return 3;
        }
    }
    2
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config } => {
            let cfg = StudyConfig::load(&config).with_context(|| format!("config {}", config.display()))?;
            let s = run_study(&cfg)?;
            println!(
                "{} cells, {} sections, {} result rows -> {}",
                s.cells,
                s.sections,
                s.result_rows,
                s.output_dir.display()
            );
            Ok(())
        }
        Command::Report {
            kind,
            bundle,
            hc_kind,
            regime,
            config,
            regime_a,
            regime_b,
            config_b,
            bucket_miles,
            section,
        } => {
            let kind: ReportKind = kind.parse()?;
            let hc_kind = hc_kind.map(|k| k.parse::<HcKind>()).transpose()?;
            let opts = ReportOptions {
                hc_kind,
                regime,
                config,
                regime_a,
                regime_b,
                config_b,
                bucket_miles,
                section,
                ..ReportOptions::default()
            };
            let mut b = Bundle::open(&bundle)?;
            for f in write_report(&mut b, kind, &opts)? {
                println!("{}", bundle.join(f).display());
            }
            Ok(())
        }
        Command::GenFeeder { spec, seed, out } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let network = feeder_from_spec(&text, seed).with_context(|| format!("spec {}", spec.display()))?;
            let json = network.to_json()? + "\n";
            match out {
                Some(p) => std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{json}"),
            }
            Ok(())
        }
        Command::Solve {
            network,
            interval,
            config,
            pv,
            ev,
            seed,
        } => solve_cmd(&network, &interval, &config, pv, ev, seed),
    }
}

fn feeder_from_spec(text: &str, seed: Option<u64>) -> Result<Network> {
    if let Ok(mut pair) = serde_json::from_str::<FeederPairSpec>(text) {
        if let Some(s) = seed {
            pair.feeders[0].seed = s;
            pair.feeders[1].seed = s.wrapping_add(1);
        }
        return Ok(generate_feeder_pair(&pair)?);
    }
    let mut one: FeederSpec = serde_json::from_str(text)
        .map_err(|e| HcError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
    if let Some(s) = seed {
        one.seed = s;
    }
    Ok(generate_synthetic_feeder(&one)?)
}

fn solve_cmd(path: &PathBuf, interval: &str, config: &str, pv: f64, ev: f64, seed: u64) -> Result<()> {
    let network = Network::load(path).with_context(|| format!("network {}", path.display()))?;
    let key: IntervalKey = interval.parse()?;
    let cfg = if config == "base" {
        hc_core::network::Configuration::base()
    } else {
        match network.configurations().iter().find(|c| c.id == config) {
            Some(c) => c.clone(),
            None => bail!(HcError::Config(format!("unknown configuration `{config}`"))),
        }
    };
    let view = apply_configuration(&network, &cfg)?;
    let loads = apply_penetration(&network, &PenetrationScenario::new(pv, ev, seed), &ScenarioLibraries::default())?;
    let node_loads = loads.node_loads(key)?;
    let sol = solve(&view, &node_loads, &InjectionSet::new())?;
    let mut feeders = Vec::new();
    for (i, src) in network.sources().iter().enumerate() {
        if let Ok(kw) = head_flow(&sol, i) {
            feeders.push(json!({"feeder_id": src.feeder_id, "head_kw": kw}));
        }
    }
    let criteria: Vec<_> = evaluate(&sol, &sol, &CriteriaRegime::classical())
        .into_iter()
        .map(|r| json!({"criterion": r.criterion.label(), "passed": r.passed, "worst_margin": r.worst_margin, "location": r.location}))
        .collect();
    let out = json!({
        "config": cfg.id,
        "interval": key.to_string(),
        "scenario": loads.scenario_id(),
        "converged": sol.converged(),
        "iterations": sol.iterations(),
        "losses_kw": sol.losses_kw(),
        "demand_kw": node_loads.total().re,
        "feeders": feeders,
        "criteria": criteria,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    if !sol.converged() {
        return Err(Numerical(format!("power flow did not converge at {key}")).into());
    }
    Ok(())
}
