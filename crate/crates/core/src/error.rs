use thiserror::Error;

use crate::network::Diagnostic;

pub type Result<T, E = HcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HcError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown switch id `{0}`")]
    UnknownSwitch(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("configuration `{config}` is not radial: {}", format_diagnostics(.diagnostics))]
    NonRadial {
        config: String,
        diagnostics: Vec<Diagnostic>,
    },

    #[error("infeasible feeder spec: {0}")]
    InfeasibleSpec(String),

    #[error("node `{0}` is de-energized in this configuration")]
    DeEnergized(String),

    #[error("power flow did not converge")]
    NotConverged,

    #[error("switch `{0}` is open; no flow is defined through it")]
    SwitchOpen(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),

    #[error("section sets differ; unmatched: {}", .0.join(", "))]
    MismatchedSections(Vec<String>),

    #[error("missing charger template for class `{0}`")]
    MissingTemplate(String),

    #[error("missing profile `{0}`")]
    MissingProfile(String),

    #[error("insufficient demand history: {got} days, need at least {need}")]
    InsufficientHistory { got: usize, need: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("bundle is missing study cell (regime `{regime}`, config `{config}`, scenario `{scenario}`)")]
    MissingCell {
        regime: String,
        config: String,
        scenario: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
