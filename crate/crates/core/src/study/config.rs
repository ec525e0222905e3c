//! Declarative run-config for a study.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criteria::CriteriaRegime;
use crate::error::{HcError, Result};
use crate::hosting_capacity::{HcKind, HcOptions};
use crate::network::FeederPairSpec;
use crate::scenarios::{EvFleetSpec, PenetrationScenario};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSource {
    Path(PathBuf),
    Generate { generate: Box<FeederPairSpec> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    /// One interval per scenario and kind: the flat key.
    #[default]
    Flat,
    /// All 576 grid intervals.
    Profile,
}

/// `"all"`, `"base"` or a list of configuration ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigSelection {
    Named(String),
    List(Vec<String>),
}

impl Default for ConfigSelection {
    fn default() -> Self {
        ConfigSelection::Named("all".into())
    }
}

/// `"standard"` or an explicit scenario list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSelection {
    Named(String),
    List(Vec<PenetrationScenario>),
}

impl Default for ScenarioSelection {
    fn default() -> Self {
        ScenarioSelection::Named("standard".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePaths {
    pub load: Option<PathBuf>,
    pub pv: Option<PathBuf>,
    pub ev_templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub network: NetworkSource,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: StudyMode,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<HcKind>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<String>,
    #[serde(default)]
    pub configurations: ConfigSelection,
    #[serde(default)]
    pub scenarios: ScenarioSelection,
    #[serde(default)]
    pub fleet: Option<EvFleetSpec>,
    #[serde(default)]
    pub profiles: ProfilePaths,
    /// Section ids to study; all base-energized sections when absent.
    #[serde(default)]
    pub sections: Option<Vec<String>>,
    #[serde(default)]
    pub hc_options: HcOptions,
}

fn default_kinds() -> Vec<HcKind> {
    vec![HcKind::Generation, HcKind::Load]
}

fn default_regimes() -> Vec<String> {
    vec!["classical".into(), "opflex".into()]
}

/// 1-based line of the first occurrence of `"field"` in `text`.
fn line_of(text: &str, field: &str) -> Option<usize> {
    let needle = format!("\"{field}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn anchored(text: &str, field: &str, msg: impl std::fmt::Display) -> HcError {
    match line_of(text, field) {
        Some(line) => HcError::Config(format!("line {line}: `{field}`: {msg}")),
        None => HcError::Config(format!("`{field}`: {msg}")),
    }
}

impl StudyConfig {
    /// Parses and validates; relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: StudyConfig = serde_json::from_str(text).map_err(|e| {
            HcError::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate(text)?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        if let NetworkSource::Path(p) = &mut cfg.network {
            fix(p);
        }
        fix(&mut cfg.output_dir);
        for p in [&mut cfg.profiles.load, &mut cfg.profiles.pv, &mut cfg.profiles.ev_templates]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, dir)
    }

    fn validate(&self, text: &str) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(anchored(text, "kinds", "at least one kind is required"));
        }
        if self.regimes.is_empty() {
            return Err(anchored(text, "regimes", "at least one regime is required"));
        }
        for r in &self.regimes {
            CriteriaRegime::preset(r).map_err(|e| anchored(text, "regimes", e))?;
        }
        if let ConfigSelection::Named(n) = &self.configurations {
            if n != "all" && n != "base" {
                return Err(anchored(
                    text,
                    "configurations",
                    format!("expected \"all\", \"base\" or a list, got \"{n}\""),
                ));
            }
        }
        match &self.scenarios {
            ScenarioSelection::Named(n) if n != "standard" => {
                return Err(anchored(
                    text,
                    "scenarios",
                    format!("expected \"standard\" or a list, got \"{n}\""),
                ));
            }
            ScenarioSelection::List(list) => {
                for s in list {
                    s.validate().map_err(|e| anchored(text, "scenarios", e))?;
                }
            }
            _ => {}
        }
        if let Some(f) = &self.fleet {
            f.validate().map_err(|e| anchored(text, "fleet", e))?;
        }
        if !(self.hc_options.cap_factor > 0.0) {
            return Err(anchored(text, "hc_options", "cap_factor must be positive"));
        }
        Ok(())
    }

    /// Scenario list with ids filled and placement seeds defaulted to `seed`.
    pub fn scenario_list(&self) -> Vec<PenetrationScenario> {
        let mut list = match &self.scenarios {
            ScenarioSelection::Named(_) => PenetrationScenario::standard(self.seed),
            ScenarioSelection::List(l) => l.clone(),
        };
        for s in &mut list {
            if s.id.is_empty() {
                s.id = PenetrationScenario::default_id(s.pv_level, s.ev_level);
            }
            if s.placement_seed == 0 {
                s.placement_seed = self.seed;
            }
        }
        list
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = StudyConfig::from_json(r#"{"network": "n.json", "output_dir": "out"}"#, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.kinds.len(), 2);
        assert_eq!(cfg.regimes, vec!["classical", "opflex"]);
        assert_eq!(cfg.scenario_list().len(), 9);
        assert_eq!(cfg.output_dir, Path::new("/tmp/x/out"));
        assert!(matches!(cfg.network, NetworkSource::Path(ref p) if p == Path::new("/tmp/x/n.json")));
    }

    #[test]
    fn bad_regime_names_its_line() {
        let text = "{\n  \"network\": \"n.json\",\n  \"output_dir\": \"o\",\n  \"regimes\": [\"nope\"]\n}";
        let err = StudyConfig::from_json(text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("nope"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = StudyConfig::from_json("{\n \"network\": ,\n}", Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let err = StudyConfig::from_json(r#"{"network": "n", "output_dir": "o", "bogus": 1}"#, Path::new("."));
        assert!(err.is_err());
    }

    #[test]
    fn listed_scenarios_take_study_seed() {
        let cfg = StudyConfig::from_json(
            r#"{"network": "n", "output_dir": "o", "seed": 9, "scenarios": [{"pv_level": 0.2, "ev_level": 0.0}]}"#,
            Path::new("."),
        )
        .unwrap();
        let l = cfg.scenario_list();
        assert_eq!(l[0].id, "pv20-ev00");
        assert_eq!(l[0].placement_seed, 9);
    }
}
