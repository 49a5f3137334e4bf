//! Run configuration: one JSON document naming the search space, the
//! method, the shrink timetable, the optimizer, the dataset, and the run
//! outputs. Everything a command needs flows through [`RunConfig`], so a
//! run is reproducible from its config file and seed alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::optim::TrainHyper;
use crate::shrink::ShrinkSchedule;
use crate::space::SearchSpace;

/// Which search algorithm a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Progressive supernet shrinking ranked by the information-based
    /// importance measurement.
    #[serde(rename = "is-darts")]
    IsDarts,
    /// First-order differentiable search over a softmax mixture of
    /// candidates, discretized at the end by architecture weight.
    #[serde(rename = "darts")]
    Darts,
    /// One-shot ablation of is-darts: the shrink rate is forced to 1, so
    /// every discard happens in a single selection step.
    #[serde(rename = "i-darts")]
    IDarts,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::IsDarts => "is-darts",
            Method::Darts => "darts",
            Method::IDarts => "i-darts",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A search space named by preset (`"micro"`, `"bench"`, `"wide"`) or
/// spelled out inline as a full [`SearchSpace`] object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceRef {
    Preset(String),
    Inline(Box<SearchSpace>),
}

impl SpaceRef {
    pub fn resolve(&self) -> Result<SearchSpace> {
        match self {
            SpaceRef::Preset(name) => SearchSpace::preset(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown space preset '{name}' (known presets: micro, bench, wide)"
                ))
            }),
            SpaceRef::Inline(space) => Ok((**space).clone()),
        }
    }
}

fn default_alpha_lr() -> f64 {
    // Plain gradient descent on the architecture weights; sized for the
    // small spaces and short runs this laboratory targets.
    0.05
}

fn default_oracle_train_budget() -> usize {
    200
}

fn default_oracle_cap() -> u64 {
    256
}

/// Everything one run needs. Optional sections fall back to defaults so a
/// minimal config is short; `deny_unknown_fields` turns typos into load
/// errors instead of silently ignored settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub space: SpaceRef,
    /// Shrink timetable. The darts baseline reuses its epoch accounting
    /// (`warmup + interval·steps`) as its training length, so both methods
    /// run the same number of epochs under one config.
    pub schedule: ShrinkSchedule,
    #[serde(default)]
    pub hyper: TrainHyper,
    pub dataset: DatasetSpec,
    /// Validation samples in the fixed importance-measurement slice.
    pub iim_samples: usize,
    pub seed: u64,
    /// Run directory; may instead come from the command line.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Step size for the architecture weights (darts only).
    #[serde(default = "default_alpha_lr")]
    pub alpha_lr: f64,
    /// Optimizer steps per subnet when building an oracle table.
    #[serde(default = "default_oracle_train_budget")]
    pub oracle_train_budget: usize,
    /// Refuse to build oracle tables over spaces larger than this.
    #[serde(default = "default_oracle_cap")]
    pub oracle_cap: u64,
}

impl RunConfig {
    /// Parses a JSON config string, naming the offending field path on
    /// schema errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                Error::Config(format!("config is not valid JSON: {}", e.inner()))
            } else {
                Error::Config(format!("config field `{path}`: {}", e.inner()))
            }
        })
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Cross-checks every section and resolves the search space. This runs
    /// before any compute or filesystem writes, so an invalid config never
    /// leaves artifacts behind.
    pub fn validate(&self) -> Result<SearchSpace> {
        let space = self.space.resolve()?;
        space.validate()?;
        self.schedule.validate()?;
        self.hyper.validate()?;
        self.dataset.validate()?;
        if self.dataset.classes != space.supernet.classes {
            return Err(Error::Config(format!(
                "dataset.classes ({}) must match the space's classifier head ({})",
                self.dataset.classes, space.supernet.classes
            )));
        }
        if self.dataset.channels != space.supernet.in_channels {
            return Err(Error::Config(format!(
                "dataset.channels ({}) must match space.supernet.in_channels ({})",
                self.dataset.channels, space.supernet.in_channels
            )));
        }
        if self.iim_samples == 0 || self.iim_samples > self.dataset.val_samples {
            return Err(Error::Config(format!(
                "iim_samples must lie in 1..={}, got {}",
                self.dataset.val_samples, self.iim_samples
            )));
        }
        if !(self.alpha_lr.is_finite() && self.alpha_lr > 0.0) {
            return Err(Error::Config(format!(
                "alpha_lr must be positive and finite, got {}",
                self.alpha_lr
            )));
        }
        if self.oracle_train_budget == 0 {
            return Err(Error::Config("oracle_train_budget must be positive".into()));
        }
        Ok(space)
    }

    /// The timetable actually executed: i-darts forces the shrink rate to
    /// 1 (one selection step), everything else runs as written.
    pub fn effective_schedule(&self) -> ShrinkSchedule {
        match self.method {
            Method::IDarts => ShrinkSchedule { r: 1.0, ..self.schedule.clone() },
            _ => self.schedule.clone(),
        }
    }

    /// Epoch budget for the darts baseline: identical to the shrink
    /// timetable's total, so the two methods cost the same per config.
    pub fn darts_epochs(&self) -> usize {
        self.schedule.total_epochs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GeneratorKind;

    fn minimal_json() -> String {
        r#"{
            "method": "is-darts",
            "space": "micro",
            "schedule": { "r": 0.5, "warmup_epochs": 1, "interval_epochs": 1 },
            "dataset": {
                "kind": "oriented_bars", "classes": 4, "image_size": 8,
                "channels": 1, "train_samples": 64, "val_samples": 32,
                "test_samples": 32, "noise": 0.05, "seed": 7
            },
            "iim_samples": 16,
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(cfg.method, Method::IsDarts);
        assert_eq!(cfg.hyper, TrainHyper::default());
        assert_eq!(cfg.alpha_lr, 0.05);
        assert_eq!(cfg.oracle_train_budget, 200);
        assert_eq!(cfg.oracle_cap, 256);
        assert!(cfg.out.is_none());
        assert_eq!(cfg.dataset.kind, GeneratorKind::OrientedBars);
        let space = cfg.validate().unwrap();
        assert_eq!(space, SearchSpace::micro());
    }

    #[test]
    fn inline_space_round_trips() {
        let mut cfg = RunConfig::from_json(&minimal_json()).unwrap();
        cfg.space = SpaceRef::Inline(Box::new(SearchSpace::micro()));
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.validate().unwrap(), SearchSpace::micro());
    }

    #[test]
    fn unknown_preset_is_named_in_the_error() {
        let text = minimal_json().replace("\"micro\"", "\"gigantic\"");
        let cfg = RunConfig::from_json(&text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("gigantic"), "{err}");
    }

    #[test]
    fn schema_errors_carry_the_field_path() {
        // A typo inside a nested section should point at the section.
        let text = minimal_json().replace("\"noise\"", "\"nois\"");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("dataset"), "{err}");
        assert!(err.to_string().contains("nois"), "{err}");

        // A type error deep in the tree names the full path.
        let text = minimal_json().replace("\"r\": 0.5", "\"r\": \"half\"");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("schedule.r"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        let err = RunConfig::from_json("{ not json").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn i_darts_forces_a_single_step() {
        let text = minimal_json().replace("is-darts", "i-darts");
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.method, Method::IDarts);
        let eff = cfg.effective_schedule();
        assert_eq!(eff.r, 1.0);
        assert_eq!(eff.total_steps(), 1);
        assert_eq!(eff.total_epochs(), 2, "warmup 1 + one interval of 1");
        // The written schedule is untouched.
        assert_eq!(cfg.schedule.r, 0.5);
    }

    #[test]
    fn validate_rejects_cross_section_mismatches() {
        let cfg = RunConfig::from_json(&minimal_json()).unwrap();

        let mut bad = cfg.clone();
        // 2 classes is legal for the generator but not for a 4-way head.
        bad.dataset.classes = 2;
        let err = bad.validate().unwrap_err();
        assert!(err.to_string().contains("classes"), "{err}");

        let mut bad = cfg.clone();
        bad.iim_samples = 33;
        let err = bad.validate().unwrap_err();
        assert!(err.to_string().contains("iim_samples"), "{err}");

        let mut bad = cfg.clone();
        bad.alpha_lr = -1.0;
        assert!(bad.validate().is_err());

        let mut bad = cfg;
        bad.schedule.r = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn darts_epochs_match_the_shrink_timetable() {
        let cfg = RunConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(cfg.darts_epochs(), cfg.schedule.total_epochs());
        assert_eq!(cfg.darts_epochs(), 3);
    }
}
