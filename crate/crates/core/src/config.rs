//! Run configuration shared by every command.
//!
//! The resolved configuration (everything except where outputs go and how
//! many threads run) is embedded in each output so a run can be repeated
//! from any of its files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::SppModel;
use crate::error::{Error, Result};
use crate::geometry::State;
use crate::ingestion::{fit_model, load_track};
use crate::noise::{WeibullParams, WrappedCauchyParams};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub speed_shape: f64,
    pub speed_scale: f64,
    pub turn_concentration: f64,
    #[serde(default)]
    pub turn_location: f64,
}

impl ModelParams {
    pub fn from_model(model: &SppModel) -> Self {
        Self {
            speed_shape: model.speed.shape(),
            speed_scale: model.speed.scale(),
            turn_concentration: model.turn.concentration(),
            turn_location: model.turn.location(),
        }
    }

    pub fn to_model(&self) -> Result<SppModel> {
        let bad = |e: Error| Error::Config(format!("model: {e}"));
        Ok(SppModel::new(
            WeibullParams::new(self.speed_shape, self.speed_scale).map_err(bad)?,
            WrappedCauchyParams::new(self.turn_concentration, self.turn_location).map_err(bad)?,
        ))
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            speed_shape: 1.35,
            speed_scale: 4.66,
            turn_concentration: 0.65,
            turn_location: 0.0,
        }
    }
}

/// Either explicit noise parameters or a track to fit them from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Params(ModelParams),
    Track { track: PathBuf },
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Params(ModelParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Costs {
    Uniform(f64),
    PerStage(Vec<f64>),
}

impl Costs {
    pub fn expand(&self, horizon: usize) -> Result<Vec<f64>> {
        let costs = match self {
            Costs::Uniform(c) => vec![*c; horizon],
            Costs::PerStage(v) if v.len() == horizon => v.clone(),
            Costs::PerStage(v) => {
                return Err(Error::Config(format!("{} costs given for horizon {horizon}", v.len())));
            }
        };
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Config(format!("costs must be finite and > 0, got {c}")));
        }
        Ok(costs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub episodes: usize,
    /// Initial pose `[p1, p2, theta]`.
    pub x0: [f64; 3],
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            x0: [0.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// The solved table read from `scheme`.
    #[default]
    Solved,
    TransmitAlways,
    TransmitNever,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub kind: SchemeKind,
    /// Scheme file; defaults to `scheme.bin` in the output directory.
    pub scheme: Option<PathBuf>,
    /// Evaluate one ingested track instead of simulated episodes.
    pub track: Option<PathBuf>,
}

/// Diagnostics recorded by `fit`; ignored by the other commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDiagnostics {
    pub track: PathBuf,
    pub points: usize,
    pub speed_samples: usize,
    pub dropped_zero_speeds: usize,
    pub turn_samples: usize,
    pub carried_headings: usize,
    pub speed_log_likelihood: f64,
    pub turn_log_likelihood: f64,
    pub turn_concentration_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: usize,
    pub costs: Costs,
    pub model: ModelSource,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub evaluate: EvaluateConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitDiagnostics>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 100,
            costs: Costs::Uniform(10.0),
            model: ModelSource::default(),
            solver: SolverConfig::default(),
            simulate: SimulateConfig::default(),
            evaluate: EvaluateConfig::default(),
            fit: None,
            out: PathBuf::from("out"),
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_at(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative paths inside a config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ModelSource::Track { track } = &mut cfg.model {
            rebase(track);
        }
        if let Some(p) = &mut cfg.evaluate.scheme {
            rebase(p);
        }
        if let Some(p) = &mut cfg.evaluate.track {
            rebase(p);
        }
        if let Some(f) = &mut cfg.fit {
            rebase(&mut f.track);
        }
        Ok(cfg)
    }

    /// Makes every input path absolute so the embedded configuration means
    /// the same thing from any working directory.
    pub fn absolutize_paths(&mut self) {
        let fix = |p: &mut PathBuf| *p = absolute_path(p);
        if let ModelSource::Track { track } = &mut self.model {
            fix(track);
        }
        if let Some(p) = &mut self.evaluate.scheme {
            fix(p);
        }
        if let Some(p) = &mut self.evaluate.track {
            fix(p);
        }
        if let Some(f) = &mut self.fit {
            fix(&mut f.track);
        }
    }

    /// The seed drives every random choice; the solver section's own seed
    /// is overwritten with it.
    pub fn resolved(mut self) -> Result<Self> {
        self.solver.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        self.costs.expand(self.horizon)?;
        self.solver.validate()?;
        if let ModelSource::Params(p) = &self.model {
            p.to_model()?;
        }
        if self.simulate.episodes == 0 {
            return Err(Error::Config("simulate.episodes must be >= 1".into()));
        }
        let [a, b, t] = self.simulate.x0;
        State::try_new(a, b, t).map_err(|e| Error::Config(format!("simulate.x0: {e}")))?;
        Ok(())
    }

    pub fn cost_vector(&self) -> Result<Vec<f64>> {
        self.costs.expand(self.horizon)
    }

    pub fn x0(&self) -> State {
        let [a, b, t] = self.simulate.x0;
        State::new(a, b, t)
    }

    /// Noise model, fitting it from the track when one is configured.
    pub fn model(&self) -> Result<SppModel> {
        match &self.model {
            ModelSource::Params(p) => p.to_model(),
            ModelSource::Track { track } => Ok(fit_model(&load_track(track)?)?.model),
        }
    }

    /// Text embedded in outputs.
    pub fn provenance(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn scheme_path(&self) -> PathBuf {
        self.evaluate
            .scheme
            .clone()
            .unwrap_or_else(|| self.out.join("scheme.bin"))
    }
}

/// Canonical form of `p` when it exists, else `p` made absolute.
pub fn absolute_path(p: &Path) -> PathBuf {
    match std::path::absolute(p) {
        Ok(abs) => std::fs::canonicalize(&abs).unwrap_or(abs),
        Err(_) => p.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_files() {
        let cfg = RunConfig::from_toml("").unwrap().resolved().unwrap();
        assert_eq!(cfg.horizon, 100);
        assert_eq!(cfg.cost_vector().unwrap(), vec![10.0; 100]);
        assert_eq!(cfg.model().unwrap().speed.shape(), 1.35);

        let cfg = RunConfig::from_toml(
            "seed = 9\nhorizon = 3\ncosts = [1.0, 2.0, 3.0]\n[solver]\nseed = 4\n[model]\nspeed_shape = 2.0\nspeed_scale = 1.0\nturn_concentration = 0.5\n",
        )
        .unwrap()
        .resolved()
        .unwrap();
        assert_eq!(cfg.solver.seed, 9);
        assert_eq!(cfg.cost_vector().unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(cfg.model().unwrap().turn.concentration(), 0.5);

        let track = RunConfig::from_toml("[model]\ntrack = \"t.csv\"\n").unwrap();
        assert!(matches!(track.model, ModelSource::Track { .. }));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("horizon = 2\ncosts = [1.0]\n")
            .unwrap()
            .resolved()
            .is_err());
        assert!(RunConfig::from_toml("costs = -1.0\n").unwrap().resolved().is_err());
        assert!(RunConfig::from_toml("typo = 1\n").is_err());
        assert!(
            RunConfig::from_toml("[model]\nspeed_shape = -1.0\nspeed_scale = 1.0\nturn_concentration = 0.5\n")
                .unwrap()
                .resolved()
                .is_err()
        );
    }

    #[test]
    fn provenance_round_trips() {
        let cfg = RunConfig {
            seed: 3,
            horizon: 7,
            out: PathBuf::from("elsewhere"),
            threads: 8,
            ..RunConfig::default()
        }
        .resolved()
        .unwrap();
        let text = cfg.provenance();
        assert!(!text.contains("elsewhere"));
        let back = RunConfig::from_toml(&text).unwrap().resolved().unwrap();
        assert_eq!(back.provenance(), text);
        assert_eq!(back.horizon, 7);
    }
}
