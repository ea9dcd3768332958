use std::fs;
use std::path::{Path, PathBuf};

use dualformer::data::{SynthConfig, WindowSpec};
use dualformer::distill::DistillConfig;
use dualformer::dual::DualConfig;
use dualformer::teacher::TgcnConfig;
use dualformer::{Error, Result};
use serde::{Deserialize, Serialize};

/// Speed and adjacency files. Without them the synthetic generator is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub speeds: PathBuf,
    pub adjacency: Option<PathBuf>,
}

/// Everything one run needs, read from a TOML file and then overridden by
/// command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds model initialization and batch shuffling.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub data: Option<DataPaths>,
    pub synth: SynthConfig,
    pub window: WindowSpec,
    pub model: DualConfig,
    pub teacher: TgcnConfig,
    pub training: DistillConfig,
    /// Optimizer and stopping settings for teacher pretraining. Falls back to
    /// `training` when absent.
    pub teacher_training: Option<DistillConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Copies the top-level seed into the training sections.
    pub fn resolve(mut self) -> Self {
        self.training.seed = self.seed;
        if let Some(t) = &mut self.teacher_training {
            t.seed = self.seed;
        }
        self
    }

    pub fn teacher_training(&self) -> DistillConfig {
        self.teacher_training.unwrap_or(self.training)
    }

    /// Rejects bad weights, head counts and window lengths before any data is
    /// loaded or model built.
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if let Some(t) = &self.teacher_training {
            t.validate()?;
        }
        self.model.validate()?;
        self.teacher.validate()?;
        if self.window.lookback == 0 || self.window.horizon == 0 {
            return Err(Error::Config(format!(
                "lookback ({}) and horizon ({}) must be ≥ 1",
                self.window.lookback, self.window.horizon
            )));
        }
        if self.teacher.horizon != self.window.horizon {
            return Err(Error::Config(format!(
                "teacher horizon {} differs from window horizon {}",
                self.teacher.horizon, self.window.horizon
            )));
        }
        if self.data.is_none() {
            self.synth.validate()?;
            self.check_steps(self.synth.steps)?;
        }
        Ok(())
    }

    pub fn check_steps(&self, steps: usize) -> Result<()> {
        if self.window.total() > steps {
            return Err(Error::Config(format!(
                "lookback {} + horizon {} exceeds the {steps} available time steps",
                self.window.lookback, self.window.horizon
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig {
            seed: 9,
            ..Default::default()
        };
        c.training.alpha = 0.3;
        c.training.beta = 0.7;
        c.data = Some(DataPaths {
            speeds: "s.csv".into(),
            adjacency: None,
        });
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_weights_heads_and_windows() {
        let bad = [
            "[training]\nalpha = 0.5\nbeta = 0.6\n",
            "[model]\nd_model = 10\nheads = 4\n",
            "[window]\nlookback = 2000\nhorizon = 17\n",
            "[model]\nbranch = \"both\"\n",
            "unknown_key = 1\n",
        ];
        for text in bad {
            let r = RunConfig::from_toml(text).and_then(|c| c.validate());
            assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
        }
    }

    #[test]
    fn seed_flows_into_training() {
        let c = RunConfig::from_toml("seed = 7\n[teacher_training]\nlearning_rate = 0.01\n")
            .unwrap()
            .resolve();
        assert_eq!(c.training.seed, 7);
        assert_eq!(c.teacher_training().seed, 7);
        assert_eq!(c.teacher_training().learning_rate, 0.01);
    }
}
