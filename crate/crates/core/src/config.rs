//! TOML run configuration shared by every CLI command.
//!
//! ```toml
//! scenario_files = ["rcp45.txt"]   # optional overrides of the built-in statistics
//!
//! [city]
//! bundle = "city"                  # directory written by `generate`; omit to synthesize
//! seed = 7
//! [city.synthetic]
//! zones = 4
//!
//! [env]
//! [policy]
//! hidden = 32
//! [train]
//! max_env_steps = 199680
//! [report]
//! currency = "EUR"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::CityBundle;
use crate::env::{EnvConfig, ScenarioSet, World};
use crate::error::{Error, Result};
use crate::forcing::ScenarioStats;
use crate::network::synthetic::{generate_synthetic_city, CitySpec};
use crate::policy::PolicyConfig;
use crate::report::ReportConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CityConfig {
    pub bundle: Option<PathBuf>,
    /// Seed for the synthetic generator; ignored with `bundle`.
    pub seed: u64,
    pub synthetic: CitySpec,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            bundle: None,
            seed: 7,
            synthetic: CitySpec::default(),
        }
    }
}

impl CityConfig {
    pub fn build(&self) -> Result<CityBundle> {
        match &self.bundle {
            Some(dir) => CityBundle::read(dir),
            None => generate_synthetic_city(&self.synthetic, &mut ChaCha8Rng::seed_from_u64(self.seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario_files: Vec<PathBuf>,
    pub city: CityConfig,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    /// Desk-scale settings for the default four-zone city, with a storage tank
    /// cheap enough to be the one clearly worthwhile intervention.
    pub fn smoke() -> Self {
        let mut env = EnvConfig::default();
        env.catalog.storage_tank.implementation_cost_dkk = 1.5e6;
        env.catalog.storage_tank.maintenance_cost_dkk_per_year = 10_000.0;
        RunConfig {
            env,
            policy: PolicyConfig {
                hidden: 32,
                ..PolicyConfig::default()
            },
            train: TrainConfig {
                rollout_steps_per_update: 256,
                parallel_envs: 4,
                max_env_steps: 199_680,
                learning_rate: 1e-3,
                reward_scale: 1e8,
                gamma: 0.99,
                early_stop_patience: Some(1000),
                ..TrainConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
            Error::parse(source, line, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(b) = &cfg.city.bundle {
            cfg.city.bundle = Some(base.join(b));
        }
        for f in &mut cfg.scenario_files {
            *f = base.join(&*f);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.city.bundle.is_none() {
            self.city.synthetic.validate()?;
        }
        self.env.validate()?;
        self.policy.validate()?;
        self.train.validate()?;
        self.report.validate()
    }

    pub fn scenarios(&self) -> Result<ScenarioSet> {
        let mut set = ScenarioSet::synthetic();
        for f in &self.scenario_files {
            set.insert(ScenarioStats::load(f)?);
        }
        Ok(set)
    }

    pub fn world(&self) -> Result<Arc<World>> {
        self.validate()?;
        World::new(self.env.clone(), self.city.build()?, self.scenarios()?)
    }
}
