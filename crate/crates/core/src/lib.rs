//! Closed-loop planning of urban flood adaptation.
//!
//! Each simulated year samples an extreme rainfall depth for the chosen
//! climate scenario ([`forcing`]), settles the runoff on a terrain grid
//! ([`flood`]), routes the trip table over the flooded street network
//! ([`network`]) and prices the consequences per zone ([`valuation`]).
//! [`env::AdaptationEnv`] wraps that loop as a masked multi-zone decision
//! process, [`policy`] holds a graph policy over the zone adjacency and
//! [`trainer`] fits it with PPO and runs the baselines. [`cli`] and
//! [`report`] turn runs into tables, traces and plots; [`bridge`] exposes
//! the environment as flat arrays for foreign bindings.
//!
//! ```no_run
//! use adapt_iam::config::RunConfig;
//! use adapt_iam::forcing::ScenarioId;
//! use adapt_iam::trainer::{evaluate, train, Controller};
//!
//! let cfg = RunConfig::smoke();
//! let world = cfg.world()?;
//! let run = train(world.clone(), ScenarioId::Rcp45, &cfg.train, &cfg.policy, None, None, None)?;
//! let episodes = evaluate(&world, Controller::Policy(&run.params), None, ScenarioId::Rcp45, &[0, 1, 2])?;
//! println!("{}", episodes[0].total_reward);
//! # Ok::<(), adapt_iam::Error>(())
//! ```

pub mod bridge;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod flood;
pub mod forcing;
pub mod network;
pub mod policy;
pub mod report;
pub mod trainer;
pub mod valuation;
pub mod zones;

pub use error::{Error, Result};
