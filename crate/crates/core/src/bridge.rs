//! Flat-array transport of the environment's reset/step/mask protocol, for
//! bindings that cannot hold Rust types.
//!
//! Memory layout of a [`BridgeObservation`]:
//!
//! * `features`: row-major `zones × feature_dim` f64, rows in zone order,
//!   columns `[I_prev, D_prev, C_prev, z_0 .. z_6]` exactly as in
//!   [`EnvState::features`].
//! * `edges`: `2 × edge_count` u32, pairs `(a, b)` laid out consecutively.
//! * `mask`: row-major `zones × KIND_COUNT` u8, `1` when the kind may be
//!   chosen, columns in [`InterventionKind::ALL`] order.
//!
//! Actions travel as kind indices (`0` = DoNothing).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::CityBundle;
use crate::env::{AdaptationEnv, EnvConfig, EnvState, ScenarioSet, World, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::forcing::ScenarioId;
use crate::valuation::{CostBreakdown, InterventionKind, KIND_COUNT};

/// Bumped whenever the observation layout or step semantics change.
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeObservation {
    pub protocol: u32,
    pub zones: usize,
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub edges: Vec<u32>,
    pub mask: Vec<u8>,
    pub step: u64,
}

impl BridgeObservation {
    pub fn from_state(state: &EnvState) -> Self {
        BridgeObservation {
            protocol: PROTOCOL_VERSION,
            zones: state.zone_count(),
            feature_dim: FEATURE_DIM,
            features: state.features.iter().flatten().copied().collect(),
            edges: state
                .adjacency
                .iter()
                .flat_map(|&(a, b)| [a as u32, b as u32])
                .collect(),
            mask: state.masks.iter().flatten().map(|&m| m as u8).collect(),
            step: state.step as u64,
        }
    }

    pub fn mask_shape(&self) -> (usize, usize) {
        (self.zones, KIND_COUNT)
    }

    pub fn feature_shape(&self) -> (usize, usize) {
        (self.zones, self.feature_dim)
    }

    /// Hex SHA-256 over the little-endian encoding of every field in
    /// declaration order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.protocol.to_le_bytes());
        h.update((self.zones as u64).to_le_bytes());
        h.update((self.feature_dim as u64).to_le_bytes());
        for f in &self.features {
            h.update(f.to_bits().to_le_bytes());
        }
        for e in &self.edges {
            h.update(e.to_le_bytes());
        }
        h.update(&self.mask);
        h.update(self.step.to_le_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeInfo {
    pub year: i32,
    pub rainfall_mm: f64,
    pub costs: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeStep {
    pub observation: BridgeObservation,
    pub reward: f64,
    pub terminated: bool,
    /// Always false: episodes end only at the horizon.
    pub truncated: bool,
    pub info: BridgeInfo,
}

/// One environment instance. Not shared across threads.
#[derive(Debug, Clone)]
pub struct BridgeHandle {
    env: AdaptationEnv,
}

impl BridgeHandle {
    pub fn new(world: Arc<World>) -> Self {
        BridgeHandle {
            env: AdaptationEnv::new(world),
        }
    }

    pub fn open(bundle_dir: &Path, config: EnvConfig, scenarios: ScenarioSet) -> Result<Self> {
        let bundle = CityBundle::read(bundle_dir)?;
        Ok(Self::new(World::new(config, bundle, scenarios)?))
    }

    pub fn protocol_version(&self) -> u32 {
        PROTOCOL_VERSION
    }

    pub fn zone_count(&self) -> usize {
        self.env.world().zone_count()
    }

    pub fn reset(&mut self, scenario: &str, seed: u64) -> Result<BridgeObservation> {
        let id: ScenarioId = scenario.parse()?;
        Ok(BridgeObservation::from_state(&self.env.reset(id, seed)?))
    }

    pub fn mask(&self) -> Vec<u8> {
        self.env.masks().iter().flatten().map(|&m| m as u8).collect()
    }

    pub fn step(&mut self, actions: &[i64]) -> Result<BridgeStep> {
        let zones = self.zone_count();
        if actions.len() != zones {
            return Err(Error::Shape(format!("expected {zones} actions, got {}", actions.len())));
        }
        let kinds = actions
            .iter()
            .enumerate()
            .map(|(z, &a)| {
                usize::try_from(a)
                    .ok()
                    .and_then(InterventionKind::from_index)
                    .ok_or_else(|| Error::Contract(format!("zone {z}: action index {a} outside 0..{KIND_COUNT}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = self.env.step(&kinds)?;
        Ok(BridgeStep {
            observation: BridgeObservation::from_state(&out.state),
            reward: out.reward,
            terminated: out.done,
            truncated: false,
            info: BridgeInfo {
                year: out.event.year,
                rainfall_mm: out.event.depth_mm,
                costs: out.costs,
            },
        })
    }
}
