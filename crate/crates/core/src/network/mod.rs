//! Multi-modal transport network, trip demand and flood-aware routing.

mod disruption;
mod io;
mod routing;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use disruption::{disrupted_speed, DisruptionCurve, DisruptionParams};
pub use routing::{route_all, BaselineRoutes, Router, TripOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Drive,
    Cycle,
    Walk,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Drive, Mode::Cycle, Mode::Walk];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Drive => "drive",
            Mode::Cycle => "cycle",
            Mode::Walk => "walk",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Mode::Drive => 1,
            Mode::Cycle => 2,
            Mode::Walk => 4,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drive" => Ok(Mode::Drive),
            "cycle" => Ok(Mode::Cycle),
            "walk" => Ok(Mode::Walk),
            other => Err(Error::Data(format!("unknown mode `{other}`"))),
        }
    }
}

/// A value per travel mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerMode<T> {
    pub drive: T,
    pub cycle: T,
    pub walk: T,
}

impl<T: Copy> PerMode<T> {
    pub fn uniform(v: T) -> Self {
        PerMode {
            drive: v,
            cycle: v,
            walk: v,
        }
    }

    pub fn get(&self, mode: Mode) -> T {
        match mode {
            Mode::Drive => self.drive,
            Mode::Cycle => self.cycle,
            Mode::Walk => self.walk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const ALL: ModeSet = ModeSet(7);

    pub fn empty() -> Self {
        ModeSet(0)
    }

    pub fn with(mut self, mode: Mode) -> Self {
        self.0 |= mode.bit();
        self
    }

    pub fn contains(self, mode: Mode) -> bool {
        self.0 & mode.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Mode> {
        Mode::ALL.into_iter().filter(move |m| self.contains(*m))
    }
}

impl fmt::Display for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Mode::as_str).collect();
        f.write_str(&names.join("|"))
    }
}

impl FromStr for ModeSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split('|')
            .filter(|p| !p.trim().is_empty())
            .try_fold(ModeSet::empty(), |acc, p| Ok(acc.with(p.parse()?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub zone: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub length_m: f64,
    pub modes: ModeSet,
    pub speed_kmh: f64,
    pub reconstruction_cost_per_m: f64,
}

/// Directed transport graph. Node and edge ids are their indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportNetwork {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl TransportNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let net = TransportNetwork { nodes, edges };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if !(node.x.is_finite() && node.y.is_finite()) {
                return Err(Error::Data(format!("node {i} has non-finite coordinates")));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::Data(format!(
                    "edge {i} references missing node ({} -> {})",
                    e.from, e.to
                )));
            }
            if !(e.length_m.is_finite() && e.length_m > 0.0) {
                return Err(Error::Data(format!("edge {i} has non-positive length")));
            }
            if !(e.speed_kmh.is_finite() && e.speed_kmh > 0.0) {
                return Err(Error::Data(format!("edge {i} has non-positive free-flow speed")));
            }
            if !(e.reconstruction_cost_per_m.is_finite() && e.reconstruction_cost_per_m >= 0.0) {
                return Err(Error::Data(format!("edge {i} has invalid reconstruction cost")));
            }
            if e.modes.is_empty() {
                return Err(Error::Data(format!("edge {i} permits no mode")));
            }
        }
        Ok(())
    }

    pub fn edge_midpoint(&self, edge: usize) -> (f64, f64) {
        let e = &self.edges[edge];
        let a = &self.nodes[e.from];
        let b = &self.nodes[e.to];
        (0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
    }

    /// True if `node` has an outgoing edge usable by `mode`.
    pub fn mode_leaves(&self, node: usize, mode: Mode) -> bool {
        self.edges.iter().any(|e| e.from == node && e.modes.contains(mode))
    }

    pub fn nodes_in_zone(&self, zone: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.zone == zone)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub origin: usize,
    pub destination: usize,
    pub mode: Mode,
    /// Persons represented by this trip row.
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripTable {
    pub trips: Vec<Trip>,
}

impl TripTable {
    pub fn validate(&self, net: &TransportNetwork) -> Result<()> {
        let n = net.nodes.len();
        for (i, t) in self.trips.iter().enumerate() {
            if t.origin >= n || t.destination >= n {
                return Err(Error::Data(format!(
                    "trip {i}: origin {} or destination {} is not a network node",
                    t.origin, t.destination
                )));
            }
            if t.origin == t.destination {
                return Err(Error::Data(format!("trip {i}: origin equals destination")));
            }
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(Error::Data(format!("trip {i}: invalid weight {}", t.weight)));
            }
            if !net.mode_leaves(t.origin, t.mode) {
                return Err(Error::Data(format!(
                    "trip {i}: mode {} not permitted on any edge leaving node {}",
                    t.mode, t.origin
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }
}

pub use io::{read_network, read_trips, write_network, write_trips};
