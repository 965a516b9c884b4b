//! A city on disk: terrain, network, trips and zones in one directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flood::TerrainGrid;
use crate::network::{read_network, read_trips, write_network, write_trips, TransportNetwork, TripTable};
use crate::zones::ZoneLayout;

pub const TERRAIN_FILE: &str = "terrain.txt";
pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const TRIPS_FILE: &str = "trips.csv";
pub const ZONES_FILE: &str = "zones.csv";
pub const ADJACENCY_FILE: &str = "zone_adjacency.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityBundle {
    pub terrain: TerrainGrid,
    pub network: TransportNetwork,
    pub trips: TripTable,
    pub zones: ZoneLayout,
}

impl CityBundle {
    pub fn validate(&self) -> Result<()> {
        self.terrain.validate()?;
        self.network.validate()?;
        self.zones.validate()?;
        let n = self.zones.count();
        if self.terrain.zone_count() > n {
            return Err(Error::Data(format!(
                "terrain references zone {} but only {n} zones are defined",
                self.terrain.zone_count() - 1
            )));
        }
        let counts = self.terrain.zone_cell_counts(n);
        if let Some(z) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!("zone {z} has no terrain cells")));
        }
        if let Some((i, node)) = self.network.nodes.iter().enumerate().find(|(_, nd)| nd.zone >= n) {
            return Err(Error::Data(format!("node {i} references unknown zone {}", node.zone)));
        }
        self.trips.validate(&self.network)
    }

    pub fn file_paths(dir: &Path) -> Vec<PathBuf> {
        [
            TERRAIN_FILE,
            NODES_FILE,
            EDGES_FILE,
            TRIPS_FILE,
            ZONES_FILE,
            ADJACENCY_FILE,
        ]
        .iter()
        .map(|f| dir.join(f))
        .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let terrain = dir.join(TERRAIN_FILE);
        std::fs::write(&terrain, self.terrain.to_text()).map_err(|e| Error::io(&terrain, e))?;
        write_network(&self.network, &dir.join(NODES_FILE), &dir.join(EDGES_FILE))?;
        write_trips(&self.trips, &dir.join(TRIPS_FILE))?;
        self.zones.write(&dir.join(ZONES_FILE), &dir.join(ADJACENCY_FILE))?;
        Ok(Self::file_paths(dir))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let bundle = CityBundle {
            terrain: TerrainGrid::load(&dir.join(TERRAIN_FILE))?,
            network: read_network(&dir.join(NODES_FILE), &dir.join(EDGES_FILE))?,
            trips: read_trips(&dir.join(TRIPS_FILE))?,
            zones: ZoneLayout::read(&dir.join(ZONES_FILE), &dir.join(ADJACENCY_FILE))?,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}
