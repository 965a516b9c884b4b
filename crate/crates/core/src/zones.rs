//! Traffic-assignment zones: attributes and spatial adjacency.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flood::{CellZone, TerrainGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneAttributes {
    /// Share of the zone surface that is sealed (roads, roofs, squares).
    pub paved_fraction: f64,
    pub permeable_soil: bool,
    /// Trip production weight.
    pub population: f64,
    /// Trip attraction weight.
    pub jobs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLayout {
    pub attributes: Vec<ZoneAttributes>,
    /// Undirected adjacency, each pair stored once with `a < b`, sorted.
    pub adjacency: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ZoneRow {
    id: usize,
    paved_fraction: f64,
    permeable_soil: bool,
    population: f64,
    jobs: f64,
}

#[derive(Serialize, Deserialize)]
struct AdjacencyRow {
    a: usize,
    b: usize,
}

impl ZoneLayout {
    pub fn new(attributes: Vec<ZoneAttributes>, adjacency: Vec<(usize, usize)>) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> = adjacency.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        let layout = ZoneLayout {
            attributes,
            adjacency: set.into_iter().collect(),
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.attributes.len();
        if n == 0 {
            return Err(Error::config("zones", "at least one zone required"));
        }
        for &(a, b) in &self.adjacency {
            if a >= n || b >= n || a == b {
                return Err(Error::Data(format!("invalid zone adjacency pair ({a}, {b})")));
            }
        }
        for (i, z) in self.attributes.iter().enumerate() {
            if !(0.0..=1.0).contains(&z.paved_fraction) {
                return Err(Error::Data(format!("zone {i}: paved_fraction outside [0, 1]")));
            }
            if !(z.population >= 0.0 && z.jobs >= 0.0) {
                return Err(Error::Data(format!("zone {i}: negative population or jobs")));
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.attributes.len()
    }

    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count()];
        for &(a, b) in &self.adjacency {
            out[a].push(b);
            out[b].push(a);
        }
        for n in &mut out {
            n.sort_unstable();
        }
        out
    }

    /// Zone pairs whose cells share a 4-connected border.
    pub fn adjacency_from_terrain(grid: &TerrainGrid) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for i in 0..grid.cell_count() {
            let CellZone::Zone(a) = grid.zone_of_cell[i] else {
                continue;
            };
            for j in grid.neighbours(i) {
                if let CellZone::Zone(b) = grid.zone_of_cell[j] {
                    if a != b {
                        set.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    pub fn write(&self, zones_path: &Path, adjacency_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(zones_path).map_err(|e| csv_err(zones_path, e))?;
        for (id, z) in self.attributes.iter().enumerate() {
            w.serialize(ZoneRow {
                id,
                paved_fraction: z.paved_fraction,
                permeable_soil: z.permeable_soil,
                population: z.population,
                jobs: z.jobs,
            })
            .map_err(|e| csv_err(zones_path, e))?;
        }
        w.flush().map_err(|e| Error::io(zones_path, e))?;
        let mut w = csv::Writer::from_path(adjacency_path).map_err(|e| csv_err(adjacency_path, e))?;
        for &(a, b) in &self.adjacency {
            w.serialize(AdjacencyRow { a, b })
                .map_err(|e| csv_err(adjacency_path, e))?;
        }
        w.flush().map_err(|e| Error::io(adjacency_path, e))
    }

    pub fn read(zones_path: &Path, adjacency_path: &Path) -> Result<Self> {
        let mut attributes = Vec::new();
        let mut rdr = csv::Reader::from_path(zones_path).map_err(|e| csv_err(zones_path, e))?;
        for (i, row) in rdr.deserialize::<ZoneRow>().enumerate() {
            let row = row.map_err(|e| csv_err(zones_path, e))?;
            if row.id != i {
                return Err(Error::parse(
                    zones_path.display().to_string(),
                    i + 2,
                    format!("zone id {} out of order", row.id),
                ));
            }
            attributes.push(ZoneAttributes {
                paved_fraction: row.paved_fraction,
                permeable_soil: row.permeable_soil,
                population: row.population,
                jobs: row.jobs,
            });
        }
        let mut adjacency = Vec::new();
        let mut rdr = csv::Reader::from_path(adjacency_path).map_err(|e| csv_err(adjacency_path, e))?;
        for row in rdr.deserialize::<AdjacencyRow>() {
            let row = row.map_err(|e| csv_err(adjacency_path, e))?;
            adjacency.push((row.a, row.b));
        }
        ZoneLayout::new(attributes, adjacency)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path.display().to_string(), line, e.to_string())
}
