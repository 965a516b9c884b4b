//! Event flood model: zone inflows minus intervention capacity, settled on
//! the terrain by depression filling and sampled onto network edges.

mod fill;
mod grid;

pub use fill::{BoundaryMode, CellFill, DepressionFiller};
pub use grid::{CellZone, TerrainGrid};

use serde::{Deserialize, Serialize};

use crate::env::ZoneLedger;
use crate::network::TransportNetwork;
use crate::valuation::InterventionCatalog;

/// How a network element's depth is read from the cells it crosses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementDepth {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FloodOptions {
    pub boundary: BoundaryMode,
    pub element_depth: ElementDepth,
}

/// Water depth (m) on every terrain cell and every network edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodField {
    pub cell_depth: Vec<f64>,
    pub element_depth: Vec<f64>,
    pub inflow_m3: f64,
    pub outflow_m3: f64,
}

impl FloodField {
    pub fn dry(cells: usize, elements: usize) -> Self {
        FloodField {
            cell_depth: vec![0.0; cells],
            element_depth: vec![0.0; elements],
            inflow_m3: 0.0,
            outflow_m3: 0.0,
        }
    }

    pub fn is_dry(&self) -> bool {
        self.cell_depth.iter().all(|&d| d == 0.0)
    }
}

/// Grid cells crossed by the straight segment between an edge's endpoints,
/// sampled at half-cell spacing, deduplicated in order.
pub fn edge_cells(grid: &TerrainGrid, net: &TransportNetwork, edge: usize) -> Vec<usize> {
    let e = &net.edges[edge];
    let (a, b) = (&net.nodes[e.from], &net.nodes[e.to]);
    let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    let samples = ((2.0 * len / grid.cell_size_m).ceil() as usize).max(1);
    let mut cells = Vec::with_capacity(samples + 1);
    for k in 0..=samples {
        let t = k as f64 / samples as f64;
        let c = grid.cell_at(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    cells
}

/// Fills depressions with the given zone inflow volumes (m³) and returns
/// cell depths; element depths are left empty.
pub fn fill_depressions(grid: &TerrainGrid, inflow_per_zone: &[f64], boundary: BoundaryMode) -> FloodField {
    let fill = DepressionFiller::new(grid, boundary).fill(inflow_per_zone);
    FloodField {
        cell_depth: fill.depth_m,
        element_depth: Vec::new(),
        inflow_m3: fill.inflow_m3,
        outflow_m3: fill.outflow_m3,
    }
}

/// Terrain and network precomputation shared by every event of an episode.
#[derive(Debug, Clone)]
pub struct FloodModel {
    filler: DepressionFiller,
    zone_area_m2: Vec<f64>,
    edge_cells: Vec<Vec<usize>>,
    options: FloodOptions,
}

impl FloodModel {
    pub fn new(grid: &TerrainGrid, net: &TransportNetwork, zones: usize, options: FloodOptions) -> Self {
        FloodModel {
            filler: DepressionFiller::new(grid, options.boundary),
            zone_area_m2: grid.zone_areas_m2(zones),
            edge_cells: (0..net.edges.len()).map(|e| edge_cells(grid, net, e)).collect(),
            options,
        }
    }

    pub fn grid(&self) -> &TerrainGrid {
        self.filler.grid()
    }

    pub fn zone_area_m2(&self) -> &[f64] {
        &self.zone_area_m2
    }

    /// Net event volume per zone after intervention capacity, never negative.
    pub fn zone_inflow_m3(&self, depth_mm: f64, ledger: &ZoneLedger, catalog: &InterventionCatalog) -> Vec<f64> {
        self.zone_area_m2
            .iter()
            .enumerate()
            .map(|(z, area)| {
                let gross = depth_mm.max(0.0) / 1000.0 * area;
                let held = if z < ledger.zone_count() {
                    ledger.effective_capacity_m3(z, catalog)
                } else {
                    0.0
                };
                (gross - held).max(0.0)
            })
            .collect()
    }

    pub fn fill(&self, inflow_per_zone: &[f64]) -> FloodField {
        let fill = self.filler.fill(inflow_per_zone);
        let element_depth = self
            .edge_cells
            .iter()
            .map(|cells| {
                let depths = cells.iter().map(|&c| fill.depth_m[c]);
                match self.options.element_depth {
                    ElementDepth::Max => depths.fold(0.0, f64::max),
                    ElementDepth::Mean => depths.sum::<f64>() / cells.len() as f64,
                }
            })
            .collect();
        FloodField {
            cell_depth: fill.depth_m,
            element_depth,
            inflow_m3: fill.inflow_m3,
            outflow_m3: fill.outflow_m3,
        }
    }

    pub fn compute_flood(&self, depth_mm: f64, ledger: &ZoneLedger, catalog: &InterventionCatalog) -> FloodField {
        if depth_mm <= 0.0 {
            return FloodField::dry(self.grid().cell_count(), self.edge_cells.len());
        }
        self.fill(&self.zone_inflow_m3(depth_mm, ledger, catalog))
    }
}
