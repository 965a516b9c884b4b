//! Volume-tracking depression filling.
//!
//! Rain placed on a cell runs down the steepest 4-connected descent of the
//! current water surface until it reaches a local minimum. From there a lake
//! is grown in priority-flood order: the lowest cell on the lake rim is
//! absorbed once the lake level reaches it. If the rim cell has a lower
//! neighbour outside the lake, the lake spills there and the remaining
//! volume continues downhill. Lake levels are stored explicitly, so two
//! lakes that meet at a saddle compare exactly equal and merge.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::grid::{CellZone, TerrainGrid};

/// What happens at the edge of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Water crossing the grid edge is lost.
    #[default]
    Open,
    /// The grid edge is a wall; only boundary-marked cells drain.
    Closed,
}

const SINK: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Rim {
    surface: f64,
    cell: usize,
}

impl PartialEq for Rim {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Rim {}

impl PartialOrd for Rim {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so BinaryHeap pops the lowest surface first; ties by cell index.
impl Ord for Rim {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .surface
            .total_cmp(&self.surface)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

/// Result of a fill: per-cell water depth and the volume lost at outlets.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFill {
    pub depth_m: Vec<f64>,
    pub inflow_m3: f64,
    pub outflow_m3: f64,
}

impl CellFill {
    pub fn ponded_m3(&self, cell_area_m2: f64) -> f64 {
        self.depth_m.iter().sum::<f64>() * cell_area_m2
    }
}

/// Per-grid precomputation for repeated fills of the same terrain.
#[derive(Debug, Clone)]
pub struct DepressionFiller {
    grid: TerrainGrid,
    mode: BoundaryMode,
    neighbours: Vec<Vec<usize>>,
    drains_outside: Vec<bool>,
    is_sink: Vec<bool>,
    /// Where water landing on each cell of the dry terrain ends up.
    dry_terminal: Vec<usize>,
    zone_cells: Vec<usize>,
}

impl DepressionFiller {
    pub fn new(grid: &TerrainGrid, mode: BoundaryMode) -> Self {
        let n = grid.cell_count();
        let neighbours: Vec<Vec<usize>> = (0..n).map(|i| grid.neighbours(i).collect()).collect();
        let is_sink: Vec<bool> = grid.zone_of_cell.iter().map(|z| *z == CellZone::Boundary).collect();
        let drains_outside: Vec<bool> = (0..n).map(|i| mode == BoundaryMode::Open && grid.is_edge(i)).collect();
        let zone_cells = grid.zone_cell_counts(grid.zone_count());
        let mut filler = DepressionFiller {
            grid: grid.clone(),
            mode,
            neighbours,
            drains_outside,
            is_sink,
            dry_terminal: Vec::new(),
            zone_cells,
        };
        let surface = grid.elevation.clone();
        filler.dry_terminal = (0..n).map(|i| filler.descend(&surface, i)).collect();
        filler
    }

    pub fn grid(&self) -> &TerrainGrid {
        &self.grid
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    /// Steepest descent on `surface` from `start`; returns the local minimum
    /// reached or `SINK` if the water leaves the domain.
    fn descend(&self, surface: &[f64], start: usize) -> usize {
        let mut cur = start;
        loop {
            if self.is_sink[cur] || self.drains_outside[cur] {
                return SINK;
            }
            let mut best = cur;
            let mut best_surface = surface[cur];
            for &nb in &self.neighbours[cur] {
                let s = if self.is_sink[nb] {
                    f64::NEG_INFINITY
                } else {
                    surface[nb]
                };
                if s < best_surface {
                    best = nb;
                    best_surface = s;
                }
            }
            if best == cur {
                return cur;
            }
            cur = best;
        }
    }

    /// Distributes each zone's inflow volume (m³) uniformly over the zone's
    /// cells and lets it settle.
    pub fn fill(&self, inflow_per_zone: &[f64]) -> CellFill {
        let grid = &self.grid;
        let n = grid.cell_count();
        let area = grid.cell_area_m2();
        let mut pooled = vec![0.0; n];
        let mut inflow = 0.0;
        let mut outflow = 0.0;
        for i in 0..n {
            let CellZone::Zone(z) = grid.zone_of_cell[i] else {
                continue;
            };
            let total = inflow_per_zone.get(z).copied().unwrap_or(0.0).max(0.0);
            if total == 0.0 || self.zone_cells[z] == 0 {
                continue;
            }
            let w = total / self.zone_cells[z] as f64;
            inflow += w;
            match self.dry_terminal[i] {
                SINK => outflow += w,
                t => pooled[t] += w,
            }
        }

        let mut surface = grid.elevation.clone();
        let mut work = LakeScratch::new(n);
        for (cell, &vol) in pooled.iter().enumerate() {
            if vol > 0.0 {
                outflow += self.pour(&mut surface, &mut work, cell, vol, area);
            }
        }

        let depth_m = surface
            .iter()
            .zip(&grid.elevation)
            .zip(&self.is_sink)
            .map(|((s, e), &sink)| if sink { 0.0 } else { (s - e).max(0.0) })
            .collect();
        CellFill {
            depth_m,
            inflow_m3: inflow,
            outflow_m3: outflow,
        }
    }

    /// Pours `vol` at `start`; returns the volume that left the domain.
    fn pour(&self, surface: &mut [f64], work: &mut LakeScratch, start: usize, mut vol: f64, area: f64) -> f64 {
        let mut at = start;
        loop {
            let min = self.descend(surface, at);
            if min == SINK {
                return vol;
            }
            match self.grow_lake(surface, work, min, vol, area) {
                Settle::Done => return 0.0,
                Settle::Spill { cell, rest } if cell == SINK => return rest,
                Settle::Spill { cell, rest } => {
                    at = cell;
                    vol = rest;
                }
            }
        }
    }

    fn grow_lake(&self, surface: &mut [f64], work: &mut LakeScratch, min: usize, mut vol: f64, area: f64) -> Settle {
        work.begin();
        let mut lake = vec![min];
        work.mark(min);
        let mut level = surface[min];
        let mut heap = BinaryHeap::new();
        self.push_rim(surface, work, &mut heap, min);

        let outcome = loop {
            if vol <= 0.0 {
                break Settle::Done;
            }
            let Some(Rim { surface: s, cell }) = heap.pop() else {
                // closed domain fully covered: the level simply rises
                level += vol / (lake.len() as f64 * area);
                break Settle::Done;
            };
            if s < level {
                break Settle::Spill { cell, rest: vol };
            }
            let need = (s - level) * lake.len() as f64 * area;
            if need > vol {
                level += vol / (lake.len() as f64 * area);
                break Settle::Done;
            }
            vol -= need;
            level = s;
            lake.push(cell);
            work.mark(cell);
            self.push_rim(surface, work, &mut heap, cell);
        };
        for &c in &lake {
            surface[c] = level;
        }
        outcome
    }

    fn push_rim(&self, surface: &[f64], work: &mut LakeScratch, heap: &mut BinaryHeap<Rim>, cell: usize) {
        if self.drains_outside[cell] {
            heap.push(Rim {
                surface: f64::NEG_INFINITY,
                cell: SINK,
            });
        }
        for &nb in &self.neighbours[cell] {
            if work.seen(nb) {
                continue;
            }
            work.mark(nb);
            let s = if self.is_sink[nb] {
                f64::NEG_INFINITY
            } else {
                surface[nb]
            };
            let target = if self.is_sink[nb] { SINK } else { nb };
            heap.push(Rim {
                surface: s,
                cell: target,
            });
        }
    }
}

enum Settle {
    Done,
    Spill { cell: usize, rest: f64 },
}

/// Generation-stamped visit marks reused across lake growths.
struct LakeScratch {
    stamp: Vec<u32>,
    generation: u32,
}

impl LakeScratch {
    fn new(n: usize) -> Self {
        LakeScratch {
            stamp: vec![0; n],
            generation: 0,
        }
    }

    fn begin(&mut self) {
        self.generation += 1;
    }

    fn mark(&mut self, i: usize) {
        self.stamp[i] = self.generation;
    }

    fn seen(&self, i: usize) -> bool {
        self.stamp[i] == self.generation
    }
}
