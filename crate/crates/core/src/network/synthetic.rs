//! Seeded synthetic cities and gravity-model trip demand.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DisruptionParams, Edge, Mode, ModeSet, Node, Router, TransportNetwork, Trip, TripTable};
use crate::bundle::CityBundle;
use crate::error::{Error, Result};
use crate::flood::{CellZone, TerrainGrid};
use crate::zones::{ZoneAttributes, ZoneLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitySpec {
    pub zones: usize,
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    /// Lattice spacing of network nodes, in cells.
    pub node_stride: usize,
    /// Number of randomized terrain depressions.
    pub depressions: usize,
    pub demand: DemandSpec,
}

impl Default for CitySpec {
    fn default() -> Self {
        CitySpec {
            zones: 4,
            width: 16,
            height: 16,
            cell_size_m: 25.0,
            node_stride: 2,
            depressions: 10,
            demand: DemandSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandSpec {
    pub trips: usize,
    pub persons_per_trip: f64,
    /// Gravity-model decay of zone-to-zone attraction per kilometre.
    pub distance_decay_per_km: f64,
}

impl Default for DemandSpec {
    fn default() -> Self {
        DemandSpec {
            trips: 500,
            persons_per_trip: 20.0,
            distance_decay_per_km: 1.5,
        }
    }
}

impl CitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.zones < 2 {
            return Err(Error::config("zones", "at least 2 zones required"));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::config("width/height", "terrain must be at least 2x2"));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::config("cell_size_m", "must be positive"));
        }
        if self.node_stride == 0 {
            return Err(Error::config("node_stride", "must be at least 1"));
        }
        let lattice = self.width.div_ceil(self.node_stride) * self.height.div_ceil(self.node_stride);
        if lattice < 2 || self.zones > lattice {
            return Err(Error::config(
                "zones",
                format!(
                    "{} zones need at least as many network nodes ({lattice} available)",
                    self.zones
                ),
            ));
        }
        self.demand.validate()
    }
}

impl DemandSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.persons_per_trip.is_finite() && self.persons_per_trip >= 0.0) {
            return Err(Error::config("persons_per_trip", "must be non-negative"));
        }
        if !(self.distance_decay_per_km.is_finite() && self.distance_decay_per_km >= 0.0) {
            return Err(Error::config("distance_decay_per_km", "must be non-negative"));
        }
        Ok(())
    }
}

/// Builds a deterministic (under `rng`) city: sloped terrain with random
/// depressions, a lattice-plus-diagonals street network, a Voronoi zone
/// partition seeded on network nodes, and gravity-model trips.
pub fn generate_synthetic_city<R: Rng + ?Sized>(spec: &CitySpec, rng: &mut R) -> Result<CityBundle> {
    spec.validate()?;
    let (w, h, cs) = (spec.width, spec.height, spec.cell_size_m);

    // lattice node cells
    let stride = spec.node_stride;
    let lat_rows = h.div_ceil(stride);
    let lat_cols = w.div_ceil(stride);
    let node_cell = |lr: usize, lc: usize| -> (usize, usize) {
        (
            (lr * stride + stride / 2).min(h - 1),
            (lc * stride + stride / 2).min(w - 1),
        )
    };

    // zones: Voronoi over distinct seed nodes
    let mut lattice: Vec<usize> = (0..lat_rows * lat_cols).collect();
    lattice.shuffle(rng);
    let seeds: Vec<(usize, usize)> = lattice[..spec.zones]
        .iter()
        .map(|&k| node_cell(k / lat_cols, k % lat_cols))
        .collect();
    let mut zone_of_cell = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (z, &(sr, sc)) in seeds.iter().enumerate() {
                let d = (r as f64 - sr as f64).powi(2) + (c as f64 - sc as f64).powi(2);
                if d < best_d {
                    best_d = d;
                    best = z;
                }
            }
            zone_of_cell.push(CellZone::Zone(best));
        }
    }

    // terrain: a low dome draining to the edges, small noise, then pits
    let mut elevation = vec![0.0; w * h];
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let span = cr.max(cc).max(1.0);
    for r in 0..h {
        for c in 0..w {
            let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt() / span;
            elevation[r * w + c] = 6.0 - 1.5 * d + rng.gen_range(0.0..0.05);
        }
    }
    for _ in 0..spec.depressions {
        let pr = rng.gen_range(0.0..h as f64);
        let pc = rng.gen_range(0.0..w as f64);
        let radius = rng.gen_range(1.5..3.5);
        let depth = rng.gen_range(0.3..1.2);
        for r in 0..h {
            for c in 0..w {
                let d2 = ((r as f64 - pr).powi(2) + (c as f64 - pc).powi(2)) / (radius * radius);
                if d2 < 1.0 {
                    elevation[r * w + c] -= depth * (1.0 - d2);
                }
            }
        }
    }
    let terrain = TerrainGrid::new(w, h, cs, elevation, zone_of_cell)?;

    // network
    let mut nodes = Vec::with_capacity(lat_rows * lat_cols);
    for lr in 0..lat_rows {
        for lc in 0..lat_cols {
            let (r, c) = node_cell(lr, lc);
            let CellZone::Zone(zone) = terrain.zone_of_cell[terrain.index(r, c)] else {
                unreachable!("generated cells all belong to zones");
            };
            nodes.push(Node {
                x: (c as f64 + 0.5) * cs,
                y: (r as f64 + 0.5) * cs,
                zone,
            });
        }
    }
    let mut edges = Vec::new();
    let walk_cycle = ModeSet::empty().with(Mode::Walk).with(Mode::Cycle);
    for lr in 0..lat_rows {
        for lc in 0..lat_cols {
            let a = lr * lat_cols + lc;
            let mut link = |lr2: usize, lc2: usize, diagonal: bool, rng: &mut R| {
                let b = lr2 * lat_cols + lc2;
                let (na, nb) = (&nodes[a], &nodes[b]);
                let length = ((na.x - nb.x).powi(2) + (na.y - nb.y).powi(2)).sqrt();
                let pedestrian = rng.gen_bool(if diagonal { 0.4 } else { 0.15 });
                let arterial = !diagonal && (lr % 4 == 0 || lc % 4 == 0);
                let (modes, speed, cost) = if pedestrian {
                    (walk_cycle, 20.0, 3_000.0)
                } else if arterial {
                    (ModeSet::ALL, 50.0, 12_000.0)
                } else {
                    (ModeSet::ALL, 30.0, 8_000.0)
                };
                for (from, to) in [(a, b), (b, a)] {
                    edges.push(Edge {
                        from,
                        to,
                        length_m: length,
                        modes,
                        speed_kmh: speed,
                        reconstruction_cost_per_m: cost,
                    });
                }
            };
            if lc + 1 < lat_cols {
                link(lr, lc + 1, false, rng);
            }
            if lr + 1 < lat_rows {
                link(lr + 1, lc, false, rng);
            }
            if lr + 1 < lat_rows && lc + 1 < lat_cols {
                link(lr + 1, lc + 1, true, rng);
            }
            if lr + 1 < lat_rows && lc > 0 {
                link(lr + 1, lc - 1, true, rng);
            }
        }
    }
    let network = TransportNetwork::new(nodes, edges)?;

    let attributes = (0..spec.zones)
        .map(|_| ZoneAttributes {
            paved_fraction: rng.gen_range(0.3..0.9),
            permeable_soil: rng.gen_bool(0.5),
            population: rng.gen_range(500.0..3000.0),
            jobs: rng.gen_range(200.0..4000.0),
        })
        .collect();
    let zones = ZoneLayout::new(attributes, ZoneLayout::adjacency_from_terrain(&terrain))?;
    let trips = sample_trips(&network, &zones, &spec.demand, rng)?;

    let bundle = CityBundle {
        terrain,
        network,
        trips,
        zones,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Samples a trip table: origin/destination zones by a gravity model, then
/// endpoints uniformly among each zone's network nodes. Modes follow trip
/// length; a mode that cannot complete the trip on the dry network falls
/// back to walking.
pub fn sample_trips<R: Rng + ?Sized>(
    net: &TransportNetwork,
    zones: &ZoneLayout,
    spec: &DemandSpec,
    rng: &mut R,
) -> Result<TripTable> {
    spec.validate()?;
    let nz = zones.count();
    let members: Vec<Vec<usize>> = (0..nz).map(|z| net.nodes_in_zone(z)).collect();
    let centroid: Vec<(f64, f64)> = members
        .iter()
        .map(|m| {
            let k = m.len().max(1) as f64;
            let sx: f64 = m.iter().map(|&i| net.nodes[i].x).sum();
            let sy: f64 = m.iter().map(|&i| net.nodes[i].y).sum();
            (sx / k, sy / k)
        })
        .collect();

    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for o in 0..nz {
        for d in 0..nz {
            if members[o].is_empty() || members[d].is_empty() {
                continue;
            }
            if o == d && members[o].len() < 2 {
                continue;
            }
            let dist_km =
                ((centroid[o].0 - centroid[d].0).powi(2) + (centroid[o].1 - centroid[d].1).powi(2)).sqrt() / 1000.0;
            let a = &zones.attributes;
            let wgt = a[o].population * a[d].jobs * (-spec.distance_decay_per_km * dist_km).exp();
            if wgt > 0.0 {
                pairs.push((o, d));
                weights.push(wgt);
            }
        }
    }
    if spec.trips > 0 && pairs.is_empty() {
        return Err(Error::config("trips", "no zone pair can host a trip"));
    }
    let dist = rand::distributions::WeightedIndex::new(&weights).map_err(|e| Error::config("trips", e.to_string()))?;

    let router = Router::new(net, DisruptionParams::default());
    let mut reach: HashMap<(Mode, usize), Vec<f64>> = HashMap::new();
    let mut trips = Vec::with_capacity(spec.trips);
    while trips.len() < spec.trips {
        let (oz, dz) = pairs[rng.sample(&dist)];
        let origin = *members[oz].choose(rng).expect("non-empty");
        let destination = *members[dz].choose(rng).expect("non-empty");
        if origin == destination {
            continue;
        }
        let (o, d) = (&net.nodes[origin], &net.nodes[destination]);
        let metres = ((o.x - d.x).powi(2) + (o.y - d.y).powi(2)).sqrt();
        let u: f64 = rng.gen();
        let preferred = if metres < 300.0 {
            if u < 0.6 {
                Mode::Walk
            } else if u < 0.85 {
                Mode::Cycle
            } else {
                Mode::Drive
            }
        } else if u < 0.15 {
            Mode::Walk
        } else if u < 0.55 {
            Mode::Cycle
        } else {
            Mode::Drive
        };
        let mut chosen = None;
        for mode in [preferred, Mode::Walk] {
            if !net.mode_leaves(origin, mode) {
                continue;
            }
            let times = reach
                .entry((mode, origin))
                .or_insert_with(|| router.shortest_minutes(origin, mode, None));
            if times[destination].is_finite() {
                chosen = Some(mode);
                break;
            }
        }
        let Some(mode) = chosen else {
            continue;
        };
        trips.push(Trip {
            origin,
            destination,
            mode,
            weight: spec.persons_per_trip,
        });
    }
    Ok(TripTable { trips })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn city(spec: &CitySpec, seed: u64) -> CityBundle {
        generate_synthetic_city(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn same_seed_same_city() {
        let spec = CitySpec::default();
        assert_eq!(city(&spec, 7), city(&spec, 7));
        assert_ne!(city(&spec, 7), city(&spec, 8));
    }

    #[test]
    fn twenty_nine_zones() {
        let spec = CitySpec {
            zones: 29,
            width: 32,
            height: 32,
            ..CitySpec::default()
        };
        let c = city(&spec, 1);
        assert_eq!(c.zones.count(), 29);
        assert_eq!(c.terrain.zone_count(), 29);
        // every zone touches at least one other
        let nb = c.zones.neighbours();
        assert!(nb.iter().all(|n| !n.is_empty()));
    }

    #[test]
    fn trip_endpoints_lie_in_zones() {
        let c = city(&CitySpec::default(), 3);
        assert_eq!(c.trips.len(), 500);
        for t in &c.trips.trips {
            assert!(c.network.nodes[t.origin].zone < 4);
            assert!(c.network.nodes[t.destination].zone < 4);
        }
        let router = Router::new(&c.network, DisruptionParams::default());
        assert!(router.baseline_minutes(&c.trips).is_ok());
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (spec, field) in [
            (
                CitySpec {
                    zones: 0,
                    ..CitySpec::default()
                },
                "zones",
            ),
            (
                CitySpec {
                    zones: 1,
                    ..CitySpec::default()
                },
                "zones",
            ),
            (
                CitySpec {
                    width: 1,
                    ..CitySpec::default()
                },
                "width/height",
            ),
            (
                CitySpec {
                    zones: 100,
                    ..CitySpec::default()
                },
                "zones",
            ),
        ] {
            match generate_synthetic_city(&spec, &mut rng) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{other:?}"),
            }
        }
    }
}
