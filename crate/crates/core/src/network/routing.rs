use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{disrupted_speed, DisruptionParams, Mode, ModeSet, TransportNetwork, TripTable};
use crate::error::{Error, Result};
use crate::flood::FloodField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripOutcome {
    pub trip: usize,
    pub origin_zone: usize,
    pub mode: Mode,
    pub weight: f64,
    pub baseline_minutes: f64,
    /// `None` when the trip is cancelled.
    pub disrupted_minutes: Option<f64>,
    pub cancelled: bool,
}

impl TripOutcome {
    pub fn delay_minutes(&self) -> f64 {
        match self.disrupted_minutes {
            Some(t) => (t - self.baseline_minutes).max(0.0),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RouteEdge {
    to: usize,
    length_m: f64,
    modes: ModeSet,
    speed_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Label {
    minutes: f64,
    node: usize,
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// min-heap on (minutes, node id)
impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .minutes
            .total_cmp(&self.minutes)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Dry-network routing result reused for every event of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRoutes {
    pub minutes: Vec<f64>,
    groups: Vec<((Mode, usize), Vec<usize>)>,
    group_edges: Vec<Vec<usize>>,
}

/// Label-setting shortest paths over a fixed network.
#[derive(Debug, Clone)]
pub struct Router {
    out: Vec<Vec<(usize, RouteEdge)>>,
    node_zone: Vec<usize>,
    edge_modes: Vec<ModeSet>,
    edge_from: Vec<usize>,
    params: DisruptionParams,
}

impl Router {
    pub fn new(net: &TransportNetwork, params: DisruptionParams) -> Self {
        let mut out = vec![Vec::new(); net.nodes.len()];
        for (id, e) in net.edges.iter().enumerate() {
            out[e.from].push((
                id,
                RouteEdge {
                    to: e.to,
                    length_m: e.length_m,
                    modes: e.modes,
                    speed_kmh: e.speed_kmh,
                },
            ));
        }
        Router {
            out,
            node_zone: net.nodes.iter().map(|n| n.zone).collect(),
            edge_modes: net.edges.iter().map(|e| e.modes).collect(),
            edge_from: net.edges.iter().map(|e| e.from).collect(),
            params,
        }
    }

    pub fn params(&self) -> &DisruptionParams {
        &self.params
    }

    fn edge_minutes(&self, e: &RouteEdge, mode: Mode, depth_m: f64) -> Option<f64> {
        if !e.modes.contains(mode) {
            return None;
        }
        let v = disrupted_speed(self.params.free_flow(e.speed_kmh, mode), depth_m, mode, &self.params);
        (v > 0.0).then(|| e.length_m * 0.06 / v)
    }

    /// Per-edge travel minutes for `mode` under `depths`; `INFINITY` where
    /// the mode is not permitted or the water is too deep.
    fn edge_weights(&self, mode: Mode, depths: Option<&[f64]>) -> Vec<f64> {
        let mut w = vec![f64::INFINITY; self.edge_modes.len()];
        for adj in &self.out {
            for (id, e) in adj {
                let depth = depths.map_or(0.0, |d| d[*id]);
                if let Some(m) = self.edge_minutes(e, mode, depth) {
                    w[*id] = m;
                }
            }
        }
        w
    }

    /// Travel minutes from `origin` to every node; `INFINITY` if unreachable.
    pub fn shortest_minutes(&self, origin: usize, mode: Mode, depths: Option<&[f64]>) -> Vec<f64> {
        self.dijkstra(origin, &self.edge_weights(mode, depths))
    }

    fn dijkstra(&self, origin: usize, weights: &[f64]) -> Vec<f64> {
        self.search(origin, weights, &[]).0
    }

    /// Label-setting search. Stops once every node in `targets` is settled
    /// (runs to exhaustion when `targets` is empty). Also returns the edge
    /// each node was last reached by.
    fn search(&self, origin: usize, weights: &[f64], targets: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let n = self.out.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut wanted = vec![false; n];
        let mut remaining = 0;
        for &t in targets {
            if !wanted[t] {
                wanted[t] = true;
                remaining += 1;
            }
        }
        let mut heap = BinaryHeap::new();
        dist[origin] = 0.0;
        heap.push(Label {
            minutes: 0.0,
            node: origin,
        });
        while let Some(Label { minutes, node }) = heap.pop() {
            if minutes > dist[node] {
                continue;
            }
            if wanted[node] {
                wanted[node] = false;
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            for (id, e) in &self.out[node] {
                let w = weights[*id];
                if w == f64::INFINITY {
                    continue;
                }
                let cand = minutes + w;
                if cand < dist[e.to] {
                    dist[e.to] = cand;
                    pred[e.to] = *id;
                    heap.push(Label {
                        minutes: cand,
                        node: e.to,
                    });
                }
            }
        }
        (dist, pred)
    }

    fn check_trips(&self, trips: &TripTable) -> Result<()> {
        let n = self.out.len();
        for (i, t) in trips.trips.iter().enumerate() {
            if t.origin >= n || t.destination >= n {
                return Err(Error::Data(format!(
                    "trip {i}: origin {} or destination {} missing from network",
                    t.origin, t.destination
                )));
            }
        }
        Ok(())
    }

    /// Trip indices grouped by (mode, origin) so each group needs one search.
    fn groups(trips: &TripTable) -> Vec<((Mode, usize), Vec<usize>)> {
        let mut order: Vec<usize> = (0..trips.len()).collect();
        order.sort_by_key(|&i| (trips.trips[i].mode, trips.trips[i].origin, i));
        let mut groups: Vec<((Mode, usize), Vec<usize>)> = Vec::new();
        for i in order {
            let key = (trips.trips[i].mode, trips.trips[i].origin);
            match groups.last_mut() {
                Some((k, members)) if *k == key => members.push(i),
                _ => groups.push((key, vec![i])),
            }
        }
        groups
    }

    /// Undisrupted travel minutes per trip. Every trip must be routable on
    /// the dry network.
    pub fn baseline_minutes(&self, trips: &TripTable) -> Result<Vec<f64>> {
        Ok(self.baseline_routes(trips)?.minutes)
    }

    /// Dry-network times plus, per (mode, origin) group, the edges used by
    /// the group's shortest paths.
    pub fn baseline_routes(&self, trips: &TripTable) -> Result<BaselineRoutes> {
        self.check_trips(trips)?;
        let mut minutes = vec![0.0; trips.len()];
        let weights = Mode::ALL.map(|m| self.edge_weights(m, None));
        let groups = Self::groups(trips);
        let mut group_edges = Vec::with_capacity(groups.len());
        for ((mode, origin), members) in &groups {
            let (dist, pred) = self.search(*origin, &weights[*mode as usize], &[]);
            let mut used = Vec::new();
            for &i in members {
                let dest = trips.trips[i].destination;
                let t = dist[dest];
                if !t.is_finite() {
                    return Err(Error::Data(format!(
                        "trip {i}: destination unreachable by {mode} on the dry network"
                    )));
                }
                minutes[i] = t;
                let mut at = dest;
                while at != *origin {
                    let e = pred[at];
                    used.push(e);
                    at = self.edge_from[e];
                }
            }
            used.sort_unstable();
            used.dedup();
            group_edges.push(used);
        }
        Ok(BaselineRoutes {
            minutes,
            groups,
            group_edges,
        })
    }

    /// Like [`Router::route`], but skips every (mode, origin) group whose
    /// dry shortest paths stay dry: flooding only slows edges, so those
    /// trips keep their baseline times.
    pub fn route_from(
        &self,
        trips: &TripTable,
        baseline: &BaselineRoutes,
        depths: Option<&[f64]>,
    ) -> Result<Vec<TripOutcome>> {
        self.route_groups(
            trips,
            &baseline.minutes,
            depths,
            &baseline.groups,
            Some(&baseline.group_edges),
        )
    }

    /// Routes every trip under per-edge water depths (`None` = dry).
    pub fn route(&self, trips: &TripTable, baseline: &[f64], depths: Option<&[f64]>) -> Result<Vec<TripOutcome>> {
        self.route_groups(trips, baseline, depths, &Self::groups(trips), None)
    }

    fn route_groups(
        &self,
        trips: &TripTable,
        baseline: &[f64],
        depths: Option<&[f64]>,
        groups: &[((Mode, usize), Vec<usize>)],
        group_edges: Option<&[Vec<usize>]>,
    ) -> Result<Vec<TripOutcome>> {
        self.check_trips(trips)?;
        if baseline.len() != trips.len() {
            return Err(Error::Shape(format!(
                "{} baseline times for {} trips",
                baseline.len(),
                trips.len()
            )));
        }
        if let Some(d) = depths {
            if d.len() != self.edge_modes.len() {
                return Err(Error::Shape(format!(
                    "flood field has {} element depths, network has {} edges",
                    d.len(),
                    self.edge_modes.len()
                )));
            }
        }
        let wet_mode = |mode: Mode| {
            depths.is_some_and(|d| {
                d.iter()
                    .zip(&self.edge_modes)
                    .any(|(&x, m)| x > 0.0 && m.contains(mode))
            })
        };
        let wet = [wet_mode(Mode::Drive), wet_mode(Mode::Cycle), wet_mode(Mode::Walk)];

        let mut outcomes: Vec<TripOutcome> = trips
            .trips
            .iter()
            .enumerate()
            .map(|(i, t)| TripOutcome {
                trip: i,
                origin_zone: self.node_zone[t.origin],
                mode: t.mode,
                weight: t.weight,
                baseline_minutes: baseline[i],
                disrupted_minutes: Some(baseline[i]),
                cancelled: false,
            })
            .collect();

        let weights = Mode::ALL.map(|m| {
            if wet[m as usize] {
                self.edge_weights(m, depths)
            } else {
                Vec::new()
            }
        });
        for (g, ((mode, origin), members)) in groups.iter().enumerate() {
            if !wet[*mode as usize] {
                continue;
            }
            if let (Some(edges), Some(d)) = (group_edges, depths) {
                if edges[g].iter().all(|&e| d[e] <= 0.0) {
                    continue;
                }
            }
            let targets: Vec<usize> = members.iter().map(|&i| trips.trips[i].destination).collect();
            let (dist, _) = self.search(*origin, &weights[*mode as usize], &targets);
            for &i in members {
                let t = dist[trips.trips[i].destination];
                let o = &mut outcomes[i];
                if t.is_finite() {
                    o.disrupted_minutes = Some(t);
                } else {
                    o.disrupted_minutes = None;
                    o.cancelled = true;
                }
            }
        }
        Ok(outcomes)
    }
}

/// Routes all trips on `net`, with baseline times from the dry network and
/// disrupted times under `field` (identical to baseline when `None`).
pub fn route_all(
    net: &TransportNetwork,
    trips: &TripTable,
    field: Option<&FloodField>,
    params: &DisruptionParams,
) -> Result<Vec<TripOutcome>> {
    let router = Router::new(net, *params);
    let baseline = router.baseline_minutes(trips)?;
    router.route(trips, &baseline, field.map(|f| f.element_depth.as_slice()))
}
