//! Oracles and fixtures shared by the integration tests and the acceptance
//! harness. Every oracle here is written against first principles, not the
//! library code path it checks.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use adapt_iam::bundle::CityBundle;
use adapt_iam::config::RunConfig;
use adapt_iam::env::{AdaptationEnv, EnvConfig, EnvState, ScenarioSet, World, ZoneLedger, FEATURE_DIM};
use adapt_iam::flood::{fill_depressions, BoundaryMode, CellZone, FloodField, FloodModel, FloodOptions, TerrainGrid};
use adapt_iam::forcing::ScenarioId;
use adapt_iam::network::synthetic::{generate_synthetic_city, CitySpec};
use adapt_iam::network::{
    disrupted_speed, route_all, DisruptionParams, Edge, Mode, ModeSet, Node, TransportNetwork, Trip, TripTable,
};
use adapt_iam::policy::{masked_log_softmax, GraphBatch, LossCoefficients, PolicyConfig, PolicyParams, PpoBatch};
use adapt_iam::valuation::{InterventionCatalog, InterventionKind, KIND_COUNT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

// ---------------------------------------------------------------- worlds

pub fn smoke_bundle() -> CityBundle {
    let cfg = RunConfig::smoke();
    generate_synthetic_city(&cfg.city.synthetic, &mut rng(cfg.city.seed)).unwrap()
}

pub fn smoke_world() -> Arc<World> {
    RunConfig::smoke().world().unwrap()
}

pub fn world_with(config: EnvConfig, bundle: CityBundle) -> Arc<World> {
    World::new(config, bundle, ScenarioSet::synthetic()).unwrap()
}

// ---------------------------------------------------------------- terrain

/// A `w × h` grid with a gentle slope, noise, a few pits, 1-4 zones by
/// column band and a sprinkling of boundary outlets.
pub fn random_terrain(r: &mut ChaCha8Rng, w: usize, h: usize) -> TerrainGrid {
    let zones = r.gen_range(1..=4usize).min(w);
    let slope = (r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05));
    let mut elev: Vec<f64> = (0..w * h)
        .map(|i| {
            let (row, col) = ((i / w) as f64, (i % w) as f64);
            5.0 + slope.0 * row + slope.1 * col + r.gen_range(0.0..0.4)
        })
        .collect();
    for _ in 0..r.gen_range(1..6) {
        let (cr, cc) = (r.gen_range(0..h) as f64, r.gen_range(0..w) as f64);
        let (depth, radius) = (r.gen_range(0.3..2.0), r.gen_range(1.0..4.0));
        for (i, e) in elev.iter_mut().enumerate() {
            let d = (((i / w) as f64 - cr).powi(2) + ((i % w) as f64 - cc).powi(2)).sqrt();
            if d < radius {
                *e -= depth * (1.0 - d / radius);
            }
        }
    }
    let mut zone_of_cell: Vec<CellZone> = (0..w * h).map(|i| CellZone::Zone((i % w) * zones / w)).collect();
    for z in zone_of_cell.iter_mut() {
        if r.gen_bool(0.02) {
            *z = CellZone::Boundary;
        }
    }
    for z in 0..zones {
        // keep every zone populated
        let col = (z * w).div_ceil(zones).min(w - 1);
        zone_of_cell[col] = CellZone::Zone(z);
    }
    TerrainGrid::new(w, h, r.gen_range(1.0..10.0), elev, zone_of_cell).unwrap()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FillCheck {
    pub mass_rel_err: f64,
    pub level_err_m: f64,
    pub escape_violations: usize,
}

/// Mass balance and level-surface checks for one fill.
///
/// * ponded + outflow = inflow;
/// * 4-adjacent wet cells share a water surface;
/// * no wet cell touches a drain or a dry cell lower than its surface.
pub fn check_fill(grid: &TerrainGrid, field: &FloodField, inflow: &[f64], mode: BoundaryMode) -> FillCheck {
    let n = grid.width * grid.height;
    let area = grid.cell_size_m * grid.cell_size_m;
    let populated: Vec<bool> = (0..inflow.len())
        .map(|z| grid.zone_of_cell.contains(&CellZone::Zone(z)))
        .collect();
    let expected: f64 = inflow
        .iter()
        .zip(&populated)
        .filter(|(_, p)| **p)
        .map(|(v, _)| v.max(0.0))
        .sum();
    let ponded: f64 = field.cell_depth.iter().map(|d| d * area).sum();
    let mass_rel_err = relative(ponded + field.outflow_m3, expected);

    let wet = |i: usize| field.cell_depth[i] > 1e-9;
    let surface = |i: usize| grid.elevation[i] + field.cell_depth[i];
    let mut out = FillCheck {
        mass_rel_err,
        ..FillCheck::default()
    };
    for i in 0..n {
        if !wet(i) {
            continue;
        }
        let (r, c) = (i / grid.width, i % grid.width);
        let on_edge = r == 0 || c == 0 || r + 1 == grid.height || c + 1 == grid.width;
        if grid.zone_of_cell[i] == CellZone::Boundary || (mode == BoundaryMode::Open && on_edge) {
            out.escape_violations += 1;
        }
        let mut nbs = Vec::new();
        if r > 0 {
            nbs.push(i - grid.width);
        }
        if c > 0 {
            nbs.push(i - 1);
        }
        if c + 1 < grid.width {
            nbs.push(i + 1);
        }
        if r + 1 < grid.height {
            nbs.push(i + grid.width);
        }
        for j in nbs {
            if grid.zone_of_cell[j] == CellZone::Boundary {
                out.escape_violations += 1;
            } else if wet(j) {
                out.level_err_m = out.level_err_m.max((surface(i) - surface(j)).abs());
            } else if grid.elevation[j] < surface(i) - 1e-6 {
                out.escape_violations += 1;
            }
        }
    }
    out
}

pub fn random_fill(seed: u64) -> (TerrainGrid, Vec<f64>, FloodField) {
    let mut r = rng(seed);
    let (w, h) = (r.gen_range(8..=32), r.gen_range(8..=32));
    let grid = random_terrain(&mut r, w, h);
    let zones = grid.zone_count();
    let area = grid.cell_size_m * grid.cell_size_m;
    let inflow: Vec<f64> = (0..zones)
        .map(|_| r.gen_range(0.0..3.0) * area * (w * h) as f64 / zones as f64)
        .collect();
    let field = fill_depressions(&grid, &inflow, BoundaryMode::Open);
    (grid, inflow, field)
}

/// Largest amount by which `lower` exceeds `upper` in any cell.
pub fn max_excess(lower: &[f64], upper: &[f64]) -> f64 {
    lower.iter().zip(upper).map(|(a, b)| a - b).fold(0.0, f64::max)
}

/// Paired flood runs on seeded synthetic cities. Returns the worst
/// violation depth for (more rain, more intervention).
pub fn flood_monotonicity(pairs: usize) -> (f64, f64, usize) {
    let catalog = InterventionCatalog::default();
    let (mut rain_worst, mut measure_worst, mut violations) = (0.0f64, 0.0f64, 0);
    for i in 0..pairs {
        let mut r = rng(500 + i as u64);
        let spec = CitySpec {
            zones: r.gen_range(2..6),
            width: r.gen_range(12..28),
            height: r.gen_range(12..28),
            ..CitySpec::default()
        };
        let bundle = generate_synthetic_city(&spec, &mut r).unwrap();
        let model = FloodModel::new(
            &bundle.terrain,
            &bundle.network,
            bundle.zones.count(),
            FloodOptions::default(),
        );
        let zones = bundle.zones.count();
        let mut ledger = ZoneLedger::new(zones);
        for z in 0..zones {
            if r.gen_bool(0.5) {
                ledger.deploy(z, InterventionKind::BioretentionPlanters, 20).unwrap();
            }
        }
        let d1 = r.gen_range(0.0..80.0);
        let d2 = d1 + r.gen_range(0.1..60.0);
        let a = model.compute_flood(d1, &ledger, &catalog);
        let b = model.compute_flood(d2, &ledger, &catalog);
        let rain = max_excess(&a.cell_depth, &b.cell_depth).max(max_excess(&a.element_depth, &b.element_depth));

        let mut more = ledger.clone();
        let z = r.gen_range(0..zones);
        let kind = [InterventionKind::StorageTank, InterventionKind::PermeablePavers]
            .into_iter()
            .find(|k| !more.is_active(z, *k))
            .unwrap();
        more.deploy(z, kind, 30).unwrap();
        let base = model.compute_flood(d2, &ledger, &catalog);
        let treated = model.compute_flood(d2, &more, &catalog);
        let measure = max_excess(&treated.cell_depth, &base.cell_depth)
            .max(max_excess(&treated.element_depth, &base.element_depth));
        violations += (rain > 0.0) as usize + (measure > 0.0) as usize;
        rain_worst = rain_worst.max(rain);
        measure_worst = measure_worst.max(measure);
    }
    (rain_worst, measure_worst, violations)
}

// ---------------------------------------------------------------- routing

/// Every simple path from `from` to `to`, as edge-id lists.
pub fn simple_paths(net: &TransportNetwork, from: usize, to: usize) -> Vec<Vec<usize>> {
    fn walk(
        net: &TransportNetwork,
        at: usize,
        to: usize,
        seen: &mut Vec<bool>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == to {
            out.push(path.clone());
            return;
        }
        for (id, e) in net.edges.iter().enumerate() {
            if e.from == at && !seen[e.to] {
                seen[e.to] = true;
                path.push(id);
                walk(net, e.to, to, seen, path, out);
                path.pop();
                seen[e.to] = false;
            }
        }
    }
    let mut seen = vec![false; net.nodes.len()];
    seen[from] = true;
    let mut out = Vec::new();
    walk(net, from, to, &mut seen, &mut Vec::new(), &mut out);
    out
}

/// Minutes of the fastest path by exhaustive enumeration; `None` when no
/// path is passable for `mode`.
pub fn brute_force_minutes(
    net: &TransportNetwork,
    from: usize,
    to: usize,
    mode: Mode,
    depths: &[f64],
    params: &DisruptionParams,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    'paths: for path in simple_paths(net, from, to) {
        let mut t = 0.0;
        for &id in &path {
            let e = &net.edges[id];
            if !e.modes.contains(mode) {
                continue 'paths;
            }
            let v = disrupted_speed(
                e.speed_kmh.min(params.speed_cap_kmh.get(mode)),
                depths[id],
                mode,
                params,
            );
            if v <= 0.0 {
                continue 'paths;
            }
            t += e.length_m * 0.06 / v;
        }
        best = Some(best.map_or(t, |b: f64| b.min(t)));
    }
    best
}

/// A ring of two-way, all-mode streets (so every trip has a dry route)
/// plus random one-way or mode-restricted shortcuts, with a random flood.
pub fn random_graph(r: &mut ChaCha8Rng) -> (TransportNetwork, TripTable, Vec<f64>) {
    let n = r.gen_range(2..=10);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            x: r.gen_range(0.0..1000.0),
            y: r.gen_range(0.0..1000.0),
            zone: i % 2,
        })
        .collect();
    let street = |from, to, r: &mut ChaCha8Rng, modes| Edge {
        from,
        to,
        length_m: r.gen_range(20.0..800.0),
        modes,
        speed_kmh: *[20.0, 30.0, 50.0, 80.0].choose(r).unwrap(),
        reconstruction_cost_per_m: 100.0,
    };
    let mut edges = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j && !(n == 2 && i == 1) {
            edges.push(street(i, j, r, ModeSet::ALL));
            edges.push(street(j, i, r, ModeSet::ALL));
        }
    }
    for _ in 0..r.gen_range(0..2 * n) {
        let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
        if a != b {
            let mut modes = ModeSet::empty();
            for m in Mode::ALL {
                if r.gen_bool(0.6) {
                    modes = modes.with(m);
                }
            }
            if !modes.is_empty() {
                edges.push(street(a, b, r, modes));
            }
        }
    }
    let depths: Vec<f64> = edges
        .iter()
        .map(|_| match r.gen_range(0..4) {
            0 => 0.0,
            1 => r.gen_range(0.0..0.15),
            2 => r.gen_range(0.15..0.35),
            _ => r.gen_range(0.35..1.0),
        })
        .collect();
    let net = TransportNetwork::new(nodes, edges).unwrap();
    let trips = (0..r.gen_range(1..12))
        .map(|_| {
            let origin = r.gen_range(0..n);
            let destination = (origin + r.gen_range(1..n)) % n;
            Trip {
                origin,
                destination,
                mode: *Mode::ALL.choose(r).unwrap(),
                weight: 1.0,
            }
        })
        .collect();
    (net, TripTable { trips }, depths)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RoutingCheck {
    pub graphs: usize,
    pub trips: usize,
    pub mismatches: usize,
    pub cancellations: usize,
}

pub fn routing_oracle(graphs: usize, seed: u64) -> RoutingCheck {
    let params = DisruptionParams::default();
    let mut r = rng(seed);
    let mut out = RoutingCheck {
        graphs,
        ..RoutingCheck::default()
    };
    for _ in 0..graphs {
        let (net, trips, depths) = random_graph(&mut r);
        let field = FloodField {
            cell_depth: Vec::new(),
            element_depth: depths.clone(),
            inflow_m3: 0.0,
            outflow_m3: 0.0,
        };
        let routed = route_all(&net, &trips, Some(&field), &params).unwrap();
        let dry = vec![0.0; depths.len()];
        for (t, o) in trips.trips.iter().zip(&routed) {
            out.trips += 1;
            let base = brute_force_minutes(&net, t.origin, t.destination, t.mode, &dry, &params);
            let wet = brute_force_minutes(&net, t.origin, t.destination, t.mode, &depths, &params);
            out.cancellations += wet.is_none() as usize;
            let ok = base == Some(o.baseline_minutes) && wet == o.disrupted_minutes && o.cancelled == wet.is_none();
            out.mismatches += (!ok) as usize;
        }
    }
    out
}

// ---------------------------------------------------------------- masks

#[derive(Debug, Default, Clone, Copy)]
pub struct MaskFuzz {
    pub zone_steps: usize,
    pub duplicates_accepted: usize,
    pub mask_mismatches: usize,
    pub expiries_observed: usize,
    pub masked_rejections: usize,
    pub mutated_on_reject: usize,
}

/// Random play against a catalog with short lifetimes. A shadow ledger
/// predicts every mask from deployment steps alone.
pub fn mask_fuzz(target_zone_steps: usize, seed: u64) -> MaskFuzz {
    let mut r = rng(seed);
    let mut config = EnvConfig::default();
    for k in &InterventionKind::ALL[1..] {
        config.catalog.spec_mut(*k).unwrap().lifetime_years = r.gen_range(1..8);
    }
    let lifetimes: Vec<usize> = InterventionKind::ALL
        .iter()
        .map(|k| {
            if k.index() == 0 {
                0
            } else {
                config.catalog.spec(*k).lifetime_years as usize
            }
        })
        .collect();
    let world = world_with(config, smoke_bundle());
    let applicable: Vec<[bool; KIND_COUNT]> = world
        .bundle
        .zones
        .attributes
        .iter()
        .map(|a| InterventionKind::ALL.map(|k| world.config.catalog.applicable(k, a)))
        .collect();
    let zones = world.zone_count();
    let mut env = AdaptationEnv::new(world);
    let mut out = MaskFuzz::default();
    let mut episode = 0u64;
    while out.zone_steps < target_zone_steps {
        let mut state = env
            .reset(ScenarioId::ALL[episode as usize % 3], seed ^ episode)
            .unwrap();
        episode += 1;
        let mut deployed_at: Vec<HashMap<usize, usize>> = vec![HashMap::new(); zones];
        loop {
            let step = state.step;
            for z in 0..zones {
                for k in 1..KIND_COUNT {
                    let active = deployed_at[z].get(&k).is_some_and(|&t| step - t < lifetimes[k]);
                    let expected = applicable[z][k] && !active;
                    if state.masks[z][k] != expected {
                        out.mask_mismatches += 1;
                    }
                    if !active && deployed_at[z].remove(&k).is_some() && applicable[z][k] {
                        out.expiries_observed += 1;
                    }
                }
                if !state.masks[z][0] {
                    out.mask_mismatches += 1;
                }
            }
            // occasionally try a masked kind and make sure nothing moves
            if let Some((z, k)) = (0..zones)
                .flat_map(|z| (1..KIND_COUNT).map(move |k| (z, k)))
                .filter(|&(z, k)| !state.masks[z][k])
                .collect::<Vec<_>>()
                .choose(&mut r)
                .copied()
                .filter(|_| r.gen_bool(0.2))
            {
                let ledger = env.ledger().clone();
                let before = env.observe();
                let mut bad = vec![InterventionKind::DoNothing; zones];
                bad[z] = InterventionKind::ALL[k];
                if env.step(&bad).is_err() {
                    out.masked_rejections += 1;
                } else {
                    out.duplicates_accepted += 1;
                }
                if env.ledger() != &ledger || env.observe() != before {
                    out.mutated_on_reject += 1;
                }
            }
            let actions: Vec<InterventionKind> = (0..zones)
                .map(|z| {
                    let allowed: Vec<usize> = (0..KIND_COUNT).filter(|&k| state.masks[z][k]).collect();
                    InterventionKind::ALL[*allowed.choose(&mut r).unwrap()]
                })
                .collect();
            for (z, a) in actions.iter().enumerate() {
                if a.index() != 0 {
                    if env.ledger().is_active(z, *a) {
                        out.duplicates_accepted += 1;
                    }
                    deployed_at[z].insert(a.index(), step);
                }
            }
            let o = env.step(&actions).unwrap();
            out.zone_steps += zones;
            if o.done {
                break;
            }
            state = o.state;
        }
    }
    out
}

// ---------------------------------------------------------------- policy

pub fn random_state(r: &mut ChaCha8Rng, zones: usize) -> EnvState {
    let mut adjacency = Vec::new();
    for a in 0..zones {
        for b in a + 1..zones {
            if b == a + 1 || r.gen_bool(0.3) {
                adjacency.push((a, b));
            }
        }
    }
    let masks = (0..zones)
        .map(|_| {
            let mut m = [true; KIND_COUNT];
            for v in m.iter_mut().skip(1) {
                *v = r.gen_bool(0.7);
            }
            m
        })
        .collect();
    EnvState {
        step: r.gen_range(0..77),
        horizon: 77,
        year: 2024,
        features: (0..zones)
            .map(|_| {
                std::array::from_fn(|j| {
                    if j < 3 {
                        r.gen_range(0.0..5e6)
                    } else {
                        r.gen_range(0.0..1.0)
                    }
                })
            })
            .collect(),
        adjacency: Arc::new(adjacency),
        masks,
    }
}

/// Relabels zones: new zone `perm[i]` is old zone `i`.
pub fn permute_state(s: &EnvState, perm: &[usize]) -> EnvState {
    let n = perm.len();
    let mut features = vec![[0.0; FEATURE_DIM]; n];
    let mut masks = vec![[true; KIND_COUNT]; n];
    for i in 0..n {
        features[perm[i]] = s.features[i];
        masks[perm[i]] = s.masks[i];
    }
    let adjacency = s
        .adjacency
        .iter()
        .map(|&(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b])))
        .collect();
    EnvState {
        features,
        masks,
        adjacency: Arc::new(adjacency),
        ..s.clone()
    }
}

pub fn perturbed_policy(seed: u64, cfg: PolicyConfig) -> PolicyParams {
    let mut r = rng(seed);
    let mut p = PolicyParams::init(cfg, &mut r);
    // push the head away from uniform so discrepancies would show
    for v in p.values.iter_mut() {
        *v += r.gen_range(-0.3..0.3);
    }
    for _ in 0..50 {
        let s = random_state(&mut r, 3);
        p.normalizer.update(&s.features);
    }
    p
}

/// Largest logit and value discrepancy over `trials` random relabelings.
pub fn permutation_equivariance(trials: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let p = perturbed_policy(seed, PolicyConfig::default());
    let (mut logit_err, mut value_err) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let zones = r.gen_range(3..12);
        let s = random_state(&mut r, zones);
        let mut perm: Vec<usize> = (0..zones).collect();
        perm.shuffle(&mut r);
        let (l0, v0) = p.forward(&s).unwrap();
        let (l1, v1) = p.forward(&permute_state(&s, &perm)).unwrap();
        for i in 0..zones {
            for k in 0..KIND_COUNT {
                logit_err = logit_err.max((l0[[i, k]] - l1[[perm[i], k]]).abs());
            }
        }
        value_err = value_err.max((v0 - v1).abs());
    }
    (logit_err, value_err)
}

pub fn gradient_policy(seed: u64) -> PolicyParams {
    perturbed_policy(
        seed,
        PolicyConfig {
            hidden: 8,
            layers: 2,
            ..PolicyConfig::default()
        },
    )
}

/// Batch of 3-zone graphs whose behaviour log-probs keep every ratio clear
/// of the clip kinks, so the loss is smooth around the current parameters.
pub fn ppo_batch(p: &PolicyParams, r: &mut ChaCha8Rng, graphs: usize, clip: f64) -> PpoBatch {
    let mut gb = GraphBatch::empty();
    let mut actions = Vec::new();
    let mut old = Vec::new();
    for _ in 0..graphs {
        let s = random_state(r, 3);
        let (logits, _) = p.forward(&s).unwrap();
        let mut joint = 0.0;
        for (z, m) in s.masks.iter().enumerate() {
            let allowed: Vec<usize> = (0..KIND_COUNT).filter(|&k| m[k]).collect();
            let k = *allowed.choose(r).unwrap();
            actions.push(k);
            joint += masked_log_softmax(logits.row(z).as_slice().unwrap(), m)[k];
        }
        let shift = loop {
            let d: f64 = r.gen_range(-0.4..0.4);
            let ratio = (-d).exp();
            if (ratio - (1.0 + clip)).abs() > 0.02 && (ratio - (1.0 - clip)).abs() > 0.02 {
                break d;
            }
        };
        old.push(joint + shift);
        gb.push(&p.inputs(&s), &s.adjacency, &s.masks).unwrap();
    }
    PpoBatch {
        graphs: gb,
        actions,
        old_log_prob: old,
        advantages: (0..graphs).map(|_| r.gen_range(-2.0..2.0)).collect(),
        returns: (0..graphs).map(|_| r.gen_range(-3.0..3.0)).collect(),
    }
}

/// Worst relative error between the analytic gradient and central
/// differences, and the number of parameters probed.
pub fn gradient_check(seed: u64) -> (f64, usize) {
    let coef = LossCoefficients {
        clip_range: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    let mut r = rng(seed);
    let p = gradient_policy(seed + 1);
    let b = ppo_batch(&p, &mut r, 6, coef.clip_range);
    let (_, grad) = p.ppo_loss_and_grad(&b, &coef);
    let h = 1e-5;
    let mut probes: Vec<usize> = (0..p.len()).collect();
    probes.shuffle(&mut r);
    probes.truncate(240);
    let mut worst: f64 = 0.0;
    for &i in &probes {
        let mut plus = p.clone();
        plus.values[i] += h;
        let mut minus = p.clone();
        minus.values[i] -= h;
        let numeric =
            (plus.ppo_loss_and_grad(&b, &coef).0.loss - minus.ppo_loss_and_grad(&b, &coef).0.loss) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs());
        let err = if scale > 1e-7 {
            (grad[i] - numeric).abs() / scale
        } else {
            (grad[i] - numeric).abs()
        };
        worst = worst.max(err);
    }
    (worst, probes.len())
}

/// Relative distance between the clipped-surrogate gradient at unchanged
/// parameters and the plain policy gradient, plus the reported KL.
pub fn identity_update(seed: u64) -> (f64, f64) {
    let coef = LossCoefficients {
        clip_range: 0.2,
        value_coef: 0.0,
        entropy_coef: 0.0,
    };
    let mut r = rng(seed);
    let p = gradient_policy(seed + 1);
    let mut b = ppo_batch(&p, &mut r, 10, coef.clip_range);
    let fresh = p.forward_batch(&b.graphs);
    for (g, rows) in b.graphs.graphs.clone().into_iter().enumerate() {
        b.old_log_prob[g] = rows
            .map(|row| {
                masked_log_softmax(fresh.logits.row(row).as_slice().unwrap(), &b.graphs.masks[row])[b.actions[row]]
            })
            .sum();
    }
    let (stats, surrogate) = p.ppo_loss_and_grad(&b, &coef);
    let vanilla = p.policy_gradient(&b);
    let num: f64 = surrogate
        .iter()
        .zip(&vanilla)
        .map(|(a, v)| (a - v).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = vanilla.iter().map(|v| v * v).sum::<f64>().sqrt();
    (num / den, stats.approx_kl)
}

/// Plain-loop forward pass read straight from the named tensors.
pub fn reference_forward(p: &PolicyParams, s: &EnvState) -> (Vec<[f64; KIND_COUNT]>, f64) {
    let layout = p.layout();
    let tensor = |name: &str| -> (Vec<f64>, usize, usize) {
        let id = layout.tensors.iter().position(|t| t.name == name).unwrap();
        let t = &layout.tensors[id];
        (p.values[layout.range(id)].to_vec(), t.rows, t.cols)
    };
    let affine = |x: &[Vec<f64>], name: &str, act: bool| -> Vec<Vec<f64>> {
        let (w, rows, cols) = tensor(&format!("{name}.weight"));
        let (b, _, _) = tensor(&format!("{name}.bias"));
        x.iter()
            .map(|xi| {
                (0..cols)
                    .map(|c| {
                        let z = b[c] + (0..rows).map(|r| xi[r] * w[r * cols + c]).sum::<f64>();
                        if act {
                            z.tanh()
                        } else {
                            z
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let n = s.zone_count();
    let mut nbs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(a, b) in s.adjacency.iter() {
        nbs[a].push(b);
        nbs[b].push(a);
    }
    let x: Vec<Vec<f64>> = p.inputs(s).outer_iter().map(|r| r.to_vec()).collect();
    let trunk = |prefix: &str| {
        let mut h = affine(&x, &format!("{prefix}.encoder"), true);
        for l in 0..p.config.layers {
            let m: Vec<Vec<f64>> = nbs
                .iter()
                .map(|nb| {
                    (0..h[0].len())
                        .map(|c| nb.iter().map(|&j| h[j][c]).sum::<f64>() / nb.len() as f64)
                        .collect()
                })
                .collect();
            h = affine(&m, &format!("{prefix}.layer{l}"), true);
        }
        h
    };
    let logits = affine(&trunk("policy"), "policy.head", false)
        .into_iter()
        .map(|row| std::array::from_fn(|k| row[k]))
        .collect();
    let hv = trunk("value");
    let pooled: Vec<f64> = (0..hv[0].len())
        .map(|c| hv.iter().map(|h| h[c]).sum::<f64>() / n as f64)
        .collect();
    let hidden = affine(&[pooled], "value.hidden", true);
    let value = affine(&hidden, "value.out", false)[0][0];
    (logits, value)
}

// ---------------------------------------------------------------- baselines

/// Replays RandomControl episodes and compares how often each allowed kind
/// was picked with the uniform rate `1/k`. Returns the worst gap over the
/// first and the last allowed kind, and the zone-steps seen.
pub fn random_control_frequency(world: &Arc<World>, target_zone_steps: usize) -> (f64, usize) {
    use adapt_iam::trainer::{run_episode, Controller};
    let (mut steps, mut first_hits, mut last_hits, mut expected) = (0usize, 0.0, 0.0, 0.0);
    let mut seed = 0;
    while steps < target_zone_steps {
        let ep = run_episode(world, Controller::RandomControl, None, ScenarioId::Rcp45, seed).unwrap();
        let mut env = AdaptationEnv::new(world.clone());
        let mut state = env.reset(ScenarioId::Rcp45, seed).unwrap();
        for rec in &ep.steps {
            for (z, a) in rec.actions.iter().enumerate() {
                let allowed = state.allowed_kinds(z);
                expected += 1.0 / allowed.len() as f64;
                first_hits += (*a == allowed[0]) as u8 as f64;
                last_hits += (*a == *allowed.last().unwrap()) as u8 as f64;
                steps += 1;
            }
            let o = env.step(&rec.actions).unwrap();
            state = o.state;
        }
        seed += 1;
    }
    let n = steps as f64;
    let gap = ((first_hits - expected) / n)
        .abs()
        .max(((last_hits - expected) / n).abs());
    (gap, steps)
}

/// Worst relative gap between each step's reward and minus its summed
/// zone components, over every step of every episode.
pub fn reward_identity(episodes: &[adapt_iam::trainer::EpisodeResult]) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for ep in episodes {
        for s in &ep.steps {
            let sum: f64 = s
                .costs
                .zones
                .iter()
                .map(|c| c.infrastructure + c.delay + c.cancellation + c.investment + c.maintenance)
                .sum();
            worst = worst.max(relative(s.reward, -sum));
            steps += 1;
        }
    }
    (worst, steps)
}
