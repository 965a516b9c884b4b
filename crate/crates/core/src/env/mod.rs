//! The annual adaptation-planning environment.
//!
//! One step is one calendar year. The caller submits one intervention kind
//! per zone; the environment charges investment and maintenance, samples a
//! rainfall event, floods the terrain with the updated ledger, routes the
//! trip table and values the consequences. The observation handed back
//! carries the impacts of the step just taken, so the policy always acts on
//! the previous year's impacts.

mod ledger;

pub use ledger::{decay_effectiveness, DecaySchedule, LedgerEntry, ZoneLedger};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::CityBundle;
use crate::error::{Error, Result};
use crate::flood::{FloodModel, FloodOptions};
use crate::forcing::{Horizon, RainfallEvent, ScenarioId, ScenarioStats};
use crate::network::synthetic::{sample_trips, DemandSpec};
use crate::network::{BaselineRoutes, DisruptionParams, Router, TripTable};
use crate::valuation::{
    action_costs, cancellation_cost, delay_cost, edge_zones, infrastructure_damage, CostBreakdown, InterventionCatalog,
    InterventionKind, ValuationParams, ZoneCosts, ACTIVE_KINDS, KIND_COUNT,
};

/// Per-zone observation width: three lagged impacts plus the effectiveness vector.
pub const FEATURE_DIM: usize = 3 + ACTIVE_KINDS;

const FORCING_STREAM: u64 = 1;
const DEMAND_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub horizon: Horizon,
    pub catalog: InterventionCatalog,
    pub valuation: ValuationParams,
    pub disruption: DisruptionParams,
    pub flood: FloodOptions,
    pub decay: DecaySchedule,
    /// Resample the trip table at every reset instead of using the bundle's.
    pub demand: Option<DemandSpec>,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon.steps() == 0 {
            return Err(Error::config("env.horizon", "must cover at least one year"));
        }
        self.catalog.validate()?;
        self.valuation.validate()?;
        self.disruption.validate()?;
        self.decay.validate()?;
        if let Some(d) = &self.demand {
            d.validate()?;
        }
        Ok(())
    }
}

/// Rainfall statistics for every scenario the environment can be reset into.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    stats: Vec<ScenarioStats>,
}

impl ScenarioSet {
    pub fn new(stats: Vec<ScenarioStats>) -> Result<Self> {
        for s in &stats {
            s.validate()?;
        }
        Ok(ScenarioSet { stats })
    }

    pub fn synthetic() -> Self {
        ScenarioSet {
            stats: ScenarioId::ALL.iter().map(|&id| ScenarioStats::synthetic(id)).collect(),
        }
    }

    pub fn get(&self, id: ScenarioId) -> Result<&ScenarioStats> {
        self.stats.iter().find(|s| s.scenario == id).ok_or_else(|| {
            Error::config(
                "scenario",
                format!(
                    "no statistics loaded for {id}; available: {}",
                    self.ids().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
                ),
            )
        })
    }

    pub fn ids(&self) -> Vec<ScenarioId> {
        self.stats.iter().map(|s| s.scenario).collect()
    }

    pub fn insert(&mut self, stats: ScenarioStats) {
        self.stats.retain(|s| s.scenario != stats.scenario);
        self.stats.push(stats);
    }
}

/// Immutable data shared by every environment instance built from it.
#[derive(Debug)]
pub struct World {
    pub config: EnvConfig,
    pub bundle: CityBundle,
    pub scenarios: ScenarioSet,
    flood: FloodModel,
    router: Router,
    edge_zone: Vec<usize>,
    baseline: Arc<BaselineRoutes>,
    trips: Arc<TripTable>,
    applicable: Vec<[bool; KIND_COUNT]>,
    adjacency: Arc<Vec<(usize, usize)>>,
}

impl World {
    pub fn new(config: EnvConfig, bundle: CityBundle, scenarios: ScenarioSet) -> Result<Arc<Self>> {
        config.validate()?;
        bundle.validate()?;
        for id in scenarios.ids() {
            let s = scenarios.get(id)?;
            if s.horizon != config.horizon {
                return Err(Error::config(
                    "env.horizon",
                    format!(
                        "{id} statistics cover {}-{}, environment horizon is {}-{}",
                        s.horizon.first_year, s.horizon.last_year, config.horizon.first_year, config.horizon.last_year
                    ),
                ));
            }
        }
        let zones = bundle.zones.count();
        let flood = FloodModel::new(&bundle.terrain, &bundle.network, zones, config.flood);
        let router = Router::new(&bundle.network, config.disruption);
        let baseline = router.baseline_routes(&bundle.trips)?;
        let edge_zone = edge_zones(&bundle.network, &bundle.terrain);
        let applicable = bundle
            .zones
            .attributes
            .iter()
            .map(|a| InterventionKind::ALL.map(|k| config.catalog.applicable(k, a)))
            .collect();
        Ok(Arc::new(World {
            flood,
            router,
            edge_zone,
            baseline: Arc::new(baseline),
            trips: Arc::new(bundle.trips.clone()),
            applicable,
            adjacency: Arc::new(bundle.zones.adjacency.clone()),
            config,
            bundle,
            scenarios,
        }))
    }

    pub fn zone_count(&self) -> usize {
        self.bundle.zones.count()
    }

    pub fn horizon_steps(&self) -> usize {
        self.config.horizon.steps()
    }

    pub fn flood_model(&self) -> &FloodModel {
        &self.flood
    }
}

/// What the policy sees before choosing an action.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub step: usize,
    pub horizon: usize,
    pub year: i32,
    /// Per zone: `[I_prev, D_prev, C_prev, z_1..z_7]`, impacts in DKK.
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub adjacency: Arc<Vec<(usize, usize)>>,
    /// Per zone, per kind (catalog order, `DoNothing` first): selectable.
    pub masks: Vec<[bool; KIND_COUNT]>,
}

impl EnvState {
    pub fn zone_count(&self) -> usize {
        self.features.len()
    }

    pub fn allowed(&self, zone: usize, kind: InterventionKind) -> bool {
        self.masks[zone][kind.index()]
    }

    pub fn allowed_kinds(&self, zone: usize) -> Vec<InterventionKind> {
        InterventionKind::ALL
            .into_iter()
            .filter(|k| self.masks[zone][k.index()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    /// Minus the sum of every cost component, in DKK.
    pub reward: f64,
    pub done: bool,
    pub costs: CostBreakdown,
    pub event: RainfallEvent,
    pub actions: Vec<InterventionKind>,
}

/// One row of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub year: i32,
    pub zone: usize,
    pub action: InterventionKind,
    pub rainfall_mm: f64,
    pub infrastructure: f64,
    pub delay: f64,
    pub cancellation: f64,
    pub investment: f64,
    pub maintenance: f64,
    pub reward: f64,
}

impl StepOutcome {
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.costs
            .zones
            .iter()
            .enumerate()
            .map(|(zone, c)| TraceRow {
                step: self.event.step_index,
                year: self.event.year,
                zone,
                action: self.actions[zone],
                rainfall_mm: self.event.depth_mm,
                infrastructure: c.infrastructure,
                delay: c.delay,
                cancellation: c.cancellation,
                investment: c.investment,
                maintenance: c.maintenance,
                reward: self.reward,
            })
            .collect()
    }
}

/// A single episode's mutable state over a shared [`World`].
#[derive(Debug, Clone)]
pub struct AdaptationEnv {
    world: Arc<World>,
    scenario: ScenarioId,
    forcing_rng: ChaCha8Rng,
    trips: Arc<TripTable>,
    baseline: Arc<BaselineRoutes>,
    ledger: ZoneLedger,
    prev: Vec<ZoneCosts>,
    step: usize,
}

impl AdaptationEnv {
    pub fn new(world: Arc<World>) -> Self {
        let zones = world.zone_count();
        AdaptationEnv {
            trips: world.trips.clone(),
            baseline: world.baseline.clone(),
            forcing_rng: ChaCha8Rng::seed_from_u64(0),
            scenario: ScenarioId::Rcp45,
            ledger: ZoneLedger::new(zones),
            prev: vec![ZoneCosts::default(); zones],
            step: world.horizon_steps(),
            world,
        }
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn scenario(&self) -> ScenarioId {
        self.scenario
    }

    pub fn ledger(&self) -> &ZoneLedger {
        &self.ledger
    }

    pub fn trips(&self) -> &TripTable {
        &self.trips
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.world.horizon_steps()
    }

    /// Starts a new episode in `scenario`. Forcing and demand draw from
    /// separate streams of the same seed.
    pub fn reset(&mut self, scenario: ScenarioId, seed: u64) -> Result<EnvState> {
        self.world.scenarios.get(scenario)?;
        let zones = self.world.zone_count();
        self.scenario = scenario;
        self.forcing_rng = ChaCha8Rng::seed_from_u64(seed);
        self.forcing_rng.set_stream(FORCING_STREAM);
        if let Some(spec) = &self.world.config.demand {
            let mut demand_rng = ChaCha8Rng::seed_from_u64(seed);
            demand_rng.set_stream(DEMAND_STREAM);
            let trips = sample_trips(
                &self.world.bundle.network,
                &self.world.bundle.zones,
                spec,
                &mut demand_rng,
            )?;
            self.baseline = Arc::new(self.world.router.baseline_routes(&trips)?);
            self.trips = Arc::new(trips);
        }
        self.ledger = ZoneLedger::new(zones);
        self.prev = vec![ZoneCosts::default(); zones];
        self.step = 0;
        Ok(self.observe())
    }

    pub fn observe(&self) -> EnvState {
        let zones = self.world.zone_count();
        let features = (0..zones)
            .map(|z| {
                let mut x = [0.0; FEATURE_DIM];
                x[0] = self.prev[z].infrastructure;
                x[1] = self.prev[z].delay;
                x[2] = self.prev[z].cancellation;
                x[3..].copy_from_slice(&self.ledger.effectiveness_vector(z));
                x
            })
            .collect();
        EnvState {
            step: self.step,
            horizon: self.world.horizon_steps(),
            year: self.world.config.horizon.year_of(self.step),
            features,
            adjacency: self.world.adjacency.clone(),
            masks: self.masks(),
        }
    }

    pub fn masks(&self) -> Vec<[bool; KIND_COUNT]> {
        self.world
            .applicable
            .iter()
            .enumerate()
            .map(|(z, app)| {
                let mut m = *app;
                m[0] = true;
                for e in self.ledger.entries(z) {
                    m[e.kind.index()] = false;
                }
                m
            })
            .collect()
    }

    /// Checks a joint action against the current masks without changing state.
    pub fn check_action(&self, actions: &[InterventionKind]) -> Result<()> {
        let zones = self.world.zone_count();
        if actions.len() != zones {
            return Err(Error::Contract(format!(
                "joint action has {} entries for {zones} zones",
                actions.len()
            )));
        }
        if self.is_done() {
            return Err(Error::Contract("episode is finished; call reset".into()));
        }
        let masks = self.masks();
        for (z, &k) in actions.iter().enumerate() {
            if !masks[z][k.index()] {
                let why = if self.ledger.is_active(z, k) {
                    "already active"
                } else {
                    "not applicable"
                };
                return Err(Error::Contract(format!("zone {z}: {k} is masked ({why})")));
            }
        }
        Ok(())
    }

    pub fn step(&mut self, actions: &[InterventionKind]) -> Result<StepOutcome> {
        self.check_action(actions)?;
        let world = self.world.clone();
        let cfg = &world.config;
        let zones = world.zone_count();

        let acted = action_costs(&self.ledger, actions, &cfg.catalog)?;
        let event = world
            .scenarios
            .get(self.scenario)?
            .sample_event(self.step, &mut self.forcing_rng)?;
        let field = world.flood.compute_flood(event.depth_mm, &acted.ledger, &cfg.catalog);
        let depths = (!field.is_dry()).then_some(field.element_depth.as_slice());
        let outcomes = world.router.route_from(&self.trips, &self.baseline, depths)?;

        let v = &cfg.valuation;
        let scale = v.annualization;
        let infra = infrastructure_damage(&world.bundle.network, &world.edge_zone, &field, &v.damage_curve, zones);
        let delay = delay_cost(&outcomes, &v.value_of_time_dkk_per_hour, zones);
        let cancel = cancellation_cost(&outcomes, &v.cancelled_trip_cost_dkk, zones);
        let costs = CostBreakdown {
            zones: (0..zones)
                .map(|z| ZoneCosts {
                    infrastructure: infra[z] * scale,
                    delay: delay[z] * scale,
                    cancellation: cancel[z] * scale,
                    investment: acted.investment[z],
                    maintenance: acted.maintenance[z],
                })
                .collect(),
        };
        let reward = -costs.total();
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward at step {}", self.step)));
        }

        self.ledger = acted.ledger;
        self.ledger.advance_year(&cfg.decay);
        self.prev = costs.zones.clone();
        self.step += 1;
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            done: self.is_done(),
            costs,
            event,
            actions: actions.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::synthetic::{generate_synthetic_city, CitySpec};

    fn world(scenarios: ScenarioSet) -> Arc<World> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bundle = generate_synthetic_city(&CitySpec::default(), &mut rng).unwrap();
        World::new(EnvConfig::default(), bundle, scenarios).unwrap()
    }

    #[test]
    fn horizon_is_77_steps() {
        let w = world(ScenarioSet::synthetic());
        let mut env = AdaptationEnv::new(w.clone());
        let mut s = env.reset(ScenarioId::Rcp45, 1).unwrap();
        assert_eq!(s.horizon, 77);
        let mut steps = 0;
        loop {
            let out = env.step(&vec![InterventionKind::DoNothing; s.zone_count()]).unwrap();
            steps += 1;
            s = out.state;
            if out.done {
                break;
            }
        }
        assert_eq!(steps, 77);
        assert!(env.step(&vec![InterventionKind::DoNothing; s.zone_count()]).is_err());
    }

    #[test]
    fn dry_scenario_do_nothing_is_free() {
        let h = Horizon::default();
        let w = world(ScenarioSet::new(vec![ScenarioStats::dry(ScenarioId::Rcp26, h)]).unwrap());
        let mut env = AdaptationEnv::new(w);
        let s = env.reset(ScenarioId::Rcp26, 0).unwrap();
        let out = env.step(&vec![InterventionKind::DoNothing; s.zone_count()]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(matches!(env.reset(ScenarioId::Rcp85, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn masked_action_is_rejected_before_mutation() {
        let w = world(ScenarioSet::synthetic());
        let mut env = AdaptationEnv::new(w);
        let s = env.reset(ScenarioId::Rcp85, 9).unwrap();
        let mut acts = vec![InterventionKind::DoNothing; s.zone_count()];
        acts[0] = InterventionKind::StorageTank;
        env.step(&acts).unwrap();
        let before = env.clone();
        let err = env.step(&acts).unwrap_err().to_string();
        assert!(err.contains("zone 0") && err.contains("StorageTank"), "{err}");
        assert_eq!(env.ledger(), before.ledger());
        assert_eq!(env.step_index(), before.step_index());
    }

    #[test]
    fn equal_seeds_equal_states() {
        let w = world(ScenarioSet::synthetic());
        let mut a = AdaptationEnv::new(w.clone());
        let mut b = AdaptationEnv::new(w);
        assert_eq!(
            a.reset(ScenarioId::Rcp45, 5).unwrap(),
            b.reset(ScenarioId::Rcp45, 5).unwrap()
        );
        let acts = vec![InterventionKind::DoNothing; a.world().zone_count()];
        for _ in 0..5 {
            let (x, y) = (a.step(&acts).unwrap(), b.step(&acts).unwrap());
            assert_eq!(x, y);
        }
    }
}
