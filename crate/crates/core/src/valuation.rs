//! Monetised consequences of one event and costs of the interventions.
//!
//! Per zone and step the engine accounts five non-negative components in
//! DKK: infrastructure damage, travel delay, trip cancellation, investment
//! and maintenance. The step reward is minus their sum over zones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::ZoneLedger;
use crate::error::{Error, Result};
use crate::flood::{CellZone, FloodField, TerrainGrid};
use crate::network::{Mode, PerMode, TransportNetwork, TripOutcome};
use crate::zones::ZoneAttributes;

pub const KIND_COUNT: usize = 8;
pub const ACTIVE_KINDS: usize = KIND_COUNT - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    DoNothing,
    BioretentionPlanters,
    Soakaway,
    StorageTank,
    PorousAsphalt,
    PerviousConcrete,
    PermeablePavers,
    GridPavers,
}

impl InterventionKind {
    pub const ALL: [InterventionKind; KIND_COUNT] = [
        InterventionKind::DoNothing,
        InterventionKind::BioretentionPlanters,
        InterventionKind::Soakaway,
        InterventionKind::StorageTank,
        InterventionKind::PorousAsphalt,
        InterventionKind::PerviousConcrete,
        InterventionKind::PermeablePavers,
        InterventionKind::GridPavers,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            InterventionKind::DoNothing => "DoNothing",
            InterventionKind::BioretentionPlanters => "BioretentionPlanters",
            InterventionKind::Soakaway => "Soakaway",
            InterventionKind::StorageTank => "StorageTank",
            InterventionKind::PorousAsphalt => "PorousAsphalt",
            InterventionKind::PerviousConcrete => "PerviousConcrete",
            InterventionKind::PermeablePavers => "PermeablePavers",
            InterventionKind::GridPavers => "GridPavers",
        }
    }
}

impl fmt::Display for InterventionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterventionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Data(format!("unknown intervention `{s}`")))
    }
}

/// Zone conditions under which a kind may be deployed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Applicability {
    pub min_paved_fraction: f64,
    pub max_paved_fraction: Option<f64>,
    pub requires_permeable_soil: bool,
}

impl Applicability {
    pub fn allows(&self, zone: &ZoneAttributes) -> bool {
        zone.paved_fraction >= self.min_paved_fraction
            && self.max_paved_fraction.is_none_or(|m| zone.paved_fraction <= m)
            && (!self.requires_permeable_soil || zone.permeable_soil)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    /// Event volume removed at full effectiveness (m³).
    pub capacity_m3: f64,
    pub lifetime_years: u32,
    pub implementation_cost_dkk: f64,
    pub maintenance_cost_dkk_per_year: f64,
    #[serde(default)]
    pub applicability: Applicability,
}

impl InterventionSpec {
    const NOTHING: InterventionSpec = InterventionSpec {
        capacity_m3: 0.0,
        lifetime_years: 1,
        implementation_cost_dkk: 0.0,
        maintenance_cost_dkk_per_year: 0.0,
        applicability: Applicability {
            min_paved_fraction: 0.0,
            max_paved_fraction: None,
            requires_permeable_soil: false,
        },
    };
}

/// Properties of the seven deployable kinds; `DoNothing` is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionCatalog {
    pub bioretention_planters: InterventionSpec,
    pub soakaway: InterventionSpec,
    pub storage_tank: InterventionSpec,
    pub porous_asphalt: InterventionSpec,
    pub pervious_concrete: InterventionSpec,
    pub permeable_pavers: InterventionSpec,
    pub grid_pavers: InterventionSpec,
}

impl Default for InterventionCatalog {
    fn default() -> Self {
        let spec = |capacity_m3, lifetime_years, cost, maintenance, applicability| InterventionSpec {
            capacity_m3,
            lifetime_years,
            implementation_cost_dkk: cost,
            maintenance_cost_dkk_per_year: maintenance,
            applicability,
        };
        let any = Applicability::default();
        let paved = |min| Applicability {
            min_paved_fraction: min,
            ..Applicability::default()
        };
        InterventionCatalog {
            bioretention_planters: spec(400.0, 25, 2.0e6, 40_000.0, any),
            soakaway: spec(
                600.0,
                30,
                1.5e6,
                20_000.0,
                Applicability {
                    requires_permeable_soil: true,
                    ..any
                },
            ),
            storage_tank: spec(2_500.0, 50, 4.0e6, 30_000.0, any),
            porous_asphalt: spec(500.0, 20, 3.0e6, 50_000.0, paved(0.5)),
            pervious_concrete: spec(500.0, 25, 3.5e6, 40_000.0, paved(0.5)),
            permeable_pavers: spec(450.0, 30, 2.5e6, 30_000.0, paved(0.3)),
            grid_pavers: spec(
                300.0,
                20,
                1.2e6,
                20_000.0,
                Applicability {
                    max_paved_fraction: Some(0.7),
                    ..any
                },
            ),
        }
    }
}

impl InterventionCatalog {
    pub fn spec(&self, kind: InterventionKind) -> &InterventionSpec {
        match kind {
            InterventionKind::DoNothing => &InterventionSpec::NOTHING,
            InterventionKind::BioretentionPlanters => &self.bioretention_planters,
            InterventionKind::Soakaway => &self.soakaway,
            InterventionKind::StorageTank => &self.storage_tank,
            InterventionKind::PorousAsphalt => &self.porous_asphalt,
            InterventionKind::PerviousConcrete => &self.pervious_concrete,
            InterventionKind::PermeablePavers => &self.permeable_pavers,
            InterventionKind::GridPavers => &self.grid_pavers,
        }
    }

    pub fn spec_mut(&mut self, kind: InterventionKind) -> Option<&mut InterventionSpec> {
        Some(match kind {
            InterventionKind::DoNothing => return None,
            InterventionKind::BioretentionPlanters => &mut self.bioretention_planters,
            InterventionKind::Soakaway => &mut self.soakaway,
            InterventionKind::StorageTank => &mut self.storage_tank,
            InterventionKind::PorousAsphalt => &mut self.porous_asphalt,
            InterventionKind::PerviousConcrete => &mut self.pervious_concrete,
            InterventionKind::PermeablePavers => &mut self.permeable_pavers,
            InterventionKind::GridPavers => &mut self.grid_pavers,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for kind in &InterventionKind::ALL[1..] {
            let s = self.spec(*kind);
            let field = |f: &str| format!("catalog.{}.{f}", snake(*kind));
            if !(s.capacity_m3.is_finite() && s.capacity_m3 >= 0.0) {
                return Err(Error::config(field("capacity_m3"), "must be non-negative"));
            }
            if s.lifetime_years < 1 {
                return Err(Error::config(field("lifetime_years"), "must be at least 1"));
            }
            if !(s.implementation_cost_dkk.is_finite() && s.implementation_cost_dkk >= 0.0) {
                return Err(Error::config(field("implementation_cost_dkk"), "must be non-negative"));
            }
            if !(s.maintenance_cost_dkk_per_year.is_finite() && s.maintenance_cost_dkk_per_year >= 0.0) {
                return Err(Error::config(
                    field("maintenance_cost_dkk_per_year"),
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }

    pub fn applicable(&self, kind: InterventionKind, zone: &ZoneAttributes) -> bool {
        kind == InterventionKind::DoNothing || self.spec(kind).applicability.allows(zone)
    }
}

fn snake(kind: InterventionKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Piecewise-linear depth (m) to damage-fraction curve, clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDamageCurve {
    pub knots: Vec<(f64, f64)>,
}

impl Default for DepthDamageCurve {
    fn default() -> Self {
        DepthDamageCurve {
            knots: vec![(0.0, 0.0), (0.05, 0.02), (0.2, 0.1), (0.5, 0.3), (1.0, 0.6), (2.0, 1.0)],
        }
    }
}

impl DepthDamageCurve {
    pub fn validate(&self) -> Result<()> {
        let field = "valuation.damage_curve";
        if self.knots.first() != Some(&(0.0, 0.0)) {
            return Err(Error::config(field, "first knot must be (0, 0)"));
        }
        for w in self.knots.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(Error::config(
                    field,
                    "knots must increase in depth and not decrease in damage",
                ));
            }
        }
        if self
            .knots
            .iter()
            .any(|&(d, f)| !d.is_finite() || !(0.0..=1.0).contains(&f))
        {
            return Err(Error::config(field, "damage fractions must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn fraction(&self, depth_m: f64) -> f64 {
        if depth_m <= 0.0 {
            return 0.0;
        }
        let k = &self.knots;
        let idx = k.partition_point(|&(d, _)| d < depth_m);
        let f = if idx == 0 {
            k[0].1
        } else if idx == k.len() {
            k[k.len() - 1].1
        } else {
            let (d0, f0) = k[idx - 1];
            let (d1, f1) = k[idx];
            f0 + (depth_m - d0) / (d1 - d0) * (f1 - f0)
        };
        f.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuationParams {
    pub damage_curve: DepthDamageCurve,
    pub value_of_time_dkk_per_hour: PerMode<f64>,
    pub cancelled_trip_cost_dkk: PerMode<f64>,
    /// Multiplier turning one sampled event into an annual impact.
    pub annualization: f64,
}

impl Default for ValuationParams {
    fn default() -> Self {
        ValuationParams {
            damage_curve: DepthDamageCurve::default(),
            value_of_time_dkk_per_hour: PerMode::uniform(105.0),
            cancelled_trip_cost_dkk: PerMode {
                drive: 250.0,
                cycle: 150.0,
                walk: 100.0,
            },
            annualization: 1.0,
        }
    }
}

impl ValuationParams {
    pub fn validate(&self) -> Result<()> {
        self.damage_curve.validate()?;
        for m in Mode::ALL {
            if !(self.value_of_time_dkk_per_hour.get(m) >= 0.0) {
                return Err(Error::config(
                    format!("valuation.value_of_time_dkk_per_hour.{m}"),
                    "must be non-negative",
                ));
            }
            if !(self.cancelled_trip_cost_dkk.get(m) >= 0.0) {
                return Err(Error::config(
                    format!("valuation.cancelled_trip_cost_dkk.{m}"),
                    "must be non-negative",
                ));
            }
        }
        if !(self.annualization.is_finite() && self.annualization >= 0.0) {
            return Err(Error::config("valuation.annualization", "must be non-negative"));
        }
        Ok(())
    }
}

/// Zone each network edge is charged to: the zone of the cell under its
/// midpoint, or the start node's zone when that cell is a boundary cell.
pub fn edge_zones(net: &TransportNetwork, grid: &TerrainGrid) -> Vec<usize> {
    (0..net.edges.len())
        .map(|e| {
            let (x, y) = net.edge_midpoint(e);
            match grid.zone_of_cell[grid.cell_at(x, y)] {
                CellZone::Zone(z) => z,
                CellZone::Boundary => net.nodes[net.edges[e].from].zone,
            }
        })
        .collect()
}

/// Repair cost per zone: damage fraction at the element's depth times its
/// full reconstruction cost.
pub fn infrastructure_damage(
    net: &TransportNetwork,
    edge_zone: &[usize],
    field: &FloodField,
    curve: &DepthDamageCurve,
    zones: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; zones];
    for (i, e) in net.edges.iter().enumerate() {
        let depth = field.element_depth.get(i).copied().unwrap_or(0.0);
        if depth <= 0.0 {
            continue;
        }
        out[edge_zone[i]] += curve.fraction(depth) * e.reconstruction_cost_per_m * e.length_m;
    }
    out
}

/// Value of lost time per origin zone.
pub fn delay_cost(outcomes: &[TripOutcome], value_of_time_dkk_per_hour: &PerMode<f64>, zones: usize) -> Vec<f64> {
    let mut out = vec![0.0; zones];
    for o in outcomes {
        if o.cancelled {
            continue;
        }
        out[o.origin_zone] += o.delay_minutes() * o.weight * value_of_time_dkk_per_hour.get(o.mode) / 60.0;
    }
    out
}

/// Cost of trips that could not be made, per origin zone.
pub fn cancellation_cost(outcomes: &[TripOutcome], cost_dkk: &PerMode<f64>, zones: usize) -> Vec<f64> {
    let mut out = vec![0.0; zones];
    for o in outcomes.iter().filter(|o| o.cancelled) {
        out[o.origin_zone] += o.weight * cost_dkk.get(o.mode);
    }
    out
}

/// Investment and maintenance per zone for one joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCosts {
    pub investment: Vec<f64>,
    pub maintenance: Vec<f64>,
    pub ledger: ZoneLedger,
}

/// Applies `actions` (one kind per zone) to `prev`. Investment covers newly
/// deployed kinds; maintenance covers everything active afterwards,
/// including this step's deployments.
pub fn action_costs(
    prev: &ZoneLedger,
    actions: &[InterventionKind],
    catalog: &InterventionCatalog,
) -> Result<ActionCosts> {
    let zones = prev.zone_count();
    if actions.len() != zones {
        return Err(Error::Contract(format!(
            "joint action has {} entries for {zones} zones",
            actions.len()
        )));
    }
    let mut ledger = prev.clone();
    let mut investment = vec![0.0; zones];
    for (z, &kind) in actions.iter().enumerate() {
        if kind == InterventionKind::DoNothing {
            continue;
        }
        let spec = catalog.spec(kind);
        ledger.deploy(z, kind, spec.lifetime_years)?;
        investment[z] = spec.implementation_cost_dkk;
    }
    let maintenance = (0..zones).map(|z| ledger.maintenance_dkk(z, catalog)).collect();
    Ok(ActionCosts {
        investment,
        maintenance,
        ledger,
    })
}

/// The five cost components of one zone in one step (DKK).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneCosts {
    pub infrastructure: f64,
    pub delay: f64,
    pub cancellation: f64,
    pub investment: f64,
    pub maintenance: f64,
}

impl ZoneCosts {
    pub fn total(&self) -> f64 {
        self.infrastructure + self.delay + self.cancellation + self.investment + self.maintenance
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.infrastructure,
            self.delay,
            self.cancellation,
            self.investment,
            self.maintenance,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub zones: Vec<ZoneCosts>,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.zones.iter().map(ZoneCosts::total).sum()
    }

    /// City-wide sum of each component.
    pub fn city(&self) -> ZoneCosts {
        self.zones.iter().fold(ZoneCosts::default(), |acc, z| ZoneCosts {
            infrastructure: acc.infrastructure + z.infrastructure,
            delay: acc.delay + z.delay,
            cancellation: acc.cancellation + z.cancellation,
            investment: acc.investment + z.investment,
            maintenance: acc.maintenance + z.maintenance,
        })
    }
}
