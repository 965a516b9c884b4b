use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::valuation::{InterventionCatalog, InterventionKind, ACTIVE_KINDS};

/// How an intervention's effectiveness falls with age.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecaySchedule {
    /// `1 - age / lifetime`
    #[default]
    Linear,
    /// `0.5^(age / half_life)`
    Exponential { half_life_years: f64 },
}

impl DecaySchedule {
    pub fn effectiveness(&self, age_years: u32, lifetime_years: u32) -> f64 {
        let age = age_years as f64;
        match *self {
            DecaySchedule::Linear => (1.0 - age / lifetime_years.max(1) as f64).max(0.0),
            DecaySchedule::Exponential { half_life_years } => 0.5f64.powf(age / half_life_years),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DecaySchedule::Exponential { half_life_years } = self {
            if !(half_life_years.is_finite() && *half_life_years > 0.0) {
                return Err(Error::config("decay.half_life_years", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub kind: InterventionKind,
    pub age_years: u32,
    pub lifetime_years: u32,
    pub remaining_effectiveness: f64,
}

impl LedgerEntry {
    pub fn deployed(kind: InterventionKind, lifetime_years: u32) -> Self {
        LedgerEntry {
            kind,
            age_years: 0,
            lifetime_years,
            remaining_effectiveness: 1.0,
        }
    }

    /// One year older; `None` once the lifetime is used up.
    pub fn aged(self, schedule: &DecaySchedule) -> Option<Self> {
        let age = self.age_years + 1;
        if age >= self.lifetime_years {
            return None;
        }
        Some(decay_effectiveness(LedgerEntry { age_years: age, ..self }, schedule))
    }
}

/// Recomputes `remaining_effectiveness` for the entry's current age.
pub fn decay_effectiveness(entry: LedgerEntry, schedule: &DecaySchedule) -> LedgerEntry {
    LedgerEntry {
        remaining_effectiveness: schedule.effectiveness(entry.age_years, entry.lifetime_years),
        ..entry
    }
}

/// Active interventions per zone. At most one entry per kind per zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLedger {
    zones: Vec<Vec<LedgerEntry>>,
}

impl ZoneLedger {
    pub fn new(zones: usize) -> Self {
        ZoneLedger {
            zones: vec![Vec::new(); zones],
        }
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    pub fn entries(&self, zone: usize) -> &[LedgerEntry] {
        &self.zones[zone]
    }

    pub fn is_active(&self, zone: usize, kind: InterventionKind) -> bool {
        self.zones[zone].iter().any(|e| e.kind == kind)
    }

    pub fn active_count(&self) -> usize {
        self.zones.iter().map(Vec::len).sum()
    }

    pub fn deploy(&mut self, zone: usize, kind: InterventionKind, lifetime_years: u32) -> Result<()> {
        if kind == InterventionKind::DoNothing {
            return Ok(());
        }
        if zone >= self.zones.len() {
            return Err(Error::Contract(format!("zone {zone} does not exist")));
        }
        if self.is_active(zone, kind) {
            return Err(Error::Contract(format!("{kind} is already active in zone {zone}")));
        }
        self.zones[zone].push(LedgerEntry::deployed(kind, lifetime_years));
        self.zones[zone].sort_by_key(|e| e.kind);
        Ok(())
    }

    /// Volume (m³) the zone's interventions remove from an event.
    pub fn effective_capacity_m3(&self, zone: usize, catalog: &InterventionCatalog) -> f64 {
        self.zones[zone].iter().fold(0.0, |acc, e| {
            acc + catalog.spec(e.kind).capacity_m3 * e.remaining_effectiveness
        })
    }

    /// Annual maintenance of everything active in the zone.
    pub fn maintenance_dkk(&self, zone: usize, catalog: &InterventionCatalog) -> f64 {
        self.zones[zone]
            .iter()
            .fold(0.0, |acc, e| acc + catalog.spec(e.kind).maintenance_cost_dkk_per_year)
    }

    /// Remaining effectiveness per active kind, in catalog order, 0 when inactive.
    pub fn effectiveness_vector(&self, zone: usize) -> [f64; ACTIVE_KINDS] {
        let mut z = [0.0; ACTIVE_KINDS];
        for e in &self.zones[zone] {
            z[e.kind.index() - 1] = e.remaining_effectiveness;
        }
        z
    }

    /// Ages every entry by one year, decays effectiveness and drops expired ones.
    pub fn advance_year(&mut self, schedule: &DecaySchedule) {
        for entries in &mut self.zones {
            *entries = entries.iter().filter_map(|e| e.aged(schedule)).collect();
        }
    }
}
