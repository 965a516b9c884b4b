use serde::{Deserialize, Serialize};

use super::{Mode, PerMode};
use crate::error::{Error, Result};

/// Speed retained as a function of water depth.
///
/// With `x = depth / cutoff`, the retained fraction is
/// `1 + linear * x + quadratic * x^2` for `x < 1`, clamped to `[0, 1]`,
/// and zero (impassable) for `x >= 1`. The defaults rescale the widely used
/// road-vehicle curve `v(d) = 0.0009 d^2 - 0.5529 d + 86.9448` (d in mm,
/// v in km/h, cutoff 300 mm) to a dimensionless shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionCurve {
    pub cutoff_m: f64,
    pub linear: f64,
    pub quadratic: f64,
}

impl DisruptionCurve {
    pub fn with_cutoff(cutoff_m: f64) -> Self {
        DisruptionCurve {
            cutoff_m,
            linear: -0.5529 * 300.0 / 86.9448,
            quadratic: 0.0009 * 300.0 * 300.0 / 86.9448,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.cutoff_m.is_finite() && self.cutoff_m > 0.0) {
            return Err(Error::config(field, "cutoff must be positive"));
        }
        // derivative linear + 2 quadratic x must stay <= 0 on [0, 1]
        if self.linear > 0.0 || self.linear + 2.0 * self.quadratic > 0.0 {
            return Err(Error::config(field, "curve must be non-increasing on [0, cutoff)"));
        }
        Ok(())
    }

    /// Fraction of free-flow speed retained at `depth_m`.
    pub fn retained(&self, depth_m: f64) -> f64 {
        if depth_m <= 0.0 {
            return 1.0;
        }
        let x = depth_m / self.cutoff_m;
        if x >= 1.0 {
            return 0.0;
        }
        (1.0 + self.linear * x + self.quadratic * x * x).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionParams {
    pub curves: PerMode<DisruptionCurve>,
    /// Mode speed ceilings; an edge's free-flow speed for a mode is
    /// `min(edge speed, ceiling)`.
    pub speed_cap_kmh: PerMode<f64>,
}

impl Default for DisruptionParams {
    fn default() -> Self {
        DisruptionParams {
            curves: PerMode {
                drive: DisruptionCurve::with_cutoff(0.30),
                cycle: DisruptionCurve::with_cutoff(0.20),
                walk: DisruptionCurve::with_cutoff(0.40),
            },
            speed_cap_kmh: PerMode {
                drive: 130.0,
                cycle: 16.0,
                walk: 5.0,
            },
        }
    }
}

impl DisruptionParams {
    pub fn validate(&self) -> Result<()> {
        self.curves.drive.validate("disruption.curves.drive")?;
        self.curves.cycle.validate("disruption.curves.cycle")?;
        self.curves.walk.validate("disruption.curves.walk")?;
        for m in Mode::ALL {
            let cap = self.speed_cap_kmh.get(m);
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::config(
                    format!("disruption.speed_cap_kmh.{m}"),
                    "must be positive",
                ));
            }
        }
        Ok(())
    }

    pub fn free_flow(&self, edge_speed_kmh: f64, mode: Mode) -> f64 {
        edge_speed_kmh.min(self.speed_cap_kmh.get(mode))
    }
}

/// Travel speed (km/h) on a segment flooded to `depth_m`; 0 means impassable.
pub fn disrupted_speed(free_flow_kmh: f64, depth_m: f64, mode: Mode, params: &DisruptionParams) -> f64 {
    free_flow_kmh * params.curves.get(mode).retained(depth_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dry_segment_keeps_free_flow() {
        let p = DisruptionParams::default();
        for m in Mode::ALL {
            assert_eq!(disrupted_speed(42.0, 0.0, m, &p), 42.0);
        }
    }

    #[test]
    fn cutoffs_make_segments_impassable() {
        let p = DisruptionParams::default();
        assert_eq!(disrupted_speed(50.0, 0.30, Mode::Drive, &p), 0.0);
        assert_eq!(disrupted_speed(50.0, 0.45, Mode::Drive, &p), 0.0);
        assert_eq!(disrupted_speed(15.0, 0.20, Mode::Cycle, &p), 0.0);
        assert_eq!(disrupted_speed(5.0, 0.40, Mode::Walk, &p), 0.0);
        assert!(disrupted_speed(5.0, 0.39, Mode::Walk, &p) > 0.0);
    }

    #[test]
    fn half_cutoff_is_strictly_between() {
        let p = DisruptionParams::default();
        let v = disrupted_speed(50.0, 0.15, Mode::Drive, &p);
        assert!(v > 0.0 && v < 50.0, "{v}");
        // matches the mm-scale curve at 150 mm: (0.0009*150^2 - 0.5529*150 + 86.9448)/86.9448
        let expected = 50.0 * (0.0009 * 22500.0 - 0.5529 * 150.0 + 86.9448) / 86.9448;
        assert!((v - expected).abs() < 1e-9);
    }

    #[test]
    fn non_increasing_in_depth() {
        let p = DisruptionParams::default();
        for m in Mode::ALL {
            let mut prev = f64::INFINITY;
            for i in 0..=500 {
                let v = disrupted_speed(30.0, i as f64 * 0.001, m, &p);
                assert!(v <= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn rejects_increasing_curves() {
        let c = DisruptionCurve {
            cutoff_m: 0.3,
            linear: -0.1,
            quadratic: 1.0,
        };
        assert!(c.validate("x").is_err());
    }
}
