//! Scenario-conditioned rainfall sampling.
//!
//! Each climate scenario carries a set of time slices covering the planning
//! horizon. A slice holds a quantile table (cumulative probability, daily
//! rainfall in mm) which is read as a piecewise-linear inverse CDF. One
//! event is drawn per annual decision step by inverse-transform sampling.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "RCP2.6")]
    Rcp26,
    #[serde(rename = "RCP4.5")]
    Rcp45,
    #[serde(rename = "RCP8.5")]
    Rcp85,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::Rcp26, ScenarioId::Rcp45, ScenarioId::Rcp85];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Rcp26 => "RCP2.6",
            ScenarioId::Rcp45 => "RCP4.5",
            ScenarioId::Rcp85 => "RCP8.5",
        }
    }

    pub fn valid_ids() -> String {
        Self::ALL.map(|s| s.as_str()).join(", ")
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "rcp26" => Ok(ScenarioId::Rcp26),
            "rcp45" => Ok(ScenarioId::Rcp45),
            "rcp85" => Ok(ScenarioId::Rcp85),
            _ => Err(Error::config(
                "scenario",
                format!("unknown scenario `{s}`; valid ids: {}", Self::valid_ids()),
            )),
        }
    }
}

/// Inclusive range of calendar years covered by an episode, one step per year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon {
            first_year: 2024,
            last_year: 2100,
        }
    }
}

impl Horizon {
    pub fn steps(&self) -> usize {
        (self.last_year - self.first_year + 1).max(0) as usize
    }

    pub fn year_of(&self, step_index: usize) -> i32 {
        self.first_year + step_index as i32
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first_year..=self.last_year).contains(&year)
    }
}

/// Monotone (probability, depth_mm) knots defining a piecewise-linear inverse CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    knots: Vec<(f64, f64)>,
}

impl QuantileTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let field = "quantile_table";
        if knots.len() < 2 {
            return Err(Error::config(field, "needs at least two knots"));
        }
        for &(p, d) in &knots {
            if !p.is_finite() || !d.is_finite() {
                return Err(Error::config(field, "knots must be finite"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(field, format!("probability {p} outside [0, 1]")));
            }
            if d < 0.0 {
                return Err(Error::config(field, format!("negative rainfall depth {d}")));
            }
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::config(field, "probabilities must start at 0 and end at 1"));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config(field, "probabilities must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::config(field, "rainfall depths must be non-decreasing"));
            }
        }
        Ok(QuantileTable { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Inverse CDF at probability `p` (clamped to [0, 1]).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        // first knot with probability >= p
        let idx = self.knots.partition_point(|&(kp, _)| kp < p);
        if idx == 0 {
            return self.knots[0].1;
        }
        let (p0, d0) = self.knots[idx - 1];
        let (p1, d1) = self.knots[idx];
        d0 + (p - p0) / (p1 - p0) * (d1 - d0)
    }

    /// Forward CDF; used for distributional checks.
    pub fn cdf(&self, depth: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if depth < first.1 {
            return 0.0;
        }
        if depth >= last.1 {
            return 1.0;
        }
        // last knot with depth <= value
        let idx = self.knots.partition_point(|&(_, kd)| kd <= depth);
        let (p0, d0) = self.knots[idx - 1];
        let (p1, d1) = self.knots[idx];
        if d1 == d0 {
            p1
        } else {
            p0 + (depth - d0) / (d1 - d0) * (p1 - p0)
        }
    }

    fn scaled(&self, factor: f64) -> QuantileTable {
        QuantileTable {
            knots: self.knots.iter().map(|&(p, d)| (p, d * factor)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlice {
    pub first_year: i32,
    pub last_year: i32,
    pub table: QuantileTable,
}

impl TimeSlice {
    fn midpoint(&self) -> f64 {
        0.5 * (self.first_year as f64 + self.last_year as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub scenario: ScenarioId,
    pub horizon: Horizon,
    pub slices: Vec<TimeSlice>,
    /// Linear blending of neighbouring slices' quantile functions between slice
    /// midpoints. Off by default: slices act as a step function in time.
    #[serde(default)]
    pub blend_slices: bool,
}

/// Inverse CDF for one year: a single slice or a convex blend of two.
#[derive(Debug, Clone, Copy)]
pub struct InverseCdf<'a> {
    primary: &'a QuantileTable,
    blend: Option<(&'a QuantileTable, f64)>,
}

impl InverseCdf<'_> {
    pub fn quantile(&self, p: f64) -> f64 {
        let base = self.primary.quantile(p);
        match self.blend {
            None => base,
            Some((other, w)) => (1.0 - w) * base + w * other.quantile(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainfallEvent {
    pub step_index: usize,
    pub year: i32,
    pub depth_mm: f64,
}

impl ScenarioStats {
    pub fn new(scenario: ScenarioId, horizon: Horizon, slices: Vec<TimeSlice>, blend_slices: bool) -> Result<Self> {
        let stats = ScenarioStats {
            scenario,
            horizon,
            slices,
            blend_slices,
        };
        stats.validate()?;
        Ok(stats)
    }

    /// Slices must tile the horizon exactly, in order.
    pub fn validate(&self) -> Result<()> {
        if self.horizon.last_year < self.horizon.first_year {
            return Err(Error::config("horizon", "last year precedes first year"));
        }
        if self.slices.is_empty() {
            return Err(Error::config("slices", "at least one time slice required"));
        }
        let mut expected = self.horizon.first_year;
        for s in &self.slices {
            if s.first_year != expected {
                return Err(Error::config(
                    "slices",
                    format!(
                        "slice {}-{} leaves a gap or overlap (expected start {expected})",
                        s.first_year, s.last_year
                    ),
                ));
            }
            if s.last_year < s.first_year {
                return Err(Error::config("slices", "slice ends before it starts"));
            }
            // re-validate tables that may have been built via serde
            QuantileTable::new(s.table.knots.clone())?;
            expected = s.last_year + 1;
        }
        if expected != self.horizon.last_year + 1 {
            return Err(Error::config(
                "slices",
                format!(
                    "slices end at {} but horizon ends at {}",
                    expected - 1,
                    self.horizon.last_year
                ),
            ));
        }
        Ok(())
    }

    fn slice_index(&self, year: i32) -> Option<usize> {
        self.slices
            .iter()
            .position(|s| (s.first_year..=s.last_year).contains(&year))
    }

    /// Inverse CDF of daily rainfall for `year`.
    pub fn build_cdf(&self, year: i32) -> Result<InverseCdf<'_>> {
        let k = self.slice_index(year).ok_or_else(|| {
            Error::config(
                "year",
                format!("{year} is outside every time slice of {}", self.scenario),
            )
        })?;
        let slice = &self.slices[k];
        let blend = if self.blend_slices {
            let y = year as f64;
            let mid = slice.midpoint();
            if y > mid && k + 1 < self.slices.len() {
                let next = &self.slices[k + 1];
                Some((&next.table, (y - mid) / (next.midpoint() - mid)))
            } else if y < mid && k > 0 {
                let prev = &self.slices[k - 1];
                Some((&prev.table, (mid - y) / (mid - prev.midpoint())))
            } else {
                None
            }
        } else {
            None
        };
        Ok(InverseCdf {
            primary: &slice.table,
            blend,
        })
    }

    /// Draws one daily rainfall event for decision step `step_index`.
    pub fn sample_event<R: Rng + ?Sized>(&self, step_index: usize, rng: &mut R) -> Result<RainfallEvent> {
        let year = self.horizon.year_of(step_index);
        let cdf = self.build_cdf(year)?;
        let u: f64 = rng.gen();
        Ok(RainfallEvent {
            step_index,
            year,
            depth_mm: cdf.quantile(u),
        })
    }

    /// Built-in synthetic statistics. Heavier tails and later slices get wetter
    /// for the higher-forcing pathways.
    pub fn synthetic(scenario: ScenarioId) -> Self {
        let base = QuantileTable::new(vec![
            (0.0, 0.0),
            (0.5, 6.0),
            (0.75, 14.0),
            (0.9, 28.0),
            (0.97, 48.0),
            (0.995, 80.0),
            (1.0, 130.0),
        ])
        .expect("static table is valid");
        let factors = match scenario {
            ScenarioId::Rcp26 => [1.00, 1.03, 1.05],
            ScenarioId::Rcp45 => [1.02, 1.08, 1.14],
            ScenarioId::Rcp85 => [1.04, 1.16, 1.32],
        };
        let bounds = [(2024, 2050), (2051, 2075), (2076, 2100)];
        let slices = bounds
            .iter()
            .zip(factors)
            .map(|(&(a, b), f)| TimeSlice {
                first_year: a,
                last_year: b,
                table: base.scaled(f),
            })
            .collect();
        ScenarioStats {
            scenario,
            horizon: Horizon::default(),
            slices,
            blend_slices: false,
        }
    }

    /// Same statistics with every depth multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.slices {
            s.table = s.table.scaled(factor);
        }
        out
    }

    /// Statistics that always produce zero rainfall. Used for dry runs.
    pub fn dry(scenario: ScenarioId, horizon: Horizon) -> Self {
        ScenarioStats {
            scenario,
            horizon,
            slices: vec![TimeSlice {
                first_year: horizon.first_year,
                last_year: horizon.last_year,
                table: QuantileTable {
                    knots: vec![(0.0, 0.0), (1.0, 0.0)],
                },
            }],
            blend_slices: false,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("scenario = {}\n", self.scenario));
        out.push_str(&format!(
            "horizon = {} {}\n",
            self.horizon.first_year, self.horizon.last_year
        ));
        out.push_str(&format!("blend = {}\n", self.blend_slices));
        for s in &self.slices {
            out.push_str(&format!("slice = {} {}\n", s.first_year, s.last_year));
            for &(p, d) in s.table.knots() {
                out.push_str(&format!("{p} {d}\n"));
            }
        }
        out
    }

    /// Parses the scenario-statistics text format. See the crate README for
    /// the grammar; `source` only labels error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut scenario = None;
        let mut horizon = None;
        let mut blend = false;
        let mut slices: Vec<(i32, i32, Vec<(f64, f64)>, usize)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "scenario" => scenario = Some(value.parse::<ScenarioId>()?),
                    "horizon" => {
                        let (a, b) = parse_year_pair(value, source, lineno)?;
                        horizon = Some(Horizon {
                            first_year: a,
                            last_year: b,
                        });
                    }
                    "blend" => {
                        blend = value
                            .parse::<bool>()
                            .map_err(|_| Error::parse(source, lineno, "blend must be true or false"))?
                    }
                    "slice" => {
                        let (a, b) = parse_year_pair(value, source, lineno)?;
                        slices.push((a, b, Vec::new(), lineno));
                    }
                    other => return Err(Error::parse(source, lineno, format!("unknown key `{other}`"))),
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(p), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(source, lineno, "expected `probability depth_mm`"));
            };
            let p: f64 = p
                .parse()
                .map_err(|_| Error::parse(source, lineno, format!("bad probability `{p}`")))?;
            let d: f64 = d
                .parse()
                .map_err(|_| Error::parse(source, lineno, format!("bad depth `{d}`")))?;
            let Some(current) = slices.last_mut() else {
                return Err(Error::parse(source, lineno, "table row before any `slice =` line"));
            };
            current.2.push((p, d));
        }

        let scenario = scenario.ok_or_else(|| Error::parse(source, 0, "missing `scenario`"))?;
        let horizon = horizon.unwrap_or_default();
        let slices = slices
            .into_iter()
            .map(|(a, b, knots, lineno)| {
                let table = QuantileTable::new(knots)
                    .map_err(|e| Error::parse(source, lineno, format!("slice {a}-{b}: {e}")))?;
                Ok(TimeSlice {
                    first_year: a,
                    last_year: b,
                    table,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ScenarioStats::new(scenario, horizon, slices, blend)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn parse_year_pair(value: &str, source: &str, lineno: usize) -> Result<(i32, i32)> {
    let mut it = value.split_whitespace().map(str::parse::<i32>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(Error::parse(source, lineno, "expected two years")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(knots: Vec<(f64, f64)>) -> ScenarioStats {
        ScenarioStats::new(
            ScenarioId::Rcp45,
            Horizon::default(),
            vec![TimeSlice {
                first_year: 2024,
                last_year: 2100,
                table: QuantileTable::new(knots).unwrap(),
            }],
            false,
        )
        .unwrap()
    }

    #[test]
    fn linear_midpoint() {
        let s = single(vec![(0.0, 0.0), (1.0, 100.0)]);
        assert_eq!(s.build_cdf(2030).unwrap().quantile(0.5), 50.0);
    }

    #[test]
    fn lower_endpoint_is_minimum_depth() {
        let s = single(vec![(0.0, 3.0), (0.4, 9.0), (1.0, 40.0)]);
        assert_eq!(s.build_cdf(2024).unwrap().quantile(0.0), 3.0);
    }

    #[test]
    fn upper_tail_interpolation() {
        // 20 + (0.95 - 0.9) / (1 - 0.9) * (150 - 20)
        let s = single(vec![(0.0, 0.0), (0.9, 20.0), (1.0, 150.0)]);
        let q = s.build_cdf(2100).unwrap().quantile(0.95);
        assert!((q - 85.0).abs() < 1e-12, "{q}");
    }

    #[test]
    fn year_outside_horizon_is_config_error() {
        let s = single(vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(s.build_cdf(2101), Err(Error::Config { .. })));
        assert!(matches!(s.build_cdf(2023), Err(Error::Config { .. })));
    }

    #[test]
    fn point_mass_table() {
        let s = single(vec![(0.0, 10.0), (1.0, 10.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for step in 0..77 {
            assert_eq!(s.sample_event(step, &mut rng).unwrap().depth_mm, 10.0);
        }
    }

    #[test]
    fn seeded_sequences_repeat() {
        let s = ScenarioStats::synthetic(ScenarioId::Rcp85);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..77)
                .map(|t| s.sample_event(t, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
        let ev = draw(11);
        assert!(ev.iter().enumerate().all(|(t, e)| e.year == 2024 + t as i32));
    }

    #[test]
    fn table_validation() {
        assert!(QuantileTable::new(vec![(0.0, 0.0)]).is_err());
        assert!(QuantileTable::new(vec![(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(QuantileTable::new(vec![(0.0, 0.0), (0.9, 1.0)]).is_err());
        assert!(QuantileTable::new(vec![(0.0, 0.0), (0.5, 2.0), (0.5, 3.0), (1.0, 4.0)]).is_err());
        assert!(QuantileTable::new(vec![(0.0, 5.0), (1.0, 4.0)]).is_err());
        assert!(QuantileTable::new(vec![(0.0, -1.0), (1.0, 4.0)]).is_err());
    }

    #[test]
    fn slices_must_tile_horizon() {
        let t = QuantileTable::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let mk = |a, b| TimeSlice {
            first_year: a,
            last_year: b,
            table: t.clone(),
        };
        let h = Horizon::default();
        assert!(ScenarioStats::new(ScenarioId::Rcp26, h, vec![mk(2024, 2050), mk(2052, 2100)], false).is_err());
        assert!(ScenarioStats::new(ScenarioId::Rcp26, h, vec![mk(2024, 2050), mk(2050, 2100)], false).is_err());
        assert!(ScenarioStats::new(ScenarioId::Rcp26, h, vec![mk(2024, 2099)], false).is_err());
        assert!(ScenarioStats::new(ScenarioId::Rcp26, h, vec![mk(2024, 2050), mk(2051, 2100)], false).is_ok());
    }

    #[test]
    fn text_format_round_trip() {
        for id in ScenarioId::ALL {
            let s = ScenarioStats::synthetic(id);
            let back = ScenarioStats::parse(&s.to_text(), "mem").unwrap();
            assert_eq!(s, back);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "scenario = RCP4.5\nslice = 2024 2100\n0 0\nabc 1\n";
        match ScenarioStats::parse(text, "f.txt") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(ScenarioStats::parse("scenario = RCP9.9\n", "f").is_err());
    }

    #[test]
    fn blending_is_step_free_inside_slices() {
        let mut s = ScenarioStats::synthetic(ScenarioId::Rcp85);
        s.blend_slices = true;
        let mut prev = 0.0;
        for year in 2024..=2100 {
            let q = s.build_cdf(year).unwrap().quantile(0.9);
            assert!(q >= prev - 1e-12, "{year}: {q} < {prev}");
            prev = q;
        }
    }

    #[test]
    fn scenario_id_parsing() {
        assert_eq!("RCP4.5".parse::<ScenarioId>().unwrap(), ScenarioId::Rcp45);
        assert_eq!("rcp85".parse::<ScenarioId>().unwrap(), ScenarioId::Rcp85);
        let err = "RCP6.0".parse::<ScenarioId>().unwrap_err().to_string();
        assert!(err.contains("RCP2.6, RCP4.5, RCP8.5"), "{err}");
    }
}
