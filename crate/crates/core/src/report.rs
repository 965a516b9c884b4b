//! Exported artifacts: episode traces, adaptation pathways, per-year
//! component series, the two summary tables and small SVG charts.
//!
//! Every writer formats floats with Rust's shortest round-trip notation so
//! that equal inputs always produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::ScenarioId;
use crate::trainer::{summarize, CrossMatrix, EpisodeResult, EvalRow, MeanStd, SummaryRow};
use crate::valuation::{InterventionKind, KIND_COUNT};

pub const COMPONENT_NAMES: [&str; 5] = [
    "Infrastructure damage",
    "Travel delays",
    "Travel cancellations",
    "Action costs",
    "Action maintenance costs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Currency {
    #[default]
    #[serde(rename = "DKK")]
    Dkk,
    #[serde(rename = "EUR")]
    Eur,
}

/// Display settings. Simulation and CSV exports stay in DKK; only the
/// human-readable tables honour `currency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub currency: Currency,
    pub dkk_per_eur: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            currency: Currency::Dkk,
            dkk_per_eur: 7.46,
        }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dkk_per_eur.is_finite() && self.dkk_per_eur > 0.0) {
            return Err(Error::config("report.dkk_per_eur", "must be positive"));
        }
        Ok(())
    }

    pub fn convert(&self, dkk: f64) -> f64 {
        match self.currency {
            Currency::Dkk => dkk,
            Currency::Eur => dkk / self.dkk_per_eur,
        }
    }

    pub fn unit(&self) -> &'static str {
        match self.currency {
            Currency::Dkk => "DKK",
            Currency::Eur => "EUR",
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{}: {other:?}", path.display())),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTraceRow {
    pub policy: String,
    pub belief: String,
    pub reality: String,
    pub seed: u64,
    pub step: usize,
    pub year: i32,
    pub zone: usize,
    pub action: String,
    pub rainfall_mm: f64,
    pub infrastructure: f64,
    pub delay: f64,
    pub cancellation: f64,
    pub investment: f64,
    pub maintenance: f64,
    /// City-wide reward of the step, repeated on each zone row.
    pub reward: f64,
}

pub fn trace_rows(episode: &EpisodeResult) -> Vec<EpisodeTraceRow> {
    let belief = episode.belief.map(|b| b.to_string()).unwrap_or_default();
    let mut rows = Vec::new();
    for s in &episode.steps {
        for (zone, c) in s.costs.zones.iter().enumerate() {
            rows.push(EpisodeTraceRow {
                policy: episode.policy.clone(),
                belief: belief.clone(),
                reality: episode.reality.to_string(),
                seed: episode.seed,
                step: s.step,
                year: s.year,
                zone,
                action: s.actions[zone].name().to_string(),
                rainfall_mm: s.rainfall_mm,
                infrastructure: c.infrastructure,
                delay: c.delay,
                cancellation: c.cancellation,
                investment: c.investment,
                maintenance: c.maintenance,
                reward: s.reward,
            });
        }
    }
    rows
}

pub fn write_trace_csv(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for e in episodes {
        for row in trace_rows(e) {
            w.serialize(row).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<EpisodeTraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e| Error::parse(path.display().to_string(), i + 2, e.to_string()))?);
    }
    Ok(rows)
}

pub fn write_eval_rows_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `matrix[step][zone]`: the kind deployed in each zone at each step.
pub fn pathway_matrix(episode: &EpisodeResult) -> Vec<Vec<InterventionKind>> {
    episode.steps.iter().map(|s| s.actions.clone()).collect()
}

/// One row per (policy, seed, year) with one column per zone.
pub fn write_pathway_csv(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let zones = episodes
        .first()
        .and_then(|e| e.steps.first())
        .map_or(0, |s| s.actions.len());
    let mut header = vec!["policy".to_string(), "seed".to_string(), "year".to_string()];
    header.extend((0..zones).map(|z| format!("zone_{z}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for e in episodes {
        for s in &e.steps {
            let mut rec = vec![e.policy.clone(), e.seed.to_string(), s.year.to_string()];
            rec.extend(s.actions.iter().map(|a| a.name().to_string()));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Across-seed statistics of the city-wide components in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub year: i32,
    /// Infrastructure, delay, cancellation, investment, maintenance.
    pub components: [MeanStd; 5],
    pub reward: MeanStd,
}

pub fn component_series(episodes: &[EpisodeResult]) -> Vec<SeriesPoint> {
    let steps = episodes.iter().map(|e| e.steps.len()).min().unwrap_or(0);
    (0..steps)
        .map(|t| {
            let city: Vec<[f64; 5]> = episodes.iter().map(|e| e.steps[t].costs.city().as_array()).collect();
            SeriesPoint {
                year: episodes[0].steps[t].year,
                components: std::array::from_fn(|j| summarize(&city.iter().map(|c| c[j]).collect::<Vec<_>>())),
                reward: summarize(&episodes.iter().map(|e| e.steps[t].reward).collect::<Vec<_>>()),
            }
        })
        .collect()
}

pub fn write_series_csv(path: &Path, series: &[SeriesPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["year".to_string()];
    for name in [
        "infrastructure",
        "delay",
        "cancellation",
        "investment",
        "maintenance",
        "reward",
    ] {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for p in series {
        let mut rec = vec![p.year.to_string()];
        for m in p.components.iter().chain(std::iter::once(&p.reward)) {
            rec.push(m.mean.to_string());
            rec.push(m.std.to_string());
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `8.00 ± 0.18×10^8`, with the exponent taken from the mean.
pub fn format_scientific(m: &MeanStd) -> String {
    if !m.mean.is_finite() {
        return "n/a".to_string();
    }
    let exp = if m.mean == 0.0 {
        0
    } else {
        m.mean.abs().log10().floor() as i32
    };
    let scale = 10f64.powi(exp);
    let (mean, std) = (m.mean / scale, m.std / scale);
    if exp == 0 {
        format!("{mean:.2} ± {std:.2}")
    } else {
        format!("{mean:.2} ± {std:.2}×10^{exp}")
    }
}

/// `-107.42 ± 1.55` at a fixed scale such as 1e9.
pub fn format_scaled(m: &MeanStd, scale: f64) -> String {
    format!("{:.2} ± {:.2}", m.mean / scale, m.std / scale)
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn scaled(m: &MeanStd, report: &ReportConfig) -> MeanStd {
    MeanStd {
        mean: report.convert(m.mean),
        std: report.convert(m.std),
        n: m.n,
    }
}

/// Cost components as rows and evaluation groups as columns. Costs are
/// shown as positive amounts and the total reward as a negative one.
pub fn cost_table(summary: &[SummaryRow], report: &ReportConfig) -> String {
    let mut out = String::new();
    let mut header = vec![format!("Component ({})", report.unit())];
    header.extend(summary.iter().map(|s| {
        if s.belief.is_empty() || s.belief == s.reality {
            format!("{} {}", s.policy, s.reality)
        } else {
            format!("{} {}/{}", s.policy, s.belief, s.reality)
        }
    }));
    out.push_str(&header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for (j, name) in COMPONENT_NAMES.iter().enumerate() {
        let mut rec = vec![name.to_string()];
        rec.extend(
            summary
                .iter()
                .map(|s| format_scientific(&scaled(&s.components[j], report))),
        );
        out.push_str(&rec.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    let mut rec = vec!["Total reward".to_string()];
    rec.extend(summary.iter().map(|s| format_scientific(&scaled(&s.reward, report))));
    out.push_str(&rec.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    out
}

/// Relative change of a mean total reward against a baseline's, in
/// percent: `(r - r_base) / |r_base| × 100`. Positive means better.
pub fn reward_change_percent(reward: f64, baseline: f64) -> f64 {
    (reward - baseline) / baseline.abs() * 100.0
}

/// One line per (non-baseline group, baseline) pair sharing a reality.
pub fn comparison_lines(summary: &[SummaryRow]) -> String {
    let is_baseline = |s: &SummaryRow| s.policy == "NoControl" || s.policy == "RandomControl";
    let mut out = String::new();
    for s in summary.iter().filter(|s| !is_baseline(s)) {
        for b in summary.iter().filter(|b| is_baseline(b) && b.reality == s.reality) {
            let _ = writeln!(
                out,
                "{} vs {} ({}): total reward {:+.1}% of |baseline|",
                s.policy,
                b.policy,
                s.reality,
                reward_change_percent(s.reward.mean, b.reward.mean)
            );
        }
    }
    out
}

/// Belief | Reality | Reward in units of 10^9, absent cells marked.
pub fn matrix_table(matrix: &CrossMatrix, report: &ReportConfig) -> String {
    let mut out = format!("Belief,Reality,Reward (x10^9 {})\n", report.unit());
    for c in &matrix.cells {
        let cell = match &c.reward {
            Some(m) => format_scaled(&scaled(m, report), 1e9),
            None => "absent".to_string(),
        };
        let _ = writeln!(out, "{},{},{}", c.belief, c.reality, cell);
    }
    out
}

pub fn write_cost_table(path: &Path, summary: &[SummaryRow], report: &ReportConfig) -> Result<()> {
    write_text(path, &cost_table(summary, report))
}

pub fn write_matrix_table(path: &Path, matrix: &CrossMatrix, report: &ReportConfig) -> Result<()> {
    write_text(path, &matrix_table(matrix, report))
}

/// The matrix re-derived from trace rows: mean ± std of each episode's
/// summed reward, keyed by (belief, reality).
pub fn matrix_from_traces(rows: &[EpisodeTraceRow]) -> Vec<(ScenarioId, ScenarioId, MeanStd)> {
    let mut episodes: Vec<(&str, &str, u64, f64)> = Vec::new();
    for r in rows.iter().filter(|r| r.zone == 0) {
        match episodes
            .iter_mut()
            .find(|e| (e.0, e.1, e.2) == (r.belief.as_str(), r.reality.as_str(), r.seed))
        {
            Some(e) => e.3 += r.reward,
            None => episodes.push((&r.belief, &r.reality, r.seed, r.reward)),
        }
    }
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for e in &episodes {
        if !keys.contains(&(e.0, e.1)) {
            keys.push((e.0, e.1));
        }
    }
    keys.into_iter()
        .filter_map(|(b, r)| {
            let totals: Vec<f64> = episodes.iter().filter(|e| (e.0, e.1) == (b, r)).map(|e| e.3).collect();
            Some((b.parse().ok()?, r.parse().ok()?, summarize(&totals)))
        })
        .collect()
}

const PALETTE: [&str; 8] = [
    "#d9d9d9", "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d",
];

/// Per-year mean of each component as a line chart.
pub fn series_svg(series: &[SeriesPoint], report: &ReportConfig) -> String {
    let (w, h, pad) = (720.0, 360.0, 48.0);
    let max = series
        .iter()
        .flat_map(|p| p.components.iter().map(|m| report.convert(m.mean)))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let n = series.len().max(2) as f64 - 1.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad
    );
    let _ = writeln!(
        svg,
        "<text x=\"4\" y=\"{}\">{:.3e} {}</text>",
        pad - 8.0,
        max,
        report.unit()
    );
    if let (Some(a), Some(b)) = (series.first(), series.last()) {
        let _ = writeln!(svg, "<text x=\"{pad}\" y=\"{}\">{}</text>", h - pad + 16.0, a.year);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            w - pad - 24.0,
            h - pad + 16.0,
            b.year
        );
    }
    for (j, name) in COMPONENT_NAMES.iter().enumerate() {
        let pts: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let x = pad + (w - 2.0 * pad) * i as f64 / n;
                let y = h - pad - (h - 2.0 * pad) * report.convert(p.components[j].mean) / max;
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let color = PALETTE[j + 1];
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            w - pad - 150.0,
            pad + 14.0 * j as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Zones as rows, years as columns, one coloured cell per deployment.
pub fn pathway_svg(episode: &EpisodeResult) -> String {
    let matrix = pathway_matrix(episode);
    let zones = matrix.first().map_or(0, Vec::len);
    let (cell, left, top) = (8.0, 56.0, 20.0);
    let width = left + cell * matrix.len() as f64 + 170.0;
    let height = (top + cell * zones as f64 + 20.0).max(top + 14.0 * KIND_COUNT as f64);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    for z in 0..zones {
        let _ = writeln!(
            svg,
            "<text x=\"2\" y=\"{}\">zone {z}</text>",
            top + cell * (z as f64 + 0.9)
        );
    }
    for (t, actions) in matrix.iter().enumerate() {
        for (z, a) in actions.iter().enumerate() {
            if *a == InterventionKind::DoNothing {
                continue;
            }
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\"/>",
                left + cell * t as f64,
                top + cell * z as f64,
                PALETTE[a.index()]
            );
        }
    }
    for k in InterventionKind::ALL.iter().skip(1) {
        let y = top + 14.0 * (k.index() - 1) as f64;
        let x = left + cell * matrix.len() as f64 + 10.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{y}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            PALETTE[k.index()],
            x + 14.0,
            y + 9.0,
            k.name()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    write_text(path, svg)
}
