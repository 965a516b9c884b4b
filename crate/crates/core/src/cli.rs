//! Command-line surface: `generate`, `train`, `eval` and `inspect`.
//!
//! Every command that writes files appends one line to `manifest.jsonl` in
//! its output directory listing each artifact with its SHA-256.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{BridgeObservation, PROTOCOL_VERSION};
use crate::bundle::CityBundle;
use crate::config::RunConfig;
use crate::env::{AdaptationEnv, World};
use crate::error::{Error, Result};
use crate::forcing::ScenarioId;
use crate::network::synthetic::generate_synthetic_city;
use crate::policy::{PolicyCheckpoint, PolicyParams};
use crate::report;
use crate::trainer::{
    self, cross_scenario_eval, evaluate, load_policy, Baseline, BeliefCheckpoint, Controller, EpisodeResult,
    EvalReport, LogRow, TrainerState,
};
use crate::valuation::InterventionKind;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "adapt-iam",
    version,
    about = "Climate-adaptation planning with a masked graph policy"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic city bundle and scenario statistics.
    Generate(GenerateArgs),
    /// Train a policy under one climate scenario.
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline, or the belief/reality matrix.
    Eval(EvalArgs),
    /// Describe a bundle, config, checkpoint or initial observation.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// City bundle directory, overriding the config's city.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub zones: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub trips: Option<usize>,
    #[arg(long)]
    pub cell_size: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "RCP4.5")]
    pub scenario: String,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Trainer checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides `train.max_env_steps`.
    #[arg(long)]
    pub max_env_steps: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Policy checkpoint; with `--matrix`, repeat as `BELIEF=PATH`.
    #[arg(long)]
    pub checkpoint: Vec<String>,
    /// `no-control` or `random-control`; may be repeated.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// Scenario the checkpoint was trained under, used for labelling.
    #[arg(long)]
    pub belief: Option<String>,
    #[arg(long)]
    pub reality: Option<String>,
    /// First seed when `--seeds` is a count or absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `A..B`, a comma list, or a count starting at `--seed`. Default 10.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Evaluate every belief checkpoint in every reality.
    #[arg(long)]
    pub matrix: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Print the initial observation checksum for this scenario.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub seeds: Vec<u64>,
    pub scenarios: Vec<String>,
    pub out: String,
    pub artifacts: Vec<Artifact>,
    pub code_version: String,
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, out: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            config: config.map(|p| p.display().to_string()),
            seeds: Vec::new(),
            scenarios: Vec::new(),
            out: out.display().to_string(),
            artifacts: Vec::new(),
            code_version: code_version(),
        }
    }

    pub fn add(&mut self, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(&self.out).unwrap_or(path);
        self.artifacts.push(Artifact {
            path: rel.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn append_to(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join(MANIFEST_FILE);
        let line = serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<RunManifest>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(path.display().to_string(), i + 1, e.to_string()))
        })
        .collect()
}

/// Parses `A..B`, `a,b,c` or a count `N` (meaning `base..base+N`).
pub fn parse_seeds(spec: Option<&str>, base: u64) -> Result<Vec<u64>> {
    let bad = |s: &str| Error::config("--seeds", format!("cannot parse `{s}`; use A..B, a,b,c or a count"));
    let Some(spec) = spec.map(str::trim) else {
        return Ok((base..base + 10).collect());
    };
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad(spec))?,
            b.trim().parse().map_err(|_| bad(spec))?,
        );
        (a..b).collect()
    } else if spec.contains(',') {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(spec)))
            .collect::<Result<_>>()?
    } else {
        let n: u64 = spec.parse().map_err(|_| bad(spec))?;
        (base..base + n).collect()
    };
    if seeds.is_empty() {
        return Err(Error::config("--seeds", "seed set is empty"));
    }
    Ok(seeds)
}

fn parse_scenario(flag: &str, value: &str) -> Result<ScenarioId> {
    value.parse().map_err(|_| {
        Error::config(
            flag,
            format!("unknown scenario `{value}`; valid ids: {}", ScenarioId::valid_ids()),
        )
    })
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(b) = &common.bundle {
        cfg.city.bundle = Some(b.clone());
    }
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::config("arguments", e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Inspect(a) => cmd_inspect(&a).map(|text| print!("{text}")),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let mut spec = cfg.city.synthetic;
    if let Some(z) = args.zones {
        spec.zones = z;
    }
    if let Some(w) = args.width {
        spec.width = w;
    }
    if let Some(h) = args.height {
        spec.height = h;
    }
    if let Some(t) = args.trips {
        spec.demand.trips = t;
    }
    if let Some(c) = args.cell_size {
        spec.cell_size_m = c;
    }
    spec.validate().map_err(|e| match e {
        Error::Config { field, message } => Error::config(format!("--{}", field.replace('_', "-")), message),
        other => other,
    })?;
    let seed = args.seed.unwrap_or(cfg.city.seed);
    let bundle = generate_synthetic_city(&spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut manifest = RunManifest::new("generate", args.common.config.as_deref(), &args.out);
    manifest.seeds = vec![seed];
    for path in bundle.write(&args.out)? {
        manifest.add(&path)?;
    }
    let scen_dir = args.out.join("scenarios");
    std::fs::create_dir_all(&scen_dir).map_err(|e| Error::io(&scen_dir, e))?;
    for id in ScenarioId::ALL {
        let stats = cfg.scenarios()?.get(id)?.clone();
        let path = scen_dir.join(format!("{}.txt", id.as_str().to_ascii_lowercase().replace('.', "")));
        std::fs::write(&path, stats.to_text()).map_err(|e| Error::io(&path, e))?;
        manifest.scenarios.push(id.to_string());
        manifest.add(&path)?;
    }
    manifest.append_to(&args.out)?;
    eprintln!(
        "wrote {} zones, {} nodes, {} edges, {} trips to {}",
        bundle.zones.count(),
        bundle.network.nodes.len(),
        bundle.network.edges.len(),
        bundle.trips.len(),
        args.out.display()
    );
    Ok(())
}

fn append_log(path: &Path, rows: &[LogRow], fresh: bool) -> Result<()> {
    let exists = path.exists() && !fresh;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(exists)
        .truncate(!exists)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = args.max_env_steps {
        cfg.train.max_env_steps = n;
    }
    let scenario = parse_scenario("--scenario", &args.scenario)?;
    let world = cfg.world()?;
    let resume = args.resume.as_deref().map(TrainerState::load).transpose()?;
    if let Some(r) = &resume {
        if r.scenario != scenario {
            return Err(Error::config(
                "--scenario",
                format!("checkpoint was trained under {}, not {scenario}", r.scenario),
            ));
        }
    }
    let quiet = args.quiet;
    let mut progress = |r: &LogRow| {
        if !quiet {
            let ret = r.mean_return.map_or("-".to_string(), |m| format!("{m:.4e}"));
            eprintln!(
                "update {:>5}  steps {:>9}  return {ret}  entropy {:.3}  kl {:.4}",
                r.update, r.env_steps, r.entropy, r.approx_kl
            );
        }
    };
    let outcome = trainer::train(
        world,
        scenario,
        &cfg.train,
        &cfg.policy,
        Some(&args.out),
        resume.clone(),
        Some(&mut progress),
    )?;
    let log_path = args.out.join("train_log.csv");
    append_log(&log_path, &outcome.log, resume.is_none())?;
    let cfg_path = args.out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;

    let mut manifest = RunManifest::new("train", args.common.config.as_deref(), &args.out);
    manifest.seeds = vec![cfg.train.seed];
    manifest.scenarios = vec![scenario.to_string()];
    for p in outcome.checkpoints.iter().chain([&log_path, &cfg_path]) {
        manifest.add(p)?;
    }
    manifest.append_to(&args.out)?;
    eprintln!(
        "trained {} env steps over {} updates{}",
        outcome.state.env_steps,
        outcome.state.updates,
        if outcome.stopped_early {
            " (return plateaued)"
        } else {
            ""
        }
    );
    Ok(())
}

fn write_episode_outputs(
    dir: &Path,
    episodes: &[EpisodeResult],
    cfg: &RunConfig,
    manifest: &mut RunManifest,
) -> Result<()> {
    let trace = dir.join("trace.csv");
    report::write_trace_csv(&trace, episodes)?;
    let pathway = dir.join("pathway.csv");
    report::write_pathway_csv(&pathway, episodes)?;
    let series = report::component_series(episodes);
    let series_csv = dir.join("components.csv");
    report::write_series_csv(&series_csv, &series)?;
    let series_svg = dir.join("components.svg");
    report::write_svg(&series_svg, &report::series_svg(&series, &cfg.report))?;
    let mut paths = vec![trace, pathway, series_csv, series_svg];
    if let Some(first) = episodes.first() {
        let p = dir.join("pathway.svg");
        report::write_svg(&p, &report::pathway_svg(first))?;
        paths.push(p);
    }
    for p in &paths {
        manifest.add(p)?;
    }
    Ok(())
}

fn checkpoint_label(path: &Path) -> String {
    path.file_stem()
        .map_or("policy".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let seeds = parse_seeds(args.seeds.as_deref(), args.seed.unwrap_or(0))?;
    let world = cfg.world()?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut manifest = RunManifest::new(
        if args.matrix { "eval --matrix" } else { "eval" },
        args.common.config.as_deref(),
        &args.out,
    );
    manifest.seeds = seeds.clone();
    if args.matrix {
        eval_matrix(args, &cfg, &world, &seeds, &mut manifest)?;
    } else {
        eval_single(args, &cfg, &world, &seeds, &mut manifest)?;
    }
    manifest.append_to(&args.out)?;
    Ok(())
}

fn eval_single(
    args: &EvalArgs,
    cfg: &RunConfig,
    world: &Arc<World>,
    seeds: &[u64],
    manifest: &mut RunManifest,
) -> Result<()> {
    if args.checkpoint.is_empty() && args.baseline.is_empty() {
        return Err(Error::config("--checkpoint", "give a checkpoint or --baseline"));
    }
    let reality = parse_scenario("--reality", args.reality.as_deref().unwrap_or("RCP4.5"))?;
    let belief = args
        .belief
        .as_deref()
        .map(|b| parse_scenario("--belief", b))
        .transpose()?;
    manifest.scenarios = belief.iter().chain([&reality]).map(|s| s.to_string()).collect();

    let policies: Vec<(String, PolicyParams)> = args
        .checkpoint
        .iter()
        .map(|c| {
            let path = PathBuf::from(c);
            Ok((checkpoint_label(&path), load_policy(&path, None)?))
        })
        .collect::<Result<_>>()?;
    let baselines: Vec<Baseline> = args.baseline.iter().map(|b| b.parse()).collect::<Result<_>>()?;

    let mut all = Vec::new();
    let mut groups: Vec<(String, Vec<EpisodeResult>)> = Vec::new();
    for (label, params) in &policies {
        let eps = evaluate(world, Controller::Policy(params), belief, reality, seeds)?;
        groups.push((
            if policies.len() > 1 {
                format!("RL-{label}")
            } else {
                "RL".to_string()
            },
            eps,
        ));
    }
    for b in baselines {
        groups.push((b.to_string(), evaluate(world, b.controller(), None, reality, seeds)?));
    }
    for (name, eps) in &groups {
        write_episode_outputs(&args.out.join(name), eps, cfg, manifest)?;
        all.extend(eps.iter().cloned());
    }
    let evaluated = EvalReport::from_episodes(&all);
    let rows = args.out.join("eval_rows.csv");
    report::write_eval_rows_csv(&rows, &evaluated.rows)?;
    let summary = evaluated.summary();
    let table = args.out.join("summary.csv");
    report::write_cost_table(&table, &summary, &cfg.report)?;
    manifest.add(&rows)?;
    manifest.add(&table)?;
    print!("{}", report::cost_table(&summary, &cfg.report));
    print!("{}", report::comparison_lines(&summary));
    Ok(())
}

fn eval_matrix(
    args: &EvalArgs,
    cfg: &RunConfig,
    world: &Arc<World>,
    seeds: &[u64],
    manifest: &mut RunManifest,
) -> Result<()> {
    let mut given: Vec<(ScenarioId, PathBuf)> = Vec::new();
    for spec in &args.checkpoint {
        let (b, p) = spec
            .split_once('=')
            .ok_or_else(|| Error::config("--checkpoint", format!("`{spec}` must be BELIEF=PATH with --matrix")))?;
        given.push((parse_scenario("--checkpoint", b)?, PathBuf::from(p)));
    }
    let realities = match &args.reality {
        Some(r) => vec![parse_scenario("--reality", r)?],
        None => ScenarioId::ALL.to_vec(),
    };
    let mut checkpoints = Vec::new();
    for belief in ScenarioId::ALL {
        let params = match given.iter().find(|(b, _)| *b == belief) {
            Some((_, path)) if path.exists() => Some(load_policy(path, None)?),
            Some((_, path)) => {
                eprintln!(
                    "checkpoint for {belief} not found at {}; cell left absent",
                    path.display()
                );
                None
            }
            None => None,
        };
        checkpoints.push(BeliefCheckpoint { belief, params });
    }
    manifest.scenarios = ScenarioId::ALL.iter().map(|s| s.to_string()).collect();
    let matrix = cross_scenario_eval(world, &checkpoints, &realities, seeds)?;

    let table = args.out.join("matrix.csv");
    report::write_matrix_table(&table, &matrix, &cfg.report)?;
    let json = args.out.join("matrix.json");
    let cells = serde_json::to_string_pretty(&matrix.cells).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&json, cells).map_err(|e| Error::io(&json, e))?;
    let trace = args.out.join("trace.csv");
    report::write_trace_csv(&trace, &matrix.episodes)?;
    let rows = args.out.join("eval_rows.csv");
    report::write_eval_rows_csv(&rows, &EvalReport::from_episodes(&matrix.episodes).rows)?;
    for p in [&table, &json, &trace, &rows] {
        manifest.add(p)?;
    }
    print!("{}", report::matrix_table(&matrix, &cfg.report));
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<String> {
    let mut out = String::new();
    if let Some(path) = &args.checkpoint {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Ok(state) = serde_json::from_str::<TrainerState>(&text) {
            let _ = writeln!(
                out,
                "trainer checkpoint: scenario {}, {} env steps, {} updates, {} episodes",
                state.scenario, state.env_steps, state.updates, state.episodes
            );
        }
        let params = load_policy(path, None)?;
        let ck = PolicyCheckpoint::from_params(&params);
        let _ = writeln!(out, "format {} v{}", ck.format, ck.version);
        let _ = writeln!(
            out,
            "policy: hidden {}, layers {}, aggregation {:?}, {} parameters",
            ck.config.hidden,
            ck.config.layers,
            ck.config.aggregation,
            params.len()
        );
        let _ = writeln!(out, "normalizer: {} observations", ck.normalizer.count);
        for t in &ck.tensors {
            let _ = writeln!(out, "  {:<22} {}x{}", t.name, t.rows, t.cols);
        }
        return Ok(out);
    }

    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let bundle = cfg.city.build()?;
    describe_bundle(&mut out, &bundle, &cfg);
    if let Some(s) = &args.scenario {
        let scenario = parse_scenario("--scenario", s)?;
        let world = World::new(cfg.env.clone(), bundle, cfg.scenarios()?)?;
        let mut env = AdaptationEnv::new(world);
        let obs = BridgeObservation::from_state(&env.reset(scenario, args.seed)?);
        let _ = writeln!(
            out,
            "reset {scenario} seed {}: protocol {PROTOCOL_VERSION}, observation sha256 {}",
            args.seed,
            obs.checksum()
        );
    }
    Ok(out)
}

fn describe_bundle(out: &mut String, bundle: &CityBundle, cfg: &RunConfig) {
    let t = &bundle.terrain;
    let _ = writeln!(
        out,
        "terrain {}x{} cells of {} m; network {} nodes, {} edges; {} trips",
        t.width,
        t.height,
        t.cell_size_m,
        bundle.network.nodes.len(),
        bundle.network.edges.len(),
        bundle.trips.len()
    );
    let _ = writeln!(
        out,
        "{} zones, {} adjacency pairs",
        bundle.zones.count(),
        bundle.zones.adjacency.len()
    );
    let counts = t.zone_cell_counts(bundle.zones.count());
    for (z, a) in bundle.zones.attributes.iter().enumerate() {
        let kinds: Vec<&str> = InterventionKind::ALL[1..]
            .iter()
            .filter(|&&k| cfg.env.catalog.applicable(k, a))
            .map(|k| k.name())
            .collect();
        let _ = writeln!(
            out,
            "  zone {z:>3}: {:>5} cells, paved {:.2}, permeable soil {}, applicable: {}",
            counts[z],
            a.paved_fraction,
            a.permeable_soil,
            kinds.join(" ")
        );
    }
}
