//! One line per headline property of the engine, measured on the synthetic
//! smoke city. Exits nonzero when any line fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use adapt_iam::cli;
use adapt_iam::config::RunConfig;
use adapt_iam::flood::BoundaryMode;
use adapt_iam::forcing::ScenarioId;
use adapt_iam::report::{matrix_from_traces, read_trace_csv};
use adapt_iam::trainer::{evaluate, summarize, train, Controller, CrossCell, EpisodeResult, MeanStd};
use common::*;

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn line(&mut self, name: &str, pass: bool, detail: String, took: Duration) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
}

const MINUTE: Duration = Duration::from_secs(60);

fn flood_mass_balance(o: &mut Outcome) {
    let t = Instant::now();
    let (mut mass, mut level, mut escapes) = (0.0f64, 0.0f64, 0);
    for seed in 0..50 {
        let (grid, inflow, field) = random_fill(10_000 + seed);
        let c = check_fill(&grid, &field, &inflow, BoundaryMode::Open);
        mass = mass.max(c.mass_rel_err);
        level = level.max(c.level_err_m);
        escapes += c.escape_violations;
    }
    let took = t.elapsed();
    o.line(
        "flood mass balance",
        mass <= 1e-6 && level <= 1e-6 && escapes == 0 && took < MINUTE,
        format!("50 terrains, mass rel err {mass:.2e} (limit 1e-6), level err {level:.2e} m (limit 1e-6), {escapes} spill violations"),
        took,
    );
}

fn flood_monotone(o: &mut Outcome) {
    let t = Instant::now();
    let (rain, measure, violations) = flood_monotonicity(20);
    o.line(
        "flood monotonicity",
        violations == 0,
        format!("20 pairs each, {violations} violations (worst excess: rain {rain:.1e} m, measure {measure:.1e} m)"),
        t.elapsed(),
    );
}

fn routing(o: &mut Outcome) {
    let t = Instant::now();
    let c = routing_oracle(100, 77);
    let took = t.elapsed();
    o.line(
        "routing oracle",
        c.mismatches == 0 && took < MINUTE,
        format!(
            "{} graphs, {} trips ({} cancelled), {} mismatches against path enumeration",
            c.graphs, c.trips, c.cancellations, c.mismatches
        ),
        took,
    );
}

fn masks(o: &mut Outcome) {
    let t = Instant::now();
    let f = mask_fuzz(100_000, 2024);
    let violations = f.duplicates_accepted + f.mask_mismatches + f.mutated_on_reject;
    o.line(
        "mask soundness",
        violations == 0 && f.expiries_observed > 0,
        format!(
            "{} zone-steps, {} duplicate deployments accepted, {} mask mismatches, {} expiries re-enabled, {} masked actions rejected",
            f.zone_steps, f.duplicates_accepted, f.mask_mismatches, f.expiries_observed, f.masked_rejections
        ),
        t.elapsed(),
    );
}

fn equivariance(o: &mut Outcome) {
    let t = Instant::now();
    let (logit, value) = permutation_equivariance(20, 99);
    o.line(
        "policy permutation equivariance",
        logit <= 1e-5 && value <= 1e-5,
        format!("20 relabelings, max logit gap {logit:.1e}, value gap {value:.1e} (limit 1e-5)"),
        t.elapsed(),
    );
}

fn gradients(o: &mut Outcome) {
    let t = Instant::now();
    let (worst, probes) = gradient_check(12);
    o.line(
        "gradient check",
        worst <= 1e-4 && probes >= 200,
        format!("{probes} parameters probed, worst rel err {worst:.2e} (limit 1e-4)"),
        t.elapsed(),
    );
    let t = Instant::now();
    let (rel, kl) = identity_update(13);
    o.line(
        "identity update",
        rel <= 1e-8 && kl == 0.0,
        format!("surrogate vs vanilla gradient rel diff {rel:.2e} (limit 1e-8), approx KL {kl}"),
        t.elapsed(),
    );
}

fn pooled_se(a: &MeanStd, b: &MeanStd) -> f64 {
    (a.standard_error().powi(2) + b.standard_error().powi(2)).sqrt()
}

fn spend(eps: &[EpisodeResult]) -> MeanStd {
    summarize(&eps.iter().map(|e| e.action_spend()).collect::<Vec<_>>())
}

fn run_cli(args: &[&str]) {
    if let Err(e) = cli::run(std::iter::once("adapt-iam").chain(args.iter().copied())) {
        panic!("adapt-iam {args:?}: {e}");
    }
}

fn main() {
    let mut o = Outcome { failures: 0 };
    let dir = tempfile::tempdir().unwrap();
    let smoke_toml = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let cfg_arg = smoke_toml.to_str().unwrap();

    flood_mass_balance(&mut o);
    flood_monotone(&mut o);
    routing(&mut o);
    masks(&mut o);
    equivariance(&mut o);
    gradients(&mut o);

    // learning smoke test and spending pattern
    let cfg = RunConfig::smoke();
    let world = cfg.world().unwrap();
    let t = Instant::now();
    let ck_dir = |b: ScenarioId| dir.path().join(format!("train_{}", b.as_str()));
    let trained = train(
        world.clone(),
        ScenarioId::Rcp45,
        &cfg.train,
        &cfg.policy,
        Some(&ck_dir(ScenarioId::Rcp45)),
        None,
        None,
    )
    .unwrap();
    let train_time = t.elapsed();
    let t = Instant::now();
    let seeds: Vec<u64> = (1000..1020).collect();
    let rl = evaluate(
        &world,
        Controller::Policy(&trained.params),
        Some(ScenarioId::Rcp45),
        ScenarioId::Rcp45,
        &seeds,
    )
    .unwrap();
    let nc = evaluate(&world, Controller::NoControl, None, ScenarioId::Rcp45, &seeds).unwrap();
    let rnd = evaluate(&world, Controller::RandomControl, None, ScenarioId::Rcp45, &seeds).unwrap();
    let ret = |eps: &[EpisodeResult]| summarize(&eps.iter().map(|e| e.total_reward).collect::<Vec<_>>());
    let (r, n, d) = (ret(&rl), ret(&nc), ret(&rnd));
    let (se_n, se_d) = (pooled_se(&r, &n), pooled_se(&r, &d));
    o.line(
        "learning smoke test",
        r.mean - n.mean > se_n && r.mean - d.mean > se_d && trained.state.env_steps <= 200_000,
        format!(
            "{} env steps in {:.0} s; 20 episodes RL {:.4e} ± {:.2e}, NoControl {:.4e} ± {:.2e} (margin {:.2e} > SE {:.2e}), RandomControl {:.4e} ± {:.2e} (margin {:.2e} > SE {:.2e})",
            trained.state.env_steps,
            train_time.as_secs_f64(),
            r.mean,
            r.std,
            n.mean,
            n.std,
            r.mean - n.mean,
            se_n,
            d.mean,
            d.std,
            r.mean - d.mean,
            se_d
        ),
        t.elapsed() + train_time,
    );
    let (sr, sd) = (spend(&rl), spend(&rnd));
    o.line(
        "spending pattern",
        sr.mean < sd.mean,
        format!(
            "mean cumulative A+M over 20 episodes: RL {:.4e} ± {:.2e}, RandomControl {:.4e} ± {:.2e}",
            sr.mean, sr.std, sd.mean, sd.std
        ),
        Duration::ZERO,
    );

    // reward identity over every episode played above
    let t = Instant::now();
    let mut all: Vec<EpisodeResult> = rl.iter().chain(&nc).chain(&rnd).cloned().collect();
    for id in [ScenarioId::Rcp26, ScenarioId::Rcp85] {
        all.extend(evaluate(&world, Controller::RandomControl, None, id, &seeds[..5]).unwrap());
    }
    let (worst, steps) = reward_identity(&all);
    let took = t.elapsed();
    o.line(
        "reward decomposition identity",
        worst <= 1e-9 && took < MINUTE,
        format!(
            "{steps} steps over {} episodes, worst rel err {worst:.1e} (limit 1e-9)",
            all.len()
        ),
        took,
    );

    // determinism of the evaluation command
    let t = Instant::now();
    let policy = ck_dir(ScenarioId::Rcp45).join("policy.json");
    let eval_into = |name: &str| {
        let out = dir.path().join(name);
        run_cli(&[
            "eval",
            "--config",
            cfg_arg,
            "--checkpoint",
            policy.to_str().unwrap(),
            "--baseline",
            "no-control",
            "--baseline",
            "random-control",
            "--seeds",
            "1000..1020",
            "--out",
            out.to_str().unwrap(),
        ]);
        out
    };
    let (a, b) = (eval_into("eval_a"), eval_into("eval_b"));
    let mut identical = true;
    let mut compared = 0;
    for policy in ["RL", "NoControl", "RandomControl"] {
        for file in ["trace.csv", "pathway.csv"] {
            let (x, y) = (
                std::fs::read(a.join(policy).join(file)).unwrap(),
                std::fs::read(b.join(policy).join(file)).unwrap(),
            );
            identical &= x == y;
            compared += x.len();
        }
    }
    o.line(
        "determinism",
        identical,
        format!("two eval runs, 6 trace and pathway files ({compared} bytes) byte-identical: {identical}"),
        t.elapsed(),
    );

    // cross-scenario matrix
    let t = Instant::now();
    let mut short = cfg.train.clone();
    short.max_env_steps = 50_000;
    for belief in [ScenarioId::Rcp26, ScenarioId::Rcp85] {
        train(
            world.clone(),
            belief,
            &short,
            &cfg.policy,
            Some(&ck_dir(belief)),
            None,
            None,
        )
        .unwrap();
    }
    let matrix_dir = dir.path().join("matrix");
    let specs: Vec<String> = ScenarioId::ALL
        .iter()
        .map(|b| format!("{b}={}", ck_dir(*b).join("policy.json").display()))
        .collect();
    let mut args = vec!["eval", "--config", cfg_arg, "--matrix", "--seeds", "10"];
    for s in &specs {
        args.extend(["--checkpoint", s.as_str()]);
    }
    args.extend(["--out", matrix_dir.to_str().unwrap()]);
    run_cli(&args);
    let cells: Vec<CrossCell> =
        serde_json::from_str(&std::fs::read_to_string(matrix_dir.join("matrix.json")).unwrap()).unwrap();
    let traces = matrix_from_traces(&read_trace_csv(&matrix_dir.join("trace.csv")).unwrap());
    let table = std::fs::read_to_string(matrix_dir.join("matrix.csv")).unwrap();
    let mut lines = table.lines();
    let layout_ok = lines.next() == Some("Belief,Reality,Reward (x10^9 DKK)") && lines.count() == 9;
    let mut reconcile: f64 = 0.0;
    let mut filled = 0;
    for c in &cells {
        let Some(m) = c.reward else { continue };
        filled += (m.n == 10) as usize;
        match traces.iter().find(|(b, r, _)| *b == c.belief && *r == c.reality) {
            Some((_, _, t)) => reconcile = reconcile.max(relative(t.mean, m.mean)).max(relative(t.std, m.std)),
            None => reconcile = f64::INFINITY,
        }
    }
    let harshest = ScenarioId::ALL
        .iter()
        .filter(|b| {
            let row: Vec<&CrossCell> = cells.iter().filter(|c| c.belief == **b).collect();
            let worst = row
                .iter()
                .min_by(|x, y| x.reward.unwrap().mean.total_cmp(&y.reward.unwrap().mean));
            worst.is_some_and(|c| c.reality == ScenarioId::Rcp85)
        })
        .count();
    o.line(
        "cross-scenario harness",
        cells.len() == 9 && filled == 9 && layout_ok && reconcile <= 1e-9,
        format!(
            "{filled}/9 cells with 10 seeds, table layout ok: {layout_ok}, trace reconciliation rel err {reconcile:.1e}; RCP8.5 most negative in {harshest}/3 belief rows (reported only)"
        ),
        t.elapsed(),
    );

    if o.failures > 0 {
        println!("{} criteria failed", o.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
