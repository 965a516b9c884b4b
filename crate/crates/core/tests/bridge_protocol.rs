mod common;

use std::path::Path;

use adapt_iam::bridge::{BridgeHandle, PROTOCOL_VERSION};
use adapt_iam::cli;
use adapt_iam::env::{AdaptationEnv, EnvConfig, ScenarioSet};
use adapt_iam::forcing::ScenarioId;
use adapt_iam::network::synthetic::{generate_synthetic_city, CitySpec};
use adapt_iam::report::read_trace_csv;
use adapt_iam::valuation::{InterventionKind, KIND_COUNT};
use adapt_iam::Error;
use common::{relative, rng, smoke_world, world_with};

fn generate(dir: &Path) {
    cli::run(["adapt-iam", "generate", "--out", dir.to_str().unwrap(), "--seed", "7"]).unwrap();
}

/// Picks the `(step + zone)`-th allowed kind of each zone.
fn scripted(mask: &[u8], zones: usize, step: usize) -> Vec<i64> {
    (0..zones)
        .map(|z| {
            let allowed: Vec<i64> = (0..KIND_COUNT)
                .filter(|&k| mask[z * KIND_COUNT + k] == 1)
                .map(|k| k as i64)
                .collect();
            allowed[(step + z) % allowed.len()]
        })
        .collect()
}

#[test]
fn shapes_on_a_29_zone_city() {
    let spec = CitySpec {
        zones: 29,
        width: 48,
        height: 48,
        ..CitySpec::default()
    };
    let bundle = generate_synthetic_city(&spec, &mut rng(29)).unwrap();
    let mut h = BridgeHandle::new(world_with(EnvConfig::default(), bundle));
    assert_eq!(h.protocol_version(), PROTOCOL_VERSION);
    let obs = h.reset("RCP8.5", 1).unwrap();
    assert_eq!(obs.mask_shape(), (29, 8));
    assert_eq!(obs.feature_shape(), (29, 10));
    assert_eq!(obs.mask.len(), 29 * 8);
    assert_eq!(obs.features.len(), 29 * 10);
    assert_eq!(obs.edges.len() % 2, 0);
    assert_eq!(h.mask(), obs.mask);
}

#[test]
fn episode_ends_at_step_77_and_rewards_balance() {
    let mut h = BridgeHandle::new(smoke_world());
    let zones = h.zone_count();
    let mut obs = h.reset("RCP4.5", 5).unwrap();
    for step in 1..=77 {
        let out = h.step(&scripted(&obs.mask, zones, step)).unwrap();
        assert_eq!(out.terminated, step == 77, "step {step}");
        assert!(!out.truncated);
        let sum = out.info.costs.total();
        assert!(relative(out.reward, -sum) <= 1e-9 || (out.reward + sum).abs() < 1e-6);
        obs = out.observation;
    }
    assert!(h.step(&vec![0; zones]).is_err());
}

#[test]
fn bad_actions_fail_before_mutation() {
    let mut h = BridgeHandle::new(smoke_world());
    let zones = h.zone_count();
    h.reset("RCP2.6", 2).unwrap();
    let mut acts = vec![0i64; zones];
    acts[0] = 3;
    h.step(&acts).unwrap();
    let before = h.clone();

    // kind 3 is now active in zone 0
    assert!(h.step(&acts).is_err());
    assert!(matches!(h.step(&[0]), Err(Error::Shape(_))));
    assert!(matches!(
        h.step(&vec![KIND_COUNT as i64; zones]),
        Err(Error::Contract(_))
    ));
    assert!(matches!(h.step(&vec![-1; zones]), Err(Error::Contract(_))));
    assert_eq!(h.mask(), before.mask());

    let a = h.step(&vec![0; zones]).unwrap();
    let b = before.clone().step(&vec![0; zones]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checksum_matches_cli_inspect() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let text = cli::cmd_inspect(&cli::InspectArgs {
        common: cli::CommonArgs {
            config: None,
            bundle: Some(dir.path().to_path_buf()),
        },
        checkpoint: None,
        scenario: Some("RCP4.5".into()),
        seed: 3,
    })
    .unwrap();
    let from_cli = text
        .lines()
        .find_map(|l| l.split("observation sha256 ").nth(1))
        .unwrap()
        .trim()
        .to_string();
    let mut h = BridgeHandle::open(dir.path(), EnvConfig::default(), ScenarioSet::synthetic()).unwrap();
    assert_eq!(h.reset("RCP4.5", 3).unwrap().checksum(), from_cli);
}

#[test]
fn scripted_episodes_match_core_env() {
    let world = smoke_world();
    let zones = world.zone_count();
    for seed in 0..5u64 {
        let id = ScenarioId::ALL[seed as usize % 3];
        let mut h = BridgeHandle::new(world.clone());
        let mut env = AdaptationEnv::new(world.clone());
        let mut obs = h.reset(id.as_str(), seed).unwrap();
        env.reset(id, seed).unwrap();
        for step in 1..=77 {
            let acts = scripted(&obs.mask, zones, step);
            let kinds: Vec<InterventionKind> = acts
                .iter()
                .map(|&a| InterventionKind::from_index(a as usize).unwrap())
                .collect();
            let b = h.step(&acts).unwrap();
            let c = env.step(&kinds).unwrap();
            assert_eq!(b.reward, c.reward);
            assert_eq!(b.info.costs, c.costs);
            assert_eq!(b.terminated, c.done);
            obs = b.observation;
        }
    }
}

#[test]
fn random_control_trace_replays_through_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("city");
    generate(&bundle);
    let out = dir.path().join("eval");
    cli::run([
        "adapt-iam",
        "eval",
        "--bundle",
        bundle.to_str().unwrap(),
        "--baseline",
        "random-control",
        "--reality",
        "RCP8.5",
        "--seeds",
        "0..5",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let rows = read_trace_csv(&out.join("RandomControl/trace.csv")).unwrap();
    let mut h = BridgeHandle::open(&bundle, EnvConfig::default(), ScenarioSet::synthetic()).unwrap();
    let zones = h.zone_count();
    for seed in 0..5u64 {
        h.reset("RCP8.5", seed).unwrap();
        let ep: Vec<_> = rows.iter().filter(|r| r.seed == seed).collect();
        assert_eq!(ep.len(), 77 * zones);
        for step in ep.chunks(zones) {
            let acts: Vec<i64> = step
                .iter()
                .map(|r| r.action.parse::<InterventionKind>().unwrap().index() as i64)
                .collect();
            let b = h.step(&acts).unwrap();
            assert_eq!(b.reward, step[0].reward);
            for (r, c) in step.iter().zip(&b.info.costs.zones) {
                assert_eq!(
                    [r.infrastructure, r.delay, r.cancellation, r.investment, r.maintenance],
                    [c.infrastructure, c.delay, c.cancellation, c.investment, c.maintenance]
                );
            }
        }
    }
}

#[test]
fn reopened_handle_reproduces_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let play = || {
        let mut h = BridgeHandle::open(dir.path(), EnvConfig::default(), ScenarioSet::synthetic()).unwrap();
        let zones = h.zone_count();
        let mut obs = h.reset("RCP2.6", 11).unwrap();
        let mut sums = vec![obs.checksum()];
        for step in 1..=77 {
            obs = h.step(&scripted(&obs.mask, zones, step)).unwrap().observation;
            sums.push(obs.checksum());
        }
        sums
    };
    assert_eq!(play(), play());
}
