mod common;

use adapt_iam::env::AdaptationEnv;
use adapt_iam::forcing::ScenarioId;
use adapt_iam::valuation::InterventionKind;
use common::{mask_fuzz, relative, smoke_world};

#[test]
fn masks_follow_deployment_history() {
    let f = mask_fuzz(10_000, 3);
    assert_eq!(f.mask_mismatches, 0, "{f:?}");
    assert_eq!(f.duplicates_accepted, 0, "{f:?}");
    assert_eq!(f.mutated_on_reject, 0, "{f:?}");
    assert!(
        f.expiries_observed > 0 && f.masked_rejections > 0,
        "fuzz never exercised expiry: {f:?}"
    );
}

#[test]
fn reward_is_minus_component_sum() {
    let world = smoke_world();
    let zones = world.zone_count();
    let mut env = AdaptationEnv::new(world);
    for (i, id) in ScenarioId::ALL.into_iter().enumerate() {
        let mut state = env.reset(id, i as u64).unwrap();
        let mut steps = 0;
        loop {
            let actions: Vec<InterventionKind> = (0..zones).map(|z| *state.allowed_kinds(z).last().unwrap()).collect();
            let o = env.step(&actions).unwrap();
            steps += 1;
            let sum: f64 = o
                .costs
                .zones
                .iter()
                .map(|c| c.infrastructure + c.delay + c.cancellation + c.investment + c.maintenance)
                .sum();
            assert!(
                relative(o.reward, -sum) <= 1e-9,
                "step {steps}: {} vs {}",
                o.reward,
                -sum
            );
            if o.done {
                break;
            }
            state = o.state;
        }
        assert_eq!(steps, env.world().horizon_steps());
    }
}

#[test]
fn same_seed_same_episode() {
    let world = smoke_world();
    let zones = world.zone_count();
    let run = |seed| {
        let mut env = AdaptationEnv::new(world.clone());
        env.reset(ScenarioId::Rcp85, seed).unwrap();
        let mut rewards = Vec::new();
        while !env.is_done() {
            rewards.push(env.step(&vec![InterventionKind::DoNothing; zones]).unwrap().reward);
        }
        rewards
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn stepping_after_done_is_an_error() {
    let world = smoke_world();
    let zones = world.zone_count();
    let mut env = AdaptationEnv::new(world);
    assert!(env.step(&vec![InterventionKind::DoNothing; zones]).is_err());
    env.reset(ScenarioId::Rcp26, 0).unwrap();
    while !env.is_done() {
        env.step(&vec![InterventionKind::DoNothing; zones]).unwrap();
    }
    assert!(env.step(&vec![InterventionKind::DoNothing; zones]).is_err());
    assert!(env.step(&[]).is_err());
}
