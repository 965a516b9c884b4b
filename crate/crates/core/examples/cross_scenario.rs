//! Trains one short policy per climate belief and evaluates each in every
//! reality, printing the belief/reality reward table.
//!
//! ```text
//! cargo run --release --example cross_scenario [steps_per_belief]
//! ```

use adapt_iam::config::RunConfig;
use adapt_iam::forcing::ScenarioId;
use adapt_iam::report::matrix_table;
use adapt_iam::trainer::{cross_scenario_eval, train, BeliefCheckpoint};

fn main() -> adapt_iam::Result<()> {
    let mut cfg = RunConfig::smoke();
    cfg.train.max_env_steps = std::env::args()
        .nth(1)
        .map_or(40_960, |n| n.parse().expect("integer step count"));
    let world = cfg.world()?;
    let checkpoints = ScenarioId::ALL
        .into_iter()
        .map(|belief| {
            let out = train(world.clone(), belief, &cfg.train, &cfg.policy, None, None, None)?;
            eprintln!("trained under {belief}: {} env steps", out.state.env_steps);
            Ok(BeliefCheckpoint {
                belief,
                params: Some(out.params),
            })
        })
        .collect::<adapt_iam::Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..10).collect();
    let matrix = cross_scenario_eval(&world, &checkpoints, &ScenarioId::ALL, &seeds)?;
    print!("{}", matrix_table(&matrix, &cfg.report));
    Ok(())
}
