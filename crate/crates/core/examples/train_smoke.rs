//! Trains the graph policy on the four-zone smoke city and compares it with
//! the two baselines over 20 evaluation episodes. Takes a minute or two.
//!
//! ```text
//! cargo run --release --example train_smoke [max_env_steps]
//! ```

use adapt_iam::config::RunConfig;
use adapt_iam::forcing::ScenarioId;
use adapt_iam::trainer::{evaluate, summarize, train, Controller, LogRow};

fn main() -> adapt_iam::Result<()> {
    let mut cfg = RunConfig::smoke();
    if let Some(n) = std::env::args().nth(1) {
        cfg.train.max_env_steps = n.parse().expect("max_env_steps must be an integer");
    }
    let world = cfg.world()?;
    let mut progress = |r: &LogRow| {
        if r.update.is_multiple_of(20) {
            println!(
                "update {:>4}  steps {:>7}  mean return {:?}",
                r.update, r.env_steps, r.mean_return
            );
        }
    };
    let outcome = train(
        world.clone(),
        ScenarioId::Rcp45,
        &cfg.train,
        &cfg.policy,
        None,
        None,
        Some(&mut progress),
    )?;

    let seeds: Vec<u64> = (1000..1020).collect();
    for controller in [
        Controller::Policy(&outcome.params),
        Controller::NoControl,
        Controller::RandomControl,
    ] {
        let eps = evaluate(&world, controller, None, ScenarioId::Rcp45, &seeds)?;
        let ret = summarize(&eps.iter().map(|e| e.total_reward).collect::<Vec<_>>());
        let spend = summarize(&eps.iter().map(|e| e.action_spend()).collect::<Vec<_>>());
        println!(
            "{:<14} return {:.4e} ± {:.2e}   investment + maintenance {:.3e}",
            controller.name(),
            ret.mean,
            ret.std,
            spend.mean
        );
    }
    Ok(())
}
