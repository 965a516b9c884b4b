//! Runs an untrained graph policy on the first observation of an episode
//! and prints each zone's masked action distribution and the state value.

use adapt_iam::config::RunConfig;
use adapt_iam::env::AdaptationEnv;
use adapt_iam::forcing::ScenarioId;
use adapt_iam::policy::PolicyParams;
use adapt_iam::valuation::InterventionKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adapt_iam::Result<()> {
    let cfg = RunConfig::smoke();
    let mut env = AdaptationEnv::new(cfg.world()?);
    let state = env.reset(ScenarioId::Rcp45, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = PolicyParams::init(cfg.policy, &mut rng);
    println!(
        "{} parameters over {} tensors",
        params.len(),
        params.layout().tensors.len()
    );

    let dist = params.distribution(&state)?;
    print!("zone");
    for k in InterventionKind::ALL {
        print!(" {:>8.8}", k.name());
    }
    println!();
    for (z, probs) in dist.probs.iter().enumerate() {
        print!("{z:>4}");
        for p in probs {
            print!(" {p:>8.3}");
        }
        println!();
    }
    let act = params.act(&state, &mut rng, false)?;
    println!(
        "sampled {:?}, joint log-prob {:.3}, value {:.4}",
        act.actions,
        act.joint_log_prob(),
        act.value
    );
    Ok(())
}
