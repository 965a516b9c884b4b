//! Plays one 77-year episode by hand: deploy bioretention planters
//! wherever allowed in 2024, then do nothing, and print every tenth year.

use adapt_iam::config::RunConfig;
use adapt_iam::env::AdaptationEnv;
use adapt_iam::forcing::ScenarioId;
use adapt_iam::valuation::InterventionKind;

fn main() -> adapt_iam::Result<()> {
    let world = RunConfig::smoke().world()?;
    let mut env = AdaptationEnv::new(world);
    let mut state = env.reset(ScenarioId::Rcp85, 3)?;
    let mut total = 0.0;
    loop {
        let actions: Vec<InterventionKind> = (0..state.zone_count())
            .map(|z| {
                if state.step == 0 && state.allowed(z, InterventionKind::BioretentionPlanters) {
                    InterventionKind::BioretentionPlanters
                } else {
                    InterventionKind::DoNothing
                }
            })
            .collect();
        let out = env.step(&actions)?;
        total += out.reward;
        if out.event.step_index % 10 == 0 || out.done {
            let c = out.costs.city();
            println!(
                "{}  rain {:5.1} mm  damage {:>11.0}  delay {:>9.0}  cancel {:>9.0}  invest {:>9.0}  upkeep {:>7.0}  reward {:>12.0}",
                out.event.year, out.event.depth_mm, c.infrastructure, c.delay, c.cancellation, c.investment, c.maintenance, out.reward
            );
        }
        if out.done {
            break;
        }
        state = out.state;
    }
    println!("episode return {total:.4e} DKK");
    Ok(())
}
