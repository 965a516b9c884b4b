//! Draws annual extreme-rainfall depths for each climate scenario and
//! prints decade means alongside the median of the scenario's quantile table.
//!
//! ```text
//! cargo run --example rainfall_sampling
//! ```

use adapt_iam::forcing::{ScenarioId, ScenarioStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adapt_iam::Result<()> {
    for id in ScenarioId::ALL {
        let stats = ScenarioStats::synthetic(id);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<(i32, f64)> = (0..stats.horizon.steps())
            .map(|t| stats.sample_event(t, &mut rng).map(|e| (e.year, e.depth_mm)))
            .collect::<adapt_iam::Result<_>>()?;
        println!("{id}");
        for decade in draws.chunks(10) {
            let mean = decade.iter().map(|d| d.1).sum::<f64>() / decade.len() as f64;
            let median = stats.build_cdf(decade[0].0)?.quantile(0.5);
            println!(
                "  {}-{}  mean draw {mean:6.1} mm   median {median:6.1} mm",
                decade[0].0,
                decade[decade.len() - 1].0
            );
        }
    }
    Ok(())
}
