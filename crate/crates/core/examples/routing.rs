//! Routes the synthetic trip table on a dry and a flooded network and
//! summarises delays and cancellations per travel mode.

use adapt_iam::env::ZoneLedger;
use adapt_iam::flood::{FloodModel, FloodOptions};
use adapt_iam::network::synthetic::{generate_synthetic_city, CitySpec};
use adapt_iam::network::{route_all, DisruptionParams, Mode};
use adapt_iam::valuation::InterventionCatalog;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adapt_iam::Result<()> {
    let bundle = generate_synthetic_city(&CitySpec::default(), &mut ChaCha8Rng::seed_from_u64(7))?;
    let model = FloodModel::new(
        &bundle.terrain,
        &bundle.network,
        bundle.zones.count(),
        FloodOptions::default(),
    );
    let params = DisruptionParams::default();

    for depth_mm in [0.0, 40.0, 120.0] {
        let field = model.compute_flood(
            depth_mm,
            &ZoneLedger::new(bundle.zones.count()),
            &InterventionCatalog::default(),
        );
        let outcomes = route_all(&bundle.network, &bundle.trips, Some(&field), &params)?;
        println!("{depth_mm} mm event");
        for mode in Mode::ALL {
            let of_mode: Vec<_> = outcomes.iter().filter(|o| o.mode == mode).collect();
            let cancelled = of_mode.iter().filter(|o| o.cancelled).count();
            let delay: f64 = of_mode.iter().map(|o| o.delay_minutes() * o.weight).sum();
            println!(
                "  {:<5} {:>4} trips  {:>4} cancelled  {:>9.1} person-minutes of delay",
                mode.as_str(),
                of_mode.len(),
                cancelled,
                delay
            );
        }
    }
    Ok(())
}
