//! Prices one flood event in the five cost components, first on the bare
//! city and then with a storage tank and permeable pavers in every zone.

use adapt_iam::env::{EnvConfig, ZoneLedger};
use adapt_iam::flood::{FloodModel, FloodOptions};
use adapt_iam::network::route_all;
use adapt_iam::network::synthetic::{generate_synthetic_city, CitySpec};
use adapt_iam::valuation::{
    action_costs, cancellation_cost, delay_cost, edge_zones, infrastructure_damage, InterventionKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adapt_iam::Result<()> {
    let bundle = generate_synthetic_city(&CitySpec::default(), &mut ChaCha8Rng::seed_from_u64(7))?;
    let cfg = EnvConfig::default();
    let zones = bundle.zones.count();
    let model = FloodModel::new(&bundle.terrain, &bundle.network, zones, FloodOptions::default());
    let owner = edge_zones(&bundle.network, &bundle.terrain);

    let bare = ZoneLedger::new(zones);
    let tanks = action_costs(&bare, &vec![InterventionKind::StorageTank; zones], &cfg.catalog)?;
    let both = action_costs(
        &tanks.ledger,
        &vec![InterventionKind::PermeablePavers; zones],
        &cfg.catalog,
    )?;

    for (label, ledger) in [("no measures", &bare), ("tank + pavers", &both.ledger)] {
        let field = model.compute_flood(90.0, ledger, &cfg.catalog);
        let outcomes = route_all(&bundle.network, &bundle.trips, Some(&field), &cfg.disruption)?;
        let v = &cfg.valuation;
        let damage: f64 = infrastructure_damage(&bundle.network, &owner, &field, &v.damage_curve, zones)
            .iter()
            .sum();
        let delay: f64 = delay_cost(&outcomes, &v.value_of_time_dkk_per_hour, zones).iter().sum();
        let cancel: f64 = cancellation_cost(&outcomes, &v.cancelled_trip_cost_dkk, zones)
            .iter()
            .sum();
        let upkeep: f64 = (0..zones).map(|z| ledger.maintenance_dkk(z, &cfg.catalog)).sum();
        println!("{label}");
        println!("  infrastructure damage {damage:>14.0} DKK");
        println!("  travel delays         {delay:>14.0} DKK");
        println!("  cancelled trips       {cancel:>14.0} DKK");
        println!("  yearly maintenance    {upkeep:>14.0} DKK");
    }
    let invest: f64 = tanks.investment.iter().chain(&both.investment).sum();
    println!("one-off investment for the measures: {invest:.0} DKK");
    Ok(())
}
