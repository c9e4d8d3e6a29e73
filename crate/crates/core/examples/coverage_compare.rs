//! Coverage gain from small cells on a synthetic 1 km square: macro only,
//! macro plus a hotel chain's cells, macro plus every small cell.

use neutral_host::coverage::{
    compare_scenarios, generate_synthetic_deployment, restricted_cdf, rss_map, Area, ChannelModel,
    Tier, CHAIN_TAG,
};

pub fn main() {
    let seed = 3;
    let threshold = -42.0;
    let deployment = generate_synthetic_deployment(5, 40, 0.3, Area::SQUARE_KM, seed).unwrap();
    println!(
        "{} macro, {} small ({} chain)",
        deployment.count(Tier::Macro),
        deployment.count(Tier::Small),
        deployment
            .sites
            .iter()
            .filter(|s| s.tag == CHAIN_TAG)
            .count()
    );
    let model = ChannelModel::default();
    let base = rss_map(&deployment.macro_only(), &model, 10.0, seed).unwrap();
    let base_cdf = restricted_cdf(&base, threshold);
    println!(
        "baseline: {:.1}% of points below {threshold} dBm",
        100.0 * base_cdf.fraction_below
    );

    for (name, variant) in [
        ("chain", deployment.macro_plus_tagged(CHAIN_TAG)),
        ("all", deployment.clone()),
    ] {
        let grid = rss_map(&variant, &model, 10.0, seed).unwrap();
        let cmp = compare_scenarios(&base, &grid).unwrap();
        let cdf = restricted_cdf(&grid, threshold);
        println!(
            "{name:<5}: mean gain {:.2} dB, {} of {} points improved, p90 gain {:.2} dB, {:.1}% below threshold",
            cmp.mean_gain_db,
            cmp.improved_point_count,
            cmp.total_points,
            cmp.delta.p90_db,
            100.0 * cdf.fraction_below
        );
    }
}
