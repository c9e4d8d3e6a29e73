//! A UE walks across the map in `examples/data/sites.csv`, camping on the
//! strongest cell; the resulting schedule drives a billing run.

use std::path::Path;

use neutral_host::agents::mobility::schedule_from_grid;
use neutral_host::agents::{
    CellSpec, MnoSpec, Scenario, ScpSpec, Simulation, UeSpec, SCENARIO_VERSION,
};
use neutral_host::coverage::{ingest_sites, rss_map, Area, ChannelModel, Tier};

pub fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/sites.csv");
    let deployment = ingest_sites(path, Area::SQUARE_KM).unwrap().deployment;
    let grid = rss_map(&deployment, &ChannelModel::default(), 10.0, 1).unwrap();

    // straight legs through the hotel and independent sites, 5 m per tick
    let corners: [(f64, f64); 5] = [
        (150.0, 800.0),
        (400.0, 600.0),
        (500.0, 500.0),
        (600.0, 400.0),
        (850.0, 200.0),
    ];
    let mut waypoints = vec![(0, corners[0].0, corners[0].1)];
    for leg in corners.windows(2) {
        let ((x0, y0), (x1, y1)) = (leg[0], leg[1]);
        let steps = ((x1 - x0).hypot(y1 - y0) / 5.0).ceil() as u64;
        for k in 1..=steps {
            let f = k as f64 / steps as f64;
            let tick = waypoints.last().unwrap().0 + 1;
            waypoints.push((tick, x0 + f * (x1 - x0), y0 + f * (y1 - y0)));
        }
    }
    let smalls: Vec<&str> = deployment
        .sites
        .iter()
        .filter(|s| s.tier == Tier::Small)
        .map(|s| s.id.as_str())
        .collect();
    let schedule = schedule_from_grid(&grid, &waypoints, |site| {
        smalls.contains(&site).then(|| format!("cell-{site}"))
    });
    for e in &schedule {
        println!("tick {:>3}: {}", e.tick, e.cell);
    }

    let scenario = Scenario {
        version: SCENARIO_VERSION,
        seed: 1,
        duration: waypoints.last().unwrap().0 + 20,
        block_interval: 10,
        fee: 0,
        billing_mode: Default::default(),
        reconciliation_tolerance_bytes: 1024,
        traffic_jitter: 0.0,
        withdraw_interval: None,
        mnos: vec![MnoSpec {
            name: "op".into(),
            plmn_id: 27201,
            endowment: 5_000_000,
            deposit_per_cell: 200_000,
            termination_threshold: None,
        }],
        scps: vec![ScpSpec {
            name: "host".into(),
            endowment: 0,
            cells: smalls
                .iter()
                .enumerate()
                .map(|(k, id)| CellSpec {
                    name: format!("cell-{id}"),
                    cell_id: k as u32 + 1,
                    price_per_kb: 1,
                    price_per_tick: 0,
                    hosts: vec!["op".into()],
                    spectrum_tag: "GAA".into(),
                })
                .collect(),
        }],
        ues: vec![UeSpec {
            name: "walker".into(),
            home: "op".into(),
            rate_bytes_per_tick: 4096,
            oracle_endowment: 0,
            report_scale: 1.0,
            schedule,
        }],
        actions: Vec::new(),
    };
    let (trace, _) = Simulation::new(scenario).unwrap().run().unwrap();
    for s in trace.summary.iter().filter(|s| s.credited > 0) {
        println!("{} credited {}", s.cell, s.credited);
    }
}
