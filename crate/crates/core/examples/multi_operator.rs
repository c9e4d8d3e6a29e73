//! Two operators sharing two neutral-host cells, loaded from
//! `examples/data/two_operators.toml`.

use std::path::Path;

use neutral_host::agents::{Scenario, Simulation};

pub fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/two_operators.toml");
    let scenario = Scenario::load(&path).unwrap();
    let sim = Simulation::new(scenario).unwrap();
    let reg = sim.ledger().runtime();
    println!(
        "{} master contracts, {} cell contracts",
        reg.masters.len(),
        reg.cells.len()
    );
    for (id, m) in &reg.masters {
        println!("master {id} plmn {}: {} cells", m.plmn_id, m.registry.len());
    }

    let (trace, ledger) = sim.run().unwrap();
    println!(
        "\n{} sessions, {} reports, {} blocks",
        trace.sessions.len(),
        trace.reports.len(),
        ledger.height()
    );
    println!(
        "{:<6} {:<6} {:<10} {:>8} {:>8} {:>10}",
        "mno", "scp", "cell", "credited", "withdrawn", "escrow"
    );
    for s in &trace.summary {
        println!(
            "{:<6} {:<6} {:<10} {:>8} {:>8} {:>10}",
            s.mno, s.scp, s.cell, s.credited, s.withdrawn, s.escrow
        );
    }
    for a in &trace.accounts {
        println!(
            "{:<22} {:?} {} -> {}",
            a.name, a.role, a.endowment, a.final_balance
        );
    }
    let all_match = trace.reconciliation.iter().all(|c| c.result.all_match());
    println!("reconciliation all match: {all_match}");
}
