//! An oracle that inflates its reports by 5% is caught when the SCP compares
//! them with its own measurements.

use neutral_host::agents::{two_operator_scenario, Simulation, Verdict};

pub fn main() {
    let mut scenario = two_operator_scenario();
    let cheat = scenario
        .ues
        .iter_mut()
        .find(|u| u.name == "green-ue-1")
        .unwrap();
    cheat.report_scale = 1.05;

    let (trace, _) = Simulation::new(scenario).unwrap().run().unwrap();
    for cell in &trace.reconciliation {
        for s in &cell.result.sessions {
            let flag = if s.verdict == Verdict::Match {
                ""
            } else {
                "  <--"
            };
            println!(
                "contract {} {:<12} start {:>3} measured {:>7} reported {:>7?} {:?}{flag}",
                cell.contract, s.ue, s.start_tick, s.measured_bytes, s.reported_bytes, s.verdict
            );
        }
    }
    let flagged: usize = trace
        .reconciliation
        .iter()
        .map(|c| c.result.count(Verdict::MismatchBeyondTolerance))
        .sum();
    println!("{flagged} sessions beyond tolerance");
}
