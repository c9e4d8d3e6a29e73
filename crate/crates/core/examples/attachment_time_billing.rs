//! Same scenario billed per byte and per attached tick.

use neutral_host::agents::{two_operator_scenario, BillingMode, Simulation};

pub fn main() {
    for mode in [BillingMode::PerByte, BillingMode::PerAttachmentTime] {
        let mut scenario = two_operator_scenario();
        scenario.billing_mode = mode;
        let (trace, _) = Simulation::new(scenario).unwrap().run().unwrap();
        println!("{mode:?}");
        for s in &trace.summary {
            println!("  {:<6} on {:<9} credited {:>6}", s.mno, s.cell, s.credited);
        }
        let total: u64 = trace.summary.iter().map(|s| s.credited).sum();
        println!("  total {total}");
    }
}
