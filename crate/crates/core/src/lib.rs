//! Neutral-host small-cell economics on a simulated ledger.
//!
//! * [`ledger`]: single-sequencer chain with accounts, fees, blocks and events.
//! * [`contracts`]: master registry and per-cell billing contracts.
//! * [`agents`]: MNO, SCP and UE actors driven by scenario files.
//! * [`coverage`]: pathloss model, RSS grids and coverage comparisons.
//! * [`cli`]: the `neutral-host` command line.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod agents;
pub mod cli;
pub mod contracts;
pub mod coverage;
pub mod ledger;
