//! Declarative scenario files (TOML, `version = 1`).
//!
//! ```toml
//! version = 1
//! seed = 7
//! duration = 600            # ticks; every UE is detached at this tick
//! block_interval = 10
//! fee = 0                   # flat per-transaction fee
//! billing_mode = "per_byte" # or "per_attachment_time"
//! reconciliation_tolerance_bytes = 1024
//! traffic_jitter = 0.0      # per-session rate multiplier spread, [0, 1)
//! # withdraw_interval = 100 # SCPs withdraw at the end when absent
//!
//! [[mnos]]
//! name = "lilac"
//! plmn_id = 27201
//! endowment = 10000000
//! deposit_per_cell = 500000
//!
//! [[scps]]
//! name = "blue"
//! [[scps.cells]]
//! name = "blue-1"
//! cell_id = 1
//! price_per_kb = 2
//! price_per_tick = 5
//! hosts = ["lilac"]
//! spectrum_tag = "GAA"
//!
//! [[ues]]
//! name = "ue-1"
//! home = "lilac"
//! rate_bytes_per_tick = 1000
//! schedule = [ { tick = 0, cell = "blue-1" }, { tick = 300, cell = "macro" } ]
//!
//! [[actions]]
//! tick = 400
//! kind = "infraction"       # or "terminate", "recover"
//! mno = "lilac"
//! cell = "blue-1"
//! penalty = 500
//! ```
//!
//! Schedule targets are a small-cell name, `"macro"` (unmetered attachment)
//! or `"idle"` (no attachment).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::MAX_CELL_ID;
use crate::ledger::{Amount, Tick};

pub const SCENARIO_VERSION: u32 = 1;
pub const MACRO: &str = "macro";
pub const IDLE: &str = "idle";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BillingMode {
    #[default]
    PerByte,
    PerAttachmentTime,
}

fn default_block_interval() -> Tick {
    10
}

fn default_tolerance() -> u64 {
    1024
}

fn default_scale() -> f64 {
    1.0
}

fn default_spectrum() -> String {
    "unlicensed".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub duration: Tick,
    #[serde(default = "default_block_interval")]
    pub block_interval: Tick,
    #[serde(default)]
    pub fee: Amount,
    #[serde(default)]
    pub billing_mode: BillingMode,
    #[serde(default = "default_tolerance")]
    pub reconciliation_tolerance_bytes: u64,
    #[serde(default)]
    pub traffic_jitter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub withdraw_interval: Option<Tick>,
    #[serde(default)]
    pub mnos: Vec<MnoSpec>,
    #[serde(default)]
    pub scps: Vec<ScpSpec>,
    #[serde(default)]
    pub ues: Vec<UeSpec>,
    #[serde(default)]
    pub actions: Vec<MnoAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnoSpec {
    pub name: String,
    pub plmn_id: u32,
    pub endowment: Amount,
    #[serde(default)]
    pub deposit_per_cell: Amount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination_threshold: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScpSpec {
    pub name: String,
    #[serde(default)]
    pub endowment: Amount,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub name: String,
    pub cell_id: u32,
    pub price_per_kb: Amount,
    #[serde(default)]
    pub price_per_tick: Amount,
    pub hosts: Vec<String>,
    #[serde(default = "default_spectrum")]
    pub spectrum_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeSpec {
    pub name: String,
    pub home: String,
    pub rate_bytes_per_tick: u64,
    /// Balance of the UE's monitoring-service account, for fees.
    #[serde(default)]
    pub oracle_endowment: Amount,
    /// Multiplier applied to reported bytes; 1.0 is an honest oracle.
    #[serde(default = "default_scale")]
    pub report_scale: f64,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub tick: Tick,
    pub cell: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MnoActionKind {
    Infraction,
    Terminate,
    Recover,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnoAction {
    pub tick: Tick,
    pub kind: MnoActionKind,
    pub mno: String,
    pub cell: String,
    #[serde(default)]
    pub penalty: Amount,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let s = Self::from_toml_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn cell(&self, name: &str) -> Option<&CellSpec> {
        self.scps
            .iter()
            .flat_map(|s| &s.cells)
            .find(|c| c.name == name)
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut issues = Vec::new();
        let mut problem = |msg: String| issues.push(msg);

        if self.version != SCENARIO_VERSION {
            problem(format!(
                "version: unsupported schema version {} (expected {SCENARIO_VERSION})",
                self.version
            ));
        }
        if self.duration == 0 {
            problem("duration: must be at least 1 tick".into());
        }
        if self.block_interval == 0 {
            problem("block_interval: must be at least 1 tick".into());
        }
        if self.withdraw_interval == Some(0) {
            problem("withdraw_interval: must be at least 1 tick".into());
        }
        if !(0.0..1.0).contains(&self.traffic_jitter) {
            problem(format!(
                "traffic_jitter: {} outside [0, 1)",
                self.traffic_jitter
            ));
        }

        let mut names = BTreeSet::new();
        let mut plmns = BTreeSet::new();
        for (i, m) in self.mnos.iter().enumerate() {
            if !names.insert(m.name.as_str()) {
                problem(format!("mnos[{i}].name: duplicate name {:?}", m.name));
            }
            if !plmns.insert(m.plmn_id) {
                problem(format!("mnos[{i}].plmn_id: duplicate plmn {}", m.plmn_id));
            }
            if m.termination_threshold == Some(0) {
                problem(format!(
                    "mnos[{i}].termination_threshold: must be at least 1"
                ));
            }
        }
        let mno_names: BTreeSet<&str> = self.mnos.iter().map(|m| m.name.as_str()).collect();

        let mut cell_ids = BTreeSet::new();
        let mut cells: BTreeMap<&str, &CellSpec> = BTreeMap::new();
        for (i, s) in self.scps.iter().enumerate() {
            if !names.insert(s.name.as_str()) {
                problem(format!("scps[{i}].name: duplicate name {:?}", s.name));
            }
            for (j, c) in s.cells.iter().enumerate() {
                let at = format!("scps[{i}].cells[{j}]");
                if c.name == MACRO || c.name == IDLE {
                    problem(format!("{at}.name: {:?} is reserved", c.name));
                }
                if !names.insert(c.name.as_str()) {
                    problem(format!("{at}.name: duplicate name {:?}", c.name));
                }
                cells.insert(c.name.as_str(), c);
                if c.cell_id == 0 || c.cell_id > MAX_CELL_ID {
                    problem(format!(
                        "{at}.cell_id: {} outside 1..={MAX_CELL_ID}",
                        c.cell_id
                    ));
                }
                if !cell_ids.insert(c.cell_id) {
                    problem(format!("{at}.cell_id: duplicate cell id {}", c.cell_id));
                }
                if c.hosts.is_empty() {
                    problem(format!("{at}.hosts: a cell must host at least one MNO"));
                }
                let mut seen = BTreeSet::new();
                for h in &c.hosts {
                    if !mno_names.contains(h.as_str()) {
                        problem(format!("{at}.hosts: unknown MNO {h:?}"));
                    }
                    if !seen.insert(h) {
                        problem(format!("{at}.hosts: MNO {h:?} listed twice"));
                    }
                }
            }
        }

        for (i, u) in self.ues.iter().enumerate() {
            let at = format!("ues[{i}]");
            if !names.insert(u.name.as_str()) {
                problem(format!("{at}.name: duplicate name {:?}", u.name));
            }
            if !mno_names.contains(u.home.as_str()) {
                problem(format!("{at}.home: unknown MNO {:?}", u.home));
            }
            if !u.report_scale.is_finite() || u.report_scale < 0.0 {
                problem(format!("{at}.report_scale: must be finite and >= 0"));
            }
            let mut last: Option<Tick> = None;
            for (j, e) in u.schedule.iter().enumerate() {
                if e.cell != MACRO && e.cell != IDLE && !cells.contains_key(e.cell.as_str()) {
                    problem(format!(
                        "{at}.schedule[{j}].cell: unknown cell {:?}",
                        e.cell
                    ));
                }
                if last.is_some_and(|t| e.tick <= t) {
                    problem(format!(
                        "{at}.schedule[{j}].tick: ticks must strictly increase"
                    ));
                }
                if e.tick >= self.duration {
                    problem(format!(
                        "{at}.schedule[{j}].tick: {} not before duration {}",
                        e.tick, self.duration
                    ));
                }
                last = Some(e.tick);
            }
        }

        for (i, a) in self.actions.iter().enumerate() {
            let at = format!("actions[{i}]");
            if !mno_names.contains(a.mno.as_str()) {
                problem(format!("{at}.mno: unknown MNO {:?}", a.mno));
            }
            match cells.get(a.cell.as_str()) {
                None => problem(format!("{at}.cell: unknown cell {:?}", a.cell)),
                Some(c) if !c.hosts.contains(&a.mno) => {
                    problem(format!("{at}.cell: {:?} does not host {:?}", a.cell, a.mno))
                }
                Some(_) => {}
            }
            if a.tick > self.duration {
                problem(format!(
                    "{at}.tick: {} after duration {}",
                    a.tick, self.duration
                ));
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(issues))
        }
    }
}
