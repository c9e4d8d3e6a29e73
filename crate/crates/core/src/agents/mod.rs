//! Discrete-event simulation of MNOs, SCPs and UEs driving the contracts
//! through the ledger.
//!
//! The loop is single threaded and tick ordered. Within a tick, MNO actions
//! run first, then SCP actions, then UE schedule entries; ties inside a kind
//! resolve by scenario order. A block is sealed at every multiple of
//! `block_interval` and at the final tick.
//!
//! Setup happens at tick 0 before the loop, in three blocks: masters are
//! deployed, then providers registered, then escrow deposited and UE oracle
//! credentials authorised on every cell contract of the UE's home MNO.

mod generate;
pub mod mobility;
mod reconcile;
mod scenario;

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::contracts::{
    events, CallOutput, ContractCall, ContractRegistry, Credential, Ecgi, Status, TrafficReport,
};
use crate::ledger::{
    AccountId, Amount, ContractId, Digest, Ledger, LedgerError, LedgerSnapshot, Target, Tick,
    Transaction, TxId,
};

pub use generate::{generate_scenario, two_operator_scenario, ScenarioShape};
pub use reconcile::{
    reports_from_events, scp_verify, ReconciliationResult, SessionVerdict, Verdict,
};
pub use scenario::{
    BillingMode, CellSpec, MnoAction, MnoActionKind, MnoSpec, Scenario, ScenarioError,
    ScheduleEntry, ScpSpec, UeSpec, IDLE, MACRO, SCENARIO_VERSION,
};

/// Cell id a UE sees when attached to the macro layer. Never registered.
pub const MACRO_CELL_ID: u32 = 0;

pub type ChainLedger = Ledger<ContractRegistry>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Mno,
    Scp,
    Ue,
    Ledger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tick: Tick,
    pub actor: ActorKind,
    pub name: String,
    pub action: String,
    pub payload: Value,
}

/// One UE attachment to a registered small cell, as measured by the SCP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeSession {
    pub ue: String,
    pub ecgi: Ecgi,
    pub start_tick: Tick,
    pub end_tick: Tick,
    pub bytes: u64,
}

/// Handle for an open metered session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionHandle {
    pub contract: ContractId,
    pub ecgi: Ecgi,
    pub start_tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountInfo {
    pub name: String,
    pub role: ActorKind,
    pub account: AccountId,
    pub endowment: Amount,
    pub final_balance: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractSummary {
    pub contract: ContractId,
    pub ecgi: Ecgi,
    pub mno: String,
    pub scp: String,
    pub cell: String,
    pub deposits: Amount,
    pub credited: Amount,
    pub withdrawn: Amount,
    pub penalties: Amount,
    pub refunds: Amount,
    pub escrow: Amount,
    pub accrued_credit: Amount,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReconciliation {
    pub contract: ContractId,
    pub result: ReconciliationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    pub sessions: Vec<UeSession>,
    pub reports: Vec<TrafficReport>,
    pub reconciliation: Vec<CellReconciliation>,
    pub accounts: Vec<AccountInfo>,
    pub summary: Vec<ContractSummary>,
    pub snapshot: LedgerSnapshot<ContractRegistry>,
}

impl SimTrace {
    /// JSON lines, one trace entry per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Digest over the trace entries and the final snapshot.
    pub fn digest(&self) -> Digest {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        serde_json::to_writer(&mut buf, &self.snapshot).expect("snapshot serializes");
        Digest::of(&buf)
    }

    /// Entries whose action is a given contract method.
    pub fn actions<'a>(&'a self, action: &'a str) -> impl Iterator<Item = &'a TraceEntry> + 'a {
        self.entries.iter().filter(move |e| e.action == action)
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "contract_id",
            "deposits",
            "credited",
            "withdrawn",
            "penalties",
            "refunds",
            "escrow",
            "ecgi",
            "mno",
            "scp",
            "cell",
            "status",
        ])?;
        for s in &self.summary {
            w.write_record([
                s.contract.0.to_string(),
                s.deposits.to_string(),
                s.credited.to_string(),
                s.withdrawn.to_string(),
                s.penalties.to_string(),
                s.refunds.to_string(),
                s.escrow.to_string(),
                s.ecgi.to_string(),
                s.mno.clone(),
                s.scp.clone(),
                s.cell.clone(),
                serde_json::to_value(s.status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unknown UE {0:?}")]
    UnknownUe(String),
    #[error("UE {0:?} is already attached")]
    AlreadyAttached(String),
    #[error("UE {0:?} is not attached")]
    NotAttached(String),
    #[error("setup transaction {tx:?} failed: {reason}")]
    Setup { tx: TxId, reason: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone)]
struct MnoState {
    name: String,
    plmn_id: u32,
    account: AccountId,
    master: Option<ContractId>,
}

#[derive(Debug, Clone)]
struct CellState {
    name: String,
    scp: usize,
    cell_id: u32,
    price_per_tick: Amount,
    /// Contract per hosted MNO index.
    contracts: BTreeMap<usize, ContractId>,
}

#[derive(Debug, Clone)]
struct Attachment {
    start: Tick,
    metered: Option<SessionHandle>,
}

#[derive(Debug, Clone)]
struct UeState {
    name: String,
    home: usize,
    account: AccountId,
    credential: Credential,
    rate: u64,
    report_scale: f64,
    attached: Option<Attachment>,
    sessions_closed: u64,
}

/// A running scenario. [`run_scenario`] drives one to completion; the
/// methods are public so examples and tests can step through by hand.
pub struct Simulation {
    scenario: Scenario,
    ledger: ChainLedger,
    mnos: Vec<MnoState>,
    scps: Vec<(String, AccountId)>,
    cells: Vec<CellState>,
    ues: Vec<UeState>,
    accounts: Vec<(String, ActorKind, AccountId, Amount)>,
    entries: Vec<TraceEntry>,
    sessions: Vec<UeSession>,
    reports: Vec<TrafficReport>,
    contract_cells: BTreeMap<ContractId, (usize, usize)>,
}

fn receipt_output(ledger: &ChainLedger, tx: TxId) -> Result<CallOutput, String> {
    match ledger.receipt(tx).map(|r| &r.outcome) {
        Some(crate::ledger::TxOutcome::Success { output }) => Ok(*output),
        Some(crate::ledger::TxOutcome::Failed { reason }) => Err(reason.to_string()),
        _ => Err("missing receipt".into()),
    }
}

impl Simulation {
    /// Validates the scenario, creates accounts and runs the three setup
    /// blocks at tick 0.
    pub fn new(scenario: Scenario) -> Result<Self, AgentError> {
        scenario.validate()?;
        let mut ledger = Ledger::new(ContractRegistry::new()).with_fee(scenario.fee);
        let mut accounts = Vec::new();
        let mut entries = Vec::new();
        let mut create = |ledger: &mut ChainLedger,
                          entries: &mut Vec<TraceEntry>,
                          name: &str,
                          role: ActorKind,
                          endowment: Amount|
         -> Result<AccountId, AgentError> {
            let id = ledger.create_account(endowment)?;
            accounts.push((name.to_owned(), role, id, endowment));
            entries.push(TraceEntry {
                tick: 0,
                actor: role,
                name: name.to_owned(),
                action: "create_account".into(),
                payload: json!({ "account": id, "initial_balance": endowment }),
            });
            Ok(id)
        };

        let mut mnos = Vec::new();
        for m in &scenario.mnos {
            let account = create(
                &mut ledger,
                &mut entries,
                &m.name,
                ActorKind::Mno,
                m.endowment,
            )?;
            mnos.push(MnoState {
                name: m.name.clone(),
                plmn_id: m.plmn_id,
                account,
                master: None,
            });
        }
        let mno_index: BTreeMap<String, usize> = scenario
            .mnos
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.clone(), i))
            .collect();

        let mut scps = Vec::new();
        let mut cells = Vec::new();
        for (si, s) in scenario.scps.iter().enumerate() {
            let account = create(
                &mut ledger,
                &mut entries,
                &s.name,
                ActorKind::Scp,
                s.endowment,
            )?;
            scps.push((s.name.clone(), account));
            for c in &s.cells {
                cells.push(CellState {
                    name: c.name.clone(),
                    scp: si,
                    cell_id: c.cell_id,
                    price_per_tick: c.price_per_tick,
                    contracts: BTreeMap::new(),
                });
            }
        }

        let mut cred_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x6f72_6163_6c65);
        let mut ues = Vec::new();
        for u in &scenario.ues {
            let account = create(
                &mut ledger,
                &mut entries,
                &u.name,
                ActorKind::Ue,
                u.oracle_endowment,
            )?;
            ues.push(UeState {
                name: u.name.clone(),
                home: mno_index[&u.home],
                account,
                credential: Credential(format!("cred-{:016x}", cred_rng.next_u64())),
                rate: u.rate_bytes_per_tick,
                report_scale: u.report_scale,
                attached: None,
                sessions_closed: 0,
            });
        }

        let mut sim = Simulation {
            scenario,
            ledger,
            mnos,
            scps,
            cells,
            ues,
            accounts,
            entries,
            sessions: Vec::new(),
            reports: Vec::new(),
            contract_cells: BTreeMap::new(),
        };
        sim.setup(&mno_index)?;
        Ok(sim)
    }

    fn setup(&mut self, mno_index: &BTreeMap<String, usize>) -> Result<(), AgentError> {
        // masters
        let mut deploys = Vec::new();
        for i in 0..self.mnos.len() {
            let (name, account, plmn_id) = (
                self.mnos[i].name.clone(),
                self.mnos[i].account,
                self.mnos[i].plmn_id,
            );
            let tx = self.submit(
                0,
                ActorKind::Mno,
                &name,
                account,
                None,
                ContractCall::DeployMaster { plmn_id },
            )?;
            deploys.push((i, tx));
        }
        self.seal(0);
        for (i, tx) in deploys {
            let id = self
                .setup_output(tx)?
                .contract()
                .expect("deploy returns a contract id");
            self.mnos[i].master = Some(id);
        }

        // registrations, MNO by MNO, cells in scenario order
        let mut registrations = Vec::new();
        for mi in 0..self.mnos.len() {
            for ci in 0..self.cells.len() {
                let spec = self
                    .scenario
                    .cell(&self.cells[ci].name)
                    .expect("cell exists")
                    .clone();
                if !spec.hosts.iter().any(|h| mno_index[h] == mi) {
                    continue;
                }
                let m = &self.mnos[mi];
                let call = ContractCall::RegisterProvider {
                    scp: self.scps[self.cells[ci].scp].1,
                    ecgi: Ecgi::new(m.plmn_id, spec.cell_id).expect("validated cell id"),
                    price_per_kb: spec.price_per_kb,
                    spectrum_tag: spec.spectrum_tag.clone(),
                    termination_threshold: self.scenario.mnos[mi].termination_threshold,
                };
                let (name, account, master) = (m.name.clone(), m.account, m.master);
                let tx = self.submit(0, ActorKind::Mno, &name, account, master, call)?;
                registrations.push((mi, ci, tx));
            }
        }
        self.seal(0);
        for (mi, ci, tx) in registrations {
            let id = self
                .setup_output(tx)?
                .contract()
                .expect("registration returns a contract id");
            self.cells[ci].contracts.insert(mi, id);
            self.contract_cells.insert(id, (mi, ci));
        }

        // funding and oracle authorisation
        for mi in 0..self.mnos.len() {
            let (name, account) = (self.mnos[mi].name.clone(), self.mnos[mi].account);
            let deposit = self.scenario.mnos[mi].deposit_per_cell;
            let contracts: Vec<ContractId> = self
                .contract_cells
                .iter()
                .filter(|(_, (m, _))| *m == mi)
                .map(|(c, _)| *c)
                .collect();
            let creds: Vec<Credential> = self
                .ues
                .iter()
                .filter(|u| u.home == mi)
                .map(|u| u.credential.clone())
                .collect();
            for contract in contracts {
                if deposit > 0 {
                    self.submit(
                        0,
                        ActorKind::Mno,
                        &name,
                        account,
                        Some(contract),
                        ContractCall::DepositFunds { amount: deposit },
                    )?;
                }
                for credential in &creds {
                    let call = ContractCall::AuthorizeOracle {
                        credential: credential.clone(),
                    };
                    self.submit(0, ActorKind::Mno, &name, account, Some(contract), call)?;
                }
            }
        }
        self.seal(0);
        Ok(())
    }

    fn setup_output(&self, tx: TxId) -> Result<CallOutput, AgentError> {
        receipt_output(&self.ledger, tx).map_err(|reason| AgentError::Setup { tx, reason })
    }

    fn log(&mut self, tick: Tick, actor: ActorKind, name: &str, action: &str, payload: Value) {
        self.entries.push(TraceEntry {
            tick,
            actor,
            name: name.to_owned(),
            action: action.to_owned(),
            payload,
        });
    }

    fn submit(
        &mut self,
        tick: Tick,
        actor: ActorKind,
        name: &str,
        sender: AccountId,
        contract: Option<ContractId>,
        call: ContractCall,
    ) -> Result<TxId, AgentError> {
        let action = call.method_name();
        let tx = Transaction {
            sender,
            target: contract.map_or(Target::Create, Target::Contract),
            call: Some(call),
            value: 0,
            nonce: self.ledger.next_nonce(sender),
            fee: self.scenario.fee,
        };
        let payload = json!({ "tx": &tx });
        let id = self.ledger.submit_transaction(tx)?;
        let mut payload = payload;
        payload["tx_id"] = json!(id);
        self.log(tick, actor, name, action, payload);
        Ok(id)
    }

    fn seal(&mut self, now: Tick) {
        let block = self.ledger.seal_block(now);
        let payload = json!({
            "height": block.height,
            "now": now,
            "transactions": block.transactions.len(),
            "digest": block.digest,
        });
        self.log(now, ActorKind::Ledger, "sequencer", "seal_block", payload);
    }

    pub fn ledger(&self) -> &ChainLedger {
        &self.ledger
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn master_of(&self, mno: &str) -> Option<ContractId> {
        self.mnos.iter().find(|m| m.name == mno)?.master
    }

    /// Cell contract spawned for (`mno`, `cell`).
    pub fn contract_for(&self, mno: &str, cell: &str) -> Option<ContractId> {
        let mi = self.mnos.iter().position(|m| m.name == mno)?;
        self.cells
            .iter()
            .find(|c| c.name == cell)?
            .contracts
            .get(&mi)
            .copied()
    }

    /// Ledger account of any named actor.
    pub fn account_of(&self, name: &str) -> Option<AccountId> {
        self.accounts.iter().find(|a| a.0 == name).map(|a| a.2)
    }

    pub fn credential_of(&self, ue: &str) -> Option<&Credential> {
        self.ues
            .iter()
            .find(|u| u.name == ue)
            .map(|u| &u.credential)
    }

    /// ECGI the UE sees for schedule target `cell` (`"macro"` maps to the
    /// macro layer id).
    pub fn ecgi_for(&self, ue: &str, cell: &str) -> Option<Ecgi> {
        let u = self.ues.iter().find(|u| u.name == ue)?;
        let plmn = self.mnos[u.home].plmn_id;
        let cell_id = if cell == MACRO {
            MACRO_CELL_ID
        } else {
            self.cells.iter().find(|c| c.name == cell)?.cell_id
        };
        Some(Ecgi {
            plmn_id: plmn,
            cell_id,
        })
    }

    fn ue_index(&self, ue: &str) -> Result<usize, AgentError> {
        self.ues
            .iter()
            .position(|u| u.name == ue)
            .ok_or_else(|| AgentError::UnknownUe(ue.to_owned()))
    }

    /// Attaches `ue` to the cell broadcasting `ecgi`. The monitoring service
    /// looks the ECGI up in its home master contract; a hit on an active
    /// contract opens a metered session, anything else leaves the attachment
    /// unmetered.
    pub fn ue_attach(
        &mut self,
        ue: &str,
        ecgi: Ecgi,
        tick: Tick,
    ) -> Result<Option<SessionHandle>, AgentError> {
        let ui = self.ue_index(ue)?;
        if self.ues[ui].attached.is_some() {
            return Err(AgentError::AlreadyAttached(ue.to_owned()));
        }
        let master = self.mnos[self.ues[ui].home].master;
        let registry = self.ledger.runtime();
        let contract = master
            .and_then(|m| registry.lookup_cell(m, ecgi))
            .filter(|c| registry.cell(*c).is_some_and(|c| c.is_active()));
        let metered = contract.map(|contract| SessionHandle {
            contract,
            ecgi,
            start_tick: tick,
        });
        self.ues[ui].attached = Some(Attachment {
            start: tick,
            metered,
        });
        self.log(
            tick,
            ActorKind::Ue,
            ue,
            "attach",
            json!({ "ecgi": ecgi.to_string(), "contract": contract, "metered": metered.is_some() }),
        );
        Ok(metered)
    }

    fn session_bytes(&self, ui: usize, duration: Tick, session: u64) -> u64 {
        let base = self.ues[ui].rate as f64 * duration as f64;
        let jitter = self.scenario.traffic_jitter;
        if jitter == 0.0 {
            return self.ues[ui].rate * duration;
        }
        let key =
            self.scenario.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((ui as u64) << 24) ^ session;
        let u: f64 = ChaCha8Rng::seed_from_u64(key).random_range(-1.0..=1.0);
        (base * (1.0 + jitter * u)).round() as u64
    }

    /// Closes the UE's current attachment. For a metered session the oracle
    /// submits its billing transaction and the report is returned.
    pub fn ue_detach(&mut self, ue: &str, tick: Tick) -> Result<Option<TrafficReport>, AgentError> {
        let ui = self.ue_index(ue)?;
        let att = self.ues[ui]
            .attached
            .take()
            .ok_or_else(|| AgentError::NotAttached(ue.to_owned()))?;
        let session = self.ues[ui].sessions_closed;
        self.ues[ui].sessions_closed += 1;
        let duration = tick - att.start;
        let Some(handle) = att.metered else {
            self.log(
                tick,
                ActorKind::Ue,
                ue,
                "detach",
                json!({ "metered": false }),
            );
            return Ok(None);
        };

        let measured = self.session_bytes(ui, duration, session);
        let reported = (measured as f64 * self.ues[ui].report_scale).round() as u64;
        self.sessions.push(UeSession {
            ue: ue.to_owned(),
            ecgi: handle.ecgi,
            start_tick: att.start,
            end_tick: tick,
            bytes: measured,
        });
        let report = TrafficReport {
            ecgi: handle.ecgi,
            ue_id: ue.to_owned(),
            session_start: att.start,
            session_end: tick,
            bytes_served: reported,
        };
        self.log(
            tick,
            ActorKind::Ue,
            ue,
            "detach",
            json!({ "metered": true, "contract": handle.contract, "bytes": reported }),
        );
        let credential = self.ues[ui].credential.clone();
        let account = self.ues[ui].account;
        let call = match self.scenario.billing_mode {
            BillingMode::PerByte => ContractCall::ReportTraffic {
                credential,
                report: report.clone(),
            },
            BillingMode::PerAttachmentTime => {
                let (_, ci) = self.contract_cells[&handle.contract];
                ContractCall::AttachmentTimeBilling {
                    credential,
                    ue_id: ue.to_owned(),
                    duration,
                    rate_per_tick: self.cells[ci].price_per_tick,
                }
            }
        };
        self.submit(
            tick,
            ActorKind::Ue,
            ue,
            account,
            Some(handle.contract),
            call,
        )?;
        self.reports.push(report.clone());
        Ok(Some(report))
    }

    /// Submits an attachment-time billing call from `ue`'s oracle account.
    pub fn attachment_time_billing(
        &mut self,
        cell: ContractId,
        ue: &str,
        duration: Tick,
        rate_per_tick: Amount,
        tick: Tick,
    ) -> Result<TxId, AgentError> {
        let ui = self.ue_index(ue)?;
        let call = ContractCall::AttachmentTimeBilling {
            credential: self.ues[ui].credential.clone(),
            ue_id: ue.to_owned(),
            duration,
            rate_per_tick,
        };
        let account = self.ues[ui].account;
        self.submit(tick, ActorKind::Ue, ue, account, Some(cell), call)
    }

    fn scp_withdrawals(&mut self, tick: Tick) -> Result<(), AgentError> {
        for si in 0..self.scps.len() {
            let (name, account) = self.scps[si].clone();
            let owned: Vec<ContractId> = self
                .cells
                .iter()
                .filter(|c| c.scp == si)
                .flat_map(|c| c.contracts.values().copied())
                .collect();
            for contract in owned {
                let credit = self
                    .ledger
                    .runtime()
                    .cell(contract)
                    .map_or(0, |c| c.accrued_credit);
                if credit > 0 {
                    self.submit(
                        tick,
                        ActorKind::Scp,
                        &name,
                        account,
                        Some(contract),
                        ContractCall::Withdraw,
                    )?;
                }
            }
        }
        Ok(())
    }

    fn mno_actions(&mut self, tick: Tick) -> Result<(), AgentError> {
        let mut due: Vec<(usize, MnoAction)> = self
            .scenario
            .actions
            .iter()
            .filter(|a| a.tick == tick)
            .map(|a| {
                let mi = self
                    .mnos
                    .iter()
                    .position(|m| m.name == a.mno)
                    .expect("validated");
                (mi, a.clone())
            })
            .collect();
        due.sort_by_key(|(mi, _)| *mi);
        for (mi, a) in due {
            let contract = self.contract_for(&a.mno, &a.cell).expect("validated host");
            let call = match a.kind {
                MnoActionKind::Infraction => ContractCall::RecordInfraction { penalty: a.penalty },
                MnoActionKind::Terminate => ContractCall::Terminate,
                MnoActionKind::Recover => ContractCall::RecoverFunds { force: a.force },
            };
            let account = self.mnos[mi].account;
            self.submit(tick, ActorKind::Mno, &a.mno, account, Some(contract), call)?;
        }
        Ok(())
    }

    fn ue_schedule(&mut self, tick: Tick) -> Result<(), AgentError> {
        for ui in 0..self.ues.len() {
            let Some(entry) = self.scenario.ues[ui]
                .schedule
                .iter()
                .find(|e| e.tick == tick)
                .cloned()
            else {
                continue;
            };
            let name = self.ues[ui].name.clone();
            if self.ues[ui].attached.is_some() {
                self.ue_detach(&name, tick)?;
            }
            if entry.cell != IDLE {
                let ecgi = self.ecgi_for(&name, &entry.cell).expect("validated cell");
                self.ue_attach(&name, ecgi, tick)?;
            }
        }
        Ok(())
    }

    /// Runs the event loop to the scenario's end and collects the trace.
    pub fn run(mut self) -> Result<(SimTrace, ChainLedger), AgentError> {
        let duration = self.scenario.duration;
        let interval = self.scenario.block_interval;
        for tick in 0..=duration {
            self.mno_actions(tick)?;
            if let Some(k) = self.scenario.withdraw_interval {
                if tick > 0 && tick % k == 0 {
                    self.scp_withdrawals(tick)?;
                }
            }
            self.ue_schedule(tick)?;
            if tick == duration {
                for ui in 0..self.ues.len() {
                    if self.ues[ui].attached.is_some() {
                        let name = self.ues[ui].name.clone();
                        self.ue_detach(&name, tick)?;
                    }
                }
            }
            if tick % interval == 0 || tick == duration {
                self.seal(tick);
            }
        }
        self.scp_withdrawals(duration)?;
        self.seal(duration);
        Ok(self.finish())
    }

    fn finish(self) -> (SimTrace, ChainLedger) {
        let registry = self.ledger.runtime();
        let mut summary = Vec::new();
        let mut reconciliation = Vec::new();
        for (contract, (mi, ci)) in &self.contract_cells {
            let c = registry.cell(*contract).expect("spawned contract");
            summary.push(ContractSummary {
                contract: *contract,
                ecgi: c.ecgi,
                mno: self.mnos[*mi].name.clone(),
                scp: self.scps[self.cells[*ci].scp].0.clone(),
                cell: self.cells[*ci].name.clone(),
                deposits: c.totals.deposits,
                credited: c.totals.credited,
                withdrawn: c.totals.withdrawn,
                penalties: c.totals.penalties,
                refunds: c.totals.refunds,
                escrow: c.escrow,
                accrued_credit: c.accrued_credit,
                status: c.status,
            });
            if self.scenario.billing_mode == BillingMode::PerByte {
                let reported = reports_from_events(self.ledger.events(), *contract);
                let result = scp_verify(
                    c.ecgi,
                    &self.sessions,
                    &reported,
                    self.scenario.reconciliation_tolerance_bytes,
                );
                reconciliation.push(CellReconciliation {
                    contract: *contract,
                    result,
                });
            }
        }
        let accounts = self
            .accounts
            .iter()
            .map(|(name, role, account, endowment)| AccountInfo {
                name: name.clone(),
                role: *role,
                account: *account,
                endowment: *endowment,
                final_balance: self.ledger.get_balance(*account).expect("created"),
            })
            .collect();
        let trace = SimTrace {
            seed: self.scenario.seed,
            entries: self.entries,
            sessions: self.sessions,
            reports: self.reports,
            reconciliation,
            accounts,
            summary,
            snapshot: self.ledger.snapshot(),
        };
        (trace, self.ledger)
    }
}

/// Validates and runs `scenario` end to end.
pub fn run_scenario(scenario: &Scenario) -> Result<SimTrace, AgentError> {
    Ok(Simulation::new(scenario.clone())?.run()?.0)
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Rebuilds the ledger from the account creations, transactions and block
/// seals recorded in a trace.
pub fn replay(entries: &[TraceEntry]) -> Result<LedgerSnapshot<ContractRegistry>, ReplayError> {
    let mut ledger: ChainLedger = Ledger::new(ContractRegistry::new());
    for (index, e) in entries.iter().enumerate() {
        let bad = |message: String| ReplayError::Entry { index, message };
        if e.action == "create_account" {
            let initial = e.payload["initial_balance"]
                .as_u64()
                .ok_or_else(|| bad("missing initial_balance".into()))?;
            let id = ledger.create_account(initial)?;
            if json!(id) != e.payload["account"] {
                return Err(bad(format!("account id diverged: {id}")));
            }
        } else if e.action == "seal_block" {
            let now = e.payload["now"]
                .as_u64()
                .ok_or_else(|| bad("missing now".into()))?;
            ledger.seal_block(now);
        } else if let Some(tx) = e.payload.get("tx") {
            let tx: Transaction<ContractCall> =
                serde_json::from_value(tx.clone()).map_err(|err| bad(err.to_string()))?;
            let id = ledger.submit_transaction(tx)?;
            if json!(id) != e.payload["tx_id"] {
                return Err(bad(format!("tx id diverged: {id:?}")));
            }
        }
    }
    Ok(ledger.snapshot())
}

/// Convenience: count events of one name on one contract.
pub fn count_events(ledger: &ChainLedger, contract: ContractId, name: &str) -> usize {
    ledger
        .events()
        .iter()
        .filter(|e| e.contract == Some(contract) && e.name == name)
        .count()
}

/// Names of the per-session credit events for each billing mode.
pub fn credit_event(mode: BillingMode) -> &'static str {
    match mode {
        BillingMode::PerByte => events::TRAFFIC_CREDITED,
        BillingMode::PerAttachmentTime => events::ATTACHMENT_BILLED,
    }
}
