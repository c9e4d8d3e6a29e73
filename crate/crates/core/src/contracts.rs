//! Master and cell contracts.
//!
//! Each MNO owns one [`MasterContract`] mapping cell identities to the
//! per-cell agreement it spawned. A [`CellContract`] holds the MNO's escrow,
//! the credit accrued by the SCP from oracle traffic reports, and the
//! penalty / termination / recovery machinery.
//!
//! Money flow inside a cell contract:
//!
//! ```text
//! deposits = withdrawn + penalties + refunds + escrow
//! ```
//!
//! `accrued_credit` is the part of `escrow` already earned by the SCP. Penalty
//! detractions leave escrow and go back to the MNO account.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ledger::{AccountId, Amount, CallEnv, ContractId, Payload, Runtime, Tick};

/// Largest value a 28-bit E-UTRAN cell identity can take.
pub const MAX_CELL_ID: u32 = (1 << 28) - 1;

pub const BYTES_PER_KB: u64 = 1024;

pub const DEFAULT_TERMINATION_THRESHOLD: u32 = 3;

/// Event names emitted by the contracts. Payload keys are documented on each
/// method.
pub mod events {
    pub const MASTER_DEPLOYED: &str = "MasterDeployed";
    pub const CONTRACT_SPAWNED: &str = "ContractSpawned";
    pub const DEPOSITED: &str = "Deposited";
    pub const ORACLE_AUTHORIZED: &str = "OracleAuthorized";
    pub const TRAFFIC_CREDITED: &str = "TrafficCredited";
    pub const ATTACHMENT_BILLED: &str = "AttachmentBilled";
    pub const WITHDRAWN: &str = "Withdrawn";
    pub const INFRACTION: &str = "Infraction";
    pub const TERMINATED: &str = "Terminated";
    pub const RECOVERED: &str = "Recovered";
}

/// E-UTRAN cell global identifier: operator PLMN plus a 28-bit cell id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ecgi {
    pub plmn_id: u32,
    pub cell_id: u32,
}

impl Ecgi {
    pub fn new(plmn_id: u32, cell_id: u32) -> Result<Self, ContractError> {
        if cell_id > MAX_CELL_ID {
            return Err(ContractError::InvalidArgument(format!(
                "cell id {cell_id} exceeds 28 bits"
            )));
        }
        Ok(Ecgi { plmn_id, cell_id })
    }
}

impl fmt::Display for Ecgi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:07x}", self.plmn_id, self.cell_id)
    }
}

/// Opaque capability token held by a UE monitoring service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Credential(pub String);

impl Credential {
    pub fn new(token: impl Into<String>) -> Self {
        Credential(token.into())
    }
}

impl fmt::Display for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A UE's statement of traffic served in one small-cell session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub ecgi: Ecgi,
    pub ue_id: String,
    pub session_start: Tick,
    pub session_end: Tick,
    pub bytes_served: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterContract {
    pub owner_mno: AccountId,
    pub plmn_id: u32,
    #[serde(with = "registry_entries")]
    pub registry: BTreeMap<Ecgi, ContractId>,
}

// JSON object keys must be strings, so the registry travels as a list of pairs.
mod registry_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<Ecgi, ContractId>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<Ecgi, ContractId>, D::Error> {
        Ok(Vec::<(Ecgi, ContractId)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

/// Lifetime money flows of one cell contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTotals {
    pub deposits: Amount,
    pub credited: Amount,
    pub unfunded: Amount,
    pub withdrawn: Amount,
    pub penalties: Amount,
    pub refunds: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellContract {
    pub master: ContractId,
    pub mno: AccountId,
    pub scp: AccountId,
    pub ecgi: Ecgi,
    pub price_per_kb: Amount,
    pub escrow: Amount,
    pub accrued_credit: Amount,
    pub oracle_credentials: BTreeSet<Credential>,
    pub status: Status,
    pub infractions: u32,
    pub termination_threshold: u32,
    pub spectrum_tag: String,
    pub frozen: bool,
    pub totals: CellTotals,
}

impl CellContract {
    /// Escrow not yet earned by the SCP.
    pub fn available(&self) -> Amount {
        self.escrow - self.accrued_credit
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    pub fn is_conserved(&self) -> bool {
        let t = &self.totals;
        t.deposits as u128
            == t.withdrawn as u128 + t.penalties as u128 + t.refunds as u128 + self.escrow as u128
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ContractError {
    #[error("access denied")]
    AccessDenied,
    #[error("ecgi {0} already registered")]
    AlreadyRegistered(Ecgi),
    #[error("insufficient funds: balance {available}, requested {requested}")]
    InsufficientFunds {
        available: Amount,
        requested: Amount,
    },
    #[error("contract terminated")]
    ContractTerminated,
    #[error("report ecgi {reported} does not match contract ecgi {expected}")]
    EcgiMismatch { expected: Ecgi, reported: Ecgi },
    #[error("no credit to withdraw")]
    ZeroCredit,
    #[error("contract not terminated")]
    NotTerminated,
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("contract {0} does not support this method")]
    WrongContractKind(ContractId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Contract methods as carried in a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ContractCall {
    DeployMaster {
        plmn_id: u32,
    },
    RegisterProvider {
        scp: AccountId,
        ecgi: Ecgi,
        price_per_kb: Amount,
        spectrum_tag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        termination_threshold: Option<u32>,
    },
    DepositFunds {
        amount: Amount,
    },
    AuthorizeOracle {
        credential: Credential,
    },
    ReportTraffic {
        credential: Credential,
        report: TrafficReport,
    },
    AttachmentTimeBilling {
        credential: Credential,
        ue_id: String,
        duration: Tick,
        rate_per_tick: Amount,
    },
    Withdraw,
    RecordInfraction {
        penalty: Amount,
    },
    Terminate,
    RecoverFunds {
        #[serde(default)]
        force: bool,
    },
}

impl ContractCall {
    pub fn method_name(&self) -> &'static str {
        match self {
            ContractCall::DeployMaster { .. } => "deploy_master",
            ContractCall::RegisterProvider { .. } => "register_provider",
            ContractCall::DepositFunds { .. } => "deposit_funds",
            ContractCall::AuthorizeOracle { .. } => "authorize_oracle",
            ContractCall::ReportTraffic { .. } => "report_traffic",
            ContractCall::AttachmentTimeBilling { .. } => "attachment_time_billing",
            ContractCall::Withdraw => "withdraw",
            ContractCall::RecordInfraction { .. } => "record_infraction",
            ContractCall::Terminate => "terminate",
            ContractCall::RecoverFunds { .. } => "recover_funds",
        }
    }
}

/// Result of a successful contract call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CallOutput {
    Contract(ContractId),
    Amount(Amount),
    Status(Status),
    Unit,
}

impl CallOutput {
    pub fn contract(self) -> Option<ContractId> {
        match self {
            CallOutput::Contract(c) => Some(c),
            _ => None,
        }
    }

    pub fn amount(self) -> Option<Amount> {
        match self {
            CallOutput::Amount(a) => Some(a),
            _ => None,
        }
    }
}

/// Credit outcome of one billing call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Credit {
    pub requested: Amount,
    pub credited: Amount,
}

impl Credit {
    pub fn unfunded(&self) -> Amount {
        self.requested - self.credited
    }
}

/// `ceil(bytes / 1024)`.
pub fn kilobytes_billed(bytes: u64) -> u64 {
    bytes.div_ceil(BYTES_PER_KB)
}

fn payload<const N: usize>(pairs: [(&str, serde_json::Value); N]) -> Payload {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

/// Every deployed master and cell contract. This is the [`Runtime`] the
/// simulated chain hosts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRegistry {
    pub masters: BTreeMap<ContractId, MasterContract>,
    pub cells: BTreeMap<ContractId, CellContract>,
    next_id: u64,
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn allocate(&mut self) -> ContractId {
        self.next_id += 1;
        ContractId(self.next_id)
    }

    pub fn master(&self, id: ContractId) -> Option<&MasterContract> {
        self.masters.get(&id)
    }

    pub fn cell(&self, id: ContractId) -> Option<&CellContract> {
        self.cells.get(&id)
    }

    fn cell_ref(&self, id: ContractId) -> Result<&CellContract, ContractError> {
        self.cells.get(&id).ok_or_else(|| self.missing(id))
    }

    fn cell_mut(&mut self, id: ContractId) -> &mut CellContract {
        self.cells.get_mut(&id).expect("validated before mutation")
    }

    fn missing(&self, id: ContractId) -> ContractError {
        if self.masters.contains_key(&id) {
            ContractError::WrongContractKind(id)
        } else {
            ContractError::UnknownContract(id)
        }
    }

    pub fn deploy_master(
        &mut self,
        env: &mut CallEnv<'_>,
        plmn_id: u32,
    ) -> Result<ContractId, ContractError> {
        let id = self.allocate();
        self.masters.insert(
            id,
            MasterContract {
                owner_mno: env.sender(),
                plmn_id,
                registry: BTreeMap::new(),
            },
        );
        env.emit(
            id,
            events::MASTER_DEPLOYED,
            payload([
                ("owner", json!(env.sender().0)),
                ("plmn_id", json!(plmn_id)),
            ]),
        );
        Ok(id)
    }

    /// Spawns a cell contract for `ecgi` and records it in the master registry.
    ///
    /// `ContractSpawned` payload: `cell`, `ecgi`, `scp`, `price_per_kb`,
    /// `spectrum_tag`.
    #[allow(clippy::too_many_arguments)]
    pub fn register_provider(
        &mut self,
        env: &mut CallEnv<'_>,
        master: ContractId,
        scp: AccountId,
        ecgi: Ecgi,
        price_per_kb: Amount,
        spectrum_tag: &str,
        termination_threshold: Option<u32>,
    ) -> Result<ContractId, ContractError> {
        let m = self.masters.get(&master).ok_or_else(|| {
            if self.cells.contains_key(&master) {
                ContractError::WrongContractKind(master)
            } else {
                ContractError::UnknownContract(master)
            }
        })?;
        if env.sender() != m.owner_mno {
            return Err(ContractError::AccessDenied);
        }
        if m.registry.contains_key(&ecgi) {
            return Err(ContractError::AlreadyRegistered(ecgi));
        }
        if ecgi.cell_id > MAX_CELL_ID {
            return Err(ContractError::InvalidArgument(format!(
                "cell id {} exceeds 28 bits",
                ecgi.cell_id
            )));
        }
        if !env.account_exists(scp) {
            return Err(ContractError::UnknownAccount(scp));
        }
        let threshold = termination_threshold.unwrap_or(DEFAULT_TERMINATION_THRESHOLD);
        if threshold == 0 {
            return Err(ContractError::InvalidArgument(
                "termination threshold must be at least 1".into(),
            ));
        }
        let mno = m.owner_mno;
        let id = self.allocate();
        self.cells.insert(
            id,
            CellContract {
                master,
                mno,
                scp,
                ecgi,
                price_per_kb,
                escrow: 0,
                accrued_credit: 0,
                oracle_credentials: BTreeSet::new(),
                status: Status::Active,
                infractions: 0,
                termination_threshold: threshold,
                spectrum_tag: spectrum_tag.to_owned(),
                frozen: false,
                totals: CellTotals::default(),
            },
        );
        self.masters
            .get_mut(&master)
            .expect("checked above")
            .registry
            .insert(ecgi, id);
        env.emit(
            master,
            events::CONTRACT_SPAWNED,
            payload([
                ("cell", json!(id.0)),
                ("ecgi", json!(ecgi.to_string())),
                ("scp", json!(scp.0)),
                ("price_per_kb", json!(price_per_kb)),
                ("spectrum_tag", json!(spectrum_tag)),
            ]),
        );
        Ok(id)
    }

    /// Read-only registry query used by UEs on attachment.
    pub fn lookup_cell(&self, master: ContractId, ecgi: Ecgi) -> Option<ContractId> {
        self.masters.get(&master)?.registry.get(&ecgi).copied()
    }

    pub fn deposit_funds(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
        amount: Amount,
    ) -> Result<Amount, ContractError> {
        let c = self.cell_ref(cell)?;
        if env.sender() != c.mno {
            return Err(ContractError::AccessDenied);
        }
        if !c.is_active() {
            return Err(ContractError::ContractTerminated);
        }
        env.take_from_sender(amount)
            .map_err(|s| ContractError::InsufficientFunds {
                available: s.available,
                requested: s.requested,
            })?;
        let c = self.cell_mut(cell);
        c.escrow += amount;
        c.totals.deposits += amount;
        let escrow = c.escrow;
        env.emit(
            cell,
            events::DEPOSITED,
            payload([("amount", json!(amount)), ("escrow", json!(escrow))]),
        );
        Ok(escrow)
    }

    pub fn authorize_oracle(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
        credential: &Credential,
    ) -> Result<(), ContractError> {
        let c = self.cell_ref(cell)?;
        if env.sender() != c.mno {
            return Err(ContractError::AccessDenied);
        }
        if !c.is_active() {
            return Err(ContractError::ContractTerminated);
        }
        if self
            .cell_mut(cell)
            .oracle_credentials
            .insert(credential.clone())
        {
            env.emit(
                cell,
                events::ORACLE_AUTHORIZED,
                payload([("credential", json!(credential.0))]),
            );
        }
        Ok(())
    }

    fn check_oracle(
        &self,
        cell: ContractId,
        credential: &Credential,
    ) -> Result<&CellContract, ContractError> {
        let c = self.cell_ref(cell)?;
        if !c.oracle_credentials.contains(credential) {
            return Err(ContractError::AccessDenied);
        }
        if !c.is_active() {
            return Err(ContractError::ContractTerminated);
        }
        Ok(c)
    }

    fn credit(&mut self, cell: ContractId, requested: Amount) -> Credit {
        let c = self.cell_mut(cell);
        let credited = requested.min(c.available());
        c.accrued_credit += credited;
        c.totals.credited += credited;
        c.totals.unfunded += requested - credited;
        Credit {
            requested,
            credited,
        }
    }

    /// Credits the SCP for one session: `ceil(bytes / 1024) * price_per_kb`,
    /// clamped to the escrow not yet earned.
    ///
    /// `TrafficCredited` payload: `ue`, `ecgi`, `session_start`,
    /// `session_end`, `bytes`, `kb`, `requested`, `credited`, `unfunded`.
    pub fn report_traffic(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
        credential: &Credential,
        report: &TrafficReport,
    ) -> Result<Credit, ContractError> {
        let c = self.check_oracle(cell, credential)?;
        if report.ecgi != c.ecgi {
            return Err(ContractError::EcgiMismatch {
                expected: c.ecgi,
                reported: report.ecgi,
            });
        }
        if report.session_end < report.session_start {
            return Err(ContractError::InvalidArgument(
                "session ends before it starts".into(),
            ));
        }
        let kb = kilobytes_billed(report.bytes_served);
        let requested = kb
            .checked_mul(c.price_per_kb)
            .ok_or_else(|| ContractError::InvalidArgument("credit request overflows".into()))?;
        let credit = self.credit(cell, requested);
        env.emit(
            cell,
            events::TRAFFIC_CREDITED,
            payload([
                ("ue", json!(report.ue_id)),
                ("ecgi", json!(report.ecgi.to_string())),
                ("session_start", json!(report.session_start)),
                ("session_end", json!(report.session_end)),
                ("bytes", json!(report.bytes_served)),
                ("kb", json!(kb)),
                ("requested", json!(credit.requested)),
                ("credited", json!(credit.credited)),
                ("unfunded", json!(credit.unfunded())),
            ]),
        );
        Ok(credit)
    }

    /// Alternative billing: `duration * rate_per_tick`, same clamp and
    /// credential gate as [`report_traffic`](Self::report_traffic).
    pub fn attachment_time_billing(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
        credential: &Credential,
        ue_id: &str,
        duration: Tick,
        rate_per_tick: Amount,
    ) -> Result<Credit, ContractError> {
        self.check_oracle(cell, credential)?;
        let requested = duration
            .checked_mul(rate_per_tick)
            .ok_or_else(|| ContractError::InvalidArgument("credit request overflows".into()))?;
        let credit = self.credit(cell, requested);
        env.emit(
            cell,
            events::ATTACHMENT_BILLED,
            payload([
                ("ue", json!(ue_id)),
                ("duration", json!(duration)),
                ("rate_per_tick", json!(rate_per_tick)),
                ("requested", json!(credit.requested)),
                ("credited", json!(credit.credited)),
                ("unfunded", json!(credit.unfunded())),
            ]),
        );
        Ok(credit)
    }

    /// Pays the SCP its accrued credit. Works after termination.
    pub fn withdraw(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
    ) -> Result<Amount, ContractError> {
        let c = self.cell_ref(cell)?;
        if env.sender() != c.scp {
            return Err(ContractError::AccessDenied);
        }
        if c.accrued_credit == 0 {
            return Err(ContractError::ZeroCredit);
        }
        let c = self.cell_mut(cell);
        let amount = c.accrued_credit;
        c.accrued_credit = 0;
        c.escrow -= amount;
        c.totals.withdrawn += amount;
        let scp = c.scp;
        env.pay(scp, amount);
        env.emit(
            cell,
            events::WITHDRAWN,
            payload([("amount", json!(amount))]),
        );
        Ok(amount)
    }

    /// Detracts up to `penalty` from the SCP's credit (returned to the MNO)
    /// and terminates once the infraction threshold is reached.
    pub fn record_infraction(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
        penalty: Amount,
    ) -> Result<Status, ContractError> {
        let c = self.cell_ref(cell)?;
        if env.sender() != c.mno {
            return Err(ContractError::AccessDenied);
        }
        if !c.is_active() {
            return Err(ContractError::ContractTerminated);
        }
        let c = self.cell_mut(cell);
        let detracted = penalty.min(c.accrued_credit);
        c.accrued_credit -= detracted;
        c.escrow -= detracted;
        c.totals.penalties += detracted;
        c.infractions += 1;
        if c.infractions >= c.termination_threshold {
            c.status = Status::Terminated;
        }
        let (mno, infractions, status) = (c.mno, c.infractions, c.status);
        env.pay(mno, detracted);
        env.emit(
            cell,
            events::INFRACTION,
            payload([
                ("penalty", json!(penalty)),
                ("detracted", json!(detracted)),
                ("infractions", json!(infractions)),
                ("terminated", json!(status == Status::Terminated)),
            ]),
        );
        Ok(status)
    }

    /// Terminates the agreement and refunds the unearned escrow to the MNO.
    /// A second call is a no-op returning 0.
    pub fn terminate(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
    ) -> Result<Amount, ContractError> {
        let c = self.cell_ref(cell)?;
        if env.sender() != c.mno {
            return Err(ContractError::AccessDenied);
        }
        if !c.is_active() {
            return Ok(0);
        }
        let c = self.cell_mut(cell);
        let refund = c.available();
        c.escrow -= refund;
        c.totals.refunds += refund;
        c.status = Status::Terminated;
        let (mno, credit) = (c.mno, c.accrued_credit);
        env.pay(mno, refund);
        env.emit(
            cell,
            events::TERMINATED,
            payload([
                ("refund", json!(refund)),
                ("credit_outstanding", json!(credit)),
            ]),
        );
        Ok(refund)
    }

    /// Fail-safe sweep of residual escrow on a terminated contract. With
    /// `force`, credit the SCP never withdrew is swept as well.
    pub fn recover_funds(
        &mut self,
        env: &mut CallEnv<'_>,
        cell: ContractId,
        force: bool,
    ) -> Result<Amount, ContractError> {
        let c = self.cell_ref(cell)?;
        if env.sender() != c.mno {
            return Err(ContractError::AccessDenied);
        }
        if c.is_active() {
            return Err(ContractError::NotTerminated);
        }
        let residual = if force { c.escrow } else { c.available() };
        if residual == 0 {
            return Ok(0);
        }
        let c = self.cell_mut(cell);
        c.escrow -= residual;
        if force {
            c.accrued_credit = 0;
        }
        c.totals.refunds += residual;
        c.frozen = true;
        let mno = c.mno;
        env.pay(mno, residual);
        env.emit(
            cell,
            events::RECOVERED,
            payload([("amount", json!(residual)), ("forced", json!(force))]),
        );
        Ok(residual)
    }

    pub fn dispatch(
        &mut self,
        env: &mut CallEnv<'_>,
        target: Option<ContractId>,
        call: &ContractCall,
    ) -> Result<CallOutput, ContractError> {
        let need = |t: Option<ContractId>| {
            t.ok_or_else(|| ContractError::InvalidArgument("call needs a target contract".into()))
        };
        match call {
            ContractCall::DeployMaster { plmn_id } => {
                if target.is_some() {
                    return Err(ContractError::InvalidArgument(
                        "deploy_master is a creation call".into(),
                    ));
                }
                self.deploy_master(env, *plmn_id).map(CallOutput::Contract)
            }
            ContractCall::RegisterProvider {
                scp,
                ecgi,
                price_per_kb,
                spectrum_tag,
                termination_threshold,
            } => self
                .register_provider(
                    env,
                    need(target)?,
                    *scp,
                    *ecgi,
                    *price_per_kb,
                    spectrum_tag,
                    *termination_threshold,
                )
                .map(CallOutput::Contract),
            ContractCall::DepositFunds { amount } => self
                .deposit_funds(env, need(target)?, *amount)
                .map(CallOutput::Amount),
            ContractCall::AuthorizeOracle { credential } => self
                .authorize_oracle(env, need(target)?, credential)
                .map(|()| CallOutput::Unit),
            ContractCall::ReportTraffic { credential, report } => self
                .report_traffic(env, need(target)?, credential, report)
                .map(|c| CallOutput::Amount(c.credited)),
            ContractCall::AttachmentTimeBilling {
                credential,
                ue_id,
                duration,
                rate_per_tick,
            } => self
                .attachment_time_billing(
                    env,
                    need(target)?,
                    credential,
                    ue_id,
                    *duration,
                    *rate_per_tick,
                )
                .map(|c| CallOutput::Amount(c.credited)),
            ContractCall::Withdraw => self.withdraw(env, need(target)?).map(CallOutput::Amount),
            ContractCall::RecordInfraction { penalty } => self
                .record_infraction(env, need(target)?, *penalty)
                .map(CallOutput::Status),
            ContractCall::Terminate => self.terminate(env, need(target)?).map(CallOutput::Amount),
            ContractCall::RecoverFunds { force } => self
                .recover_funds(env, need(target)?, *force)
                .map(CallOutput::Amount),
        }
    }

    pub fn total_escrow(&self) -> Amount {
        self.cells.values().map(|c| c.escrow).sum()
    }

    /// Contract state as pretty JSON with stable key order.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }
}

impl Runtime for ContractRegistry {
    type Call = ContractCall;
    type Output = CallOutput;
    type Error = ContractError;

    fn execute(
        &mut self,
        env: &mut CallEnv<'_>,
        target: Option<ContractId>,
        call: &ContractCall,
    ) -> Result<CallOutput, ContractError> {
        self.dispatch(env, target, call)
    }

    fn held_value(&self) -> Amount {
        self.total_escrow()
    }
}
