//! Independent reference models used as oracles by the integration and
//! acceptance tests. None of this calls into the code under test except to
//! drive it.

#![allow(dead_code)]

use std::collections::BTreeMap;

use neutral_host::contracts::{
    CallOutput, ContractCall, ContractError, ContractRegistry, Credential, Ecgi, TrafficReport,
};
use neutral_host::ledger::{AccountId, Amount, ContractId, Ledger, Target, Transaction, TxOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kilobytes billed for `bytes`, counted one 1024-byte chunk at a time.
pub fn brute_force_kb(bytes: u64) -> u64 {
    let mut remaining = bytes;
    let mut kb = 0;
    while remaining > 0 {
        kb += 1;
        remaining = remaining.saturating_sub(1024);
    }
    kb
}

/// Plain sequential executor for value transfers with the chain's nonce and
/// fee rules.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RefLedger {
    pub balances: BTreeMap<u64, u64>,
    pub nonces: BTreeMap<u64, u64>,
    pub fee_sink: u64,
    pub queue: Vec<(u64, u64, u64, u64, u64)>,
}

impl RefLedger {
    pub fn create(&mut self, id: u64, balance: u64) {
        self.balances.insert(id, balance);
    }

    pub fn submit(&mut self, from: u64, to: u64, value: u64, nonce: u64, fee: u64) {
        self.queue.push((from, to, value, nonce, fee));
    }

    pub fn seal(&mut self) {
        for (from, to, value, nonce, fee) in std::mem::take(&mut self.queue) {
            let last = self.nonces.get(&from).copied().unwrap_or(0);
            if nonce != last + 1 {
                continue;
            }
            if self.balances[&from] < fee {
                continue;
            }
            *self.balances.get_mut(&from).unwrap() -= fee;
            self.fee_sink += fee;
            self.nonces.insert(from, nonce);
            if self.balances[&from] >= value {
                *self.balances.get_mut(&from).unwrap() -= value;
                *self.balances.get_mut(&to).unwrap() += value;
            }
        }
    }
}

/// Operations of a random transfer workload.
#[derive(Debug, Clone)]
pub enum LedgerOp {
    Create(u64),
    Transfer {
        from: usize,
        to: usize,
        value: u64,
        nonce_skew: i8,
    },
    Seal,
}

pub fn random_ledger_ops(rng: &mut impl Rng, len: usize) -> Vec<LedgerOp> {
    let mut ops = vec![
        LedgerOp::Create(rng.random_range(0..10_000)),
        LedgerOp::Create(rng.random_range(0..10_000)),
    ];
    for _ in 0..len {
        ops.push(match rng.random_range(0..20) {
            0 => LedgerOp::Create(rng.random_range(0..10_000)),
            1..=3 => LedgerOp::Seal,
            _ => LedgerOp::Transfer {
                from: rng.random_range(0..64),
                to: rng.random_range(0..64),
                value: rng.random_range(0..6_000),
                nonce_skew: if rng.random_bool(0.1) {
                    rng.random_range(-1..=1)
                } else {
                    0
                },
            },
        });
    }
    ops.push(LedgerOp::Seal);
    ops
}

/// Drives the real ledger and the reference executor with the same workload
/// and returns whether every sealed block matched and conserved supply.
pub fn check_transfers_against_reference(ops: &[LedgerOp], fee: u64) -> Result<(), String> {
    let mut real = Ledger::new(neutral_host::ledger::NoContracts).with_fee(fee);
    let mut reference = RefLedger::default();
    let mut ids: Vec<AccountId> = Vec::new();
    let mut next_nonce: BTreeMap<u64, u64> = BTreeMap::new();
    let mut minted = 0u64;
    for op in ops {
        match op {
            LedgerOp::Create(b) => {
                let id = real.create_account(*b).map_err(|e| e.to_string())?;
                reference.create(id.0, *b);
                minted += b;
                ids.push(id);
            }
            LedgerOp::Transfer {
                from,
                to,
                value,
                nonce_skew,
            } => {
                let (from, to) = (ids[from % ids.len()], ids[to % ids.len()]);
                let n = next_nonce.entry(from.0).or_insert(1);
                let nonce = n.saturating_add_signed(*nonce_skew as i64);
                if *nonce_skew == 0 {
                    *n += 1;
                }
                let tx = Transaction {
                    sender: from,
                    target: Target::Account(to),
                    call: None,
                    value: *value,
                    nonce,
                    fee,
                };
                real.submit_transaction(tx).map_err(|e| e.to_string())?;
                reference.submit(from.0, to.0, *value, nonce, fee);
            }
            LedgerOp::Seal => {
                real.seal_block(0);
                reference.seal();
                // executed nonces may lag the submitted ones after a failure
                for (acct, n) in next_nonce.iter_mut() {
                    *n = reference.nonces.get(acct).copied().unwrap_or(0) + 1;
                }
                let balances: BTreeMap<u64, u64> = real.accounts().map(|(a, b)| (a.0, b)).collect();
                if balances != reference.balances {
                    return Err(format!("balances diverged at height {}", real.height()));
                }
                if real.fee_sink() != reference.fee_sink {
                    return Err("fee sink diverged".into());
                }
                let total: u128 =
                    balances.values().map(|b| *b as u128).sum::<u128>() + real.fee_sink() as u128;
                if total != minted as u128 {
                    return Err(format!("supply broken: {total} != {minted}"));
                }
            }
        }
    }
    real.verify_chain().map_err(|e| e.to_string())
}

/// Reference model of one cell contract's money flows.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct RefCell {
    pub escrow: u64,
    pub credit: u64,
    pub total_credited: u64,
    pub terminated: bool,
}

impl RefCell {
    pub fn deposit(&mut self, amount: u64, mno_balance: u64) -> bool {
        if self.terminated || amount > mno_balance {
            return false;
        }
        self.escrow += amount;
        true
    }

    pub fn report(&mut self, bytes: u64, price: u64) -> Option<u64> {
        if self.terminated {
            return None;
        }
        let requested = brute_force_kb(bytes) * price;
        let credited = requested.min(self.escrow - self.credit);
        self.credit += credited;
        self.total_credited += credited;
        Some(credited)
    }

    pub fn withdraw(&mut self) -> Option<u64> {
        if self.credit == 0 {
            return None;
        }
        let a = self.credit;
        self.credit = 0;
        self.escrow -= a;
        Some(a)
    }

    pub fn penalty(&mut self, p: u64) {
        let d = p.min(self.credit);
        self.credit -= d;
        self.escrow -= d;
    }
}

/// One MNO, one SCP, one oracle credential, a stranger and a registered cell.
pub struct CellHarness {
    pub ledger: Ledger<ContractRegistry>,
    pub mno: AccountId,
    pub scp: AccountId,
    pub oracle: AccountId,
    pub stranger: AccountId,
    pub master: ContractId,
    pub cell: ContractId,
    pub ecgi: Ecgi,
    pub credential: Credential,
    pub price_per_kb: Amount,
}

impl CellHarness {
    pub fn new(mno_funds: Amount, price_per_kb: Amount, threshold: Option<u32>) -> Self {
        let mut ledger = Ledger::new(ContractRegistry::new());
        let mno = ledger.create_account(mno_funds).unwrap();
        let scp = ledger.create_account(0).unwrap();
        let oracle = ledger.create_account(0).unwrap();
        let stranger = ledger.create_account(1_000).unwrap();
        let ecgi = Ecgi::new(27201, 0x1234).unwrap();
        let mut h = CellHarness {
            ledger,
            mno,
            scp,
            oracle,
            stranger,
            master: ContractId(0),
            cell: ContractId(0),
            ecgi,
            credential: Credential::new("oracle-cred"),
            price_per_kb,
        };
        h.master = h
            .exec(mno, None, ContractCall::DeployMaster { plmn_id: 27201 })
            .unwrap()
            .contract()
            .unwrap();
        let reg = ContractCall::RegisterProvider {
            scp,
            ecgi,
            price_per_kb,
            spectrum_tag: "GAA".into(),
            termination_threshold: threshold,
        };
        h.cell = h
            .exec(mno, Some(h.master), reg)
            .unwrap()
            .contract()
            .unwrap();
        let auth = ContractCall::AuthorizeOracle {
            credential: h.credential.clone(),
        };
        h.exec(mno, Some(h.cell), auth).unwrap();
        h
    }

    /// Submits one call, seals and returns its outcome.
    pub fn exec(
        &mut self,
        sender: AccountId,
        target: Option<ContractId>,
        call: ContractCall,
    ) -> Result<CallOutput, String> {
        let tx = self.ledger.call(sender, target, call).unwrap();
        self.ledger.seal_block(self.ledger.height());
        match &self.ledger.receipt(tx).unwrap().outcome {
            TxOutcome::Success { output } => Ok(*output),
            TxOutcome::Failed { reason } => Err(reason.to_string()),
            TxOutcome::Transferred => Err("unexpected transfer".into()),
        }
    }

    pub fn report_call(&self, credential: &Credential, bytes: u64) -> ContractCall {
        ContractCall::ReportTraffic {
            credential: credential.clone(),
            report: TrafficReport {
                ecgi: self.ecgi,
                ue_id: "ue".into(),
                session_start: 0,
                session_end: 1,
                bytes_served: bytes,
            },
        }
    }

    pub fn balance(&self, a: AccountId) -> Amount {
        self.ledger.get_balance(a).unwrap()
    }

    /// Balances and contract state, serialized; used for bit-identical checks.
    pub fn state_bytes(&self) -> Vec<u8> {
        let balances: Vec<(AccountId, Amount)> = self.ledger.accounts().collect();
        serde_json::to_vec(&(balances, self.ledger.runtime())).unwrap()
    }
}

pub fn contract_error_text(e: ContractError) -> String {
    format!("contract error: {e}")
}

/// Random billing workload on one cell, checked call by call against
/// [`RefCell`]. Returns (real total credited, oracle total credited).
pub fn billing_trial(seed: u64, steps: usize) -> Result<(u64, u64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let price = rng.random_range(0..8);
    let mut h = CellHarness::new(rng.random_range(0..200_000), price, Some(u32::MAX));
    let mut model = RefCell::default();
    for _ in 0..steps {
        match rng.random_range(0..10) {
            0..=1 => {
                let amount = rng.random_range(0..40_000);
                let ok = model.deposit(amount, h.balance(h.mno));
                let got = h.exec(h.mno, Some(h.cell), ContractCall::DepositFunds { amount });
                if got.is_ok() != ok {
                    return Err(format!("deposit {amount}: real {got:?}, oracle {ok}"));
                }
            }
            2..=7 => {
                let bytes = match rng.random_range(0..4) {
                    0 => rng.random_range(0..3),
                    1 => 1024 * rng.random_range(0..50) + rng.random_range(0..2),
                    _ => rng.random_range(0..5_000_000),
                };
                let expected = model.report(bytes, price);
                let call = h.report_call(&h.credential.clone(), bytes);
                let got = h
                    .exec(h.oracle, Some(h.cell), call)
                    .ok()
                    .and_then(|o| o.amount());
                if got != expected {
                    return Err(format!(
                        "report {bytes} B: real {got:?}, oracle {expected:?}"
                    ));
                }
            }
            8 => {
                let expected = model.withdraw();
                let got = h
                    .exec(h.scp, Some(h.cell), ContractCall::Withdraw)
                    .ok()
                    .and_then(|o| o.amount());
                if got != expected {
                    return Err(format!("withdraw: real {got:?}, oracle {expected:?}"));
                }
            }
            _ => {
                let p = rng.random_range(0..5_000);
                model.penalty(p);
                h.exec(
                    h.mno,
                    Some(h.cell),
                    ContractCall::RecordInfraction { penalty: p },
                )
                .map_err(|e| format!("infraction: {e}"))?;
            }
        }
        let c = h.ledger.runtime().cell(h.cell).unwrap();
        if (c.escrow, c.accrued_credit) != (model.escrow, model.credit) {
            return Err(format!(
                "state diverged: real ({}, {}), oracle ({}, {})",
                c.escrow, c.accrued_credit, model.escrow, model.credit
            ));
        }
    }
    let real = h.ledger.runtime().cell(h.cell).unwrap().totals.credited;
    Ok((real, model.total_credited))
}

/// Money-flow identities over a finished simulation:
/// all endowments = all balances + escrow + fee sink;
/// MNO endowments = MNO balances + withdrawals + escrow + MNO fees;
/// SCP balances = SCP endowments + withdrawals - SCP fees.
pub fn check_e2e_conservation(
    trace: &neutral_host::agents::SimTrace,
    ledger: &neutral_host::agents::ChainLedger,
) -> Result<(), String> {
    use neutral_host::agents::ActorKind;
    let fees_by = |role: ActorKind| -> u128 {
        let ids: std::collections::BTreeSet<AccountId> = trace
            .accounts
            .iter()
            .filter(|a| a.role == role)
            .map(|a| a.account)
            .collect();
        ledger
            .chain()
            .iter()
            .flat_map(|b| b.transactions.iter().zip(&b.receipts))
            .filter(|(t, _)| ids.contains(&t.tx.sender))
            .map(|(_, r)| r.fee_paid as u128)
            .sum()
    };
    let sum = |role: Option<ActorKind>, f: fn(&neutral_host::agents::AccountInfo) -> u64| -> u128 {
        trace
            .accounts
            .iter()
            .filter(|a| role.is_none_or(|r| a.role == r))
            .map(|a| f(a) as u128)
            .sum()
    };
    let escrow: u128 = ledger
        .runtime()
        .cells
        .values()
        .map(|c| c.escrow as u128)
        .sum();
    let withdrawn: u128 = trace.summary.iter().map(|c| c.withdrawn as u128).sum();
    let fee_sink = ledger.fee_sink() as u128;

    let endowed = sum(None, |a| a.endowment);
    let held = sum(None, |a| a.final_balance) + escrow + fee_sink;
    if endowed != held {
        return Err(format!("global: endowed {endowed} != held {held}"));
    }
    let mno_in = sum(Some(ActorKind::Mno), |a| a.endowment);
    let mno_out = sum(Some(ActorKind::Mno), |a| a.final_balance)
        + withdrawn
        + escrow
        + fees_by(ActorKind::Mno);
    if mno_in != mno_out {
        return Err(format!("MNO identity: {mno_in} != {mno_out}"));
    }
    let scp_final = sum(Some(ActorKind::Scp), |a| a.final_balance);
    let scp_expected =
        sum(Some(ActorKind::Scp), |a| a.endowment) + withdrawn - fees_by(ActorKind::Scp);
    if scp_final != scp_expected {
        return Err(format!("SCP identity: {scp_final} != {scp_expected}"));
    }
    if !ledger.supply_holds() {
        return Err("ledger supply invariant".into());
    }
    Ok(())
}

/// Two masters, four cell contracts, each MNO registered on both SCP cells
/// under its own PLMN.
pub fn check_two_operator_topology(sim: &neutral_host::agents::Simulation) -> Result<(), String> {
    let reg = sim.ledger().runtime();
    if reg.masters.len() != 2 || reg.cells.len() != 4 {
        return Err(format!(
            "{} masters, {} cells",
            reg.masters.len(),
            reg.cells.len()
        ));
    }
    for mno in ["lilac", "green"] {
        let spec = sim
            .scenario()
            .mnos
            .iter()
            .find(|m| m.name == mno)
            .ok_or("missing MNO")?;
        let master_id = sim.master_of(mno).ok_or("no master")?;
        let master = reg.master(master_id).ok_or("master not deployed")?;
        if master.registry.len() != 2 {
            return Err(format!(
                "{mno} registry has {} entries",
                master.registry.len()
            ));
        }
        for (scp, cell_name) in [("blue", "blue-cell"), ("red", "red-cell")] {
            let id = sim.contract_for(mno, cell_name).ok_or("no contract")?;
            let cell = reg.cell(id).ok_or("not a cell")?;
            let cell_spec = sim.scenario().cell(cell_name).ok_or("no cell spec")?;
            let scp_account = sim.account_of(scp).ok_or("no scp account")?;
            let mno_account = sim.account_of(mno).ok_or("no mno account")?;
            if cell.master != master_id
                || cell.mno != mno_account
                || master.owner_mno != mno_account
                || cell.scp != scp_account
                || cell.ecgi.plmn_id != spec.plmn_id
                || cell.ecgi.cell_id != cell_spec.cell_id
                || master.registry.get(&cell.ecgi) != Some(&id)
            {
                return Err(format!("{mno}/{cell_name} wired wrongly: {cell:?}"));
            }
        }
    }
    Ok(())
}
