//! Minimal deterministic chain: accounts, value transfers, contract calls
//! executed in block order, a digest-linked list of sealed blocks and an
//! append-only event log.
//!
//! There is a single sequencer. Transactions are queued by
//! [`Ledger::submit_transaction`] and only take effect when
//! [`Ledger::seal_block`] runs them in FIFO order. Contract logic is plugged
//! in through the [`Runtime`] trait so the chain itself knows nothing about
//! what the contracts do; it only enforces nonces, fees and conservation of
//! value.
//!
//! Execution rules for a queued transaction, in order:
//!
//! 1. the nonce must equal the sender's last executed nonce + 1, otherwise the
//!    transaction fails without charge and the nonce is not consumed;
//! 2. the sender must be able to pay the fee, otherwise it fails without
//!    charge and the nonce is not consumed;
//! 3. the fee moves to the fee sink and the nonce is consumed;
//! 4. the body runs (transfer or contract call). A failing body keeps the fee
//!    and transfers nothing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Currency in integer micro-units.
pub type Amount = u64;

/// Simulation clock.
pub type Tick = u64;

/// Key/value payload carried by an event.
pub type Payload = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acct-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(pub u64);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "contract-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

/// SHA-256 digest, hex encoded when serialized.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(Digest(arr))
    }
}

/// What a transaction is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Plain value transfer.
    Account(AccountId),
    /// Call into an existing contract.
    Contract(ContractId),
    /// Contract creation; the runtime allocates the id.
    Create,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction<C> {
    pub sender: AccountId,
    pub target: Target,
    pub call: Option<C>,
    pub value: Amount,
    pub nonce: u64,
    pub fee: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    BadNonce { expected: u64, got: u64 },
    InsufficientFee,
    InsufficientFunds,
    Contract { error: String },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::BadNonce { expected, got } => {
                write!(f, "bad nonce: expected {expected}, got {got}")
            }
            FailureReason::InsufficientFee => f.write_str("insufficient balance for fee"),
            FailureReason::InsufficientFunds => f.write_str("insufficient funds"),
            FailureReason::Contract { error } => write!(f, "contract error: {error}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxOutcome<O> {
    Transferred,
    Success { output: O },
    Failed { reason: FailureReason },
}

impl<O> TxOutcome<O> {
    pub fn is_success(&self) -> bool {
        !matches!(self, TxOutcome::Failed { .. })
    }

    pub fn output(&self) -> Option<&O> {
        match self {
            TxOutcome::Success { output } => Some(output),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt<O> {
    pub tx_id: TxId,
    pub fee_paid: Amount,
    pub outcome: TxOutcome<O>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Emitting contract, `None` for ledger-level events such as `TxFailed`.
    pub contract: Option<ContractId>,
    pub name: String,
    pub payload: Payload,
    pub block_height: u64,
    pub index_in_block: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealedTx<C> {
    pub tx_id: TxId,
    #[serde(flatten)]
    pub tx: Transaction<C>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block<C, O> {
    pub height: u64,
    pub parent_digest: Digest,
    pub timestamp: Tick,
    pub transactions: Vec<SealedTx<C>>,
    pub receipts: Vec<Receipt<O>>,
    pub events: Vec<EventRecord>,
    pub digest: Digest,
}

#[derive(Serialize)]
struct BlockBody<'a, C, O> {
    height: u64,
    parent_digest: &'a Digest,
    timestamp: Tick,
    transactions: &'a [SealedTx<C>],
    receipts: &'a [Receipt<O>],
    events: &'a [EventRecord],
}

impl<C: Serialize, O: Serialize> Block<C, O> {
    /// Digest over every field except `digest` itself.
    pub fn compute_digest(&self) -> Digest {
        let body = BlockBody {
            height: self.height,
            parent_digest: &self.parent_digest,
            timestamp: self.timestamp,
            transactions: &self.transactions,
            receipts: &self.receipts,
            events: &self.events,
        };
        Digest::of(&serde_json::to_vec(&body).expect("block body serializes"))
    }
}

type Emitted = (ContractId, String, Payload);

/// Side effects a contract call asks the ledger to apply. Buffered so a
/// failing call leaves balances and the event log untouched.
#[derive(Debug)]
pub struct CallEnv<'a> {
    balances: &'a BTreeMap<AccountId, Amount>,
    sender: AccountId,
    now: Tick,
    taken: Amount,
    payouts: Vec<(AccountId, Amount)>,
    events: Vec<(ContractId, String, Payload)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sender balance {available} cannot cover {requested}")]
pub struct Shortfall {
    pub available: Amount,
    pub requested: Amount,
}

impl<'a> CallEnv<'a> {
    pub fn new(balances: &'a BTreeMap<AccountId, Amount>, sender: AccountId, now: Tick) -> Self {
        CallEnv {
            balances,
            sender,
            now,
            taken: 0,
            payouts: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn sender(&self) -> AccountId {
        self.sender
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn account_exists(&self, account: AccountId) -> bool {
        self.balances.contains_key(&account)
    }

    /// Sender balance net of what this call has already taken.
    pub fn sender_balance(&self) -> Amount {
        self.balances.get(&self.sender).copied().unwrap_or(0) - self.taken
    }

    /// Moves `amount` from the sender into contract custody.
    pub fn take_from_sender(&mut self, amount: Amount) -> Result<(), Shortfall> {
        let available = self.sender_balance();
        if amount > available {
            return Err(Shortfall {
                available,
                requested: amount,
            });
        }
        self.taken += amount;
        Ok(())
    }

    /// Releases `amount` from contract custody to `to`.
    pub fn pay(&mut self, to: AccountId, amount: Amount) {
        if amount > 0 {
            self.payouts.push((to, amount));
        }
    }

    pub fn emit(&mut self, contract: ContractId, name: &str, payload: Payload) {
        self.events.push((contract, name.to_owned(), payload));
    }

    pub fn taken(&self) -> Amount {
        self.taken
    }

    pub fn payouts(&self) -> &[(AccountId, Amount)] {
        &self.payouts
    }

    pub fn emitted(&self) -> &[(ContractId, String, Payload)] {
        &self.events
    }

    fn into_effects(self) -> Effects {
        Effects {
            taken: self.taken,
            payouts: self.payouts,
            events: self.events,
        }
    }
}

struct Effects {
    taken: Amount,
    payouts: Vec<(AccountId, Amount)>,
    events: Vec<(ContractId, String, Payload)>,
}

/// Contract execution engine hosted by a [`Ledger`].
///
/// Implementations must be atomic: when `execute` returns `Err`, the runtime
/// state must be exactly what it was before the call.
pub trait Runtime {
    type Call: Clone + fmt::Debug + Serialize;
    type Output: Clone + fmt::Debug + Serialize;
    type Error: std::error::Error;

    fn execute(
        &mut self,
        env: &mut CallEnv<'_>,
        target: Option<ContractId>,
        call: &Self::Call,
    ) -> Result<Self::Output, Self::Error>;

    /// Value currently held in contract custody.
    fn held_value(&self) -> Amount;
}

/// Runtime for a chain that only moves value.
#[derive(Debug, Clone, Default, Serialize)]
pub struct NoContracts;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NoCall {}

#[derive(Debug, Error)]
#[error("this ledger hosts no contracts")]
pub struct NoContractsError;

impl Runtime for NoContracts {
    type Call = NoCall;
    type Output = ();
    type Error = NoContractsError;

    fn execute(
        &mut self,
        _env: &mut CallEnv<'_>,
        _target: Option<ContractId>,
        call: &NoCall,
    ) -> Result<(), NoContractsError> {
        match *call {}
    }

    fn held_value(&self) -> Amount {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("supply overflow")]
    SupplyOverflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("block at position {index} has height {height}")]
    Height { index: usize, height: u64 },
    #[error("block {height} does not link to its parent")]
    BrokenLink { height: u64 },
    #[error("block {height} digest does not match its contents")]
    Tampered { height: u64 },
}

/// Which events a subscriber wants. Empty fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventFilter {
    pub contract: Option<ContractId>,
    pub name: Option<String>,
}

impl EventFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn contract(contract: ContractId) -> Self {
        EventFilter {
            contract: Some(contract),
            name: None,
        }
    }

    pub fn named(name: impl Into<String>) -> Self {
        EventFilter {
            contract: None,
            name: Some(name.into()),
        }
    }

    pub fn and_named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn matches(&self, ev: &EventRecord) -> bool {
        self.contract.is_none_or(|c| ev.contract == Some(c))
            && self.name.as_deref().is_none_or(|n| ev.name == n)
    }
}

/// Cursor over the sealed event log. Each matching record is delivered once.
#[derive(Debug, Clone)]
pub struct Subscription {
    filter: EventFilter,
    cursor: usize,
}

impl Subscription {
    pub fn poll<R: Runtime>(&mut self, ledger: &Ledger<R>) -> Vec<EventRecord> {
        let fresh = &ledger.events[self.cursor..];
        self.cursor = ledger.events.len();
        fresh
            .iter()
            .filter(|ev| self.filter.matches(ev))
            .cloned()
            .collect()
    }
}

/// Read-only view of ledger state, stable field order for golden files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot<S> {
    pub height: u64,
    pub head_digest: Digest,
    pub minted: Amount,
    pub fee_sink: Amount,
    pub balances: BTreeMap<AccountId, Amount>,
    pub contracts: S,
}

pub struct Ledger<R: Runtime> {
    runtime: R,
    balances: BTreeMap<AccountId, Amount>,
    executed_nonce: BTreeMap<AccountId, u64>,
    pending: Vec<(TxId, Transaction<R::Call>)>,
    pending_per_sender: BTreeMap<AccountId, u64>,
    chain: Vec<Block<R::Call, R::Output>>,
    events: Vec<EventRecord>,
    receipts: HashMap<TxId, (u64, usize)>,
    fee_sink: Amount,
    minted: Amount,
    default_fee: Amount,
    next_account: u64,
    next_tx: u64,
}

impl<R: Runtime + Default> Default for Ledger<R> {
    fn default() -> Self {
        Self::new(R::default())
    }
}

impl<R: Runtime> Ledger<R> {
    pub fn new(runtime: R) -> Self {
        Ledger {
            runtime,
            balances: BTreeMap::new(),
            executed_nonce: BTreeMap::new(),
            pending: Vec::new(),
            pending_per_sender: BTreeMap::new(),
            chain: Vec::new(),
            events: Vec::new(),
            receipts: HashMap::new(),
            fee_sink: 0,
            minted: 0,
            default_fee: 0,
            next_account: 1,
            next_tx: 1,
        }
    }

    pub fn with_fee(mut self, fee: Amount) -> Self {
        self.default_fee = fee;
        self
    }

    pub fn default_fee(&self) -> Amount {
        self.default_fee
    }

    /// The only way value enters the system.
    pub fn create_account(&mut self, initial_balance: Amount) -> Result<AccountId, LedgerError> {
        self.minted = self
            .minted
            .checked_add(initial_balance)
            .ok_or(LedgerError::SupplyOverflow)?;
        let id = AccountId(self.next_account);
        self.next_account += 1;
        self.balances.insert(id, initial_balance);
        Ok(id)
    }

    pub fn get_balance(&self, account: AccountId) -> Result<Amount, LedgerError> {
        self.balances
            .get(&account)
            .copied()
            .ok_or(LedgerError::UnknownAccount(account))
    }

    pub fn accounts(&self) -> impl Iterator<Item = (AccountId, Amount)> + '_ {
        self.balances.iter().map(|(a, b)| (*a, *b))
    }

    /// Nonce the next submission from `sender` should carry, counting queued
    /// transactions.
    pub fn next_nonce(&self, sender: AccountId) -> u64 {
        self.executed_nonce.get(&sender).copied().unwrap_or(0)
            + self.pending_per_sender.get(&sender).copied().unwrap_or(0)
            + 1
    }

    pub fn submit_transaction(&mut self, tx: Transaction<R::Call>) -> Result<TxId, LedgerError> {
        if !self.balances.contains_key(&tx.sender) {
            return Err(LedgerError::UnknownAccount(tx.sender));
        }
        match (&tx.target, &tx.call) {
            (Target::Account(to), None) => {
                if !self.balances.contains_key(to) {
                    return Err(LedgerError::Malformed(format!("unknown recipient {to}")));
                }
            }
            (Target::Account(_), Some(_)) => {
                return Err(LedgerError::Malformed(
                    "transfer must not carry a call".into(),
                ))
            }
            (Target::Contract(_) | Target::Create, None) => {
                return Err(LedgerError::Malformed(
                    "contract call without payload".into(),
                ))
            }
            (Target::Contract(_) | Target::Create, Some(_)) => {
                if tx.value != 0 {
                    return Err(LedgerError::Malformed(
                        "contract calls carry no value; amounts go in the call".into(),
                    ));
                }
            }
        }
        let id = TxId(self.next_tx);
        self.next_tx += 1;
        *self.pending_per_sender.entry(tx.sender).or_default() += 1;
        self.pending.push((id, tx));
        Ok(id)
    }

    /// Queues a transfer with the next nonce and the default fee.
    pub fn transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        value: Amount,
    ) -> Result<TxId, LedgerError> {
        let tx = Transaction {
            sender: from,
            target: Target::Account(to),
            call: None,
            value,
            nonce: self.next_nonce(from),
            fee: self.default_fee,
        };
        self.submit_transaction(tx)
    }

    /// Queues a contract call (or creation when `contract` is `None`) with the
    /// next nonce and the default fee.
    pub fn call(
        &mut self,
        sender: AccountId,
        contract: Option<ContractId>,
        call: R::Call,
    ) -> Result<TxId, LedgerError> {
        let tx = Transaction {
            sender,
            target: contract.map_or(Target::Create, Target::Contract),
            call: Some(call),
            value: 0,
            nonce: self.next_nonce(sender),
            fee: self.default_fee,
        };
        self.submit_transaction(tx)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Executes the queue in FIFO order and appends the resulting block.
    pub fn seal_block(&mut self, now: Tick) -> &Block<R::Call, R::Output> {
        let height = self.chain.len() as u64;
        let parent_digest = self.chain.last().map(|b| b.digest).unwrap_or_default();
        let queue = std::mem::take(&mut self.pending);
        self.pending_per_sender.clear();

        let mut transactions = Vec::with_capacity(queue.len());
        let mut receipts = Vec::with_capacity(queue.len());
        let mut events = Vec::new();

        for (tx_id, tx) in queue {
            let (fee_paid, outcome, emitted) = self.execute(&tx, now);
            match &outcome {
                TxOutcome::Failed { reason } => {
                    let mut payload = Payload::new();
                    payload.insert("tx_id".into(), tx_id.0.into());
                    payload.insert("sender".into(), tx.sender.0.into());
                    payload.insert("reason".into(), reason.to_string().into());
                    events.push(self.record(None, "TxFailed", payload, height, events.len()));
                }
                TxOutcome::Success { .. } | TxOutcome::Transferred => {
                    for (contract, name, payload) in emitted {
                        events.push(self.record(
                            Some(contract),
                            &name,
                            payload,
                            height,
                            events.len(),
                        ));
                    }
                }
            }
            self.receipts.insert(tx_id, (height, receipts.len()));
            receipts.push(Receipt {
                tx_id,
                fee_paid,
                outcome,
            });
            transactions.push(SealedTx { tx_id, tx });
        }

        let mut block = Block {
            height,
            parent_digest,
            timestamp: now,
            transactions,
            receipts,
            events,
            digest: Digest::default(),
        };
        block.digest = block.compute_digest();
        self.events.extend(block.events.iter().cloned());
        self.chain.push(block);
        debug_assert!(
            self.supply_holds(),
            "supply invariant broken at height {height}"
        );
        self.chain.last().expect("just pushed")
    }

    fn record(
        &self,
        contract: Option<ContractId>,
        name: &str,
        payload: Payload,
        height: u64,
        index: usize,
    ) -> EventRecord {
        EventRecord {
            contract,
            name: name.to_owned(),
            payload,
            block_height: height,
            index_in_block: index as u32,
        }
    }

    fn execute(
        &mut self,
        tx: &Transaction<R::Call>,
        now: Tick,
    ) -> (Amount, TxOutcome<R::Output>, Vec<Emitted>) {
        let fail = |reason| TxOutcome::Failed { reason };
        let expected = self.executed_nonce.get(&tx.sender).copied().unwrap_or(0) + 1;
        if tx.nonce != expected {
            let reason = FailureReason::BadNonce {
                expected,
                got: tx.nonce,
            };
            return (0, fail(reason), Vec::new());
        }
        let balance = self.balances[&tx.sender];
        if balance < tx.fee {
            return (0, fail(FailureReason::InsufficientFee), Vec::new());
        }
        *self.balances.get_mut(&tx.sender).expect("sender exists") -= tx.fee;
        self.fee_sink += tx.fee;
        self.executed_nonce.insert(tx.sender, tx.nonce);

        match (&tx.target, &tx.call) {
            (Target::Account(to), _) => {
                let balance = self.balances[&tx.sender];
                if tx.value > balance {
                    return (tx.fee, fail(FailureReason::InsufficientFunds), Vec::new());
                }
                *self.balances.get_mut(&tx.sender).expect("sender exists") -= tx.value;
                *self
                    .balances
                    .get_mut(to)
                    .expect("recipient checked on submit") += tx.value;
                (tx.fee, TxOutcome::Transferred, Vec::new())
            }
            (target, Some(call)) => {
                let contract = match target {
                    Target::Contract(c) => Some(*c),
                    _ => None,
                };
                let mut env = CallEnv::new(&self.balances, tx.sender, now);
                match self.runtime.execute(&mut env, contract, call) {
                    Ok(output) => {
                        let effects = env.into_effects();
                        self.apply(tx.sender, &effects);
                        (tx.fee, TxOutcome::Success { output }, effects.events)
                    }
                    Err(e) => {
                        let reason = FailureReason::Contract {
                            error: e.to_string(),
                        };
                        (tx.fee, fail(reason), Vec::new())
                    }
                }
            }
            (_, None) => unreachable!("rejected on submit"),
        }
    }

    fn apply(&mut self, sender: AccountId, effects: &Effects) {
        *self.balances.get_mut(&sender).expect("sender exists") -= effects.taken;
        for (to, amount) in &effects.payouts {
            *self.balances.entry(*to).or_default() += amount;
        }
    }

    /// `minted == balances + contract custody + fee sink`.
    pub fn supply_holds(&self) -> bool {
        let balances: u128 = self.balances.values().map(|b| *b as u128).sum();
        balances + self.runtime.held_value() as u128 + self.fee_sink as u128 == self.minted as u128
    }

    pub fn minted(&self) -> Amount {
        self.minted
    }

    pub fn fee_sink(&self) -> Amount {
        self.fee_sink
    }

    pub fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn chain(&self) -> &[Block<R::Call, R::Output>] {
        &self.chain
    }

    pub fn head_digest(&self) -> Digest {
        self.chain.last().map(|b| b.digest).unwrap_or_default()
    }

    pub fn runtime(&self) -> &R {
        &self.runtime
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn events_matching(&self, filter: EventFilter) -> impl Iterator<Item = &EventRecord> + '_ {
        self.events.iter().filter(move |ev| filter.matches(ev))
    }

    /// Starts a subscription at the beginning of the log.
    pub fn subscribe_events(&self, filter: EventFilter) -> Subscription {
        Subscription { filter, cursor: 0 }
    }

    pub fn receipt(&self, tx: TxId) -> Option<&Receipt<R::Output>> {
        let (height, idx) = self.receipts.get(&tx)?;
        self.chain.get(*height as usize)?.receipts.get(*idx)
    }

    /// Recomputes every digest and parent link from genesis.
    pub fn verify_chain(&self) -> Result<(), ChainError> {
        let mut parent = Digest::default();
        for (index, block) in self.chain.iter().enumerate() {
            if block.height != index as u64 {
                return Err(ChainError::Height {
                    index,
                    height: block.height,
                });
            }
            if block.parent_digest != parent {
                return Err(ChainError::BrokenLink {
                    height: block.height,
                });
            }
            if block.compute_digest() != block.digest {
                return Err(ChainError::Tampered {
                    height: block.height,
                });
            }
            parent = block.digest;
        }
        Ok(())
    }

    /// One JSON object per block, one block per line.
    pub fn write_chain_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for block in &self.chain {
            serde_json::to_writer(&mut out, block)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Accounts that have executed at least one transaction.
    pub fn active_senders(&self) -> BTreeSet<AccountId> {
        self.executed_nonce.keys().copied().collect()
    }

    pub fn executed_nonce(&self, account: AccountId) -> u64 {
        self.executed_nonce.get(&account).copied().unwrap_or(0)
    }
}

impl<R: Runtime + Clone> Ledger<R> {
    pub fn snapshot(&self) -> LedgerSnapshot<R> {
        LedgerSnapshot {
            height: self.height(),
            head_digest: self.head_digest(),
            minted: self.minted,
            fee_sink: self.fee_sink,
            balances: self.balances.clone(),
            contracts: self.runtime.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Holds deposits and emits one event per call.
    #[derive(Debug, Clone, Default)]
    struct Vault {
        held: Amount,
    }

    #[derive(Debug, Clone, Serialize)]
    enum VaultCall {
        Put(Amount),
        Fail,
    }

    #[derive(Debug, Error)]
    #[error("refused")]
    struct Refused;

    impl Runtime for Vault {
        type Call = VaultCall;
        type Output = Amount;
        type Error = Refused;

        fn execute(
            &mut self,
            env: &mut CallEnv<'_>,
            target: Option<ContractId>,
            call: &VaultCall,
        ) -> Result<Amount, Refused> {
            match call {
                VaultCall::Put(n) => {
                    env.take_from_sender(*n).map_err(|_| Refused)?;
                    self.held += n;
                    let mut p = Payload::new();
                    p.insert("amount".into(), (*n).into());
                    env.emit(target.unwrap_or(ContractId(0)), "Put", p);
                    Ok(self.held)
                }
                VaultCall::Fail => Err(Refused),
            }
        }

        fn held_value(&self) -> Amount {
            self.held
        }
    }

    fn plain() -> Ledger<NoContracts> {
        Ledger::new(NoContracts)
    }

    #[test]
    fn accounts_read_back_and_are_distinct() {
        let mut l = plain();
        let a = l.create_account(0).unwrap();
        let b = l.create_account(10_000).unwrap();
        assert_ne!(a, b);
        assert_eq!(l.get_balance(a), Ok(0));
        assert_eq!(l.get_balance(b), Ok(10_000));
        assert_eq!(l.minted(), 10_000);
        assert_eq!(
            l.get_balance(AccountId(99)),
            Err(LedgerError::UnknownAccount(AccountId(99)))
        );
    }

    #[test]
    fn minting_overflow_is_rejected() {
        let mut l = plain();
        l.create_account(u64::MAX).unwrap();
        assert_eq!(l.create_account(1), Err(LedgerError::SupplyOverflow));
    }

    #[test]
    fn execution_waits_for_seal() {
        let mut l = plain();
        let a = l.create_account(100).unwrap();
        let b = l.create_account(0).unwrap();
        l.transfer(a, b, 40).unwrap();
        l.transfer(a, b, 10).unwrap();
        assert_eq!(l.pending(), 2);
        assert_eq!(l.get_balance(a), Ok(100));
        let block = l.seal_block(10);
        assert_eq!(block.transactions.len(), 2);
        assert_eq!(block.transactions[1].tx.nonce, 2);
        assert_eq!(l.get_balance(a), Ok(50));
        assert_eq!(l.get_balance(b), Ok(50));
    }

    #[test]
    fn empty_seal_advances_height() {
        let mut l = plain();
        l.seal_block(0);
        let b = l.seal_block(10);
        assert_eq!(b.height, 1);
        assert!(b.transactions.is_empty());
        assert_eq!(l.height(), 2);
        assert_eq!(l.chain()[1].parent_digest, l.chain()[0].digest);
    }

    #[test]
    fn zero_transfer_only_costs_the_fee() {
        let mut l = plain().with_fee(3);
        let a = l.create_account(100).unwrap();
        let b = l.create_account(7).unwrap();
        let tx = l.transfer(a, b, 0).unwrap();
        l.seal_block(1);
        assert_eq!(l.get_balance(a), Ok(97));
        assert_eq!(l.get_balance(b), Ok(7));
        assert_eq!(l.fee_sink(), 3);
        assert_eq!(l.receipt(tx).unwrap().outcome, TxOutcome::Transferred);
        assert!(l.supply_holds());
    }

    #[test]
    fn nonce_gap_fails_without_charge_or_consumption() {
        let mut l = plain().with_fee(1);
        let a = l.create_account(100).unwrap();
        let b = l.create_account(0).unwrap();
        let gap = Transaction {
            sender: a,
            target: Target::Account(b),
            call: None,
            value: 5,
            nonce: 2,
            fee: 1,
        };
        let bad = l.submit_transaction(gap).unwrap();
        l.seal_block(1);
        assert_eq!(
            l.receipt(bad).unwrap().outcome,
            TxOutcome::Failed {
                reason: FailureReason::BadNonce {
                    expected: 1,
                    got: 2
                }
            }
        );
        assert_eq!(l.get_balance(a), Ok(100));
        assert_eq!(l.executed_nonce(a), 0);
        let failed: Vec<_> = l.events_matching(EventFilter::named("TxFailed")).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].contract, None);

        l.transfer(a, b, 5).unwrap();
        l.seal_block(2);
        assert_eq!(l.get_balance(b), Ok(5));
        assert_eq!(l.executed_nonce(a), 1);
    }

    #[test]
    fn overdraft_keeps_fee_and_moves_nothing() {
        let mut l = plain().with_fee(2);
        let a = l.create_account(10).unwrap();
        let b = l.create_account(0).unwrap();
        let tx = l.transfer(a, b, 9).unwrap();
        l.seal_block(1);
        assert_eq!(
            l.receipt(tx).unwrap().outcome,
            TxOutcome::Failed {
                reason: FailureReason::InsufficientFunds
            }
        );
        assert_eq!(l.get_balance(a), Ok(8));
        assert_eq!(l.get_balance(b), Ok(0));
        assert_eq!(l.executed_nonce(a), 1);
        assert!(l.supply_holds());
    }

    #[test]
    fn fee_larger_than_balance_is_not_charged() {
        let mut l = plain().with_fee(5);
        let a = l.create_account(4).unwrap();
        let b = l.create_account(0).unwrap();
        let tx = l.transfer(a, b, 0).unwrap();
        l.seal_block(1);
        assert_eq!(l.receipt(tx).unwrap().fee_paid, 0);
        assert_eq!(l.get_balance(a), Ok(4));
        assert_eq!(l.executed_nonce(a), 0);
    }

    #[test]
    fn malformed_submissions_are_rejected() {
        let mut l: Ledger<Vault> = Ledger::default();
        let a = l.create_account(10).unwrap();
        let bad_recipient = Transaction {
            sender: a,
            target: Target::Account(AccountId(42)),
            call: None,
            value: 1,
            nonce: 1,
            fee: 0,
        };
        assert!(matches!(
            l.submit_transaction(bad_recipient),
            Err(LedgerError::Malformed(_))
        ));
        let with_value = Transaction {
            sender: a,
            target: Target::Contract(ContractId(1)),
            call: Some(VaultCall::Put(1)),
            value: 1,
            nonce: 1,
            fee: 0,
        };
        assert!(matches!(
            l.submit_transaction(with_value),
            Err(LedgerError::Malformed(_))
        ));
        let no_call = Transaction {
            sender: a,
            target: Target::Create,
            call: None,
            value: 0,
            nonce: 1,
            fee: 0,
        };
        assert!(matches!(
            l.submit_transaction(no_call),
            Err(LedgerError::Malformed(_))
        ));
        let stranger = Transaction {
            sender: AccountId(7),
            target: Target::Account(a),
            call: None,
            value: 0,
            nonce: 1,
            fee: 0,
        };
        assert_eq!(
            l.submit_transaction(stranger),
            Err(LedgerError::UnknownAccount(AccountId(7)))
        );
        assert_eq!(l.pending(), 0);
    }

    #[test]
    fn contract_custody_counts_toward_supply() {
        let mut l: Ledger<Vault> = Ledger::new(Vault::default()).with_fee(1);
        let a = l.create_account(100).unwrap();
        let ok = l.call(a, Some(ContractId(1)), VaultCall::Put(30)).unwrap();
        let bad = l.call(a, Some(ContractId(1)), VaultCall::Fail).unwrap();
        l.seal_block(1);
        assert_eq!(l.receipt(ok).unwrap().outcome.output(), Some(&30));
        assert!(!l.receipt(bad).unwrap().outcome.is_success());
        assert_eq!(l.get_balance(a), Ok(68));
        assert_eq!(l.runtime().held, 30);
        assert_eq!(l.fee_sink(), 2);
        assert!(l.supply_holds());
    }

    #[test]
    fn subscriptions_deliver_each_match_once() {
        let mut l: Ledger<Vault> = Ledger::default();
        let a = l.create_account(100).unwrap();
        let mut sub = l.subscribe_events(EventFilter::contract(ContractId(2)));
        assert!(sub.poll(&l).is_empty());

        for (c, n) in [(1, 1), (2, 2), (1, 3), (2, 4)] {
            l.call(a, Some(ContractId(c)), VaultCall::Put(n)).unwrap();
        }
        l.seal_block(1);
        let got = sub.poll(&l);
        let amounts: Vec<_> = got
            .iter()
            .map(|e| e.payload["amount"].as_u64().unwrap())
            .collect();
        assert_eq!(amounts, [2, 4]);
        assert_eq!(got[0].index_in_block, 1);
        assert!(sub.poll(&l).is_empty());

        l.call(a, Some(ContractId(2)), VaultCall::Put(5)).unwrap();
        l.seal_block(2);
        let got = sub.poll(&l);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].block_height, 1);
    }

    #[test]
    fn tampering_is_detected() {
        let mut l = plain();
        let a = l.create_account(100).unwrap();
        let b = l.create_account(0).unwrap();
        l.transfer(a, b, 10).unwrap();
        l.seal_block(1);
        l.seal_block(2);
        assert_eq!(l.verify_chain(), Ok(()));

        l.chain[0].transactions[0].tx.value = 99;
        assert_eq!(l.verify_chain(), Err(ChainError::Tampered { height: 0 }));

        l.chain[0].digest = l.chain[0].compute_digest();
        assert_eq!(l.verify_chain(), Err(ChainError::BrokenLink { height: 1 }));
    }

    #[test]
    fn chain_dump_has_one_block_per_line() {
        let mut l = plain();
        let a = l.create_account(1).unwrap();
        l.transfer(a, a, 1).unwrap();
        l.seal_block(1);
        l.seal_block(2);
        let mut out = Vec::new();
        l.write_chain_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["height"], 0);
        assert_eq!(first["digest"].as_str().unwrap().len(), 64);
    }
}
