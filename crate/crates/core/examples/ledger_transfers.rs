//! Value transfers on the bare ledger: nonces, fees, failures and the digest
//! chain.

use neutral_host::ledger::{EventFilter, Ledger, NoContracts, Target, Transaction};

pub fn main() {
    let mut ledger = Ledger::new(NoContracts).with_fee(1);
    let alice = ledger.create_account(1_000).unwrap();
    let bob = ledger.create_account(50).unwrap();

    ledger.transfer(alice, bob, 300).unwrap();
    // overdraft: the fee is charged, the transfer is not
    ledger.transfer(bob, alice, 10_000).unwrap();
    // replayed nonce: rejected before any charge
    let replay = ledger
        .submit_transaction(Transaction {
            sender: alice,
            target: Target::Account(bob),
            call: None,
            value: 1,
            nonce: 1,
            fee: 1,
        })
        .unwrap();
    let block = ledger.seal_block(10);
    println!(
        "block {} with {} transactions",
        block.height,
        block.transactions.len()
    );
    for r in &block.receipts {
        println!("  tx {} fee {} -> {:?}", r.tx_id.0, r.fee_paid, r.outcome);
    }
    assert!(!ledger.receipt(replay).unwrap().outcome.is_success());

    for (account, balance) in ledger.accounts() {
        println!("account {account}: {balance}");
    }
    println!("fee sink {}, minted {}", ledger.fee_sink(), ledger.minted());
    assert!(ledger.supply_holds());

    let failures = ledger
        .events_matching(EventFilter::named("TxFailed"))
        .count();
    println!("{failures} failed transactions logged");
    ledger.verify_chain().unwrap();
    println!("head {}", ledger.head_digest().to_hex());
}
