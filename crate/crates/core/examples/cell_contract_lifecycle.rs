//! One MNO, one SCP and one oracle walk a cell contract from registration to
//! fund recovery.

use neutral_host::contracts::{
    CallOutput, ContractCall, ContractRegistry, Credential, Ecgi, TrafficReport,
};
use neutral_host::ledger::{AccountId, ContractId, EventFilter, Ledger, TxOutcome};

type Chain = Ledger<ContractRegistry>;

fn exec(
    ledger: &mut Chain,
    sender: AccountId,
    target: Option<ContractId>,
    call: ContractCall,
) -> Option<CallOutput> {
    let method = call.method_name();
    let tx = ledger.call(sender, target, call).unwrap();
    ledger.seal_block(ledger.height());
    match &ledger.receipt(tx).unwrap().outcome {
        TxOutcome::Success { output } => {
            println!("{method:<18} ok   {output:?}");
            Some(*output)
        }
        TxOutcome::Failed { reason } => {
            println!("{method:<18} fail {reason}");
            None
        }
        TxOutcome::Transferred => None,
    }
}

pub fn main() {
    let mut ledger = Ledger::new(ContractRegistry::new());
    let mno = ledger.create_account(100_000).unwrap();
    let scp = ledger.create_account(0).unwrap();
    let oracle = ledger.create_account(0).unwrap();
    let ecgi = Ecgi::new(27201, 0x101).unwrap();
    let credential = Credential::new("ue-monitor-1");

    let master = exec(
        &mut ledger,
        mno,
        None,
        ContractCall::DeployMaster { plmn_id: 27201 },
    )
    .and_then(CallOutput::contract)
    .unwrap();
    let register = ContractCall::RegisterProvider {
        scp,
        ecgi,
        price_per_kb: 2,
        spectrum_tag: "GAA".into(),
        termination_threshold: Some(2),
    };
    let cell = exec(&mut ledger, mno, Some(master), register)
        .and_then(CallOutput::contract)
        .unwrap();
    exec(
        &mut ledger,
        mno,
        Some(cell),
        ContractCall::AuthorizeOracle {
            credential: credential.clone(),
        },
    );
    exec(
        &mut ledger,
        mno,
        Some(cell),
        ContractCall::DepositFunds { amount: 5_000 },
    );
    // the SCP cannot fund its own contract
    exec(
        &mut ledger,
        scp,
        Some(cell),
        ContractCall::DepositFunds { amount: 1 },
    );

    let report = |bytes| ContractCall::ReportTraffic {
        credential: credential.clone(),
        report: TrafficReport {
            ecgi,
            ue_id: "ue-1".into(),
            session_start: 0,
            session_end: 300,
            bytes_served: bytes,
        },
    };
    exec(&mut ledger, oracle, Some(cell), report(1_536_000));
    exec(&mut ledger, scp, Some(cell), ContractCall::Withdraw);
    exec(&mut ledger, oracle, Some(cell), report(700_000));
    exec(
        &mut ledger,
        mno,
        Some(cell),
        ContractCall::RecordInfraction { penalty: 400 },
    );
    exec(
        &mut ledger,
        mno,
        Some(cell),
        ContractCall::RecordInfraction { penalty: 0 },
    );
    exec(&mut ledger, oracle, Some(cell), report(1));
    exec(
        &mut ledger,
        mno,
        Some(cell),
        ContractCall::RecoverFunds { force: false },
    );
    exec(&mut ledger, scp, Some(cell), ContractCall::Withdraw);

    let c = ledger.runtime().cell(cell).unwrap();
    println!(
        "\nstatus {:?}, escrow {}, credit {}, totals {:?}",
        c.status, c.escrow, c.accrued_credit, c.totals
    );
    println!(
        "mno {} scp {}",
        ledger.get_balance(mno).unwrap(),
        ledger.get_balance(scp).unwrap()
    );
    for e in ledger.events_matching(EventFilter::contract(cell)) {
        println!(
            "  #{}.{} {} {}",
            e.block_height,
            e.index_in_block,
            e.name,
            serde_json::to_string(&e.payload).unwrap()
        );
    }
}
