//! SCP-side check of oracle reports against the cell's own measurements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::UeSession;
use crate::contracts::{events, Ecgi, TrafficReport};
use crate::ledger::{ContractId, EventRecord, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    MismatchBeyondTolerance,
    MissingReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionVerdict {
    pub ue: String,
    pub start_tick: Tick,
    pub measured_bytes: u64,
    pub reported_bytes: Option<u64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationResult {
    pub sessions: Vec<SessionVerdict>,
    /// Sum of |measured - reported| over paired sessions, plus the measured
    /// bytes of sessions with no report.
    pub discrepancy_bytes: u64,
    /// Reports with no matching measurement, keyed by (ue, start tick).
    pub unexpected_reports: Vec<(String, Tick)>,
}

impl ReconciliationResult {
    pub fn all_match(&self) -> bool {
        self.unexpected_reports.is_empty()
            && self.sessions.iter().all(|s| s.verdict == Verdict::Match)
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.sessions
            .iter()
            .filter(|s| s.verdict == verdict)
            .count()
    }
}

/// Pairs measured sessions and reports for the cell broadcasting `ecgi` by
/// `(ue, start_tick)`. A pair matches when the byte counts differ by at most
/// `tolerance_bytes`.
pub fn scp_verify(
    ecgi: Ecgi,
    measured: &[UeSession],
    reported: &[TrafficReport],
    tolerance_bytes: u64,
) -> ReconciliationResult {
    let mut reports: BTreeMap<(&str, Tick), u64> = reported
        .iter()
        .filter(|r| r.ecgi == ecgi)
        .map(|r| ((r.ue_id.as_str(), r.session_start), r.bytes_served))
        .collect();
    let mut result = ReconciliationResult::default();
    for s in measured.iter().filter(|s| s.ecgi == ecgi) {
        let got = reports.remove(&(s.ue.as_str(), s.start_tick));
        let verdict = match got {
            None => {
                result.discrepancy_bytes += s.bytes;
                Verdict::MissingReport
            }
            Some(r) => {
                let diff = r.abs_diff(s.bytes);
                result.discrepancy_bytes += diff;
                if diff <= tolerance_bytes {
                    Verdict::Match
                } else {
                    Verdict::MismatchBeyondTolerance
                }
            }
        };
        result.sessions.push(SessionVerdict {
            ue: s.ue.clone(),
            start_tick: s.start_tick,
            measured_bytes: s.bytes,
            reported_bytes: got,
            verdict,
        });
    }
    result.unexpected_reports = reports
        .into_keys()
        .map(|(ue, t)| (ue.to_owned(), t))
        .collect();
    result
}

/// Reports as the SCP sees them on chain: the `TrafficCredited` events of one
/// cell contract.
pub fn reports_from_events(log: &[EventRecord], contract: ContractId) -> Vec<TrafficReport> {
    log.iter()
        .filter(|e| e.contract == Some(contract) && e.name == events::TRAFFIC_CREDITED)
        .filter_map(|e| {
            let p = &e.payload;
            let (plmn, cell) = p.get("ecgi")?.as_str()?.split_once('-')?;
            Some(TrafficReport {
                ecgi: Ecgi {
                    plmn_id: plmn.parse().ok()?,
                    cell_id: u32::from_str_radix(cell, 16).ok()?,
                },
                ue_id: p.get("ue")?.as_str()?.to_owned(),
                session_start: p.get("session_start")?.as_u64()?,
                session_end: p.get("session_end")?.as_u64()?,
                bytes_served: p.get("bytes")?.as_u64()?,
            })
        })
        .collect()
}
