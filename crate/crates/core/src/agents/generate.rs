//! Ready-made scenarios: the two-operator / two-provider topology and a
//! seeded random generator for property tests and load runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::*;

/// Two MNOs (lilac, green) hosted on two single-cell SCPs (blue, red). Each
/// MNO gets a master contract and one cell contract per SCP cell.
pub fn two_operator_scenario() -> Scenario {
    let mno = |name: &str, plmn_id| MnoSpec {
        name: name.into(),
        plmn_id,
        endowment: 10_000_000,
        deposit_per_cell: 1_000_000,
        termination_threshold: None,
    };
    let scp = |name: &str, cell_id| ScpSpec {
        name: name.into(),
        endowment: 0,
        cells: vec![CellSpec {
            name: format!("{name}-cell"),
            cell_id,
            price_per_kb: 2,
            price_per_tick: 5,
            hosts: vec!["lilac".into(), "green".into()],
            spectrum_tag: "GAA".into(),
        }],
    };
    let ue = |name: &str, home: &str, schedule: &[(u64, &str)]| UeSpec {
        name: name.into(),
        home: home.into(),
        rate_bytes_per_tick: 2048,
        oracle_endowment: 0,
        report_scale: 1.0,
        schedule: schedule
            .iter()
            .map(|(tick, cell)| ScheduleEntry {
                tick: *tick,
                cell: (*cell).into(),
            })
            .collect(),
    };
    Scenario {
        version: SCENARIO_VERSION,
        seed: 4,
        duration: 400,
        block_interval: 10,
        fee: 0,
        billing_mode: BillingMode::PerByte,
        reconciliation_tolerance_bytes: 1024,
        traffic_jitter: 0.0,
        withdraw_interval: None,
        mnos: vec![mno("lilac", 27201), mno("green", 27202)],
        scps: vec![scp("blue", 0x101), scp("red", 0x202)],
        ues: vec![
            ue(
                "lilac-ue-1",
                "lilac",
                &[(0, "blue-cell"), (120, MACRO), (200, "red-cell")],
            ),
            ue("lilac-ue-2", "lilac", &[(50, "red-cell"), (300, IDLE)]),
            ue(
                "green-ue-1",
                "green",
                &[(10, "blue-cell"), (250, "red-cell")],
            ),
            ue(
                "green-ue-2",
                "green",
                &[(0, MACRO), (100, "blue-cell"), (180, MACRO)],
            ),
        ],
        actions: Vec::new(),
    }
}

/// Size knobs for [`generate_scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioShape {
    pub mnos: usize,
    pub scps: usize,
    pub cells_per_scp: usize,
    pub ues: usize,
    pub duration: u64,
    pub max_schedule_len: usize,
    pub fee: u64,
    pub billing_mode: BillingMode,
    /// Probability that a UE's oracle inflates or deflates its reports.
    pub dishonest_fraction: f64,
    /// Number of random infraction / termination / recovery actions.
    pub mno_actions: usize,
}

impl Default for ScenarioShape {
    fn default() -> Self {
        ScenarioShape {
            mnos: 2,
            scps: 4,
            cells_per_scp: 1,
            ues: 20,
            duration: 500,
            max_schedule_len: 6,
            fee: 0,
            billing_mode: BillingMode::PerByte,
            dishonest_fraction: 0.0,
            mno_actions: 0,
        }
    }
}

/// Random valid scenario. Cells host a random non-empty subset of the MNOs;
/// UEs wander between random cells, the macro layer and idle.
pub fn generate_scenario(shape: &ScenarioShape, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mnos: Vec<MnoSpec> = (0..shape.mnos.max(1))
        .map(|i| MnoSpec {
            name: format!("mno-{i}"),
            plmn_id: 27201 + i as u32,
            endowment: rng.random_range(100_000..20_000_000),
            deposit_per_cell: rng.random_range(0..2_000_000),
            termination_threshold: Some(rng.random_range(1..=4)),
        })
        .collect();
    let mno_names: Vec<String> = mnos.iter().map(|m| m.name.clone()).collect();

    let mut next_cell = 1u32;
    let scps: Vec<ScpSpec> = (0..shape.scps)
        .map(|i| ScpSpec {
            name: format!("scp-{i}"),
            endowment: if shape.fee > 0 {
                rng.random_range(0..10_000)
            } else {
                0
            },
            cells: (0..shape.cells_per_scp.max(1))
                .map(|j| {
                    let hosts: Vec<String> = {
                        let k = rng.random_range(1..=mno_names.len());
                        let mut picked: Vec<String> =
                            mno_names.choose_multiple(&mut rng, k).cloned().collect();
                        picked.sort();
                        picked
                    };
                    let cell_id = next_cell;
                    next_cell += 1;
                    CellSpec {
                        name: format!("scp-{i}-cell-{j}"),
                        cell_id,
                        price_per_kb: rng.random_range(0..6),
                        price_per_tick: rng.random_range(0..12),
                        hosts,
                        spectrum_tag: ["GAA", "unlicensed", "licensed"][rng.random_range(0..3)]
                            .into(),
                    }
                })
                .collect(),
        })
        .collect();
    let cell_names: Vec<String> = scps
        .iter()
        .flat_map(|s| s.cells.iter().map(|c| c.name.clone()))
        .collect();

    let duration = shape.duration.max(2);
    let ues: Vec<UeSpec> = (0..shape.ues)
        .map(|i| {
            let len = rng.random_range(0..=shape.max_schedule_len.min(duration as usize - 1));
            let mut ticks: Vec<u64> = rand::seq::index::sample(&mut rng, duration as usize, len)
                .into_iter()
                .map(|t| t as u64)
                .collect();
            ticks.sort_unstable();
            let schedule = ticks
                .into_iter()
                .map(|tick| {
                    let roll = rng.random_range(0..10);
                    let cell = if roll == 0 || cell_names.is_empty() {
                        IDLE.to_owned()
                    } else if roll <= 2 {
                        MACRO.to_owned()
                    } else {
                        cell_names.choose(&mut rng).expect("non-empty").clone()
                    };
                    ScheduleEntry { tick, cell }
                })
                .collect();
            let dishonest = rng.random_bool(shape.dishonest_fraction.clamp(0.0, 1.0));
            UeSpec {
                name: format!("ue-{i}"),
                home: mno_names
                    .choose(&mut rng)
                    .expect("at least one MNO")
                    .clone(),
                rate_bytes_per_tick: rng.random_range(0..8_000),
                oracle_endowment: if shape.fee > 0 {
                    rng.random_range(0..2_000)
                } else {
                    0
                },
                report_scale: if dishonest {
                    rng.random_range(0.5..1.5)
                } else {
                    1.0
                },
                schedule,
            }
        })
        .collect();

    let mut actions = Vec::new();
    for _ in 0..shape.mno_actions {
        let Some(scp) = scps.choose(&mut rng) else {
            break;
        };
        let cell = scp.cells.choose(&mut rng).expect("non-empty");
        let kind = [
            MnoActionKind::Infraction,
            MnoActionKind::Terminate,
            MnoActionKind::Recover,
        ][rng.random_range(0..3)];
        actions.push(MnoAction {
            tick: rng.random_range(0..=duration),
            kind,
            mno: cell.hosts.choose(&mut rng).expect("non-empty").clone(),
            cell: cell.name.clone(),
            penalty: rng.random_range(0..50_000),
            force: rng.random_bool(0.5),
        });
    }
    actions.sort_by_key(|a| a.tick);

    Scenario {
        version: SCENARIO_VERSION,
        seed,
        duration,
        block_interval: rng.random_range(1..=20),
        fee: shape.fee,
        billing_mode: shape.billing_mode,
        reconciliation_tolerance_bytes: 1024,
        traffic_jitter: if rng.random_bool(0.5) { 0.0 } else { 0.2 },
        withdraw_interval: rng.random_bool(0.5).then(|| rng.random_range(1..=duration)),
        mnos,
        scps,
        ues,
        actions,
    }
}
