//! Scenarios shipped with the simulator, one per property family.

use std::collections::BTreeMap;

use crate::scenario::{
    ByzantineSpec, ClientSpec, DelayPolicy, GenesisSpec, LeaderMode, Model, Partition, Scenario, SleepSpec, Strategy,
    SCHEMA_VERSION,
};

pub const NAMES: [&str; 7] = [
    "ss-basic",
    "ss-adversarial-sleep",
    "elss-partition",
    "elss-digest-split",
    "payments-fast",
    "payments-doublespend-lock",
    "equivocation-storm",
];

fn base(name: &str, n: u32, f: u32, model: Model, horizon: u64) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        n,
        f,
        model,
        gst: None,
        horizon_slots: horizon,
        seed: 1,
        sleep_schedule: SleepSpec::Always,
        leader: LeaderMode::CommonCoin,
        adversary: Vec::new(),
        workload: Vec::new(),
        tx_cap: 8,
        genesis: GenesisSpec::default(),
        audit: true,
    }
}

fn byz(node: u32, strategy: Strategy) -> ByzantineSpec {
    ByzantineSpec { node, strategy }
}

fn cautious(account: u32, tracked: u32, every: u32, stop_slot: u64) -> ClientSpec {
    ClientSpec::Cautious { account, tracked, every, start_slot: 1, stop_slot }
}

pub fn get(name: &str) -> Option<Scenario> {
    let elss = |partition| Model::Elss { partition, delay: DelayPolicy::MaxDelay };
    let sc = match name {
        "ss-basic" => Scenario {
            sleep_schedule: SleepSpec::Random { p_asleep: 0.25 },
            ..base(name, 5, 2, Model::SlotSleepy, 50)
        },
        "ss-adversarial-sleep" => Scenario {
            sleep_schedule: SleepSpec::Adversarial,
            adversary: vec![
                byz(3, Strategy::Equivocate { from_slot: 1, rounds: Vec::new() }),
                byz(4, Strategy::Withhold { to: vec![0] }),
            ],
            ..base(name, 5, 2, Model::SlotSleepy, 50)
        },
        "elss-partition" => Scenario { gst: Some(10), ..base(name, 4, 1, elss(Partition::Random), 40) },
        "elss-digest-split" => Scenario {
            gst: Some(10),
            adversary: vec![byz(3, Strategy::DigestSplit { camps: [vec![0, 1], vec![2]] })],
            ..base(name, 4, 1, elss(Partition::Groups { groups: vec![vec![0, 1, 3], vec![2, 3]] }), 40)
        },
        "payments-fast" => Scenario {
            adversary: vec![byz(3, Strategy::Crash { at_slot: 8 })],
            workload: vec![cautious(0, 0, 1, 25), cautious(1, 1, 2, 25), cautious(2, 2, 3, 25)],
            ..base(name, 4, 1, Model::LockStep, 30)
        },
        "payments-doublespend-lock" => Scenario {
            adversary: vec![byz(3, Strategy::Withhold { to: vec![1] })],
            workload: vec![
                ClientSpec::DoubleSpender { account: 3, slot: 3, round: 1, first_to: vec![0, 1], second_to: vec![2, 3] },
                ClientSpec::SplitBroadcast {
                    account: 4,
                    slot: 5,
                    round: 2,
                    wide_to: vec![0, 1, 2],
                    narrow_to: vec![3],
                    delay: 3,
                },
                ClientSpec::DoubleSpender { account: 5, slot: 9, round: 3, first_to: vec![0], second_to: vec![2] },
                cautious(0, 2, 2, 25),
            ],
            ..base(name, 4, 1, Model::LockStep, 30)
        },
        "equivocation-storm" => Scenario {
            adversary: vec![byz(3, Strategy::Equivocate { from_slot: 1, rounds: Vec::new() })],
            workload: vec![cautious(0, 0, 1, 25), cautious(1, 1, 2, 25)],
            ..base(name, 4, 1, Model::LockStep, 30)
        },
        _ => return None,
    };
    Some(sc)
}

pub fn all() -> BTreeMap<&'static str, Scenario> {
    NAMES.iter().map(|&n| (n, get(n).expect("bundled"))).collect()
}
