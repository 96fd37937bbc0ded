//! Scenario description (JSON, versioned by `schema_version`).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::SimError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub n: u32,
    pub f: u32,
    pub model: Model,
    /// First synchronous slot; required for ELSS, implied 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gst: Option<u64>,
    pub horizon_slots: u64,
    pub seed: u64,
    #[serde(default)]
    pub sleep_schedule: SleepSpec,
    #[serde(default)]
    pub leader: LeaderMode,
    #[serde(default)]
    pub adversary: Vec<ByzantineSpec>,
    #[serde(default)]
    pub workload: Vec<ClientSpec>,
    #[serde(default = "default_cap")]
    pub tx_cap: usize,
    #[serde(default)]
    pub genesis: GenesisSpec,
    /// Re-validate every correct node's own cone after each round.
    #[serde(default = "yes")]
    pub audit: bool,
}

fn default_cap() -> usize {
    slipstream_core::ledger::Mempool::DEFAULT_CAP
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Model {
    LockStep,
    Elss {
        #[serde(default)]
        partition: Partition,
        #[serde(default)]
        delay: DelayPolicy,
    },
    SlotSleepy,
}

/// Which correct-to-correct links the pre-GST adversary slows down.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Partition {
    /// Every link is slowed.
    #[default]
    All,
    /// Nodes are split into two non-empty random groups per seed.
    Random,
    /// Links inside a common group are fast; groups may overlap.
    Groups { groups: Vec<Vec<u32>> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayPolicy {
    /// Slowed messages arrive exactly at GST.
    #[default]
    MaxDelay,
    /// Slowed messages arrive at a uniformly random round up to GST.
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SleepSpec {
    #[default]
    Always,
    /// Each node sleeps a slot with probability `p_asleep`, redrawn until the
    /// correct-awake majority holds.
    Random { p_asleep: f64 },
    /// Per slot the adversary wakes `k` Byzantine nodes and only `k+1` correct ones.
    Adversarial,
    /// Awake node lists per slot; slots not listed have everyone awake.
    Explicit { slots: BTreeMap<u64, Vec<u32>> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeaderMode {
    #[default]
    CommonCoin,
    /// No leader before GST.
    NoneBeforeGst,
    /// Each node draws its own leader before GST.
    SplitBeforeGst,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSpec {
    pub node: u32,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    /// Sends a second block at the same timestamp to the other half of the nodes.
    Equivocate {
        #[serde(default)]
        from_slot: u64,
        /// Rounds at which to equivocate; all rounds if empty.
        #[serde(default)]
        rounds: Vec<u32>,
    },
    /// Runs one honest core per camp, each seeing and serving only its camp.
    DigestSplit { camps: [Vec<u32>; 2] },
    /// Sends only to the listed nodes.
    Withhold { to: Vec<u32> },
    /// Honest until `at_slot`, silent afterwards.
    Crash { at_slot: u64 },
    /// Drops messages to `drop_to` during `[from_slot, until_slot]`.
    SelectiveSend {
        drop_to: Vec<u32>,
        #[serde(default)]
        from_slot: u64,
        #[serde(default = "forever")]
        until_slot: u64,
    },
}

fn forever() -> u64 {
    u64::MAX
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClientSpec {
    /// Spends only outputs confirmed at `tracked`, one payment every `every` rounds.
    Cautious {
        account: u32,
        tracked: u32,
        #[serde(default = "one")]
        every: u32,
        #[serde(default)]
        start_slot: u64,
        #[serde(default = "forever")]
        stop_slot: u64,
    },
    /// Releases two transactions spending the same output to disjoint node sets.
    DoubleSpender { account: u32, slot: u64, round: u32, first_to: Vec<u32>, second_to: Vec<u32> },
    /// Releases one transaction widely and a conflicting one to a few nodes `delay` rounds later.
    SplitBroadcast {
        account: u32,
        slot: u64,
        round: u32,
        wide_to: Vec<u32>,
        narrow_to: Vec<u32>,
        #[serde(default)]
        delay: u32,
    },
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisSpec {
    pub accounts: u32,
    /// Outputs minted per account.
    pub outputs_per_account: u32,
    pub value: u64,
}

impl Default for GenesisSpec {
    fn default() -> Self {
        GenesisSpec { accounts: 8, outputs_per_account: 4, value: 1000 }
    }
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Scenario, SimError> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| SimError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario { seed, ..self.clone() }
    }

    pub fn byzantine(&self) -> BTreeSet<u32> {
        self.adversary.iter().map(|b| b.node).collect()
    }

    pub fn is_correct(&self, node: u32) -> bool {
        !self.adversary.iter().any(|b| b.node == node)
    }

    /// First synchronous slot.
    pub fn gst_slot(&self) -> u64 {
        match self.model {
            Model::Elss { .. } => self.gst.unwrap_or(1).max(1),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} unsupported, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if self.n == 0 || self.n >= u32::MAX {
            return bad("n must be positive".into());
        }
        if self.horizon_slots == 0 {
            return bad("horizon_slots must be positive".into());
        }
        let byz = self.byzantine();
        if byz.len() != self.adversary.len() {
            return bad("a node is listed twice in adversary".into());
        }
        if byz.len() > self.f as usize {
            return bad(format!("{} Byzantine nodes exceed f = {}", byz.len(), self.f));
        }
        let node_ok = |x: &u32| *x < self.n;
        match &self.model {
            Model::Elss { partition, .. } => {
                if self.n < 3 * self.f + 1 {
                    return bad(format!("ELSS needs n >= 3f+1, got n={} f={}", self.n, self.f));
                }
                if self.gst.is_none() {
                    return bad("ELSS scenarios need gst".into());
                }
                if let Partition::Groups { groups } = partition {
                    if !groups.iter().flatten().all(node_ok) {
                        return bad("partition names an unknown node".into());
                    }
                }
            }
            Model::LockStep => {
                if self.n < 3 * self.f + 1 {
                    return bad(format!("lock-step needs n >= 3f+1, got n={} f={}", self.n, self.f));
                }
            }
            Model::SlotSleepy => {}
        }
        if !matches!(self.model, Model::SlotSleepy) && !matches!(self.sleep_schedule, SleepSpec::Always) {
            return bad("sleep schedules apply to the slot-sleepy model only".into());
        }
        if let SleepSpec::Random { p_asleep } = self.sleep_schedule {
            if !(0.0..1.0).contains(&p_asleep) {
                return bad("p_asleep must be in [0, 1)".into());
            }
        }
        if let SleepSpec::Explicit { slots } = &self.sleep_schedule {
            if !slots.values().flatten().all(node_ok) {
                return bad("sleep schedule names an unknown node".into());
            }
        }
        for b in &self.adversary {
            if !node_ok(&b.node) {
                return bad(format!("adversary node {} out of range", b.node));
            }
            let lists: Vec<&Vec<u32>> = match &b.strategy {
                Strategy::DigestSplit { camps } => camps.iter().collect(),
                Strategy::Withhold { to } => vec![to],
                Strategy::SelectiveSend { drop_to, .. } => vec![drop_to],
                _ => vec![],
            };
            if !lists.into_iter().flatten().all(node_ok) {
                return bad(format!("strategy of node {} names an unknown node", b.node));
            }
        }
        let accounts = self.genesis.accounts;
        if accounts < 2 {
            return bad("genesis needs at least two accounts".into());
        }
        let mut used = BTreeSet::new();
        for c in &self.workload {
            let (account, nodes): (u32, Vec<u32>) = match c {
                ClientSpec::Cautious { account, tracked, every, .. } => {
                    if *every == 0 {
                        return bad("cautious client needs every >= 1".into());
                    }
                    if !self.is_correct(*tracked) {
                        return bad(format!("cautious client tracks Byzantine node {tracked}"));
                    }
                    (*account, vec![*tracked])
                }
                ClientSpec::DoubleSpender { account, first_to, second_to, round, .. } => {
                    if *round == 0 || *round > self.f + 2 {
                        return bad("client round out of range".into());
                    }
                    (*account, first_to.iter().chain(second_to).copied().collect())
                }
                ClientSpec::SplitBroadcast { account, wide_to, narrow_to, round, .. } => {
                    if *round == 0 || *round > self.f + 2 {
                        return bad("client round out of range".into());
                    }
                    (*account, wide_to.iter().chain(narrow_to).copied().collect())
                }
            };
            if !used.insert(account) {
                return bad(format!("account {account} is driven by two clients"));
            }
            if account >= accounts {
                return bad(format!("account {account} not minted (accounts = {accounts})"));
            }
            if !nodes.iter().all(node_ok) {
                return bad("client names an unknown node".into());
            }
        }
        if self.genesis.value == 0 || self.genesis.outputs_per_account == 0 {
            return bad("genesis outputs must be positive".into());
        }
        Ok(())
    }
}
