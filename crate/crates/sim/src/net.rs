//! Delivery models, sleep schedules and the leader oracle.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slipstream_core::crypto::hash_parts;
use slipstream_core::dag::BlockIdx;
use slipstream_core::{NodeId, Timestamp};

use crate::scenario::{DelayPolicy, LeaderMode, Model, Partition, Scenario, SleepSpec};
use crate::SimError;

pub const PRNG_NAME: &str = "chacha8";

/// Independent ChaCha8 stream for `(seed, label, index)`.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let h = hash_parts([label.as_bytes(), &seed.to_le_bytes()[..], &index.to_le_bytes()[..]]);
    ChaCha8Rng::from_seed(h.0)
}

#[derive(Clone, Debug)]
pub struct LeaderOracle {
    seed: u64,
    n: u32,
    mode: LeaderMode,
    gst: u64,
}

impl LeaderOracle {
    pub fn new(sc: &Scenario) -> Self {
        LeaderOracle { seed: sc.seed, n: sc.n, mode: sc.leader, gst: sc.gst_slot() }
    }

    /// The common-coin value for `slot`.
    pub fn coin(&self, slot: u64) -> NodeId {
        NodeId(stream(self.seed, "leader", slot).random_range(0..self.n))
    }

    /// Leader as reported to `node` at round 1 of `slot`.
    pub fn view(&self, slot: u64, node: NodeId) -> Option<NodeId> {
        if slot >= self.gst {
            return Some(self.coin(slot));
        }
        match self.mode {
            LeaderMode::CommonCoin => Some(self.coin(slot)),
            LeaderMode::NoneBeforeGst => None,
            LeaderMode::SplitBeforeGst => {
                let idx = slot * self.n as u64 + node.0 as u64;
                Some(NodeId(stream(self.seed, "leader-view", idx).random_range(0..self.n)))
            }
        }
    }
}

/// Awake sets per slot (slot-sleepy model); everyone is awake otherwise.
#[derive(Clone, Debug)]
pub struct SleepSchedule {
    awake: Vec<Vec<bool>>,
}

impl SleepSchedule {
    pub fn build(sc: &Scenario) -> Result<Self, SimError> {
        let n = sc.n as usize;
        let byz = sc.byzantine();
        let correct: Vec<u32> = (0..sc.n).filter(|i| !byz.contains(i)).collect();
        let byzl: Vec<u32> = byz.iter().copied().collect();
        let mut awake = Vec::with_capacity(sc.horizon_slots as usize);
        for slot in 1..=sc.horizon_slots {
            let row = match &sc.sleep_schedule {
                SleepSpec::Always => vec![true; n],
                SleepSpec::Random { p_asleep } => {
                    let mut rng = stream(sc.seed, "sleep", slot);
                    let mut row = None;
                    for _ in 0..256 {
                        let r: Vec<bool> = (0..n).map(|_| !rng.random_bool(*p_asleep)).collect();
                        if majority_ok(&r, &correct, &byzl) {
                            row = Some(r);
                            break;
                        }
                    }
                    row.ok_or_else(|| SimError::Scenario(format!("no awake majority found for slot {slot}")))?
                }
                SleepSpec::Adversarial => {
                    let mut rng = stream(sc.seed, "sleep", slot);
                    let k = rng.random_range(0..=byzl.len()).min(correct.len().saturating_sub(1));
                    let mut b = byzl.clone();
                    let mut c = correct.clone();
                    b.shuffle(&mut rng);
                    c.shuffle(&mut rng);
                    let mut r = vec![false; n];
                    for &i in b.iter().take(k).chain(c.iter().take(k + 1)) {
                        r[i as usize] = true;
                    }
                    r
                }
                SleepSpec::Explicit { slots } => match slots.get(&slot) {
                    Some(list) => {
                        let mut r = vec![false; n];
                        for &i in list {
                            r[i as usize] = true;
                        }
                        r
                    }
                    None => vec![true; n],
                },
            };
            if matches!(sc.model, Model::SlotSleepy) && !majority_ok(&row, &correct, &byzl) {
                return Err(SimError::Scenario(format!("slot {slot}: correct awake nodes do not outnumber Byzantine ones")));
            }
            awake.push(row);
        }
        Ok(SleepSchedule { awake })
    }

    pub fn is_awake(&self, slot: u64, node: NodeId) -> bool {
        self.awake.get(slot as usize - 1).is_none_or(|r| r[node.index()])
    }

    pub fn awake(&self, slot: u64) -> Vec<NodeId> {
        (0..self.awake.first().map_or(0, Vec::len) as u32).map(NodeId).filter(|&i| self.is_awake(slot, i)).collect()
    }
}

fn majority_ok(row: &[bool], correct: &[u32], byz: &[u32]) -> bool {
    let c = correct.iter().filter(|&&i| row[i as usize]).count();
    let b = byz.iter().filter(|&&i| row[i as usize]).count();
    c > b
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub from: NodeId,
    /// Global round of the send phase.
    pub sent: u64,
    pub blocks: Vec<BlockIdx>,
}

/// Routes bundles according to the scenario's delivery model.
///
/// Messages wait in a per-recipient queue until their delivery round and
/// are handed over at the recipient's next receive phase, so a sleeping node
/// gets everything addressed to it when it wakes up.
pub struct Network {
    f: u32,
    /// Global round of `⟨gst, 1⟩`; zero when there is no asynchronous period.
    gst_round: u64,
    fast: Vec<Vec<bool>>,
    delay: DelayPolicy,
    rng: ChaCha8Rng,
    pending: Vec<BTreeMap<u64, Vec<Message>>>,
    groups: Vec<Vec<u32>>,
}

impl Network {
    pub fn new(sc: &Scenario) -> Self {
        let n = sc.n as usize;
        let (gst_round, groups, delay) = match &sc.model {
            Model::Elss { partition, delay } => {
                let groups = match partition {
                    Partition::All => (0..sc.n).map(|i| vec![i]).collect(),
                    Partition::Random => {
                        let mut rng = stream(sc.seed, "partition", 0);
                        let mut ids: Vec<u32> = (0..sc.n).collect();
                        ids.shuffle(&mut rng);
                        let cut = if n > 1 { rng.random_range(1..n) } else { 1 };
                        let (a, b) = ids.split_at(cut);
                        let mut a = a.to_vec();
                        let mut b = b.to_vec();
                        a.sort();
                        b.sort();
                        vec![a, b]
                    }
                    Partition::Groups { groups } => groups.clone(),
                };
                (Timestamp::new(sc.gst_slot(), 1).global_round(sc.f), groups, *delay)
            }
            _ => (0, vec![(0..sc.n).collect()], DelayPolicy::MaxDelay),
        };
        let mut fast = vec![vec![false; n]; n];
        for g in &groups {
            for &a in g {
                for &b in g {
                    fast[a as usize][b as usize] = true;
                }
            }
        }
        Network {
            f: sc.f,
            gst_round,
            fast,
            delay,
            rng: stream(sc.seed, "delay", 0),
            pending: vec![BTreeMap::new(); n],
            groups,
        }
    }

    pub fn groups(&self) -> &[Vec<u32>] {
        &self.groups
    }

    pub fn gst_round(&self) -> u64 {
        self.gst_round
    }

    /// Round whose receive phase gets a message sent at global round `sent`.
    pub fn delivery_round(&mut self, from: NodeId, to: NodeId, sent: u64) -> u64 {
        let next = sent + 1;
        if next >= self.gst_round || self.fast[from.index()][to.index()] {
            return next;
        }
        match self.delay {
            DelayPolicy::MaxDelay => self.gst_round,
            DelayPolicy::Random => self.rng.random_range(next..=self.gst_round),
        }
    }

    pub fn send(&mut self, from: NodeId, to: NodeId, sent: u64, blocks: Vec<BlockIdx>) {
        if blocks.is_empty() {
            return;
        }
        let at = self.delivery_round(from, to, sent);
        self.pending[to.index()].entry(at).or_default().push(Message { from, sent, blocks });
    }

    /// Everything due for `to` by global round `now`, in delivery order.
    pub fn take(&mut self, to: NodeId, now: u64) -> Vec<Message> {
        let q = &mut self.pending[to.index()];
        let later = q.split_off(&(now + 1));
        let due = std::mem::replace(q, later);
        due.into_values().flatten().collect()
    }

    pub fn in_flight(&self) -> usize {
        self.pending.iter().map(|q| q.values().map(Vec::len).sum::<usize>()).sum()
    }

    pub fn f(&self) -> u32 {
        self.f
    }
}
