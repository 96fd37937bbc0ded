//! Corrupted traces, one per property, to confirm each checker can fail.

use serde::{Deserialize, Serialize};
use slipstream_core::crypto;
use slipstream_core::dag::{Rule, Violation};
use slipstream_core::ledger::ConfirmPath;
use slipstream_core::node::NodeEvent;
use slipstream_core::{BlockId, NodeId, SlotDigest, Timestamp};

use crate::check::check_named;
use crate::trace::{RunTrace, SimEvent, TraceEvent, TraceRecord};
use crate::{bundled, SimError};

#[derive(Clone, Debug)]
pub struct Fixture {
    pub property: &'static str,
    pub scenario: &'static str,
    pub mutation: String,
    pub trace: RunTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTestResult {
    pub property: String,
    pub scenario: String,
    pub mutation: String,
    pub baseline_pass: bool,
    pub baseline_checked: usize,
    pub mutated_pass: bool,
    pub detail: Option<String>,
}

impl SelfTestResult {
    /// The honest trace passes and the corrupted one is flagged.
    pub fn ok(&self) -> bool {
        self.baseline_pass && self.baseline_checked > 0 && !self.mutated_pass
    }
}

const CASES: [(&str, &str); 12] = [
    ("order-own-safety", "ss-basic"),
    ("order-own-liveness", "ss-basic"),
    ("ss-no-elss-flag", "ss-basic"),
    ("same-sc", "elss-partition"),
    ("order-final-safety", "payments-doublespend-lock"),
    ("order-final-liveness", "elss-partition"),
    ("valid-dag", "payments-fast"),
    ("no-correct-equivocator", "equivocation-storm"),
    ("ledger-safety", "payments-doublespend-lock"),
    ("ledger-consistency", "payments-fast"),
    ("fast-path-latency", "payments-fast"),
    ("double-spend-unlock", "payments-doublespend-lock"),
];

fn node_event(r: &TraceRecord) -> Option<&NodeEvent> {
    match &r.event {
        TraceEvent::Node(e) => Some(e),
        _ => None,
    }
}

fn registered(t: &RunTrace, d: &SlotDigest) -> Option<(SlotDigest, Vec<BlockId>)> {
    t.records.iter().find_map(|r| match node_event(r) {
        Some(NodeEvent::DigestRegistered { digest, parent, blocks }) if digest == d => Some((*parent, blocks.clone())),
        _ => None,
    })
}

/// A sibling of `d`: same parent, first block replaced by an unknown id.
/// Inserts its registration before record `at`. `None` if `d` orders no blocks.
fn forge(t: &mut RunTrace, d: &SlotDigest, at: usize) -> Option<SlotDigest> {
    let (parent, mut blocks) = registered(t, d)?;
    if blocks.is_empty() {
        return None;
    }
    let fake = SlotDigest { slot: d.slot, value: crypto::hash(&[b"forged".as_slice(), &d.value.0].concat()) };
    blocks[0] = BlockId(crypto::hash(&[b"forged-block".as_slice(), &d.value.0].concat()));
    let rec = TraceRecord {
        round: t.records[at].round,
        time: t.records[at].time,
        node: t.records[at].node,
        event: TraceEvent::Node(NodeEvent::DigestRegistered { digest: fake, parent, blocks }),
    };
    t.records.insert(at, rec);
    Some(fake)
}

fn insert_after(t: &mut RunTrace, at: usize, node: NodeId, e: NodeEvent) {
    let rec = TraceRecord { round: t.records[at].round, time: t.records[at].time, node: Some(node), event: TraceEvent::Node(e) };
    t.records.insert(at + 1, rec);
}

fn mid(t: &RunTrace) -> u64 {
    t.header.scenario.horizon_slots / 2
}

/// Index of the first record matching `p` by a correct node.
fn find(t: &RunTrace, p: impl Fn(&TraceRecord, NodeId, &NodeEvent) -> bool) -> Option<usize> {
    t.records.iter().position(|r| match (node_event(r), r.node) {
        (Some(e), Some(n)) if t.is_correct(n) => p(r, n, e),
        _ => false,
    })
}

/// Replaces the digest of the first matching AdoptEnd/Finalize with a forged sibling.
fn swap_digest(t: &mut RunTrace, min_slot: u64, finalize: bool) -> Option<String> {
    let candidates: Vec<usize> = (0..t.records.len())
        .filter(|&i| {
            let r = &t.records[i];
            r.time.slot >= min_slot
                && r.node.is_some_and(|n| t.is_correct(n))
                && match node_event(r) {
                    Some(NodeEvent::AdoptEnd { .. }) => !finalize,
                    Some(NodeEvent::Finalize { .. }) => finalize,
                    _ => false,
                }
        })
        .collect();
    for i in candidates {
        let d = match node_event(&t.records[i]) {
            Some(NodeEvent::AdoptEnd { digest, .. } | NodeEvent::Finalize { digest, .. }) => *digest,
            _ => continue,
        };
        let Some(fake) = forge(t, &d, i) else { continue };
        let node = t.records[i + 1].node.expect("node record");
        match &mut t.records[i + 1].event {
            TraceEvent::Node(NodeEvent::AdoptEnd { digest, .. } | NodeEvent::Finalize { digest, .. }) => *digest = fake,
            _ => unreachable!(),
        }
        let what = if finalize { "finalized" } else { "end-of-slot" };
        return Some(format!("{node}'s {what} digest at slot {} replaced by forged sibling {fake}", t.records[i + 1].time.slot));
    }
    None
}

fn mutate(property: &str, t: &mut RunTrace) -> Option<String> {
    let m = mid(t);
    match property {
        "order-own-safety" => swap_digest(t, m, false),
        "same-sc" => swap_digest(t, t.header.scenario.gst_slot().max(m), false),
        "order-final-safety" => swap_digest(t, m, true),
        "order-own-liveness" => {
            let i = find(t, |r, _, e| r.time.slot >= m && matches!(e, NodeEvent::BlockCreated { .. }))?;
            let Some(NodeEvent::BlockCreated { id, .. }) = node_event(&t.records[i]) else { return None };
            let id = *id;
            for r in &mut t.records {
                if let TraceEvent::Node(NodeEvent::DigestRegistered { blocks, .. }) = &mut r.event {
                    blocks.retain(|b| *b != id);
                }
            }
            Some(format!("block {id} dropped from every registered digest"))
        }
        "order-final-liveness" => {
            let n = t.correct_nodes()[0];
            let cut = Timestamp::new(m, 1).global_round(t.f());
            t.records.retain(|r| !(r.node == Some(n) && r.round >= cut && matches!(node_event(r), Some(NodeEvent::Finalize { .. }))));
            Some(format!("{n}'s Finalize events from round {cut} removed"))
        }
        "ss-no-elss-flag" => {
            let i = find(t, |r, _, e| r.time.slot >= m && matches!(e, NodeEvent::AdoptStart { .. }))?;
            let n = t.records[i].node?;
            insert_after(t, i, n, NodeEvent::ElssFlag { cause: "injected".into() });
            Some(format!("ELSS flag injected at {n}"))
        }
        "valid-dag" => {
            let i = find(t, |r, _, e| r.time.slot >= m && matches!(e, NodeEvent::BlockCreated { .. }))?;
            let (n, id) = match node_event(&t.records[i]) {
                Some(NodeEvent::BlockCreated { id, .. }) => (t.records[i].node?, *id),
                _ => return None,
            };
            let violation = Violation { rule: Rule::DV1, block: id, detail: "injected".into() };
            insert_after(t, i, n, NodeEvent::AuditFailure { violation });
            Some(format!("audit failure injected at {n}"))
        }
        "no-correct-equivocator" => {
            let correct = t.correct_nodes();
            let (victim, reporter) = (correct[0], correct[1]);
            let i = find(t, |r, n, e| n == reporter && r.time.slot >= m && matches!(e, NodeEvent::BlockCreated { .. }))?;
            let Some(NodeEvent::BlockCreated { id, .. }) = node_event(&t.records[i]) else { return None };
            let e = NodeEvent::Equivocation { node: victim, first: *id, second: *id };
            insert_after(t, i, reporter, e);
            Some(format!("{reporter} reports correct node {victim} as equivocator"))
        }
        "ledger-safety" => {
            let pairs: Vec<(u32, slipstream_core::tx::TxId)> = t
                .sim_events()
                .filter_map(|(_, e)| match e {
                    SimEvent::TxRelease { tx, pair: Some(p), .. } => Some((*p, *tx)),
                    _ => None,
                })
                .collect();
            let i = find(t, |_, _, e| match e {
                NodeEvent::Confirm { tx, .. } => pairs.iter().any(|x| x.1 == *tx),
                _ => false,
            })?;
            let (n, tx, path) = match node_event(&t.records[i]) {
                Some(NodeEvent::Confirm { tx, path }) => (t.records[i].node?, *tx, *path),
                _ => return None,
            };
            let p = pairs.iter().find(|x| x.1 == tx)?.0;
            let other = pairs.iter().find(|x| x.0 == p && x.1 != tx)?.1;
            insert_after(t, i, n, NodeEvent::Confirm { tx: other, path });
            Some(format!("{n} also confirms {other}, the other half of {tx}"))
        }
        "ledger-consistency" => {
            let n = t.correct_nodes()[1];
            let i = find(t, |_, k, e| k == n && matches!(e, NodeEvent::Confirm { path: ConfirmPath::Fast, .. }))?;
            t.records.remove(i);
            Some(format!("one fast confirmation removed at {n}"))
        }
        "fast-path-latency" => {
            let i = find(t, |r, _, e| r.time.slot >= m && matches!(e, NodeEvent::Confirm { path: ConfirmPath::Fast, .. }))?;
            let f = t.f();
            let r = &mut t.records[i];
            r.round += 1;
            r.time = Timestamp::from_global_round(r.round, f);
            Some(format!("fast confirmation at {} delayed one round", r.node?))
        }
        "double-spend-unlock" => {
            let paired: Vec<slipstream_core::tx::TxId> = t
                .sim_events()
                .filter_map(|(_, e)| match e {
                    SimEvent::TxRelease { tx, pair: Some(_), .. } => Some(*tx),
                    _ => None,
                })
                .collect();
            let n = t.correct_nodes()[0];
            let before = t.records.len();
            t.records.retain(|r| {
                !(r.node == Some(n)
                    && matches!(node_event(r), Some(NodeEvent::Confirm { tx, path }) if *path != ConfirmPath::Fast && paired.contains(tx)))
            });
            (t.records.len() < before).then(|| format!("consensus confirmations of double-spend halves removed at {n}"))
        }
        _ => None,
    }
}

/// Builds every corrupted trace from seed-1 runs of the bundled scenarios.
pub fn fixtures() -> Result<Vec<(Fixture, RunTrace)>, SimError> {
    let mut out = Vec::new();
    for (property, scenario) in CASES {
        let sc = bundled::get(scenario).expect("bundled");
        let base = crate::run(&sc)?;
        let mut t = base.clone();
        let mutation = mutate(property, &mut t)
            .ok_or_else(|| SimError::Scenario(format!("no place to inject a {property} violation in {scenario}")))?;
        out.push((Fixture { property, scenario, mutation, trace: t }, base));
    }
    Ok(out)
}

pub fn run_self_tests() -> Result<Vec<SelfTestResult>, SimError> {
    Ok(fixtures()?
        .into_iter()
        .map(|(fx, base)| {
            let b = check_named(&base, fx.property).expect("known property");
            let m = check_named(&fx.trace, fx.property).expect("known property");
            SelfTestResult {
                property: fx.property.into(),
                scenario: fx.scenario.into(),
                mutation: fx.mutation,
                baseline_pass: b.pass,
                baseline_checked: b.checked,
                mutated_pass: m.pass,
                detail: m.first_violation.map(|v| v.detail),
            }
        })
        .collect())
}
