//! Property checkers. Each is a pure function of a [`RunTrace`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use slipstream_core::ledger::ConfirmPath;
use slipstream_core::node::NodeEvent;
use slipstream_core::tx::{TxId, UtxoId};
use slipstream_core::{BlockId, NodeId, SlotDigest, Timestamp};

use crate::scenario::Model;
use crate::trace::{RunTrace, SimEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reproducer {
    pub scenario: String,
    pub seed: u64,
    pub round: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub round: u64,
    pub time: Timestamp,
    pub nodes: Vec<NodeId>,
    pub detail: String,
    pub reproducer: Reproducer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub pass: bool,
    /// Number of individual instances checked.
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<ViolationReport>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

/// Accumulates one property's verdict.
struct Verdict<'a> {
    trace: &'a RunTrace,
    report: PropertyReport,
}

impl<'a> Verdict<'a> {
    fn new(trace: &'a RunTrace, name: &str) -> Self {
        Verdict {
            trace,
            report: PropertyReport {
                name: name.into(),
                pass: true,
                checked: 0,
                violations: 0,
                first_violation: None,
                metrics: BTreeMap::new(),
            },
        }
    }

    fn check(&mut self) {
        self.report.checked += 1;
    }

    fn fail(&mut self, round: u64, nodes: Vec<NodeId>, detail: impl Into<String>) {
        self.report.pass = false;
        self.report.violations += 1;
        let earlier = self.report.first_violation.as_ref().is_some_and(|v| v.round <= round);
        if !earlier {
            let sc = &self.trace.header.scenario;
            self.report.first_violation = Some(ViolationReport {
                round,
                time: Timestamp::from_global_round(round, sc.f),
                nodes,
                detail: detail.into(),
                reproducer: Reproducer { scenario: sc.name.clone(), seed: sc.seed, round },
            });
        }
    }

    fn metric(&mut self, k: &str, v: f64) {
        self.report.metrics.insert(k.into(), v);
    }

    fn done(self) -> PropertyReport {
        self.report
    }
}

/// Digest, order and timeline data rebuilt from a trace.
pub struct Replay<'a> {
    pub trace: &'a RunTrace,
    digests: HashMap<SlotDigest, (SlotDigest, Vec<BlockId>)>,
    orders: RefCell<HashMap<SlotDigest, Rc<Vec<BlockId>>>>,
    members: RefCell<HashMap<SlotDigest, Rc<HashSet<BlockId>>>>,
    /// Blocks by correct authors: id → (author, creation round, txs).
    pub blocks: BTreeMap<(u64, NodeId), Vec<(BlockId, Vec<TxId>)>>,
    pub awake: BTreeMap<u64, Vec<NodeId>>,
    /// `(slot, node)` → digest adopted at round 1, and its round.
    pub starts: BTreeMap<(u64, NodeId), (SlotDigest, u64)>,
    /// `(slot, node)` → digest computed at the last round.
    pub ends: BTreeMap<(u64, NodeId), (SlotDigest, u64)>,
    /// Per node, finalized digests in order with their round.
    pub finals: BTreeMap<NodeId, Vec<(u64, SlotDigest)>>,
    pub last_round: u64,
}

impl<'a> Replay<'a> {
    pub fn new(trace: &'a RunTrace) -> Self {
        let mut r = Replay {
            trace,
            digests: HashMap::new(),
            orders: RefCell::new(HashMap::new()),
            members: RefCell::new(HashMap::new()),
            blocks: BTreeMap::new(),
            awake: BTreeMap::new(),
            starts: BTreeMap::new(),
            ends: BTreeMap::new(),
            finals: BTreeMap::new(),
            last_round: 0,
        };
        for rec in &trace.records {
            r.last_round = r.last_round.max(rec.round);
            match &rec.event {
                crate::trace::TraceEvent::Node(NodeEvent::DigestRegistered { digest, parent, blocks }) => {
                    r.digests.entry(*digest).or_insert_with(|| (*parent, blocks.clone()));
                }
                crate::trace::TraceEvent::Sim(SimEvent::SlotStart { awake, .. }) => {
                    r.awake.insert(rec.time.slot, awake.clone());
                }
                _ => {}
            }
        }
        for (rec, node, e) in trace.node_events() {
            let key = (rec.time.slot, node);
            match e {
                NodeEvent::BlockCreated { id, txs, .. } => {
                    r.blocks.entry((rec.round, node)).or_default().push((*id, txs.clone()));
                }
                NodeEvent::AdoptStart { digest, .. } => {
                    r.starts.insert(key, (*digest, rec.round));
                }
                NodeEvent::AdoptEnd { digest, .. } => {
                    r.ends.insert(key, (*digest, rec.round));
                }
                NodeEvent::Finalize { digest, .. } => r.finals.entry(node).or_default().push((rec.round, *digest)),
                _ => {}
            }
        }
        r
    }

    pub fn is_awake(&self, slot: u64, node: NodeId) -> bool {
        self.awake.get(&slot).is_none_or(|a| a.contains(&node))
    }

    /// `Order(σ)` as a block-id sequence.
    pub fn order(&self, d: &SlotDigest) -> Result<Rc<Vec<BlockId>>, String> {
        if let Some(o) = self.orders.borrow().get(d) {
            return Ok(o.clone());
        }
        // walk back to a memoised ancestor, then build forward
        let mut chain = Vec::new();
        let mut cur = *d;
        let base: Rc<Vec<BlockId>> = loop {
            if cur.is_root() {
                break Rc::new(Vec::new());
            }
            if let Some(o) = self.orders.borrow().get(&cur) {
                break o.clone();
            }
            let (parent, _) = self.digests.get(&cur).ok_or_else(|| format!("digest {cur} never registered"))?;
            chain.push(cur);
            if chain.len() > self.digests.len() + 1 {
                return Err(format!("digest {d} has a cyclic ancestry"));
            }
            cur = *parent;
        };
        let mut acc = (*base).clone();
        let mut out = base;
        for x in chain.into_iter().rev() {
            acc.extend(self.digests[&x].1.iter().copied());
            out = Rc::new(acc.clone());
            self.orders.borrow_mut().insert(x, out.clone());
        }
        Ok(out)
    }

    pub fn contains(&self, d: &SlotDigest, b: &BlockId) -> Result<bool, String> {
        if let Some(m) = self.members.borrow().get(d) {
            return Ok(m.contains(b));
        }
        let set: Rc<HashSet<BlockId>> = Rc::new(self.order(d)?.iter().copied().collect());
        let hit = set.contains(b);
        self.members.borrow_mut().insert(*d, set);
        Ok(hit)
    }

    /// First position at which the two orders differ, if neither is a prefix of the other.
    pub fn divergence(&self, a: &SlotDigest, b: &SlotDigest) -> Result<Option<usize>, String> {
        let (x, y) = (self.order(a)?, self.order(b)?);
        Ok(x.iter().zip(y.iter()).position(|(p, q)| p != q))
    }

    /// Checks a set of `(digest, node)` pairs is totally ordered by prefix.
    fn comparable(&self, items: &[(SlotDigest, NodeId)]) -> Result<Option<String>, String> {
        let mut uniq: Vec<(SlotDigest, NodeId, usize)> = Vec::new();
        for &(d, n) in items {
            if !uniq.iter().any(|u| u.0 == d) {
                uniq.push((d, n, self.order(&d)?.len()));
            }
        }
        uniq.sort_by_key(|u| (u.2, u.0));
        for w in uniq.windows(2) {
            if let Some(pos) = self.divergence(&w[0].0, &w[1].0)? {
                return Ok(Some(format!(
                    "orders of {} (node {}) and {} (node {}) diverge at position {pos}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(None)
    }

    /// First slot at or after GST from which every correct node starts each slot with one common digest.
    pub fn s_same(&self) -> Option<u64> {
        let sc = &self.trace.header.scenario;
        let correct = self.trace.correct_nodes();
        let mut candidate = None;
        for s in sc.gst_slot()..=sc.horizon_slots {
            let ds: BTreeSet<SlotDigest> =
                correct.iter().filter(|&&n| self.is_awake(s, n)).filter_map(|&n| self.starts.get(&(s, n)).map(|x| x.0)).collect();
            if ds.len() <= 1 {
                candidate.get_or_insert(s);
            } else {
                candidate = None;
            }
        }
        candidate
    }

    fn correct_blocks(&self) -> impl Iterator<Item = (u64, NodeId, &BlockId)> {
        self.blocks.iter().flat_map(|(&(g, n), v)| v.iter().map(move |(id, _)| (g, n, id)))
    }
}

fn f(trace: &RunTrace) -> u32 {
    trace.header.scenario.f
}

fn round_of(trace: &RunTrace, t: Timestamp) -> u64 {
    t.global_round(f(trace))
}

/// Awake correct nodes' Order_own are prefix-comparable at every slot start and end.
pub fn check_order_own_safety(trace: &RunTrace) -> PropertyReport {
    let rp = Replay::new(trace);
    let mut v = Verdict::new(trace, "order-own-safety");
    let sc = &trace.header.scenario;
    for s in 1..=sc.horizon_slots {
        for (label, map) in [("start", &rp.starts), ("end", &rp.ends)] {
            let items: Vec<(SlotDigest, NodeId)> = trace
                .correct_nodes()
                .into_iter()
                .filter(|&n| rp.is_awake(s, n))
                .filter_map(|n| map.get(&(s, n)).map(|x| (x.0, n)))
                .collect();
            if items.is_empty() {
                continue;
            }
            v.check();
            let round = items.iter().filter_map(|(_, n)| map.get(&(s, *n)).map(|x| x.1)).max().unwrap_or(0);
            match rp.comparable(&items) {
                Ok(None) => {}
                Ok(Some(d)) => v.fail(round, items.iter().map(|x| x.1).collect(), format!("slot {s} {label}: {d}")),
                Err(e) => v.fail(round, items.iter().map(|x| x.1).collect(), e),
            }
        }
    }
    v.done()
}

/// Every block by a slot-s awake correct node is in the Order_own every awake
/// correct node adopts at slots s+2 and later.
pub fn check_order_own_liveness(trace: &RunTrace) -> PropertyReport {
    let rp = Replay::new(trace);
    let mut v = Verdict::new(trace, "order-own-liveness");
    let sc = &trace.header.scenario;
    let r = (f(trace) + 2) as u64;
    for (g, author, id) in rp.correct_blocks() {
        let s = Timestamp::from_global_round(g, f(trace)).slot;
        for t in s + 2..=sc.horizon_slots {
            for n in trace.correct_nodes() {
                let Some(&(d, at)) = rp.starts.get(&(t, n)) else { continue };
                if !rp.is_awake(t, n) {
                    continue;
                }
                v.check();
                match rp.contains(&d, id) {
                    Ok(true) => {}
                    Ok(false) => v.fail(at, vec![author, n], format!("block {id} by {author} from slot {s} missing from {n}'s order at slot {t}")),
                    Err(e) => v.fail(at, vec![n], e),
                }
            }
        }
    }
    v.metric("rounds_per_slot", r as f64);
    v.done()
}

/// Post-GST, correct nodes that start a slot with equal digests end it with equal digests.
pub fn check_same_sc(trace: &RunTrace) -> PropertyReport {
    let rp = Replay::new(trace);
    let mut v = Verdict::new(trace, "same-sc");
    let sc = &trace.header.scenario;
    let correct = trace.correct_nodes();
    for s in sc.gst_slot()..=sc.horizon_slots {
        let here: Vec<NodeId> = correct.iter().copied().filter(|&n| rp.is_awake(s, n)).collect();
        for (i, &a) in here.iter().enumerate() {
            for &b in &here[i + 1..] {
                let (Some(sa), Some(sb)) = (rp.starts.get(&(s, a)), rp.starts.get(&(s, b))) else { continue };
                if sa.0 != sb.0 {
                    continue;
                }
                let (ea, eb) = (rp.ends.get(&(s, a)), rp.ends.get(&(s, b)));
                if ea.is_none() && eb.is_none() && s == sc.horizon_slots {
                    continue;
                }
                v.check();
                if ea.map(|x| x.0) != eb.map(|x| x.0) {
                    let round = round_of(trace, Timestamp::new(s, f(trace) + 2));
                    let show = |e: Option<&(SlotDigest, u64)>| e.map_or("none".to_string(), |x| x.0.to_string());
                    v.fail(round, vec![a, b], format!("slot {s}: both started at {}, ended at {} vs {}", sa.0, show(ea), show(eb)));
                }
            }
        }
    }
    v.done()
}

/// All finalized digests of all correct nodes are prefix-comparable.
pub fn check_order_final_safety(trace: &RunTrace) -> PropertyReport {
    let rp = Replay::new(trace);
    let mut v = Verdict::new(trace, "order-final-safety");
    let mut seen: Vec<(SlotDigest, NodeId)> = Vec::new();
    let mut events: Vec<(u64, NodeId, SlotDigest)> =
        rp.finals.iter().flat_map(|(&n, l)| l.iter().map(move |&(g, d)| (g, n, d))).collect();
    events.sort();
    let mut failed = false;
    for (g, n, d) in events {
        v.check();
        if failed || seen.iter().any(|x| x.0 == d) {
            continue;
        }
        seen.push((d, n));
        match rp.comparable(&seen) {
            Ok(None) => {}
            Ok(Some(msg)) => {
                let mut nodes: Vec<NodeId> = seen.iter().map(|x| x.1).collect();
                nodes.sort();
                nodes.dedup();
                v.fail(g, nodes, msg);
                failed = true;
            }
            Err(e) => {
                v.fail(g, vec![n], e);
                failed = true;
            }
        }
    }
    v.done()
}

/// After `s_same`, each correct slot-s block is final at every correct node by `⟨s+2, 3⟩`.
pub fn check_order_final_liveness(trace: &RunTrace) -> PropertyReport {
    let rp = Replay::new(trace);
    let mut v = Verdict::new(trace, "order-final-liveness");
    let sc = &trace.header.scenario;
    let fv = f(trace);
    let Some(s_same) = rp.s_same() else {
        let g = round_of(trace, Timestamp::new(sc.horizon_slots, 1));
        v.fail(g, trace.correct_nodes(), "correct nodes never settled on a common digest");
        return v.done();
    };
    v.metric("s_same", s_same as f64);
    v.metric("s_same_minus_gst", (s_same - sc.gst_slot()) as f64);
    let mut lat = Vec::new();
    for (g, author, id) in rp.correct_blocks() {
        let s = Timestamp::from_global_round(g, fv).slot;
        if s < s_same || s + 2 > sc.horizon_slots {
            continue;
        }
        let deadline = round_of(trace, Timestamp::new(s + 2, 3));
        for n in trace.correct_nodes() {
            v.check();
            let list = rp.finals.get(&n).map(Vec::as_slice).unwrap_or(&[]);
            let at_deadline = list.iter().take_while(|x| x.0 <= deadline).last();
            let ok = match at_deadline {
                Some((_, d)) => rp.contains(d, id).unwrap_or(false),
                None => false,
            };
            if !ok {
                v.fail(deadline, vec![author, n], format!("block {id} from slot {s} not final at {n} by <{},3>", s + 2));
                continue;
            }
            if let Some((fg, _)) = list.iter().find(|(_, d)| rp.contains(d, id).unwrap_or(false)) {
                lat.push((fg - g) as f64);
            }
        }
    }
    if !lat.is_empty() {
        v.metric("final_latency_rounds_mean", lat.iter().sum::<f64>() / lat.len() as f64);
        v.metric("final_latency_rounds_max", lat.iter().cloned().fold(0.0, f64::max));
    }
    v.done()
}

/// In the slot-sleepy model no correct node ever raises the ELSS flag.
pub fn check_ss_no_elss_flag(trace: &RunTrace) -> PropertyReport {
    let mut v = Verdict::new(trace, "ss-no-elss-flag");
    for (rec, n, e) in trace.node_events() {
        if matches!(e, NodeEvent::AdoptStart { .. }) {
            v.check();
        }
        if let NodeEvent::ElssFlag { cause } = e {
            v.fail(rec.round, vec![n], format!("flag raised: {cause}"));
        }
    }
    v.done()
}

/// Every correct node's own cone passed the independent validity audit.
pub fn check_valid_dag(trace: &RunTrace) -> PropertyReport {
    let mut v = Verdict::new(trace, "valid-dag");
    for (rec, n, e) in trace.node_events() {
        match e {
            NodeEvent::BlockCreated { .. } => v.check(),
            NodeEvent::AuditFailure { violation } => v.fail(rec.round, vec![n], format!("{violation}")),
            _ => {}
        }
    }
    v.done()
}

/// No correct node is ever reported as an equivocator, by anyone.
pub fn check_no_correct_equivocator(trace: &RunTrace) -> PropertyReport {
    let mut v = Verdict::new(trace, "no-correct-equivocator");
    for (rec, n, e) in trace.node_events() {
        if let NodeEvent::Equivocation { node, .. } = e {
            v.check();
            if trace.is_correct(*node) {
                v.fail(rec.round, vec![n, *node], format!("{n} flagged correct node {node}"));
            }
        }
    }
    v.done()
}

struct TxInfo {
    inputs: Vec<UtxoId>,
    outputs: u32,
    kind: String,
    pair: Option<u32>,
}

/// Ledger data rebuilt from release and confirmation events.
struct LedgerReplay {
    txs: HashMap<TxId, TxInfo>,
    /// Per correct node: confirmations in order.
    confirms: BTreeMap<NodeId, Vec<(u64, TxId, ConfirmPath)>>,
    /// First round a correct node's block carried the tx, and that block's slot.
    included: HashMap<TxId, u64>,
    included_any: HashMap<TxId, u64>,
    /// Per correct node: slot → (finality time, round it was fixed).
    finality: BTreeMap<NodeId, BTreeMap<i64, (i64, u64)>>,
    run_end: BTreeMap<NodeId, Vec<TxId>>,
    violations: Vec<(u64, NodeId, String)>,
}

impl LedgerReplay {
    fn new(trace: &RunTrace) -> Self {
        let mut lr = LedgerReplay {
            txs: HashMap::new(),
            confirms: BTreeMap::new(),
            included: HashMap::new(),
            included_any: HashMap::new(),
            finality: BTreeMap::new(),
            run_end: BTreeMap::new(),
            violations: Vec::new(),
        };
        for (rec, e) in trace.sim_events() {
            match e {
                SimEvent::TxRelease { tx, kind, inputs, outputs, pair, .. } => {
                    lr.txs.insert(*tx, TxInfo { inputs: inputs.clone(), outputs: *outputs, kind: kind.clone(), pair: *pair });
                }
                SimEvent::RunEnd { txs, .. } => {
                    if let Some(n) = rec.node.filter(|&n| trace.is_correct(n)) {
                        lr.run_end.insert(n, txs.clone());
                    }
                }
                _ => {}
            }
        }
        for rec in &trace.records {
            if let (crate::trace::TraceEvent::Node(NodeEvent::BlockCreated { txs, .. }), Some(n)) = (&rec.event, rec.node) {
                for tx in txs {
                    lr.included_any.entry(*tx).or_insert(rec.round);
                    if trace.is_correct(n) {
                        lr.included.entry(*tx).or_insert(rec.round);
                    }
                }
            }
        }
        for (rec, n, e) in trace.node_events() {
            match e {
                NodeEvent::Confirm { tx, path } => lr.confirms.entry(n).or_default().push((rec.round, *tx, *path)),
                NodeEvent::FinalityTime { slots, tau } => {
                    for &x in slots {
                        lr.finality.entry(n).or_default().entry(x).or_insert((*tau, rec.round));
                    }
                }
                NodeEvent::LedgerViolation { detail } => lr.violations.push((rec.round, n, detail.clone())),
                _ => {}
            }
        }
        lr
    }
}

/// No correct ledger ever confirms two transactions spending one output,
/// or a transaction whose inputs do not exist.
pub fn check_ledger_safety(trace: &RunTrace) -> PropertyReport {
    let lr = LedgerReplay::new(trace);
    let mut v = Verdict::new(trace, "ledger-safety");
    let genesis = trace.header.genesis_tx;
    for (g, n, d) in &lr.violations {
        v.fail(*g, vec![*n], format!("node reported: {d}"));
    }
    for n in trace.correct_nodes() {
        let mut outputs: HashMap<TxId, u32> = HashMap::from([(genesis, trace.header.genesis_outputs)]);
        let mut spent: HashMap<UtxoId, TxId> = HashMap::new();
        for &(g, tx, _) in lr.confirms.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            v.check();
            let Some(info) = lr.txs.get(&tx) else {
                v.fail(g, vec![n], format!("confirmed unknown transaction {tx}"));
                continue;
            };
            if outputs.contains_key(&tx) {
                v.fail(g, vec![n], format!("{tx} confirmed twice"));
                continue;
            }
            for u in &info.inputs {
                if outputs.get(&u.tx).is_none_or(|&k| u.index >= k) {
                    v.fail(g, vec![n], format!("{tx} spends {}:{} which is not confirmed", u.tx, u.index));
                }
                if let Some(other) = spent.insert(*u, tx) {
                    v.fail(g, vec![n], format!("double spend: {tx} and {other} both spend {}:{}", u.tx, u.index));
                }
            }
            outputs.insert(tx, info.outputs);
        }
    }
    v.done()
}

/// Every fast-path confirmation reaches every correct ledger by the horizon,
/// and the final ledger dump matches the confirmation events.
pub fn check_ledger_consistency(trace: &RunTrace) -> PropertyReport {
    let lr = LedgerReplay::new(trace);
    let mut v = Verdict::new(trace, "ledger-consistency");
    let genesis = trace.header.genesis_tx;
    let mut fast: BTreeMap<TxId, (u64, NodeId)> = BTreeMap::new();
    for (&n, l) in &lr.confirms {
        for &(g, tx, p) in l {
            if p == ConfirmPath::Fast {
                fast.entry(tx).or_insert((g, n));
            }
        }
    }
    let end = lr.confirms.values().flatten().map(|x| x.0).max().unwrap_or(0);
    for n in trace.correct_nodes() {
        let mine: HashSet<TxId> = lr.confirms.get(&n).map(|l| l.iter().map(|x| x.1).collect()).unwrap_or_default();
        for (tx, &(g, by)) in &fast {
            v.check();
            if !mine.contains(tx) {
                v.fail(end.max(g), vec![by, n], format!("{tx} fast-confirmed by {by} never reached {n}"));
            }
        }
        if let Some(dump) = lr.run_end.get(&n) {
            let dumped: HashSet<TxId> = dump.iter().copied().filter(|t| *t != genesis).collect();
            v.check();
            if dumped != mine {
                v.fail(end, vec![n], format!("ledger dump of {n} holds {} txs, events confirm {}", dumped.len(), mine.len()));
            }
        }
    }
    v.metric("fast_confirmed", fast.len() as f64);
    v.done()
}

/// Cautious transactions included at round i (after sync) are fast-confirmed
/// by every correct node in the state update of round i+3.
pub fn check_fast_path_latency(trace: &RunTrace) -> PropertyReport {
    let lr = LedgerReplay::new(trace);
    let rp = Replay::new(trace);
    let mut v = Verdict::new(trace, "fast-path-latency");
    let fv = f(trace);
    let sync = rp.s_same().unwrap_or(u64::MAX);
    let mut lat = Vec::new();
    let mut cautious: Vec<&TxId> = lr.txs.iter().filter(|(_, i)| i.kind == "cautious").map(|(t, _)| t).collect();
    cautious.sort();
    for tx in cautious {
        let Some(&i) = lr.included.get(tx) else { continue };
        if Timestamp::from_global_round(i, fv).slot < sync || i + 3 > rp.last_round {
            continue;
        }
        for n in trace.correct_nodes() {
            v.check();
            let hit = lr.confirms.get(&n).and_then(|l| l.iter().find(|x| x.1 == *tx));
            match hit {
                Some(&(g, _, ConfirmPath::Fast)) if g == i + 3 => lat.push((g - i) as f64),
                Some(&(g, _, p)) => {
                    lat.push(g as f64 - i as f64);
                    v.fail(g, vec![n], format!("{tx} included at round {i} confirmed by {p:?} at round {g}, expected fast at {}", i + 3))
                }
                None => v.fail(i + 3, vec![n], format!("{tx} included at round {i} never confirmed")),
            }
        }
    }
    if !lat.is_empty() {
        v.metric("latency_rounds_mean", lat.iter().sum::<f64>() / lat.len() as f64);
        v.metric("latency_rounds_max", lat.iter().cloned().fold(0.0, f64::max));
    }
    v.done()
}

/// Double spends with no fast confirmation are settled by the consensus path:
/// each correct node confirms exactly one half within 4 slots of the finality
/// time of the slot where the pair first appeared.
pub fn check_double_spend_unlock(trace: &RunTrace) -> PropertyReport {
    let lr = LedgerReplay::new(trace);
    let mut v = Verdict::new(trace, "double-spend-unlock");
    let sc = &trace.header.scenario;
    let fv = f(trace);
    let mut pairs: BTreeMap<u32, Vec<TxId>> = BTreeMap::new();
    for (tx, info) in &lr.txs {
        if let Some(p) = info.pair {
            pairs.entry(p).or_default().push(*tx);
        }
    }
    let confirmed_at = |n: NodeId, tx: &TxId| lr.confirms.get(&n).and_then(|l| l.iter().find(|x| x.1 == *tx).copied());
    let mut delays = Vec::new();
    for (p, mut halves) in pairs {
        halves.sort();
        let any_fast = trace
            .correct_nodes()
            .into_iter()
            .any(|n| halves.iter().any(|t| confirmed_at(n, t).is_some_and(|c| c.2 == ConfirmPath::Fast)));
        if any_fast {
            continue;
        }
        let first = halves
            .iter()
            .filter_map(|t| lr.included.get(t))
            .min()
            .or_else(|| halves.iter().filter_map(|t| lr.included_any.get(t)).min());
        let Some(&first) = first else { continue };
        let slot = Timestamp::from_global_round(first, fv).slot as i64;
        for n in trace.correct_nodes() {
            v.check();
            let Some(&(tau, fixed)) = lr.finality.get(&n).and_then(|m| m.get(&slot)) else {
                if (sc.horizon_slots as i64) >= slot + 6 {
                    v.fail(rp_end(trace), vec![n], format!("pair {p}: slot {slot} never got a finality time at {n}"));
                }
                continue;
            };
            let got: Vec<(u64, TxId, ConfirmPath)> = halves.iter().filter_map(|t| confirmed_at(n, t)).collect();
            match got.as_slice() {
                [(g, _, _)] => {
                    let cs = Timestamp::from_global_round(*g, fv).slot as i64;
                    delays.push((cs - tau) as f64);
                    if cs > tau + 4 {
                        v.fail(*g, vec![n], format!("pair {p}: resolved at slot {cs}, finality time {tau}"));
                    }
                }
                [] => v.fail(fixed, vec![n], format!("pair {p}: neither half confirmed at {n} (finality time {tau})")),
                _ => v.fail(fixed, vec![n], format!("pair {p}: both halves confirmed at {n}")),
            }
        }
    }
    if !delays.is_empty() {
        v.metric("resolution_after_finality_slots_max", delays.iter().cloned().fold(f64::MIN, f64::max));
    }
    v.done()
}

fn rp_end(trace: &RunTrace) -> u64 {
    trace.records.iter().map(|r| r.round).max().unwrap_or(0)
}

/// The properties that apply to this trace's model and workload.
pub fn check_all(trace: &RunTrace) -> Vec<PropertyReport> {
    let sc = &trace.header.scenario;
    let mut out = Vec::new();
    let ss_like = matches!(sc.model, Model::SlotSleepy | Model::LockStep);
    if ss_like {
        out.push(check_order_own_safety(trace));
        out.push(check_order_own_liveness(trace));
    }
    if matches!(sc.model, Model::SlotSleepy) {
        out.push(check_ss_no_elss_flag(trace));
    }
    out.push(check_same_sc(trace));
    out.push(check_order_final_safety(trace));
    if !matches!(sc.model, Model::SlotSleepy) {
        out.push(check_order_final_liveness(trace));
    }
    if sc.audit {
        out.push(check_valid_dag(trace));
    }
    out.push(check_no_correct_equivocator(trace));
    if !sc.workload.is_empty() {
        out.push(check_ledger_safety(trace));
        out.push(check_ledger_consistency(trace));
        out.push(check_fast_path_latency(trace));
        out.push(check_double_spend_unlock(trace));
    }
    out
}

pub const PROPERTY_NAMES: [&str; 12] = [
    "order-own-safety",
    "order-own-liveness",
    "ss-no-elss-flag",
    "same-sc",
    "order-final-safety",
    "order-final-liveness",
    "valid-dag",
    "no-correct-equivocator",
    "ledger-safety",
    "ledger-consistency",
    "fast-path-latency",
    "double-spend-unlock",
];

/// Runs one named property.
pub fn check_named(trace: &RunTrace, name: &str) -> Option<PropertyReport> {
    Some(match name {
        "order-own-safety" => check_order_own_safety(trace),
        "order-own-liveness" => check_order_own_liveness(trace),
        "ss-no-elss-flag" => check_ss_no_elss_flag(trace),
        "same-sc" => check_same_sc(trace),
        "order-final-safety" => check_order_final_safety(trace),
        "order-final-liveness" => check_order_final_liveness(trace),
        "valid-dag" => check_valid_dag(trace),
        "no-correct-equivocator" => check_no_correct_equivocator(trace),
        "ledger-safety" => check_ledger_safety(trace),
        "ledger-consistency" => check_ledger_consistency(trace),
        "fast-path-latency" => check_fast_path_latency(trace),
        "double-spend-unlock" => check_double_spend_unlock(trace),
        _ => return None,
    })
}
