//! Per-node round loop: receive, state update, block creation and send.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::commitment::{compute_slot_digest, last_commit_certificate, BackboneChain, DigestRegistry, FinalityState};
use crate::crypto::Authenticator;
use crate::dag::{reach_number, unordered_pair, BlockIdx, BlockSet, BlockStore, Buffer, DagStore, EqSet, Validator, Violation, GENESIS_IDX};
use crate::error::Result;
use crate::ledger::{ConfirmPath, ConsensusPathCursor, FastPath, Mempool, TxOracle, UtxoLedger};
use crate::tx::{TxId, UtxoTx};
use crate::types::{Block, BlockId, EquivocationProof, NodeId, SlotDigest, Timestamp};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: NodeId,
    pub n: u32,
    pub f: u32,
    pub tx_cap: usize,
    /// Re-validate `cone(B_own)` with an independent validator after every round.
    pub audit: bool,
}

/// Why UpdateDAG turned a candidate down.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum RejectReason {
    /// Cone holds a current-slot block by a member of `EqSet(σ)`.
    U1 { equivocator: NodeId },
    /// Cone is not a valid DAG.
    U2 { violation: Violation },
    /// An uncommitted older block is reachable from too few current-slot authors.
    U3 { block: BlockId, reach: usize, needed: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "payload")]
pub enum NodeEvent {
    BlockCreated {
        id: BlockId,
        time: Timestamp,
        digest: SlotDigest,
        refs: Vec<BlockId>,
        txs: Vec<TxId>,
        evidence: Vec<NodeId>,
        bytes: usize,
    },
    DigestRegistered {
        digest: SlotDigest,
        parent: SlotDigest,
        blocks: Vec<BlockId>,
    },
    /// Digest the node carries into a slot, after any switch or wake-up.
    AdoptStart {
        slot: u64,
        digest: SlotDigest,
    },
    /// Digest computed at the end of a slot.
    AdoptEnd {
        slot: i64,
        digest: SlotDigest,
    },
    DagAccept {
        block: BlockId,
        author: NodeId,
        added: usize,
    },
    DagReject {
        block: BlockId,
        author: NodeId,
        reason: RejectReason,
    },
    ChainSwitch {
        leader: NodeId,
        from: SlotDigest,
        to: SlotDigest,
        minority: bool,
    },
    SwitchSkipped {
        reason: String,
    },
    WakeUp {
        adopted: Option<SlotDigest>,
        support: usize,
        total: usize,
    },
    ElssFlag {
        cause: String,
    },
    Equivocation {
        node: NodeId,
        first: BlockId,
        second: BlockId,
    },
    BadSignature {
        block: BlockId,
    },
    Finalize {
        slot: i64,
        digest: SlotDigest,
    },
    FinalityTime {
        slots: Vec<i64>,
        tau: i64,
    },
    Confirm {
        tx: TxId,
        path: ConfirmPath,
    },
    AuditFailure {
        violation: Violation,
    },
    LedgerViolation {
        detail: String,
    },
    Skipped {
        phase: String,
        detail: String,
    },
}

#[derive(Clone, Debug, Default)]
pub struct StepOutput {
    pub block: Option<BlockIdx>,
    /// Per recipient, the blocks of `cone(B_own)` it has not seen yet, oldest first.
    pub sends: Vec<(NodeId, Vec<BlockIdx>)>,
    pub events: Vec<NodeEvent>,
}

pub struct NodeState {
    cfg: NodeConfig,
    dag: DagStore,
    buffer: Buffer,
    chain: BackboneChain,
    registry: DigestRegistry,
    validator: Validator,
    auditor: Option<(Validator, DigestRegistry)>,
    ledger: UtxoLedger,
    oracle: TxOracle,
    fast: FastPath,
    cursor: ConsensusPathCursor,
    finality: FinalityState,
    eqset: EqSet,
    proofs_sent: BTreeSet<NodeId>,
    history: HashMap<NodeId, BlockSet>,
    b_own: Option<BlockIdx>,
    i_elss: bool,
    mempool: Mempool,
    events: Vec<NodeEvent>,
}

impl NodeState {
    pub fn new(cfg: NodeConfig, store: &BlockStore, accounts: Arc<dyn Authenticator>) -> Self {
        let genesis_txs: Vec<UtxoTx> = store.block(GENESIS_IDX).txs.clone();
        let auditor = cfg.audit.then(|| (Validator::new(), DigestRegistry::new()));
        NodeState {
            dag: DagStore::new(),
            buffer: Buffer::new(),
            chain: BackboneChain::root(),
            registry: DigestRegistry::new(),
            validator: Validator::new(),
            auditor,
            ledger: UtxoLedger::new(&genesis_txs),
            oracle: TxOracle::new(store, accounts),
            fast: FastPath::new(),
            cursor: ConsensusPathCursor::new(),
            finality: FinalityState::default(),
            eqset: EqSet::new(),
            proofs_sent: BTreeSet::new(),
            history: HashMap::new(),
            b_own: None,
            i_elss: false,
            mempool: Mempool::new(cfg.tx_cap),
            events: Vec::new(),
            cfg,
        }
    }

    pub fn id(&self) -> NodeId {
        self.cfg.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn dag(&self) -> &DagStore {
        &self.dag
    }

    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    pub fn chain(&self) -> &BackboneChain {
        &self.chain
    }

    pub fn registry(&self) -> &DigestRegistry {
        &self.registry
    }

    pub fn ledger(&self) -> &UtxoLedger {
        &self.ledger
    }

    pub fn finality(&self) -> &FinalityState {
        &self.finality
    }

    pub fn eqset(&self) -> &EqSet {
        &self.eqset
    }

    pub fn b_own(&self) -> Option<BlockIdx> {
        self.b_own
    }

    pub fn i_elss(&self) -> bool {
        self.i_elss
    }

    pub fn mempool_mut(&mut self) -> &mut Mempool {
        &mut self.mempool
    }

    pub fn current_commit(&self) -> SlotDigest {
        self.chain.last()
    }

    pub fn order_own(&self) -> Result<Vec<BlockIdx>> {
        self.registry.order_of(&self.chain.last())
    }

    pub fn order_final(&self) -> Result<Vec<BlockIdx>> {
        self.registry.order_of(&self.finality.final_digest)
    }

    /// Runs one round at `now`. `leader` is the oracle's pick for `now.slot`, used at round 1.
    pub fn step(&mut self, store: &mut BlockStore, now: Timestamp, inbox: &[BlockIdx], leader: Option<NodeId>) -> Result<StepOutput> {
        self.state_update(store, now, inbox, leader)?;
        let mut out = StepOutput::default();
        let b = self.create_block(store, now)?;
        out.block = Some(b);
        self.audit(store);
        out.sends = self.broadcast(store);
        self.drain_registry(store);
        out.events = std::mem::take(&mut self.events);
        Ok(out)
    }

    /// Receive and state-update phases without creating a block.
    pub fn state_update(&mut self, store: &BlockStore, now: Timestamp, inbox: &[BlockIdx], leader: Option<NodeId>) -> Result<()> {
        let f = self.cfg.f;
        let first = now == Timestamp::new(1, 1);
        if !first {
            self.receive(store, inbox);
            self.update_dag(store, now)?;
            if now.round == 1 {
                let prev_end = Timestamp::new(now.slot - 1, f + 2);
                if self.b_own.map(|b| store.block(b).time) == Some(prev_end) {
                    self.switch_chain(store, now, leader)?;
                } else {
                    self.wake_up_chain(store, now)?;
                }
            }
            if now.is_last_round(f) {
                self.update_chain(store, now)?;
            }
            self.confirm_transactions(store);
            self.finalize_slots(store, now)?;
        }
        if now.round == 1 {
            self.events.push(NodeEvent::AdoptStart { slot: now.slot, digest: self.chain.last() });
        }
        Ok(())
    }

    /// Receive phase: buffer signed blocks, update histories and equivocators.
    pub fn receive(&mut self, store: &BlockStore, inbox: &[BlockIdx]) {
        let mut touched = BTreeSet::new();
        for &b in inbox {
            let e = store.entry(b);
            if !e.sig_ok {
                self.events.push(NodeEvent::BadSignature { block: e.id });
                continue;
            }
            if self.buffer.insert(store, b) {
                touched.insert(e.block.node);
            }
            for &(x, y) in &e.proofs {
                for z in [x, y] {
                    if self.buffer.insert(store, z) {
                        touched.insert(store.block(z).node);
                    }
                }
            }
        }
        for b in self.buffer.refresh(store) {
            let node = store.block(b).node;
            touched.insert(node);
            if node != NodeId::GENESIS {
                let cone = store.cone(b).expect("complete");
                self.history.entry(node).or_default().union_with(cone);
            }
        }
        for node in touched {
            if node == NodeId::GENESIS || self.eqset.contains(node) {
                continue;
            }
            let buf = &self.buffer;
            if let Some((a, b)) = unordered_pair(store, buf.authored_by(node), |x| buf.is_complete(x)) {
                self.eqset.insert(node, a, b);
                self.events.push(NodeEvent::Equivocation { node, first: store.id(a), second: store.id(b) });
            }
        }
    }

    fn add_to_dag(&mut self, store: &BlockStore, b: BlockIdx) -> Result<usize> {
        let fresh = self.dag.add_cone(store, b)?;
        self.fast.observe(store, &fresh);
        Ok(fresh.len())
    }

    fn update_dag(&mut self, store: &BlockStore, now: Timestamp) -> Result<()> {
        let f = self.cfg.f;
        let bt = now.before(f)?;
        if self.b_own.map(|b| store.block(b).time) != Some(bt) {
            return Ok(());
        }
        let sigma = self.chain.last();
        let eq_sigma = self.registry.eq_set(store, &sigma)?.clone();
        let committed = self.registry.committed(&sigma)?.clone();
        let mut cands: Vec<BlockIdx> = store
            .at_slot(bt.slot)
            .iter()
            .copied()
            .filter(|&b| {
                let blk = store.block(b);
                blk.time == bt
                    && blk.digest == sigma
                    && self.buffer.contains(b)
                    && self.buffer.is_complete(b)
                    && !self.eqset.contains(blk.node)
                    && !self.dag.contains(b)
            })
            .collect();
        cands.sort_by_key(|&b| (store.block(b).node, store.id(b)));
        let s = now.slot;
        let need = (now.round - 1) as usize;
        for b in cands {
            if self.dag.contains(b) {
                continue;
            }
            let cone = store.cone(b).expect("complete").clone();
            let reason = if let Some(c) =
                cone.iter().find(|&c| store.block(c).slot() == s && eq_sigma.contains(&store.block(c).node))
            {
                Some(RejectReason::U1 { equivocator: store.block(c).node })
            } else if let Some((c, reach)) = cone
                .difference(self.dag.members())
                .filter(|&c| store.block(c).slot() < s && !committed.contains(c))
                .map(|c| (c, reach_number(store, c, b)))
                .find(|&(_, r)| r < need)
            {
                Some(RejectReason::U3 { block: store.id(c), reach, needed: need })
            } else {
                self.validator.check_cone(store, &mut self.registry, b).err().map(|violation| RejectReason::U2 { violation })
            };
            let (id, author) = (store.id(b), store.block(b).node);
            match reason {
                None => {
                    let added = self.add_to_dag(store, b)?;
                    self.events.push(NodeEvent::DagAccept { block: id, author, added });
                }
                Some(reason) => self.events.push(NodeEvent::DagReject { block: id, author, reason }),
            }
        }
        Ok(())
    }

    fn last_block_from(&self, node: NodeId) -> Option<BlockIdx> {
        self.buffer.authored_by(node).last().copied()
    }

    /// Latest blocks by non-equivocators created at `t`.
    fn last_blocks_at(&self, store: &BlockStore, t: Timestamp) -> Vec<BlockIdx> {
        (0..self.cfg.n)
            .map(NodeId)
            .filter(|&n| !self.eqset.contains(n))
            .filter_map(|n| self.last_block_from(n))
            .filter(|&b| store.block(b).time == t)
            .collect()
    }

    fn skip(&mut self, phase: &str, detail: impl Into<String>) {
        self.events.push(NodeEvent::Skipped { phase: phase.into(), detail: detail.into() });
    }

    fn switch_chain(&mut self, store: &BlockStore, now: Timestamp, leader: Option<NodeId>) -> Result<()> {
        let f = self.cfg.f;
        let s = now.slot - 1;
        let end = Timestamp::new(s, f + 2);
        let sigma = self.chain.last();
        let last = self.last_blocks_at(store, end);
        let n_total = last.len();
        let n_same = last.iter().filter(|&&b| store.block(b).digest == sigma).count();
        self.check_elss(store, now);

        if self.finality.s_final == s as i64 - 2 {
            return Ok(());
        }
        let Some(leader) = leader else {
            self.events.push(NodeEvent::SwitchSkipped { reason: "no leader".into() });
            return Ok(());
        };
        if self.eqset.contains(leader) {
            self.events.push(NodeEvent::SwitchSkipped { reason: format!("leader {leader} equivocated") });
            return Ok(());
        }
        let bl = match self.last_block_from(leader) {
            Some(b) if store.block(b).time == end && self.buffer.is_complete(b) => b,
            _ => {
                self.events.push(NodeEvent::SwitchSkipped { reason: format!("no complete {end} block from {leader}") });
                return Ok(());
            }
        };
        if let Err(v) = self.validator.check_cone(store, &mut self.registry, bl) {
            self.events.push(NodeEvent::SwitchSkipped { reason: format!("leader cone invalid: {v}") });
            return Ok(());
        }
        let own = self.b_own.expect("awake in the previous slot");
        let dc_l = last_commit_certificate(store, bl);
        let dc_o = last_commit_certificate(store, own);
        let own_digest = store.block(own).digest;
        let leader_digest = store.block(bl).digest;
        if !self.i_elss && self.registry.is_conflict(&dc_l.commit, &own_digest).unwrap_or(true) {
            self.i_elss = true;
            self.events.push(NodeEvent::ElssFlag { cause: "leader certificate conflicts".into() });
        }
        let minority = 2 * n_same <= n_total;
        let adopt = if minority {
            !self.registry.is_conflict(&leader_digest, &dc_o.commit).unwrap_or(true) || dc_l.slot >= dc_o.slot
        } else {
            self.i_elss && dc_l.slot >= dc_o.slot
        };
        if adopt {
            self.add_to_dag(store, bl)?;
            if leader_digest != sigma {
                self.chain = self.registry.chain(&leader_digest)?;
                self.events.push(NodeEvent::ChainSwitch { leader, from: sigma, to: leader_digest, minority });
            }
        }
        Ok(())
    }

    /// Sets `i_elss` when two digests each have f+1 distinct authors among buffered `⟨s-1, f+2⟩` blocks.
    fn check_elss(&mut self, store: &BlockStore, now: Timestamp) {
        let f = self.cfg.f;
        if self.i_elss || now.slot < 3 {
            return;
        }
        let t = Timestamp::new(now.slot - 2, f + 2);
        let mut support: BTreeMap<SlotDigest, BTreeSet<NodeId>> = BTreeMap::new();
        for &b in store.at_slot(t.slot) {
            let blk = store.block(b);
            if blk.time == t && self.buffer.contains(b) {
                support.entry(blk.digest).or_default().insert(blk.node);
            }
        }
        if support.values().filter(|a| a.len() > f as usize).count() >= 2 {
            self.i_elss = true;
            self.events.push(NodeEvent::ElssFlag { cause: "split digests".into() });
        }
    }

    fn wake_up_chain(&mut self, store: &BlockStore, now: Timestamp) -> Result<()> {
        let f = self.cfg.f;
        let end = Timestamp::new(now.slot - 1, f + 2);
        let last = self.last_blocks_at(store, end);
        let mut counts: BTreeMap<SlotDigest, usize> = BTreeMap::new();
        for &b in &last {
            *counts.entry(store.block(b).digest).or_default() += 1;
        }
        // highest count, then lowest digest
        let Some((&mode, &support)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            self.events.push(NodeEvent::WakeUp { adopted: None, support: 0, total: 0 });
            return Ok(());
        };
        let mut carriers: Vec<BlockIdx> = last.into_iter().filter(|&b| store.block(b).digest == mode).collect();
        carriers.sort_by_key(|&b| store.block(b).node);
        let mut merged = false;
        for b in carriers {
            if self.buffer.is_complete(b) && self.validator.check_cone(store, &mut self.registry, b).is_ok() {
                self.add_to_dag(store, b)?;
                merged = true;
            }
        }
        if merged {
            self.chain = self.registry.chain(&mode)?;
        }
        let adopted = merged.then_some(mode);
        self.events.push(NodeEvent::WakeUp { adopted, support, total: counts.values().sum() });
        Ok(())
    }

    fn update_chain(&mut self, store: &BlockStore, now: Timestamp) -> Result<()> {
        let parent = self.chain.last();
        let s = now.slot as i64 - 1;
        if parent.slot != s - 1 {
            self.skip("update-chain", format!("chain ends at slot {}, need {}", parent.slot, s - 1));
            return Ok(());
        }
        let d = compute_slot_digest(&mut self.registry, store, parent, self.dag.members(), s)?;
        self.chain.push(d);
        self.events.push(NodeEvent::AdoptEnd { slot: s, digest: d });
        Ok(())
    }

    fn confirm_transactions(&mut self, store: &BlockStore) {
        let newly = self.fast.confirm(store, &mut self.oracle, &mut self.ledger, self.dag.members());
        let any = !newly.is_empty();
        for tx in newly {
            self.events.push(NodeEvent::Confirm { tx, path: ConfirmPath::Fast });
        }
        if any {
            self.check_ledger();
        }
    }

    fn check_ledger(&mut self) {
        if let Err(detail) = self.ledger.check_invariants() {
            self.events.push(NodeEvent::LedgerViolation { detail });
        }
    }

    fn finalize_slots(&mut self, store: &BlockStore, now: Timestamp) -> Result<()> {
        let pre = self.finality.s_pre;
        let out = self.finality.finalize_slots(now.slot as i64, &self.chain, &mut self.registry, store, self.dag.members())?;
        for d in &out.newly_final {
            self.events.push(NodeEvent::Finalize { slot: d.slot, digest: *d });
        }
        let mut lo = pre + 1;
        let mut any = false;
        for &tau in &out.taus {
            let slots: Vec<i64> =
                self.finality.finality_times.range(lo..).filter(|&(_, &t)| t == tau).map(|(&x, _)| x).collect();
            lo = slots.last().map_or(lo, |x| x + 1);
            self.events.push(NodeEvent::FinalityTime { slots, tau });
            let confirmed =
                self.cursor.finalize(tau, &self.chain, &self.registry, store, &mut self.oracle, &mut self.ledger)?;
            for (tx, path) in confirmed {
                any = true;
                self.events.push(NodeEvent::Confirm { tx, path });
            }
        }
        if any {
            self.check_ledger();
        }
        Ok(())
    }

    fn create_block(&mut self, store: &mut BlockStore, now: Timestamp) -> Result<BlockIdx> {
        let refs: Vec<BlockId> = self.dag.tips().map(|b| store.id(b)).collect();
        let txs = self.mempool.take_payload(store, self.dag.members());
        let mut evidence = Vec::new();
        let mut accused = Vec::new();
        for node in self.eqset.nodes().collect::<Vec<_>>() {
            let (a, b) = self.eqset.proof(node).expect("listed");
            if store.block(a).time == store.block(b).time && self.proofs_sent.insert(node) {
                evidence.push(EquivocationProof { first: store.block(a).clone(), second: store.block(b).clone() });
                accused.push(node);
            }
        }
        let block = Block::unsigned(refs, self.chain.last(), txs, evidence, now, self.cfg.id).signed(store.authenticator())?;
        let idx = store.insert(block);
        let store = &*store;
        self.buffer.insert(store, idx);
        self.buffer.refresh(store);
        self.add_to_dag(store, idx)?;
        self.history.entry(self.cfg.id).or_default().union_with(store.cone(idx).expect("refs are in the DAG"));
        self.b_own = Some(idx);
        let blk = store.block(idx);
        self.events.push(NodeEvent::BlockCreated {
            id: store.id(idx),
            time: now,
            digest: blk.digest,
            refs: blk.refs.clone(),
            txs: store.entry(idx).tx_ids.clone(),
            evidence: accused,
            bytes: store.entry(idx).bytes,
        });
        Ok(idx)
    }

    fn audit(&mut self, store: &BlockStore) {
        let (Some((val, reg)), Some(b)) = (self.auditor.as_mut(), self.b_own) else { return };
        if let Err(violation) = val.check_cone(store, reg, b) {
            self.events.push(NodeEvent::AuditFailure { violation });
        }
    }

    /// Send phase: the part of `cone(B_own)` each other node has not seen.
    pub fn broadcast(&mut self, store: &BlockStore) -> Vec<(NodeId, Vec<BlockIdx>)> {
        let Some(own) = self.b_own else { return Vec::new() };
        let cone = store.cone(own).expect("own block resolved");
        let mut out = Vec::new();
        for n in (0..self.cfg.n).map(NodeId).filter(|&n| n != self.cfg.id) {
            let h = self.history.entry(n).or_default();
            let mut diff: Vec<BlockIdx> = cone.difference(h).collect();
            h.union_with(cone);
            diff.sort_by_key(|&b| (store.block(b).time, b));
            out.push((n, diff));
        }
        out
    }

    fn drain_registry(&mut self, store: &BlockStore) {
        for d in self.registry.take_new() {
            let e = self.registry.get(&d).expect("just registered");
            self.events.push(NodeEvent::DigestRegistered {
                digest: d,
                parent: e.parent.expect("non-root"),
                blocks: e.new_blocks.iter().map(|&b| store.id(b)).collect(),
            });
        }
    }

    /// Events produced outside [`NodeState::step`], e.g. by [`NodeState::receive`].
    pub fn take_events(&mut self, store: &BlockStore) -> Vec<NodeEvent> {
        self.drain_registry(store);
        std::mem::take(&mut self.events)
    }
}
