//! UTXO ledger, transaction approvals and certificates, fast-path and
//! consensus-path confirmation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::commitment::{BackboneChain, DigestRegistry};
use crate::crypto::Authenticator;
use crate::dag::{BlockIdx, BlockSet, BlockStore, GENESIS_IDX};
use crate::error::Result;
use crate::tx::{AccountId, TxId, TxOutput, UtxoId, UtxoTx};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfirmPath {
    Genesis,
    Fast,
    /// Consensus path, certified transactions.
    #[serde(rename = "consensus-1")]
    Consensus1,
    /// Consensus path, by final order.
    #[serde(rename = "consensus-2")]
    Consensus2,
}

/// A node's confirmed transactions.
#[derive(Clone, Debug, Default)]
pub struct UtxoLedger {
    confirmed: HashMap<TxId, Arc<UtxoTx>>,
    order: Vec<(TxId, ConfirmPath)>,
    spent: HashMap<UtxoId, TxId>,
    available: BTreeMap<UtxoId, TxOutput>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub txs: Vec<TxId>,
    pub balances: BTreeMap<AccountId, u64>,
    pub utxos: usize,
}

impl UtxoLedger {
    pub fn new(genesis: &[UtxoTx]) -> Self {
        let mut l = UtxoLedger::default();
        for tx in genesis {
            l.insert(Arc::new(tx.clone()), ConfirmPath::Genesis);
        }
        l
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.confirmed.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.confirmed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confirmed.is_empty()
    }

    /// Confirmed transactions in confirmation order.
    pub fn history(&self) -> &[(TxId, ConfirmPath)] {
        &self.order
    }

    pub fn get(&self, id: &TxId) -> Option<&Arc<UtxoTx>> {
        self.confirmed.get(id)
    }

    pub fn is_unspent(&self, u: &UtxoId) -> bool {
        self.available.contains_key(u)
    }

    /// Every input was created by a confirmed transaction.
    pub fn has_inputs(&self, tx: &UtxoTx) -> bool {
        tx.inputs.iter().all(|i| self.confirmed.contains_key(&i.tx))
    }

    /// Some input is already consumed by a different confirmed transaction.
    pub fn conflicts(&self, id: &TxId, tx: &UtxoTx) -> bool {
        tx.inputs.iter().any(|i| self.spent.get(i).is_some_and(|s| s != id))
    }

    fn insert(&mut self, tx: Arc<UtxoTx>, path: ConfirmPath) -> bool {
        let id = tx.id();
        if self.confirmed.contains_key(&id) {
            return false;
        }
        for i in &tx.inputs {
            self.spent.entry(*i).or_insert(id);
            self.available.remove(i);
        }
        for (k, o) in tx.outputs.iter().enumerate() {
            let u = UtxoId { tx: id, index: k as u32 };
            if !self.spent.contains_key(&u) {
                self.available.insert(u, *o);
            }
        }
        self.confirmed.insert(id, tx);
        self.order.push((id, path));
        true
    }

    /// Unconditional add, used by the fast path.
    pub fn add(&mut self, tx: Arc<UtxoTx>, path: ConfirmPath) -> bool {
        self.insert(tx, path)
    }

    /// Adds `tx` if its inputs are confirmed and unspent by anything else.
    pub fn try_add(&mut self, tx: Arc<UtxoTx>, path: ConfirmPath) -> bool {
        let id = tx.id();
        if self.contains(&id) || !self.has_inputs(&tx) || self.conflicts(&id, &tx) {
            return false;
        }
        self.insert(tx, path)
    }

    /// Checks that no two confirmed transactions share an input and that every
    /// input's creator is confirmed.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut seen: HashMap<UtxoId, TxId> = HashMap::new();
        for (id, _) in &self.order {
            let tx = &self.confirmed[id];
            for i in &tx.inputs {
                if let Some(prev) = seen.insert(*i, *id) {
                    return Err(format!("double spend of {}:{} by {} and {}", i.tx, i.index, prev, id));
                }
                if !self.confirmed.contains_key(&i.tx) {
                    return Err(format!("{id} spends output of unconfirmed {}", i.tx));
                }
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut balances = BTreeMap::new();
        for o in self.available.values() {
            *balances.entry(o.owner).or_insert(0) += o.value;
        }
        let mut txs: Vec<TxId> = self.confirmed.keys().copied().collect();
        txs.sort();
        LedgerSnapshot { txs, balances, utxos: self.available.len() }
    }
}

/// Memoised readiness, approval and certificate predicates. All of them depend
/// only on block contents and cones, so answers never change once computed.
pub struct TxOracle {
    accounts: Arc<dyn Authenticator>,
    genesis_txs: HashSet<TxId>,
    well_formed: HashMap<TxId, bool>,
    ready: HashMap<(TxId, BlockIdx), bool>,
    approves: HashMap<(TxId, BlockIdx, BlockIdx), bool>,
    certifies: HashMap<(TxId, BlockIdx, BlockIdx), bool>,
    confirmed_in: HashMap<(TxId, BlockIdx), bool>,
}

impl TxOracle {
    pub fn new(store: &BlockStore, accounts: Arc<dyn Authenticator>) -> Self {
        TxOracle {
            accounts,
            genesis_txs: store.entry(GENESIS_IDX).tx_ids.iter().copied().collect(),
            well_formed: HashMap::new(),
            ready: HashMap::new(),
            approves: HashMap::new(),
            certifies: HashMap::new(),
            confirmed_in: HashMap::new(),
        }
    }

    pub fn is_genesis_tx(&self, id: &TxId) -> bool {
        self.genesis_txs.contains(id)
    }

    /// Non-empty inputs from one owner who signed, positive outputs, value conserved.
    pub fn is_well_formed(&mut self, store: &BlockStore, id: &TxId) -> bool {
        if let Some(&v) = self.well_formed.get(id) {
            return v;
        }
        let v = store.tx(id).is_some_and(|tx| well_formed(store, tx, &*self.accounts));
        self.well_formed.insert(*id, v);
        v
    }

    /// `tx` is in `b` and every input's creator is confirmed in `cone(b)`.
    pub fn is_ready(&mut self, store: &BlockStore, id: &TxId, b: BlockIdx) -> bool {
        if let Some(&v) = self.ready.get(&(*id, b)) {
            return v;
        }
        let v = store.entry(b).tx_ids.contains(id)
            && self.is_well_formed(store, id)
            && store.tx(id).cloned().is_some_and(|tx| {
                let mut parents: Vec<TxId> = tx.inputs.iter().map(|i| i.tx).collect();
                parents.dedup();
                parents.iter().all(|p| self.is_genesis_tx(p) || self.is_confirmed_in(store, p, b))
            });
        self.ready.insert((*id, b), v);
        v
    }

    /// `e` approves `tx` in `b`.
    pub fn approves(&mut self, store: &BlockStore, e: BlockIdx, id: &TxId, b: BlockIdx) -> bool {
        if let Some(&v) = self.approves.get(&(*id, b, e)) {
            return v;
        }
        let v = match store.cone(e) {
            Some(cone) if cone.contains(b) => {
                let cone = cone.clone();
                self.is_ready(store, id, b) && !has_double_spend_in(store, id, &cone)
            }
            _ => false,
        };
        self.approves.insert((*id, b, e), v);
        v
    }

    /// `c` is a transaction certificate for `tx` in `b`.
    pub fn is_certificate(&mut self, store: &BlockStore, c: BlockIdx, id: &TxId, b: BlockIdx) -> bool {
        if let Some(&v) = self.certifies.get(&(*id, b, c)) {
            return v;
        }
        let (bs, cs) = (store.block(b).slot(), store.block(c).slot());
        let v = (cs == bs || cs == bs + 1)
            && self.is_ready(store, id, b)
            && match store.cone(c).cloned() {
                None => false,
                Some(cone) => {
                    let mut authors = BTreeSet::new();
                    for s in bs..=cs {
                        for &e in store.at_slot(s) {
                            if cone.contains(e) && self.approves(store, e, id, b) {
                                authors.insert(store.block(e).node);
                            }
                        }
                    }
                    authors.len() >= crate::dag::quorum_size(store.f())
                }
            };
        self.certifies.insert((*id, b, c), v);
        v
    }

    /// Certificates for `tx` in `b` among `within`.
    pub fn certificates_in(&mut self, store: &BlockStore, id: &TxId, b: BlockIdx, within: &BlockSet) -> Vec<BlockIdx> {
        let bs = store.block(b).slot();
        let mut out = Vec::new();
        for s in bs..=bs + 1 {
            for &c in store.at_slot(s) {
                if within.contains(c) && self.is_certificate(store, c, id, b) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Some `b ∈ within` holding `tx` has a quorum of certificates in `within`.
    pub fn is_fast_confirmed(&mut self, store: &BlockStore, id: &TxId, within: &BlockSet) -> bool {
        let holders: Vec<BlockIdx> = store.blocks_with_tx(id).iter().copied().filter(|&b| within.contains(b)).collect();
        holders.into_iter().any(|b| {
            let tcs = self.certificates_in(store, id, b, within);
            crate::dag::is_quorum(store, tcs, store.f())
        })
    }

    fn is_confirmed_in(&mut self, store: &BlockStore, id: &TxId, b: BlockIdx) -> bool {
        if let Some(&v) = self.confirmed_in.get(&(*id, b)) {
            return v;
        }
        let v = match store.cone(b).cloned() {
            Some(cone) => self.is_fast_confirmed(store, id, &cone),
            None => false,
        };
        self.confirmed_in.insert((*id, b), v);
        v
    }
}

fn well_formed(store: &BlockStore, tx: &UtxoTx, accounts: &dyn Authenticator) -> bool {
    if tx.inputs.is_empty() || tx.outputs.iter().any(|o| o.value == 0) {
        return false;
    }
    let mut owner = None;
    let mut total: u128 = 0;
    let mut seen = HashSet::new();
    for i in &tx.inputs {
        if !seen.insert(*i) {
            return false;
        }
        let Some(o) = store.tx(&i.tx).and_then(|p| p.outputs.get(i.index as usize)) else { return false };
        if *owner.get_or_insert(o.owner) != o.owner {
            return false;
        }
        total += o.value as u128;
    }
    let out: u128 = tx.outputs.iter().map(|o| o.value as u128).sum();
    total == out && tx.verify_owner(owner.expect("non-empty inputs"), accounts)
}

fn has_double_spend_in(store: &BlockStore, id: &TxId, cone: &BlockSet) -> bool {
    let Some(tx) = store.tx(id) else { return false };
    tx.inputs.iter().any(|i| {
        store
            .spenders(i)
            .iter()
            .filter(|other| *other != id)
            .any(|other| store.blocks_with_tx(other).iter().any(|&x| cone.contains(x)))
    })
}

/// Pending `(tx, block)` instances for the fast path.
#[derive(Clone, Debug, Default)]
pub struct FastPath {
    pending: BTreeMap<(crate::types::Timestamp, BlockIdx), Vec<TxId>>,
    dirty_slots: BTreeSet<u64>,
}

impl FastPath {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers blocks newly added to the node's DAG.
    pub fn observe(&mut self, store: &BlockStore, fresh: &[BlockIdx]) {
        for &b in fresh {
            let blk = store.block(b);
            self.dirty_slots.insert(blk.slot());
            if b != GENESIS_IDX && !blk.txs.is_empty() {
                self.pending.insert((blk.time, b), store.entry(b).tx_ids.clone());
            }
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }

    /// `ConfirmTransactions`: adds every transaction with a quorum of certificates in `dag`.
    pub fn confirm(
        &mut self,
        store: &BlockStore,
        oracle: &mut TxOracle,
        ledger: &mut UtxoLedger,
        dag: &BlockSet,
    ) -> Vec<TxId> {
        let dirty = std::mem::take(&mut self.dirty_slots);
        let mut out = Vec::new();
        let f = store.f();
        for (&(t, b), ids) in self.pending.iter_mut() {
            if !dirty.contains(&t.slot) && !dirty.contains(&(t.slot + 1)) {
                continue;
            }
            ids.retain(|id| {
                if ledger.contains(id) {
                    return false;
                }
                let tcs = oracle.certificates_in(store, id, b, dag);
                if crate::dag::is_quorum(store, tcs, f) {
                    let tx = store.tx(id).expect("interned").clone();
                    ledger.add(tx, ConfirmPath::Fast);
                    out.push(*id);
                    false
                } else {
                    true
                }
            });
        }
        self.pending.retain(|_, ids| !ids.is_empty());
        out
    }
}

/// Blocks already handled by each consensus-path pass.
#[derive(Clone, Debug, Default)]
pub struct ConsensusPathCursor {
    pub proc_tx_certificate: BlockSet,
    pub proc_total_order: BlockSet,
    pub last_tau: Option<i64>,
}

impl ConsensusPathCursor {
    pub fn new() -> Self {
        Self::default()
    }

    /// `FinalizeTransactions` for finality time `tau`.
    pub fn finalize(
        &mut self,
        tau: i64,
        chain: &BackboneChain,
        registry: &DigestRegistry,
        store: &BlockStore,
        oracle: &mut TxOracle,
        ledger: &mut UtxoLedger,
    ) -> Result<Vec<(TxId, ConfirmPath)>> {
        let mut out = Vec::new();
        let sigma_tau = chain.get(tau).expect("finality time within chain");
        let within = registry.committed(&sigma_tau)?.clone();
        for b in registry.order_of(&sigma_tau)? {
            if store.block(b).slot() as i64 > tau - 2 || !self.proc_tx_certificate.insert(b) {
                continue;
            }
            for id in store.entry(b).tx_ids.clone() {
                if oracle.is_genesis_tx(&id) || !oracle.is_well_formed(store, &id) {
                    continue;
                }
                if !oracle.certificates_in(store, &id, b, &within).is_empty()
                    && ledger.try_add(store.tx(&id).expect("interned").clone(), ConfirmPath::Consensus1)
                {
                    out.push((id, ConfirmPath::Consensus1));
                }
            }
        }
        let sigma_pre = chain.get(tau - 2).expect("finality time within chain");
        for b in registry.order_of(&sigma_pre)? {
            if !self.proc_total_order.insert(b) {
                continue;
            }
            for id in store.entry(b).tx_ids.clone() {
                if oracle.is_genesis_tx(&id) || !oracle.is_well_formed(store, &id) {
                    continue;
                }
                if ledger.try_add(store.tx(&id).expect("interned").clone(), ConfirmPath::Consensus2) {
                    out.push((id, ConfirmPath::Consensus2));
                }
            }
        }
        self.last_tau = Some(tau);
        Ok(out)
    }
}

/// Client transactions waiting to be included by one node.
#[derive(Clone, Debug)]
pub struct Mempool {
    queue: VecDeque<UtxoTx>,
    cap: usize,
}

impl Mempool {
    pub const DEFAULT_CAP: usize = 8;

    pub fn new(cap: usize) -> Self {
        Mempool { queue: VecDeque::new(), cap }
    }

    pub fn push(&mut self, tx: UtxoTx) {
        self.queue.push_back(tx);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Up to `cap` queued transactions not yet included in `dag`; included ones are dropped.
    pub fn take_payload(&mut self, store: &BlockStore, dag: &BlockSet) -> Vec<UtxoTx> {
        let mut out = Vec::new();
        let mut keep = VecDeque::new();
        while let Some(tx) = self.queue.pop_front() {
            let id = tx.id();
            if store.blocks_with_tx(&id).iter().any(|&b| dag.contains(b)) || out.contains(&tx) {
                continue;
            }
            if out.len() < self.cap {
                out.push(tx);
            } else {
                keep.push_back(tx);
            }
        }
        self.queue = keep;
        out
    }
}

impl Default for Mempool {
    fn default() -> Self {
        Mempool::new(Self::DEFAULT_CAP)
    }
}
