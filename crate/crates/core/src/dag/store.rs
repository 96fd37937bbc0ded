use std::cell::OnceCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::set::{BlockIdx, BlockSet};
use crate::crypto::Authenticator;
use crate::error::{CoreError, Result};
use crate::tx::{TxId, UtxoId, UtxoTx};
use crate::types::{Block, BlockId, NodeId, SlotDigest};

pub const GENESIS_IDX: BlockIdx = 0;

pub struct Entry {
    pub block: Arc<Block>,
    pub id: BlockId,
    /// Length of the canonical encoding.
    pub bytes: usize,
    /// Resolved references; `None` while some referenced block is unknown.
    pub refs: Option<Vec<BlockIdx>>,
    /// Past cone including the block itself; `None` until every ancestor is known.
    pub cone: Option<BlockSet>,
    pub tx_ids: Vec<TxId>,
    pub sig_ok: bool,
    /// Evidence pairs whose proof verified, interned as blocks.
    pub proofs: Vec<(BlockIdx, BlockIdx)>,
    pub(crate) dc: OnceCell<Option<SlotDigest>>,
}

/// Content-addressed arena of every block created during a run.
///
/// Cones, signature checks and certificate detection are pure functions of a
/// block's content, so they are computed once here and shared by all nodes.
/// Which blocks a node may *use* is still decided by that node's own Buffer.
pub struct BlockStore {
    f: u32,
    auth: Arc<dyn Authenticator>,
    entries: Vec<Entry>,
    index: HashMap<BlockId, BlockIdx>,
    by_slot: Vec<Vec<BlockIdx>>,
    by_author: HashMap<NodeId, Vec<BlockIdx>>,
    unresolved: Vec<BlockIdx>,
    txs: HashMap<TxId, Arc<UtxoTx>>,
    tx_blocks: HashMap<TxId, Vec<BlockIdx>>,
    spenders: HashMap<UtxoId, Vec<TxId>>,
}

impl BlockStore {
    pub fn new(genesis: Block, f: u32, auth: Arc<dyn Authenticator>) -> Self {
        let mut s = BlockStore {
            f,
            auth,
            entries: Vec::new(),
            index: HashMap::new(),
            by_slot: Vec::new(),
            by_author: HashMap::new(),
            unresolved: Vec::new(),
            txs: HashMap::new(),
            tx_blocks: HashMap::new(),
            spenders: HashMap::new(),
        };
        let g = s.insert(genesis);
        debug_assert_eq!(g, GENESIS_IDX);
        s
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    pub fn authenticator(&self) -> &dyn Authenticator {
        &*self.auth
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn genesis(&self) -> BlockIdx {
        GENESIS_IDX
    }

    /// Interns `block` (and any blocks carried as evidence). Idempotent.
    pub fn insert(&mut self, block: Block) -> BlockIdx {
        let bytes = block.to_bytes();
        let id = BlockId(crate::crypto::hash(&bytes));
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let mut proofs = Vec::new();
        for p in &block.evidence {
            if p.verify(&*self.auth) {
                let a = self.insert(p.first.clone());
                let b = self.insert(p.second.clone());
                proofs.push((a, b));
            }
        }
        let idx = self.entries.len();
        let is_genesis = idx == GENESIS_IDX;
        let sig_ok = is_genesis || block.verify(&*self.auth);
        let mut tx_ids = Vec::with_capacity(block.txs.len());
        for tx in &block.txs {
            let tid = tx.id();
            tx_ids.push(tid);
            self.tx_blocks.entry(tid).or_default().push(idx);
            if !self.txs.contains_key(&tid) {
                for i in &tx.inputs {
                    self.spenders.entry(*i).or_default().push(tid);
                }
                self.txs.insert(tid, Arc::new(tx.clone()));
            }
        }
        let slot = block.slot() as usize;
        if self.by_slot.len() <= slot {
            self.by_slot.resize(slot + 1, Vec::new());
        }
        self.by_slot[slot].push(idx);
        self.by_author.entry(block.node).or_default().push(idx);
        self.index.insert(id, idx);
        self.entries.push(Entry {
            block: Arc::new(block),
            id,
            bytes: bytes.len(),
            refs: None,
            cone: None,
            tx_ids,
            sig_ok,
            proofs,
            dc: OnceCell::new(),
        });
        if self.resolve(idx) {
            self.retry_unresolved();
        } else {
            self.unresolved.push(idx);
        }
        idx
    }

    fn resolve(&mut self, idx: BlockIdx) -> bool {
        let block = self.entries[idx].block.clone();
        let mut refs = Vec::with_capacity(block.refs.len());
        for r in &block.refs {
            match self.index.get(r) {
                Some(&j) if self.entries[j].cone.is_some() => refs.push(j),
                _ => return false,
            }
        }
        let mut cone = BlockSet::singleton(idx);
        for &j in &refs {
            cone.union_with(self.entries[j].cone.as_ref().unwrap());
        }
        let e = &mut self.entries[idx];
        e.refs = Some(refs);
        e.cone = Some(cone);
        true
    }

    fn retry_unresolved(&mut self) {
        loop {
            let pending = std::mem::take(&mut self.unresolved);
            if pending.is_empty() {
                return;
            }
            let before = pending.len();
            for i in pending {
                if !self.resolve(i) {
                    self.unresolved.push(i);
                }
            }
            if self.unresolved.len() == before {
                return;
            }
        }
    }

    pub fn entry(&self, idx: BlockIdx) -> &Entry {
        &self.entries[idx]
    }

    pub fn block(&self, idx: BlockIdx) -> &Block {
        &self.entries[idx].block
    }

    pub fn arc(&self, idx: BlockIdx) -> Arc<Block> {
        self.entries[idx].block.clone()
    }

    pub fn id(&self, idx: BlockIdx) -> BlockId {
        self.entries[idx].id
    }

    pub fn lookup(&self, id: &BlockId) -> Option<BlockIdx> {
        self.index.get(id).copied()
    }

    pub fn cone(&self, idx: BlockIdx) -> Option<&BlockSet> {
        self.entries[idx].cone.as_ref()
    }

    pub fn refs(&self, idx: BlockIdx) -> Option<&[BlockIdx]> {
        self.entries[idx].refs.as_deref()
    }

    pub fn at_slot(&self, slot: u64) -> &[BlockIdx] {
        self.by_slot.get(slot as usize).map_or(&[], |v| v.as_slice())
    }

    pub fn by_author(&self, node: NodeId) -> &[BlockIdx] {
        self.by_author.get(&node).map_or(&[], |v| v.as_slice())
    }

    /// `to ∈ cone(from)`.
    pub fn is_reachable(&self, from: BlockIdx, to: BlockIdx) -> Result<bool> {
        if from >= self.len() || to >= self.len() {
            return Err(CoreError::UnknownBlock(BlockId(crate::types::Hash32::ZERO)));
        }
        let e = &self.entries[from];
        match &e.cone {
            Some(c) => Ok(c.contains(to)),
            None => Err(CoreError::MissingAncestor { block: e.id, missing: self.first_missing(from) }),
        }
    }

    /// Some ancestor id of `idx` that was never interned.
    pub fn first_missing(&self, idx: BlockIdx) -> BlockId {
        let mut stack = vec![idx];
        let mut seen = BlockSet::new();
        while let Some(i) = stack.pop() {
            if !seen.insert(i) {
                continue;
            }
            for r in &self.entries[i].block.refs {
                match self.index.get(r) {
                    Some(&j) => {
                        if self.entries[j].cone.is_none() {
                            stack.push(j);
                        }
                    }
                    None => return *r,
                }
            }
        }
        self.entries[idx].id
    }

    pub fn tx(&self, id: &TxId) -> Option<&Arc<UtxoTx>> {
        self.txs.get(id)
    }

    pub fn blocks_with_tx(&self, id: &TxId) -> &[BlockIdx] {
        self.tx_blocks.get(id).map_or(&[], |v| v.as_slice())
    }

    /// Every known transaction that consumes `utxo`.
    pub fn spenders(&self, utxo: &UtxoId) -> &[TxId] {
        self.spenders.get(utxo).map_or(&[], |v| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SimAuthenticator;
    use crate::types::{Signature, Timestamp};

    fn store() -> (BlockStore, Arc<SimAuthenticator>) {
        let auth = Arc::new(SimAuthenticator::new("node", 1, 4));
        (BlockStore::new(Block::genesis(1, vec![]), 1, auth.clone()), auth)
    }

    fn mk(auth: &SimAuthenticator, refs: Vec<BlockId>, slot: u64, round: u32, node: u32) -> Block {
        Block::unsigned(refs, SlotDigest::ROOT, vec![], vec![], Timestamp::new(slot, round), NodeId(node))
            .signed(auth)
            .unwrap()
    }

    #[test]
    fn cones_and_reachability() {
        let (mut s, auth) = store();
        let g = s.id(GENESIS_IDX);
        let a = s.insert(mk(&auth, vec![g], 1, 1, 0));
        let b = s.insert(mk(&auth, vec![s.id(a)], 1, 2, 0));
        assert_eq!(s.cone(GENESIS_IDX).unwrap().iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(s.cone(b).unwrap().iter().collect::<Vec<_>>(), vec![0, a, b]);
        assert!(s.is_reachable(b, b).unwrap());
        assert!(s.is_reachable(b, GENESIS_IDX).unwrap());
        assert!(!s.is_reachable(GENESIS_IDX, b).unwrap());
        assert!(s.is_reachable(99, 0).is_err());
    }

    #[test]
    fn out_of_order_arrival_resolves() {
        let (mut s, auth) = store();
        let a = mk(&auth, vec![s.id(GENESIS_IDX)], 1, 1, 0);
        let b = mk(&auth, vec![a.id()], 1, 2, 0);
        let c = mk(&auth, vec![b.id()], 1, 3, 0);
        let ci = s.insert(c);
        let bi = s.insert(b);
        assert!(s.cone(ci).is_none() && s.cone(bi).is_none());
        assert!(matches!(s.is_reachable(ci, 0), Err(CoreError::MissingAncestor { .. })));
        let ai = s.insert(a);
        assert_eq!(s.cone(ci).unwrap().len(), 4);
        assert!(s.is_reachable(ci, ai).unwrap());
    }

    #[test]
    fn bad_signature_flagged() {
        let (mut s, auth) = store();
        let mut a = mk(&auth, vec![s.id(GENESIS_IDX)], 1, 1, 0);
        let good = s.insert(a.clone());
        assert!(s.entry(good).sig_ok);
        a.sign = Signature(vec![0; 32]);
        let bad = s.insert(a);
        assert_ne!(good, bad);
        assert!(!s.entry(bad).sig_ok);
        assert_eq!(s.insert(mk(&auth, vec![s.id(GENESIS_IDX)], 1, 1, 0)), good);
    }
}
