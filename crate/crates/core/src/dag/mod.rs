//! Block storage, past cones, quorum counting and equivocation detection.

mod set;
mod store;
pub mod validity;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use set::{BlockIdx, BlockSet};
pub use store::{BlockStore, Entry, GENESIS_IDX};
pub use validity::{is_valid_dag, Rule, Validator, Violation};

use crate::error::{CoreError, Result};
use crate::types::{NodeId, Timestamp};

/// Distinct authors among `blocks`.
pub fn distinct_authors(store: &BlockStore, blocks: impl IntoIterator<Item = BlockIdx>) -> usize {
    blocks.into_iter().map(|b| store.block(b).node).collect::<BTreeSet<_>>().len()
}

pub fn quorum_size(f: u32) -> usize {
    2 * f as usize + 1
}

pub fn is_quorum(store: &BlockStore, blocks: impl IntoIterator<Item = BlockIdx>, f: u32) -> bool {
    distinct_authors(store, blocks) >= quorum_size(f)
}

/// Number of distinct authors of blocks `E ∈ cone(b)` with `E.slot = b.slot` and `c ∈ cone(E)`.
pub fn reach_number(store: &BlockStore, c: BlockIdx, b: BlockIdx) -> usize {
    let Some(cone_b) = store.cone(b) else { return 0 };
    let slot = store.block(b).slot();
    let mut authors = BTreeSet::new();
    for &e in store.at_slot(slot) {
        if cone_b.contains(e) && store.cone(e).is_some_and(|ce| ce.contains(c)) {
            authors.insert(store.block(e).node);
        }
    }
    authors.len()
}

/// `cone(b)` provided every block of it is in `members`.
pub fn cone_within<'a>(store: &'a BlockStore, members: &BlockSet, b: BlockIdx) -> Result<&'a BlockSet> {
    let id = store.id(b);
    let cone = store
        .cone(b)
        .ok_or_else(|| CoreError::MissingAncestor { block: id, missing: store.first_missing(b) })?;
    match cone.difference(members).next() {
        None => Ok(cone),
        Some(m) => Err(CoreError::MissingAncestor { block: id, missing: store.id(m) }),
    }
}

/// A node's accepted DAG. Always closed under references.
#[derive(Clone, Debug)]
pub struct DagStore {
    members: BlockSet,
    tips: BTreeSet<BlockIdx>,
}

impl DagStore {
    pub fn new() -> Self {
        DagStore { members: BlockSet::singleton(GENESIS_IDX), tips: BTreeSet::from([GENESIS_IDX]) }
    }

    pub fn contains(&self, b: BlockIdx) -> bool {
        self.members.contains(b)
    }

    pub fn members(&self) -> &BlockSet {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Adds `cone(b)`; returns the blocks that were not yet present.
    pub fn add_cone(&mut self, store: &BlockStore, b: BlockIdx) -> Result<Vec<BlockIdx>> {
        let cone = store
            .cone(b)
            .ok_or_else(|| CoreError::MissingAncestor { block: store.id(b), missing: store.first_missing(b) })?;
        let fresh: Vec<BlockIdx> = cone.difference(&self.members).collect();
        // A fresh block cannot be referenced by an old member: old members are ref-closed.
        for &x in &fresh {
            self.members.insert(x);
            self.tips.insert(x);
        }
        for &x in &fresh {
            for r in store.refs(x).expect("cone implies resolved refs") {
                self.tips.remove(r);
            }
        }
        debug_assert!(self.is_closed(store));
        Ok(fresh)
    }

    fn is_closed(&self, store: &BlockStore) -> bool {
        self.members.iter().all(|x| store.refs(x).is_some_and(|rs| rs.iter().all(|r| self.members.contains(*r))))
    }

    /// Blocks with no incoming reference from inside the DAG.
    pub fn tips(&self) -> impl Iterator<Item = BlockIdx> + '_ {
        self.tips.iter().copied()
    }
}

impl Default for DagStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Every block a node has received or created, ancestors not guaranteed.
#[derive(Clone, Debug, Default)]
pub struct Buffer {
    members: BlockSet,
    by_author: HashMap<NodeId, Vec<BlockIdx>>,
    complete: BlockSet,
    incomplete: Vec<BlockIdx>,
}

impl Buffer {
    pub fn new() -> Self {
        let mut b = Buffer::default();
        b.members.insert(GENESIS_IDX);
        b.complete.insert(GENESIS_IDX);
        b
    }

    /// Returns true if the block is new to the buffer.
    pub fn insert(&mut self, store: &BlockStore, b: BlockIdx) -> bool {
        if !self.members.insert(b) {
            return false;
        }
        let list = self.by_author.entry(store.block(b).node).or_default();
        let t = store.block(b).time;
        let pos = list.partition_point(|&x| (store.block(x).time, x) < (t, b));
        list.insert(pos, b);
        self.incomplete.push(b);
        true
    }

    pub fn contains(&self, b: BlockIdx) -> bool {
        self.members.contains(b)
    }

    pub fn members(&self) -> &BlockSet {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether `cone(b) ⊆ Buffer`, as of the last [`Buffer::refresh`].
    pub fn is_complete(&self, b: BlockIdx) -> bool {
        self.complete.contains(b)
    }

    pub fn cone<'a>(&self, store: &'a BlockStore, b: BlockIdx) -> Result<&'a BlockSet> {
        cone_within(store, &self.members, b)
    }

    /// Re-examines blocks with missing ancestors; returns those whose cone is now complete.
    pub fn refresh(&mut self, store: &BlockStore) -> Vec<BlockIdx> {
        let mut done = Vec::new();
        let members = &self.members;
        self.incomplete.retain(|&b| {
            if store.cone(b).is_some_and(|c| c.is_subset(members)) {
                done.push(b);
                false
            } else {
                true
            }
        });
        done.sort_unstable();
        for &b in &done {
            self.complete.insert(b);
        }
        done
    }

    /// Blocks by `node`, ordered by (time, index).
    pub fn authored_by(&self, node: NodeId) -> &[BlockIdx] {
        self.by_author.get(&node).map_or(&[], |v| v.as_slice())
    }

    pub fn at(&self, store: &BlockStore, node: NodeId, t: Timestamp) -> Vec<BlockIdx> {
        self.authored_by(node).iter().copied().filter(|&b| store.block(b).time == t).collect()
    }
}

/// Known equivocators with one witness pair each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EqSet {
    proofs: BTreeMap<NodeId, (BlockIdx, BlockIdx)>,
}

impl EqSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.proofs.contains_key(&node)
    }

    pub fn insert(&mut self, node: NodeId, a: BlockIdx, b: BlockIdx) -> bool {
        if self.proofs.contains_key(&node) {
            return false;
        }
        self.proofs.insert(node, (a, b));
        true
    }

    pub fn proof(&self, node: NodeId) -> Option<(BlockIdx, BlockIdx)> {
        self.proofs.get(&node).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.proofs.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.proofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proofs.is_empty()
    }
}

/// Finds a pair of `blocks` (all by one author, sorted by time) that is not linearly
/// ordered. A pair at different times is only judged when `usable` holds for the
/// later block, i.e. its whole cone is visible to the caller. Checking consecutive
/// pairs suffices: a visible cone containing its predecessor also contains that
/// predecessor's cone.
pub fn unordered_pair(
    store: &BlockStore,
    blocks: &[BlockIdx],
    usable: impl Fn(BlockIdx) -> bool,
) -> Option<(BlockIdx, BlockIdx)> {
    // A chain is linear iff consecutive elements are ordered, by transitivity.
    for w in blocks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ta, tb) = (store.block(a).time, store.block(b).time);
        if ta == tb {
            return Some((a, b));
        }
        if usable(b) && !store.cone(b).is_some_and(|c| c.contains(a)) {
            return Some((a, b));
        }
    }
    None
}

pub fn detect_equivocations(store: &BlockStore, buf: &Buffer) -> EqSet {
    let mut out = EqSet::new();
    let mut authors: Vec<_> = buf.by_author.keys().copied().collect();
    authors.sort();
    for node in authors {
        if node == NodeId::GENESIS {
            continue;
        }
        if let Some((a, b)) = unordered_pair(store, buf.authored_by(node), |x| buf.is_complete(x)) {
            out.insert(node, a, b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::crypto::SimAuthenticator;
    use crate::types::{Block, BlockId, SlotDigest};

    struct Fx {
        store: BlockStore,
        auth: Arc<SimAuthenticator>,
    }

    impl Fx {
        fn new() -> Self {
            let auth = Arc::new(SimAuthenticator::new("node", 3, 8));
            Fx { store: BlockStore::new(Block::genesis(1, vec![]), 1, auth.clone()), auth }
        }

        fn add(&mut self, refs: &[BlockIdx], slot: u64, round: u32, node: u32) -> BlockIdx {
            let ids: Vec<BlockId> = refs.iter().map(|&r| self.store.id(r)).collect();
            let b = Block::unsigned(ids, SlotDigest::ROOT, vec![], vec![], Timestamp::new(slot, round), NodeId(node))
                .signed(&*self.auth)
                .unwrap();
            self.store.insert(b)
        }
    }

    #[test]
    fn diamond_cone_has_seven_blocks() {
        let mut fx = Fx::new();
        let r1: Vec<_> = (0..4).map(|n| fx.add(&[0], 1, 1, n)).collect();
        let a = fx.add(&r1[..2], 1, 2, 0);
        let b = fx.add(&r1[2..], 1, 2, 1);
        let top = fx.add(&[a, b], 1, 3, 0);
        // genesis + 4 + 2 = 7 below the top; top itself included
        assert_eq!(fx.store.cone(top).unwrap().len(), 8);
        assert_eq!(fx.store.cone(a).unwrap().len(), 4);
    }

    #[test]
    fn tips_examples() {
        let mut fx = Fx::new();
        let mut d = DagStore::new();
        assert_eq!(d.tips().collect::<Vec<_>>(), vec![0]);
        let a = fx.add(&[0], 1, 1, 0);
        let b = fx.add(&[a], 1, 2, 0);
        let c = fx.add(&[b], 1, 3, 0);
        d.add_cone(&fx.store, c).unwrap();
        assert_eq!(d.tips().collect::<Vec<_>>(), vec![c]);
        let round: Vec<_> = (1..4).map(|n| fx.add(&[c], 2, 1, n)).collect();
        for &x in &round {
            d.add_cone(&fx.store, x).unwrap();
        }
        let own = fx.add(&[c], 2, 1, 0);
        d.add_cone(&fx.store, own).unwrap();
        assert_eq!(d.tips().count(), 4);
    }

    #[test]
    fn quorum_examples() {
        let mut fx = Fx::new();
        let bs: Vec<_> = (0..3).map(|n| fx.add(&[0], 1, 1, n)).collect();
        assert!(is_quorum(&fx.store, bs.clone(), 1));
        assert!(!is_quorum(&fx.store, Vec::new(), 1));
        let dup = fx.add(&[bs[0]], 1, 2, 0);
        assert!(!is_quorum(&fx.store, [bs[0], dup, bs[1]], 1));
    }

    #[test]
    fn reach_number_examples() {
        let mut fx = Fx::new();
        let old = fx.add(&[0], 1, 1, 3);
        let obs: Vec<_> = (0..3).map(|n| fx.add(&[old], 2, 1, n)).collect();
        let blind = fx.add(&[0], 2, 1, 3);
        let mut refs = obs.clone();
        refs.push(blind);
        let b = fx.add(&refs, 2, 2, 0);
        assert_eq!(reach_number(&fx.store, old, b), 3);
        assert_eq!(reach_number(&fx.store, b, b), 1);
        let lonely = fx.add(&[0], 1, 2, 5);
        assert_eq!(reach_number(&fx.store, lonely, b), 0);
    }

    #[test]
    fn equivocation_detection() {
        let mut fx = Fx::new();
        let mut buf = Buffer::new();
        let a1 = fx.add(&[0], 1, 1, 0);
        let a2 = fx.add(&[a1], 1, 2, 0);
        let a3 = fx.add(&[a2], 1, 3, 0);
        for b in [a1, a2, a3] {
            buf.insert(&fx.store, b);
        }
        buf.refresh(&fx.store);
        assert!(detect_equivocations(&fx.store, &buf).is_empty());

        // same timestamp
        let twin = fx.add(&[a1, 0], 1, 2, 0);
        buf.insert(&fx.store, twin);
        buf.refresh(&fx.store);
        let eq = detect_equivocations(&fx.store, &buf);
        assert!(eq.contains(NodeId(0)));

        // fork at different rounds: c3 skips c2
        let c1 = fx.add(&[0], 1, 1, 1);
        let c2 = fx.add(&[c1], 1, 2, 1);
        let c3 = fx.add(&[0], 1, 3, 1);
        let mut buf = Buffer::new();
        for b in [c1, c2, c3] {
            buf.insert(&fx.store, b);
        }
        buf.refresh(&fx.store);
        let eq = detect_equivocations(&fx.store, &buf);
        assert_eq!(eq.proof(NodeId(1)), Some((c2, c3)));
    }

    #[test]
    fn missing_ancestor_in_buffer() {
        let mut fx = Fx::new();
        let a = fx.add(&[0], 1, 1, 0);
        let b = fx.add(&[a], 1, 2, 0);
        let mut buf = Buffer::new();
        buf.insert(&fx.store, b);
        assert!(buf.refresh(&fx.store).is_empty());
        assert!(matches!(buf.cone(&fx.store, b), Err(CoreError::MissingAncestor { .. })));
        buf.insert(&fx.store, a);
        assert_eq!(buf.refresh(&fx.store), vec![a, b]);
        assert_eq!(buf.cone(&fx.store, b).unwrap().len(), 3);
    }
}
