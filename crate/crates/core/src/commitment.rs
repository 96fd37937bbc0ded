//! Slot digests, backbone chains, block orders, digest certificates and finality.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use crate::crypto::hash_parts;
use crate::dag::{quorum_size, unordered_pair, BlockIdx, BlockSet, BlockStore};
use crate::error::{CoreError, Result};
use crate::types::{BlockId, Hash32, NodeId, SlotDigest, Timestamp};

/// `Hash(parent ∥ id_1 ∥ … ∥ id_k)`.
pub fn digest_value(parent: &Hash32, ids: impl IntoIterator<Item = BlockId>) -> Hash32 {
    let ids: Vec<BlockId> = ids.into_iter().collect();
    hash_parts(std::iter::once(&parent.0[..]).chain(ids.iter().map(|i| &i.0 .0[..])))
}

/// Deterministic topological order of `blocks`: among blocks whose in-set
/// ancestors are already placed, the smallest (slot, round, node, id) goes first.
pub fn concat_order(store: &BlockStore, blocks: &[BlockIdx]) -> Vec<BlockIdx> {
    let k = blocks.len();
    let key = |b: BlockIdx| {
        let blk = store.block(b);
        (blk.time, blk.node, store.id(b), b)
    };
    let below = |a: BlockIdx, b: BlockIdx| a != b && store.cone(b).is_some_and(|c| c.contains(a));
    let mut indeg = vec![0usize; k];
    for (j, &b) in blocks.iter().enumerate() {
        indeg[j] = blocks.iter().filter(|&&a| below(a, b)).count();
    }
    let mut heap: BinaryHeap<Reverse<((Timestamp, NodeId, BlockId, BlockIdx), usize)>> = blocks
        .iter()
        .enumerate()
        .filter(|(j, _)| indeg[*j] == 0)
        .map(|(j, &b)| Reverse((key(b), j)))
        .collect();
    let mut out = Vec::with_capacity(k);
    while let Some(Reverse((_, j))) = heap.pop() {
        let a = blocks[j];
        out.push(a);
        for (m, &b) in blocks.iter().enumerate() {
            if below(a, b) {
                indeg[m] -= 1;
                if indeg[m] == 0 {
                    heap.push(Reverse((key(b), m)));
                }
            }
        }
    }
    debug_assert_eq!(out.len(), k, "cycle in block set");
    out
}

#[derive(Clone, Debug)]
pub struct DigestEntry {
    pub digest: SlotDigest,
    pub parent: Option<SlotDigest>,
    /// Blocks first committed by this digest, in concat order.
    pub new_blocks: Vec<BlockIdx>,
    /// Every block committed by this digest and its ancestors.
    pub committed: BlockSet,
}

/// Backbone chain `(σ_{-1}, σ_0, …, σ_s)`; position `j` holds the slot `j-1` digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackboneChain {
    digests: Vec<SlotDigest>,
}

impl BackboneChain {
    pub fn root() -> Self {
        BackboneChain { digests: vec![SlotDigest::ROOT] }
    }

    pub fn last(&self) -> SlotDigest {
        *self.digests.last().unwrap()
    }

    pub fn last_slot(&self) -> i64 {
        self.last().slot
    }

    pub fn get(&self, slot: i64) -> Option<SlotDigest> {
        usize::try_from(slot + 1).ok().and_then(|j| self.digests.get(j)).copied()
    }

    pub fn push(&mut self, d: SlotDigest) {
        assert_eq!(d.slot, self.last_slot() + 1, "chain must grow one slot at a time");
        self.digests.push(d);
    }

    pub fn contains(&self, d: &SlotDigest) -> bool {
        self.get(d.slot) == Some(*d)
    }

    pub fn digests(&self) -> &[SlotDigest] {
        &self.digests
    }
}

/// Per-node map from digest to what it commits.
#[derive(Clone, Debug)]
pub struct DigestRegistry {
    entries: HashMap<SlotDigest, DigestEntry>,
    eq_sets: HashMap<SlotDigest, BTreeSet<NodeId>>,
    last_final: HashMap<SlotDigest, i64>,
    newly: Vec<SlotDigest>,
}

impl Default for DigestRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl DigestRegistry {
    pub fn new() -> Self {
        let root = DigestEntry {
            digest: SlotDigest::ROOT,
            parent: None,
            new_blocks: Vec::new(),
            committed: BlockSet::new(),
        };
        DigestRegistry {
            entries: HashMap::from([(SlotDigest::ROOT, root)]),
            eq_sets: HashMap::from([(SlotDigest::ROOT, BTreeSet::new())]),
            last_final: HashMap::new(),
            newly: Vec::new(),
        }
    }

    /// Digests registered since the previous call, in registration order.
    pub fn take_new(&mut self) -> Vec<SlotDigest> {
        std::mem::take(&mut self.newly)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, d: &SlotDigest) -> bool {
        self.entries.contains_key(d)
    }

    pub fn get(&self, d: &SlotDigest) -> Result<&DigestEntry> {
        self.entries.get(d).ok_or(CoreError::UnknownDigest(*d))
    }

    /// `BeforeCommit(σ)`; `None` for the root.
    pub fn parent(&self, d: &SlotDigest) -> Result<Option<SlotDigest>> {
        Ok(self.get(d)?.parent)
    }

    pub fn committed(&self, d: &SlotDigest) -> Result<&BlockSet> {
        Ok(&self.get(d)?.committed)
    }

    /// Registers the child of `parent` committing `ordered` (already in concat order).
    pub fn register(&mut self, parent: SlotDigest, ordered: Vec<BlockIdx>, store: &BlockStore) -> Result<SlotDigest> {
        let value = digest_value(&parent.value, ordered.iter().map(|&b| store.id(b)));
        let d = SlotDigest { slot: parent.slot + 1, value };
        if self.entries.contains_key(&d) {
            return Ok(d);
        }
        let mut committed = self.committed(&parent)?.clone();
        for &b in &ordered {
            committed.insert(b);
        }
        self.entries.insert(d, DigestEntry { digest: d, parent: Some(parent), new_blocks: ordered, committed });
        self.newly.push(d);
        Ok(d)
    }

    /// Ancestor of `d` committing slot `slot`, if `slot ≤ d.slot`.
    pub fn ancestor_at(&self, d: &SlotDigest, slot: i64) -> Result<Option<SlotDigest>> {
        let mut cur = *d;
        if slot > cur.slot || slot < -1 {
            return Ok(None);
        }
        while cur.slot > slot {
            cur = self.get(&cur)?.parent.expect("non-root has a parent");
        }
        Ok(Some(cur))
    }

    pub fn chain(&self, d: &SlotDigest) -> Result<BackboneChain> {
        let mut digests = vec![*d];
        let mut cur = *d;
        while let Some(p) = self.get(&cur)?.parent {
            digests.push(p);
            cur = p;
        }
        digests.reverse();
        Ok(BackboneChain { digests })
    }

    /// `Order(σ) = Order(parent) ∥ new blocks of σ`.
    pub fn order_of(&self, d: &SlotDigest) -> Result<Vec<BlockIdx>> {
        let chain = self.chain(d)?;
        let mut out = Vec::new();
        for c in chain.digests() {
            out.extend_from_slice(&self.get(c)?.new_blocks);
        }
        Ok(out)
    }

    /// Neither digest lies on the other's backbone chain.
    pub fn is_conflict(&self, a: &SlotDigest, b: &SlotDigest) -> Result<bool> {
        self.get(a)?;
        self.get(b)?;
        let (lo, hi) = if a.slot <= b.slot { (a, b) } else { (b, a) };
        Ok(self.ancestor_at(hi, lo.slot)? != Some(*lo))
    }

    /// Equivocators visible inside `D(σ)`, plus authors of valid proofs carried by its blocks.
    pub fn eq_set(&mut self, store: &BlockStore, d: &SlotDigest) -> Result<&BTreeSet<NodeId>> {
        if !self.eq_sets.contains_key(d) {
            let mut pending = vec![*d];
            let mut cur = *d;
            while let Some(p) = self.get(&cur)?.parent {
                if self.eq_sets.contains_key(&p) {
                    break;
                }
                pending.push(p);
                cur = p;
            }
            for x in pending.into_iter().rev() {
                let e = self.get(&x)?;
                let mut set = self.eq_sets[&e.parent.expect("root is memoised")].clone();
                let committed = &e.committed;
                let mut authors = BTreeSet::new();
                for &b in &e.new_blocks {
                    authors.insert(store.block(b).node);
                    for &(p, _) in &store.entry(b).proofs {
                        set.insert(store.block(p).node);
                    }
                }
                for a in authors {
                    if a == NodeId::GENESIS || set.contains(&a) {
                        continue;
                    }
                    let mut mine: Vec<BlockIdx> =
                        store.by_author(a).iter().copied().filter(|&b| committed.contains(b)).collect();
                    mine.sort_by_key(|&b| (store.block(b).time, b));
                    if unordered_pair(store, &mine, |_| true).is_some() {
                        set.insert(a);
                    }
                }
                self.eq_sets.insert(x, set);
            }
        }
        Ok(&self.eq_sets[d])
    }

    /// Slot of the latest digest on `Chain(σ)` that is final inside `D(σ)`; 0 if none.
    pub fn last_final(&mut self, store: &BlockStore, d: &SlotDigest) -> Result<i64> {
        if let Some(&v) = self.last_final.get(d) {
            return Ok(v);
        }
        let committed = self.committed(d)?.clone();
        let f = store.f();
        let mut found = 0;
        let mut x = d.slot - 2;
        while x >= 1 {
            let target = self.ancestor_at(d, x)?.expect("x below d.slot");
            let dcs = store
                .at_slot((x + 2) as u64)
                .iter()
                .copied()
                .filter(|&b| committed.contains(b) && is_digest_certificate(store, b) == Some(target));
            if crate::dag::is_quorum(store, dcs, f) {
                found = x;
                break;
            }
            x -= 1;
        }
        self.last_final.insert(*d, found);
        Ok(found)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DigestEntry> {
        self.entries.values()
    }
}

/// Registers the digest for slot `s` over `members`, extending `parent`.
pub fn compute_slot_digest(
    registry: &mut DigestRegistry,
    store: &BlockStore,
    parent: SlotDigest,
    members: &BlockSet,
    s: i64,
) -> Result<SlotDigest> {
    if s != parent.slot + 1 {
        return Err(CoreError::UnknownDigest(parent));
    }
    let committed = registry.committed(&parent)?;
    let fresh: Vec<BlockIdx> = members.difference(committed).filter(|&b| store.block(b).slot() as i64 <= s).collect();
    let ordered = concat_order(store, &fresh);
    registry.register(parent, ordered, store)
}

/// `Commit(a)`: the digest σ with `σ.slot = a.slot - 2` carried by a quorum of
/// slot-`a.slot` blocks in `cone(a)`. Only digests of slot 0 or later are certified.
pub fn is_digest_certificate(store: &BlockStore, a: BlockIdx) -> Option<SlotDigest> {
    *store.entry(a).dc.get_or_init(|| {
        let blk = store.block(a);
        let slot = blk.slot();
        if slot < 2 {
            return None;
        }
        let cone = store.cone(a)?;
        let mut support: BTreeMap<SlotDigest, BTreeSet<NodeId>> = BTreeMap::new();
        for &e in store.at_slot(slot) {
            let d = store.block(e).digest;
            if cone.contains(e) && d.slot == slot as i64 - 2 {
                support.entry(d).or_default().insert(store.block(e).node);
            }
        }
        let q = quorum_size(store.f());
        support.into_iter().find(|(_, authors)| authors.len() >= q).map(|(d, _)| d)
    })
}

/// Result of [`last_commit_certificate`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct CertRef {
    pub slot: i64,
    pub commit: SlotDigest,
    /// `None` for the synthetic certificate of the root digest.
    pub block: Option<BlockIdx>,
}

impl CertRef {
    pub const SYNTHETIC: CertRef = CertRef { slot: -1, commit: SlotDigest::ROOT, block: None };
}

/// Latest block by `b`'s author inside `cone(b)` that is a digest certificate.
pub fn last_commit_certificate(store: &BlockStore, b: BlockIdx) -> CertRef {
    let author = store.block(b).node;
    let Some(cone) = store.cone(b) else { return CertRef::SYNTHETIC };
    let mut mine: Vec<BlockIdx> = store.by_author(author).iter().copied().filter(|&x| cone.contains(x)).collect();
    mine.sort_by_key(|&x| std::cmp::Reverse((store.block(x).time, store.id(x))));
    for x in mine {
        if let Some(d) = is_digest_certificate(store, x) {
            return CertRef { slot: store.block(x).slot() as i64, commit: d, block: Some(x) };
        }
    }
    CertRef::SYNTHETIC
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalityState {
    pub s_final: i64,
    pub s_pre: i64,
    pub final_digest: SlotDigest,
    /// Slot → finality time, for every slot up to `s_pre`.
    pub finality_times: BTreeMap<i64, i64>,
}

impl Default for FinalityState {
    fn default() -> Self {
        FinalityState { s_final: 0, s_pre: 0, final_digest: SlotDigest::ROOT, finality_times: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FinalizeOutcome {
    pub newly_final: Vec<SlotDigest>,
    /// New finality times, in the order the consensus path must process them.
    pub taus: Vec<i64>,
}

impl FinalityState {
    /// First chain slot τ with `LastFinal(D(Chain[τ])) ≥ x`, defined only while
    /// `x ≤ LastFinal(D(Chain[s_final]))`.
    pub fn final_time(
        &self,
        x: i64,
        chain: &BackboneChain,
        registry: &mut DigestRegistry,
        store: &BlockStore,
    ) -> Result<Option<i64>> {
        let Some(top) = chain.get(self.s_final) else { return Ok(None) };
        if x < 1 || x > registry.last_final(store, &top)? {
            return Ok(None);
        }
        for tau in (x + 2)..=self.s_final {
            let d = chain.get(tau).expect("tau within chain");
            if registry.last_final(store, &d)? >= x {
                return Ok(Some(tau));
            }
        }
        Ok(None)
    }

    /// Looks for quorums of certificates among `members` at slots `s_final+3 ..= now`.
    pub fn finalize_slots(
        &mut self,
        now: i64,
        chain: &BackboneChain,
        registry: &mut DigestRegistry,
        store: &BlockStore,
        members: &BlockSet,
    ) -> Result<FinalizeOutcome> {
        let mut out = FinalizeOutcome::default();
        let f = store.f();
        let mut t = self.s_final + 3;
        while t <= now {
            let Some(target) = chain.get(t - 2) else { break };
            let dcs = store
                .at_slot(t as u64)
                .iter()
                .copied()
                .filter(|&b| members.contains(b) && is_digest_certificate(store, b) == Some(target));
            if crate::dag::is_quorum(store, dcs, f) {
                self.s_final = t - 2;
                self.final_digest = target;
                out.newly_final.push(target);
                while let Some(tau) = self.final_time(self.s_pre + 1, chain, registry, store)? {
                    let d = chain.get(tau).expect("tau within chain");
                    let pre = registry.last_final(store, &d)?;
                    for x in (self.s_pre + 1)..=pre {
                        self.finality_times.insert(x, tau);
                    }
                    self.s_pre = pre;
                    out.taus.push(tau);
                }
            }
            t += 1;
        }
        Ok(out)
    }
}
