//! Graph, time and digest validity of block cones.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BlockIdx, BlockSet, BlockStore, GENESIS_IDX};
use crate::commitment::{concat_order, DigestRegistry};
use crate::types::{rounds_per_slot, BlockId, SlotDigest, Timestamp};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Unique reference-free Genesis.
    G1,
    /// Every reference is present.
    G2,
    /// No duplicate references.
    G3,
    /// References are strictly older.
    T1,
    /// Genesis alone at slot 0; other timestamps in range.
    T2,
    DV1,
    DV2,
    DV3,
    DV4,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub block: BlockId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.rule, self.block, self.detail)
    }
}

fn violation(store: &BlockStore, b: BlockIdx, rule: Rule, detail: impl Into<String>) -> Violation {
    Violation { rule, block: store.id(b), detail: detail.into() }
}

/// Checks `b` alone, assuming every block in its cone below it is valid and
/// every digest they carry at round `f+2` is registered. Registers `b.digest`
/// when `b` is a round-`f+2` block.
pub fn check_block(store: &BlockStore, registry: &mut DigestRegistry, b: BlockIdx) -> Result<(), Violation> {
    let f = store.f();
    let last = rounds_per_slot(f);
    let blk = store.block(b);
    let v = |rule, detail: String| Err(violation(store, b, rule, detail));

    if b == GENESIS_IDX {
        if !blk.refs.is_empty() {
            return v(Rule::G1, "genesis has references".into());
        }
        if blk.time != Timestamp::genesis(f) {
            return v(Rule::T2, format!("genesis at {}", blk.time));
        }
        if blk.digest != SlotDigest::ROOT {
            return v(Rule::DV1, format!("genesis digest {}", blk.digest));
        }
        return Ok(());
    }
    if blk.refs.is_empty() {
        return v(Rule::G1, "second reference-free block".into());
    }
    let Some(refs) = store.refs(b) else {
        return v(Rule::G2, format!("missing ancestor {}", store.first_missing(b)));
    };
    let mut sorted = blk.refs.clone();
    sorted.dedup();
    if sorted.len() != blk.refs.len() {
        return v(Rule::G3, "duplicate reference".into());
    }
    if blk.time.slot == 0 || blk.time.round == 0 || blk.time.round > last {
        return v(Rule::T2, format!("timestamp {} out of range", blk.time));
    }
    for &r in refs {
        let rt = store.block(r).time;
        if rt >= blk.time {
            return v(Rule::T1, format!("reference {} at {} not older than {}", store.id(r), rt, blk.time));
        }
    }

    let s = blk.slot() as i64;
    let want = if blk.round() == last { s - 1 } else { s - 2 };
    if blk.digest.slot != want {
        return v(Rule::DV2, format!("digest slot {} at {}, expected {}", blk.digest.slot, blk.time, want));
    }

    let ref_digests: Vec<SlotDigest> = refs.iter().map(|&r| store.block(r).digest).collect();
    if blk.round() == last {
        let p = ref_digests[0];
        if ref_digests.iter().any(|d| *d != p) || p.slot != blk.digest.slot - 1 {
            return v(Rule::DV3, "references disagree with the parent digest".into());
        }
        if !registry.contains(&p) {
            return v(Rule::DV4, format!("parent digest {p} unknown"));
        }
        let committed = registry.committed(&p).expect("checked");
        let cone = store.cone(b).expect("refs resolved");
        let fresh: Vec<BlockIdx> = cone.difference(committed).filter(|&x| store.block(x).slot() as i64 <= s - 1).collect();
        let ordered = concat_order(store, &fresh);
        let d = registry.register(p, ordered, store).expect("parent registered");
        if d != blk.digest {
            return v(Rule::DV4, format!("digest {} recomputes to {}", blk.digest, d));
        }
    } else if blk.round() == 1 {
        let mut others: BTreeMap<SlotDigest, usize> = BTreeMap::new();
        let mut same = 0;
        for d in &ref_digests {
            if *d == blk.digest {
                same += 1;
            } else {
                *others.entry(*d).or_default() += 1;
            }
        }
        if same == 0 || others.len() > 1 {
            return v(Rule::DV3, format!("{same} matching references, {} other digests", others.len()));
        }
    } else if ref_digests.iter().any(|d| *d != blk.digest) {
        return v(Rule::DV3, "reference with a different digest".into());
    }
    Ok(())
}

/// Memoised cone validation for one node.
#[derive(Clone, Debug, Default)]
pub struct Validator {
    valid: BlockSet,
    invalid: HashMap<BlockIdx, Violation>,
}

impl Validator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_known_valid(&self, b: BlockIdx) -> bool {
        self.valid.contains(b)
    }

    /// Validates `cone(b)`, reusing earlier verdicts.
    pub fn check_cone(&mut self, store: &BlockStore, registry: &mut DigestRegistry, b: BlockIdx) -> Result<(), Violation> {
        if self.valid.contains(b) {
            return Ok(());
        }
        if let Some(v) = self.invalid.get(&b) {
            return Err(v.clone());
        }
        let Some(cone) = store.cone(b) else {
            let v = violation(store, b, Rule::G2, format!("missing ancestor {}", store.first_missing(b)));
            self.invalid.insert(b, v.clone());
            return Err(v);
        };
        let mut todo: Vec<BlockIdx> = cone.difference(&self.valid).collect();
        todo.sort_by_key(|&x| (store.block(x).time, x));
        for x in todo {
            if self.invalid.contains_key(&x) {
                continue;
            }
            let bad_ref = store.refs(x).unwrap_or(&[]).iter().find_map(|r| self.invalid.get(r).cloned());
            let verdict = match bad_ref {
                // T1 must be judged before inheriting: a ref that is not older may not be checked yet
                Some(v) => check_time_only(store, x).and(Err(v)),
                None => check_block(store, registry, x),
            };
            match verdict {
                Ok(()) => {
                    self.valid.insert(x);
                }
                Err(v) => {
                    self.invalid.insert(x, v);
                }
            }
        }
        match self.invalid.get(&b) {
            None => Ok(()),
            Some(v) => Err(v.clone()),
        }
    }
}

fn check_time_only(store: &BlockStore, b: BlockIdx) -> Result<(), Violation> {
    let t = store.block(b).time;
    for &r in store.refs(b).unwrap_or(&[]) {
        if store.block(r).time >= t {
            return Err(violation(store, b, Rule::T1, "reference not older".to_string()));
        }
    }
    Ok(())
}

/// Full validity check of `candidate`, without memoisation. Returns the first
/// violation in (time, index) order.
pub fn is_valid_dag(store: &BlockStore, candidate: &BlockSet, registry: &mut DigestRegistry) -> Result<(), Violation> {
    if !candidate.contains(GENESIS_IDX) {
        let some = candidate.iter().next().unwrap_or(GENESIS_IDX);
        return Err(violation(store, some, Rule::G1, "genesis missing"));
    }
    let mut order: Vec<BlockIdx> = candidate.iter().collect();
    order.sort_by_key(|&x| (store.block(x).time, x));
    for &x in &order {
        match store.refs(x) {
            None => return Err(violation(store, x, Rule::G2, format!("missing ancestor {}", store.first_missing(x)))),
            Some(rs) => {
                if let Some(&r) = rs.iter().find(|&&r| !candidate.contains(r)) {
                    return Err(violation(store, x, Rule::G2, format!("reference {} outside the DAG", store.id(r))));
                }
            }
        }
    }
    for &x in &order {
        check_block(store, registry, x)?;
    }
    Ok(())
}
