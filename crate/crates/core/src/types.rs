//! Identifiers, timestamps and the block record.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec;
use crate::crypto::{self, Authenticator};
use crate::error::{CoreError, Result};
use crate::tx::UtxoTx;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    /// Author recorded on the genesis block. Never a member of the committee.
    pub const GENESIS: NodeId = NodeId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == NodeId::GENESIS {
            write!(f, "genesis")
        } else {
            write!(f, "n{}", self.0)
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| CoreError::Decode(e.to_string()))?;
        Ok(Hash32(out))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash32::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Hash of a block's full canonical encoding.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub Hash32);

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0.short())
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A slot digest value together with the slot it commits.
/// The root (slot -1) has the all-zero value.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotDigest {
    pub slot: i64,
    pub value: Hash32,
}

impl SlotDigest {
    pub const ROOT: SlotDigest = SlotDigest { slot: -1, value: Hash32::ZERO };

    pub fn is_root(&self) -> bool {
        *self == Self::ROOT
    }
}

impl fmt::Debug for SlotDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "σ{}:{}", self.slot, self.value.short())
    }
}

impl fmt::Display for SlotDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.slot, self.value)
    }
}

impl FromStr for SlotDigest {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let (slot, value) = s
            .split_once(':')
            .ok_or_else(|| CoreError::Decode(format!("bad digest {s}")))?;
        let slot = slot.parse().map_err(|_| CoreError::Decode(format!("bad digest slot {s}")))?;
        Ok(SlotDigest { slot, value: Hash32::from_hex(value)? })
    }
}

impl Serialize for SlotDigest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Position on the round grid. A slot has `f + 2` rounds numbered from 1.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timestamp {
    pub slot: u64,
    pub round: u32,
}

pub fn rounds_per_slot(f: u32) -> u32 {
    f + 2
}

impl Timestamp {
    pub fn new(slot: u64, round: u32) -> Self {
        Timestamp { slot, round }
    }

    pub fn genesis(f: u32) -> Self {
        Timestamp { slot: 0, round: rounds_per_slot(f) }
    }

    pub fn is_last_round(self, f: u32) -> bool {
        self.round == rounds_per_slot(f)
    }

    /// Predecessor on the round grid.
    pub fn before(self, f: u32) -> Result<Self> {
        if self <= Self::genesis(f) {
            return Err(CoreError::UndefinedBeforeGenesis);
        }
        Ok(if self.round > 1 {
            Timestamp { slot: self.slot, round: self.round - 1 }
        } else {
            Timestamp { slot: self.slot - 1, round: rounds_per_slot(f) }
        })
    }

    pub fn next(self, f: u32) -> Self {
        if self.round >= rounds_per_slot(f) {
            Timestamp { slot: self.slot + 1, round: 1 }
        } else {
            Timestamp { slot: self.slot, round: self.round + 1 }
        }
    }

    /// Rounds elapsed since genesis; genesis itself is 0.
    pub fn global_round(self, f: u32) -> u64 {
        let r = rounds_per_slot(f) as u64;
        (self.slot * r + self.round as u64).saturating_sub(r)
    }

    pub fn from_global_round(g: u64, f: u32) -> Self {
        if g == 0 {
            return Self::genesis(f);
        }
        let r = rounds_per_slot(f) as u64;
        Timestamp { slot: (g - 1) / r + 1, round: ((g - 1) % r + 1) as u32 }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.slot, self.round)
    }
}

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig:{}", hex::encode(&self.0[..self.0.len().min(4)]))
    }
}

/// Two signed blocks by one author at one timestamp.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EquivocationProof {
    pub first: Block,
    pub second: Block,
}

impl EquivocationProof {
    pub fn author(&self) -> NodeId {
        self.first.node
    }

    /// Self-contained check: same author and timestamp, distinct content, both signatures valid.
    pub fn verify(&self, auth: &dyn Authenticator) -> bool {
        self.first.node == self.second.node
            && self.first.node != NodeId::GENESIS
            && self.first.time == self.second.time
            && self.first.id() != self.second.id()
            && self.first.verify(auth)
            && self.second.verify(auth)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub refs: Vec<BlockId>,
    pub digest: SlotDigest,
    pub txs: Vec<UtxoTx>,
    /// Equivocation proofs carried alongside the payload.
    pub evidence: Vec<EquivocationProof>,
    pub time: Timestamp,
    pub node: NodeId,
    pub sign: Signature,
}

impl Block {
    pub fn genesis(f: u32, txs: Vec<UtxoTx>) -> Block {
        Block {
            refs: Vec::new(),
            digest: SlotDigest::ROOT,
            txs,
            evidence: Vec::new(),
            time: Timestamp::genesis(f),
            node: NodeId::GENESIS,
            sign: Signature::default(),
        }
    }

    /// Unsigned block with refs sorted ascending.
    pub fn unsigned(
        mut refs: Vec<BlockId>,
        digest: SlotDigest,
        txs: Vec<UtxoTx>,
        evidence: Vec<EquivocationProof>,
        time: Timestamp,
        node: NodeId,
    ) -> Block {
        refs.sort_unstable();
        Block { refs, digest, txs, evidence, time, node, sign: Signature::default() }
    }

    pub fn signed(mut self, auth: &dyn Authenticator) -> Result<Block> {
        self.sign = auth.sign(self.node.0, &self.signing_bytes())?;
        Ok(self)
    }

    pub fn verify(&self, auth: &dyn Authenticator) -> bool {
        self.node != NodeId::GENESIS && auth.verify(self.node.0, &self.signing_bytes(), &self.sign)
    }

    pub fn slot(&self) -> u64 {
        self.time.slot
    }

    pub fn round(&self) -> u32 {
        self.time.round
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode_block(self, false)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode_block(self, true)
    }

    pub fn id(&self) -> BlockId {
        BlockId(crypto::hash(&self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn before_time_examples() {
        assert_eq!(Timestamp::new(3, 2).before(1), Ok(Timestamp::new(3, 1)));
        assert_eq!(Timestamp::new(3, 1).before(1), Ok(Timestamp::new(2, 3)));
        assert_eq!(Timestamp::new(1, 1).before(2), Ok(Timestamp::new(0, 4)));
        assert_eq!(Timestamp::genesis(1).before(1), Err(CoreError::UndefinedBeforeGenesis));
    }

    #[test]
    fn global_round_roundtrip() {
        for f in 0..4 {
            assert_eq!(Timestamp::genesis(f).global_round(f), 0);
            let mut t = Timestamp::genesis(f);
            for g in 1..100u64 {
                t = t.next(f);
                assert_eq!(t.global_round(f), g);
                assert_eq!(Timestamp::from_global_round(g, f), t);
                assert_eq!(t.before(f).unwrap().global_round(f), g - 1);
            }
        }
    }

    #[test]
    fn digest_string_roundtrip() {
        let d = SlotDigest { slot: 4, value: crypto::hash(b"x") };
        let s = serde_json::to_string(&d).unwrap();
        let back: SlotDigest = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert_eq!("-1:".to_string() + &Hash32::ZERO.to_hex(), SlotDigest::ROOT.to_string());
    }

    #[test]
    fn proof_requires_same_time() {
        let auth = crate::crypto::SimAuthenticator::new("node", 1, 2);
        let mk = |r: u32, d: u8| {
            Block::unsigned(
                vec![BlockId(Hash32([d; 32]))],
                SlotDigest::ROOT,
                vec![],
                vec![],
                Timestamp::new(1, r),
                NodeId(1),
            )
            .signed(&auth)
            .unwrap()
        };
        assert!(EquivocationProof { first: mk(1, 1), second: mk(1, 2) }.verify(&auth));
        assert!(!EquivocationProof { first: mk(1, 1), second: mk(2, 2) }.verify(&auth));
        assert!(!EquivocationProof { first: mk(1, 1), second: mk(1, 1) }.verify(&auth));
        let mut forged = mk(1, 3);
        forged.sign.0[0] ^= 1;
        assert!(!EquivocationProof { first: mk(1, 1), second: forged }.verify(&auth));
    }
}
