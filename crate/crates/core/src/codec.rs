//! Canonical byte encoding of blocks and transactions.
//!
//! All integers are little-endian; variable-length parts carry a `u32`
//! length or count prefix. The byte layout is described in
//! `docs/wire-format.md`.

use crate::error::{CoreError, Result};
use crate::tx::{AccountId, TxId, TxOutput, UtxoId, UtxoTx};
use crate::types::{Block, BlockId, EquivocationProof, Hash32, NodeId, Signature, SlotDigest, Timestamp};

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

pub fn encode_tx(tx: &UtxoTx, with_sig: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + tx.inputs.len() * 36 + tx.outputs.len() * 12 + 36);
    put_u32(&mut out, tx.inputs.len() as u32);
    for i in &tx.inputs {
        out.extend_from_slice(&i.tx.0 .0);
        put_u32(&mut out, i.index);
    }
    put_u32(&mut out, tx.outputs.len() as u32);
    for o in &tx.outputs {
        out.extend_from_slice(&o.value.to_le_bytes());
        put_u32(&mut out, o.owner.0);
    }
    if with_sig {
        put_bytes(&mut out, &tx.sign.0);
    }
    out
}

/// Refs are written sorted regardless of their order in `b.refs`.
pub fn encode_block(b: &Block, with_sig: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + b.refs.len() * 32);
    let mut refs = b.refs.clone();
    refs.sort_unstable();
    put_u32(&mut out, refs.len() as u32);
    for r in &refs {
        out.extend_from_slice(&r.0 .0);
    }
    out.extend_from_slice(&b.digest.slot.to_le_bytes());
    out.extend_from_slice(&b.digest.value.0);
    put_u32(&mut out, b.txs.len() as u32);
    for tx in &b.txs {
        put_bytes(&mut out, &encode_tx(tx, true));
    }
    put_u32(&mut out, b.evidence.len() as u32);
    for p in &b.evidence {
        put_bytes(&mut out, &encode_block(&p.first, true));
        put_bytes(&mut out, &encode_block(&p.second, true));
    }
    out.extend_from_slice(&b.time.slot.to_le_bytes());
    put_u32(&mut out, b.time.round);
    put_u32(&mut out, b.node.0);
    if with_sig {
        put_bytes(&mut out, &b.sign.0);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CoreError::Decode(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn hash(&mut self) -> Result<Hash32> {
        Ok(Hash32(self.take(32)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CoreError::Decode(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub fn decode_tx(bytes: &[u8]) -> Result<UtxoTx> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let n_in = r.u32()?;
    let mut inputs = Vec::new();
    for _ in 0..n_in {
        let tx = TxId(r.hash()?);
        inputs.push(UtxoId { tx, index: r.u32()? });
    }
    let n_out = r.u32()?;
    let mut outputs = Vec::new();
    for _ in 0..n_out {
        let value = r.u64()?;
        outputs.push(TxOutput { value, owner: AccountId(r.u32()?) });
    }
    let sign = Signature(r.bytes()?.to_vec());
    r.finish()?;
    Ok(UtxoTx { inputs, outputs, sign })
}

pub fn decode_block(bytes: &[u8]) -> Result<Block> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let n_refs = r.u32()?;
    let mut refs = Vec::new();
    for _ in 0..n_refs {
        refs.push(BlockId(r.hash()?));
    }
    let slot = r.i64()?;
    let digest = SlotDigest { slot, value: r.hash()? };
    let n_txs = r.u32()?;
    let mut txs = Vec::new();
    for _ in 0..n_txs {
        txs.push(decode_tx(r.bytes()?)?);
    }
    let n_ev = r.u32()?;
    let mut evidence = Vec::new();
    for _ in 0..n_ev {
        let first = decode_block(r.bytes()?)?;
        let second = decode_block(r.bytes()?)?;
        evidence.push(EquivocationProof { first, second });
    }
    let slot = r.u64()?;
    let time = Timestamp { slot, round: r.u32()? };
    let node = NodeId(r.u32()?);
    let sign = Signature(r.bytes()?.to_vec());
    r.finish()?;
    Ok(Block { refs, digest, txs, evidence, time, node, sign })
}
