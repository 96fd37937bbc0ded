//! Protocol state machine: blocks, DAGs, slot digests, finality, the UTXO ledger
//! and the per-node step function.

pub mod codec;
pub mod commitment;
pub mod crypto;
pub mod dag;
pub mod error;
pub mod ledger;
pub mod node;
pub mod tx;
pub mod types;

pub use error::{CoreError, Result};
pub use types::{Block, BlockId, EquivocationProof, Hash32, NodeId, Signature, SlotDigest, Timestamp};
