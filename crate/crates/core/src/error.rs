use thiserror::Error;

use crate::types::{BlockId, SlotDigest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("no timestamp precedes genesis")]
    UndefinedBeforeGenesis,
    #[error("signer {0} is not registered")]
    UnknownSigner(u32),
    #[error("digest {0} is not registered")]
    UnknownDigest(SlotDigest),
    #[error("block {0} is not known")]
    UnknownBlock(BlockId),
    #[error("ancestor {missing} of block {block} is missing")]
    MissingAncestor { block: BlockId, missing: BlockId },
    #[error("malformed encoding: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
