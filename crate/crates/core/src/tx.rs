//! UTXO transaction model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::crypto::{self, Authenticator};
use crate::error::Result;
use crate::types::{Hash32, Signature};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u32);

#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub Hash32);

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0.short())
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Output `index` of transaction `tx`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtxoId {
    pub tx: TxId,
    pub index: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxOutput {
    pub value: u64,
    pub owner: AccountId,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UtxoTx {
    pub inputs: Vec<UtxoId>,
    pub outputs: Vec<TxOutput>,
    pub sign: Signature,
}

impl UtxoTx {
    /// The input-less transaction that mints the initial balances.
    pub fn genesis(outputs: Vec<TxOutput>) -> UtxoTx {
        UtxoTx { inputs: Vec::new(), outputs, sign: Signature::default() }
    }

    pub fn signed(
        inputs: Vec<UtxoId>,
        outputs: Vec<TxOutput>,
        owner: AccountId,
        auth: &dyn Authenticator,
    ) -> Result<UtxoTx> {
        let mut tx = UtxoTx { inputs, outputs, sign: Signature::default() };
        tx.sign = auth.sign(owner.0, &tx.signing_bytes())?;
        Ok(tx)
    }

    pub fn is_genesis(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode_tx(self, false)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode_tx(self, true)
    }

    pub fn id(&self) -> TxId {
        TxId(crypto::hash(&self.to_bytes()))
    }

    pub fn output_id(&self, index: u32) -> UtxoId {
        UtxoId { tx: self.id(), index }
    }

    pub fn verify_owner(&self, owner: AccountId, auth: &dyn Authenticator) -> bool {
        auth.verify(owner.0, &self.signing_bytes(), &self.sign)
    }
}

/// Distinct transactions that consume a common input.
pub fn is_double_spend(a: &UtxoTx, b: &UtxoTx) -> bool {
    a.inputs.iter().any(|i| b.inputs.contains(i)) && a.id() != b.id()
}
