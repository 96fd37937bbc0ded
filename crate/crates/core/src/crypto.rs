//! Hashing and the signing abstraction.

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::types::{Hash32, Signature};

pub const HASH_NAME: &str = "sha256";

pub fn hash(data: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(data).into())
}

/// Hash of the concatenation of `parts`, without materialising it.
pub fn hash_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash32(h.finalize().into())
}

/// Signs and verifies on behalf of numbered principals (nodes or accounts).
pub trait Authenticator: Send + Sync {
    fn sign(&self, signer: u32, data: &[u8]) -> Result<Signature>;
    fn verify(&self, signer: u32, data: &[u8], sig: &Signature) -> bool;
    fn scheme(&self) -> &'static str;
}

type HmacSha256 = Hmac<Sha256>;

/// Keyed-MAC stand-in for real signatures. Each principal's key is derived
/// from a domain label, the run seed and the principal index, so two runs
/// with the same seed produce identical signatures.
#[derive(Clone)]
pub struct SimAuthenticator {
    keys: Vec<[u8; 32]>,
}

impl SimAuthenticator {
    pub const SCHEME: &'static str = "hmac-sha256-sim";

    pub fn new(domain: &str, seed: u64, principals: u32) -> Self {
        let keys = (0..principals)
            .map(|i| {
                hash_parts([
                    domain.as_bytes(),
                    &seed.to_le_bytes()[..],
                    &i.to_le_bytes()[..],
                ])
                .0
            })
            .collect();
        SimAuthenticator { keys }
    }

    pub fn principals(&self) -> u32 {
        self.keys.len() as u32
    }

    fn mac(&self, signer: u32) -> Option<HmacSha256> {
        let key = self.keys.get(signer as usize)?;
        Some(<HmacSha256 as KeyInit>::new_from_slice(key).expect("hmac accepts any key length"))
    }
}

impl Authenticator for SimAuthenticator {
    fn sign(&self, signer: u32, data: &[u8]) -> Result<Signature> {
        let mut mac = self.mac(signer).ok_or(CoreError::UnknownSigner(signer))?;
        mac.update(data);
        Ok(Signature(mac.finalize().into_bytes().to_vec()))
    }

    fn verify(&self, signer: u32, data: &[u8], sig: &Signature) -> bool {
        match self.mac(signer) {
            Some(mut mac) => {
                mac.update(data);
                mac.verify_slice(&sig.0).is_ok()
            }
            None => false,
        }
    }

    fn scheme(&self) -> &'static str {
        Self::SCHEME
    }
}

impl std::fmt::Debug for SimAuthenticator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SimAuthenticator({} principals)", self.keys.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_vectors() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hash_parts([&b"ab"[..], &b"c"[..]]), hash(b"abc"));
    }

    #[test]
    fn hash_spot_collisions() {
        let corpus: Vec<Vec<u8>> = (0u32..500).map(|i| i.to_le_bytes().to_vec()).collect();
        let mut seen = std::collections::HashSet::new();
        for c in &corpus {
            assert!(seen.insert(hash(c)));
        }
    }

    #[test]
    fn hmac_rfc4231_case2() {
        let mut mac = <HmacSha256 as KeyInit>::new_from_slice(b"Jefe").unwrap();
        mac.update(b"what do ya want for nothing?");
        assert_eq!(
            hex::encode(mac.finalize().into_bytes()),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    #[test]
    fn sign_verify() {
        let a = SimAuthenticator::new("node", 7, 4);
        let sig = a.sign(2, b"payload").unwrap();
        assert!(a.verify(2, b"payload", &sig));
        assert!(!a.verify(1, b"payload", &sig));
        assert!(!a.verify(2, b"payloae", &sig));
        assert!(!a.verify(9, b"payload", &sig));
        assert_eq!(a.sign(4, b"x"), Err(CoreError::UnknownSigner(4)));
        // different seed, different key
        let b = SimAuthenticator::new("node", 8, 4);
        assert!(!b.verify(2, b"payload", &sig));
    }
}
