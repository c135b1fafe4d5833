//! Cryptographic primitive provider.
//!
//! Every primitive is a pure function of its inputs; key generation takes an
//! explicit seed so that whole simulations replay bit-exactly. The protocol
//! layer only talks to [`Provider`], so the default construction
//! ([`StdProvider`]: Ed25519, X25519, SHA-256, HMAC-SHA256, HKDF-SHA256 and
//! ChaCha20-Poly1305) can be swapped for another deterministic one.

use std::fmt;
use std::sync::Arc;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use ed25519_dalek::Signer;
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::wire::{DecodeError, Reader, Writer};

pub const KEY_LEN: usize = 32;
pub const DIGEST_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const SIGNATURE_LEN: usize = 64;

pub type Digest = [u8; DIGEST_LEN];

pub const LABEL_INITIATOR: &str = "v2v-initiator";
pub const LABEL_RESPONDER: &str = "v2v-responder";
pub const LABEL_FINISHED: &str = "v2v-finished";
pub const KDF_LABELS: [&str; 3] = [LABEL_INITIATOR, LABEL_RESPONDER, LABEL_FINISHED];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("invalid group element")]
    InvalidPublicKey,
    #[error("empty shared secret")]
    EmptySecret,
    #[error("unknown kdf label {0:?}")]
    UnknownLabel(String),
    #[error("authenticated decryption failed")]
    Decrypt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Ed25519 = 1,
    X25519 = 2,
}

impl Algorithm {
    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Self::Ed25519),
            2 => Some(Self::X25519),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct KeyPair {
    pub algorithm: Algorithm,
    pub secret: [u8; KEY_LEN],
    pub public: [u8; KEY_LEN],
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("algorithm", &self.algorithm)
            .field("public", &hex(&self.public))
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.algorithm as u8).bytes(&self.secret).bytes(&self.public);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let algorithm = Algorithm::from_tag(r.u8()?)
            .ok_or(DecodeError::Invalid { what: "algorithm tag", offset: 0 })?;
        let secret = r.array()?;
        let public = r.array()?;
        r.finish()?;
        Ok(Self { algorithm, secret, public })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex(&self.0[..8]))
    }
}

/// Keys for one established session.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SessionKeys {
    pub client_write_key: [u8; KEY_LEN],
    pub server_write_key: [u8; KEY_LEN],
    pub finished_key: [u8; KEY_LEN],
}

impl fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKeys(..)")
    }
}

impl SessionKeys {
    pub fn all(&self) -> [&[u8; KEY_LEN]; 3] {
        [&self.client_write_key, &self.server_write_key, &self.finished_key]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Nonce {
    pub value: [u8; NONCE_LEN],
    pub origin: String,
}

/// Deterministic primitive suite used by every protocol participant.
pub trait Provider: Send + Sync + fmt::Debug {
    fn gen_keypair(&self, algorithm: Algorithm, seed: &[u8; 32]) -> KeyPair;
    fn sign(&self, secret: &[u8; KEY_LEN], message: &[u8]) -> Result<Signature, CryptoError>;
    /// Never fails loudly: malformed keys or signature encodings verify false.
    fn verify(&self, public: &[u8; KEY_LEN], message: &[u8], sig: &[u8]) -> bool;
    fn dh_shared(&self, my_secret: &[u8; KEY_LEN], their_public: &[u8; KEY_LEN]) -> Result<[u8; KEY_LEN], CryptoError>;
    fn kdf(&self, shared: &[u8], transcript_hash: &[u8], label: &str) -> Result<SessionKeys, CryptoError>;
    fn mac(&self, key: &[u8], message: &[u8]) -> Digest;
    fn hash(&self, message: &[u8]) -> Digest;
    fn seal(&self, key: &[u8; KEY_LEN], counter: u64, aad: &[u8], plaintext: &[u8]) -> Vec<u8>;
    fn open(&self, key: &[u8; KEY_LEN], counter: u64, aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

pub type ProviderRef = Arc<dyn Provider>;

pub fn default_provider() -> ProviderRef {
    Arc::new(StdProvider)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StdProvider;

impl Provider for StdProvider {
    fn gen_keypair(&self, algorithm: Algorithm, seed: &[u8; 32]) -> KeyPair {
        let public = match algorithm {
            Algorithm::Ed25519 => ed25519_dalek::SigningKey::from_bytes(seed).verifying_key().to_bytes(),
            Algorithm::X25519 => {
                let sk = x25519_dalek::StaticSecret::from(*seed);
                x25519_dalek::PublicKey::from(&sk).to_bytes()
            }
        };
        KeyPair { algorithm, secret: *seed, public }
    }

    fn sign(&self, secret: &[u8; KEY_LEN], message: &[u8]) -> Result<Signature, CryptoError> {
        if message.is_empty() {
            return Err(CryptoError::EmptyMessage);
        }
        let sk = ed25519_dalek::SigningKey::from_bytes(secret);
        Ok(Signature(sk.sign(message).to_bytes()))
    }

    fn verify(&self, public: &[u8; KEY_LEN], message: &[u8], sig: &[u8]) -> bool {
        if message.is_empty() {
            return false;
        }
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(public) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(sig) else {
            return false;
        };
        vk.verify_strict(message, &sig).is_ok()
    }

    fn dh_shared(&self, my_secret: &[u8; KEY_LEN], their_public: &[u8; KEY_LEN]) -> Result<[u8; KEY_LEN], CryptoError> {
        let sk = x25519_dalek::StaticSecret::from(*my_secret);
        let shared = sk.diffie_hellman(&x25519_dalek::PublicKey::from(*their_public));
        // Low-order points (including the all-zero encoding) give a
        // non-contributory all-zero result.
        if !shared.was_contributory() {
            return Err(CryptoError::InvalidPublicKey);
        }
        Ok(shared.to_bytes())
    }

    fn kdf(&self, shared: &[u8], transcript_hash: &[u8], label: &str) -> Result<SessionKeys, CryptoError> {
        if shared.is_empty() {
            return Err(CryptoError::EmptySecret);
        }
        if !KDF_LABELS.contains(&label) {
            return Err(CryptoError::UnknownLabel(label.to_owned()));
        }
        let hk = Hkdf::<Sha256>::new(Some(transcript_hash), shared);
        let mut okm = [0u8; 3 * KEY_LEN];
        hk.expand(label.as_bytes(), &mut okm).expect("96 bytes is a valid HKDF length");
        let mut keys = SessionKeys {
            client_write_key: [0; KEY_LEN],
            server_write_key: [0; KEY_LEN],
            finished_key: [0; KEY_LEN],
        };
        keys.client_write_key.copy_from_slice(&okm[..32]);
        keys.server_write_key.copy_from_slice(&okm[32..64]);
        keys.finished_key.copy_from_slice(&okm[64..]);
        Ok(keys)
    }

    fn mac(&self, key: &[u8], message: &[u8]) -> Digest {
        let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
        m.update(message);
        m.finalize().into_bytes().into()
    }

    fn hash(&self, message: &[u8]) -> Digest {
        Sha256::digest(message).into()
    }

    fn seal(&self, key: &[u8; KEY_LEN], counter: u64, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
        let cipher = ChaCha20Poly1305::new(key.into());
        cipher
            .encrypt(&aead_nonce(counter).into(), Payload { msg: plaintext, aad })
            .expect("in-memory encryption does not fail")
    }

    fn open(&self, key: &[u8; KEY_LEN], counter: u64, aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let cipher = ChaCha20Poly1305::new(key.into());
        cipher
            .decrypt(&aead_nonce(counter).into(), Payload { msg: ciphertext, aad })
            .map_err(|_| CryptoError::Decrypt)
    }
}

fn aead_nonce(counter: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

/// Constant-length tag comparison.
pub fn tags_equal(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn p() -> StdProvider {
        StdProvider
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = p().gen_keypair(Algorithm::Ed25519, &[0; 32]);
        let b = p().gen_keypair(Algorithm::Ed25519, &[0; 32]);
        assert_eq!(a, b);
        assert_eq!(KeyPair::from_bytes(&a.to_bytes()).unwrap(), a);
    }

    #[test]
    fn distinct_seeds_give_distinct_publics() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let seed: [u8; 32] = rng.gen();
            assert!(seen.insert(p().gen_keypair(Algorithm::X25519, &seed).public));
        }
    }

    #[test]
    fn sign_verify_roundtrip_and_wrong_key() {
        let kp = p().gen_keypair(Algorithm::Ed25519, &[1; 32]);
        let other = p().gen_keypair(Algorithm::Ed25519, &[2; 32]);
        let sig = p().sign(&kp.secret, b"hello").unwrap();
        assert!(p().verify(&kp.public, b"hello", &sig.0));
        assert!(!p().verify(&other.public, b"hello", &sig.0));
        assert_eq!(p().sign(&kp.secret, b""), Err(CryptoError::EmptyMessage));
    }

    #[test]
    fn malformed_signature_is_false_not_panic() {
        let kp = p().gen_keypair(Algorithm::Ed25519, &[1; 32]);
        assert!(!p().verify(&kp.public, b"m", &[0u8; 10]));
        assert!(!p().verify(&[0xff; 32], b"m", &[0u8; 64]));
    }

    #[test]
    fn single_bit_flips_break_signatures() {
        let kp = p().gen_keypair(Algorithm::Ed25519, &[3; 32]);
        let msg = b"brake warning at 48.1N".to_vec();
        let sig = p().sign(&kp.secret, &msg).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for i in 0..100 {
            let (mut m, mut s) = (msg.clone(), sig.0);
            if i % 2 == 0 {
                let bit = rng.gen_range(0..m.len() * 8);
                m[bit / 8] ^= 1 << (bit % 8);
            } else {
                let bit = rng.gen_range(0..SIGNATURE_LEN * 8);
                s[bit / 8] ^= 1 << (bit % 8);
            }
            assert!(!p().verify(&kp.public, &m, &s));
        }
    }

    #[test]
    fn dh_self_and_invalid_element() {
        let a = p().gen_keypair(Algorithm::X25519, &[5; 32]);
        assert!(p().dh_shared(&a.secret, &a.public).is_ok());
        assert_eq!(p().dh_shared(&a.secret, &[0; 32]), Err(CryptoError::InvalidPublicKey));
    }

    #[test]
    fn kdf_errors_and_determinism() {
        assert_eq!(p().kdf(&[], &[0; 32], LABEL_FINISHED), Err(CryptoError::EmptySecret));
        assert!(matches!(p().kdf(&[1], &[0; 32], "other"), Err(CryptoError::UnknownLabel(_))));
        let a = p().kdf(&[9; 32], &[1; 32], LABEL_FINISHED).unwrap();
        assert_eq!(a, p().kdf(&[9; 32], &[1; 32], LABEL_FINISHED).unwrap());
        assert_ne!(a, p().kdf(&[9; 32], &[1; 32], LABEL_INITIATOR).unwrap());
    }

    #[test]
    fn kdf_transcript_bit_flip_changes_every_key() {
        let th = p().hash(b"transcript");
        let base = p().kdf(&[4; 32], &th, LABEL_FINISHED).unwrap();
        for bit in 0..256 {
            let mut t = th;
            t[bit / 8] ^= 1 << (bit % 8);
            let k = p().kdf(&[4; 32], &t, LABEL_FINISHED).unwrap();
            for (x, y) in base.all().iter().zip(k.all()) {
                assert_ne!(x, &y);
            }
        }
    }

    #[test]
    fn mac_and_aead() {
        let tag = p().mac(b"k", b"m");
        assert!(tags_equal(&tag, &p().mac(b"k", b"m")));
        assert!(!tags_equal(&tag, &p().mac(b"k2", b"m")));
        let key = [8u8; 32];
        let ct = p().seal(&key, 3, b"ad", b"plain");
        assert_eq!(p().open(&key, 3, b"ad", &ct).unwrap(), b"plain");
        let mut bad = ct.clone();
        bad[0] ^= 1;
        assert_eq!(p().open(&key, 3, b"ad", &bad), Err(CryptoError::Decrypt));
        assert_eq!(p().open(&key, 4, b"ad", &ct), Err(CryptoError::Decrypt));
    }
}
