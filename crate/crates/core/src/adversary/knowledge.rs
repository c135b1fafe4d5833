//! Dolev-Yao knowledge of the adversary and a depth-bounded derivability
//! oracle.
//!
//! Terms are typed: X25519 scalars, group elements, transcript digests,
//! symmetric keys, ciphertext records and opaque byte strings. Constructors
//! applied during saturation: `dh(scalar, element)`, `kdf(shared, digest,
//! label)` for the three protocol labels, `hash(term)`, and record
//! decryption under known keys. MACs are checked as a goal only.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::crypto::{Provider, KDF_LABELS};
use crate::protocol::{open_record, HandshakeMessage, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Derivation {
    Derivable,
    NotDerivable,
    NotDerivableWithinBound,
}

impl Derivation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Derivation::Derivable => "DERIVABLE",
            Derivation::NotDerivable => "NOT_DERIVABLE",
            Derivation::NotDerivableWithinBound => "NOT_DERIVABLE_WITHIN_BOUND",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermType {
    /// Symmetric key material; the MAC goal check is skipped.
    Key,
    Any,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Knowledge {
    scalars: BTreeSet<[u8; 32]>,
    elements: BTreeSet<[u8; 32]>,
    digests: BTreeSet<[u8; 32]>,
    atoms: BTreeSet<Vec<u8>>,
    records: BTreeSet<(u64, Vec<u8>)>,
}

fn arr(b: &[u8]) -> Option<[u8; 32]> {
    b.try_into().ok()
}

impl Knowledge {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of known base terms.
    pub fn len(&self) -> usize {
        self.scalars.len() + self.elements.len() + self.digests.len() + self.atoms.len() + self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knows(&self, bytes: &[u8]) -> bool {
        self.atoms.contains(bytes)
            || arr(bytes).is_some_and(|a| self.scalars.contains(&a) || self.elements.contains(&a) || self.digests.contains(&a))
    }

    pub fn add_atom(&mut self, bytes: &[u8]) {
        if !bytes.is_empty() {
            self.atoms.insert(bytes.to_vec());
        }
    }

    pub fn add_scalar(&mut self, s: [u8; 32]) {
        self.scalars.insert(s);
    }

    pub fn add_element(&mut self, e: [u8; 32]) {
        self.elements.insert(e);
    }

    /// A transcript digest usable as a key-derivation salt.
    pub fn add_digest(&mut self, d: [u8; 32]) {
        self.digests.insert(d);
    }

    /// Splits an observed payload into its fields.
    pub fn observe(&mut self, payload: &[u8]) {
        self.add_atom(payload);
        let Ok(msg) = HandshakeMessage::decode(payload) else { return };
        match msg {
            HandshakeMessage::Hello { nonce, .. } => self.add_atom(&nonce),
            HandshakeMessage::CertMsg { certificate } => {
                self.add_atom(&certificate.to_bytes());
                self.add_element(certificate.subject_public_key);
                self.add_atom(&certificate.ca_signature.0);
                for c in &certificate.puf_crp_commitments {
                    self.add_atom(&c.response_digest);
                    self.add_atom(&c.challenge.challenge_bits);
                }
            }
            HandshakeMessage::KeyShare { ephemeral, signature } => {
                self.add_element(ephemeral);
                if let Some(s) = signature {
                    self.add_atom(&s.0);
                }
            }
            HandshakeMessage::DynClaim { signature, .. } => self.add_atom(&signature.0),
            HandshakeMessage::BeaconEcho { mac } | HandshakeMessage::Finished { mac } => self.add_atom(&mac),
            HandshakeMessage::PufChallenge { challenge } => self.add_atom(&challenge.challenge_bits),
            HandshakeMessage::PufResponse { response } => self.add_atom(&response),
            HandshakeMessage::Beacon { nonce } => self.add_atom(&nonce),
            HandshakeMessage::AppData { seq, ciphertext } => {
                self.records.insert((seq, ciphertext));
            }
        }
    }

    /// Saturates the knowledge for at most `depth` rounds. Key derivation
    /// and decryption close after one round; hash chains are expanded on
    /// first use by a query that could match them.
    pub fn closure(&self, provider: &dyn Provider, depth: u32) -> Closure {
        let mut c = Closure {
            terms: BTreeSet::new(),
            keys: BTreeSet::new(),
            plaintexts: BTreeSet::new(),
            depth,
            hashed: OnceLock::new(),
        };
        for t in self.scalars.iter().chain(&self.elements).chain(&self.digests) {
            c.terms.insert(t.to_vec());
        }
        c.terms.extend(self.atoms.iter().cloned());
        if depth == 0 {
            return c;
        }
        let mut shared: BTreeSet<[u8; 32]> = BTreeSet::new();
        for s in &self.scalars {
            for e in &self.elements {
                if let Ok(k) = provider.dh_shared(s, e) {
                    shared.insert(k);
                }
            }
        }
        for sh in &shared {
            for d in &self.digests {
                for label in KDF_LABELS {
                    let keys = provider.kdf(sh, d, label).expect("protocol label");
                    c.keys.extend(keys.all().into_iter().copied());
                }
            }
        }
        for (seq, ct) in &self.records {
            let rec = HandshakeMessage::AppData { seq: *seq, ciphertext: ct.clone() };
            for k in &c.keys {
                for writer in [Role::Initiator, Role::Responder] {
                    if let Some(pt) = open_record(provider, k, writer, &rec) {
                        c.plaintexts.insert(pt);
                    }
                }
            }
        }
        c.terms.extend(shared.iter().map(|k| k.to_vec()));
        c.terms.extend(c.keys.iter().map(|k| k.to_vec()));
        c.terms.extend(c.plaintexts.iter().cloned());
        c
    }

    pub fn query(&self, provider: &dyn Provider, target: &[u8], depth: u32, ty: TermType) -> Derivation {
        self.closure(provider, depth).query(provider, target, ty)
    }
}

/// Result of saturating a knowledge base.
#[derive(Debug, Clone)]
pub struct Closure {
    terms: BTreeSet<Vec<u8>>,
    keys: BTreeSet<[u8; 32]>,
    plaintexts: BTreeSet<Vec<u8>>,
    depth: u32,
    hashed: OnceLock<BTreeSet<[u8; 32]>>,
}

impl Closure {
    /// Hash chains never close, so any non-empty base hits the cap.
    pub fn is_bounded(&self) -> bool {
        self.depth > 0 && !self.terms.is_empty()
    }

    /// Terms reachable by hashing, up to the depth cap. Keys are not hashed.
    fn hashed(&self, provider: &dyn Provider) -> &BTreeSet<[u8; 32]> {
        self.hashed.get_or_init(|| {
            let mut out = BTreeSet::new();
            let mut frontier: Vec<Vec<u8>> = self
                .terms
                .iter()
                .filter(|t| arr(t).map_or(true, |a| !self.keys.contains(&a)))
                .cloned()
                .collect();
            for _ in 0..self.depth {
                let next: Vec<Vec<u8>> = frontier
                    .iter()
                    .map(|t| provider.hash(t))
                    .filter(|h| !self.terms.contains(h.as_slice()) && out.insert(*h))
                    .map(|h| h.to_vec())
                    .collect();
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
            out
        })
    }

    pub fn contains(&self, provider: &dyn Provider, target: &[u8]) -> bool {
        self.terms.contains(target) || arr(target).is_some_and(|a| self.hashed(provider).contains(&a))
    }

    pub fn keys(&self) -> &BTreeSet<[u8; 32]> {
        &self.keys
    }

    pub fn plaintexts(&self) -> &BTreeSet<Vec<u8>> {
        &self.plaintexts
    }

    /// Key-typed targets are matched against the key-derivation results
    /// and the base only; hash outputs are never keys.
    pub fn query(&self, provider: &dyn Provider, target: &[u8], ty: TermType) -> Derivation {
        let found = match ty {
            TermType::Key => self.terms.contains(target),
            TermType::Any => {
                self.contains(provider, target)
                    || (target.len() == 32
                        && self
                            .terms
                            .iter()
                            .filter(|k| k.len() == 32)
                            .any(|k| self.terms.iter().any(|m| provider.mac(k, m).as_slice() == target)))
            }
        };
        if found {
            Derivation::Derivable
        } else if self.is_bounded() {
            Derivation::NotDerivableWithinBound
        } else {
            Derivation::NotDerivable
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Algorithm, StdProvider};

    #[test]
    fn seen_public_key_is_derivable() {
        let p = StdProvider;
        let kp = p.gen_keypair(Algorithm::X25519, &[1; 32]);
        let mut k = Knowledge::new();
        k.observe(&HandshakeMessage::KeyShare { ephemeral: kp.public, signature: None }.encode());
        assert_eq!(k.query(&p, &kp.public, 6, TermType::Any), Derivation::Derivable);
        assert_ne!(k.query(&p, &kp.secret, 6, TermType::Any), Derivation::Derivable);
    }

    #[test]
    fn mac_of_known_terms() {
        let p = StdProvider;
        let mut k = Knowledge::new();
        k.add_atom(&[9; 32]);
        k.add_atom(b"message");
        let target = p.mac(&[9; 32], b"message");
        assert_eq!(k.query(&p, &target, 2, TermType::Any), Derivation::Derivable);
        assert_ne!(k.query(&p, &target, 2, TermType::Key), Derivation::Derivable);
    }

    #[test]
    fn dh_then_kdf_derives_session_keys() {
        let p = StdProvider;
        let a = p.gen_keypair(Algorithm::X25519, &[1; 32]);
        let b = p.gen_keypair(Algorithm::X25519, &[2; 32]);
        let th = [5u8; 32];
        let keys = p.kdf(&p.dh_shared(&a.secret, &b.public).unwrap(), &th, crate::crypto::LABEL_FINISHED).unwrap();
        let mut k = Knowledge::new();
        k.add_element(b.public);
        k.add_digest(th);
        assert_ne!(k.query(&p, &keys.client_write_key, 6, TermType::Key), Derivation::Derivable);
        k.add_scalar(a.secret);
        assert_eq!(k.query(&p, &keys.client_write_key, 6, TermType::Key), Derivation::Derivable);
    }

    #[test]
    fn empty_base_reaches_fixpoint() {
        let k = Knowledge::new();
        assert_eq!(k.query(&StdProvider, b"x", 6, TermType::Any), Derivation::NotDerivable);
    }
}
