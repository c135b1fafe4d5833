use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::crypto::{Digest, Provider};
use crate::wire::Writer;

use super::message::{Role, Stage};

/// Radio handshake messages keyed by `(stage, role)`.
///
/// Digests are computed over the length-prefixed encodings in key order,
/// independent of arrival order. Optical payloads are never recorded here.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    slots: BTreeMap<(Stage, Role), Vec<u8>>,
    /// Digests by stage, the last entry covering everything.
    memo: [OnceLock<Digest>; 8],
}

impl PartialEq for Transcript {
    fn eq(&self, other: &Self) -> bool {
        self.slots == other.slots
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has(&self, stage: Stage, role: Role) -> bool {
        self.slots.contains_key(&(stage, role))
    }

    /// Returns false if the slot was already taken.
    pub fn record(&mut self, stage: Stage, role: Role, encoded: Vec<u8>) -> bool {
        if self.has(stage, role) {
            return false;
        }
        self.slots.insert((stage, role), encoded);
        self.memo = Default::default();
        true
    }

    fn canonical(&self, through: Option<Stage>) -> Vec<u8> {
        let mut w = Writer::new();
        for ((stage, _), m) in &self.slots {
            if through.map_or(true, |t| *stage <= t) {
                w.bytes(m);
            }
        }
        w.finish()
    }

    pub fn digest(&self, provider: &dyn Provider) -> Digest {
        *self.memo[7].get_or_init(|| provider.hash(&self.canonical(None)))
    }

    /// Digest over every recorded message of stage `through` or earlier.
    pub fn digest_through(&self, provider: &dyn Provider, through: Stage) -> Digest {
        *self.memo[through as usize].get_or_init(|| provider.hash(&self.canonical(Some(through))))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::StdProvider;

    #[test]
    fn empty_is_hash_of_empty_string() {
        let p = StdProvider;
        assert_eq!(Transcript::new().digest(&p), p.hash(b""));
    }

    #[test]
    fn arrival_order_does_not_matter() {
        let p = StdProvider;
        let mut a = Transcript::new();
        a.record(Stage::Hello, Role::Responder, b"r".to_vec());
        a.record(Stage::Hello, Role::Initiator, b"i".to_vec());
        let mut b = Transcript::new();
        b.record(Stage::Hello, Role::Initiator, b"i".to_vec());
        b.record(Stage::Hello, Role::Responder, b"r".to_vec());
        assert_eq!(a.digest(&p), b.digest(&p));
        assert!(!a.record(Stage::Hello, Role::Initiator, b"x".to_vec()));
    }

    #[test]
    fn prefix_digest_ignores_later_stages() {
        let p = StdProvider;
        let mut t = Transcript::new();
        t.record(Stage::Hello, Role::Initiator, b"i".to_vec());
        let before = t.digest_through(&p, Stage::Hello);
        t.record(Stage::KeyShare, Role::Initiator, b"k".to_vec());
        assert_eq!(t.digest_through(&p, Stage::Hello), before);
        assert_ne!(t.digest(&p), before);
    }
}
