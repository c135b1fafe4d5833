//! Functional model of an optical physically unclonable function.
//!
//! A device is a keyed pseudorandom function. The key never leaves the
//! [`PufDevice`] value: there is no accessor, no serialization and no
//! `Debug` output for it, so the only way to learn a response is to own the
//! device and evaluate it.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{tags_equal, Digest, Provider};
use crate::wire::{DecodeError, Reader, Writer};

pub const DEFAULT_RESPONSE_LATENCY: f64 = 100e-6;

const RESPONSE_DOMAIN: &[u8] = b"v2v-puf-response";

pub struct PufDevice {
    device_secret: [u8; 32],
    response_latency: f64,
}

impl fmt::Debug for PufDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PufDevice")
            .field("response_latency", &self.response_latency)
            .finish_non_exhaustive()
    }
}

impl PufDevice {
    /// Manufactures a device. The seed plays the role of the uncontrollable
    /// physical variation; it is consumed and not retained anywhere else.
    pub fn manufacture(seed: [u8; 32], response_latency: f64) -> Self {
        Self { device_secret: seed, response_latency }
    }

    pub fn response_latency(&self) -> f64 {
        self.response_latency
    }

    pub fn respond(&self, provider: &dyn Provider, challenge: &Challenge) -> [u8; 32] {
        let mut msg = Vec::with_capacity(RESPONSE_DOMAIN.len() + 36);
        msg.extend_from_slice(RESPONSE_DOMAIN);
        msg.extend_from_slice(&challenge.challenge_bits);
        provider.mac(&self.device_secret, &msg)
    }

    /// Whether the device key occurs anywhere in `haystack`; used by trace
    /// audits.
    pub fn secret_occurs_in(&self, haystack: &[u8]) -> bool {
        haystack.windows(32).any(|w| w == self.device_secret)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Challenge {
    pub challenge_id: u32,
    pub challenge_bits: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrpRecord {
    pub challenge: Challenge,
    pub response_digest: Digest,
}

impl CrpRecord {
    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.challenge.challenge_id)
            .bytes(&self.challenge.challenge_bits)
            .bytes(&self.response_digest);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let challenge_id = r.u32()?;
        let challenge_bits = r.array()?;
        let response_digest = r.array()?;
        Ok(Self { challenge: Challenge { challenge_id, challenge_bits }, response_digest })
    }
}

pub fn enroll_crps(provider: &dyn Provider, device: &PufDevice, count: u32, seed: u64) -> Vec<CrpRecord> {
    assert!(count >= 1, "enrollment needs at least one challenge");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|challenge_id| {
            let challenge = Challenge { challenge_id, challenge_bits: rng.gen() };
            let response = device.respond(provider, &challenge);
            CrpRecord { challenge, response_digest: provider.hash(&response) }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpVerdict {
    Genuine,
    Wrong,
    Replayed,
}

/// Verifier-side single-use bookkeeping for certified CRPs.
#[derive(Debug, Default, Clone)]
pub struct CrpLedger {
    used: HashSet<(Digest, u32)>,
}

impl CrpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_used(&self, crp: &CrpRecord) -> bool {
        self.used.contains(&(crp.response_digest, crp.challenge.challenge_id))
    }

    /// Checks a response and consumes the CRP whatever the outcome.
    pub fn verify_response(&mut self, provider: &dyn Provider, crp: &CrpRecord, response: &[u8; 32]) -> CrpVerdict {
        if !self.used.insert((crp.response_digest, crp.challenge.challenge_id)) {
            return CrpVerdict::Replayed;
        }
        if tags_equal(&provider.hash(response), &crp.response_digest) {
            CrpVerdict::Genuine
        } else {
            CrpVerdict::Wrong
        }
    }
}

pub fn fractional_hamming(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
    f64::from(diff) / (a.len() * 8) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::StdProvider;

    fn dev(b: u8) -> PufDevice {
        PufDevice::manufacture([b; 32], DEFAULT_RESPONSE_LATENCY)
    }

    #[test]
    fn respond_is_deterministic() {
        let c = Challenge { challenge_id: 0, challenge_bits: [3; 32] };
        assert_eq!(dev(1).respond(&StdProvider, &c), dev(1).respond(&StdProvider, &c));
    }

    #[test]
    fn enrollment_is_consistent_and_reproducible() {
        let d = dev(2);
        let crps = enroll_crps(&StdProvider, &d, 5, 99);
        assert_eq!(crps, enroll_crps(&StdProvider, &d, 5, 99));
        let ids: HashSet<_> = crps.iter().map(|c| c.challenge.challenge_id).collect();
        assert_eq!(ids.len(), 5);
        for crp in &crps {
            assert_eq!(StdProvider.hash(&d.respond(&StdProvider, &crp.challenge)), crp.response_digest);
        }
        assert_eq!(enroll_crps(&StdProvider, &d, 1, 3).len(), 1);
    }

    #[test]
    fn single_use_and_bit_flip() {
        let d = dev(4);
        let crp = enroll_crps(&StdProvider, &d, 2, 1)[0];
        let resp = d.respond(&StdProvider, &crp.challenge);
        let mut ledger = CrpLedger::new();
        let mut flipped = resp;
        flipped[5] ^= 0x10;
        let crp2 = enroll_crps(&StdProvider, &d, 2, 1)[1];
        let resp2 = d.respond(&StdProvider, &crp2.challenge);
        assert_eq!(ledger.verify_response(&StdProvider, &crp, &flipped), CrpVerdict::Wrong);
        assert_eq!(ledger.verify_response(&StdProvider, &crp2, &resp2), CrpVerdict::Genuine);
        assert_eq!(ledger.verify_response(&StdProvider, &crp2, &resp2), CrpVerdict::Replayed);
    }

    #[test]
    fn debug_output_hides_secret() {
        let s = format!("{:?}", dev(0xab));
        assert!(!s.contains("171"));
        assert!(!s.contains("ab"));
    }
}
