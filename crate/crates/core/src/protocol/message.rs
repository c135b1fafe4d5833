//! Handshake wire format: one type tag byte followed by the canonical
//! encoding of the message fields.
//!
//! | tag  | message        | channel |
//! |------|----------------|---------|
//! | 0x01 | Hello          | radio   |
//! | 0x02 | CertMsg        | radio   |
//! | 0x03 | KeyShare       | radio   |
//! | 0x04 | DynClaim       | radio   |
//! | 0x05 | BeaconEcho     | radio   |
//! | 0x06 | PufChallenge   | optical |
//! | 0x07 | PufResponse    | radio   |
//! | 0x08 | Finished       | radio   |
//! | 0x09 | Beacon         | optical |
//! | 0x20 | AppData        | radio   |

use std::fmt;

use crate::crypto::{Signature, NONCE_LEN, SIGNATURE_LEN};
use crate::identity::Certificate;
use crate::puf::Challenge;
use crate::wire::{DecodeError, Reader, Writer};
use crate::world::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Baseline = 0,
    Basic = 1,
    Intermediate = 2,
    Sophisticated = 3,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Basic, Variant::Intermediate, Variant::Sophisticated];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Baseline => "V0_BASELINE",
            Variant::Basic => "V1_BASIC",
            Variant::Intermediate => "V2_INTERMEDIATE",
            Variant::Sophisticated => "V3_SOPHISTICATED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_uppercase();
        Self::ALL.into_iter().find(|v| v.as_str() == s || v.as_str()[..2] == s)
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.get(t as usize).copied()
    }

    pub fn uses_certificates(&self) -> bool {
        *self >= Variant::Basic
    }

    pub fn uses_laser(&self) -> bool {
        *self >= Variant::Intermediate
    }

    pub fn uses_puf(&self) -> bool {
        *self >= Variant::Sophisticated
    }

    /// The radio stages of this variant, in protocol order.
    pub fn stages(&self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Variant::Baseline => &[Hello, KeyShare, Finished],
            Variant::Basic => &[Hello, Cert, KeyShare, Finished],
            Variant::Intermediate => &[Hello, Cert, KeyShare, DynClaim, Echo, Finished],
            Variant::Sophisticated => &[Hello, Cert, KeyShare, DynClaim, Echo, Puf, Finished],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Initiator = 0,
    Responder = 1,
}

impl Role {
    pub fn peer(&self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Initiator => "initiator",
            Role::Responder => "responder",
        }
    }
}

/// Transcript slot group. Messages are hashed in `(stage, role)` order so
/// that both parties agree even when their messages of one stage cross in
/// flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Hello = 0,
    Cert = 1,
    KeyShare = 2,
    DynClaim = 3,
    Echo = 4,
    Puf = 5,
    Finished = 6,
}

#[derive(Clone, PartialEq)]
pub enum HandshakeMessage {
    Hello { role: Role, nonce: [u8; NONCE_LEN], variant: Variant },
    CertMsg { certificate: Box<Certificate> },
    KeyShare { ephemeral: [u8; 32], signature: Option<Signature> },
    DynClaim { pose: Pose, claimed_at: f64, signature: Signature },
    BeaconEcho { mac: [u8; 32] },
    PufChallenge { challenge: Challenge },
    PufResponse { response: [u8; 32] },
    Finished { mac: [u8; 32] },
    Beacon { nonce: [u8; NONCE_LEN] },
    AppData { seq: u64, ciphertext: Vec<u8> },
}

impl fmt::Debug for HandshakeMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl HandshakeMessage {
    pub fn tag(&self) -> u8 {
        match self {
            HandshakeMessage::Hello { .. } => 0x01,
            HandshakeMessage::CertMsg { .. } => 0x02,
            HandshakeMessage::KeyShare { .. } => 0x03,
            HandshakeMessage::DynClaim { .. } => 0x04,
            HandshakeMessage::BeaconEcho { .. } => 0x05,
            HandshakeMessage::PufChallenge { .. } => 0x06,
            HandshakeMessage::PufResponse { .. } => 0x07,
            HandshakeMessage::Finished { .. } => 0x08,
            HandshakeMessage::Beacon { .. } => 0x09,
            HandshakeMessage::AppData { .. } => 0x20,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HandshakeMessage::Hello { .. } => "Hello",
            HandshakeMessage::CertMsg { .. } => "CertMsg",
            HandshakeMessage::KeyShare { .. } => "KeyShare",
            HandshakeMessage::DynClaim { .. } => "DynClaim",
            HandshakeMessage::BeaconEcho { .. } => "BeaconEcho",
            HandshakeMessage::PufChallenge { .. } => "PufChallenge",
            HandshakeMessage::PufResponse { .. } => "PufResponse",
            HandshakeMessage::Finished { .. } => "Finished",
            HandshakeMessage::Beacon { .. } => "Beacon",
            HandshakeMessage::AppData { .. } => "AppData",
        }
    }

    /// Transcript stage for radio handshake messages; `None` for optical
    /// payloads and session records.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            HandshakeMessage::Hello { .. } => Some(Stage::Hello),
            HandshakeMessage::CertMsg { .. } => Some(Stage::Cert),
            HandshakeMessage::KeyShare { .. } => Some(Stage::KeyShare),
            HandshakeMessage::DynClaim { .. } => Some(Stage::DynClaim),
            HandshakeMessage::BeaconEcho { .. } => Some(Stage::Echo),
            HandshakeMessage::PufResponse { .. } => Some(Stage::Puf),
            HandshakeMessage::Finished { .. } => Some(Stage::Finished),
            HandshakeMessage::PufChallenge { .. } | HandshakeMessage::Beacon { .. } | HandshakeMessage::AppData { .. } => None,
        }
    }

    pub fn is_optical(&self) -> bool {
        matches!(self, HandshakeMessage::PufChallenge { .. } | HandshakeMessage::Beacon { .. })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.tag());
        match self {
            HandshakeMessage::Hello { role, nonce, variant } => {
                w.u8(*role as u8).bytes(nonce).u8(*variant as u8);
            }
            HandshakeMessage::CertMsg { certificate } => {
                w.bytes(&certificate.to_bytes());
            }
            HandshakeMessage::KeyShare { ephemeral, signature } => {
                w.bytes(ephemeral).bytes(signature.as_ref().map_or(&[][..], |s| &s.0[..]));
            }
            HandshakeMessage::DynClaim { pose, claimed_at, signature } => {
                encode_pose(&mut w, pose);
                w.f64(*claimed_at).bytes(&signature.0);
            }
            HandshakeMessage::BeaconEcho { mac } | HandshakeMessage::Finished { mac } => {
                w.bytes(mac);
            }
            HandshakeMessage::PufChallenge { challenge } => {
                w.u32(challenge.challenge_id).bytes(&challenge.challenge_bits);
            }
            HandshakeMessage::PufResponse { response } => {
                w.bytes(response);
            }
            HandshakeMessage::Beacon { nonce } => {
                w.bytes(nonce);
            }
            HandshakeMessage::AppData { seq, ciphertext } => {
                w.u64(*seq).bytes(ciphertext);
            }
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let tag = r.u8()?;
        let invalid = |what| DecodeError::Invalid { what, offset: 0 };
        let msg = match tag {
            0x01 => {
                let role = match r.u8()? {
                    0 => Role::Initiator,
                    1 => Role::Responder,
                    _ => return Err(invalid("role")),
                };
                let nonce = r.array()?;
                let variant = Variant::from_tag(r.u8()?).ok_or(invalid("variant"))?;
                HandshakeMessage::Hello { role, nonce, variant }
            }
            0x02 => HandshakeMessage::CertMsg { certificate: Box::new(Certificate::from_bytes(r.bytes()?)?) },
            0x03 => {
                let ephemeral = r.array()?;
                let sig = r.bytes()?;
                let signature = match sig.len() {
                    0 => None,
                    SIGNATURE_LEN => Some(Signature(sig.try_into().unwrap())),
                    _ => return Err(invalid("signature length")),
                };
                HandshakeMessage::KeyShare { ephemeral, signature }
            }
            0x04 => {
                let pose = decode_pose(&mut r)?;
                let claimed_at = r.f64()?;
                let signature = Signature(r.array()?);
                HandshakeMessage::DynClaim { pose, claimed_at, signature }
            }
            0x05 => HandshakeMessage::BeaconEcho { mac: r.array()? },
            0x06 => {
                let challenge_id = r.u32()?;
                let challenge_bits = r.array()?;
                HandshakeMessage::PufChallenge { challenge: Challenge { challenge_id, challenge_bits } }
            }
            0x07 => HandshakeMessage::PufResponse { response: r.array()? },
            0x08 => HandshakeMessage::Finished { mac: r.array()? },
            0x09 => HandshakeMessage::Beacon { nonce: r.array()? },
            0x20 => {
                let seq = r.u64()?;
                HandshakeMessage::AppData { seq, ciphertext: r.bytes()?.to_vec() }
            }
            _ => return Err(invalid("message tag")),
        };
        r.finish()?;
        Ok(msg)
    }
}

pub fn encode_pose(w: &mut Writer, p: &Pose) {
    w.f64(p.x).f64(p.y).f64(p.heading).f64(p.speed);
}

fn decode_pose(r: &mut Reader<'_>) -> Result<Pose, DecodeError> {
    let at = r.position();
    let (x, y, heading, speed) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    if !(x.is_finite() && y.is_finite() && heading.is_finite() && speed.is_finite() && speed >= 0.0) {
        return Err(DecodeError::Invalid { what: "pose", offset: at });
    }
    Ok(Pose::new(x, y, heading, speed))
}
