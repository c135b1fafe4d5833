use std::fmt;

use crate::adversary::{AttackTrace, Derivation, Property, TermType};
use crate::protocol::{AbortReason, Phase};
use crate::world::VehicleId;

use super::engine::Engine;
use super::trace::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortCause {
    Reason(AbortReason),
    /// The run ended with the handshake still pending.
    Incomplete,
}

impl AbortCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbortCause::Reason(r) => r.as_str(),
            AbortCause::Incomplete => "INCOMPLETE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    SecureRun,
    HandshakeAborted(AbortCause),
    AttackFound(Property),
    Error(String),
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::SecureRun => "SECURE_RUN",
            Outcome::HandshakeAborted(_) => "HANDSHAKE_ABORTED",
            Outcome::AttackFound(_) => "ATTACK_FOUND",
            Outcome::Error(_) => "ERROR",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::SecureRun => 0,
            Outcome::Error(_) => 1,
            Outcome::AttackFound(_) => 2,
            Outcome::HandshakeAborted(_) => 3,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::SecureRun => f.write_str("SECURE_RUN"),
            Outcome::HandshakeAborted(c) => write!(f, "HANDSHAKE_ABORTED({})", c.as_str()),
            Outcome::AttackFound(p) => write!(f, "ATTACK_FOUND({})", p.as_str()),
            Outcome::Error(e) => write!(f, "ERROR({e})"),
        }
    }
}

/// Who stands behind each element of an established session.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub session: usize,
    pub peer: VehicleId,
    pub cert_owner: Option<VehicleId>,
    pub pose_occupant: Option<VehicleId>,
    pub radio_endpoint: Option<VehicleId>,
}

impl Binding {
    pub fn mismatch(&self) -> Option<(&'static str, &VehicleId)> {
        [("cert", &self.cert_owner), ("pose", &self.pose_occupant), ("radio", &self.radio_endpoint)]
            .into_iter()
            .find_map(|(k, v)| v.as_ref().filter(|v| **v != self.peer).map(|v| (k, v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub session: usize,
    pub term: &'static str,
    pub result: Derivation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub outcome: Outcome,
    pub bindings: Vec<Binding>,
    pub oracle: Vec<OracleResult>,
    pub attack: Option<AttackTrace>,
}

impl Verdict {
    pub fn is_attack(&self) -> bool {
        matches!(self.outcome, Outcome::AttackFound(_))
    }
}

pub fn binding(engine: &Engine, s: usize) -> Binding {
    let sess = &engine.sessions[s];
    Binding {
        session: s,
        peer: sess.state.peer().clone(),
        cert_owner: sess.cert_owner.clone(),
        pose_occupant: sess.pose_occupant.clone(),
        radio_endpoint: engine.radio_endpoint(s).cloned(),
    }
}

/// Judges the finished run.
pub fn evaluate(engine: &Engine) -> Verdict {
    let mut v = Verdict { outcome: Outcome::SecureRun, bindings: Vec::new(), oracle: Vec::new(), attack: None };
    if let Some(e) = engine.errors.first() {
        v.outcome = Outcome::Error(e.clone());
        return v;
    }
    let honest: Vec<usize> = engine.sessions.iter().filter(|s| !s.adversarial).map(|s| s.index).collect();
    let established: Vec<usize> =
        honest.iter().copied().filter(|&s| engine.sessions[s].state.phase() == Phase::Established).collect();

    let provider = &*engine.provider;
    let depth = engine.scenario.constants.oracle_depth;
    let closure = (!established.is_empty()).then(|| engine.knowledge.closure(provider, depth));
    let mut verified_mismatch: Option<String> = None;
    let mut endpoint_mismatch: Option<String> = None;
    for &s in &established {
        let b = binding(engine, s);
        if let Some((what, who)) = b.mismatch() {
            let w = format!("session {s} peer {} but {what} bound to {who}", b.peer);
            let slot = if what == "radio" { &mut endpoint_mismatch } else { &mut verified_mismatch };
            slot.get_or_insert(w);
        }
        v.bindings.push(b);
    }
    let mut key_leak: Option<String> = None;
    let mut text_leak: Option<String> = None;
    for &s in &established {
        let sess = &engine.sessions[s];
        let peer = sess.state.peer();
        if !engine.vehicles.contains_key(peer) || engine.is_owned(peer) {
            continue;
        }
        let c = closure.as_ref().expect("computed when sessions are established");
        let keys = sess.state.session_keys().expect("established");
        let mut worst = Derivation::NotDerivable;
        for k in [&keys.client_write_key, &keys.server_write_key] {
            let r = c.query(provider, k, TermType::Key);
            if r == Derivation::Derivable || worst == Derivation::NotDerivable {
                worst = r;
            }
        }
        v.oracle.push(OracleResult { session: s, term: "key", result: worst });
        if worst == Derivation::Derivable {
            key_leak.get_or_insert(format!("session {s} key derivable"));
        }
        for pt in &sess.plaintexts {
            let r = if c.contains(provider, pt) || c.plaintexts().contains(pt) {
                Derivation::Derivable
            } else {
                c.query(provider, pt, TermType::Any)
            };
            v.oracle.push(OracleResult { session: s, term: "plaintext", result: r });
            if r == Derivation::Derivable {
                text_leak.get_or_insert(format!("session {s} plaintext {:?} recovered", String::from_utf8_lossy(pt)));
            }
        }
    }
    // A session accepted on a forged certificate or pose binding is an
    // authentication failure first; without such checks the loss of the
    // session secrets is.
    let violation = verified_mismatch
        .map(|w| (Property::Authentication, w))
        .or_else(|| text_leak.or(key_leak).map(|w| (Property::Secrecy, w)))
        .or_else(|| endpoint_mismatch.map(|w| (Property::Authentication, w)));
    if let Some((property, witness)) = violation {
        v.outcome = Outcome::AttackFound(property);
        v.attack = Some(AttackTrace { actions: engine.taken.clone(), property, witness });
        return v;
    }
    let cause = engine
        .trace
        .find(Category::Proto, "abort")
        .find(|r| r.get("session").and_then(|s| s.parse::<usize>().ok()).is_some_and(|s| !engine.sessions[s].adversarial))
        .and_then(|r| r.get("reason").and_then(AbortReason::parse))
        .map(AbortCause::Reason)
        .or_else(|| honest.iter().any(|&s| !engine.sessions[s].state.phase().is_terminal()).then_some(AbortCause::Incomplete));
    if let Some(c) = cause {
        v.outcome = Outcome::HandshakeAborted(c);
    }
    v
}
