use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::{
    tags_equal, Algorithm, Digest, KeyPair, ProviderRef, SessionKeys, Signature, LABEL_FINISHED, LABEL_INITIATOR,
    LABEL_RESPONDER, NONCE_LEN,
};
use crate::identity::{match_attributes, verify_certificate, Certificate};
use crate::puf::{CrpLedger, CrpRecord, CrpVerdict};
use crate::wire::Writer;
use crate::world::{autocollimator_check, Alignment, Pose, VehicleId};

use super::events::*;
use super::message::{encode_pose, HandshakeMessage, Role, Stage, Variant};
use super::transcript::Transcript;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HandshakeError {
    #[error("variant {0} requires a certificate and signing key")]
    MissingCertificate(Variant),
}

#[derive(Debug, Clone)]
struct BeaconSeen {
    nonce: [u8; NONCE_LEN],
    arrival_bearing: f64,
    arrived_at: f64,
    own_pose: Pose,
}

#[derive(Debug, Clone)]
struct PendingChallenge {
    crp: CrpRecord,
    region: Pose,
}

#[derive(Debug, Clone)]
pub struct HandshakeState {
    cfg: HandshakeConfig,
    creds: Credentials,
    provider: ProviderRef,
    role: Role,
    peer: VehicleId,
    phase: Phase,
    stage_idx: usize,
    abort: Option<AbortReason>,
    nonce: [u8; NONCE_LEN],
    ephemeral: KeyPair,
    transcript: Transcript,
    /// Stages whose peer message has arrived and passed every local check.
    peer_done: BTreeSet<Stage>,
    awaiting_sensor: Option<SensePurpose>,
    peer_cert: Option<Certificate>,
    peer_ephemeral: Option<[u8; 32]>,
    shared: Option<[u8; 32]>,
    peer_claim: Option<(Pose, f64)>,
    beacon_nonce: Option<[u8; NONCE_LEN]>,
    beacon_seen: Option<BeaconSeen>,
    challenge: Option<PendingChallenge>,
    evaluating: bool,
    ledger: CrpLedger,
    pre_finished: Option<Digest>,
    keys: Option<SessionKeys>,
    deadlines: Vec<DeadlineRecord>,
    pub(super) send_seq: u64,
    pub(super) recv_seq: u64,
}

fn label(role: Role) -> &'static str {
    match role {
        Role::Initiator => LABEL_INITIATOR,
        Role::Responder => LABEL_RESPONDER,
    }
}

impl HandshakeState {
    fn new(
        cfg: HandshakeConfig,
        creds: Credentials,
        provider: ProviderRef,
        role: Role,
        peer: VehicleId,
        seed: [u8; 32],
    ) -> Result<Self, HandshakeError> {
        if cfg.variant.uses_certificates() && !cfg.lenient && (creds.certificate.is_none() || creds.signing.is_none()) {
            return Err(HandshakeError::MissingCertificate(cfg.variant));
        }
        let ephemeral = provider.gen_keypair(Algorithm::X25519, &seed);
        let mut nonce = [0; NONCE_LEN];
        nonce.copy_from_slice(&provider.hash(&[&seed[..], b"nonce"].concat())[..NONCE_LEN]);
        Ok(Self {
            cfg,
            creds,
            provider,
            role,
            peer,
            phase: Phase::Start,
            stage_idx: 0,
            abort: None,
            nonce,
            ephemeral,
            transcript: Transcript::new(),
            peer_done: BTreeSet::new(),
            awaiting_sensor: None,
            peer_cert: None,
            peer_ephemeral: None,
            shared: None,
            peer_claim: None,
            beacon_nonce: None,
            beacon_seen: None,
            challenge: None,
            evaluating: false,
            ledger: CrpLedger::new(),
            pre_finished: None,
            keys: None,
            deadlines: Vec::new(),
            send_seq: 0,
            recv_seq: 0,
        })
    }

    /// Starts a handshake towards `peer`. `seed` determines the Hello nonce
    /// and the ephemeral key.
    pub fn initiate(
        cfg: HandshakeConfig,
        creds: Credentials,
        provider: ProviderRef,
        peer: VehicleId,
        seed: [u8; 32],
    ) -> Result<(Self, Vec<Action>), HandshakeError> {
        let mut s = Self::new(cfg, creds, provider, Role::Initiator, peer, seed)?;
        let mut out = Vec::new();
        s.send(s.hello(), &mut out);
        s.phase = Phase::HelloSent;
        Ok((s, out))
    }

    /// Creates the responder side from a received initiator Hello.
    pub fn respond(
        cfg: HandshakeConfig,
        creds: Credentials,
        provider: ProviderRef,
        peer: VehicleId,
        seed: [u8; 32],
        env: &Env,
        hello: &[u8],
    ) -> Result<(Self, Vec<Action>), HandshakeError> {
        let mut s = Self::new(cfg, creds, provider, Role::Responder, peer, seed)?;
        let mut out = Vec::new();
        if !matches!(HandshakeMessage::decode(hello), Ok(HandshakeMessage::Hello { role: Role::Initiator, .. })) {
            s.fail(AbortReason::Malformed, &mut out);
            return Ok((s, out));
        }
        s.send(s.hello(), &mut out);
        s.phase = Phase::HelloSent;
        s.on_radio(env, hello, &mut out);
        s.advance(env, &mut out);
        Ok((s, out))
    }

    fn hello(&self) -> HandshakeMessage {
        HandshakeMessage::Hello { role: self.role, nonce: self.nonce, variant: self.cfg.variant }
    }

    pub fn variant(&self) -> Variant {
        self.cfg.variant
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn peer(&self) -> &VehicleId {
        &self.peer
    }

    pub fn own_id(&self) -> &VehicleId {
        &self.creds.id
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        self.abort
    }

    /// Present only once the handshake is established.
    pub fn session_keys(&self) -> Option<&SessionKeys> {
        self.keys.as_ref().filter(|_| self.phase == Phase::Established)
    }

    pub fn ephemeral(&self) -> &KeyPair {
        &self.ephemeral
    }

    pub fn shared_secret(&self) -> Option<&[u8; 32]> {
        self.shared.as_ref()
    }

    pub fn peer_certificate(&self) -> Option<&Certificate> {
        self.peer_cert.as_ref()
    }

    /// Peer's signed pose claim and its timestamp.
    pub fn peer_claim(&self) -> Option<(Pose, f64)> {
        self.peer_claim
    }

    pub fn own_certificate(&self) -> Option<&Certificate> {
        self.creds.certificate.as_ref()
    }

    pub fn deadlines(&self) -> &[DeadlineRecord] {
        &self.deadlines
    }

    pub fn transcript_digest(&self) -> Digest {
        self.transcript.digest(&*self.provider)
    }

    /// Transcript digest covered by the Finished MACs, once computed.
    pub fn finished_digest(&self) -> Option<Digest> {
        self.pre_finished
    }

    /// Number of transcript slots filled so far.
    pub fn transcript_len(&self) -> usize {
        self.transcript.len()
    }

    /// Transcript digests used so far as key-derivation salts. These are
    /// public values.
    pub fn public_digests(&self) -> Vec<Digest> {
        let mut v = Vec::new();
        let claims = self.transcript.has(Stage::DynClaim, self.role) && self.transcript.has(Stage::DynClaim, self.role.peer());
        if self.cfg.variant.uses_laser() && claims {
            v.push(self.th(Stage::DynClaim));
        }
        v.extend(self.pre_finished);
        v
    }

    pub(super) fn provider(&self) -> &ProviderRef {
        &self.provider
    }

    fn stage(&self) -> Stage {
        self.cfg.variant.stages()[self.stage_idx]
    }

    fn th(&self, through: Stage) -> Digest {
        self.transcript.digest_through(&*self.provider, through)
    }

    fn sign(&self, msg: &[u8]) -> Signature {
        match &self.creds.signing {
            Some(kp) => self.provider.sign(&kp.secret, msg).expect("message is a non-empty digest"),
            None => Signature([0; 64]),
        }
    }

    fn peer_verifies(&self, msg: &[u8], sig: &Signature) -> bool {
        let Some(cert) = &self.peer_cert else { return false };
        self.provider.verify(&cert.subject_public_key, msg, &sig.0)
    }

    fn checks(&self) -> bool {
        !self.cfg.lenient
    }

    fn send(&mut self, msg: HandshakeMessage, out: &mut Vec<Action>) {
        if let Some(stage) = msg.stage() {
            self.transcript.record(stage, self.role, msg.encode());
        }
        out.push(Action::SendRadio(msg));
    }

    fn fail(&mut self, reason: AbortReason, out: &mut Vec<Action>) {
        if self.phase.is_terminal() {
            return;
        }
        debug_assert!(AbortReason::checked_by(self.cfg.variant).contains(&reason));
        self.phase = Phase::Aborted;
        self.abort = Some(reason);
        self.keys = None;
        out.push(Action::Aborted(reason));
    }

    /// Drives the state machine with one input.
    pub fn step(&mut self, env: &Env, input: Input) -> Vec<Action> {
        let mut out = Vec::new();
        if self.phase.is_terminal() {
            return out;
        }
        match input {
            Input::Radio(bytes) => self.on_radio(env, &bytes, &mut out),
            Input::Camera { purpose, observation, sighting } => {
                if self.awaiting_sensor != Some(purpose) {
                    return out;
                }
                self.awaiting_sensor = None;
                match purpose {
                    SensePurpose::Attributes => {
                        let cert = self.peer_cert.as_ref().expect("certificate precedes camera request");
                        if !match_attributes(&observation, &cert.subject_attributes) {
                            self.fail(AbortReason::CertAttrMismatch, &mut out);
                        } else {
                            self.peer_done.insert(Stage::Cert);
                        }
                    }
                    SensePurpose::Sighting => self.on_sighting(env, sighting, &mut out),
                    _ => {}
                }
            }
            Input::Lidar { purpose, result } => {
                if self.awaiting_sensor != Some(purpose) {
                    return out;
                }
                self.awaiting_sensor = None;
                match (purpose, result) {
                    (_, None) => self.fail(AbortReason::DynamicCouplingFailed, &mut out),
                    (SensePurpose::Coupling, Some(rb)) => {
                        let region = self.claim_now(env.now);
                        let (x, y) = rb.position_from(&env.own_pose);
                        if Pose::at(x, y).distance(&region) > self.cfg.capture_radius {
                            self.fail(AbortReason::DynamicCouplingFailed, &mut out);
                        } else {
                            self.fire_beacon(env, &mut out);
                        }
                    }
                    (SensePurpose::PufRange, Some(rb)) => self.fire_challenge(env, Some(rb.range), &mut out),
                    _ => {}
                }
            }
            Input::Optical(receipt) => self.on_optical(env, &receipt.payload, receipt.arrival_bearing, &mut out),
            Input::OpticalFailed(_) => self.fail(AbortReason::DynamicCouplingFailed, &mut out),
            Input::PufEvaluated { challenge_id: _, response } => {
                if self.evaluating {
                    self.evaluating = false;
                    self.send(HandshakeMessage::PufResponse { response }, &mut out);
                }
            }
            Input::Timer(kind) => {
                let pending = match kind {
                    TimerKind::BeaconWindow => self.stage() <= Stage::Echo && !self.echo_complete(),
                    TimerKind::PufDeadline => self.stage() == Stage::Puf && !self.peer_done.contains(&Stage::Puf),
                };
                if pending {
                    let reason = match kind {
                        TimerKind::BeaconWindow => AbortReason::BeaconTimeout,
                        TimerKind::PufDeadline => AbortReason::TimingViolation,
                    };
                    self.fail(reason, &mut out);
                }
            }
        }
        self.advance(env, &mut out);
        out
    }

    fn echo_complete(&self) -> bool {
        self.peer_done.contains(&Stage::Echo) && self.transcript.has(Stage::Echo, self.role)
    }

    fn claim_now(&self, now: f64) -> Pose {
        let (p, at) = self.peer_claim.expect("claim checked before use");
        p.extrapolate(now - at)
    }

    fn on_radio(&mut self, env: &Env, bytes: &[u8], out: &mut Vec<Action>) {
        let msg = match HandshakeMessage::decode(bytes) {
            Ok(m) => m,
            Err(_) => return self.fail(AbortReason::Malformed, out),
        };
        let Some(stage) = msg.stage() else { return self.fail(AbortReason::Malformed, out) };
        if stage != self.stage() || self.transcript.has(stage, self.role.peer()) {
            return self.fail(AbortReason::Malformed, out);
        }
        self.transcript.record(stage, self.role.peer(), bytes.to_vec());
        let peer_role = self.role.peer();
        match msg {
            HandshakeMessage::Hello { role, variant, .. } => {
                if role != peer_role || variant != self.cfg.variant {
                    return self.fail(AbortReason::Malformed, out);
                }
                self.peer_done.insert(Stage::Hello);
            }
            HandshakeMessage::CertMsg { certificate } => {
                let cert = *certificate;
                if self.checks() {
                    if verify_certificate(&*self.provider, &self.creds.ca_public, &cert, env.now).is_err() {
                        return self.fail(AbortReason::BadCert, out);
                    }
                    self.peer_cert = Some(cert);
                    self.awaiting_sensor = Some(SensePurpose::Attributes);
                    out.push(Action::RequestCamera(SensePurpose::Attributes));
                } else {
                    self.peer_cert = Some(cert);
                    self.peer_done.insert(Stage::Cert);
                }
            }
            HandshakeMessage::KeyShare { ephemeral, signature } => {
                if self.cfg.variant.uses_certificates() && self.checks() {
                    let ok = signature.map_or(false, |s| self.peer_verifies(&self.keyshare_tbs(peer_role, &ephemeral), &s));
                    if !ok {
                        return self.fail(AbortReason::BadSignature, out);
                    }
                }
                match self.provider.dh_shared(&self.ephemeral.secret, &ephemeral) {
                    Ok(s) => self.shared = Some(s),
                    Err(_) => return self.fail(AbortReason::Malformed, out),
                }
                self.peer_ephemeral = Some(ephemeral);
                self.peer_done.insert(Stage::KeyShare);
            }
            HandshakeMessage::DynClaim { pose, claimed_at, signature } => {
                if self.checks() && !self.peer_verifies(&self.claim_tbs(peer_role, &pose, claimed_at), &signature) {
                    return self.fail(AbortReason::BadSignature, out);
                }
                self.peer_claim = Some((pose, claimed_at));
                if self.checks() {
                    self.awaiting_sensor = Some(SensePurpose::Sighting);
                    out.push(Action::RequestCamera(SensePurpose::Sighting));
                } else {
                    self.fire_beacon(env, out);
                }
            }
            HandshakeMessage::BeaconEcho { mac } => {
                let expected = self.echo_mac(peer_role, &self.beacon_nonce.unwrap_or([0; NONCE_LEN]));
                if self.checks() && !tags_equal(&mac, &expected) {
                    return self.fail(AbortReason::DynamicCouplingFailed, out);
                }
                if let Some(d) = self.deadlines.iter_mut().rev().find(|d| d.kind == TimerKind::BeaconWindow) {
                    d.met_at = Some(env.now);
                }
                self.peer_done.insert(Stage::Echo);
            }
            HandshakeMessage::PufResponse { response } => {
                if self.checks() {
                    let Some(pending) = self.challenge.clone() else { return self.fail(AbortReason::Malformed, out) };
                    let deadline = self.deadlines.iter().rev().find(|d| d.kind == TimerKind::PufDeadline).map(|d| d.deadline);
                    if deadline.map_or(false, |d| env.now > d) {
                        return self.fail(AbortReason::TimingViolation, out);
                    }
                    if self.ledger.verify_response(&*self.provider, &pending.crp, &response) != CrpVerdict::Genuine {
                        return self.fail(AbortReason::PufVerifyFailed, out);
                    }
                    if let Some(d) = self.deadlines.iter_mut().rev().find(|d| d.kind == TimerKind::PufDeadline) {
                        d.met_at = Some(env.now);
                    }
                }
                self.peer_done.insert(Stage::Puf);
            }
            HandshakeMessage::Finished { mac } => {
                let th = self.pre_finished.expect("finished stage entered");
                let keys = self.keys.as_ref().expect("keys derived on entering finished stage");
                let expected = self.provider.mac(&keys.finished_key, &[&th[..], &[peer_role as u8]].concat());
                if self.checks() && !tags_equal(&mac, &expected) {
                    return self.fail(AbortReason::FinishedMismatch, out);
                }
                self.peer_done.insert(Stage::Finished);
            }
            _ => self.fail(AbortReason::Malformed, out),
        }
    }

    fn keyshare_tbs(&self, role: Role, ephemeral: &[u8; 32]) -> Vec<u8> {
        let th = self.th(Stage::Cert);
        self.provider.hash(&[&th[..], &[role as u8], &ephemeral[..]].concat()).to_vec()
    }

    fn claim_tbs(&self, role: Role, pose: &Pose, claimed_at: f64) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.th(Stage::KeyShare)).u8(role as u8);
        encode_pose(&mut w, pose);
        w.f64(claimed_at);
        self.provider.hash(&w.finish()).to_vec()
    }

    fn echo_mac(&self, role: Role, nonce: &[u8; NONCE_LEN]) -> Digest {
        let Some(shared) = self.shared else { return [0; 32] };
        let th = self.th(Stage::DynClaim);
        let keys = self.provider.kdf(&shared, &th, label(role)).expect("fixed label");
        self.provider.mac(&keys.finished_key, &[&nonce[..], &th[..]].concat())
    }

    fn on_sighting(&mut self, env: &Env, sighting: Option<Pose>, out: &mut Vec<Action>) {
        let region = self.claim_now(env.now);
        match sighting {
            Some(seen) if seen.distance(&region) <= self.cfg.capture_radius => {
                self.awaiting_sensor = Some(SensePurpose::Coupling);
                out.push(Action::RequestLidar { purpose: SensePurpose::Coupling, region });
            }
            _ => self.fail(AbortReason::DynamicCouplingFailed, out),
        }
    }

    fn fire_beacon(&mut self, env: &Env, out: &mut Vec<Action>) {
        let mut nonce = [0; NONCE_LEN];
        nonce.copy_from_slice(&env.fresh[..NONCE_LEN]);
        self.beacon_nonce = Some(nonce);
        out.push(Action::FireOptical { aimed_at: self.claim_now(env.now), message: HandshakeMessage::Beacon { nonce } });
        if self.checks() {
            let at = env.now + self.cfg.beacon_window;
            out.push(Action::SetTimer { kind: TimerKind::BeaconWindow, at });
            self.deadlines.push(DeadlineRecord {
                kind: TimerKind::BeaconWindow,
                started_at: env.now,
                deadline: at,
                predicted: None,
                met_at: None,
            });
        }
        self.peer_done.insert(Stage::DynClaim);
    }

    fn on_optical(&mut self, env: &Env, payload: &[u8], bearing: f64, out: &mut Vec<Action>) {
        match HandshakeMessage::decode(payload) {
            Ok(HandshakeMessage::Beacon { nonce }) => {
                if self.cfg.variant.uses_laser() && self.beacon_seen.is_none() && self.stage() <= Stage::Echo {
                    self.beacon_seen =
                        Some(BeaconSeen { nonce, arrival_bearing: bearing, arrived_at: env.now, own_pose: env.own_pose });
                }
            }
            Ok(HandshakeMessage::PufChallenge { challenge }) => {
                let ready = self.cfg.variant.uses_puf()
                    && self.transcript.has(Stage::Echo, self.role)
                    && !self.transcript.has(Stage::Puf, self.role)
                    && !self.evaluating;
                if !ready {
                    return;
                }
                if self.checks() {
                    let expected = env.own_pose.relative_bearing(&self.claim_now(env.now));
                    if let Alignment::Misaligned(_) = autocollimator_check(&self.sensor_tol(), bearing, expected) {
                        return self.fail(AbortReason::AlignmentFailed, out);
                    }
                }
                self.evaluating = true;
                out.push(Action::EvaluatePuf(challenge));
            }
            _ => {}
        }
    }

    fn sensor_tol(&self) -> crate::world::SensorConfig {
        crate::world::SensorConfig { theta_tol: self.cfg.theta_tol, ..Default::default() }
    }

    fn try_echo(&mut self, out: &mut Vec<Action>) {
        if self.stage() != Stage::Echo || self.transcript.has(Stage::Echo, self.role) {
            return;
        }
        let Some(b) = self.beacon_seen.clone() else { return };
        if self.checks() {
            let (claim, at) = self.peer_claim.expect("claim precedes echo");
            let expected = b.own_pose.relative_bearing(&claim.extrapolate(b.arrived_at - at));
            if let Alignment::Misaligned(_) = autocollimator_check(&self.sensor_tol(), b.arrival_bearing, expected) {
                return self.fail(AbortReason::AlignmentFailed, out);
            }
        }
        let mac = self.echo_mac(self.role, &b.nonce);
        self.send(HandshakeMessage::BeaconEcho { mac }, out);
    }

    fn start_challenge(&mut self, env: &Env, out: &mut Vec<Action>) {
        let crp = self
            .peer_cert
            .as_ref()
            .and_then(|c| c.puf_crp_commitments.iter().find(|r| !self.ledger.is_used(r)).cloned());
        let Some(crp) = crp else { return self.fail(AbortReason::PufVerifyFailed, out) };
        let region = self.claim_now(env.now);
        self.challenge = Some(PendingChallenge { crp, region });
        if self.checks() {
            self.awaiting_sensor = Some(SensePurpose::PufRange);
            out.push(Action::RequestLidar { purpose: SensePurpose::PufRange, region });
        } else {
            self.fire_challenge(env, None, out);
        }
    }

    fn fire_challenge(&mut self, env: &Env, d_est: Option<f64>, out: &mut Vec<Action>) {
        let pending = self.challenge.clone().expect("challenge chosen");
        out.push(Action::FireOptical {
            aimed_at: pending.region,
            message: HandshakeMessage::PufChallenge { challenge: pending.crp.challenge },
        });
        if let Some(d) = d_est {
            let at = env.now + self.cfg.puf_budget(d);
            out.push(Action::SetTimer { kind: TimerKind::PufDeadline, at });
            self.deadlines.push(DeadlineRecord {
                kind: TimerKind::PufDeadline,
                started_at: env.now,
                deadline: at,
                predicted: Some(env.now + self.cfg.puf_expected(d)),
                met_at: None,
            });
        }
    }

    fn stage_complete(&self, stage: Stage) -> bool {
        self.transcript.has(stage, self.role) && self.peer_done.contains(&stage)
    }

    fn enter(&mut self, env: &Env, stage: Stage, out: &mut Vec<Action>) {
        self.phase = match stage {
            Stage::Hello => Phase::HelloSent,
            Stage::Cert => Phase::CertExchange,
            Stage::KeyShare => Phase::KeyExchange,
            Stage::DynClaim => Phase::DynamicCoupling,
            Stage::Echo => Phase::BeaconEcho,
            Stage::Puf => Phase::PufExchange,
            Stage::Finished => Phase::Finishing,
        };
        match stage {
            Stage::Hello => {}
            Stage::Cert => {
                let cert = self.creds.certificate.clone();
                match cert {
                    Some(c) => self.send(HandshakeMessage::CertMsg { certificate: Box::new(c) }, out),
                    None => self.fail(AbortReason::BadCert, out),
                }
            }
            Stage::KeyShare => {
                let ephemeral = self.ephemeral.public;
                let signature = self
                    .cfg
                    .variant
                    .uses_certificates()
                    .then(|| self.sign(&self.keyshare_tbs(self.role, &ephemeral)));
                self.send(HandshakeMessage::KeyShare { ephemeral, signature }, out);
            }
            Stage::DynClaim => {
                let pose = env.own_pose;
                let signature = self.sign(&self.claim_tbs(self.role, &pose, env.now));
                self.send(HandshakeMessage::DynClaim { pose, claimed_at: env.now, signature }, out);
            }
            Stage::Echo => self.try_echo(out),
            Stage::Puf => self.start_challenge(env, out),
            Stage::Finished => {
                let th = self.transcript.digest(&*self.provider);
                let shared = self.shared.expect("key share precedes finished");
                let keys = self.provider.kdf(&shared, &th, LABEL_FINISHED).expect("fixed label");
                let mac = self.provider.mac(&keys.finished_key, &[&th[..], &[self.role as u8]].concat());
                self.pre_finished = Some(th);
                self.keys = Some(keys);
                self.send(HandshakeMessage::Finished { mac }, out);
            }
        }
    }

    fn advance(&mut self, env: &Env, out: &mut Vec<Action>) {
        loop {
            if self.phase.is_terminal() {
                return;
            }
            if self.stage() == Stage::Echo {
                self.try_echo(out);
                if self.phase.is_terminal() {
                    return;
                }
            }
            if !self.stage_complete(self.stage()) {
                return;
            }
            if self.stage() == Stage::Finished {
                self.phase = Phase::Established;
                out.push(Action::Established);
                return;
            }
            self.stage_idx += 1;
            let next = self.stage();
            self.enter(env, next, out);
        }
    }
}
