use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::adversary::{AdvAction, DecisionKind, DecisionPoint, Knowledge, PlannedAction, StrategyRules};
use crate::channel::{emit, ChannelConfig, RadioFrame, ScheduledPulse};
use crate::crypto::{hex, Algorithm, KeyPair, ProviderRef};
use crate::identity::{ca_issue, Certificate, StaticAttributes, Validity};
use crate::protocol::{
    Action, Credentials, Env, HandshakeConfig, HandshakeMessage, HandshakeState, Input, Phase, Role,
    TimerKind,
};
use crate::puf::{enroll_crps, PufDevice};
use crate::world::{Pose, SensorConfig, VehicleId, WorldState};

use super::scenario::{CertKind, Power, Scenario};
use super::trace::{Category, Trace};

#[derive(Debug)]
pub(crate) struct VehicleRt {
    pub visible: StaticAttributes,
    pub cert: Option<Certificate>,
    /// Same subject under the rogue CA, for adversary sessions without a
    /// genuine certificate.
    pub forged: Certificate,
    pub signing: KeyPair,
    pub puf: PufDevice,
    pub owned: bool,
}

#[derive(Debug, Clone)]
pub struct SessionRt {
    pub index: usize,
    /// Physical vehicle running the session.
    pub host: VehicleId,
    /// Identity used as the radio sender.
    pub identity: VehicleId,
    pub adversarial: bool,
    /// Vehicle whose pose this session claims as its own.
    pub claim_pose_of: VehicleId,
    pub state: HandshakeState,
    /// Session whose frames this one last accepted.
    pub last_source: Option<usize>,
    pub plaintexts: Vec<Vec<u8>>,
    pub mirror: Option<usize>,
    pub established_at: Option<f64>,
    pub cert_owner: Option<VehicleId>,
    pub pose_occupant: Option<VehicleId>,
    /// Transcript length when its digests were last handed out.
    granted: usize,
}

#[derive(Debug, Clone)]
enum Ev {
    Directive(usize),
    Radio { to: VehicleId, frame: RadioFrame, source: usize },
    AdvRadio { session: usize, frame: RadioFrame, source: usize },
    AdvSpawn { host: VehicleId, identity: VehicleId, claim: VehicleId, frame: RadioFrame, source: usize, mirror: bool },
    Optical { sp: ScheduledPulse },
    RelayEmit { from: VehicleId, aimed_at: Pose, payload: Vec<u8>, session: Option<usize> },
    PufDone { session: usize, challenge_id: u32, response: [u8; 32] },
    Timer { session: usize, kind: TimerKind },
}

#[derive(Debug, Clone)]
struct Queued {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        o.time.total_cmp(&self.time).then(o.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
enum Pending {
    Radio { frame: RadioFrame, source: usize },
    Optical { sp: ScheduledPulse },
}

#[derive(Debug, Clone)]
pub enum Controller {
    /// Observe only.
    Passive,
    Rules(StrategyRules),
    /// Explicit actions by decision index; everything else is delivered.
    Plan(BTreeMap<usize, AdvAction>),
    /// Stop at every decision and wait for [`Engine::decide`].
    Manual,
}

#[derive(Debug, Clone)]
struct Route {
    from: VehicleId,
    to: VehicleId,
    session: usize,
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub(crate) scenario: std::sync::Arc<Scenario>,
    pub(crate) provider: ProviderRef,
    pub(crate) world: WorldState,
    rng: ChaCha20Rng,
    queue: BinaryHeap<Queued>,
    seq: u64,
    pub(crate) now: f64,
    pub(crate) vehicles: std::sync::Arc<BTreeMap<VehicleId, VehicleRt>>,
    pub(crate) ca_public: [u8; 32],
    pub sessions: Vec<SessionRt>,
    pub trace: Trace,
    pub(crate) knowledge: Knowledge,
    controller: Controller,
    active: bool,
    pending: VecDeque<Pending>,
    observed: Vec<RadioFrame>,
    routes: Vec<Route>,
    decisions: usize,
    pub(crate) taken: Vec<PlannedAction>,
    pub(crate) errors: Vec<String>,
    pub(crate) events: u64,
    channel: ChannelConfig,
    sensors: SensorConfig,
}

fn cfg_for(sc: &Scenario, lenient: bool) -> HandshakeConfig {
    let c = &sc.constants;
    HandshakeConfig {
        variant: sc.variant,
        capture_radius: c.capture_radius,
        theta_tol: c.theta_tol,
        c_sim: c.c_sim,
        radio_latency: c.radio_latency,
        beacon_window: c.beacon_window,
        puf_slack: c.puf_slack,
        puf_response_latency: c.puf_response_latency,
        lenient,
    }
}

fn msg_name(payload: &[u8]) -> &'static str {
    HandshakeMessage::decode(payload).map(|m| m.name()).unwrap_or("Garbled")
}

fn short_hash(provider: &ProviderRef, b: &[u8]) -> String {
    hex(&provider.hash(b)[..6])
}

impl Engine {
    pub fn new(scenario: Scenario, provider: ProviderRef, controller: Controller) -> Result<Self, String> {
        let sc = std::sync::Arc::new(scenario);
        let c = &sc.constants;
        let mut rng = ChaCha20Rng::seed_from_u64(sc.seed);
        let ca = provider.gen_keypair(Algorithm::Ed25519, &rng.gen());
        let rogue_ca = provider.gen_keypair(Algorithm::Ed25519, &rng.gen());
        let mut world = WorldState::new();
        world.obstructions = sc.obstructions.clone();
        let mut vehicles = BTreeMap::new();
        for v in &sc.vehicles {
            world.poses.insert(v.id.clone(), v.pose);
        }
        for v in &sc.vehicles {
            let looks = v.clone_of.as_ref().and_then(|id| sc.vehicle(id)).unwrap_or(v);
            let visible = StaticAttributes::new(&v.vin, &looks.plate, looks.brand, looks.color)
                .map_err(|e| format!("vehicle {}: {e}", v.id))?;
            let signing = provider.gen_keypair(Algorithm::Ed25519, &rng.gen());
            let puf = PufDevice::manufacture(rng.gen(), c.puf_response_latency);
            let crps = enroll_crps(&*provider, &puf, v.puf_crps, rng.gen());
            let (issuer, validity) = match v.cert {
                CertKind::Valid | CertKind::None => {
                    (&ca, Validity { valid_from: c.cert_valid_from, valid_to: c.cert_valid_to })
                }
                CertKind::Forged => (&rogue_ca, Validity { valid_from: c.cert_valid_from, valid_to: c.cert_valid_to }),
                CertKind::Expired => {
                    (&ca, Validity { valid_from: c.cert_valid_from - 100.0, valid_to: c.cert_valid_from - 1.0 })
                }
            };
            let forged = ca_issue(&*provider, &rogue_ca.secret, visible.clone(), signing.public, crps.clone(), validity)
                .map_err(|e| format!("vehicle {}: {e}", v.id))?;
            let cert = (v.cert != CertKind::None)
                .then(|| ca_issue(&*provider, &issuer.secret, visible.clone(), signing.public, crps, validity))
                .transpose()
                .map_err(|e| format!("vehicle {}: {e}", v.id))?;
            vehicles.insert(v.id.clone(), VehicleRt { visible, cert, forged, signing, puf, owned: sc.owned(&v.id) });
        }
        let adv = sc.adversary.as_ref();
        let active = adv.is_some_and(|a| a.power == Power::Active);
        let controller = if active { controller } else { Controller::Passive };
        let mut knowledge = Knowledge::new();
        for (_, v) in vehicles.iter().filter(|(_, v)| v.owned) {
            knowledge.add_atom(&v.signing.secret);
        }
        let channel = ChannelConfig {
            c_sim: c.c_sim,
            radio_range: c.radio_range,
            radio_latency: c.radio_latency,
            beam_radius: c.beam_radius,
        };
        let sensors = SensorConfig {
            camera_max_range: c.camera_max_range,
            p_confuse: c.p_confuse,
            capture_radius: c.capture_radius,
            sigma_range: c.sigma_range,
            sigma_bearing: c.sigma_bearing,
            theta_tol: c.theta_tol,
        };
        let mut e = Self {
            scenario: sc.clone(),
            provider,
            world,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            vehicles: std::sync::Arc::new(vehicles),
            ca_public: ca.public,
            sessions: Vec::new(),
            trace: Trace::default(),
            knowledge,
            controller,
            active,
            pending: VecDeque::new(),
            observed: Vec::new(),
            routes: Vec::new(),
            decisions: 0,
            taken: Vec::new(),
            errors: Vec::new(),
            events: 0,
            channel,
            sensors,
        };
        for (i, d) in sc.script.iter().enumerate() {
            e.push(d.at, Ev::Directive(i));
        }
        Ok(e)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn actions_taken(&self) -> &[PlannedAction] {
        &self.taken
    }

    pub fn decisions_seen(&self) -> usize {
        self.decisions
    }

    /// Payload under the pending decision.
    pub fn pending_payload(&self) -> Option<&[u8]> {
        self.pending.front().map(|p| match p {
            Pending::Radio { frame, .. } => frame.payload.as_slice(),
            Pending::Optical { sp } => sp.receipt.payload.as_slice(),
        })
    }

    fn push(&mut self, time: f64, ev: Ev) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.queue.push(Queued { time, seq: self.seq, ev });
    }

    fn log(&mut self, category: Category, actor: &str, detail: &[(&str, String)]) {
        self.trace.push(self.now, category, actor, detail);
    }

    /// Runs until a decision awaits [`Engine::decide`] or the run is over.
    /// Returns the pending decision, if any.
    pub fn advance(&mut self) -> Option<DecisionPoint> {
        loop {
            while let Some(p) = self.pending.front().cloned() {
                let point = self.decision_point(&p);
                let action = match &mut self.controller {
                    Controller::Passive => AdvAction::Deliver,
                    Controller::Rules(r) => r.decide(&point),
                    Controller::Plan(plan) => plan.get(&point.index).cloned().unwrap_or(AdvAction::Deliver),
                    Controller::Manual => return Some(point),
                };
                self.resolve(action);
            }
            let Some(q) = self.queue.pop() else { return None };
            if q.time > self.scenario.constants.end_time {
                self.queue.clear();
                return None;
            }
            if q.time > self.now {
                self.world.advance_to(q.time);
                self.now = q.time;
            }
            self.events += 1;
            self.handle(q.ev);
        }
    }

    /// Resolves the pending decision returned by [`Engine::advance`].
    pub fn decide(&mut self, action: AdvAction) {
        assert!(!self.pending.is_empty(), "no pending decision");
        self.resolve(action);
    }

    pub fn run_to_end(&mut self) {
        while self.advance().is_some() {
            self.decide(AdvAction::Deliver);
        }
    }

    pub fn is_finished(&self) -> bool {
        self.pending.is_empty() && self.queue.is_empty()
    }

    fn decision_point(&self, p: &Pending) -> DecisionPoint {
        let kind = match p {
            Pending::Radio { frame, source } => {
                let msg = HandshakeMessage::decode(&frame.payload).ok();
                DecisionKind::Radio {
                    sender: self.sessions[*source].host.clone(),
                    claimed_sender: frame.claimed_sender.clone(),
                    dest: frame.dest.clone(),
                    msg: msg.as_ref().map_or("Garbled", |m| m.name()),
                    initiator_hello: matches!(msg, Some(HandshakeMessage::Hello { role: Role::Initiator, .. })),
                }
            }
            Pending::Optical { sp } => DecisionKind::Optical { at: sp.recipient.clone(), msg: msg_name(sp.pulse.payload()) },
        };
        DecisionPoint { index: self.decisions, time: self.now, kind }
    }

    fn resolve(&mut self, action: AdvAction) {
        let p = self.pending.pop_front().expect("pending decision");
        let index = self.decisions;
        self.decisions += 1;
        if !action.is_default() {
            self.log(Category::Adv, "adversary", &[("event", "action".into()), ("decision", index.to_string()), ("action", action.to_string())]);
            self.taken.push(PlannedAction { decision: index, time: self.now, action: action.clone() });
        }
        match p {
            Pending::Radio { mut frame, source } => match action {
                AdvAction::Drop => {}
                AdvAction::Delay => {
                    let extra = self.scenario.constants.adversary_delay;
                    self.route_honest_frame(frame, source, extra);
                }
                AdvAction::Replay(j) => {
                    if let Some(old) = self.observed.get(j).cloned() {
                        let old = RadioFrame { dest: frame.dest.clone(), sent_at: self.now, ..old };
                        self.route_honest_frame(old, source, 0.0);
                    }
                    self.route_honest_frame(frame, source, 0.0);
                }
                AdvAction::SwapSender(v) => {
                    frame.claimed_sender = v;
                    self.route_honest_frame(frame, source, 0.0);
                }
                AdvAction::FlipBit(b) => {
                    if b / 8 < frame.payload.len() {
                        frame.payload[b / 8] ^= 0x80 >> (b % 8);
                    }
                    self.route_honest_frame(frame, source, 0.0);
                }
                AdvAction::Divert { host, claim_victim_pose, mirror } => {
                    let delay = self.radio_delay(&self.sessions[source].host.clone(), &host);
                    let claim = if claim_victim_pose { frame.dest.clone() } else { host.clone() };
                    let identity = frame.dest.clone();
                    self.push(self.now + delay, Ev::AdvSpawn { host, identity, claim, frame, source, mirror });
                }
                AdvAction::Deliver | AdvAction::RelayOptical { .. } => self.route_honest_frame(frame, source, 0.0),
            },
            Pending::Optical { sp } => match action {
                AdvAction::RelayOptical { to } if self.world.pose(&to).is_some() && to != sp.recipient => {
                    let aimed_at = self.world.poses[&to];
                    let at = self.now + self.scenario.constants.relay_processing;
                    self.push(at, Ev::RelayEmit { from: sp.recipient.clone(), aimed_at, payload: sp.pulse.payload().to_vec(), session: None });
                }
                AdvAction::Drop => {}
                AdvAction::FlipBit(b) => {
                    let mut payload = sp.receipt.payload.clone();
                    if b / 8 < payload.len() {
                        payload[b / 8] ^= 0x80 >> (b % 8);
                    }
                    let mut sp = sp;
                    sp.receipt.payload = payload;
                    self.deliver_optical(sp);
                }
                _ => self.deliver_optical(sp),
            },
        }
    }

    fn radio_delay(&self, from: &VehicleId, to: &VehicleId) -> f64 {
        let d = self.world.poses[from].distance(&self.world.poses[to]);
        self.channel.radio_delay(d)
    }

    /// Delivers a frame according to installed routes, otherwise to its
    /// addressee if in range.
    fn route_honest_frame(&mut self, frame: RadioFrame, source: usize, extra: f64) {
        let hello = matches!(HandshakeMessage::decode(&frame.payload), Ok(HandshakeMessage::Hello { role: Role::Initiator, .. }));
        let route = self
            .routes
            .iter()
            .rev()
            .find(|r| r.from == frame.claimed_sender && r.to == frame.dest && !hello)
            .map(|r| r.session);
        let src_host = self.sessions[source].host.clone();
        if let Some(s) = route {
            let at = self.now + extra + self.radio_delay(&src_host, &self.sessions[s].host.clone());
            self.push(at, Ev::AdvRadio { session: s, frame, source });
            return;
        }
        let Some(dest_pose) = self.world.pose(&frame.dest).copied() else { return };
        if self.vehicles[&frame.dest].owned {
            return;
        }
        let d = self.world.poses[&src_host].distance(&dest_pose);
        let adversarial_source = self.sessions[source].adversarial;
        if d <= self.channel.radio_range || adversarial_source {
            let at = self.now + extra + self.channel.radio_delay(d);
            self.push(at, Ev::Radio { to: frame.dest.clone(), frame, source });
        }
    }

    fn env(&mut self, session: usize) -> Env {
        let s = &self.sessions[session];
        let own_pose = self.world.poses[&s.claim_pose_of];
        Env { now: self.now, own_pose, fresh: self.rng.gen() }
    }

    fn step(&mut self, session: usize, input: Input) {
        let env = self.env(session);
        let actions = self.sessions[session].state.step(&env, input);
        self.after_step(session, actions);
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Directive(i) => self.directive(i),
            Ev::Radio { to, frame, source } => self.radio_arrival(to, frame, source),
            Ev::AdvRadio { session, frame, source } => {
                let host = self.sessions[session].host.clone();
                self.log(Category::Radio, host.as_str(), &[
                    ("event", "recv".into()),
                    ("msg", msg_name(&frame.payload).into()),
                    ("from", frame.claimed_sender.to_string()),
                    ("session", session.to_string()),
                ]);
                self.session_radio(session, frame, source);
            }
            Ev::AdvSpawn { host, identity, claim, frame, source, mirror } => {
                self.spawn_adversary(host, identity, claim, frame, source, mirror)
            }
            Ev::Optical { sp } => {
                self.log(Category::Optical, sp.recipient.as_str(), &[
                    ("event", "arrive".into()),
                    ("msg", msg_name(&sp.receipt.payload).into()),
                    ("from", sp.pulse.emitter().to_string()),
                    ("emitted", format!("{:.9}", sp.pulse.emitted_at())),
                    ("bearing", format!("{:.6}", sp.receipt.arrival_bearing)),
                ]);
                if self.vehicles[&sp.recipient].owned {
                    self.knowledge.observe(&sp.receipt.payload);
                    if self.active {
                        self.pending.push_back(Pending::Optical { sp });
                        return;
                    }
                }
                self.deliver_optical(sp);
            }
            Ev::RelayEmit { from, aimed_at, payload, session } => self.fire(&from, aimed_at, payload, session),
            Ev::PufDone { session, challenge_id, response } => {
                self.step(session, Input::PufEvaluated { challenge_id, response })
            }
            Ev::Timer { session, kind } => {
                if !self.sessions[session].state.phase().is_terminal() {
                    self.step(session, Input::Timer(kind));
                }
            }
        }
    }

    fn deliver_optical(&mut self, sp: ScheduledPulse) {
        let targets: Vec<usize> = self
            .sessions
            .iter()
            .filter(|s| s.host == sp.recipient && !s.state.phase().is_terminal())
            .map(|s| s.index)
            .collect();
        for t in targets {
            self.step(t, Input::Optical(sp.receipt.clone()));
        }
    }
}

impl Engine {
    fn env_at(&mut self, claim: &VehicleId) -> Env {
        Env { now: self.now, own_pose: self.world.poses[claim], fresh: self.rng.gen() }
    }

    fn credentials(&self, id: &VehicleId, keys_of: &VehicleId, cert: Option<Certificate>) -> Credentials {
        Credentials {
            id: id.clone(),
            signing: Some(self.vehicles[keys_of].signing.clone()),
            certificate: cert,
            ca_public: self.ca_public,
        }
    }

    fn error(&mut self, actor: &str, msg: String) {
        self.log(Category::Proto, actor, &[("event", "error".into()), ("detail", msg.clone())]);
        self.errors.push(msg);
    }

    fn directive(&mut self, i: usize) {
        let d = self.scenario.script[i].clone();
        match d.kind {
            super::scenario::DirectiveKind::Initiate { peer } => {
                let creds = {
                    let v = &self.vehicles[&d.actor];
                    Credentials {
                        id: d.actor.clone(),
                        signing: Some(v.signing.clone()),
                        certificate: v.cert.clone(),
                        ca_public: self.ca_public,
                    }
                };
                let cfg = cfg_for(&self.scenario, false);
                match HandshakeState::initiate(cfg, creds, self.provider.clone(), peer.clone(), self.rng.gen()) {
                    Ok((state, actions)) => {
                        let s = self.add_session(d.actor.clone(), d.actor.clone(), false, d.actor.clone(), state, None);
                        self.log(Category::Proto, d.actor.as_str(), &[
                            ("event", "initiate".into()),
                            ("session", s.to_string()),
                            ("peer", peer.to_string()),
                            ("variant", self.scenario.variant.as_str().into()),
                        ]);
                        self.after_step(s, actions);
                    }
                    Err(e) => self.error(d.actor.as_str(), e.to_string()),
                }
            }
            super::scenario::DirectiveKind::Send { text } => {
                let s = self
                    .sessions
                    .iter()
                    .rev()
                    .find(|s| s.host == d.actor && !s.adversarial && s.state.phase() == Phase::Established)
                    .map(|s| s.index);
                let Some(s) = s else {
                    self.log(Category::Proto, d.actor.as_str(), &[("event", "data_unsent".into()), ("len", text.len().to_string())]);
                    return;
                };
                self.send_data(s, text.as_bytes());
            }
        }
    }

    fn send_data(&mut self, s: usize, pt: &[u8]) {
        match self.sessions[s].state.session_send(pt) {
            Ok(msg) => {
                if !self.sessions[s].adversarial {
                    self.sessions[s].plaintexts.push(pt.to_vec());
                }
                let host = self.sessions[s].host.clone();
                self.log(Category::Proto, host.as_str(), &[
                    ("event", "data_sent".into()),
                    ("session", s.to_string()),
                    ("len", pt.len().to_string()),
                ]);
                self.apply(s, vec![Action::SendRadio(msg)]);
            }
            Err(e) => {
                let host = self.sessions[s].host.clone();
                self.error(host.as_str(), e.to_string());
            }
        }
    }

    fn add_session(
        &mut self,
        host: VehicleId,
        identity: VehicleId,
        adversarial: bool,
        claim_pose_of: VehicleId,
        state: HandshakeState,
        last_source: Option<usize>,
    ) -> usize {
        let index = self.sessions.len();
        if adversarial {
            self.knowledge.add_scalar(state.ephemeral().secret);
        }
        self.sessions.push(SessionRt {
            index,
            host,
            identity,
            adversarial,
            claim_pose_of,
            state,
            last_source,
            plaintexts: Vec::new(),
            mirror: None,
            established_at: None,
            cert_owner: None,
            pose_occupant: None,
            granted: 0,
        });
        index
    }

    fn radio_arrival(&mut self, to: VehicleId, frame: RadioFrame, source: usize) {
        let msg = HandshakeMessage::decode(&frame.payload).ok();
        self.log(Category::Radio, to.as_str(), &[
            ("event", "recv".into()),
            ("msg", msg.as_ref().map_or("Garbled", |m| m.name()).into()),
            ("from", frame.claimed_sender.to_string()),
        ]);
        if frame.dest != to {
            return;
        }
        let hello = matches!(msg, Some(HandshakeMessage::Hello { role: Role::Initiator, .. }));
        if hello {
            if !self.sessions[source].adversarial {
                let (a, b) = (frame.claimed_sender.clone(), to.clone());
                self.routes.retain(|r| !((r.from == a && r.to == b) || (r.from == b && r.to == a)));
            }
            self.spawn_responder(to, frame, source);
            return;
        }
        let live = self
            .sessions
            .iter()
            .rev()
            .find(|s| s.host == to && !s.adversarial && *s.state.peer() == frame.claimed_sender && !s.state.phase().is_terminal())
            .map(|s| s.index);
        let target = live.or_else(|| {
            matches!(msg, Some(HandshakeMessage::AppData { .. }))
                .then(|| {
                    self.sessions
                        .iter()
                        .rev()
                        .find(|s| {
                            s.host == to
                                && !s.adversarial
                                && *s.state.peer() == frame.claimed_sender
                                && s.state.phase() == Phase::Established
                        })
                        .map(|s| s.index)
                })
                .flatten()
        });
        match target {
            Some(s) => self.session_radio(s, frame, source),
            // Nothing to attach it to and not late traffic of a closed session.
            None if matches!(msg, None | Some(HandshakeMessage::Hello { role: Role::Responder, .. })) => {
                self.spawn_responder(to, frame, source)
            }
            None => {}
        }
    }

    fn spawn_responder(&mut self, to: VehicleId, frame: RadioFrame, source: usize) {
        if self.vehicles[&to].owned {
            return;
        }
        let creds = {
            let v = &self.vehicles[&to];
            Credentials { id: to.clone(), signing: Some(v.signing.clone()), certificate: v.cert.clone(), ca_public: self.ca_public }
        };
        let env = self.env_at(&to);
        let cfg = cfg_for(&self.scenario, false);
        let peer = frame.claimed_sender.clone();
        match HandshakeState::respond(cfg, creds, self.provider.clone(), peer.clone(), self.rng.gen(), &env, &frame.payload) {
            Ok((state, actions)) => {
                let s = self.add_session(to.clone(), to.clone(), false, to.clone(), state, Some(source));
                self.log(Category::Proto, to.as_str(), &[("event", "respond".into()), ("session", s.to_string()), ("peer", peer.to_string())]);
                self.after_step(s, actions);
            }
            Err(e) => self.error(to.as_str(), e.to_string()),
        }
    }

    fn pick_certificate(&self, host: &VehicleId, impersonated: &VehicleId) -> Option<Certificate> {
        let want = self.vehicles.get(impersonated).map(|v| &v.visible);
        let owned = || self.vehicles.values().filter(|v| v.owned);
        let looks = |c: &Certificate| {
            want.is_some_and(|w| {
                let a = &c.subject_attributes;
                a.license_plate == w.license_plate && a.brand == w.brand && a.color == w.color
            })
        };
        owned()
            .filter_map(|v| v.cert.clone())
            .find(|c| looks(c))
            .or_else(|| self.vehicles[host].cert.clone())
            .or_else(|| owned().find_map(|v| v.cert.clone()))
            .or_else(|| Some(self.vehicles[host].forged.clone()))
    }

    fn keys_for(&self, cert: &Option<Certificate>, host: &VehicleId) -> VehicleId {
        cert.as_ref()
            .and_then(|c| self.vehicles.iter().find(|(_, v)| v.owned && v.signing.public == c.subject_public_key))
            .map(|(id, _)| id.clone())
            .unwrap_or_else(|| host.clone())
    }

    fn spawn_adversary(
        &mut self,
        host: VehicleId,
        identity: VehicleId,
        claim: VehicleId,
        frame: RadioFrame,
        source: usize,
        mirror: bool,
    ) {
        let initiator = frame.claimed_sender.clone();
        self.log(Category::Radio, host.as_str(), &[
            ("event", "recv".into()),
            ("msg", msg_name(&frame.payload).into()),
            ("from", initiator.to_string()),
        ]);
        let cert = self.pick_certificate(&host, &identity);
        let keys = self.keys_for(&cert, &host);
        let creds = self.credentials(&identity, &keys, cert);
        let env = self.env_at(&claim);
        let cfg = cfg_for(&self.scenario, true);
        let (state, actions) =
            match HandshakeState::respond(cfg.clone(), creds, self.provider.clone(), initiator.clone(), self.rng.gen(), &env, &frame.payload) {
                Ok(x) => x,
                Err(e) => return self.error(host.as_str(), e.to_string()),
            };
        let s = self.add_session(host.clone(), identity.clone(), true, claim.clone(), state, Some(source));
        self.routes.push(Route { from: initiator.clone(), to: identity.clone(), session: s });
        self.log(Category::Adv, host.as_str(), &[
            ("event", "session".into()),
            ("session", s.to_string()),
            ("as", identity.to_string()),
            ("peer", initiator.to_string()),
        ]);
        self.after_step(s, actions);
        if !mirror {
            return;
        }
        let cert = self.pick_certificate(&host, &initiator);
        let keys = self.keys_for(&cert, &host);
        let creds = self.credentials(&initiator, &keys, cert);
        match HandshakeState::initiate(cfg, creds, self.provider.clone(), identity.clone(), self.rng.gen()) {
            Ok((state, actions)) => {
                let claim_m = if claim == host { host.clone() } else { initiator.clone() };
                let m = self.add_session(host.clone(), initiator.clone(), true, claim_m, state, None);
                self.sessions[s].mirror = Some(m);
                self.sessions[m].mirror = Some(s);
                self.routes.push(Route { from: identity.clone(), to: initiator.clone(), session: m });
                self.log(Category::Adv, host.as_str(), &[
                    ("event", "session".into()),
                    ("session", m.to_string()),
                    ("as", initiator.to_string()),
                    ("peer", identity.to_string()),
                ]);
                self.after_step(m, actions);
            }
            Err(e) => self.error(host.as_str(), e.to_string()),
        }
    }

    fn session_radio(&mut self, s: usize, frame: RadioFrame, source: usize) {
        self.sessions[s].last_source = Some(source);
        let is_data = matches!(HandshakeMessage::decode(&frame.payload), Ok(HandshakeMessage::AppData { .. }));
        if is_data && self.sessions[s].state.phase() == Phase::Established {
            let msg = HandshakeMessage::decode(&frame.payload).expect("decoded above");
            let host = self.sessions[s].host.clone();
            match self.sessions[s].state.session_recv(&msg) {
                Ok(pt) => {
                    let adversarial = self.sessions[s].adversarial;
                    self.log(Category::Proto, host.as_str(), &[
                        ("event", "data_recv".into()),
                        ("session", s.to_string()),
                        ("len", pt.len().to_string()),
                    ]);
                    self.sessions[s].plaintexts.push(pt.clone());
                    if adversarial {
                        self.knowledge.add_atom(&pt);
                        self.log(Category::Adv, host.as_str(), &[("event", "decrypt".into()), ("session", s.to_string())]);
                        if let Some(m) = self.sessions[s].mirror {
                            if self.sessions[m].state.phase() == Phase::Established {
                                self.send_data(m, &pt);
                            }
                        }
                    }
                }
                Err(e) => self.log(Category::Proto, host.as_str(), &[
                    ("event", "data_reject".into()),
                    ("session", s.to_string()),
                    ("reason", e.to_string()),
                ]),
            }
            return;
        }
        self.step(s, Input::Radio(frame.payload));
    }
}

impl Engine {
    fn after_step(&mut self, s: usize, actions: Vec<Action>) {
        let len = self.sessions[s].state.transcript_len();
        if len != self.sessions[s].granted {
            self.sessions[s].granted = len;
            for d in self.sessions[s].state.public_digests() {
                self.knowledge.add_digest(d);
            }
        }
        self.apply(s, actions);
    }

    fn apply(&mut self, s: usize, actions: Vec<Action>) {
        for a in actions {
            let host = self.sessions[s].host.clone();
            match a {
                Action::SendRadio(m) => self.send_radio(s, m),
                Action::RequestCamera(purpose) => {
                    let peer = self.sessions[s].state.peer().clone();
                    let (observation, sighting) = match self.vehicles.get(&peer) {
                        Some(v) => {
                            let truth = v.visible.clone();
                            let obs = self.world.camera_observe(&self.sensors, &host, &peer, &truth, &mut self.rng);
                            let seen = (!obs.is_blank()).then(|| self.world.poses[&peer]);
                            (obs, seen)
                        }
                        None => (
                            crate::identity::AttributeObservation {
                                observed_plate: None,
                                observed_brand: None,
                                observed_color: None,
                                observer_pose: self.world.poses[&host],
                                observed_at: self.now,
                            },
                            None,
                        ),
                    };
                    self.log(Category::Sense, host.as_str(), &[
                        ("event", "camera".into()),
                        ("session", s.to_string()),
                        ("target", peer.to_string()),
                        ("plate", observation.observed_plate.clone().unwrap_or_else(|| "-".into())),
                        ("brand", observation.observed_brand.map_or("-", |b| b.as_str()).into()),
                        ("color", observation.observed_color.map_or("-", |c| c.as_str()).into()),
                    ]);
                    self.step(s, Input::Camera { purpose, observation, sighting });
                }
                Action::RequestLidar { purpose, region } => {
                    let result = self.world.lidar_measure(&self.sensors, &host, &region, &mut self.rng);
                    let detail = match &result {
                        Some(rb) => format!("{:.6}@{:.6}", rb.range, rb.bearing),
                        None => "none".into(),
                    };
                    self.log(Category::Sense, host.as_str(), &[
                        ("event", "lidar".into()),
                        ("session", s.to_string()),
                        ("result", detail),
                    ]);
                    self.step(s, Input::Lidar { purpose, result });
                }
                Action::FireOptical { aimed_at, message } => {
                    let payload = message.encode();
                    let sess = &self.sessions[s];
                    if sess.adversarial {
                        let from = sess.claim_pose_of.clone();
                        if from != host && !self.vehicles[&from].owned {
                            self.log(Category::Adv, host.as_str(), &[
                                ("event", "withhold".into()),
                                ("session", s.to_string()),
                                ("msg", message.name().into()),
                            ]);
                            continue;
                        }
                        let d = self.world.poses[&host].distance(&self.world.poses[&from]);
                        let delay = if from == host { 0.0 } else { self.scenario.constants.relay_processing + d / self.channel.c_sim };
                        self.push(self.now + delay, Ev::RelayEmit { from, aimed_at, payload, session: Some(s) });
                    } else {
                        self.fire(&host, aimed_at, payload, Some(s));
                    }
                }
                Action::EvaluatePuf(ch) => {
                    let dev = &self.vehicles[&host].puf;
                    let response = dev.respond(&*self.provider, &ch);
                    let at = self.now + dev.response_latency();
                    self.push(at, Ev::PufDone { session: s, challenge_id: ch.challenge_id, response });
                }
                Action::SetTimer { kind, at } => {
                    if let Some(d) = self.sessions[s].state.deadlines().last().copied() {
                        self.log(Category::Proto, host.as_str(), &[
                            ("event", "deadline".into()),
                            ("session", s.to_string()),
                            ("kind", kind.as_str().into()),
                            ("start", format!("{:.9}", d.started_at)),
                            ("deadline", format!("{:.9}", d.deadline)),
                            ("predicted", d.predicted.map_or("-".into(), |p| format!("{p:.9}"))),
                        ]);
                    }
                    self.push(at, Ev::Timer { session: s, kind });
                }
                Action::Established => self.on_established(s),
                Action::Aborted(reason) => {
                    self.log(Category::Proto, host.as_str(), &[
                        ("event", "abort".into()),
                        ("session", s.to_string()),
                        ("peer", self.sessions[s].state.peer().to_string()),
                        ("reason", reason.as_str().into()),
                    ]);
                    self.routes.retain(|r| r.session != s);
                }
            }
        }
    }

    fn send_radio(&mut self, s: usize, m: HandshakeMessage) {
        let payload = m.encode();
        self.knowledge.observe(&payload);
        let sess = &self.sessions[s];
        let frame = RadioFrame {
            claimed_sender: sess.identity.clone(),
            dest: sess.state.peer().clone(),
            payload,
            sent_at: self.now,
        };
        let (host, adversarial, last) = (sess.host.clone(), sess.adversarial, sess.last_source);
        self.log(Category::Radio, host.as_str(), &[
            ("event", "send".into()),
            ("msg", m.name().into()),
            ("as", frame.claimed_sender.to_string()),
            ("to", frame.dest.to_string()),
            ("session", s.to_string()),
            ("h", short_hash(&self.provider, &frame.payload)),
        ]);
        if adversarial {
            let to = match last {
                Some(src) => self.sessions[src].host.clone(),
                None => frame.dest.clone(),
            };
            if self.world.pose(&to).is_some() {
                let at = self.now + self.radio_delay(&host, &to);
                self.push(at, Ev::Radio { to, frame, source: s });
            }
            return;
        }
        self.observed.push(frame.clone());
        if self.active {
            self.pending.push_back(Pending::Radio { frame, source: s });
        } else {
            self.route_honest_frame(frame, s, 0.0);
        }
    }

    fn fire(&mut self, from: &VehicleId, aimed_at: Pose, payload: Vec<u8>, session: Option<usize>) {
        let name = msg_name(&payload);
        match emit(&self.world, &self.channel, from, aimed_at, payload) {
            Ok(sp) => {
                self.log(Category::Optical, from.as_str(), &[
                    ("event", "emit".into()),
                    ("msg", name.into()),
                    ("to", sp.recipient.to_string()),
                    ("arrive", format!("{:.9}", sp.receipt.arrived_at)),
                ]);
                self.push(sp.receipt.arrived_at, Ev::Optical { sp });
            }
            Err(e) => {
                self.log(Category::Optical, from.as_str(), &[
                    ("event", "miss".into()),
                    ("msg", name.into()),
                    ("reason", e.as_str().into()),
                ]);
                if let Some(s) = session {
                    if !self.sessions[s].state.phase().is_terminal() {
                        self.step(s, Input::OpticalFailed(e));
                    }
                }
            }
        }
    }

    fn on_established(&mut self, s: usize) {
        let now = self.now;
        let variant = self.scenario.variant;
        let sess = &self.sessions[s];
        let host = sess.host.clone();
        let cert_owner = if variant.uses_certificates() {
            sess.state.peer_certificate().and_then(|c| {
                self.vehicles.iter().find(|(_, v)| v.signing.public == c.subject_public_key).map(|(id, _)| id.clone())
            })
        } else {
            None
        };
        let pose_occupant = if variant.uses_laser() {
            sess.state.peer_claim().and_then(|(p, at)| {
                self.world.vehicle_near(&p.extrapolate(now - at), self.sensors.capture_radius, Some(&host)).cloned()
            })
        } else {
            None
        };
        let deadlines = sess.state.deadlines().to_vec();
        let peer = sess.state.peer().clone();
        let sess = &mut self.sessions[s];
        sess.established_at = Some(now);
        sess.cert_owner = cert_owner;
        sess.pose_occupant = pose_occupant;
        self.log(Category::Proto, host.as_str(), &[
            ("event", "established".into()),
            ("session", s.to_string()),
            ("peer", peer.to_string()),
            ("variant", variant.as_str().into()),
        ]);
        for d in deadlines {
            if let (Some(met), Some(margin)) = (d.met_at, d.margin()) {
                self.log(Category::Proto, host.as_str(), &[
                    ("event", "deadline_met".into()),
                    ("session", s.to_string()),
                    ("kind", d.kind.as_str().into()),
                    ("met", format!("{met:.9}")),
                    ("margin", format!("{margin:.3}")),
                ]);
            }
        }
    }

    /// Endpoint vehicle of the radio frames last accepted by `s`.
    pub fn radio_endpoint(&self, s: usize) -> Option<&VehicleId> {
        self.sessions[s].last_source.map(|src| &self.sessions[src].host)
    }

    pub fn is_owned(&self, v: &VehicleId) -> bool {
        self.vehicles.get(v).is_some_and(|v| v.owned)
    }
}

impl Engine {
    /// Non-default actions available at `point`, in exploration order.
    pub fn alphabet(&self, point: &DecisionPoint) -> Vec<AdvAction> {
        let owned: Vec<VehicleId> = self.vehicles.iter().filter(|(_, v)| v.owned).map(|(id, _)| id.clone()).collect();
        let mut out = vec![AdvAction::Drop];
        match &point.kind {
            DecisionKind::Radio { claimed_sender, dest, initiator_hello, .. } => {
                out.push(AdvAction::Delay);
                let current = match self.pending.front() {
                    Some(Pending::Radio { frame, .. }) => frame.payload.clone(),
                    _ => Vec::new(),
                };
                let mut seen = std::collections::BTreeSet::new();
                for (j, f) in self.observed.iter().enumerate() {
                    if f.payload != current && f.claimed_sender != *dest && seen.insert(&f.payload) {
                        out.push(AdvAction::Replay(j));
                    }
                }
                for v in self.vehicles.keys().filter(|v| *v != claimed_sender && *v != dest) {
                    out.push(AdvAction::SwapSender(v.clone()));
                }
                if *initiator_hello {
                    for host in &owned {
                        for (claim_victim_pose, mirror) in [(false, false), (false, true), (true, false), (true, true)] {
                            out.push(AdvAction::Divert { host: host.clone(), claim_victim_pose, mirror });
                        }
                    }
                }
            }
            DecisionKind::Optical { at, .. } => {
                for v in self.vehicles.keys().filter(|v| *v != at) {
                    out.push(AdvAction::RelayOptical { to: v.clone() });
                }
            }
        }
        out.sort_by_key(|a| a.to_string());
        out
    }

    /// Digest of everything that can influence the rest of the run,
    /// excluding adversary bookkeeping lines.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut s = String::new();
        for r in self.trace.records.iter().filter(|r| r.category != Category::Adv) {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        let mut q: Vec<&Queued> = self.queue.iter().collect();
        q.sort_by(|a, b| b.cmp(a));
        for e in q {
            s.push_str(&format!("{:x}:{:?}\n", e.time.to_bits(), e.ev));
        }
        for r in &self.routes {
            s.push_str(&format!("route {}>{}:{}\n", r.from, r.to, r.session));
        }
        for p in &self.pending {
            s.push_str(&format!("pending {p:?}\n"));
        }
        self.provider.hash(s.as_bytes())
    }

    pub fn honest_live(&self) -> bool {
        self.sessions.iter().any(|s| !s.adversarial && !s.state.phase().is_terminal())
    }

    pub fn directives_pending(&self) -> bool {
        self.queue.iter().any(|q| matches!(q.ev, Ev::Directive(_)))
    }
}
