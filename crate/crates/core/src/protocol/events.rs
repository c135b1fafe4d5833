use std::fmt;

use crate::channel::{OpticalError, OpticalReceipt};
use crate::crypto::KeyPair;
use crate::identity::{AttributeObservation, Certificate};
use crate::puf::Challenge;
use crate::world::{Pose, RangeBearing, VehicleId};

use super::message::{HandshakeMessage, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbortReason {
    BadCert,
    CertAttrMismatch,
    BadSignature,
    DynamicCouplingFailed,
    BeaconTimeout,
    AlignmentFailed,
    PufVerifyFailed,
    TimingViolation,
    FinishedMismatch,
    Malformed,
}

impl AbortReason {
    pub const ALL: [AbortReason; 10] = [
        AbortReason::BadCert,
        AbortReason::CertAttrMismatch,
        AbortReason::BadSignature,
        AbortReason::DynamicCouplingFailed,
        AbortReason::BeaconTimeout,
        AbortReason::AlignmentFailed,
        AbortReason::PufVerifyFailed,
        AbortReason::TimingViolation,
        AbortReason::FinishedMismatch,
        AbortReason::Malformed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AbortReason::BadCert => "BAD_CERT",
            AbortReason::CertAttrMismatch => "CERT_ATTR_MISMATCH",
            AbortReason::BadSignature => "BAD_SIGNATURE",
            AbortReason::DynamicCouplingFailed => "DYNAMIC_COUPLING_FAILED",
            AbortReason::BeaconTimeout => "BEACON_TIMEOUT",
            AbortReason::AlignmentFailed => "ALIGNMENT_FAILED",
            AbortReason::PufVerifyFailed => "PUF_VERIFY_FAILED",
            AbortReason::TimingViolation => "TIMING_VIOLATION",
            AbortReason::FinishedMismatch => "FINISHED_MISMATCH",
            AbortReason::Malformed => "MALFORMED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    /// Reasons the state machine of `variant` can produce.
    pub fn checked_by(variant: Variant) -> Vec<AbortReason> {
        use AbortReason::*;
        let mut v = vec![Malformed, FinishedMismatch];
        if variant.uses_certificates() {
            v.extend([BadCert, CertAttrMismatch, BadSignature]);
        }
        if variant.uses_laser() {
            v.extend([DynamicCouplingFailed, BeaconTimeout, AlignmentFailed]);
        }
        if variant.uses_puf() {
            v.extend([PufVerifyFailed, TimingViolation]);
        }
        v
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Start,
    HelloSent,
    CertExchange,
    KeyExchange,
    DynamicCoupling,
    BeaconEcho,
    PufExchange,
    Finishing,
    Established,
    Aborted,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Start => "START",
            Phase::HelloSent => "HELLO_SENT",
            Phase::CertExchange => "CERT_EXCHANGE",
            Phase::KeyExchange => "KEY_EXCHANGE",
            Phase::DynamicCoupling => "DYNAMIC_COUPLING",
            Phase::BeaconEcho => "BEACON_ECHO",
            Phase::PufExchange => "PUF_EXCHANGE",
            Phase::Finishing => "FINISHING",
            Phase::Established => "ESTABLISHED",
            Phase::Aborted => "ABORTED",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Established | Phase::Aborted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensePurpose {
    /// Camera: static attributes against the peer certificate.
    Attributes,
    /// Camera: where the visually identified peer currently is.
    Sighting,
    /// LIDAR: something occupies the claimed pose.
    Coupling,
    /// LIDAR: range estimate for the PUF deadline.
    PufRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerKind {
    BeaconWindow,
    PufDeadline,
}

impl TimerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimerKind::BeaconWindow => "beacon",
            TimerKind::PufDeadline => "puf",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HandshakeConfig {
    pub variant: Variant,
    pub capture_radius: f64,
    pub theta_tol: f64,
    pub c_sim: f64,
    pub radio_latency: f64,
    pub beacon_window: f64,
    pub puf_slack: f64,
    /// Response latency assumed for every certified PUF.
    pub puf_response_latency: f64,
    /// Skip every verification check but still perform every action. Used
    /// for adversary-hosted sessions.
    pub lenient: bool,
}

impl HandshakeConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            capture_radius: 2.0,
            theta_tol: 0.01,
            c_sim: crate::channel::DEFAULT_C_SIM,
            radio_latency: 1e-3,
            beacon_window: 50e-3,
            puf_slack: 50e-6,
            puf_response_latency: crate::puf::DEFAULT_RESPONSE_LATENCY,
            lenient: false,
        }
    }

    /// Deadline for a PUF response after challenge emission at estimated
    /// range `d_est`: optical out, device latency, radio back, slack.
    pub fn puf_budget(&self, d_est: f64) -> f64 {
        self.puf_expected(d_est) + self.puf_slack
    }

    pub fn puf_expected(&self, d_est: f64) -> f64 {
        2.0 * d_est / self.c_sim + self.puf_response_latency + self.radio_latency
    }
}

#[derive(Debug, Clone)]
pub struct Credentials {
    pub id: VehicleId,
    pub signing: Option<KeyPair>,
    pub certificate: Option<Certificate>,
    pub ca_public: [u8; 32],
}

/// Per-step context supplied by the event loop.
#[derive(Debug, Clone, Copy)]
pub struct Env {
    pub now: f64,
    pub own_pose: Pose,
    /// Fresh randomness for nonces created during this step.
    pub fresh: [u8; 32],
}

#[derive(Debug, Clone)]
pub enum Input {
    Radio(Vec<u8>),
    Camera { purpose: SensePurpose, observation: AttributeObservation, sighting: Option<Pose> },
    Lidar { purpose: SensePurpose, result: Option<RangeBearing> },
    Optical(OpticalReceipt),
    OpticalFailed(OpticalError),
    PufEvaluated { challenge_id: u32, response: [u8; 32] },
    Timer(TimerKind),
}

#[derive(Debug, Clone)]
pub enum Action {
    SendRadio(HandshakeMessage),
    RequestCamera(SensePurpose),
    RequestLidar { purpose: SensePurpose, region: Pose },
    FireOptical { aimed_at: Pose, message: HandshakeMessage },
    EvaluatePuf(Challenge),
    SetTimer { kind: TimerKind, at: f64 },
    Established,
    Aborted(AbortReason),
}

/// One deadline-bound wait, kept for margin reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineRecord {
    pub kind: TimerKind,
    pub started_at: f64,
    pub deadline: f64,
    /// Honest-case arrival predicted from the range estimate.
    pub predicted: Option<f64>,
    pub met_at: Option<f64>,
}

impl DeadlineRecord {
    /// Ratio of allowed to consumed time (beacon) or of unconsumed slack to
    /// deviation from the prediction (PUF). `None` until met.
    pub fn margin(&self) -> Option<f64> {
        let met = self.met_at?;
        match (self.kind, self.predicted) {
            (TimerKind::PufDeadline, Some(p)) => {
                let dev = (met - p).abs().max(1e-12);
                Some((self.deadline - met) / dev)
            }
            _ => Some((self.deadline - self.started_at) / (met - self.started_at).max(1e-12)),
        }
    }
}
