use std::fmt;

use crate::world::VehicleId;

/// One adversary decision. `Deliver` is the default at every decision
/// point and is never recorded in an [`AttackTrace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdvAction {
    Deliver,
    Drop,
    Delay,
    /// Inject the j-th previously observed honest frame before this one.
    Replay(usize),
    SwapSender(VehicleId),
    /// Answer an initiator Hello from an adversary session on `host`,
    /// impersonating the addressee; optionally claim the addressee's pose
    /// and open a mirrored session towards the addressee.
    Divert { host: VehicleId, claim_victim_pose: bool, mirror: bool },
    /// Re-emit a pulse received at an owned vehicle towards `to`.
    RelayOptical { to: VehicleId },
    /// Flip one payload bit in flight.
    FlipBit(usize),
}

impl AdvAction {
    pub fn is_default(&self) -> bool {
        matches!(self, AdvAction::Deliver)
    }
}

impl fmt::Display for AdvAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdvAction::Deliver => f.write_str("deliver"),
            AdvAction::Drop => f.write_str("drop"),
            AdvAction::Delay => f.write_str("delay"),
            AdvAction::Replay(j) => write!(f, "replay({j})"),
            AdvAction::SwapSender(v) => write!(f, "swap_sender({v})"),
            AdvAction::Divert { host, claim_victim_pose, mirror } => {
                write!(f, "divert({host},claim:{},mirror:{})", *claim_victim_pose as u8, *mirror as u8)
            }
            AdvAction::RelayOptical { to } => write!(f, "relay_optical({to})"),
            AdvAction::FlipBit(b) => write!(f, "flip_bit({b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionKind {
    Radio { sender: VehicleId, claimed_sender: VehicleId, dest: VehicleId, msg: &'static str, initiator_hello: bool },
    Optical { at: VehicleId, msg: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionPoint {
    pub index: usize,
    pub time: f64,
    pub kind: DecisionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    Secrecy,
    Authentication,
}

impl Property {
    pub fn as_str(&self) -> &'static str {
        match self {
            Property::Secrecy => "SECRECY",
            Property::Authentication => "AUTHENTICATION",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedAction {
    pub decision: usize,
    pub time: f64,
    pub action: AdvAction,
}

/// Adversary actions that produced a property violation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub actions: Vec<PlannedAction>,
    pub property: Property,
    pub witness: String,
}

impl fmt::Display for AttackTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "violated: {}", self.property.as_str())?;
        for a in &self.actions {
            writeln!(f, "  {:.9} decision {}: {}", a.time, a.decision, a.action)?;
        }
        write!(f, "  witness: {}", self.witness)
    }
}
