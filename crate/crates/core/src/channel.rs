//! Radio broadcast and directional optical link.
//!
//! Radio frames carry unauthenticated sender metadata and are routed by the
//! adversary controller in the simulator. Optical pulses can only come into
//! existence through [`emit`], which stamps the physical emitter pose; there
//! is no other constructor, so origin pose cannot be forged.

use crate::world::{Pose, VehicleId, WorldState};

pub const DEFAULT_C_SIM: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub c_sim: f64,
    pub radio_range: f64,
    pub radio_latency: f64,
    pub beam_radius: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { c_sim: DEFAULT_C_SIM, radio_range: 300.0, radio_latency: 1e-3, beam_radius: 1.0 }
    }
}

impl ChannelConfig {
    /// Radio delivery delay over `distance`: fixed stack latency plus
    /// propagation.
    pub fn radio_delay(&self, distance: f64) -> f64 {
        self.radio_latency + distance / self.c_sim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioFrame {
    /// Unauthenticated; the adversary may set it to anything.
    pub claimed_sender: VehicleId,
    /// Unauthenticated addressing hint.
    pub dest: VehicleId,
    pub payload: Vec<u8>,
    pub sent_at: f64,
}

/// Honest broadcast reach: every other vehicle within radio range, with its
/// arrival time.
pub fn radio_recipients(world: &WorldState, cfg: &ChannelConfig, sender: &VehicleId, now: f64) -> Vec<(VehicleId, f64)> {
    let sp = world.poses[sender];
    world
        .poses
        .iter()
        .filter(|(id, _)| *id != sender)
        .map(|(id, p)| (id, sp.distance(p)))
        .filter(|(_, d)| *d <= cfg.radio_range)
        .map(|(id, d)| (id.clone(), now + cfg.radio_delay(d)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalPulse {
    emitter: VehicleId,
    true_origin_pose: Pose,
    aimed_at: Pose,
    payload: Vec<u8>,
    emitted_at: f64,
}

impl OpticalPulse {
    pub fn emitter(&self) -> &VehicleId {
        &self.emitter
    }

    pub fn true_origin_pose(&self) -> &Pose {
        &self.true_origin_pose
    }

    pub fn aimed_at(&self) -> &Pose {
        &self.aimed_at
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn emitted_at(&self) -> f64 {
        self.emitted_at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalReceipt {
    pub payload: Vec<u8>,
    /// Relative to the receiver's heading.
    pub arrival_bearing: f64,
    pub arrived_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledPulse {
    pub pulse: OpticalPulse,
    pub recipient: VehicleId,
    pub receipt: OpticalReceipt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticalError {
    BeamMiss,
    NoLos,
}

impl OpticalError {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpticalError::BeamMiss => "BEAM_MISS",
            OpticalError::NoLos => "NO_LOS",
        }
    }
}

/// Fires a pulse from `emitter`'s current pose at `aimed_at`. Only the
/// single vehicle in the beam receives it.
pub fn emit(
    world: &WorldState,
    cfg: &ChannelConfig,
    emitter: &VehicleId,
    aimed_at: Pose,
    payload: Vec<u8>,
) -> Result<ScheduledPulse, OpticalError> {
    let origin = world.poses[emitter];
    let recipient = world
        .vehicle_near(&aimed_at, cfg.beam_radius, Some(emitter))
        .ok_or(OpticalError::BeamMiss)?
        .clone();
    let target = world.poses[&recipient];
    if !world.clear_path(&origin, &target) {
        return Err(OpticalError::NoLos);
    }
    let emitted_at = world.clock;
    let receipt = OpticalReceipt {
        payload: payload.clone(),
        arrival_bearing: target.relative_bearing(&origin),
        arrived_at: emitted_at + origin.distance(&target) / cfg.c_sim,
    };
    let pulse = OpticalPulse { emitter: emitter.clone(), true_origin_pose: origin, aimed_at, payload, emitted_at };
    Ok(ScheduledPulse { pulse, recipient, receipt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Segment;

    fn world() -> WorldState {
        let mut w = WorldState::new();
        w.poses.insert("a".into(), Pose::at(0.0, 0.0));
        w.poses.insert("b".into(), Pose::at(120.0, 0.0));
        w.poses.insert("adv".into(), Pose::at(60.0, 3.0));
        w
    }

    #[test]
    fn aimed_pulse_reaches_only_target() {
        let w = world();
        let cfg = ChannelConfig::default();
        let s = emit(&w, &cfg, &"a".into(), Pose::at(120.0, 0.0), b"x".to_vec()).unwrap();
        assert_eq!(s.recipient, "b".into());
        assert_eq!(s.receipt.arrived_at, 120.0 / cfg.c_sim);
        assert!((s.receipt.arrival_bearing.abs() - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(s.pulse.true_origin_pose(), &Pose::at(0.0, 0.0));
    }

    #[test]
    fn miss_and_obstruction() {
        let mut w = world();
        let cfg = ChannelConfig::default();
        assert_eq!(emit(&w, &cfg, &"a".into(), Pose::at(50.0, 50.0), vec![]), Err(OpticalError::BeamMiss));
        w.obstructions.push(Segment { a: (100.0, -5.0), b: (100.0, 5.0) });
        assert_eq!(emit(&w, &cfg, &"a".into(), Pose::at(120.0, 0.0), vec![]), Err(OpticalError::NoLos));
    }

    #[test]
    fn radio_range_filter() {
        let mut w = world();
        w.poses.insert("far".into(), Pose::at(1000.0, 0.0));
        let cfg = ChannelConfig::default();
        let r = radio_recipients(&w, &cfg, &"a".into(), 0.0);
        let ids: Vec<_> = r.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["adv", "b"]);
        assert_eq!(r[1].1, cfg.radio_latency + 120.0 / cfg.c_sim);
    }
}
