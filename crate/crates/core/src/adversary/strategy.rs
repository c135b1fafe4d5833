//! Scripted attack strategies as decision rules. Every decision they take
//! is recorded, so a strategy run replays exactly as an explicit plan.

use crate::sim::scenario::{Scenario, StrategyKind};
use crate::world::VehicleId;

use super::actions::{AdvAction, DecisionKind, DecisionPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct Roles {
    pub initiator: VehicleId,
    pub target: VehicleId,
    pub host: VehicleId,
    pub relay: VehicleId,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StrategyError {
    #[error("strategy {0} needs an adversary section")]
    NoAdversary(&'static str),
    #[error("strategy {0} cannot infer role `{1}`")]
    MissingRole(&'static str, &'static str),
}

impl Roles {
    /// Fills unspecified roles from the script and ownership.
    pub fn resolve(sc: &Scenario, kind: StrategyKind) -> Result<Self, StrategyError> {
        let name = kind.as_str();
        let adv = sc.adversary.as_ref().ok_or(StrategyError::NoAdversary(name))?;
        let first_initiate = sc.script.iter().find_map(|d| match &d.kind {
            crate::sim::scenario::DirectiveKind::Initiate { peer } => Some((d.actor.clone(), peer.clone())),
            _ => None,
        });
        let initiator = adv
            .initiator
            .clone()
            .or_else(|| first_initiate.as_ref().map(|f| f.0.clone()))
            .ok_or(StrategyError::MissingRole(name, "initiator"))?;
        let target = adv
            .target
            .clone()
            .or_else(|| first_initiate.as_ref().map(|f| f.1.clone()))
            .ok_or(StrategyError::MissingRole(name, "target"))?;
        let host = adv
            .host
            .clone()
            .or_else(|| adv.owns.iter().find(|v| **v != target).cloned())
            .or_else(|| adv.owns.first().cloned())
            .ok_or(StrategyError::MissingRole(name, "host"))?;
        let relay = adv.relay.clone().unwrap_or_else(|| target.clone());
        Ok(Self { initiator, target, host, relay })
    }
}

#[derive(Debug, Clone)]
pub struct StrategyRules {
    pub kind: StrategyKind,
    pub roles: Roles,
    diverted: bool,
}

impl StrategyRules {
    pub fn new(kind: StrategyKind, roles: Roles) -> Self {
        Self { kind, roles, diverted: false }
    }

    pub fn decide(&mut self, d: &DecisionPoint) -> AdvAction {
        let r = &self.roles;
        match &d.kind {
            DecisionKind::Radio { claimed_sender, dest, initiator_hello: true, .. }
                if !self.diverted && *claimed_sender == r.initiator && *dest == r.target =>
            {
                let action = match self.kind {
                    StrategyKind::MitmRelay => {
                        AdvAction::Divert { host: r.host.clone(), claim_victim_pose: false, mirror: true }
                    }
                    StrategyKind::Twin | StrategyKind::OpticalRelay => {
                        AdvAction::Divert { host: r.host.clone(), claim_victim_pose: true, mirror: false }
                    }
                    StrategyKind::OpticalRelaySelf => {
                        AdvAction::Divert { host: r.relay.clone(), claim_victim_pose: true, mirror: false }
                    }
                    StrategyKind::None | StrategyKind::Search => AdvAction::Deliver,
                };
                self.diverted = !action.is_default();
                action
            }
            DecisionKind::Optical { at, .. }
                if self.kind == StrategyKind::OpticalRelay && *at == r.relay && r.relay != r.host =>
            {
                AdvAction::RelayOptical { to: r.host.clone() }
            }
            _ => AdvAction::Deliver,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::demos;

    #[test]
    fn roles_come_from_script_and_ownership() {
        let sc = demos::find("ps-baseline").unwrap().scenario();
        let r = Roles::resolve(&sc, StrategyKind::MitmRelay).unwrap();
        assert_eq!((r.initiator.as_str(), r.target.as_str(), r.host.as_str()), ("v1", "v2", "v3"));
        assert_eq!(r.relay, r.target);
    }

    #[test]
    fn missing_adversary_or_initiator() {
        let mut sc = demos::find("ps-baseline").unwrap().scenario();
        sc.script.clear();
        assert_eq!(Roles::resolve(&sc, StrategyKind::Twin), Err(StrategyError::MissingRole("twin", "initiator")));
        sc.adversary = None;
        assert_eq!(Roles::resolve(&sc, StrategyKind::Twin), Err(StrategyError::NoAdversary("twin")));
    }

    #[test]
    fn diverts_only_the_first_hello() {
        let sc = demos::find("ps-baseline").unwrap().scenario();
        let mut rules = StrategyRules::new(StrategyKind::MitmRelay, Roles::resolve(&sc, StrategyKind::MitmRelay).unwrap());
        let hello = DecisionPoint {
            index: 0,
            time: 0.0,
            kind: DecisionKind::Radio {
                sender: "v1".into(),
                claimed_sender: "v1".into(),
                dest: "v2".into(),
                msg: "Hello",
                initiator_hello: true,
            },
        };
        assert!(matches!(rules.decide(&hello), AdvAction::Divert { mirror: true, .. }));
        assert_eq!(rules.decide(&hello), AdvAction::Deliver);
    }
}
