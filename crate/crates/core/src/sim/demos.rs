//! Built-in scenarios, one attack and one defense per scheme level.

use crate::adversary::Property;
use crate::protocol::AbortReason;

use super::scenario::{load_scenario, CertKind, Power, Scenario};
use super::verdict::{AbortCause, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Attack(Property),
    Aborted(&'static [AbortReason]),
}

#[derive(Debug, Clone, Copy)]
pub struct Demo {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
    pub expected: Expected,
}

pub const DEMOS: [Demo; 6] = [
    Demo {
        name: "ps-baseline",
        summary: "V0: radio man-in-the-middle reads the session",
        source: include_str!("../../scenarios/ps-baseline.scn"),
        expected: Expected::Attack(Property::Secrecy),
    },
    Demo {
        name: "basic-defense",
        summary: "V1: certified attributes expose the man-in-the-middle",
        source: include_str!("../../scenarios/basic-defense.scn"),
        expected: Expected::Aborted(&[AbortReason::CertAttrMismatch, AbortReason::BadSignature]),
    },
    Demo {
        name: "twin-attack",
        summary: "V1: a look-alike vehicle with its own certificate",
        source: include_str!("../../scenarios/twin-attack.scn"),
        expected: Expected::Attack(Property::Authentication),
    },
    Demo {
        name: "laser-defense",
        summary: "V2: the laser coupling misses the twin",
        source: include_str!("../../scenarios/laser-defense.scn"),
        expected: Expected::Aborted(&[AbortReason::DynamicCouplingFailed, AbortReason::BeaconTimeout]),
    },
    Demo {
        name: "relay-attack",
        summary: "V2: a relay car forwards the laser to a remote accomplice",
        source: include_str!("../../scenarios/relay-attack.scn"),
        expected: Expected::Attack(Property::Authentication),
    },
    Demo {
        name: "puf-defense",
        summary: "V3: the PUF response arrives too late through the relay",
        source: include_str!("../../scenarios/puf-defense.scn"),
        expected: Expected::Aborted(&[AbortReason::TimingViolation]),
    },
];

pub fn find(name: &str) -> Option<&'static Demo> {
    DEMOS.iter().find(|d| d.name == name)
}

impl Demo {
    pub fn scenario(&self) -> Scenario {
        load_scenario(self.source).expect("built-in scenarios parse")
    }

    pub fn matches(&self, outcome: &Outcome) -> bool {
        match (self.expected, outcome) {
            (Expected::Attack(p), Outcome::AttackFound(q)) => p == *q,
            (Expected::Aborted(rs), Outcome::HandshakeAborted(AbortCause::Reason(r))) => rs.contains(r),
            _ => false,
        }
    }

    /// 0 for an expected defense, otherwise the outcome's own code.
    pub fn exit_code(&self, outcome: &Outcome) -> i32 {
        match self.expected {
            Expected::Aborted(_) if self.matches(outcome) => 0,
            _ => outcome.exit_code(),
        }
    }
}

/// The same geometry without an adversary and with every vehicle certified.
pub fn honest_counterpart(sc: &Scenario) -> Scenario {
    let mut h = sc.clone();
    h.adversary = None;
    for v in &mut h.vehicles {
        v.cert = CertKind::Valid;
    }
    h
}

/// An adversary that only listens.
pub fn passive_counterpart(sc: &Scenario) -> Scenario {
    let mut p = sc.clone();
    if let Some(a) = &mut p.adversary {
        a.power = Power::Passive;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_defense_exits_zero() {
        let d = find("puf-defense").unwrap();
        let timing = Outcome::HandshakeAborted(AbortCause::Reason(AbortReason::TimingViolation));
        assert_eq!(d.exit_code(&timing), 0);
        let other = Outcome::HandshakeAborted(AbortCause::Reason(AbortReason::BadCert));
        assert!(!d.matches(&other));
        assert_eq!(d.exit_code(&other), 3);
        assert_eq!(d.exit_code(&Outcome::HandshakeAborted(AbortCause::Incomplete)), 3);
        let v0 = find("ps-baseline").unwrap();
        assert!(v0.matches(&Outcome::AttackFound(Property::Secrecy)));
        assert!(!v0.matches(&Outcome::AttackFound(Property::Authentication)));
        assert_eq!(v0.exit_code(&Outcome::AttackFound(Property::Secrecy)), 2);
        assert!(find("nope").is_none());
    }

    #[test]
    fn counterparts() {
        let sc = find("twin-attack").unwrap().scenario();
        let h = honest_counterpart(&sc);
        assert!(h.adversary.is_none());
        assert!(h.vehicles.iter().all(|v| v.cert == CertKind::Valid));
        let p = passive_counterpart(&sc);
        assert_eq!(p.adversary.unwrap().power, Power::Passive);
    }
}
