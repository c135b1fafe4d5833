//! Simulation framework and protocol library for vehicle-to-vehicle
//! authentication: certificates binding keys to sense-able attributes, a
//! laser side channel coupling dynamic position to the radio session, and
//! optical PUF challenges that defeat relaying, together with the attacks
//! that motivate each step.

pub mod adversary;
pub mod channel;
pub mod crypto;
pub mod identity;
pub mod protocol;
pub mod puf;
pub mod sim;
pub mod wire;
pub mod world;
