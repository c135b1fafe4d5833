//! Handshake state machines for the four protocol variants, plus the
//! post-handshake record layer.

mod events;
mod handshake;
mod message;
mod session;
mod transcript;

pub use events::*;
pub use handshake::{HandshakeError, HandshakeState};
pub use message::{encode_pose, HandshakeMessage, Role, Stage, Variant};
pub use session::{open_record, SessionError};
pub use transcript::Transcript;
