use thiserror::Error;

use crate::wire::Writer;

use super::events::Phase;
use super::handshake::HandshakeState;
use super::message::{HandshakeMessage, Role};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("session is not established")]
    NotEstablished,
    #[error("record is not application data")]
    NotAppData,
    #[error("unexpected sequence number {got}, expected {expected}")]
    Sequence { got: u64, expected: u64 },
    #[error("record failed authentication")]
    Tampered,
}

fn aad(writer: Role, seq: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(b"v2v-app").u8(writer as u8).u64(seq);
    w.finish()
}

impl HandshakeState {
    /// Encrypts one application record. The initiator writes under the
    /// client key, the responder under the server key.
    pub fn session_send(&mut self, plaintext: &[u8]) -> Result<HandshakeMessage, SessionError> {
        if self.phase() != Phase::Established {
            return Err(SessionError::NotEstablished);
        }
        let keys = self.session_keys().ok_or(SessionError::NotEstablished)?;
        let key = match self.role() {
            Role::Initiator => keys.client_write_key,
            Role::Responder => keys.server_write_key,
        };
        let seq = self.send_seq;
        let ciphertext = self.provider().seal(&key, seq, &aad(self.role(), seq), plaintext);
        self.send_seq += 1;
        Ok(HandshakeMessage::AppData { seq, ciphertext })
    }

    pub fn session_recv(&mut self, record: &HandshakeMessage) -> Result<Vec<u8>, SessionError> {
        let keys = self.session_keys().ok_or(SessionError::NotEstablished)?;
        let HandshakeMessage::AppData { seq, ciphertext } = record else { return Err(SessionError::NotAppData) };
        if *seq != self.recv_seq {
            return Err(SessionError::Sequence { got: *seq, expected: self.recv_seq });
        }
        let writer = self.role().peer();
        let key = match writer {
            Role::Initiator => keys.client_write_key,
            Role::Responder => keys.server_write_key,
        };
        let pt = self.provider().open(&key, *seq, &aad(writer, *seq), ciphertext).map_err(|_| SessionError::Tampered)?;
        self.recv_seq += 1;
        Ok(pt)
    }
}

/// Opens an application record with an explicit key, as an outside party
/// holding session keys would.
pub fn open_record(
    provider: &dyn crate::crypto::Provider,
    key: &[u8; 32],
    writer: Role,
    record: &HandshakeMessage,
) -> Option<Vec<u8>> {
    let HandshakeMessage::AppData { seq, ciphertext } = record else { return None };
    provider.open(key, *seq, &aad(writer, *seq), ciphertext).ok()
}
