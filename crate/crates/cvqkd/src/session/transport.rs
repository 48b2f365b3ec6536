//! Newline-delimited JSON wire protocol and the transports that carry it.
//!
//! The message schema is flat and closed: parsing rejects unknown fields and
//! malformed shapes, so the classical conversation has a provably closed
//! alphabet for the leak audit in `checks`.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::gaussian::QuadraturePhase;
use crate::protocol::Announcement;
use crate::{Error, Result};

/// Version stamped on every wire message.
pub const WIRE_VERSION: u32 = 1;

/// Message kinds, in per-round conversation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MessageKind {
    /// Sender to receiver: a signal pulse is on its way.
    Pulse,
    /// Receiver to sender: the quadrature phase that was measured.
    Basis,
    /// Sender to receiver: the sifting answer for the round.
    Announce,
    /// Either direction: no more rounds.
    Done,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MessageKind::Pulse => "PULSE",
            MessageKind::Basis => "BASIS",
            MessageKind::Announce => "ANNOUNCE",
            MessageKind::Done => "DONE",
        };
        f.write_str(name)
    }
}

/// One wire message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMessage {
    pub v: u32,
    pub kind: MessageKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_b: Option<QuadraturePhase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wrong_basis: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_set: Option<u32>,
}

impl RawMessage {
    pub fn pulse(round_id: u64) -> Self {
        Self {
            v: WIRE_VERSION,
            kind: MessageKind::Pulse,
            round_id: Some(round_id),
            phi_b: None,
            wrong_basis: None,
            pair_set: None,
        }
    }

    pub fn basis(round_id: u64, phi_b: QuadraturePhase) -> Self {
        Self {
            v: WIRE_VERSION,
            kind: MessageKind::Basis,
            round_id: Some(round_id),
            phi_b: Some(phi_b),
            wrong_basis: None,
            pair_set: None,
        }
    }

    pub fn announce(round_id: u64, announcement: Announcement) -> Self {
        Self {
            v: WIRE_VERSION,
            kind: MessageKind::Announce,
            round_id: Some(round_id),
            phi_b: None,
            wrong_basis: Some(announcement.wrong_basis),
            pair_set: announcement.pair_set,
        }
    }

    pub fn done() -> Self {
        Self {
            v: WIRE_VERSION,
            kind: MessageKind::Done,
            round_id: None,
            phi_b: None,
            wrong_basis: None,
            pair_set: None,
        }
    }

    /// Field-presence rules for each kind; parsing and auditing share them.
    pub fn validate_shape(&self) -> Result<()> {
        if self.v != WIRE_VERSION {
            return Err(Error::WireVersion {
                got: self.v,
                expected: WIRE_VERSION,
            });
        }
        let ok = match self.kind {
            MessageKind::Pulse => {
                self.round_id.is_some()
                    && self.phi_b.is_none()
                    && self.wrong_basis.is_none()
                    && self.pair_set.is_none()
            }
            MessageKind::Basis => {
                self.round_id.is_some()
                    && self.phi_b.is_some()
                    && self.wrong_basis.is_none()
                    && self.pair_set.is_none()
            }
            MessageKind::Announce => {
                self.round_id.is_some()
                    && self.phi_b.is_none()
                    && self.wrong_basis.is_some()
                    && !(self.wrong_basis == Some(true) && self.pair_set.is_some())
            }
            MessageKind::Done => {
                self.round_id.is_none()
                    && self.phi_b.is_none()
                    && self.wrong_basis.is_none()
                    && self.pair_set.is_none()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::WireFormat(format!(
                "{} carries the wrong fields: {}",
                self.kind,
                self.encode()
            )))
        }
    }

    /// Strict parse of one wire line: schema, version, and shape.
    pub fn parse(line: &str) -> Result<Self> {
        let message: RawMessage = serde_json::from_str(line)
            .map_err(|e| Error::WireFormat(format!("malformed message {line:?}: {e}")))?;
        message.validate_shape()?;
        Ok(message)
    }

    /// Canonical single-line encoding.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

/// A reliable ordered duplex pipe carrying one JSON message per line.
pub trait Transport {
    fn send(&mut self, message: &RawMessage) -> Result<()>;
    fn recv(&mut self) -> Result<RawMessage>;
}

/// In-process transport endpoint: two line queues shared with its peer.
pub struct InMemoryEndpoint {
    outgoing: Rc<RefCell<VecDeque<String>>>,
    incoming: Rc<RefCell<VecDeque<String>>>,
}

/// Connected pair of in-memory endpoints.
pub fn in_memory_pair() -> (InMemoryEndpoint, InMemoryEndpoint) {
    let first_to_second = Rc::new(RefCell::new(VecDeque::new()));
    let second_to_first = Rc::new(RefCell::new(VecDeque::new()));
    (
        InMemoryEndpoint {
            outgoing: Rc::clone(&first_to_second),
            incoming: Rc::clone(&second_to_first),
        },
        InMemoryEndpoint {
            outgoing: second_to_first,
            incoming: first_to_second,
        },
    )
}

impl InMemoryEndpoint {
    /// Pushes a raw line into this endpoint's receive queue, bypassing
    /// message construction, so tests can exercise malformed input.
    pub fn inject_incoming(&self, line: &str) {
        self.incoming.borrow_mut().push_back(line.to_string());
    }
}

impl Transport for InMemoryEndpoint {
    fn send(&mut self, message: &RawMessage) -> Result<()> {
        self.outgoing.borrow_mut().push_back(message.encode());
        Ok(())
    }

    fn recv(&mut self) -> Result<RawMessage> {
        let line = self.incoming.borrow_mut().pop_front().ok_or_else(|| {
            Error::MessageOrder("receive attempted with no message pending".into())
        })?;
        RawMessage::parse(&line)
    }
}

/// TCP endpoint with line framing.
pub struct SocketEndpoint {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl SocketEndpoint {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self {
            reader,
            writer: stream,
        })
    }
}

/// Connected endpoint pair over an ephemeral loopback TCP port.
pub fn tcp_loopback_pair() -> Result<(SocketEndpoint, SocketEndpoint)> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let client = TcpStream::connect(listener.local_addr()?)?;
    let (server, _) = listener.accept()?;
    Ok((SocketEndpoint::new(client)?, SocketEndpoint::new(server)?))
}

impl Transport for SocketEndpoint {
    fn send(&mut self, message: &RawMessage) -> Result<()> {
        let mut line = message.encode();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<RawMessage> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::WireFormat(
                "connection closed mid-conversation".into(),
            ));
        }
        RawMessage::parse(line.trim_end_matches('\n'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_round_trip_through_text() {
        let phi = QuadraturePhase::from_pi_fraction(1, 2);
        for message in [
            RawMessage::pulse(7),
            RawMessage::basis(7, phi),
            RawMessage::announce(
                7,
                Announcement {
                    wrong_basis: false,
                    pair_set: Some(1),
                },
            ),
            RawMessage::done(),
        ] {
            let line = message.encode();
            assert_eq!(RawMessage::parse(&line).unwrap(), message);
        }
    }

    #[test]
    fn parse_rejects_bad_shapes() {
        // Unknown field.
        assert!(RawMessage::parse(r#"{"v":1,"kind":"PULSE","round_id":0,"state":3}"#).is_err());
        // Wrong version.
        let err = RawMessage::parse(r#"{"v":2,"kind":"PULSE","round_id":0}"#).unwrap_err();
        assert!(matches!(err, Error::WireVersion { got: 2, .. }));
        // Missing required field.
        assert!(RawMessage::parse(r#"{"v":1,"kind":"BASIS","round_id":0}"#).is_err());
        // Field that does not belong to the kind.
        assert!(RawMessage::parse(r#"{"v":1,"kind":"PULSE","round_id":0,"pair_set":1}"#).is_err());
        // Discarded round naming a pair.
        assert!(RawMessage::parse(
            r#"{"v":1,"kind":"ANNOUNCE","round_id":0,"wrong_basis":true,"pair_set":0}"#
        )
        .is_err());
        // Non-finite phase.
        assert!(RawMessage::parse(r#"{"v":1,"kind":"BASIS","round_id":0,"phi_b":null}"#).is_err());
        // Not JSON at all.
        assert!(RawMessage::parse("BASIS 0").is_err());
    }

    #[test]
    fn in_memory_pair_delivers_in_order() {
        let (mut a, mut b) = in_memory_pair();
        a.send(&RawMessage::pulse(0)).unwrap();
        a.send(&RawMessage::pulse(1)).unwrap();
        assert_eq!(b.recv().unwrap(), RawMessage::pulse(0));
        b.send(&RawMessage::done()).unwrap();
        assert_eq!(b.recv().unwrap(), RawMessage::pulse(1));
        assert_eq!(a.recv().unwrap(), RawMessage::done());
        let err = a.recv().unwrap_err();
        assert!(matches!(err, Error::MessageOrder(_)));
    }

    #[test]
    fn sockets_deliver_the_same_bytes() {
        let (mut a, mut b) = tcp_loopback_pair().unwrap();
        let phi = QuadraturePhase::from_pi_fraction(-5, 6);
        a.send(&RawMessage::basis(3, phi)).unwrap();
        let got = b.recv().unwrap();
        assert_eq!(got, RawMessage::basis(3, phi));
        b.send(&RawMessage::done()).unwrap();
        assert_eq!(a.recv().unwrap(), RawMessage::done());
    }
}
