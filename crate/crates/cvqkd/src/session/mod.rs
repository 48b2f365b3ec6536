//! Monte Carlo protocol sessions: sender and receiver state machines
//! exchanging versioned JSON messages over a transport, with the lossy
//! channel and the eavesdropper's beam-splitter tap simulated in between.
//!
//! The runner owns the physics: each round the sender's coherent state is
//! split into a √η part that reaches the receiver's homodyne detector and a
//! √(1-η) part recorded as the eavesdropper's keepsake. Everything classical
//! travels through the transport as wire messages; the sifted keys and the
//! statistics are assembled from the two machines' own records.

mod checks;
mod transport;

pub use checks::{
    eve_empirical_check, transcript_check, transcript_check_lines, EveCheckGroup, EveCheckReport,
    TranscriptReport,
};
pub use transport::{
    in_memory_pair, tcp_loopback_pair, InMemoryEndpoint, MessageKind, RawMessage, SocketEndpoint,
    Transport, WIRE_VERSION,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gaussian::{sample_quadrature, CoherentAmplitude, QuadraturePhase, QuadratureValue};
use crate::keygain::PostselectionThreshold;
use crate::protocol::{AnnouncementStyle, Classification, ProtocolId, ProtocolSpec};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Substream label for the sender's uniform state choice.
pub const SENDER_STATE_STREAM: u64 = 1;
/// Substream label for the receiver's uniform phase choice.
pub const RECEIVER_PHASE_STREAM: u64 = 2;
/// Substream label for the homodyne vacuum noise. Disjoint from the choice
/// streams so sessions that differ only in protocol share channel noise.
pub const CHANNEL_NOISE_STREAM: u64 = 3;

/// Which transport carries the classical conversation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    /// In-process queues.
    #[default]
    InMemory,
    /// Loopback TCP on an ephemeral port.
    Socket,
}

/// What the runner retains beyond aggregate statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOptions {
    /// Keep every wire message in conversation order.
    pub wire: bool,
    /// Keep per-round records: the private rows and the receiver's view.
    pub rounds: bool,
    /// Keep the eavesdropper's tapped amplitude for every round.
    pub eve_tap: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            wire: true,
            rounds: true,
            eve_tap: true,
        }
    }
}

impl RecordOptions {
    /// Aggregate statistics only; constant memory per session.
    pub const NONE: Self = Self {
        wire: false,
        rounds: false,
        eve_tap: false,
    };
}

/// Complete description of one session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionConfig {
    pub protocol: ProtocolId,
    pub alpha: f64,
    pub eta: f64,
    pub x0: PostselectionThreshold,
    pub rounds: u64,
    pub seed: u64,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default)]
    pub record: RecordOptions,
}

/// One simulated signal round, as the sender's private log sees it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignalRound {
    pub round_id: u64,
    pub alice_state_index: usize,
    pub bob_phase: QuadraturePhase,
    pub outcome: QuadratureValue,
    pub verdict: Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alice_bit: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bob_bit: Option<u8>,
    pub kept: bool,
}

/// The same round restricted to what the receiver, and therefore the wire,
/// knows: no state index, no sender bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReceiverRound {
    pub round_id: u64,
    pub bob_phase: QuadraturePhase,
    pub outcome: QuadratureValue,
    pub wrong_basis: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_set: Option<u32>,
    pub kept: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bob_bit: Option<u8>,
}

/// The eavesdropper's bookkeeping for one round: which coherent state the
/// beam splitter handed her, plus the classical context she also observes.
/// The hidden bit is retained for validation against the analytic
/// ensembles, not as something the tap reveals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EveTapRecord {
    pub round_id: u64,
    pub amplitude: CoherentAmplitude,
    pub bob_phase: QuadraturePhase,
    pub wrong_basis: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_set: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alice_bit: Option<u8>,
}

/// Aggregate session counts and ratios.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SessionStats {
    pub total: u64,
    pub correct_basis: u64,
    pub kept: u64,
    /// Disagreements between the two sifted keys.
    pub mismatches: u64,
    pub empirical_efficiency: f64,
    /// Disagreement rate over kept rounds; 0 when nothing was kept.
    pub empirical_ber_kept: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eve_tap: Vec<EveTapRecord>,
}

/// Everything a finished session produced.
#[derive(Clone, Debug)]
pub struct SessionOutput {
    pub config: SessionConfig,
    pub alice_key: Vec<u8>,
    pub bob_key: Vec<u8>,
    pub stats: SessionStats,
    pub rounds: Vec<SignalRound>,
    pub receiver_rounds: Vec<ReceiverRound>,
    pub wire: Vec<RawMessage>,
}

/// A session that died mid-conversation, with whatever statistics the
/// completed rounds accumulated.
#[derive(Debug)]
pub struct SessionAbort {
    pub error: Error,
    pub rounds_completed: u64,
    pub partial: SessionStats,
}

impl fmt::Display for SessionAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "session aborted after {} rounds: {}",
            self.rounds_completed, self.error
        )
    }
}

impl std::error::Error for SessionAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type SessionResult = std::result::Result<SessionOutput, Box<SessionAbort>>;

/// Runs a session over the transport named in the config.
pub fn run_session(config: &SessionConfig) -> SessionResult {
    match config.transport {
        TransportKind::InMemory => {
            let (sender_io, receiver_io) = in_memory_pair();
            run_session_over(config, sender_io, receiver_io)
        }
        TransportKind::Socket => {
            let (sender_io, receiver_io) = tcp_loopback_pair().map_err(|error| {
                Box::new(SessionAbort {
                    error,
                    rounds_completed: 0,
                    partial: SessionStats::default(),
                })
            })?;
            run_session_over(config, sender_io, receiver_io)
        }
    }
}

/// Runs a session over caller-supplied endpoints. The conversation per
/// round is PULSE, BASIS, ANNOUNCE, strictly alternating; two DONE messages
/// close the session.
pub fn run_session_over<S: Transport, R: Transport>(
    config: &SessionConfig,
    mut sender_io: S,
    mut receiver_io: R,
) -> SessionResult {
    let mut acc = Accumulator::new(config.record);
    match drive(config, &mut sender_io, &mut receiver_io, &mut acc) {
        Ok(()) => Ok(acc.finish(config)),
        Err(error) => Err(Box::new(acc.abort(error))),
    }
}

fn drive<S: Transport, R: Transport>(
    config: &SessionConfig,
    sender_io: &mut S,
    receiver_io: &mut R,
    acc: &mut Accumulator,
) -> Result<()> {
    if config.rounds == 0 {
        return Err(Error::OutOfDomain {
            context: "session rounds",
            message: "a session needs at least one round".into(),
        });
    }
    if !config.eta.is_finite() || config.eta <= 0.0 || config.eta > 1.0 {
        return Err(Error::OutOfDomain {
            context: "session transmission",
            message: format!("eta = {} must lie in (0, 1]", config.eta),
        });
    }
    let spec = ProtocolSpec::new(config.protocol, config.alpha)?;

    let root = RngStream::from_seed(config.seed);
    let mut sender = Sender {
        spec: &spec,
        rng: root.substream(SENDER_STATE_STREAM),
        next_round: 0,
        pending_state: None,
    };
    let mut receiver = Receiver {
        spec: &spec,
        phase_rng: root.substream(RECEIVER_PHASE_STREAM),
        noise_rng: root.substream(CHANNEL_NOISE_STREAM),
        x0: config.x0,
        next_round: 0,
        pending: None,
    };
    let pass_scale = config.eta.sqrt();
    let tap_scale = (1.0 - config.eta).sqrt();

    for round in 0..config.rounds {
        let (state_index, pulse) = sender.emit_pulse();
        sender_io.send(&pulse)?;
        let pulse_seen = receiver_io.recv()?;
        acc.log_wire(&pulse_seen);

        // The quantum channel: the beam splitter taps the pulse in flight.
        let state = spec.states()[state_index];
        let received = state.scaled(pass_scale);
        let tapped = state.scaled(tap_scale);

        let basis = receiver.on_pulse(&pulse_seen, received)?;
        receiver_io.send(&basis)?;
        let basis_seen = sender_io.recv()?;
        acc.log_wire(&basis_seen);

        let (phase_index, announce) = sender.on_basis(&basis_seen)?;
        sender_io.send(&announce)?;
        let announce_seen = receiver_io.recv()?;
        acc.log_wire(&announce_seen);

        let view = receiver.on_announce(&announce_seen)?;
        let verdict = spec.classification(state_index, phase_index)?;
        acc.record_round(round, state_index, verdict, tapped, view);
    }

    sender_io.send(&RawMessage::done())?;
    let done_seen = receiver_io.recv()?;
    expect_done(&done_seen)?;
    acc.log_wire(&done_seen);
    receiver_io.send(&RawMessage::done())?;
    let done_back = sender_io.recv()?;
    expect_done(&done_back)?;
    acc.log_wire(&done_back);
    Ok(())
}

fn expect_done(message: &RawMessage) -> Result<()> {
    if message.kind != MessageKind::Done {
        return Err(Error::MessageOrder(format!(
            "expected DONE, got {}",
            message.encode()
        )));
    }
    Ok(())
}

fn expect_kind_and_round(message: &RawMessage, kind: MessageKind, round: u64) -> Result<()> {
    if message.kind != kind || message.round_id != Some(round) {
        return Err(Error::MessageOrder(format!(
            "expected {kind} for round {round}, got {}",
            message.encode()
        )));
    }
    Ok(())
}

struct Sender<'a> {
    spec: &'a ProtocolSpec,
    rng: RngStream,
    next_round: u64,
    pending_state: Option<usize>,
}

impl Sender<'_> {
    fn emit_pulse(&mut self) -> (usize, RawMessage) {
        let index = self.rng.gen_range(0..self.spec.states().len());
        self.pending_state = Some(index);
        (index, RawMessage::pulse(self.next_round))
    }

    fn on_basis(&mut self, message: &RawMessage) -> Result<(usize, RawMessage)> {
        expect_kind_and_round(message, MessageKind::Basis, self.next_round)?;
        let state = self.pending_state.take().ok_or_else(|| {
            Error::MessageOrder("basis received with no pulse outstanding".into())
        })?;
        let phi = message.phi_b.expect("shape-validated basis carries a phase");
        let phase = self.spec.phase_index(phi)?;
        let announcement = self.spec.announcement(state, phase)?;
        let reply = RawMessage::announce(self.next_round, announcement);
        self.next_round += 1;
        Ok((phase, reply))
    }
}

struct Receiver<'a> {
    spec: &'a ProtocolSpec,
    phase_rng: RngStream,
    noise_rng: RngStream,
    x0: PostselectionThreshold,
    next_round: u64,
    pending: Option<(QuadraturePhase, QuadratureValue)>,
}

impl Receiver<'_> {
    fn on_pulse(&mut self, message: &RawMessage, received: CoherentAmplitude) -> Result<RawMessage> {
        expect_kind_and_round(message, MessageKind::Pulse, self.next_round)?;
        let phases = self.spec.phases();
        let phi = phases[self.phase_rng.gen_range(0..phases.len())];
        let outcome = sample_quadrature(&mut self.noise_rng, received, phi);
        self.pending = Some((phi, outcome));
        Ok(RawMessage::basis(self.next_round, phi))
    }

    fn on_announce(&mut self, message: &RawMessage) -> Result<ReceiverRound> {
        expect_kind_and_round(message, MessageKind::Announce, self.next_round)?;
        let (phi, outcome) = self.pending.take().ok_or_else(|| {
            Error::MessageOrder("announcement received with no basis outstanding".into())
        })?;
        let wrong_basis = message
            .wrong_basis
            .expect("shape-validated announcement carries the flag");
        match self.spec.style() {
            AnnouncementStyle::PairSet => {
                if !wrong_basis {
                    let Some(pair) = message.pair_set else {
                        return Err(Error::MissingPairSet);
                    };
                    let count = self.spec.pair_count(self.spec.phase_index(phi)?)?;
                    if pair as usize >= count {
                        return Err(Error::WireFormat(format!(
                            "round {}: pair id {pair} out of range ({count} pairs)",
                            self.next_round
                        )));
                    }
                }
            }
            _ => {
                if message.pair_set.is_some() {
                    return Err(Error::WireFormat(format!(
                        "round {}: pair set announced by a protocol whose wire carries only \
                         the sift flag",
                        self.next_round
                    )));
                }
            }
        }
        let kept = !wrong_basis && self.x0.keeps(outcome);
        let bob_bit = kept.then(|| u8::from(outcome.value() >= 0.0));
        let view = ReceiverRound {
            round_id: self.next_round,
            bob_phase: phi,
            outcome,
            wrong_basis,
            pair_set: message.pair_set,
            kept,
            bob_bit,
        };
        self.next_round += 1;
        Ok(view)
    }
}

struct Accumulator {
    record: RecordOptions,
    total: u64,
    correct_basis: u64,
    kept: u64,
    mismatches: u64,
    alice_key: Vec<u8>,
    bob_key: Vec<u8>,
    rounds: Vec<SignalRound>,
    receiver_rounds: Vec<ReceiverRound>,
    wire: Vec<RawMessage>,
    eve: Vec<EveTapRecord>,
}

impl Accumulator {
    fn new(record: RecordOptions) -> Self {
        Self {
            record,
            total: 0,
            correct_basis: 0,
            kept: 0,
            mismatches: 0,
            alice_key: Vec::new(),
            bob_key: Vec::new(),
            rounds: Vec::new(),
            receiver_rounds: Vec::new(),
            wire: Vec::new(),
            eve: Vec::new(),
        }
    }

    fn log_wire(&mut self, message: &RawMessage) {
        if self.record.wire {
            self.wire.push(message.clone());
        }
    }

    fn record_round(
        &mut self,
        round_id: u64,
        state_index: usize,
        verdict: Classification,
        tapped: CoherentAmplitude,
        view: ReceiverRound,
    ) {
        debug_assert_eq!(verdict.is_kept(), !view.wrong_basis);
        self.total += 1;
        let alice_bit = verdict.bit();
        if !view.wrong_basis {
            self.correct_basis += 1;
        }
        if view.kept {
            self.kept += 1;
            let a = alice_bit.expect("kept rounds come from encoded cells");
            let b = view.bob_bit.expect("kept rounds carry the receiver's bit");
            self.alice_key.push(a);
            self.bob_key.push(b);
            if a != b {
                self.mismatches += 1;
            }
        }
        if self.record.eve_tap {
            self.eve.push(EveTapRecord {
                round_id,
                amplitude: tapped,
                bob_phase: view.bob_phase,
                wrong_basis: view.wrong_basis,
                pair_set: view.pair_set,
                alice_bit,
            });
        }
        if self.record.rounds {
            self.rounds.push(SignalRound {
                round_id,
                alice_state_index: state_index,
                bob_phase: view.bob_phase,
                outcome: view.outcome,
                verdict,
                alice_bit,
                bob_bit: view.bob_bit,
                kept: view.kept,
            });
            self.receiver_rounds.push(view);
        }
    }

    fn scalar_stats(&self) -> SessionStats {
        SessionStats {
            total: self.total,
            correct_basis: self.correct_basis,
            kept: self.kept,
            mismatches: self.mismatches,
            empirical_efficiency: if self.total == 0 {
                0.0
            } else {
                self.correct_basis as f64 / self.total as f64
            },
            empirical_ber_kept: if self.kept == 0 {
                0.0
            } else {
                self.mismatches as f64 / self.kept as f64
            },
            eve_tap: Vec::new(),
        }
    }

    fn finish(mut self, config: &SessionConfig) -> SessionOutput {
        let mut stats = self.scalar_stats();
        stats.eve_tap = std::mem::take(&mut self.eve);
        SessionOutput {
            config: config.clone(),
            alice_key: self.alice_key,
            bob_key: self.bob_key,
            stats,
            rounds: self.rounds,
            receiver_rounds: self.receiver_rounds,
            wire: self.wire,
        }
    }

    fn abort(mut self, error: Error) -> SessionAbort {
        let mut partial = self.scalar_stats();
        partial.eve_tap = std::mem::take(&mut self.eve);
        SessionAbort {
            error,
            rounds_completed: self.total,
            partial,
        }
    }
}

/// Packs key bits into lowercase hex, most significant bit first within
/// each byte, the final byte zero-padded.
pub fn bits_to_hex(bits: &[u8]) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(8) * 2);
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &bit) in chunk.iter().enumerate() {
            byte |= (bit & 1) << (7 - i);
        }
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Writes the recorded transcripts as JSON-lines files and returns the
/// paths written: the wire conversation, the receiver's per-round view
/// (the public transcript), and the sender's private per-round log.
pub fn write_transcript_files(output: &SessionOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if output.config.record.wire {
        let path = dir.join("wire.jsonl");
        let mut text = String::with_capacity(output.wire.len() * 48);
        for message in &output.wire {
            text.push_str(&message.encode());
            text.push('\n');
        }
        fs::write(&path, text)?;
        written.push(path);
    }
    if output.config.record.rounds {
        let path = dir.join("rounds_public.jsonl");
        fs::write(&path, jsonl(&output.receiver_rounds)?)?;
        written.push(path);
        let path = dir.join("rounds_private.jsonl");
        fs::write(&path, jsonl(&output.rounds)?)?;
        written.push(path);
    }
    Ok(written)
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keygain::postselected_ber;

    fn config(protocol: ProtocolId, rounds: u64, seed: u64) -> SessionConfig {
        SessionConfig {
            protocol,
            alpha: 1.0,
            eta: 0.5,
            x0: PostselectionThreshold::new(0.5).unwrap(),
            rounds,
            seed,
            transport: TransportKind::InMemory,
            record: RecordOptions::default(),
        }
    }

    #[test]
    fn statistics_match_the_analytics() {
        let cfg = config(ProtocolId::O4, 100_000, 11);
        let out = run_session(&cfg).unwrap();
        let stats = &out.stats;
        assert_eq!(stats.total, cfg.rounds);
        assert!(stats.kept <= stats.correct_basis && stats.correct_basis <= stats.total);

        // Efficiency against the protocol's 1/2, three binomial sigmas.
        let n = stats.total as f64;
        let sigma = (0.5 * 0.5 / n).sqrt();
        assert!((stats.empirical_efficiency - 0.5).abs() < 3.0 * sigma);

        // Error rate on kept bits against the quadrature tail ratio.
        let a = cfg.eta.sqrt() * cfg.alpha;
        let predicted = postselected_ber(a, cfg.x0).unwrap();
        let se = (predicted * (1.0 - predicted) / stats.kept as f64).sqrt();
        assert!(
            (stats.empirical_ber_kept - predicted).abs() < 3.0 * se,
            "ber {} vs {predicted}",
            stats.empirical_ber_kept
        );

        assert_eq!(out.alice_key.len(), stats.kept as usize);
        assert_eq!(out.bob_key.len(), stats.kept as usize);
        assert_eq!(out.rounds.len(), stats.total as usize);
        assert_eq!(out.wire.len(), 3 * stats.total as usize + 2);

        for round in &out.rounds {
            assert_eq!(round.alice_bit.is_some(), round.verdict.is_kept());
            assert_eq!(round.bob_bit.is_some(), round.kept);
            assert_eq!(
                round.kept,
                round.verdict.is_kept() && round.outcome.value().abs() >= cfg.x0.value()
            );
            if let Some(bit) = round.bob_bit {
                assert_eq!(bit == 1, round.outcome.value() >= 0.0);
            }
        }
    }

    #[test]
    fn pair_announcing_protocol_discards_nothing() {
        let cfg = config(ProtocolId::E4, 10_000, 3);
        let out = run_session(&cfg).unwrap();
        assert_eq!(out.stats.correct_basis, out.stats.total);
        for view in &out.receiver_rounds {
            assert!(!view.wrong_basis);
            assert!(view.pair_set.is_some());
        }
    }

    #[test]
    fn same_seed_reproduces_the_conversation() {
        let cfg = config(ProtocolId::Mb6, 3_000, 99);
        let first = run_session(&cfg).unwrap();
        let second = run_session(&cfg).unwrap();
        let lines = |out: &SessionOutput| {
            out.wire
                .iter()
                .map(RawMessage::encode)
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(lines(&first), lines(&second));
        assert_eq!(first.alice_key, second.alice_key);
        assert_eq!(first.bob_key, second.bob_key);

        let other = run_session(&SessionConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(lines(&first), lines(&other));
    }

    #[test]
    fn socket_transport_matches_memory() {
        let mut cfg = config(ProtocolId::S8, 2_000, 42);
        let memory = run_session(&cfg).unwrap();
        cfg.transport = TransportKind::Socket;
        let socket = run_session(&cfg).unwrap();
        assert_eq!(memory.alice_key, socket.alice_key);
        assert_eq!(memory.bob_key, socket.bob_key);
        let encode = |out: &SessionOutput| {
            out.wire.iter().map(RawMessage::encode).collect::<Vec<_>>()
        };
        assert_eq!(encode(&memory), encode(&socket));
    }

    #[test]
    fn flag_only_and_general_grid_share_a_distribution() {
        // Same alphabet set in a different order: outcome streams are
        // differently seeded but identically distributed.
        let n = 100_000;
        let outcomes = |protocol: ProtocolId| {
            let out = run_session(&config(protocol, n, 5)).unwrap();
            let mut values: Vec<f64> = out.rounds.iter().map(|r| r.outcome.value()).collect();
            values.sort_by(f64::total_cmp);
            values
        };
        let first = outcomes(ProtocolId::Mb4);
        let second = outcomes(ProtocolId::Gen(0));

        // Two-sample Kolmogorov-Smirnov distance by merge walk.
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < first.len() && j < second.len() {
            if first[i] <= second[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fi = i as f64 / first.len() as f64;
            let fj = j as f64 / second.len() as f64;
            d = d.max((fi - fj).abs());
        }
        let critical = 1.628 * (2.0 / n as f64).sqrt();
        assert!(d < critical, "ks = {d}, critical = {critical}");
    }

    #[test]
    fn aborts_preserve_partial_statistics() {
        // A sender link that dies after eight sends: four full rounds.
        struct Flaky {
            inner: InMemoryEndpoint,
            sends_left: u32,
        }
        impl Transport for Flaky {
            fn send(&mut self, message: &RawMessage) -> Result<()> {
                if self.sends_left == 0 {
                    return Err(Error::WireFormat("link dropped".into()));
                }
                self.sends_left -= 1;
                self.inner.send(message)
            }
            fn recv(&mut self) -> Result<RawMessage> {
                self.inner.recv()
            }
        }

        let cfg = config(ProtocolId::O4, 50, 1);
        let (sender_io, receiver_io) = in_memory_pair();
        let flaky = Flaky {
            inner: sender_io,
            sends_left: 8,
        };
        let abort = run_session_over(&cfg, flaky, receiver_io).unwrap_err();
        assert_eq!(abort.rounds_completed, 4);
        assert_eq!(abort.partial.total, 4);
        assert!(matches!(abort.error, Error::WireFormat(_)));
    }

    #[test]
    fn version_mismatch_aborts_immediately() {
        let cfg = config(ProtocolId::O4, 5, 1);
        let (sender_io, receiver_io) = in_memory_pair();
        receiver_io.inject_incoming(r#"{"v":2,"kind":"PULSE","round_id":0}"#);
        let abort = run_session_over(&cfg, sender_io, receiver_io).unwrap_err();
        assert_eq!(abort.rounds_completed, 0);
        assert!(matches!(abort.error, Error::WireVersion { got: 2, .. }));
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut cfg = config(ProtocolId::O4, 0, 1);
        assert!(run_session(&cfg).is_err());
        cfg.rounds = 10;
        cfg.eta = 0.0;
        assert!(run_session(&cfg).is_err());
        cfg.eta = 1.25;
        assert!(run_session(&cfg).is_err());
    }

    #[test]
    fn keys_pack_to_hex() {
        assert_eq!(bits_to_hex(&[]), "");
        assert_eq!(bits_to_hex(&[1, 0, 1, 1]), "b0");
        assert_eq!(bits_to_hex(&[1, 1, 1, 1, 0, 0, 0, 0, 1]), "f080");
        assert_eq!(bits_to_hex(&[0, 0, 0, 0, 0, 0, 0, 1]), "01");
    }

    #[test]
    fn transcript_files_round_trip() {
        let cfg = config(ProtocolId::Mb4, 200, 8);
        let out = run_session(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = write_transcript_files(&out, dir.path()).unwrap();
        assert_eq!(written.len(), 3);

        let wire_text = fs::read_to_string(dir.path().join("wire.jsonl")).unwrap();
        let parsed: Vec<RawMessage> = wire_text
            .lines()
            .map(|l| RawMessage::parse(l).unwrap())
            .collect();
        assert_eq!(parsed, out.wire);

        let public = fs::read_to_string(dir.path().join("rounds_public.jsonl")).unwrap();
        assert!(!public.contains("alice_state_index"));
        assert!(!public.contains("verdict"));
        let rows: Vec<ReceiverRound> = public
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(rows.len(), out.receiver_rounds.len());

        let private = fs::read_to_string(dir.path().join("rounds_private.jsonl")).unwrap();
        let rows: Vec<SignalRound> = private
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(rows.len(), out.rounds.len());
        assert_eq!(rows[0].alice_state_index, out.rounds[0].alice_state_index);
    }
}
