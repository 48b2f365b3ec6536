//! Post-session validation: the wire-leak audit and the empirical test of
//! the eavesdropper's conditioned ensembles.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::protocol::{Announcement, AnnouncementStyle, ProtocolSpec};
use crate::security::eve_states;
use crate::{Error, Result};

use super::transport::{MessageKind, RawMessage};
use super::SessionStats;

/// Matching tolerance between a tapped amplitude and a predicted component.
const AMPLITUDE_TOLERANCE: f64 = 1e-12;
/// Minimum expected count per component for a valid chi-square test.
const MIN_EXPECTED_COUNT: f64 = 5.0;
/// Confidence level of the chi-square test.
const CHI_SQUARE_LEVEL: f64 = 0.99;

/// Summary of a passed wire audit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TranscriptReport {
    pub messages: usize,
    pub rounds: u64,
}

/// Audits a wire conversation from its serialized lines; strict parsing is
/// part of the audit, so schema violations surface here too.
pub fn transcript_check_lines<'a, I>(lines: I, spec: &ProtocolSpec) -> Result<TranscriptReport>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut messages = Vec::new();
    for (index, line) in lines.into_iter().enumerate() {
        let message = RawMessage::parse(line)
            .map_err(|e| Error::WireFormat(format!("message {index}: {e}")))?;
        messages.push(message);
    }
    transcript_check(&messages, spec)
}

/// Audits a completed wire conversation: version and shape of every
/// message, strict PULSE-BASIS-ANNOUNCE alternation with sequential round
/// ids, two closing DONEs, phases drawn from the protocol's set, and no
/// announcement that narrows the sender's state beyond the protocol's
/// declared equivalence classes.
pub fn transcript_check(wire: &[RawMessage], spec: &ProtocolSpec) -> Result<TranscriptReport> {
    let mut round: u64 = 0;
    let mut position = 0usize;
    while position < wire.len() && wire[position].kind == MessageKind::Pulse {
        let pulse = &wire[position];
        pulse.validate_shape()?;
        if pulse.round_id != Some(round) {
            return Err(violation(position, pulse, &format!("expected round {round}")));
        }

        let basis = wire
            .get(position + 1)
            .ok_or_else(|| truncated(position + 1, "the round's basis"))?;
        basis.validate_shape()?;
        if basis.kind != MessageKind::Basis || basis.round_id != Some(round) {
            return Err(violation(position + 1, basis, "expected the round's basis"));
        }
        let phi = basis.phi_b.expect("shape-validated basis carries a phase");
        let phase = spec
            .phase_index(phi)
            .map_err(|e| violation(position + 1, basis, &e.to_string()))?;

        let announce = wire
            .get(position + 2)
            .ok_or_else(|| truncated(position + 2, "the round's announcement"))?;
        announce.validate_shape()?;
        if announce.kind != MessageKind::Announce || announce.round_id != Some(round) {
            return Err(violation(
                position + 2,
                announce,
                "expected the round's announcement",
            ));
        }
        let wrong_basis = announce
            .wrong_basis
            .expect("shape-validated announcement carries the flag");
        match spec.style() {
            AnnouncementStyle::PairSet => {
                if !wrong_basis {
                    let Some(pair) = announce.pair_set else {
                        return Err(violation(
                            position + 2,
                            announce,
                            "kept round must name its announced pair",
                        ));
                    };
                    if pair as usize >= spec.pair_count(phase)? {
                        return Err(violation(position + 2, announce, "pair id out of range"));
                    }
                }
            }
            AnnouncementStyle::BasisOnly | AnnouncementStyle::WrongBasisFlagOnly => {
                if announce.pair_set.is_some() {
                    return Err(violation(
                        position + 2,
                        announce,
                        "state-set field narrows the sender's state on a wire that must \
                         carry only the sift flag",
                    ));
                }
            }
        }

        round += 1;
        position += 3;
    }

    if wire.len() != position + 2 {
        return Err(Error::MessageOrder(format!(
            "expected exactly two closing messages after {round} rounds, found {} trailing",
            wire.len().saturating_sub(position)
        )));
    }
    for index in [position, position + 1] {
        let closing = &wire[index];
        closing.validate_shape()?;
        if closing.kind != MessageKind::Done {
            return Err(violation(index, closing, "expected DONE"));
        }
    }
    Ok(TranscriptReport {
        messages: wire.len(),
        rounds: round,
    })
}

fn violation(position: usize, message: &RawMessage, why: &str) -> Error {
    Error::WireFormat(format!("message {position} ({}): {why}", message.encode()))
}

fn truncated(position: usize, expected: &str) -> Error {
    Error::MessageOrder(format!(
        "transcript ends at message {position}, expected {expected}"
    ))
}

/// One conditioned ensemble's empirical comparison.
#[derive(Clone, Debug, Serialize)]
pub struct EveCheckGroup {
    pub phase: f64,
    pub pair_set: Option<u32>,
    pub bit: u8,
    pub components: usize,
    pub count: u64,
    pub statistic: f64,
    pub critical: f64,
    pub passed: bool,
}

/// Outcome of the ensemble audit.
#[derive(Clone, Debug, Serialize)]
pub struct EveCheckReport {
    pub groups: Vec<EveCheckGroup>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Groups the recorded tap by (receiver phase, announcement, hidden bit)
/// and tests each group against the analytic conditioned ensemble: every
/// amplitude must match a predicted component, and counts must follow the
/// predicted weights via a chi-square test at the 1% level. Groups with a
/// single component are settled by amplitude matching alone.
pub fn eve_empirical_check(
    stats: &SessionStats,
    spec: &ProtocolSpec,
    eta: f64,
) -> Result<EveCheckReport> {
    if stats.eve_tap.is_empty() {
        return Err(Error::OutOfDomain {
            context: "eavesdropper ensemble check",
            message: "the session recorded no tap; enable eve_tap recording".into(),
        });
    }

    type Key = (usize, Option<u32>, u8);
    let mut grouped: Vec<(Key, Vec<usize>)> = Vec::new();
    for (index, record) in stats.eve_tap.iter().enumerate() {
        if record.wrong_basis {
            continue;
        }
        let Some(bit) = record.alice_bit else {
            continue;
        };
        let phase = spec.phase_index(record.bob_phase)?;
        let key = (phase, record.pair_set, bit);
        match grouped.iter_mut().find(|(k, _)| *k == key) {
            Some((_, indices)) => indices.push(index),
            None => grouped.push((key, vec![index])),
        }
    }

    let mut groups = Vec::new();
    let mut failures = Vec::new();
    for ((phase, pair_set, bit), indices) in grouped {
        let phi = spec.phases()[phase];
        let announced = Announcement {
            wrong_basis: false,
            pair_set,
        };
        let (plus, minus) = eve_states(spec, phi, eta, announced)?;
        let expected = if bit == 1 { plus } else { minus };
        let components = expected.components();

        let mut counts = vec![0u64; components.len()];
        for &index in &indices {
            let amplitude = stats.eve_tap[index].amplitude;
            match components
                .iter()
                .position(|&(_, c)| c.approx_eq(amplitude, AMPLITUDE_TOLERANCE))
            {
                Some(slot) => counts[slot] += 1,
                None => failures.push(format!(
                    "phase {:.6} pair {pair_set:?} bit {bit}: tapped amplitude \
                     ({}, {}) matches no predicted component",
                    phi.radians(),
                    amplitude.re(),
                    amplitude.im()
                )),
            }
        }

        let total = indices.len() as f64;
        let mut statistic = 0.0;
        let mut enough_data = true;
        for (slot, &(weight, _)) in components.iter().enumerate() {
            let expected_count = weight * total;
            if expected_count < MIN_EXPECTED_COUNT {
                enough_data = false;
            }
            statistic += (counts[slot] as f64 - expected_count).powi(2) / expected_count;
        }
        if !enough_data {
            failures.push(format!(
                "phase {:.6} pair {pair_set:?} bit {bit}: {} rounds are too few for a \
                 {}-component test",
                phi.radians(),
                indices.len(),
                components.len()
            ));
        }

        let dof = components.len().saturating_sub(1);
        let (critical, passed) = if dof == 0 {
            (f64::INFINITY, true)
        } else {
            let critical = ChiSquared::new(dof as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(CHI_SQUARE_LEVEL);
            (critical, statistic < critical)
        };
        if !passed {
            failures.push(format!(
                "phase {:.6} pair {pair_set:?} bit {bit}: chi-square {statistic:.3} \
                 exceeds the 1% critical value {critical:.3}",
                phi.radians()
            ));
        }
        groups.push(EveCheckGroup {
            phase: phi.radians(),
            pair_set,
            bit,
            components: components.len(),
            count: indices.len() as u64,
            statistic,
            critical,
            passed,
        });
    }

    let passed = failures.is_empty() && groups.iter().all(|g| g.passed);
    Ok(EveCheckReport {
        groups,
        failures,
        passed,
    })
}
