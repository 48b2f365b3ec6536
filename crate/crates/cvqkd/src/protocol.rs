//! Signal alphabets, receiver phases, bit encoding, and sifting rules.
//!
//! Every protocol in the family is described by the same data: a finite set
//! of coherent-state amplitudes the sender draws from uniformly, a finite
//! set of local-oscillator phases the receiver draws from uniformly, and an
//! announcement style saying how much the sender reveals when sifting.
//!
//! The bit encoding is geometric. For a signal β probed along φ_B the mean
//! outcome is Re(β e^{-iφ_B}). Alphabets are built so this mean is +α
//! (bit 1), -α (bit 0), or a discard for every cell of the state × phase
//! grid, where α is the protocol's reference amplitude: half the quadrature
//! distance between the two bit values. Discards are either means of
//! exactly zero (the classic wrong-basis case) or, in the extended family,
//! designed intermediate values that the sender flags away.
//!
//! The sifting efficiency is the fraction of grid cells that carry a bit;
//! it is reported as an exact rational straight from the constructed grid.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::gaussian::{mean_quadrature, CoherentAmplitude, QuadraturePhase};
use crate::{Error, Result};

/// Absolute tolerance for matching a quadrature mean to its encoded value
/// is this factor times max(1, α).
pub const MEAN_TOLERANCE_SCALE: f64 = 1e-9;

/// Name of a protocol in the family.
///
/// `Gen(n)` is the extended grid construction with 4n+4 states; `Gen(0)`
/// and `Gen(1)` have the same alphabets as `Mb4` and `Mb8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProtocolId {
    /// Four phase states, two receiver bases, basis announcement.
    O4,
    /// Three phase states, three receiver phases, basis announcement.
    S3,
    /// Four diagonal states read in both bases, pair-set announcement.
    E4,
    /// The `E4` alphabet announcing only the keep/discard flag.
    Mb4,
    /// Six phase states, three receiver phases, pair-set announcement.
    S6,
    /// The `S6` alphabet announcing only the keep/discard flag.
    Mb6,
    /// Eight states (square plus diagonals), pair-set announcement.
    S8,
    /// The `S8` alphabet announcing only the keep/discard flag.
    Mb8,
    /// Grid alphabet of 4n+4 states announcing only the keep/discard flag.
    Gen(u32),
}

impl ProtocolId {
    /// The eight named protocols, in conventional order.
    pub const STANDARD: [ProtocolId; 8] = [
        ProtocolId::O4,
        ProtocolId::S3,
        ProtocolId::E4,
        ProtocolId::Mb4,
        ProtocolId::S6,
        ProtocolId::Mb6,
        ProtocolId::S8,
        ProtocolId::Mb8,
    ];
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolId::O4 => write!(f, "o4"),
            ProtocolId::S3 => write!(f, "s3"),
            ProtocolId::E4 => write!(f, "e4"),
            ProtocolId::Mb4 => write!(f, "mb4"),
            ProtocolId::S6 => write!(f, "s6"),
            ProtocolId::Mb6 => write!(f, "mb6"),
            ProtocolId::S8 => write!(f, "s8"),
            ProtocolId::Mb8 => write!(f, "mb8"),
            ProtocolId::Gen(n) => write!(f, "gen{n}"),
        }
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let id = match lower.as_str() {
            "o4" => ProtocolId::O4,
            "s3" => ProtocolId::S3,
            "e4" => ProtocolId::E4,
            "mb4" => ProtocolId::Mb4,
            "s6" => ProtocolId::S6,
            "mb6" => ProtocolId::Mb6,
            "s8" => ProtocolId::S8,
            "mb8" => ProtocolId::Mb8,
            _ => {
                let n = lower
                    .strip_prefix("gen")
                    .and_then(|d| d.parse::<u32>().ok())
                    .ok_or_else(|| Error::UnknownProtocol(s.to_string()))?;
                ProtocolId::Gen(n)
            }
        };
        Ok(id)
    }
}

impl TryFrom<String> for ProtocolId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProtocolId> for String {
    fn from(id: ProtocolId) -> String {
        id.to_string()
    }
}

/// What the sender reveals per round during sifting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnouncementStyle {
    /// Keep/discard flag; equivalent to announcing the preparation basis,
    /// since each basis holds exactly one state per bit.
    BasisOnly,
    /// Keep/discard flag only; kept states of one bit value may remain a
    /// mixture from the eavesdropper's point of view.
    WrongBasisFlagOnly,
    /// Keep/discard flag plus, on kept rounds, which two-state subset
    /// (one state per bit value) the signal came from.
    PairSet,
}

/// Verdict for one cell of the state × phase grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// The cell carries this key bit (0 or 1).
    Bit(u8),
    /// The cell is discarded during sifting.
    WrongBasis,
}

impl Classification {
    pub fn bit(self) -> Option<u8> {
        match self {
            Classification::Bit(b) => Some(b),
            Classification::WrongBasis => None,
        }
    }

    pub fn is_kept(self) -> bool {
        matches!(self, Classification::Bit(_))
    }
}

/// The sender's per-round sifting message, as visible on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    /// True when the round is discarded.
    pub wrong_basis: bool,
    /// Pair-set identifier on kept rounds of pair-set protocols; the ids
    /// are per receiver phase, ordered by the pair's orthogonal-quadrature
    /// offset, largest first.
    pub pair_set: Option<u32>,
}

/// A fully constructed protocol: alphabet, phases, verdict grid, pair sets.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    id: ProtocolId,
    alpha: f64,
    states: Vec<CoherentAmplitude>,
    phases: Vec<QuadraturePhase>,
    style: AnnouncementStyle,
    /// Verdict per `[state][phase]` cell.
    grid: Vec<Vec<Classification>>,
    /// Pair id per `[phase][state]`; `None` off kept cells and for styles
    /// without pair announcements.
    pair_ids: PairIds,
    /// Per `[phase][pair]`: the member state indices `[bit-1 state, bit-0 state]`.
    pairs: PairTable,
}

/// Pair id per `[phase][state]`.
type PairIds = Vec<Vec<Option<u32>>>;
/// Member state indices `[bit-1 state, bit-0 state]` per `[phase][pair]`.
type PairTable = Vec<Vec<[usize; 2]>>;

impl ProtocolSpec {
    /// Builds the protocol `id` at reference amplitude `alpha` (finite,
    /// strictly positive). Construction classifies every grid cell and, for
    /// pair-set protocols, derives the pair partition; a malformed alphabet
    /// is rejected rather than silently mis-sifted.
    pub fn new(id: ProtocolId, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::NonFinite {
                context: "ProtocolSpec: reference amplitude",
                value: alpha,
            });
        }
        if alpha <= 0.0 {
            return Err(Error::OutOfDomain {
                context: "ProtocolSpec: reference amplitude",
                message: format!("must be strictly positive, got {alpha}"),
            });
        }

        let states = build_states(id, alpha)?;
        let phases = build_phases(id);
        let style = announcement_style(id);

        let mut grid = Vec::with_capacity(states.len());
        for (index, &state) in states.iter().enumerate() {
            let mut row = Vec::with_capacity(phases.len());
            for &phase in &phases {
                row.push(classify_mean(
                    id,
                    alpha,
                    index,
                    phase,
                    mean_quadrature(state, phase),
                )?);
            }
            grid.push(row);
        }

        let (pair_ids, pairs) = if style == AnnouncementStyle::PairSet {
            build_pairs(id, alpha, &states, &phases, &grid)
        } else {
            (
                vec![vec![None; states.len()]; phases.len()],
                vec![Vec::new(); phases.len()],
            )
        };

        Ok(Self {
            id,
            alpha,
            states,
            phases,
            style,
            grid,
            pair_ids,
            pairs,
        })
    }

    pub fn id(&self) -> ProtocolId {
        self.id
    }

    /// Reference amplitude: half the quadrature distance between bits.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The signal alphabet, in construction order.
    pub fn states(&self) -> &[CoherentAmplitude] {
        &self.states
    }

    /// The receiver's local-oscillator phases, in declared order.
    pub fn phases(&self) -> &[QuadraturePhase] {
        &self.phases
    }

    pub fn style(&self) -> AnnouncementStyle {
        self.style
    }

    /// Verdict for the given state and phase indices.
    pub fn classification(&self, state: usize, phase: usize) -> Result<Classification> {
        self.check_state(state)?;
        self.check_phase(phase)?;
        Ok(self.grid[state][phase])
    }

    /// The sifting message the sender issues for this cell.
    pub fn announcement(&self, state: usize, phase: usize) -> Result<Announcement> {
        let class = self.classification(state, phase)?;
        Ok(match class {
            Classification::WrongBasis => Announcement {
                wrong_basis: true,
                pair_set: None,
            },
            Classification::Bit(_) => Announcement {
                wrong_basis: false,
                pair_set: if self.style == AnnouncementStyle::PairSet {
                    self.pair_ids[phase][state]
                } else {
                    None
                },
            },
        })
    }

    /// Exact fraction of grid cells that carry a bit.
    pub fn efficiency(&self) -> Ratio<i64> {
        let kept = self
            .grid
            .iter()
            .flatten()
            .filter(|c| c.is_kept())
            .count();
        let total = self.states.len() * self.phases.len();
        Ratio::new(kept as i64, total as i64)
    }

    /// [`Self::efficiency`] as a float.
    pub fn efficiency_f64(&self) -> f64 {
        let r = self.efficiency();
        *r.numer() as f64 / *r.denom() as f64
    }

    /// Member states `[bit-1, bit-0]` of a pair at the given phase.
    pub fn pair_states(&self, phase: usize, pair: u32) -> Result<[usize; 2]> {
        self.check_phase(phase)?;
        self.pairs[phase]
            .get(pair as usize)
            .copied()
            .ok_or_else(|| Error::OutOfDomain {
                context: "ProtocolSpec::pair_states",
                message: format!(
                    "phase {phase} has {} pairs, requested {pair}",
                    self.pairs[phase].len()
                ),
            })
    }

    /// Number of pairs announced at the given phase (zero for styles
    /// without pair announcements).
    pub fn pair_count(&self, phase: usize) -> Result<usize> {
        self.check_phase(phase)?;
        Ok(self.pairs[phase].len())
    }

    /// Announcement equivalence classes at one receiver phase: the kept
    /// states an eavesdropper cannot tell apart from the transcript alone.
    /// Pair-set protocols yield one class per announced pair; the others a
    /// single class of all kept states.
    pub fn announcement_classes(&self, phase: usize) -> Result<Vec<Vec<usize>>> {
        self.check_phase(phase)?;
        if self.style == AnnouncementStyle::PairSet {
            return Ok(self.pairs[phase].iter().map(|p| p.to_vec()).collect());
        }
        let kept: Vec<usize> = (0..self.states.len())
            .filter(|&s| self.grid[s][phase].is_kept())
            .collect();
        Ok(vec![kept])
    }

    /// Index of the receiver phase equal to `phi` on the circle.
    pub fn phase_index(&self, phi: QuadraturePhase) -> Result<usize> {
        self.phases
            .iter()
            .position(|p| p.approx_eq(phi, crate::gaussian::PHASE_TOLERANCE))
            .ok_or_else(|| Error::PhaseNotInProtocol {
                protocol: self.id.to_string(),
                phi: phi.radians(),
            })
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state < self.states.len() {
            Ok(())
        } else {
            Err(Error::StateIndexOutOfRange {
                protocol: self.id.to_string(),
                index: state,
                len: self.states.len(),
            })
        }
    }

    fn check_phase(&self, phase: usize) -> Result<()> {
        if phase < self.phases.len() {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                context: "ProtocolSpec: phase index",
                message: format!(
                    "index {phase} out of range ({} phases)",
                    self.phases.len()
                ),
            })
        }
    }
}

fn announcement_style(id: ProtocolId) -> AnnouncementStyle {
    match id {
        ProtocolId::O4 | ProtocolId::S3 => AnnouncementStyle::BasisOnly,
        ProtocolId::E4 | ProtocolId::S6 | ProtocolId::S8 => AnnouncementStyle::PairSet,
        ProtocolId::Mb4 | ProtocolId::Mb6 | ProtocolId::Mb8 | ProtocolId::Gen(_) => {
            AnnouncementStyle::WrongBasisFlagOnly
        }
    }
}

fn build_phases(id: ProtocolId) -> Vec<QuadraturePhase> {
    match id {
        ProtocolId::S3 | ProtocolId::S6 | ProtocolId::Mb6 => vec![
            QuadraturePhase::from_pi_fraction(1, 2),
            QuadraturePhase::from_pi_fraction(-1, 6),
            QuadraturePhase::from_pi_fraction(-5, 6),
        ],
        _ => vec![
            QuadraturePhase::ZERO,
            QuadraturePhase::from_pi_fraction(1, 2),
        ],
    }
}

fn build_states(id: ProtocolId, alpha: f64) -> Result<Vec<CoherentAmplitude>> {
    // The triangular alphabets sit at radius 2α/√3 so their projections hit
    // ±α; the diagonal states are α(±1 ± i), radius √2 α.
    let tri = 2.0 / 3.0_f64.sqrt() * alpha;
    let diagonals = || -> Result<Vec<CoherentAmplitude>> {
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(r, i)| CoherentAmplitude::new(r * alpha, i * alpha))
            .collect()
    };
    let square = || -> Result<Vec<CoherentAmplitude>> {
        (0..4)
            .map(|m| CoherentAmplitude::from_polar(alpha, QuadraturePhase::from_pi_fraction(m, 2)))
            .collect()
    };

    match id {
        ProtocolId::O4 => square(),
        ProtocolId::S3 => (0..3)
            .map(|m| {
                CoherentAmplitude::from_polar(tri, QuadraturePhase::from_pi_fraction(2 * m, 3))
            })
            .collect(),
        ProtocolId::E4 | ProtocolId::Mb4 => diagonals(),
        ProtocolId::S6 | ProtocolId::Mb6 => (0..6)
            .map(|m| CoherentAmplitude::from_polar(tri, QuadraturePhase::from_pi_fraction(m, 3)))
            .collect(),
        ProtocolId::S8 | ProtocolId::Mb8 => {
            let mut states = square()?;
            states.extend(diagonals()?);
            Ok(states)
        }
        ProtocolId::Gen(n) => {
            let n = n as i64;
            let mut states = Vec::with_capacity((4 * n + 4) as usize);
            // Vertical edges: real part ±α, imaginary parts on the grid
            // t_k = (2k - n - 1)/(n + 1) from -1 to +1 inclusive.
            for sign in [1.0, -1.0] {
                for k in 0..=(n + 1) {
                    let t = (2 * k - n - 1) as f64 / (n + 1) as f64;
                    states.push(CoherentAmplitude::new(sign * alpha, t * alpha)?);
                }
            }
            // Horizontal edges: imaginary part ±α at the interior grid
            // points (corners already covered above).
            for sign in [1.0, -1.0] {
                for m in 1..=n {
                    let t = (2 * m - n - 1) as f64 / (n + 1) as f64;
                    states.push(CoherentAmplitude::new(t * alpha, sign * alpha)?);
                }
            }
            Ok(states)
        }
    }
}

/// Applies the encoding rule to one cell's quadrature mean.
fn classify_mean(
    id: ProtocolId,
    alpha: f64,
    index: usize,
    phase: QuadraturePhase,
    mean: f64,
) -> Result<Classification> {
    let tol = MEAN_TOLERANCE_SCALE * alpha.max(1.0);
    if (mean - alpha).abs() <= tol {
        return Ok(Classification::Bit(1));
    }
    if (mean + alpha).abs() <= tol {
        return Ok(Classification::Bit(0));
    }
    if mean.abs() <= tol {
        return Ok(Classification::WrongBasis);
    }
    // The grid alphabets deliberately park edge states at intermediate
    // projections; those cells are discards by design.
    if matches!(id, ProtocolId::Gen(n) if n >= 2) && mean.abs() < alpha {
        return Ok(Classification::WrongBasis);
    }
    Err(Error::ClassificationFault {
        protocol: id.to_string(),
        index,
        phi: phase.radians(),
        mean,
    })
}

/// Derives the pair partition for pair-set protocols: at each phase, kept
/// states with equal orthogonal-quadrature mean form one pair, and every
/// pair holds exactly one state per bit value. Pairs are numbered by
/// offset, largest first.
fn build_pairs(
    id: ProtocolId,
    alpha: f64,
    states: &[CoherentAmplitude],
    phases: &[QuadraturePhase],
    grid: &[Vec<Classification>],
) -> (PairIds, PairTable) {
    let tol = MEAN_TOLERANCE_SCALE * alpha.max(1.0);
    let mut pair_ids = vec![vec![None; states.len()]; phases.len()];
    let mut pairs = Vec::with_capacity(phases.len());

    for (p, &phase) in phases.iter().enumerate() {
        let orth = phase.orthogonal();
        // Offset value -> member states, grouped within tolerance.
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (s, &state) in states.iter().enumerate() {
            if !grid[s][p].is_kept() {
                continue;
            }
            let offset = mean_quadrature(state, orth);
            match groups.iter_mut().find(|(o, _)| (*o - offset).abs() <= tol) {
                Some((_, members)) => members.push(s),
                None => groups.push((offset, vec![s])),
            }
        }
        groups.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut phase_pairs = Vec::with_capacity(groups.len());
        for (pair, (offset, members)) in groups.into_iter().enumerate() {
            let ones: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&s| grid[s][p] == Classification::Bit(1))
                .collect();
            let zeros: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&s| grid[s][p] == Classification::Bit(0))
                .collect();
            assert!(
                ones.len() == 1 && zeros.len() == 1,
                "{id}: pair at phase {} offset {offset} has {} bit-1 and {} bit-0 states",
                phase.radians(),
                ones.len(),
                zeros.len(),
            );
            for &s in &members {
                pair_ids[p][s] = Some(pair as u32);
            }
            phase_pairs.push([ones[0], zeros[0]]);
        }
        pairs.push(phase_pairs);
    }

    (pair_ids, pairs)
}

/// One row of the rendered sifting table: a signal state crossed with one
/// receiver phase. Rows run over states in angle order, phases inner.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SiftRow {
    /// State index in construction order.
    pub state: usize,
    /// State amplitude over α, real part.
    pub state_re_over_alpha: f64,
    /// State amplitude over α, imaginary part.
    pub state_im_over_alpha: f64,
    /// Receiver phase index in declared order.
    pub phase: usize,
    /// Receiver phase in radians.
    pub phase_radians: f64,
    /// Quadrature mean over α; snapped to ±1 or 0 on encoded cells.
    pub mean_over_alpha: f64,
    /// The key bit, absent on discarded cells.
    pub bit: Option<u8>,
    /// Pair id announced on this cell, for pair-set protocols.
    pub pair_set: Option<u32>,
}

/// The full sifting table of a protocol, one row per grid cell.
pub fn sift_table(spec: &ProtocolSpec) -> Vec<SiftRow> {
    let mut order: Vec<usize> = (0..spec.states().len()).collect();
    order.sort_by(|&a, &b| {
        let angle = |s: usize| {
            let st = spec.states()[s];
            QuadraturePhase::new(st.im().atan2(st.re()))
                .expect("finite amplitude has a finite angle")
                .reduced()
        };
        angle(a).total_cmp(&angle(b))
    });

    let mut rows = Vec::with_capacity(spec.states().len() * spec.phases().len());
    for &s in &order {
        let state = spec.states()[s];
        for (p, &phase) in spec.phases().iter().enumerate() {
            let class = spec.grid[s][p];
            let raw = mean_quadrature(state, phase) / spec.alpha();
            let mean_over_alpha = match class {
                Classification::Bit(1) => 1.0,
                Classification::Bit(_) => -1.0,
                Classification::WrongBasis if raw.abs() <= MEAN_TOLERANCE_SCALE => 0.0,
                Classification::WrongBasis => raw,
            };
            rows.push(SiftRow {
                state: s,
                state_re_over_alpha: state.re() / spec.alpha(),
                state_im_over_alpha: state.im() / spec.alpha(),
                phase: p,
                phase_radians: phase.radians(),
                mean_over_alpha,
                bit: class.bit(),
                pair_set: spec.pair_ids[p][s],
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(id: ProtocolId) -> ProtocolSpec {
        ProtocolSpec::new(id, 1.0).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for id in ProtocolId::STANDARD {
            assert_eq!(id.to_string().parse::<ProtocolId>().unwrap(), id);
        }
        for n in [0u32, 1, 2, 7, 30] {
            let id = ProtocolId::Gen(n);
            assert_eq!(id.to_string().parse::<ProtocolId>().unwrap(), id);
        }
        assert_eq!("GEN3".parse::<ProtocolId>().unwrap(), ProtocolId::Gen(3));
        assert_eq!(" mb8 ".parse::<ProtocolId>().unwrap(), ProtocolId::Mb8);
        assert!("q7".parse::<ProtocolId>().is_err());
        assert!("gen".parse::<ProtocolId>().is_err());
        assert!("gen-1".parse::<ProtocolId>().is_err());
    }

    #[test]
    fn alphabet_sizes_and_radii() {
        let cases: &[(ProtocolId, usize, &[f64])] = &[
            (ProtocolId::O4, 4, &[1.0]),
            (ProtocolId::S3, 3, &[2.0 / 1.7320508075688772]),
            (ProtocolId::E4, 4, &[std::f64::consts::SQRT_2]),
            (ProtocolId::Mb4, 4, &[std::f64::consts::SQRT_2]),
            (ProtocolId::S6, 6, &[2.0 / 1.7320508075688772]),
            (ProtocolId::Mb6, 6, &[2.0 / 1.7320508075688772]),
            (ProtocolId::S8, 8, &[1.0, std::f64::consts::SQRT_2]),
            (ProtocolId::Mb8, 8, &[1.0, std::f64::consts::SQRT_2]),
        ];
        for &(id, count, radii) in cases {
            let s = ProtocolSpec::new(id, 0.7).unwrap();
            assert_eq!(s.states().len(), count, "{id}");
            for st in s.states() {
                let r = st.magnitude() / 0.7;
                assert!(
                    radii.iter().any(|&e| (r - e).abs() < 1e-12),
                    "{id}: unexpected radius {r}"
                );
            }
        }
        for n in 0..6u32 {
            let s = ProtocolSpec::new(ProtocolId::Gen(n), 0.7).unwrap();
            assert_eq!(s.states().len(), (4 * n + 4) as usize, "gen{n}");
        }
    }

    #[test]
    fn efficiencies_are_exact_rationals() {
        let expect = [
            (ProtocolId::O4, Ratio::new(1, 2)),
            (ProtocolId::S3, Ratio::new(2, 3)),
            (ProtocolId::E4, Ratio::new(1, 1)),
            (ProtocolId::Mb4, Ratio::new(1, 1)),
            (ProtocolId::S6, Ratio::new(2, 3)),
            (ProtocolId::Mb6, Ratio::new(2, 3)),
            (ProtocolId::S8, Ratio::new(3, 4)),
            (ProtocolId::Mb8, Ratio::new(3, 4)),
        ];
        for (id, e) in expect {
            assert_eq!(spec(id).efficiency(), e, "{id}");
        }
        for n in 0..9i64 {
            let s = spec(ProtocolId::Gen(n as u32));
            assert_eq!(s.efficiency(), Ratio::new(2 + n, 2 + 2 * n), "gen{n}");
        }
    }

    #[test]
    fn known_cells_classify_correctly() {
        let o4 = spec(ProtocolId::O4);
        // State at angle 0: bit 1 in the real basis, discarded in the other.
        assert_eq!(o4.classification(0, 0).unwrap(), Classification::Bit(1));
        assert_eq!(o4.classification(0, 1).unwrap(), Classification::WrongBasis);
        // State at angle π: bit 0 in the real basis.
        assert_eq!(o4.classification(2, 0).unwrap(), Classification::Bit(0));

        let s3 = spec(ProtocolId::S3);
        // State at angle 0 against phases {π/2, -π/6, -5π/6}.
        assert_eq!(s3.classification(0, 0).unwrap(), Classification::WrongBasis);
        assert_eq!(s3.classification(0, 1).unwrap(), Classification::Bit(1));
        assert_eq!(s3.classification(0, 2).unwrap(), Classification::Bit(0));

        let e4 = spec(ProtocolId::E4);
        // Diagonal states encode a bit in both bases.
        for s in 0..4 {
            for p in 0..2 {
                assert!(e4.classification(s, p).unwrap().is_kept());
            }
        }

        // Grid protocol: edge states at interior projections are discards.
        let g2 = spec(ProtocolId::Gen(2));
        // State α(1 + i t) with t = -1/3: bit 1 along phase 0, designed
        // discard along π/2.
        let t = -1.0 / 3.0;
        let idx = g2
            .states()
            .iter()
            .position(|st| (st.re() - 1.0).abs() < 1e-12 && (st.im() - t).abs() < 1e-12)
            .unwrap();
        assert_eq!(g2.classification(idx, 0).unwrap(), Classification::Bit(1));
        assert_eq!(
            g2.classification(idx, 1).unwrap(),
            Classification::WrongBasis
        );
    }

    #[test]
    fn pair_partition_matches_the_geometry() {
        let e4 = spec(ProtocolId::E4);
        // Phase 0: pair 0 is the upper diagonal pair (orthogonal offset +α),
        // pair 1 the lower.
        let find = |re: f64, im: f64| {
            e4.states()
                .iter()
                .position(|s| (s.re() - re).abs() < 1e-12 && (s.im() - im).abs() < 1e-12)
                .unwrap()
        };
        assert_eq!(
            e4.pair_states(0, 0).unwrap(),
            [find(1.0, 1.0), find(-1.0, 1.0)]
        );
        assert_eq!(
            e4.pair_states(0, 1).unwrap(),
            [find(1.0, -1.0), find(-1.0, -1.0)]
        );
        // Phase π/2: pairs regroup by the real quadrature; the orthogonal
        // offset there is -Re, so the left pair sorts first.
        assert_eq!(
            e4.pair_states(1, 0).unwrap(),
            [find(-1.0, 1.0), find(-1.0, -1.0)]
        );
        assert_eq!(
            e4.pair_states(1, 1).unwrap(),
            [find(1.0, 1.0), find(1.0, -1.0)]
        );

        // Six-state protocol at phase π/2: states at angles π/3 and 2π/3
        // carry bit 1, angles 4π/3 and 5π/3 bit 0; the pairs couple
        // 2π/3 with 4π/3 (offset +) and π/3 with 5π/3 (offset -).
        let s6 = spec(ProtocolId::S6);
        assert_eq!(s6.pair_count(0).unwrap(), 2);
        assert_eq!(s6.pair_states(0, 0).unwrap(), [2, 4]);
        assert_eq!(s6.pair_states(0, 1).unwrap(), [1, 5]);

        // Eight-state protocol at phase 0: three pairs, offsets +α, 0, -α.
        let s8 = spec(ProtocolId::S8);
        assert_eq!(s8.pair_count(0).unwrap(), 3);
        let find8 = |re: f64, im: f64| {
            s8.states()
                .iter()
                .position(|s| (s.re() - re).abs() < 1e-9 && (s.im() - im).abs() < 1e-9)
                .unwrap()
        };
        assert_eq!(
            s8.pair_states(0, 0).unwrap(),
            [find8(1.0, 1.0), find8(-1.0, 1.0)]
        );
        assert_eq!(
            s8.pair_states(0, 1).unwrap(),
            [find8(1.0, 0.0), find8(-1.0, 0.0)]
        );
        assert_eq!(
            s8.pair_states(0, 2).unwrap(),
            [find8(1.0, -1.0), find8(-1.0, -1.0)]
        );
    }

    #[test]
    fn announcements_follow_the_style() {
        let o4 = spec(ProtocolId::O4);
        let a = o4.announcement(0, 0).unwrap();
        assert!(!a.wrong_basis);
        assert_eq!(a.pair_set, None);
        assert!(o4.announcement(0, 1).unwrap().wrong_basis);

        let s6 = spec(ProtocolId::S6);
        let kept = s6.announcement(2, 0).unwrap();
        assert!(!kept.wrong_basis);
        assert_eq!(kept.pair_set, Some(0));
        let dropped = s6.announcement(0, 0).unwrap();
        assert!(dropped.wrong_basis);
        assert_eq!(dropped.pair_set, None);

        let mb6 = spec(ProtocolId::Mb6);
        let kept = mb6.announcement(2, 0).unwrap();
        assert!(!kept.wrong_basis);
        assert_eq!(kept.pair_set, None);
    }

    #[test]
    fn announcement_classes_partition_kept_states() {
        for id in ProtocolId::STANDARD {
            let s = spec(id);
            for p in 0..s.phases().len() {
                let classes = s.announcement_classes(p).unwrap();
                let mut seen = vec![false; s.states().len()];
                for class in &classes {
                    for &m in class {
                        assert!(!seen[m], "{id}: state {m} in two classes");
                        seen[m] = true;
                        assert!(s.classification(m, p).unwrap().is_kept());
                    }
                    let bits: Vec<u8> = class
                        .iter()
                        .map(|&m| s.classification(m, p).unwrap().bit().unwrap())
                        .collect();
                    assert!(bits.contains(&0) && bits.contains(&1), "{id}");
                }
                for (st, &kept) in seen.iter().enumerate() {
                    assert_eq!(kept, s.classification(st, p).unwrap().is_kept());
                }
            }
        }
    }

    #[test]
    fn grid_alphabets_extend_the_named_ones() {
        // Gen(0) and Mb4 share an alphabet, as do Gen(1) and Mb8.
        for (gen, named) in [
            (ProtocolId::Gen(0), ProtocolId::Mb4),
            (ProtocolId::Gen(1), ProtocolId::Mb8),
        ] {
            let g = ProtocolSpec::new(gen, 0.8).unwrap();
            let n = ProtocolSpec::new(named, 0.8).unwrap();
            assert_eq!(g.states().len(), n.states().len());
            for st in g.states() {
                assert!(
                    n.states().iter().any(|o| st.approx_eq(*o, 1e-12)),
                    "{gen}: state ({}, {}) missing from {named}",
                    st.re(),
                    st.im()
                );
            }
        }
    }

    #[test]
    fn sift_table_rows_are_angle_ordered_and_snapped() {
        let rows = sift_table(&spec(ProtocolId::S8));
        assert_eq!(rows.len(), 16);
        // Rows 9 and 10 (1-indexed) belong to the state at angle π.
        assert!((rows[8].state_re_over_alpha - (-1.0)).abs() < 1e-12);
        assert!(rows[8].state_im_over_alpha.abs() < 1e-12);
        assert_eq!(rows[8].mean_over_alpha, -1.0);
        assert_eq!(rows[8].bit, Some(0));
        assert_eq!(rows[9].mean_over_alpha, 0.0);
        assert_eq!(rows[9].bit, None);
        // Pair-set ids appear exactly on kept cells.
        for row in &rows {
            assert_eq!(row.pair_set.is_some(), row.bit.is_some());
        }
    }

    proptest! {
        #[test]
        fn any_protocol_constructs_and_classifies(
            pick in 0usize..9,
            n in 0u32..7,
            alpha in 0.05f64..3.0,
        ) {
            let id = match pick {
                0 => ProtocolId::O4,
                1 => ProtocolId::S3,
                2 => ProtocolId::E4,
                3 => ProtocolId::Mb4,
                4 => ProtocolId::S6,
                5 => ProtocolId::Mb6,
                6 => ProtocolId::S8,
                7 => ProtocolId::Mb8,
                _ => ProtocolId::Gen(n),
            };
            let s = ProtocolSpec::new(id, alpha).unwrap();
            let tol = MEAN_TOLERANCE_SCALE * alpha.max(1.0);
            for (st, &state) in s.states().iter().enumerate() {
                for (p, &phase) in s.phases().iter().enumerate() {
                    let mean = mean_quadrature(state, phase);
                    match s.classification(st, p).unwrap() {
                        Classification::Bit(1) => prop_assert!((mean - alpha).abs() <= tol),
                        Classification::Bit(_) => prop_assert!((mean + alpha).abs() <= tol),
                        Classification::WrongBasis => {
                            prop_assert!(mean.abs() < alpha - tol || mean.abs() <= tol)
                        }
                    }
                }
            }
            let eff = s.efficiency();
            prop_assert!(*eff.numer() > 0 && eff <= Ratio::new(1, 1));
        }

        #[test]
        fn efficiency_is_independent_of_amplitude(alpha in 0.05f64..3.0) {
            for id in ProtocolId::STANDARD {
                let a = ProtocolSpec::new(id, alpha).unwrap();
                let b = ProtocolSpec::new(id, 1.0).unwrap();
                prop_assert_eq!(a.efficiency(), b.efficiency());
            }
        }
    }
}
