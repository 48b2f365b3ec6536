//! Postselected key rates: the bit error rate of sign-decoded homodyne
//! outcomes, binary-symmetric-channel mutual information, and the secure key
//! gain that balances Bob's information against the eavesdropping bound.

use serde::{Deserialize, Serialize};

use crate::gaussian::{density_given_mean, QuadratureValue};
use crate::protocol::{ProtocolId, ProtocolSpec};
use crate::quadrature::integrate;
use crate::security::protocol_overlap_bound;
use crate::{Error, Result};

/// Absolute tolerance for the gain integrals.
const GAIN_TOLERANCE: f64 = 1e-10;

/// Truncation margin past the farthest Gaussian mean: ten standard
/// deviations of the vacuum noise, leaving tail mass below 1e-20.
const TAIL_HALF_WIDTH: f64 = 5.0;

/// Postselection cutoff: only outcomes with |x| >= x0 contribute to the key.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PostselectionThreshold(f64);

impl PostselectionThreshold {
    /// Keep every outcome.
    pub const ZERO: Self = Self(0.0);

    pub fn new(x0: f64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::NonFinite {
                context: "postselection threshold",
                value: x0,
            });
        }
        if x0 < 0.0 {
            return Err(Error::OutOfDomain {
                context: "postselection threshold",
                message: format!("x0 = {x0} must be nonnegative"),
            });
        }
        Ok(Self(x0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether an outcome survives the cut.
    pub fn keeps(self, x: QuadratureValue) -> bool {
        x.value().abs() >= self.0
    }
}

impl TryFrom<f64> for PostselectionThreshold {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PostselectionThreshold> for f64 {
    fn from(threshold: PostselectionThreshold) -> f64 {
        threshold.0
    }
}

/// How the eavesdropping bound enters the gain formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauConvention {
    /// Subtract tau_u once per correct-basis bit; exact at x0 = 0.
    #[default]
    Literal,
    /// Subtract tau_u only for the fraction of bits that survive the cut.
    PerKeptBit,
}

/// One evaluated point of the secure key gain, with every intermediate the
/// formula consumed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainPoint {
    pub protocol: ProtocolId,
    pub alpha: f64,
    pub eta: f64,
    pub x0: f64,
    /// Twice the integral over kept outcomes of P_B(x) * i(q_B(x)).
    pub mutual_info_integral: f64,
    /// Probability that a correct-basis outcome survives the cut.
    pub kept_fraction: f64,
    pub tau_u: f64,
    /// Sifting efficiency of the protocol.
    pub pe: f64,
    pub gain: f64,
    pub convention: TauConvention,
}

/// Bit error rate of sign decoding conditioned on the outcome magnitude,
/// for received amplitude a: the posterior weight of the wrong-sign
/// Gaussian, 1/(1 + e^{8 a |x|}).
pub fn ber(x: QuadratureValue, a: f64) -> Result<f64> {
    check_received_amplitude(a)?;
    Ok(sign_error_probability(x.value(), a))
}

/// Mutual information of a binary symmetric channel with error rate q.
pub fn mutual_info(q: f64) -> Result<f64> {
    if !q.is_finite() || !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfDomain {
            context: "channel error rate",
            message: format!("q = {q} must lie in [0, 1]"),
        });
    }
    Ok(bsc_information(q))
}

/// Density of Bob's outcome in a correct-basis round: the equal mixture of
/// the two bit Gaussians at means +a and -a. Even in x.
pub fn correct_basis_pdf(x: QuadratureValue, a: f64) -> Result<f64> {
    check_received_amplitude(a)?;
    Ok(bit_mixture_density(x.value(), a))
}

/// Error rate among kept bits: wrong-sign tail mass over kept mass.
pub fn postselected_ber(a: f64, x0: PostselectionThreshold) -> Result<f64> {
    check_received_amplitude(a)?;
    let lower = x0.value();
    let upper = a.max(lower) + TAIL_HALF_WIDTH;
    let wrong = integrate(
        |x| 0.5 * density_given_mean(x, -a),
        lower,
        upper,
        GAIN_TOLERANCE,
    )?;
    let kept = integrate(|x| bit_mixture_density(x, a), lower, upper, GAIN_TOLERANCE)?;
    if kept <= 0.0 {
        return Err(Error::OutOfDomain {
            context: "postselected bit error rate",
            message: format!("no probability mass kept beyond x0 = {lower}"),
        });
    }
    Ok(wrong / kept)
}

/// Secure key gain at the protocol's amplitude for channel transmission eta
/// and postselection threshold x0, under the default bound convention.
pub fn gain(spec: &ProtocolSpec, eta: f64, x0: PostselectionThreshold) -> Result<GainPoint> {
    gain_with_convention(spec, eta, x0, TauConvention::default())
}

/// Secure key gain with an explicit bound convention.
pub fn gain_with_convention(
    spec: &ProtocolSpec,
    eta: f64,
    x0: PostselectionThreshold,
    convention: TauConvention,
) -> Result<GainPoint> {
    let bound = protocol_overlap_bound(spec, eta)?;
    let a = eta.sqrt() * spec.alpha();
    let lower = x0.value();
    let upper = a + TAIL_HALF_WIDTH;
    // Beyond the truncation point the kept mass is below every tolerance.
    let (info, kept) = if lower >= upper {
        (0.0, 0.0)
    } else {
        let info = 2.0
            * integrate(
                |x| bit_mixture_density(x, a) * bsc_information(sign_error_probability(x, a)),
                lower,
                upper,
                GAIN_TOLERANCE,
            )?;
        let kept = 2.0 * integrate(|x| bit_mixture_density(x, a), lower, upper, GAIN_TOLERANCE)?;
        (info, kept)
    };
    let pe = spec.efficiency_f64();
    let charge = match convention {
        TauConvention::Literal => bound.tau_u,
        TauConvention::PerKeptBit => bound.tau_u * kept,
    };
    Ok(GainPoint {
        protocol: spec.id(),
        alpha: spec.alpha(),
        eta,
        x0: lower,
        mutual_info_integral: info,
        kept_fraction: kept,
        tau_u: bound.tau_u,
        pe,
        gain: pe * (info - charge),
        convention,
    })
}

/// Gain over the Cartesian grid of amplitudes, transmissions, and
/// thresholds, in amplitude-major order with thresholds innermost.
pub fn gain_sweep(
    id: ProtocolId,
    alphas: &[f64],
    etas: &[f64],
    x0s: &[PostselectionThreshold],
    convention: TauConvention,
) -> Result<Vec<GainPoint>> {
    if alphas.is_empty() || etas.is_empty() || x0s.is_empty() {
        return Err(Error::OutOfDomain {
            context: "gain sweep",
            message: "every grid must be nonempty".into(),
        });
    }
    let mut points = Vec::with_capacity(alphas.len() * etas.len() * x0s.len());
    for &alpha in alphas {
        let spec = ProtocolSpec::new(id, alpha)?;
        for &eta in etas {
            for &x0 in x0s {
                points.push(gain_with_convention(&spec, eta, x0, convention)?);
            }
        }
    }
    Ok(points)
}

/// For every transmission present in a sweep, the point of largest gain,
/// in first-appearance order of the transmissions.
pub fn best_per_eta(points: &[GainPoint]) -> Vec<GainPoint> {
    let mut best: Vec<GainPoint> = Vec::new();
    for point in points {
        match best.iter_mut().find(|b| b.eta == point.eta) {
            Some(b) => {
                if point.gain > b.gain {
                    *b = point.clone();
                }
            }
            None => best.push(point.clone()),
        }
    }
    best
}

fn check_received_amplitude(a: f64) -> Result<()> {
    if !a.is_finite() {
        return Err(Error::NonFinite {
            context: "received amplitude",
            value: a,
        });
    }
    if a < 0.0 {
        return Err(Error::OutOfDomain {
            context: "received amplitude",
            message: format!("a = {a} must be nonnegative"),
        });
    }
    Ok(())
}

fn sign_error_probability(x: f64, a: f64) -> f64 {
    1.0 / (1.0 + (8.0 * a * x.abs()).exp())
}

fn bsc_information(q: f64) -> f64 {
    let plogp = |p: f64| if p == 0.0 { 0.0 } else { p * p.log2() };
    1.0 + plogp(q) + plogp(1.0 - q)
}

fn bit_mixture_density(x: f64, a: f64) -> f64 {
    0.5 * (density_given_mean(x, a) + density_given_mean(x, -a))
}
