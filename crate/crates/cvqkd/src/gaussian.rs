//! Quadrature statistics of coherent signal states.
//!
//! Conventions, fixed once for the whole crate:
//!
//! - quadratures are scaled so the vacuum variance is exactly 1/4
//!   (standard deviation 1/2);
//! - a coherent state of complex amplitude β measured along
//!   local-oscillator phase φ yields a Gaussian outcome with mean
//!   Re(β e^{-iφ}) and the vacuum variance;
//! - the overlap of two coherent states is
//!   ⟨β|α⟩ = exp(-|α|²/2 - |β|²/2 + β̄ α).
//!
//! Under this scaling the outcome density for amplitude α e^{iφ_A} probed
//! at phase φ_B depends only on the phase difference:
//! √(2/π) exp{-2 (x - α cos(φ_A - φ_B))²}.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shot-noise variance of any quadrature in this crate's scaling.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Tolerance for treating two local-oscillator phases as the same setting,
/// in radians (compared on the circle).
pub const PHASE_TOLERANCE: f64 = 1e-9;

/// Complex amplitude of a coherent signal mode.
///
/// Finite by construction. The zero amplitude is the vacuum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AmplitudeParts", into = "AmplitudeParts")]
pub struct CoherentAmplitude {
    re: f64,
    im: f64,
}

/// Wire shape of an amplitude; conversion re-runs the finiteness checks.
#[derive(Serialize, Deserialize)]
struct AmplitudeParts {
    re: f64,
    im: f64,
}

impl TryFrom<AmplitudeParts> for CoherentAmplitude {
    type Error = Error;

    fn try_from(parts: AmplitudeParts) -> Result<Self> {
        Self::new(parts.re, parts.im)
    }
}

impl From<CoherentAmplitude> for AmplitudeParts {
    fn from(amplitude: CoherentAmplitude) -> AmplitudeParts {
        AmplitudeParts {
            re: amplitude.re,
            im: amplitude.im,
        }
    }
}

impl CoherentAmplitude {
    /// The vacuum state's amplitude.
    pub const VACUUM: Self = Self { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !re.is_finite() {
            return Err(Error::NonFinite {
                context: "CoherentAmplitude: real part",
                value: re,
            });
        }
        if !im.is_finite() {
            return Err(Error::NonFinite {
                context: "CoherentAmplitude: imaginary part",
                value: im,
            });
        }
        Ok(Self { re, im })
    }

    /// Amplitude of magnitude `radius` at angle `phase`.
    pub fn from_polar(radius: f64, phase: QuadraturePhase) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::OutOfDomain {
                context: "CoherentAmplitude::from_polar",
                message: format!("radius must be finite and nonnegative, got {radius}"),
            });
        }
        let phi = phase.radians();
        Ok(Self {
            re: radius * phi.cos(),
            im: radius * phi.sin(),
        })
    }

    pub fn re(self) -> f64 {
        self.re
    }

    pub fn im(self) -> f64 {
        self.im
    }

    pub fn as_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    /// Mean photon number |β|².
    pub fn abs_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn magnitude(self) -> f64 {
        self.abs_sq().sqrt()
    }

    /// Amplitude scaled by a real factor, as a beam splitter or a lossy
    /// channel does. `factor` must be finite.
    pub fn scaled(self, factor: f64) -> Self {
        assert!(factor.is_finite(), "scale factor must be finite");
        Self {
            re: factor * self.re,
            im: factor * self.im,
        }
    }

    /// Componentwise closeness, absolute tolerance.
    pub fn approx_eq(self, other: Self, tol: f64) -> bool {
        (self.re - other.re).abs() <= tol && (self.im - other.im).abs() <= tol
    }
}

/// Local-oscillator phase: the direction of the measured quadrature.
///
/// Stored unreduced so exact multiples of π keep their identity; all
/// comparisons happen on the circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuadraturePhase(f64);

impl TryFrom<f64> for QuadraturePhase {
    type Error = Error;

    fn try_from(radians: f64) -> Result<Self> {
        Self::new(radians)
    }
}

impl From<QuadraturePhase> for f64 {
    fn from(phi: QuadraturePhase) -> f64 {
        phi.0
    }
}

impl QuadraturePhase {
    pub const ZERO: Self = Self(0.0);

    pub fn new(radians: f64) -> Result<Self> {
        if radians.is_finite() {
            Ok(Self(radians))
        } else {
            Err(Error::NonFinite {
                context: "QuadraturePhase",
                value: radians,
            })
        }
    }

    /// The phase `numerator`·π/`denominator`, built directly from the
    /// rational so repeated constructions agree bit for bit.
    pub fn from_pi_fraction(numerator: i64, denominator: i64) -> Self {
        assert!(denominator != 0, "denominator must be nonzero");
        Self(numerator as f64 * PI / denominator as f64)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Representative in [0, 2π).
    pub fn reduced(self) -> f64 {
        let r = self.0.rem_euclid(2.0 * PI);
        if r == 2.0 * PI {
            0.0
        } else {
            r
        }
    }

    /// Distance on the circle, in [0, π].
    pub fn circular_distance(self, other: Self) -> f64 {
        let d = (self.0 - other.0).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    }

    pub fn approx_eq(self, other: Self, tol: f64) -> bool {
        self.circular_distance(other) <= tol
    }

    /// The quadrature direction orthogonal to this one.
    pub fn orthogonal(self) -> Self {
        Self(self.0 + PI / 2.0)
    }
}

/// A single homodyne outcome. Finite by construction.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuadratureValue(f64);

impl TryFrom<f64> for QuadratureValue {
    type Error = Error;

    fn try_from(x: f64) -> Result<Self> {
        Self::new(x)
    }
}

impl From<QuadratureValue> for f64 {
    fn from(x: QuadratureValue) -> f64 {
        x.0
    }
}

impl QuadratureValue {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_finite() {
            Ok(Self(x))
        } else {
            Err(Error::NonFinite {
                context: "QuadratureValue",
                value: x,
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Outcome density at `x` for a signal of real amplitude `alpha` probed at
/// phase offset `phi` from the signal's own phase:
/// √(2/π) exp{-2 (x - α cos φ)²}.
pub fn quad_pdf(x: QuadratureValue, alpha: f64, phi: QuadraturePhase) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(density_given_mean(x.value(), alpha * phi.radians().cos()))
}

/// Outcome density for the coherent state α e^{iφ_A} measured along φ_B.
/// Depends on the phases only through their difference.
pub fn coherent_quad_pdf(
    x: QuadratureValue,
    alpha: f64,
    phi_a: QuadraturePhase,
    phi_b: QuadraturePhase,
) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(density_given_mean(
        x.value(),
        alpha * (phi_a.radians() - phi_b.radians()).cos(),
    ))
}

/// Gaussian outcome density with the vacuum variance around `mean`.
pub(crate) fn density_given_mean(x: f64, mean: f64) -> f64 {
    let d = x - mean;
    (2.0 / PI).sqrt() * (-2.0 * d * d).exp()
}

/// Mean homodyne outcome Re(β e^{-iφ}) for amplitude `beta` along `phi_b`.
pub fn mean_quadrature(beta: CoherentAmplitude, phi_b: QuadraturePhase) -> f64 {
    let phi = phi_b.radians();
    beta.re() * phi.cos() + beta.im() * phi.sin()
}

/// Draws one homodyne outcome for `beta` along `phi_b`: Gaussian with mean
/// `mean_quadrature(beta, phi_b)` and the vacuum variance.
pub fn sample_quadrature<R: Rng + ?Sized>(
    rng: &mut R,
    beta: CoherentAmplitude,
    phi_b: QuadraturePhase,
) -> QuadratureValue {
    let normal = Normal::new(mean_quadrature(beta, phi_b), VACUUM_VARIANCE.sqrt())
        .expect("mean and deviation are finite");
    QuadratureValue(normal.sample(rng))
}

/// Coherent-state overlap ⟨β|α⟩ (first argument is the ket):
/// exp(-|α|²/2 - |β|²/2 + β̄ α).
pub fn coherent_overlap(alpha: CoherentAmplitude, beta: CoherentAmplitude) -> Complex64 {
    let a = alpha.as_complex();
    let b = beta.as_complex();
    let exponent = b.conj() * a - Complex64::new(0.5 * (a.norm_sqr() + b.norm_sqr()), 0.0);
    exponent.exp()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite {
            context: "signal amplitude",
            value: alpha,
        });
    }
    if alpha < 0.0 {
        return Err(Error::OutOfDomain {
            context: "signal amplitude",
            message: format!("must be nonnegative, got {alpha}"),
        });
    }
    Ok(())
}
