//! Beam-splitting-attack analysis.
//!
//! The eavesdropper inserts a beam splitter into the lossy channel and
//! keeps the √(1-η) fraction of every pulse. After the public sifting
//! exchange she holds, per kept round, one of two conditional states ρ₊
//! (sender's bit 1) and ρ₋ (bit 0). How well she can distinguish them is
//! captured by the Uhlmann fidelity F(ρ₊, ρ₋); the receiver then deletes a
//! fraction τ = log₂(2 - F²) of the key to erase her knowledge.
//!
//! Three independent routes to the same number live here:
//!
//! - the closed form e^{-2a²} for mirrored two-component mixtures,
//! - explicit purifications whose overlap cancels to e^{-2(1-η)α²}
//!   term by term regardless of the mixture size,
//! - a numerical Uhlmann fidelity evaluated in the exact span of the
//!   participating coherent states via their Gram matrix.
//!
//! The module also infers quadrature moments from variance records taken
//! at several local-oscillator phases, the receiver-side check that the
//! source really is a minimum-uncertainty state.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::gaussian::{coherent_overlap, CoherentAmplitude, QuadraturePhase};
use crate::protocol::{Announcement, AnnouncementStyle, Classification, ProtocolSpec};
use crate::{Error, Result};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Hard cap on the truncated number-basis dimension used by the numeric
/// fidelity; reached only for amplitudes far outside the protocol domain.
pub const MAX_FOCK_DIMENSION: usize = 200;

/// How negative an eigenvalue of a nominally PSD matrix may be before it is
/// treated as an error instead of roundoff.
pub const EIGENVALUE_CLAMP_BUDGET: f64 = 1e-12;

/// All bound routes must agree with e^{-2(1-η)α²} within this tolerance.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// A finite mixture of coherent states: positive weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedSignal {
    components: Vec<(f64, CoherentAmplitude)>,
}

impl MixedSignal {
    pub fn new(components: Vec<(f64, CoherentAmplitude)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        let mut sum = 0.0;
        for &(w, _) in &components {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidMixture(format!(
                    "weight {w} is not strictly positive"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { components })
    }

    /// A single coherent state as a trivial mixture.
    pub fn pure(state: CoherentAmplitude) -> Self {
        Self {
            components: vec![(1.0, state)],
        }
    }

    /// Equal weights over the given states.
    pub fn uniform(states: Vec<CoherentAmplitude>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        let w = 1.0 / states.len() as f64;
        Ok(Self {
            components: states.into_iter().map(|s| (w, s)).collect(),
        })
    }

    pub fn components(&self) -> &[(f64, CoherentAmplitude)] {
        &self.components
    }

    pub fn is_pure(&self) -> bool {
        self.components.len() == 1
    }
}

/// The eavesdropper's bit-conditioned states for one announcement context.
///
/// Restricts the alphabet to the states compatible with the receiver phase
/// and the sifting announcement, splits them by encoded bit, and scales
/// every amplitude by the tapped fraction √(1-η). Returns (ρ₊, ρ₋) for
/// bits 1 and 0.
pub fn eve_states(
    spec: &ProtocolSpec,
    phi_b: QuadraturePhase,
    eta: f64,
    announced: Announcement,
) -> Result<(MixedSignal, MixedSignal)> {
    check_eta(eta)?;
    if announced.wrong_basis {
        return Err(Error::WrongBasisAnnouncement);
    }
    let phase = spec.phase_index(phi_b)?;
    let members: Vec<usize> = match spec.style() {
        AnnouncementStyle::PairSet => {
            let pair = announced.pair_set.ok_or(Error::MissingPairSet)?;
            spec.pair_states(phase, pair)?.to_vec()
        }
        _ => {
            if announced.pair_set.is_some() {
                return Err(Error::OutOfDomain {
                    context: "eve_states",
                    message: format!(
                        "{} never announces pair sets, but the announcement carries one",
                        spec.id()
                    ),
                });
            }
            let mut classes = spec.announcement_classes(phase)?;
            classes.swap_remove(0)
        }
    };

    let tap = (1.0 - eta).sqrt();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for s in members {
        let amp = spec.states()[s].scaled(tap);
        match spec.classification(s, phase)? {
            Classification::Bit(1) => plus.push(amp),
            Classification::Bit(_) => minus.push(amp),
            Classification::WrongBasis => {
                unreachable!("announcement classes contain only kept states")
            }
        }
    }
    Ok((MixedSignal::uniform(plus)?, MixedSignal::uniform(minus)?))
}

/// Closed-form fidelity between the mirrored two-component mixtures
/// ρ = ½(|a+ib⟩⟨a+ib| + |a-ib⟩⟨a-ib|) and its reflection through the
/// imaginary axis: e^{-2a²}, independent of b.
pub fn fidelity_two_mixture_analytic(a: f64, b: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "fidelity_two_mixture_analytic",
                value: v,
            });
        }
        if v < 0.0 {
            return Err(Error::OutOfDomain {
                context: "fidelity_two_mixture_analytic",
                message: format!("{name} must be nonnegative, got {v}"),
            });
        }
    }
    Ok((-2.0 * a * a).exp())
}

/// Uhlmann fidelity Tr√(√ρ σ √ρ) between two coherent-state mixtures,
/// computed in a truncated number basis sized so the neglected photon-number
/// tail is far below working precision.
///
/// The number basis stays orthonormal no matter how close the participating
/// amplitudes are, so nearly collinear ensembles cost nothing in
/// conditioning. The trace is evaluated as the nuclear norm ‖√σ √ρ‖₁,
/// which sidesteps the precision loss of eigendecomposing the
/// near-singular triple product.
pub fn fidelity_numeric(rho: &MixedSignal, sigma: &MixedSignal) -> Result<f64> {
    let dim = fock_dimension(&[rho, sigma])?;
    let rho_m = fock_density(rho, dim);
    let sigma_m = fock_density(sigma, dim);

    let product = psd_sqrt(&sigma_m)? * psd_sqrt(&rho_m)?;
    let f: f64 = product.svd(false, false).singular_values.iter().sum();
    Ok(f.min(1.0))
}

/// An explicit purification pair for the grid-family conditional states:
/// |ψ±⟩ = (n+2)^{-1/2} Σ_k e^{∓iω(k)} |β±(k)⟩|k⟩ with β±(k) the tapped
/// amplitudes √(1-η)α(±1 + i t_k) on the t_k = (2k-n-1)/(n+1) grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurificationSpec {
    n: u32,
    eta: f64,
    alpha: f64,
    phases: Vec<f64>,
}

impl PurificationSpec {
    pub fn new(n: u32, eta: f64, alpha: f64) -> Result<Self> {
        check_eta(eta)?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::OutOfDomain {
                context: "PurificationSpec: alpha",
                message: format!("must be finite and strictly positive, got {alpha}"),
            });
        }
        let phases = (0..=n as i64 + 1)
            .map(|k| (1.0 - eta) * alpha * alpha * grid_point(k, n))
            .collect();
        Ok(Self {
            n,
            eta,
            alpha,
            phases,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The ancilla phases ω(k) = (1-η)α²(2k-n-1)/(n+1), k = 0..=n+1;
    /// antisymmetric about the midpoint.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Tapped amplitude β±(k) = √(1-η) α (±1 + i t_k).
    pub fn beta(&self, plus: bool, k: usize) -> CoherentAmplitude {
        assert!(k < self.phases.len(), "k out of range");
        let tap = (1.0 - self.eta).sqrt();
        let sign = if plus { 1.0 } else { -1.0 };
        let t = grid_point(k as i64, self.n);
        CoherentAmplitude::new(sign * tap * self.alpha, tap * self.alpha * t)
            .expect("tapped amplitudes are finite")
    }

    /// The signal state the purification leaves after discarding the
    /// ancilla: the uniform mixture of the β±(k).
    pub fn traced_signal(&self, plus: bool) -> Result<MixedSignal> {
        MixedSignal::uniform((0..self.phases.len()).map(|k| self.beta(plus, k)).collect())
    }
}

fn grid_point(k: i64, n: u32) -> f64 {
    (2 * k - n as i64 - 1) as f64 / (n as f64 + 1.0)
}

/// |⟨ψ₊|ψ₋⟩| by direct complex summation over the purification's terms.
/// Equals e^{-2(1-η)α²} for every n: each term's overlap phase is cancelled
/// exactly by the ancilla phase ω(k).
pub fn purification_overlap(p: &PurificationSpec) -> f64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, &omega) in p.phases().iter().enumerate() {
        let plus = p.beta(true, k);
        let minus = p.beta(false, k);
        // ⟨β₊|β₋⟩, then the ancilla phase e^{-2iω}.
        sum += coherent_overlap(minus, plus) * Complex64::from_polar(1.0, -2.0 * omega);
    }
    (sum / p.phases().len() as f64).norm()
}

/// Fraction of the sifted key deleted during privacy amplification:
/// log₂(2 - overlap²), in [0, 1].
pub fn tau_u(overlap: f64) -> Result<f64> {
    if !overlap.is_finite() {
        return Err(Error::NonFinite {
            context: "tau_u",
            value: overlap,
        });
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::OutOfDomain {
            context: "tau_u",
            message: format!("overlap must lie in [0, 1], got {overlap}"),
        });
    }
    Ok((2.0 - overlap * overlap).log2())
}

/// The distinguishability bound of one protocol at one transmission.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityBound {
    /// Purification overlap |⟨ψ₊|ψ₋⟩| (worst context).
    pub overlap: f64,
    /// Uhlmann fidelity of the conditional states (worst context).
    pub fidelity: f64,
    /// Deletion fraction log₂(2 - fidelity²).
    pub tau_u: f64,
    /// Largest deviation of any computed route, in any announcement
    /// context, from e^{-2(1-η)α²}.
    pub max_deviation: f64,
}

/// Evaluates the beam-splitting bound for every announcement context of
/// the protocol and checks they all land on e^{-2(1-η)α²}.
///
/// Pure contexts (every basis-announcing and pair-set context) use the
/// direct coherent overlap; mixed contexts additionally run the numerical
/// Uhlmann fidelity and a paired purification, so the closed form is
/// cross-checked by independent routes wherever mixtures actually occur.
pub fn protocol_overlap_bound(spec: &ProtocolSpec, eta: f64) -> Result<SecurityBound> {
    check_eta(eta)?;
    let alpha = spec.alpha();
    let a_e = (1.0 - eta).sqrt() * alpha;
    let expect = (-2.0 * (1.0 - eta) * alpha * alpha).exp();
    let tol = crate::protocol::MEAN_TOLERANCE_SCALE * alpha.max(1.0);

    let mut worst_overlap = f64::INFINITY;
    let mut worst_fidelity = f64::INFINITY;
    let mut max_deviation: f64 = 0.0;

    for (p, &phi_b) in spec.phases().iter().enumerate() {
        for (class_id, class) in spec.announcement_classes(p)?.into_iter().enumerate() {
            let announced = Announcement {
                wrong_basis: false,
                pair_set: (spec.style() == AnnouncementStyle::PairSet)
                    .then_some(class_id as u32),
            };
            let (rho_plus, rho_minus) = eve_states(spec, phi_b, eta, announced)?;
            debug_assert_eq!(rho_plus.components().len(), class.len() / 2 + class.len() % 2);

            let overlap;
            let fidelity;
            if rho_plus.is_pure() && rho_minus.is_pure() {
                let value =
                    coherent_overlap(rho_minus.components()[0].1, rho_plus.components()[0].1)
                        .norm();
                overlap = value;
                fidelity = value;
            } else {
                overlap = paired_purification_overlap(&rho_plus, &rho_minus, phi_b, a_e, tol)?;
                fidelity = fidelity_numeric(&rho_plus, &rho_minus)?;
            }
            worst_overlap = worst_overlap.min(overlap);
            worst_fidelity = worst_fidelity.min(fidelity);
            max_deviation = max_deviation
                .max((overlap - expect).abs())
                .max((fidelity - expect).abs());
        }
    }

    if max_deviation > BOUND_TOLERANCE {
        return Err(Error::BoundDeviation {
            max_deviation,
            tolerance: BOUND_TOLERANCE,
        });
    }
    Ok(SecurityBound {
        overlap: worst_overlap,
        fidelity: worst_fidelity,
        tau_u: tau_u(worst_fidelity)?,
        max_deviation,
    })
}

/// Purification overlap for one announcement context, built directly from
/// the conditional mixtures: components are rotated into the measured
/// frame, paired by their orthogonal offset, and summed with the phase
/// e^{-2i a b_j} that cancels each term's overlap phase.
fn paired_purification_overlap(
    rho_plus: &MixedSignal,
    rho_minus: &MixedSignal,
    phi_b: QuadraturePhase,
    a_e: f64,
    tol: f64,
) -> Result<f64> {
    let m = rho_plus.components().len();
    if rho_minus.components().len() != m {
        return Err(Error::InvalidMixture(format!(
            "conditional mixtures have {m} and {} components",
            rho_minus.components().len()
        )));
    }
    let rot = Complex64::from_polar(1.0, -phi_b.radians());
    let uniform = 1.0 / m as f64;
    let collect = |signal: &MixedSignal, sign: f64| -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(m);
        for &(w, amp) in signal.components() {
            if (w - uniform).abs() > WEIGHT_TOLERANCE {
                return Err(Error::InvalidMixture(format!(
                    "expected uniform weight {uniform}, got {w}"
                )));
            }
            let z = amp.as_complex() * rot;
            if (z.re - sign * a_e).abs() > tol {
                return Err(Error::InvalidMixture(format!(
                    "component at {z} is off the ±a line (a = {a_e})"
                )));
            }
            out.push(z);
        }
        out.sort_by(|x, y| x.im.total_cmp(&y.im));
        Ok(out)
    };
    let plus = collect(rho_plus, 1.0)?;
    let minus = collect(rho_minus, -1.0)?;

    let mut sum = Complex64::new(0.0, 0.0);
    for (bp, bm) in plus.iter().zip(&minus) {
        if (bp.im - bm.im).abs() > tol {
            return Err(Error::InvalidMixture(format!(
                "offsets {} and {} do not pair up",
                bp.im, bm.im
            )));
        }
        let ket = CoherentAmplitude::new(bm.re, bm.im)?;
        let bra = CoherentAmplitude::new(bp.re, bp.im)?;
        let omega = a_e * bp.im;
        sum += coherent_overlap(ket, bra) * Complex64::from_polar(1.0, -2.0 * omega);
    }
    Ok((sum * Complex64::new(uniform, 0.0)).norm())
}

/// A variance measurement at one local-oscillator phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub phase: QuadraturePhase,
    pub mean: f64,
    pub variance: f64,
}

/// Quadrature moments inferred from variance records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyInference {
    /// (Δx₁)², the variance along phase 0.
    pub var_x1: f64,
    /// (Δx₂)², the variance along phase π/2.
    pub var_x2: f64,
    /// The symmetrized covariance ⟨x̂₁x̂₂ + x̂₂x̂₁⟩/2 - ⟨x̂₁⟩⟨x̂₂⟩; absent
    /// when every record sits on a quadrature axis, where it cannot be
    /// observed.
    pub sym_covariance: Option<f64>,
    /// Whether (Δx₁)²(Δx₂)² ≥ 1/16 holds.
    pub heisenberg_satisfied: bool,
    /// Whether both variances equal the vacuum value 1/4 within 1e-9.
    pub minimum_uncertainty: bool,
    /// Largest absolute residual of the fit over the input records.
    pub residual: f64,
}

/// Solves (Δx_φ)² = (Δx₁)²cos²φ + (Δx₂)²sin²φ + C sinφ cosφ for the three
/// unknowns, least-squares when over-determined. When every phase lies on
/// an axis (sinφcosφ = 0 throughout) the cross term is unobservable and
/// only the two variances are solved for.
pub fn uncertainty_infer(records: &[VarianceRecord]) -> Result<UncertaintyInference> {
    if records.len() < 2 {
        return Err(Error::SingularSystem(format!(
            "need at least 2 variance records, got {}",
            records.len()
        )));
    }
    for r in records {
        if !r.variance.is_finite() || r.variance < 0.0 {
            return Err(Error::OutOfDomain {
                context: "uncertainty_infer",
                message: format!("variance must be finite and nonnegative, got {}", r.variance),
            });
        }
    }

    let axis_aligned = records.iter().all(|r| {
        let phi = r.phase.radians();
        (phi.sin() * phi.cos()).abs() < 1e-12
    });
    let cols = if axis_aligned { 2 } else { 3 };

    let design = DMatrix::<f64>::from_fn(records.len(), cols, |i, j| {
        let phi = records[i].phase.radians();
        match j {
            0 => phi.cos() * phi.cos(),
            1 => phi.sin() * phi.sin(),
            _ => phi.sin() * phi.cos(),
        }
    });
    let rhs = DVector::<f64>::from_iterator(records.len(), records.iter().map(|r| r.variance));

    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if svd.singular_values.len() < cols || s_min < 1e-10 * s_max.max(1.0) {
        return Err(Error::SingularSystem(format!(
            "phases do not determine the moments (singular values {:?})",
            svd.singular_values.as_slice()
        )));
    }
    let solution = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;

    let fitted = &design * &solution;
    let residual = (fitted - &rhs).abs().max();

    let var_x1 = solution[0];
    let var_x2 = solution[1];
    let sym_covariance = (!axis_aligned).then(|| solution[2] / 2.0);
    let heisenberg_satisfied = var_x1 * var_x2 + 1e-12 >= 1.0 / 16.0;
    let minimum_uncertainty = heisenberg_satisfied
        && (var_x1 - 0.25).abs() <= 1e-9
        && (var_x2 - 0.25).abs() <= 1e-9;

    Ok(UncertaintyInference {
        var_x1,
        var_x2,
        sym_covariance,
        heisenberg_satisfied,
        minimum_uncertainty,
        residual,
    })
}

fn check_eta(eta: f64) -> Result<()> {
    if !eta.is_finite() {
        return Err(Error::NonFinite {
            context: "transmission",
            value: eta,
        });
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::OutOfDomain {
            context: "transmission",
            message: format!("must lie in (0, 1], got {eta}"),
        });
    }
    Ok(())
}

/// Number-basis dimension for the given signals: the Poisson photon-number
/// distribution of the largest amplitude, padded far past its upper tail.
fn fock_dimension(signals: &[&MixedSignal]) -> Result<usize> {
    let mu = signals
        .iter()
        .flat_map(|s| s.components())
        .map(|&(_, a)| a.abs_sq())
        .fold(0.0, f64::max);
    let dim = (mu + 12.0 * mu.sqrt() + 30.0).ceil() as usize;
    if dim > MAX_FOCK_DIMENSION {
        return Err(Error::OutOfDomain {
            context: "fidelity_numeric",
            message: format!(
                "mean photon number {mu} needs a {dim}-dimensional truncation, over the cap {MAX_FOCK_DIMENSION}"
            ),
        });
    }
    Ok(dim)
}

/// Number-basis coefficients of |β⟩: c_n = e^{-|β|²/2} βⁿ/√n!.
fn fock_state(beta: CoherentAmplitude, dim: usize) -> DVector<Complex64> {
    let b = beta.as_complex();
    let mut coeffs = DVector::<Complex64>::zeros(dim);
    let mut current = Complex64::new((-0.5 * beta.abs_sq()).exp(), 0.0);
    coeffs[0] = current;
    for n in 1..dim {
        current *= b / Complex64::new((n as f64).sqrt(), 0.0);
        coeffs[n] = current;
    }
    coeffs
}

/// The density matrix of a mixture in the truncated number basis.
fn fock_density(signal: &MixedSignal, dim: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for &(w, a) in signal.components() {
        let v = fock_state(a, dim);
        m += (&v * v.adjoint()) * Complex64::new(w, 0.0);
    }
    m
}

fn hermitized(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn clamp_psd_eigenvalue(lambda: f64) -> Result<f64> {
    if lambda < -EIGENVALUE_CLAMP_BUDGET {
        return Err(Error::EigenvalueClampExceeded {
            value: lambda,
            budget: EIGENVALUE_CLAMP_BUDGET,
        });
    }
    Ok(lambda.max(0.0))
}

/// Matrix square root of a Hermitian PSD matrix by eigendecomposition,
/// with tiny negative eigenvalues clamped to zero.
fn psd_sqrt(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let eig = hermitized(m).symmetric_eigen();
    let d = eig.eigenvalues.len();
    let mut out = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..d {
        let root = clamp_psd_eigenvalue(eig.eigenvalues[k])?.sqrt();
        let col = eig.eigenvectors.column(k);
        out += (col * col.adjoint()) * Complex64::new(root, 0.0);
    }
    Ok(out)
}
