use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong inside the library.
///
/// Variants are grouped by the contract they enforce: argument validation,
/// numerical conditioning, protocol consistency, and wire/transport faults.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A numeric argument was NaN or infinite.
    #[error("{context}: expected a finite value, got {value}")]
    NonFinite { context: &'static str, value: f64 },

    /// A numeric argument fell outside its documented domain.
    #[error("{context}: {message}")]
    OutOfDomain {
        context: &'static str,
        message: String,
    },

    /// Adaptive quadrature could not meet the requested tolerance.
    #[error("quadrature on [{a}, {b}] stalled at error estimate {estimate:e} (tolerance {tolerance:e})")]
    QuadratureNoConvergence {
        a: f64,
        b: f64,
        estimate: f64,
        tolerance: f64,
    },

    /// A protocol name failed to parse.
    #[error("unknown protocol name {0:?}")]
    UnknownProtocol(String),

    /// The requested phase is not one of the protocol's receiver phases.
    #[error("{protocol}: {phi} rad is not a receiver phase of this protocol")]
    PhaseNotInProtocol { protocol: String, phi: f64 },

    /// A state index exceeded the alphabet size.
    #[error("{protocol}: state index {index} out of range (alphabet has {len} states)")]
    StateIndexOutOfRange {
        protocol: String,
        index: usize,
        len: usize,
    },

    /// A signal mean matched none of the values the encoding rule admits.
    /// This indicates a malformed alphabet, never a valid runtime state.
    #[error("{protocol}: state {index} has quadrature mean {mean} at phase {phi} rad, which the encoding rule does not cover")]
    ClassificationFault {
        protocol: String,
        index: usize,
        phi: f64,
        mean: f64,
    },

    /// Mixture weights must be positive and sum to one.
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    /// Conditioning on a wrong-basis announcement is meaningless: the round
    /// carries no bit.
    #[error("announcement marks the round wrong-basis; no bit-conditioned states exist")]
    WrongBasisAnnouncement,

    /// A pair-set protocol needs the announced subset to condition on.
    #[error("protocol announces pair sets, but the announcement carries none")]
    MissingPairSet,

    /// A matrix that must be positive semidefinite had an eigenvalue too
    /// negative to attribute to roundoff.
    #[error("eigenvalue {value:e} is more negative than the clamping budget {budget:e}")]
    EigenvalueClampExceeded { value: f64, budget: f64 },

    /// The variance records do not determine the requested moments.
    #[error("variance system is singular: {0}")]
    SingularSystem(String),

    /// Security-bound values computed in different announcement contexts
    /// disagreed beyond tolerance.
    #[error("overlap bound deviates across contexts by {max_deviation:e} (tolerance {tolerance:e})")]
    BoundDeviation {
        max_deviation: f64,
        tolerance: f64,
    },

    /// A wire message arrived out of protocol order.
    #[error("wire message out of order: {0}")]
    MessageOrder(String),

    /// The peer speaks an unsupported wire version.
    #[error("wire version {got} not supported (expected {expected})")]
    WireVersion { got: u32, expected: u32 },

    /// A wire line did not parse as a well-formed message.
    #[error("malformed wire message: {0}")]
    WireFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
