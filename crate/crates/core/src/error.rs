//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Total energy sits within the numerical guard band of a channel
    /// threshold, where the momentum factor 1/sqrt(E - eps_j) blows up.
    #[error("energy {energy} within {guard} of channel threshold {channel_energy}")]
    ThresholdProximity {
        energy: f64,
        channel_energy: f64,
        guard: f64,
    },

    /// The scattering linear system is too ill-conditioned to trust; this
    /// flags a resonance pole at the requested energy.
    #[error("scattering system at E={energy} is singular (condition estimate {condition:.3e})")]
    SingularSystem { energy: f64, condition: f64 },

    /// The closed-form normalization denominator vanished.
    #[error("resonance pole at E={energy}: |1/N_psi| = {inv_norm_magnitude:.3e}")]
    ResonancePole {
        energy: f64,
        inv_norm_magnitude: f64,
    },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error(
        "quadrature failed: achieved rel. error {achieved:.3e} > target {target:.3e} after {panels} panels"
    )]
    QuadratureFailure {
        achieved: f64,
        target: f64,
        panels: usize,
    },

    /// Both thermal integrals underflowed; the ratio I(k,l) is reported as
    /// missing rather than 0 or infinity.
    #[error("I({j_out},{j_in}) undefined: forward/reverse integrals underflow")]
    UndefinedRatio { j_out: usize, j_in: usize },

    /// A rate table is missing off-diagonal entries needed downstream.
    #[error("rate table incomplete: missing entry ({k},{l})")]
    IncompleteTable { k: usize, l: usize },

    /// The Pauli generator does not connect all levels; the stationary state
    /// is not unique. Components lists the invariant subspaces.
    #[error("generator not ergodic: invariant subspaces {components:?}")]
    NonErgodic { components: Vec<Vec<usize>> },

    /// Flux value produces a level crossing.
    #[error("degenerate spectrum: energies {energies:?} (min gap {min_gap:.3e})")]
    DegenerateSpectrum { energies: Vec<f64>, min_gap: f64 },

    /// Overlap matrix supplied to the coupling builder is not unitary.
    #[error("overlap matrix not unitary: max deviation {deviation:.3e}")]
    NonUnitaryBasis { deviation: f64 },

    /// A logarithm was requested at zero probability with nonzero flow.
    #[error("domain error: {0}")]
    DomainError(String),

    /// Constructor or precondition violation.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
