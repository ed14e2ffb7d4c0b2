//! Constructive pipeline for type-II blow-up profiles of the radial quintic wave
//! equation u_tt - u_rr - (2/r)u_r = u^5 with concentration scale lambda(t) = t^{-1-nu}.
//!
//! The pipeline has four stages:
//! 1. bulk construction of approximate profiles u_k inside the light cone by an
//!    alternating odd/even correction scheme ([`bulk`], on top of [`series`] and [`ode`]),
//! 2. spectral data of the linearized operator -d²/dR² - 5W⁴ on the half line
//!    ([`spectral`]),
//! 3. an explicit wave parametrix on the distorted Fourier side applied to the
//!    leading source term ([`parametrix`]),
//! 4. independent finite-difference and quadrature verification of the decay and
//!    structure claims ([`verify`]).

pub mod bulk;
pub mod ode;
pub mod parametrix;
pub mod scaling;
pub mod series;
pub mod spectral;
pub mod util;
pub mod verify;

/// Errors shared across pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("truncation overflow: requested depth {requested} exceeds stored {stored}")]
    TruncationOverflow { requested: usize, stored: usize },
    #[error("inconsistent cone coordinates: |a - R*b| = {mismatch:.3e} exceeds tolerance")]
    InconsistentCoordinates { mismatch: f64 },
    #[error("rewrite not applicable: {0}")]
    RewriteNotApplicable(String),
    #[error("classification failure: {0}")]
    ClassificationFailure(String),
    #[error("input class mismatch: {0}")]
    InputClass(String),
    #[error("quadrature failure near {location}: refinement budget exceeded (err {err:.3e})")]
    QuadratureFailure { location: String, err: f64 },
    #[error("out of cone: r={r} t={t}")]
    OutOfCone { r: f64, t: f64 },
    #[error("eigenvalue bracketing failed on ({lo}, {hi})")]
    Bracketing { lo: f64, hi: f64 },
    #[error("matching window disagreement at xi={xi:.3e}: {err:.3e}")]
    MatchingWindow { xi: f64, err: f64 },
    #[error("Wronskian degeneracy: {0}")]
    WronskianDegenerate(String),
    #[error("fixed point failed to contract (ratio {ratio:.3})")]
    NonContraction { ratio: f64 },
    #[error("fit quality too low: R²={r2:.4}")]
    FitQuality { r2: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("resonance: {0}")]
    Resonance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
