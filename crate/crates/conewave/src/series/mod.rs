//! Two-scale truncated expansion algebra in the inner variable R, the cone
//! variable a = r/t, and the small parameter b = 1/(t*lambda), with log R and
//! log(1-a) corrections.

pub mod cone;
pub mod inner;
pub mod ladder;
mod mixed;

pub use cone::{BetaExponent, ConeExpansion, ConeKind, SingularTerm};
pub use inner::InnerExpansion;
pub use ladder::LogLadder;
pub use mixed::{MixedExpansion, MixedTerm, Rewrite};

/// Truncation depths and switch points shared by all expansion arithmetic.
/// The underlying series converge; these depths only fix how much of them we
/// store and where evaluation switches representation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TruncationConfig {
    /// Taylor coefficients kept at R = 0 (per expansion).
    pub zero_terms: usize,
    /// Ladder rows kept at R = infinity.
    pub inf_terms: usize,
    /// Maximum stored power of b in mixed expansions.
    pub b_degree: u32,
    /// Switch radii for inner expansions: Taylor below, ladder above.
    pub zone: (f64, f64),
    /// Interval of R where end representations are cross-validated.
    pub match_window: (f64, f64),
    /// Chebyshev degree of mid-range interpolants.
    pub mid_cheb: usize,
    /// Tolerance for the cross-zone agreement checks.
    pub match_tol: f64,
    /// Taylor coefficients kept at a = 0 for cone expansions.
    pub cone_zero_terms: usize,
    /// Series terms kept at a = 1 (analytic and singular parts).
    pub cone_reg_terms: usize,
    /// Switch points in a for cone expansions.
    pub cone_zone: (f64, f64),
    /// Relative noise threshold used by classification.
    pub class_tol: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            zero_terms: 24,
            inf_terms: 12,
            b_degree: 6,
            zone: (0.8, 10.0),
            match_window: (1.0, 4.0),
            mid_cheb: 72,
            match_tol: 1e-8,
            cone_zero_terms: 40,
            cone_reg_terms: 24,
            cone_zone: (0.3, 0.9),
            class_tol: 1e-9,
        }
    }
}
