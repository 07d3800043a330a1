use thiserror::Error;

use crate::model::Interval;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("single-site potential is identically zero")]
    EmptySupport,
    #[error("single-site potential must have nonzero first and last entries")]
    UnnormalizedSupport,
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("couplings cover {have} but {need} is required")]
    InsufficientCouplings { have: Interval, need: Interval },
    #[error("empty box")]
    EmptyBox,
    #[error("site {site} lies outside {domain}")]
    SiteOutsideBox { site: i64, domain: Interval },
    #[error("sub-box {sub} is not contained in {outer}")]
    BadSubbox { sub: Interval, outer: Interval },
    #[error("shifted operator is numerically singular (pivot ratio {ratio:.3e})")]
    NearSingular { ratio: f64 },
    #[error("matrix V is singular")]
    SingularV,
    #[error("combination sum alpha_k V_k is singular")]
    SingularCombination,
    #[error("density satisfies neither regularity assumption")]
    NoApplicableAssumption,
    #[error("quadrature did not converge: estimate {estimate:.6e}, error {error:.3e}")]
    QuadratureFailure { estimate: f64, error: f64 },
    #[error("single-site potential has a gap in its support (r = {r})")]
    NotConnectedSupport { r: usize },
    #[error("no admissible alpha found")]
    SearchExhausted,
    #[error("exponent {s} outside ({lo}, {hi})")]
    ExponentOutOfRange { s: f64, lo: f64, hi: f64 },
    #[error("{resamples} resamples over {samples} samples exceeds the 1e-3 cap")]
    ExcessiveResampling { resamples: u64, samples: u64 },
    #[error("fit design is degenerate")]
    DegenerateDesign,
    #[error("sites {x} and {y} are closer than the required separation {required}")]
    SeparationViolated { x: i64, y: i64, required: i64 },
    #[error("tridiagonal eigensolver failed to converge")]
    ConvergenceFailure,
    #[error("polynomial p_u has a root in [0, inf); no positive block can be extracted")]
    NotExtractable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
