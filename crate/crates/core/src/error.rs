use thiserror::Error;

/// Errors produced by the evaluators and estimators in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The quantity is infinite at the point requested (for example a
    /// hypergeometric function evaluated at x = 1 with c - a - b <= 0).
    #[error("divergent-at-one: {0}")]
    DivergentAtOne(String),

    #[error("quadrature-failed: last estimate {last:e}, previous estimate {previous:e}")]
    QuadratureFailed { last: f64, previous: f64 },

    /// The sampled surface degenerates (e.g. m = 2 with |w|^2 = tau) and
    /// the radial solve has no positive root on a set of full measure.
    #[error("degenerate surface: {0}")]
    DegenerateSurface(String),

    #[error("fit-failed: r^2 = {r2:.6}")]
    FitFailed { r2: f64 },

    #[error("grid-too-coarse: diagonal share {share:.3} of the total")]
    GridTooCoarse { share: f64 },

    #[error("schur-integral-divergent: exponent at 0 = {at_zero:.4}, at infinity = {at_infinity:.4}")]
    SchurDivergent { at_zero: f64, at_infinity: f64 },

    #[error("homogeneity-violated: {0}")]
    HomogeneityViolated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
