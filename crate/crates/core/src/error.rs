use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time shift {tau} s is not a multiple of the sample interval {dt} s")]
    OffGrid { tau: f64, dt: f64 },

    #[error("sample intervals differ: {0} s vs {1} s")]
    SampleIntervalMismatch(f64, f64),

    #[error("signal grids are not aligned (time origins {0} s and {1} s)")]
    GridMisaligned(f64, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient sequence has {got} entries, lattice has {expected}")]
    LatticeMismatch { expected: usize, got: usize },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("a random number generator is required for the {0} distortion")]
    MissingRng(&'static str),

    #[error("time {t} s precedes the synchronization instant {t_sync} s")]
    BeforeSync { t: f64, t_sync: f64 },

    #[error("closed form requires delay spread plus time offset inside the cyclic prefix ({reach} s > {tcp} s); use the general corollary bound")]
    CyclicPrefixViolated { reach: f64, tcp: f64 },

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
