use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pole on evaluation grid at {freq_hz} Hz")]
    PoleOnGrid { freq_hz: f64 },

    #[error("delay in algebraic loop: feedback composition requires delay-free operands (compose in FRF space instead)")]
    DelayInAlgebraicLoop,

    #[error("no 0 dB crossover on the frequency grid")]
    NoCrossover,

    #[error("bandwidth beyond grid: |T| never leaves the +/-3 dB band")]
    BandwidthBeyondGrid,

    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },

    #[error("delay of {delay_s} s is not an integer multiple of the sample time {ts} s; apply a Pade approximation first")]
    FractionalDelay { delay_s: f64, ts: f64 },

    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },

    #[error("degenerate reset ratio at omega = {omega} rad/s")]
    DegenerateReset { omega: f64 },

    #[error("inner-loop singularity (|1 + G*Cd| < 1e-12) at {freq_hz} Hz")]
    InnerLoopSingular { freq_hz: f64 },

    #[error("singular loop denominator at {freq_hz} Hz")]
    SingularLoop { freq_hz: f64 },

    #[error("requested phase lead {requested_deg} deg is infeasible; achievable maximum is {max_deg:.3} deg")]
    InfeasiblePhaseLead { requested_deg: f64, max_deg: f64 },

    #[error("rank-deficient normal equations in rational fit")]
    RankDeficient,

    #[error("{samples_per_period} samples per period is not an integer; adjust the frequency grid")]
    NonIntegerPeriod { samples_per_period: f64 },

    #[error("simulation diverged at sample {index}")]
    Divergence { index: usize },

    #[error("frequency {freq_hz} Hz is outside the measured FRF range [{min_hz}, {max_hz}] Hz")]
    OutsideFrfRange { freq_hz: f64, min_hz: f64, max_hz: f64 },

    #[error("FRF data error at line {line}: {msg}")]
    FrfData { line: usize, msg: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
