use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("operation requires sigma > 0")]
    ZeroNoise,

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state blow-up at t = {t}: |z| = {norm:e}")]
    BlowUp { t: f64, norm: f64 },

    #[error("tangent blow-up at t = {t}")]
    TangentBlowUp { t: f64 },

    #[error("kappa bound undefined: alpha + pi K sigma^2 = {denominator} <= 0")]
    BoundUndefined { denominator: f64 },

    #[error("cloud not collapsed: diameter {diameter:e} exceeds {epsilon:e}")]
    NotCollapsed { diameter: f64, epsilon: f64 },

    #[error("no decay: distance never dropped below half its initial value")]
    NoDecay,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Numeric failures (as opposed to validation failures).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::TangentBlowUp { .. }
                | Error::NotCollapsed { .. }
                | Error::NoDecay
                | Error::BoundUndefined { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
