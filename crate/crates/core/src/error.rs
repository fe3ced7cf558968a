use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mode ({},{}) sits exactly at cutoff", mode[0], mode[1])]
    Cutoff { mode: [i32; 2] },
    #[error("transverse grid of {grid} points aliases bandwidth {bandwidth}")]
    Aliasing { grid: usize, bandwidth: usize },
    #[error("matrix is numerically singular at pivot {0}")]
    SingularMatrix(usize),
    #[error("rank-update core matrix is numerically singular (ratio {0:e})")]
    SingularCapacitance(f64),
    #[error("assembly: {0}")]
    Assembly(String),
    #[error("at alpha = ({:.6e}, {:.6e}): {source}", alpha[0], alpha[1])]
    AtAlpha { alpha: [f64; 2], source: Box<Error> },
    #[error("iteration stalled after {iterations} steps with relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("medium: {0}")]
    Medium(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("data format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_alpha(self, alpha: [f64; 2]) -> Self {
        Error::AtAlpha { alpha, source: Box::new(self) }
    }
}
