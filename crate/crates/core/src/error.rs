use num_complex::Complex64;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("size cap exceeded: {what} = {value} > {cap}")]
    SizeCap {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("partition is crossing")]
    Crossing,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("standard part is singular")]
    Singular,

    #[error("block {0:?} is not a block of the partition")]
    NotABlock(Vec<usize>),

    #[error("no infinitesimal functional attached to this law")]
    MissingInf,

    #[error("cumulant of order {0} is not available")]
    MissingOrder(usize),

    #[error("evaluation at a pole z = {0}")]
    Pole(Complex64),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("Laurent tail diverges: |z| = {modulus} <= support bound {bound}")]
    DivergentTail { modulus: f64, bound: f64 },

    #[error("series regime violated: M * |b^-1| = {ratio} >= 1")]
    SeriesRegime { ratio: f64 },

    #[error("series tail bound {bound:e} exceeds tolerance {tol:e}")]
    TailBound { bound: f64, tol: f64 },

    #[error("fixed point not reached after {iterations} iterations (last step {delta:e})")]
    NoConvergence { iterations: usize, delta: f64 },

    #[error("residual {name} = {value:e} above tolerance {tol:e}")]
    Residual {
        name: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("reference law required for the infinitesimal part")]
    MissingReference,

    #[error("linear map is not invertible (smallest singular value {0:e})")]
    NonInvertible(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular
                | Error::Pole(_)
                | Error::DivergentTail { .. }
                | Error::SeriesRegime { .. }
                | Error::TailBound { .. }
                | Error::NoConvergence { .. }
                | Error::Residual { .. }
                | Error::NonInvertible(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
