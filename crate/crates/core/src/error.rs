use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Fewer than four cells along an axis, or a non-positive spacing.
    InvalidGrid { nx: usize, ny: usize },
    /// Two operands live on different grids.
    GridMismatch,
    /// A value array does not match the node count of its grid.
    LengthMismatch { expected: usize, found: usize },
    /// A field or parameter carries NaN or infinity.
    NonFinite { what: &'static str, level: usize, node: usize },
    /// An argument lies outside the domain of a nonlinearity.
    Domain { what: &'static str, value: f64 },
    /// Conjugate gradient did not reach its tolerance.
    CgNotConverged { iterations: usize, rel_residual: f64 },
    /// Newton's method for the damage step did not converge.
    NewtonNotConverged { iterations: usize, residuals: Vec<f64> },
    /// No separation interval exists inside the resolvable window.
    SeparationInfeasible { condition: u8, detail: String },
    /// Controls, targets or trajectories disagree on the time grid.
    TimeGridMismatch { expected: usize, found: usize },
    /// Box bounds with low > high somewhere, or a non-positive ball radius.
    InvalidBox(&'static str),
    /// A perturbation direction that is identically zero.
    DegenerateDirection,
    InvalidParameter(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid { nx, ny } => {
                write!(f, "invalid grid {nx}x{ny}: need at least 4 cells per axis and positive spacing")
            }
            Error::GridMismatch => f.write_str("operands are defined on different grids"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "field has {found} values, grid has {expected} nodes")
            }
            Error::NonFinite { what, level, node } => {
                write!(f, "non-finite value in {what} at time level {level}, node {node}")
            }
            Error::Domain { what, value } => write!(f, "{what}: argument {value} outside the domain"),
            Error::CgNotConverged { iterations, rel_residual } => write!(
                f,
                "conjugate gradient stalled after {iterations} iterations (relative residual {rel_residual:e})"
            ),
            Error::NewtonNotConverged { iterations, residuals } => {
                write!(f, "damage Newton solve failed after {iterations} iterations; residual history {residuals:?}")
            }
            Error::SeparationInfeasible { condition, detail } => {
                write!(f, "separation condition {condition} cannot be met: {detail}")
            }
            Error::TimeGridMismatch { expected, found } => {
                write!(f, "expected {expected} time levels, found {found}")
            }
            Error::InvalidBox(why) => write!(f, "invalid admissible set: {why}"),
            Error::DegenerateDirection => f.write_str("perturbation direction is identically zero"),
            Error::InvalidParameter(why) => write!(f, "invalid parameter: {why}"),
        }
    }
}

impl core::error::Error for Error {}
