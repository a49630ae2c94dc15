use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unknown element kind `{0}`")]
    UnknownElementKind(String),

    #[error("degenerate element {element}: det J = {det_j:e}")]
    DegenerateElement { element: usize, det_j: f64 },

    #[error("singular Jacobian during inverse mapping (det J = {det_j:e})")]
    SingularJacobian { det_j: f64 },

    #[error("inverse mapping did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NoConvergence { iterations: usize, best_residual: f64 },

    #[error(
        "slave node {node} of subdomain {subdomain} cannot be mapped into any candidate master element \
         (best residual {best_residual:e}, best reference overshoot {best_overshoot:e})"
    )]
    Unmappable {
        subdomain: usize,
        node: usize,
        best_residual: f64,
        best_overshoot: f64,
    },

    #[error("cyclic interface dependency through slave node {node} of subdomain {subdomain}")]
    CyclicConstraint { subdomain: usize, node: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("stale activations: forward ran on parameter version {cached}, current version is {current}")]
    StaleActivations { cached: u64, current: u64 },

    #[error("training diverged at epoch {epoch}: loss = {loss:e}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("worker failure: {0}")]
    Worker(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateElement { .. }
                | Error::SingularJacobian { .. }
                | Error::NoConvergence { .. }
                | Error::Unmappable { .. }
                | Error::Divergence { .. }
                | Error::SingularSystem(_)
        )
    }
}
