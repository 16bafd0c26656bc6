use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("point ({0}, {1}, {2}) outside surface domain")]
    OutsideDomain(f64, f64, f64),
    #[error("not an immersion here: first partials have rank < 3")]
    NotImmersion,
    #[error("degenerate hypersurface: det G = {0:e}")]
    Degenerate(f64),
    #[error("metric not definite: outside positive definite scope")]
    Indefinite,
    #[error("inconsistent normal: tangency residual {0:e} above tolerance")]
    InconsistentNormal(f64),
    #[error("jet order {0} not supported (max 4)")]
    InvalidOrder(usize),
    #[error("classification unstable at tol {tol:e}: {reason}")]
    UnstableClassification { tol: f64, reason: String },
    #[error("matrix is not a rotation (orthogonality defect {0:e})")]
    NotRotation(f64),
    #[error("shape operator not symmetric (defect {0:e})")]
    AsymmetricShape(f64),
    #[error("unknown catalog name `{0}`")]
    UnknownName(String),
    #[error("definiteness condition violated: {0}")]
    Definiteness(String),
    #[error("no adapted-frame procedure for group {0}")]
    NoAdaptedFrame(String),
    #[error("finite-difference stencil leaves the domain at ({0}, {1}, {2})")]
    StencilOutsideDomain(f64, f64, f64),
}

pub type Result<T> = std::result::Result<T, GeomError>;
