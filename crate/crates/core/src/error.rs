use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants fall into two families: validation failures (the inputs do not
/// describe an admissible map, observable or perturbation) and numeric
/// failures (a computation could not reach its certified target). The CLI
/// maps them to exit codes 2 and 3 respectively, see [`Error::is_numeric`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("expansion violated or not guaranteed near x = {x}: |f'| bound {value}")]
    ExpansionViolated { x: f64, value: f64 },

    #[error("endpoint condition violated: {0}")]
    EndpointViolated(String),

    #[error("map is discontinuous at the critical point (jump {0:e})")]
    DiscontinuousAtC(f64),

    #[error("invalid map specification: {0}")]
    InvalidSpec(String),

    #[error("requested inverse branch leaves [c2, c1] at depth {0}")]
    BranchUnavailable(usize),

    #[error("orbit too short: need {needed} points, have {available}")]
    OrbitTooShort { needed: usize, available: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("resolvent solve is near singular (residual {0:e})")]
    NearSingular(f64),

    #[error("deflated solve needs mean-zero data, got integral {0:e}")]
    MeanNotZero(f64),

    #[error("truncation tail unreachable: need {needed} terms, have {available}")]
    TailUnreachable { needed: usize, available: usize },

    #[error("postcritical orbit has no detected preperiodicity")]
    NotPreperiodic,

    #[error("|z| = {0} is outside the domain of convergence")]
    OutsideDomain(f64),

    #[error("perturbation is not horizontal (sum {0:e})")]
    NotHorizontal(f64),

    #[error("correction system is singular (condition number {0:e})")]
    SingularSystem(f64),

    #[error("preimage set exceeded {0} points")]
    DepthBudgetExceeded(usize),

    #[error("no witness found: {0}")]
    NotFound(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of a numerical target (truncation, convergence,
    /// conditioning) as opposed to invalid input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::OrbitTooShort { .. }
                | Error::NoConvergence { .. }
                | Error::NearSingular(_)
                | Error::TailUnreachable { .. }
                | Error::SingularSystem(_)
                | Error::DepthBudgetExceeded(_)
                | Error::NotFound(_)
        )
    }

    /// Short machine-readable tag used in serialized failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ExpansionViolated { .. } => "ExpansionViolated",
            Error::EndpointViolated(_) => "EndpointViolated",
            Error::DiscontinuousAtC(_) => "DiscontinuousAtC",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::BranchUnavailable(_) => "BranchUnavailable",
            Error::OrbitTooShort { .. } => "OrbitTooShort",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NearSingular(_) => "NearSingular",
            Error::MeanNotZero(_) => "MeanNotZero",
            Error::TailUnreachable { .. } => "TailUnreachable",
            Error::NotPreperiodic => "NotPreperiodic",
            Error::OutsideDomain(_) => "OutsideDomain",
            Error::NotHorizontal(_) => "NotHorizontal",
            Error::SingularSystem(_) => "SingularSystem",
            Error::DepthBudgetExceeded(_) => "DepthBudgetExceeded",
            Error::NotFound(_) => "NotFound",
            Error::Expr(_) => "Expr",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
