use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{what} is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { what: String, deviation: f64 },
    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { what: String, min_eigenvalue: f64 },
    #[error("vectors are not orthonormal: {0}")]
    NotOrthonormal(String),
    #[error("Kraus operators are not trace preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },
    #[error("Kraus derivatives violate sum(dK^dag K + K^dag dK) = 0 (residual {residual:.3e})")]
    DerivativeInconsistent { residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("no Hermitian h gives beta = 0 (residual {residual:.3e}); the Hamiltonian is outside the Kraus span")]
    BetaInfeasible { residual: f64 },
    #[error("Hamiltonian lies in the Kraus span (residual {residual:.3e}); only linear scaling is attainable")]
    HamiltonianInSpan { residual: f64 },
    #[error("Hamiltonian is outside the Kraus span (residual {residual:.3e}); quadratic scaling applies")]
    HamiltonianNotInSpan { residual: f64 },
    #[error("semidefinite program is infeasible: {0}")]
    SdpInfeasible(String),
    #[error("semidefinite solver stopped after {iterations} iterations (relative gap {gap:.3e})")]
    SdpMaxIter { iterations: usize, gap: f64 },
    #[error("stationarity feasibility problem failed (residual {residual:.3e})")]
    FeasibilityFailed { residual: f64 },
    #[error("Knill-Laflamme condition violated (residual {residual:.3e})")]
    KnillLaflamme { residual: f64 },
    #[error("matrix must have full rank: {0}")]
    NotFullRank(String),
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),
    #[error("the channel carries no information about the parameter")]
    ZeroQfi,
    #[error("signal derivative vanishes; no information is transferred")]
    ZeroSignal,
    #[error("logical channel is not a dephasing channel (leakage {leakage:.3e})")]
    NotDephasing { leakage: f64 },
    #[error("logical channel has no decoherence; the logical QFI diverges")]
    PerfectCoherence,
    #[error("operator is not traceless (trace {trace:.3e})")]
    NotTraceless { trace: f64 },
    #[error("channel is not covariant: {0}")]
    NotCovariant(String),
    #[error("target not reached after halving epsilon: achieved {achieved:.9}, target {target:.9}")]
    EpsilonExhausted { achieved: f64, target: f64 },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Process exit status for the command-line tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Input = 2,
    Domain = 3,
    Solver = 4,
}

impl Error {
    pub fn exit_kind(&self) -> ExitKind {
        use Error::*;
        match self {
            Shape(_) | NotHermitian { .. } | NotPsd { .. } | NotOrthonormal(_)
            | NotTracePreserving { .. } | DerivativeInconsistent { .. } | InvalidParameter(_)
            | TooLarge(_) | Json(_) | Io(_) | Csv(_) => ExitKind::Input,
            SdpInfeasible(_) | SdpMaxIter { .. } | FeasibilityFailed { .. }
            | EpsilonExhausted { .. } => ExitKind::Solver,
            _ => ExitKind::Domain,
        }
    }
}
