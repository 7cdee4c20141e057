use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not hermitian: max asymmetry {max_asymmetry:.3e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("finite-difference step underflows at |rho| = {0:.3e}")]
    StepUnderflow(f64),

    #[error("energy {tau} is within {tol:.1e} of the threshold {threshold}")]
    NearThreshold { tau: f64, threshold: f64, tol: f64 },

    #[error("quadrature did not converge: estimate {value:.6e}, error {error:.3e}")]
    Quadrature { value: f64, error: f64 },

    #[error("momentum coverage violated: M = {m} covers tau_max {covered:.4}, need M >= {required} for {tau_max:.4}")]
    Coverage {
        m: usize,
        required: usize,
        covered: f64,
        tau_max: f64,
    },

    #[error("grid needs M = {required} points, cap is {cap}; raise h or shrink the energy window")]
    ResourceCap { required: usize, cap: usize },

    #[error("support margin violated: {0}")]
    Margin(String),

    #[error("operators live on different grids")]
    GridMismatch,

    #[error("energy window violated: {0}")]
    Window(String),

    #[error("kernel split is ambiguous: eigenvalue {eigenvalue:.3e} lies near kernel_tol {kernel_tol:.3e}")]
    AmbiguousKernel { eigenvalue: f64, kernel_tol: f64 },

    #[error("perturbation support is {distance:.3} from the cutoff, need {required:.3}")]
    Separation { distance: f64, required: f64 },

    #[error("slope fit rejected: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
