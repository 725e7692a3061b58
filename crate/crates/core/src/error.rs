use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by model validation, evaluation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("jump atom {index} at u = {location} violates spectral negativity: support must lie in (-inf, 0)")]
    PositiveSupportAtom { index: usize, location: f64 },
    #[error("jump atom {index} has non-positive mass {mass}")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("sigma2 must be >= 0, got {0}")]
    NegativeSigma2(f64),
    #[error("kill rate q must be >= 0, got {0}")]
    NegativeKillRate(f64),
    #[error("invalid jump density: {0}")]
    InvalidDensity(String),
    #[error("jump measure not integrable: integral of min(1, u^2) diverges ({detail})")]
    NonIntegrableMeasure { detail: String },
    #[error("quadrature did not converge: achieved error estimate {achieved:.3e} exceeds tolerance {tolerance:.3e}")]
    QuadratureNonConvergence { achieved: f64, tolerance: f64 },
    #[error("lambda must be >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("assumption A2 fails: psi(1) = {psi1} is not strictly positive")]
    A2Fails { psi1: f64 },
    #[error("assumption A2 indeterminate: |psi(1)| = {psi1_abs:.3e} is within quadrature tolerance {tolerance:.3e}")]
    A2Indeterminate { psi1_abs: f64, tolerance: f64 },
    #[error("numeric overflow in {context}")]
    Overflow { context: String },
    #[error("exp(xi) overflowed the floating-point range; the path escaped upward")]
    ExpOverflow,
    #[error("the Lamperti representation requires a strictly positive start; use the sde scheme for z = 0")]
    ZeroStartLamperti,
    #[error("state {state:.6e} exceeded the state cap {cap:.6e} at time {time:.6}")]
    StateCapExceeded { time: f64, state: f64, cap: f64 },
    #[error("substep budget exhausted at time {time:.6} (state {state:.6e}); reduce dt or raise the cutoff")]
    SubstepBudgetExceeded { time: f64, state: f64 },
    #[error("ratio test did not stabilize by n_max = {n_max}; increase n_max or reduce t")]
    RatioTestNotStabilized { n_max: u32 },
    #[error(
        "ensemble invalid: aborted path fraction {fraction:.4} exceeds 0.01 ({aborted}/{total})"
    )]
    EnsembleInvalid {
        fraction: f64,
        aborted: u64,
        total: u64,
    },
    #[error("ground-truth self-check failed at (n={n}, t={t}, z={z}): closed form {closed} vs recursion {recursion}")]
    GroundTruthInconsistent {
        n: u32,
        t: f64,
        z: f64,
        closed: f64,
        recursion: f64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file {path}: {message}")]
    ModelFile { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
