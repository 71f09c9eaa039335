//! Error type shared by all modules.

use thiserror::Error;

/// Failure modes of operator construction, solvers and condition finders.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A Fock-space layout was invalid (empty, or a mode dimension < 2).
    #[error("invalid Fock layout: {0}")]
    InvalidLayout(String),

    /// A mode index referred past the end of the layout.
    #[error("mode index {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    /// Two operators or an operator and a state live on different layouts.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// A parameter failed validation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Mechanical frequency or coupling missing where the full model needs them.
    #[error("mechanical parameters missing: {0}")]
    MissingMechanical(String),

    /// Time evolution hit `t_max` with the residual still above tolerance.
    #[error("no steady state reached by t = {t_final}: residual {residual:.3e} > tol {tol:.3e}")]
    NonConvergence { t_final: f64, residual: f64, tol: f64 },

    /// The evolved state stopped being a density matrix within tolerance.
    #[error("state positivity violated: min eigenvalue {min_eigenvalue:.3e}")]
    PositivityViolation { min_eigenvalue: f64 },

    /// The trajectory grew without bound (net-gain parameter regime).
    #[error("evolution diverged at t = {t}: {norm:.3e}; linear generator has net gain here")]
    Diverged { t: f64, norm: f64 },

    /// The vectorized generator's rightmost eigenvalue was not simple.
    #[error("rightmost eigenvalue of the generator is degenerate (multiplicity {multiplicity})")]
    DegenerateSteadyState { multiplicity: usize },

    /// Dimension guard for the dense-eigenvector route.
    #[error("eigen route limited to two photonic modes with total dimension <= {limit}, got {got}")]
    EigenGuard { got: usize, limit: usize },

    /// Zero occupation makes the intensity correlation undefined.
    #[error("g2(0) undefined: mode occupation {occupation:.3e} is zero within tolerance")]
    ZeroOccupation { occupation: f64 },

    /// A closed-form correlation diverged (resonant denominator).
    #[error("analytic g2(0) diverges: {0}")]
    DivergentCorrelation(String),

    /// A blockade condition has no solution for these scatterer parameters.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// Doubling the mechanical cutoff moved the result more than allowed.
    #[error("mechanical truncation not converged: g2 changed by {rel_change:.3e} (> {tol:.3e}) when doubling the cutoff")]
    TruncationNotConverged { rel_change: f64, tol: f64 },

    /// Kerr strength inconsistent with the optomechanical parameters.
    #[error("Kerr strength {u} inconsistent with g^2/omega_m = {derived} (|diff| > {tol})")]
    KerrMismatch { u: f64, derived: f64, tol: f64 },

    /// Underlying LAPACK factorization failed.
    #[error("linear algebra backend: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
