//! Every default tolerance and threshold in one place.
//!
//! Tolerances are relative to the operator norms of the inputs unless the
//! name says otherwise.

/// Reconstruction bound for `V diag(λ) V⁻¹` against the input matrix.
pub const SPECTRAL_RECONSTRUCTION: f64 = 1e-10;

/// Eigenvector matrices with a larger 2-norm condition number are rejected
/// by the fractional-power routines.
pub const EIGENBASIS_COND_MAX: f64 = 1e8;

/// Above this eigenbasis condition number the exponential switches from the
/// spectral route to scaling-and-squaring.
pub const SPECTRAL_EXPM_COND_MAX: f64 = 1e4;

/// Eigenvalues closer than this (relative to the spectral radius) are treated
/// as one cluster when building eigenvectors.
pub const EIGEN_CLUSTER: f64 = 1e-9;

/// Lyapunov residual bound relative to ‖A‖‖X‖ + ‖Q‖.
pub const LYAPUNOV_RESIDUAL: f64 = 1e-10;

/// Symmetry tolerance for stored Riccati matrices (relative).
pub const SYMMETRY: f64 = 1e-12;

/// Smallest eigenvalue accepted as positive semidefinite (relative to norm).
pub const PSD_FLOOR: f64 = -1e-10;

/// ‖P‖ above this during backward integration is reported as blow-up.
pub const DRE_BLOWUP: f64 = 1e12;

/// Largest |h λ| taken by one explicit RK4 sub-step in the DRE solver.
pub const RK4_STIFFNESS_LIMIT: f64 = 1.0;

/// ARE residual bound relative to ‖A‖‖P‖ + ‖B‖²‖P‖² + ‖R‖².
pub const ARE_RESIDUAL: f64 = 1e-9;

/// Default Newton-Kleinman step tolerance (relative to ‖P‖).
pub const NEWTON_TOL: f64 = 1e-13;

/// Newton-Kleinman iteration cap.
pub const NEWTON_MAX_ITER: usize = 100;

/// Sign-function iteration cap and stopping tolerance.
pub const SIGN_MAX_ITER: usize = 100;
pub const SIGN_TOL: f64 = 1e-14;

/// Hamiltonian eigenvalues with |Re λ| below this (relative to ‖H‖) are
/// treated as lying on the imaginary axis.
pub const IMAGINARY_AXIS: f64 = 1e-10;

/// Condition number threshold for the X block of the stable subspace basis.
pub const SUBSPACE_COND_MAX: f64 = 1e12;

/// Generator identity A(I − A⁻¹BBᵀP) = A − BBᵀP, relative to ‖A‖.
pub const GENERATOR_IDENTITY: f64 = 1e-10;

/// Residual bound on the integral Riccati forms used as a precheck before
/// the fundamental identity is evaluated (relative to 1 + ‖x‖‖y‖).
pub const IRE_PRECHECK: f64 = 1e-6;

/// Tail target for truncated infinite horizons: M e^{−ω T} below this.
pub const TRUNCATION_TAIL: f64 = 1e-6;

/// Default number of random probes for operator-norm estimates.
pub const DEFAULT_PROBES: usize = 64;

/// Graded quadrature defaults: geometric ratio, number of levels, and
/// Gauss-Legendre points per panel.
pub const GRADED_RATIO: f64 = 0.5;
pub const GRADED_LEVELS: usize = 12;
pub const GRADED_ORDER: usize = 8;

/// Maximum adjacent-node jump of ‖Q(t)‖ relative to sup‖Q‖ accepted as
/// "continuous in time" for class membership checks.
pub const CLASS_CONTINUITY_JUMP: f64 = 0.25;

/// Largest `h·ρ` (ρ a bound on the fastest rate) for one explicit RK4
/// sub-step or Simpson piece when the result is compared against other
/// methods rather than only kept stable.
pub const ACCURACY_STEP: f64 = 0.1;
