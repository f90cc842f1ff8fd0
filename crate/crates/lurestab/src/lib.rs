//! Absolute stability certification for discrete-time Lur'e systems.
//!
//! A Lur'e system is a linear time-invariant plant
//!
//! ```text
//! x(k+1) = A x(k) + B p(k)
//! q(k)   = C x(k) + D p(k),      p(k) = -phi(q(k))
//! ```
//!
//! in feedback with a diagonal static nonlinearity `phi` that is sector-bounded
//! ([0, xi] per channel), slope-restricted ([0, mu] per channel) and optionally
//! odd. The toolkit assembles Lyapunov/S-procedure matrix inequalities for four
//! nested criteria (circle, Tsypkin, and two slope-exploiting criteria), decides
//! feasibility with a small dense SDP solver, verifies every certificate
//! independently, and bisects for the maximal certifiable sector bound.
//!
//! Entry points: [`criteria::analyze`], [`criteria::max_sector_bisect`],
//! [`criteria::table_report`], and [`sim::simulate`] for trajectory-level
//! validation of certificates.


pub mod lmi;
pub mod nonlin;
pub mod sdp;

pub mod system;



use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The solver hit its iteration cap without reaching the requested
    /// tolerances. Distinct from infeasibility.
    #[error("indeterminate: {0}")]
    Indeterminate(String),
    /// A verified certificate coexists with a non-decaying trajectory of a
    /// verified class member. This must never happen for a sound criterion.
    #[error("certificate falsified by simulation: {0}")]
    FalsifiedCertificate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
