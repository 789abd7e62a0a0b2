//! Conic optimization engine for small dense semidefinite programs.
//!
//! Three layers:
//! - [`problem`]: the public standard-form problem over Hermitian PSD
//!   blocks and nonnegative scalars, with equality/inequality rows, solved
//!   through the real embedding;
//! - [`lmi`]: problems stated as linear matrix inequalities in scalar
//!   decision variables, solved by dualization (the LMI variables come back
//!   as the dual multipliers of the standard-form conic program);
//! - [`engine`]: the real homogeneous self-dual interior-point core.

pub mod engine;
pub mod kkt;
pub mod lmi;
pub mod problem;

pub use engine::{ConicSettings, ConicStatus};
pub use kkt::{kkt_residuals, KktResiduals};
pub use lmi::{LmiBlock, LmiProblem, LmiScalarRow, LmiSolution, LmiStatus, VarSign};
pub use problem::{
    embed_problem, recover_embedded_primal, solve_sdp, Relation, SdpConstraint, SdpCost,
    SdpError, SdpProblem, SdpSolution, SdpStatus, Sense,
};
