//! Robust beamforming and energy-signal design for SWIPT downlinks.
//!
//! The library computes transmit covariances that maximize the total
//! harvested power of a set of energy-harvesting receivers under a
//! non-linear (logistic) harvesting model, while guaranteeing a minimum
//! SINR at an information receiver for every channel realization inside
//! norm-bounded uncertainty sets. The solve path is a two-level iteration:
//! an inner SDP relaxation with S-procedure LMIs and cutting planes for
//! the concave harvesting objective, and an outer damped-Newton update of
//! the parametric multipliers, followed by a rank-one recovery program.
//!
//! Modules mirror the solve path: [`linalg`] holds the complex/Hermitian
//! primitives, [`eh`] the harvesting model, [`scenario`] the simulation
//! setup, [`robust`] the LMI constructions and independent worst-case
//! oracles, [`sdp`] the conic interior-point engine, [`inner`]/[`outer`]
//! the two optimization loops, [`baseline`] the comparison scheme, and
//! [`experiments`] the Monte-Carlo sweeps behind the CLI.

pub mod baseline;
pub mod eh;
pub mod experiments;
pub mod inner;
pub mod linalg;
pub mod outer;
pub mod robust;
pub mod scenario;
pub mod sdp;
