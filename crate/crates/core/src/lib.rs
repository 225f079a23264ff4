//! Joint transmit power, edge-server association and downlink resolution
//! optimization for play-to-earn Metaverse users on edge servers.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod earnings;
pub mod error;
pub mod harness;
pub mod lambert;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod power;
pub mod resolution;
pub mod sdp;

pub use earnings::{EarnFamily, EarnParams};
pub use error::{Error, Result};
pub use model::{Allocation, Association, Decision, ServerProfile, SystemConfig, UserProfile};
pub use optimizer::{solve_joint, Method, SolveOptions, SolveTrace};
pub use power::{optimal_power, PowerBinding, PowerSolution};
pub use resolution::{optimal_resolution, ResolutionSubproblem};
pub use sdp::{SdpSettings, SdpSolution, SdpStatus};
