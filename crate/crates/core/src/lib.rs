//! Soft continuum arm simulation: a discrete Cosserat rod with a compliant
//! end effector, penalty contact, SE(3) pose rewards, a waypoint planner for
//! pick-and-place, and a sampling-based MPC executor.

pub mod body;
pub mod contact;
pub mod coupling;
pub mod env;
pub mod error;
pub mod io;
pub mod mpc;
pub mod planner;
pub mod plot;
pub mod rod;
pub mod scene;
pub mod se3;
pub mod so3;
pub mod trajectory;
pub mod validate;

pub use error::{Error, Result};
pub use se3::Pose;
