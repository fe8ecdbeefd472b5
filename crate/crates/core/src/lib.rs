//! Control stack for a detachable robot-mounted demonstration tool: a constrained
//! camera viewpoint optimizer, a fiducial-based tool-pose EKF, the
//! demonstration-mode state machine with admittance teleoperation, and a
//! kinematic workcell simulator that closes the loop around them.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod se3;
pub mod viewpoint;
pub mod tracker;
pub mod mode;
pub mod scenario;
pub mod sim;
pub mod session;
pub mod harness;
