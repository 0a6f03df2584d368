//! Value of Assistance for sensing actions in robotic grasping: how much
//! does one observation from a helper sensor raise an actor's expected
//! grasp success, and which sensor configuration raises it most.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod eval;
pub mod geometry;
pub mod grasp;
pub mod harness;
pub mod sensors;
pub mod similarity;
pub mod voa;
