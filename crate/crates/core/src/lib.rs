//! Run-time assurance for robot software stacks.
//!
//! A small actor runtime drives a deterministic grid world. Each robot runs a
//! motion stack whose advanced controller is wrapped by an [`rta::RtaModule`]:
//! monitors look a few steps ahead and hand control to a certified safe
//! controller before the plan can reach an unsafe state.

pub mod batch;
pub mod geometry;
pub mod monitors;
pub mod planner;
pub mod replay;
pub mod rta;
pub mod runtime;
pub mod scenarios;
pub mod stack;
pub mod world;

pub use geometry::Cell;
