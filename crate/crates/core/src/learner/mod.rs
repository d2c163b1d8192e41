//! Manifold-regularized kernel classifier and the pseudo-labeling loop.

pub mod graph;
pub mod kernel;
pub mod solve;
pub mod pipeline;
pub mod weak;
