//! Two-layer optimizer for synchronizing digital twins from mobile sensing
//! agents: a matching game assigns agents to regions and a block-coordinate
//! descent solver allocates mobility, sensing, computing and radio resources.

pub mod convex_kit;
pub mod experiments;
pub mod inner_solver;
pub mod matching;
pub mod model;
pub mod scenario;
