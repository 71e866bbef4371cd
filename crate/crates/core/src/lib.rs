//! Simulation and numerical verification for mated-CRT random planar maps.
//!
//! The crate builds the mated-CRT multigraph from a correlated two-dimensional
//! Gaussian walk, and provides electrical-network solvers (harmonic functions,
//! effective resistance, unit flows), a random-walk engine with exact
//! return-probability evolution, exponent estimators, and the coupling-side
//! checks (Dirichlet-energy transfer, rough-isometry audits, subdivision and
//! lazy-walk identities).

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod graph;
pub mod map;
pub mod resistance;
pub mod seed;
pub mod solver;
pub mod transfer;
pub mod walk;
pub mod walker;

pub use error::{Error, Result};
pub use graph::{bfs_ball, induced_subgraph, Ball, MultiGraph};
pub use map::{build_adjacency, build_adjacency_bruteforce, planar_order, EdgeLabel, MatedCrtGraph};
pub use walk::{correlation_of, generate_walk, CorrelatedWalk, WalkParams};
