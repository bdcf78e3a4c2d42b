//! Contact process on random regular multigraphs and on regular trees.
//!
//! Simulation engines, a coupling between the graph exploration and the
//! tree, an exact Markov chain solver for tiny graphs, statistical
//! estimators and a scenario runner.

pub mod cover;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod graph;
pub mod harris;
pub mod indexed_set;
pub mod num;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use graph::{HalfEdge, Multigraph, Network, RootedBall};
pub use harris::{EventLog, FastContact, ProcessParams, Trajectory};
pub use num::Real;
pub use oracle::ContactChain;
pub use rng::{replica_seed, SimRng};
pub use tree::{LazyTree, PioneerSet, TreeAddress, TreeContact, TreeInfectionState, TreeShape};

/// The exact solver in double precision.
pub type ExactChain = oracle::ContactChain<f64>;
