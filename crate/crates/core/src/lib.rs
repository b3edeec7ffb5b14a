//! Trajectory abduction over annotated temporal logic programs.
//!
//! Movement trajectories are abduced over a location graph so that they satisfy
//! timed location observations while minimising an anomaly value computed by a
//! learned annotated logic program. Search is A* with an admissible heuristic
//! derived from the single-hop subset of the program.

pub mod bench;
pub mod config;
pub mod eval;
pub mod fixpoint;
pub mod graph;
pub mod lang;
pub mod lattice;
pub mod learn;
pub mod score;
pub mod search;
