//! Distributed solver for the discrete-time Lyapunov equation
//! `A X A' - X + Q = 0` over time-varying undirected networks.
//!
//! Each of `m` agents owns a row block of `A` and a column block of `Q`,
//! keeps a local estimate `(X_i, Y_i)` with `Y_i` tracking `A X_i`, and
//! alternates neighbor averaging with a gradient step on its local
//! least-squares objective. [`oracle`] provides the centralized solution
//! used for comparison.

pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod matcore;
pub mod network;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use matcore::{Mat, Vector};
pub use problem::{AgentEstimate, DtleProblem, LocalData, Partition};
