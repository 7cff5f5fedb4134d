//! Generalization evaluation for multi-objective reinforcement learning.
//!
//! The crate is organized bottom-up:
//!
//! - [`pareto`]: dominance, fronts, hypervolume and the NHGR / EUGR ratios.
//! - [`aggregate`]: seeded streams, simplex sampling, IQM and optimality gap.
//! - [`momdp`]: the environment contract, rollouts and context sampling.
//! - [`lavagrid`]: the multi-objective lava gridworld.
//! - [`oracle`]: exact Pareto fronts for lava gridworld contexts.
//! - [`agents`]: tabular scalarized Q-learning, random baseline, archives.
//! - [`harness`]: the end-to-end evaluation protocol and reports.
//! - [`cli`]: the `morlgen` command line.

pub mod agents;
pub mod aggregate;
pub mod cli;
pub mod harness;
pub mod lavagrid;
pub mod momdp;
pub mod oracle;
pub mod pareto;
