//! Offline game-solving from fixed trajectory datasets.
//!
//! The crate turns a dataset of multiagent trajectories into an approximate
//! equilibrium of the underlying game without further simulator access:
//!
//! 1. [`dynamics`] trains an ensemble world model on the dataset and exposes
//!    it as a drop-in game ([`dynamics::ModelMdp`]), along with the reward
//!    disagreement penalty `rho` used to quantify model uncertainty.
//! 2. [`response`] trains DDQN best responses inside the model, optionally
//!    penalized by `rho` and interleaved with deviation-coverage episodes.
//! 3. [`empirical`] maintains the growing empirical game with per-ensemble-
//!    member payoff estimates (mean, pessimistic, and optimistic views).
//! 4. [`solvers`] selects response targets: replicator dynamics (RD), its
//!    regret-thresholded variant (RRD), and the robust variants (R2D/R3D)
//!    that optimize a pessimistic regret estimate over interval payoffs.
//! 5. [`driver`] wires these into the full loops: online PSRO, OEF/OEF-BC,
//!    and the conservative offline loop (CoffeePsro).
//! 6. [`eval`] measures true-game regret, model fidelity, and statistical
//!    significance of run comparisons.
//!
//! [`bargaining`] provides the sequential bargaining game used as the main
//! benchmark; [`toy`] holds small deterministic games for tests and benches.

pub mod bargaining;
pub mod dataset;
pub mod driver;
pub mod dynamics;
pub mod empirical;
pub mod error;
pub mod eval;
pub mod game;
pub mod nfg;
pub mod nn;
pub mod response;
pub mod rng;
pub mod solvers;
pub mod toy;

pub use dataset::Dataset;
pub use error::{CogsError, Result};
pub use game::{ActionId, Game, MixedStrategy, PurePolicy, Trajectory, TrajectoryStep};
pub use nfg::NormalFormGame;
