//! Battery dispatch for an islanded microgrid under storm conditions.
//!
//! The crate couples an hourly battery/renewables/priority-load simulator
//! with a PPO actor-critic trainer built on small tanh networks, and explains
//! individual charge/discharge decisions of the trained actor with locally
//! weighted linear surrogates (LIME).
//!
//! | module | what it holds |
//! |---|---|
//! | [`scenario`] | renewable and load time series, CSV I/O, synthetic cyclone generator |
//! | [`env`] | the MDP: battery model, softmax load allocation, resilience reward |
//! | [`neural`] | MLPs with exact gradients, Gaussian policy head, Adam, checkpoints |
//! | [`ppo`] | rollouts, GAE, clipped surrogate, training and evaluation |
//! | [`explain`] | perturbation sampling, proximity kernel, weighted ridge surrogate, SVG/CSV output |
//! | [`metrics`] | resilience index, battery life, reward-curve convergence |
//! | [`cli`] | the `scenario`/`train`/`eval`/`explain`/`report` commands |

pub mod cli;
pub mod config;
pub mod env;
pub mod explain;
pub mod metrics;
pub mod neural;
pub mod ppo;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod trajectory;
