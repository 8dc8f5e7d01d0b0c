//! Coordination and control of automated vehicles merging from a two-lane
//! ramp onto a two-lane road.
//!
//! - [`scenario`]: geometry, limits and run settings, loaded from TOML.
//! - [`coordinator`]: the two exit-lane queue tables and their events.
//! - [`decision`]: exit-lane choice, lane-change points and partner matching.
//! - [`ocsolve`]: the unconstrained energy/time optimal trajectory.
//! - [`ocbf`]: barrier rows and the per-step QP around that trajectory.
//! - [`qpsolve`]: exact solver for the two-variable step QP.
//! - [`sim`]: fixed-step simulation with Poisson arrivals and noise.
//! - [`report`]: per-vehicle logs, averages and violation records.
//!
//! ```
//! use ocbf_merge::scenario::{ScenarioParams, SimConfig};
//! use ocbf_merge::sim::run;
//!
//! let m = run(&ScenarioParams::default(), &SimConfig { horizon: 60.0, ..SimConfig::default() }).unwrap();
//! assert_eq!(m.series.last().unwrap().exited, m.exited());
//! ```

pub mod coordinator;
pub mod decision;
pub mod ocbf;
pub mod ocsolve;
pub mod qpsolve;
pub mod report;
pub mod scenario;
pub mod sim;

pub use report::Metrics;
pub use scenario::{load_config, ControllerMode, ScenarioParams, SimConfig};
pub use sim::{run, run_with, RunOptions, SimError, World};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
