//! Joint resource-block and power allocation for NOMA downlink fog radio
//! access networks.
//!
//! `N` fog access points (F-APs) each serve a pair of users by power-domain
//! NOMA and reuse the `M` resource blocks (RBs) of `M` remote radio heads,
//! each of which serves one user (an RUE) whose received interference is
//! capped. The crate allocates
//!
//! * RBs to F-APs with a many-to-one matching game with swaps
//!   ([`matching`]),
//! * the power split of each NOMA pair by successive convex approximation
//!   with closed-form steps ([`power`]),
//! * both jointly by alternating the two ([`joint`]),
//!
//! and ships the oracles and baselines used to check them ([`baselines`]) and
//! a seeded Monte Carlo harness ([`experiment`]).
//!
//! ```
//! use fran_alloc::{generate_scenario, joint_allocate, JointConfig, ScenarioParams};
//!
//! let scenario = generate_scenario(&ScenarioParams { seed: 7, ..Default::default() })?;
//! let result = joint_allocate(&scenario, &JointConfig::default())?;
//! assert!(result.is_feasible(&scenario));
//! println!("weighted sum rate: {:.3e} bit/s", result.weighted_sum_rate());
//! # Ok::<(), fran_alloc::Error>(())
//! ```

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod fmt;
pub mod joint;
pub mod matching;
pub mod power;
pub mod rate;
pub mod scenario;

pub use baselines::{
    exhaustive_search, fixed_power_baseline, grid_oracle_power, oma_baseline, random_rb_baseline, BaselineKind,
    OmaMode,
};
pub use error::{Error, Result};
pub use joint::{joint_allocate, JointConfig, JointResult};
pub use matching::{msema, Matching};
pub use power::{sca_power_allocation, AlphaInit, PowerContext, ScaConfig};
pub use rate::{check_feasibility, weighted_sum_rate, Allocation, RateReport, Violation};
pub use scenario::{dbm_to_watt, generate_scenario, noise_power, watt_to_dbm, Scenario, ScenarioParams};
