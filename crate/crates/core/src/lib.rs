//! Colonel Blotto model of CPU allocation between a cloud-storage defender
//! and an APT attacker.
//!
//! - [`game`]: action sets, per-device outcomes, utilities.
//! - [`equilibrium`]: closed-form equilibrium marginals and exact oracles.
//! - [`environment`]: the repeated game with data dynamics and attackers.
//! - [`learning`]: tabular Q-learning, PHC and hotbooted PHC defenders.
//! - [`neural`]: a small convolutional Q-network and the DQN defender.
//! - [`harness`]: scenarios, seed-averaged metrics and output files.

pub mod error;
pub mod equilibrium;
pub mod environment;
pub mod game;
pub mod harness;
pub mod learning;
pub mod neural;

pub use error::{Error, Result};
pub use game::{
    enumerate_actions, protection_level, resolve_slot, sign, utility_attacker, utility_defender,
    ActionSet, Allocation, DataSizeVector, GameConfig, SlotOutcome,
};
