//! Two-stage game model of a by-product hydrogen supply chain.
//!
//! Plants first decide, cooperatively, how to process and route their
//! by-product hydrogen ([`coalition`]); the salt cavern then posts a
//! time-of-use buying price to which the plants respond with an optimal
//! schedule ([`stackelberg`]). Every follower problem is a small MILP built by
//! [`plant`] and solved exactly by the in-crate [`milp`] solver.

// Period-indexed loops mirror the model's equations.
#![allow(clippy::needless_range_loop)]

pub mod coalition;
pub mod milp;
pub mod oracle_suite;
pub mod plant;
pub mod report;
pub mod scenario;
pub mod stackelberg;

pub use coalition::{CoalitionStructure, Imputation, StructureValue};
pub use plant::{CostBreakdown, PlanDecision, Schedule};
pub use scenario::Scenario;
pub use stackelberg::{EquilibriumReport, GAConfig, PriceSchedule};
