//! Time-optimal conformance test generation for labeled prioritized time Petri nets.
//!
//! The pipeline: parse SUT and environment nets, compose them, explore the strong state
//! class graph, find witnesses for test purposes or coverage goals, compute the fastest
//! firing schedule over each witness, project the schedule onto environment actions and
//! wrap it in an observer net that decides Pass or Fail.

pub mod analysis;
pub mod dbm;
pub mod format;
pub mod harness;
pub mod models;
pub mod net;
pub mod scheduler;
pub mod semantics;
pub mod sscg;
pub mod system;
pub mod testgen;
pub mod time;

pub use analysis::{Criterion, Goal, GoalAtom, GoalMode, Plan, ResetInfo};
pub use format::{parse_net, serialize_net};
pub use net::{ActionKind, ActionLabel, Marking, Net};
pub use scheduler::FastestSchedule;
pub use semantics::{Move, Schedule, State};
pub use sscg::{ClassGraph, Limits, StateClass};
pub use system::{compose, compose_with, ComposeOptions, ComposedSystem, PriorityMode, Side};
pub use testgen::{TestCase, TestSequence, TestSuite};
pub use time::{parse_rat, rat, ratio, Rat, TimeInterval};
