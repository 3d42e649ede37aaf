//! Multi-rate, attack-aware randomized scheduling for fixed-priority
//! control task sets.
//!
//! The crate is organised along the design-time / run-time split of the
//! framework:
//!
//! * [`taskmodel`] describes task sets, task specifications and the
//!   response-time analysis used to admit them.
//! * [`control`] and [`stability`] derive per-period closed loops and
//!   prune each period menu to a set that shares a common quadratic
//!   Lyapunov function.
//! * [`attacker`] and [`secureperiods`] model the schedule-ladder attacker
//!   and prune the menus further so that longer periods reduce what the
//!   attacker can infer.
//! * [`schedgen`] produces valid randomized schedules (plus an exhaustive
//!   oracle for small task sets) and [`vulnerability`] ranks them into a
//!   [`ScheduleStore`].
//! * [`runtime`] selects schedules every hyper-period and [`cosim`] closes
//!   the loop with plants, detectors and an injected posterior attack.
//!
//! All times are integer slot counts; the real length of a slot is carried
//! as metadata in [`TaskSet::delta`].

pub mod attacker;
pub mod bundled;
pub mod control;
pub mod cosim;
pub mod design;
mod error;
pub mod linalg;
pub mod rational;
pub mod runtime;
pub mod schedgen;
pub mod secureperiods;
pub mod stability;
pub mod taskmodel;
pub mod vulnerability;

pub use error::{Error, Result};
pub use rational::Rational;

pub use attacker::{build_ladder, inferability_ratio, LadderView};
pub use control::{DetectorState, DiscretizedLoop, PlantModel};
pub use cosim::{AttackScenario, Policy, RunMetrics};
pub use runtime::{AtkFlag, Mode, SelectorState};
pub use schedgen::{Provenance, Schedule};
pub use secureperiods::{SecurityPolicy, Verdict};
pub use stability::{CqlfCertificate, CqlfOutcome, CqlfProblem};
pub use taskmodel::{TaskSet, TaskSpec, TrustedTask, UntrustedTask};
pub use vulnerability::{ScheduleStore, VulnReport};

/// Version string embedded in every emitted report.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
