//! Core of the rulesmith platform.
//!
//! Multi-part IF-THEN rules are built from a declarative [`catalog`] of
//! sensors and effectors, travel in the JSON wire format of [`rule`],
//! are checked by the [`validator`], fused across workers by [`merge`],
//! described in plain language by [`render`], executed by the [`engine`],
//! collected through [`session`]s and scored by [`eval`]. The [`sim`]
//! module drives all of it with seeded synthetic workers and feeds.

pub mod catalog;
pub mod crowd;
pub mod engine;
pub mod eval;
pub mod fixtures;
pub mod merge;
pub mod render;
pub mod rule;
pub mod session;
pub mod sim;
pub mod time;
pub mod validator;

pub use catalog::{Catalog, InputType};
pub use rule::{Clause, ClauseKind, Provenance, Rule, RuleId};
