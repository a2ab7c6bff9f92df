//! Knowledge and action bases over DL-Lite_A.
//!
//! The crate covers the static layer (TBox, ABox, consistency, query
//! answering, repairs), the dynamic layer (actions, services, Golog
//! programs, transition systems), translations between execution
//! semantics, a first-order mu-calculus model checker and bisimulation
//! checkers used to validate the translations.

pub mod action;
pub mod bisim;
pub mod compiler;
pub mod golog;
pub mod kb;
pub mod mu;
pub mod query;
pub mod repair;
pub mod syntax;
pub mod ts;

use std::sync::Arc;

/// Interned-by-sharing identifier used for predicates, constants and variables.
pub type Name = Arc<str>;

/// Builds a [`Name`] from a string slice.
pub fn name(s: &str) -> Name {
    Arc::from(s)
}
