//! Planning core for evaluating plan generators.
//!
//! Everything in this crate is pure and allocation-only (`no_std` + `alloc`):
//! the STRIPS fragment of PDDL with typing, a VAL-style validator with
//! delete/precondition relaxations, seeded benchmark generation for
//! Blocksworld and Logistics, name obfuscation for Mystery domains,
//! template-based prompt translation, an LPG-flavoured local-search plan
//! repairer, and plan edit distance.
//!
//! IO, HTTP generators, batch orchestration and the command line live in the
//! `planeval` companion crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod domains;
pub mod gen;
pub mod metrics;
pub mod obfuscate;
pub mod pddl;
pub mod repair;
pub mod translate;
pub mod validate;

pub use pddl::{
    ActionSchema, DomainModel, GroundAction, GroundAtom, Grounding, LiftedAtom, PddlError, Plan,
    PlanStep, PredicateSchema, ProblemInstance, RelaxationMode, State,
};
