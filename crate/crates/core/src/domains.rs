//! Built-in domains shipped with the toolkit.

use crate::pddl::{parse_domain, DomainModel};

pub const BLOCKSWORLD_PDDL: &str = include_str!("../data/blocksworld.pddl");
pub const LOGISTICS_PDDL: &str = include_str!("../data/logistics.pddl");

/// Four-operator Blocksworld (untyped).
pub fn blocksworld() -> DomainModel {
    parse_domain(BLOCKSWORLD_PDDL).expect("shipped blocksworld domain parses")
}

/// Typed Logistics with trucks, airplanes, airports and cities.
pub fn logistics() -> DomainModel {
    parse_domain(LOGISTICS_PDDL).expect("shipped logistics domain parses")
}
