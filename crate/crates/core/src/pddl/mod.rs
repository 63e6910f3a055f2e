//! STRIPS + typing subset of PDDL: model types, parsing, serialization,
//! grounding and execution semantics.

mod ground;
mod grounding;
mod parse;
mod sexpr;
mod write;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use ground::{ground, step, Inapplicable, ObjectTable, RelaxationMode};
pub use grounding::{Bits, CompiledAction, Grounding};
pub use parse::{parse_domain, parse_plan, parse_problem};
pub use write::{domain_to_pddl, plan_to_pddl, problem_to_pddl};

/// Root of every type hierarchy; untyped domains put everything here.
pub const OBJECT_TYPE: &str = "object";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported requirement `{0}`")]
    UnsupportedRequirement(String),
    #[error("unsupported construct `{0}`")]
    Unsupported(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("`{name}` expects {expected} arguments, got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("variable `{variable}` is not a parameter of `{action}`")]
    UnboundVariable { action: String, variable: String },
    #[error("action `{action}` both adds and deletes {atom}")]
    AddDeleteOverlap { action: String, atom: String },
    #[error("problem is for domain `{found}`, expected `{expected}`")]
    DomainMismatch { expected: String, found: String },
    #[error("binding for `{action}` leaves `{variable}` unbound")]
    IncompleteBinding { action: String, variable: String },
    #[error("object `{object}` is not of type `{expected}`")]
    TypeMismatch { object: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypedParam {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl TypedParam {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
}

impl PredicateSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// An atom whose arguments are action parameters (`?x`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LiftedAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl LiftedAtom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Self {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for LiftedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.predicate, &self.args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub pre: BTreeSet<LiftedAtom>,
    pub add: BTreeSet<LiftedAtom>,
    pub del: BTreeSet<LiftedAtom>,
}

impl ActionSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Requirement {
    Strips,
    Typing,
}

impl Requirement {
    pub fn as_str(self) -> &'static str {
        match self {
            Requirement::Strips => ":strips",
            Requirement::Typing => ":typing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainModel {
    pub name: String,
    pub requirements: Vec<Requirement>,
    /// `(type, parent)` in declaration order.
    pub types: Vec<(String, String)>,
    pub predicates: Vec<PredicateSchema>,
    pub actions: Vec<ActionSchema>,
}

impl DomainModel {
    pub fn predicate(&self, name: &str) -> Option<&PredicateSchema> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn is_typed(&self) -> bool {
        self.requirements.contains(&Requirement::Typing)
    }

    pub fn has_type(&self, ty: &str) -> bool {
        ty == OBJECT_TYPE || self.types.iter().any(|(t, _)| t == ty)
    }

    pub fn parent_of(&self, ty: &str) -> Option<&str> {
        self.types
            .iter()
            .find(|(t, _)| t == ty)
            .map(|(_, parent)| parent.as_str())
    }

    /// Whether `ty` equals `ancestor` or inherits from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ancestor == OBJECT_TYPE {
            return true;
        }
        let mut current = ty;
        // hierarchies are finite and acyclic after parsing; bound the walk anyway
        for _ in 0..=self.types.len() {
            if current == ancestor {
                return true;
            }
            match self.parent_of(current) {
                Some(parent) => current = parent,
                None => return false,
            }
        }
        false
    }
}

/// A predicate applied to object names.
///
/// Ordering is predicate name first, then arguments lexicographically; states
/// and atom sets are kept in that canonical order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Self {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.predicate, &self.args)
    }
}

impl FromStr for GroundAtom {
    type Err = PddlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (predicate, args) = sexpr::parse_call(s)?;
        Ok(GroundAtom { predicate, args })
    }
}

impl Serialize for GroundAtom {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroundAtom {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed-world state: atoms absent from the set are false.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub BTreeSet<GroundAtom>);

impl State {
    pub fn new(atoms: impl IntoIterator<Item = GroundAtom>) -> Self {
        State(atoms.into_iter().collect())
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.0.contains(atom)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn satisfies(&self, goal: &BTreeSet<GroundAtom>) -> bool {
        goal.is_subset(&self.0)
    }
}

/// A fully instantiated action with its resolved precondition and effects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
    pub pre: BTreeSet<GroundAtom>,
    pub add: BTreeSet<GroundAtom>,
    pub del: BTreeSet<GroundAtom>,
}

impl GroundAction {
    pub fn call(&self) -> PlanStep {
        PlanStep {
            name: self.name.clone(),
            args: self.args.clone(),
        }
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.name, &self.args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub domain: String,
    /// `(name, type)` in declaration order.
    pub objects: Vec<(String, String)>,
    pub init: State,
    pub goal: BTreeSet<GroundAtom>,
}

impl ProblemInstance {
    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|(o, _)| o == name)
            .map(|(_, t)| t.as_str())
    }

    pub fn object_names(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|(o, _)| o.as_str())
    }

    /// Checks that every object, atom and type is declared by `domain`.
    pub fn check(&self, domain: &DomainModel) -> Result<(), PddlError> {
        if self.domain != domain.name {
            return Err(PddlError::DomainMismatch {
                expected: domain.name.clone(),
                found: self.domain.clone(),
            });
        }
        let mut seen = BTreeSet::new();
        for (object, ty) in &self.objects {
            if !seen.insert(object.as_str()) {
                return Err(PddlError::Duplicate {
                    kind: "object",
                    name: object.clone(),
                });
            }
            if !domain.has_type(ty) {
                return Err(PddlError::UnknownType(ty.clone()));
            }
        }
        let table = ObjectTable::new(domain, self);
        for atom in self.init.atoms().chain(self.goal.iter()) {
            table.check_atom(atom)?;
        }
        Ok(())
    }
}

/// One line of a plan: an action name applied to object names.
///
/// Kept unresolved so that plans read from generators can carry unknown
/// objects or wrong arities; the validator reports those per step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlanStep {
    pub name: String,
    pub args: Vec<String>,
}

impl PlanStep {
    pub fn new<S: Into<String>>(name: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_call(f, &self.name, &self.args)
    }
}

impl FromStr for PlanStep {
    type Err = PddlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = sexpr::parse_call(s)?;
        Ok(PlanStep { name, args })
    }
}

impl Serialize for PlanStep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlanStep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new(steps: impl IntoIterator<Item = PlanStep>) -> Self {
        Plan {
            steps: steps.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl FromIterator<PlanStep> for Plan {
    fn from_iter<T: IntoIterator<Item = PlanStep>>(iter: T) -> Self {
        Plan::new(iter)
    }
}

fn write_call(f: &mut fmt::Formatter<'_>, head: &str, args: &[String]) -> fmt::Result {
    f.write_str("(")?;
    f.write_str(head)?;
    for arg in args {
        f.write_str(" ")?;
        f.write_str(arg)?;
    }
    f.write_str(")")
}

/// Sorted `type -> objects` view, handy for enumerating bindings.
pub(crate) fn objects_by_param(
    domain: &DomainModel,
    instance: &ProblemInstance,
    params: &[TypedParam],
) -> Vec<Vec<String>> {
    params
        .iter()
        .map(|p| {
            instance
                .objects
                .iter()
                .filter(|(_, ty)| domain.is_subtype(ty, &p.ty))
                .map(|(o, _)| o.to_string())
                .collect()
        })
        .collect()
}

pub(crate) type Binding = BTreeMap<String, String>;
