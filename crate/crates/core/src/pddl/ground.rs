use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{
    ActionSchema, Binding, DomainModel, GroundAction, GroundAtom, LiftedAtom, PddlError, PlanStep,
    ProblemInstance, State,
};

/// Which parts of the action model are ignored during execution.
///
/// Ordered as a lattice: `None ⊑ DeleteRelaxed ⊑ Both` and
/// `None ⊑ PreconditionRelaxed ⊑ Both`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxationMode {
    None,
    DeleteRelaxed,
    PreconditionRelaxed,
    Both,
}

impl RelaxationMode {
    pub const ALL: [RelaxationMode; 4] = [
        RelaxationMode::None,
        RelaxationMode::DeleteRelaxed,
        RelaxationMode::PreconditionRelaxed,
        RelaxationMode::Both,
    ];

    pub fn ignores_preconditions(self) -> bool {
        matches!(self, RelaxationMode::PreconditionRelaxed | RelaxationMode::Both)
    }

    pub fn ignores_deletes(self) -> bool {
        matches!(self, RelaxationMode::DeleteRelaxed | RelaxationMode::Both)
    }

    /// Lattice order: `self` is at most as relaxed as `other`.
    pub fn is_below(self, other: RelaxationMode) -> bool {
        (!self.ignores_preconditions() || other.ignores_preconditions())
            && (!self.ignores_deletes() || other.ignores_deletes())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelaxationMode::None => "none",
            RelaxationMode::DeleteRelaxed => "delete-relaxed",
            RelaxationMode::PreconditionRelaxed => "precondition-relaxed",
            RelaxationMode::Both => "both",
        }
    }
}

impl fmt::Display for RelaxationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for RelaxationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(RelaxationMode::None),
            "delete" | "delete-relaxed" => Ok(RelaxationMode::DeleteRelaxed),
            "precondition" | "precondition-relaxed" => Ok(RelaxationMode::PreconditionRelaxed),
            "both" => Ok(RelaxationMode::Both),
            other => Err(alloc::format!("unknown relaxation mode `{other}`")),
        }
    }
}

/// Step failure: the exact precondition atoms absent from the state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inapplicable {
    pub missing: BTreeSet<GroundAtom>,
}

/// Objects of one instance together with the domain's type hierarchy.
#[derive(Debug, Clone, Copy)]
pub struct ObjectTable<'a> {
    domain: &'a DomainModel,
    instance: &'a ProblemInstance,
}

impl<'a> ObjectTable<'a> {
    pub fn new(domain: &'a DomainModel, instance: &'a ProblemInstance) -> Self {
        Self { domain, instance }
    }

    pub fn domain(&self) -> &'a DomainModel {
        self.domain
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.instance
    }

    pub fn object_type(&self, object: &str) -> Option<&'a str> {
        self.instance.object_type(object)
    }

    fn check_object(&self, object: &str, expected: &str) -> Result<(), PddlError> {
        let ty = self
            .object_type(object)
            .ok_or_else(|| PddlError::UnknownObject(object.to_string()))?;
        if !self.domain.is_subtype(ty, expected) {
            return Err(PddlError::TypeMismatch {
                object: object.to_string(),
                expected: expected.to_string(),
            });
        }
        Ok(())
    }

    pub fn check_atom(&self, atom: &GroundAtom) -> Result<(), PddlError> {
        let pred = self
            .domain
            .predicate(&atom.predicate)
            .ok_or_else(|| PddlError::UnknownPredicate(atom.predicate.clone()))?;
        if pred.arity() != atom.args.len() {
            return Err(PddlError::ArityMismatch {
                name: atom.predicate.clone(),
                expected: pred.arity(),
                found: atom.args.len(),
            });
        }
        for (arg, param) in atom.args.iter().zip(&pred.params) {
            self.check_object(arg, &param.ty)?;
        }
        Ok(())
    }

    /// Resolves a plan line against the domain: known action, right arity,
    /// declared and type-compatible objects.
    pub fn resolve(&self, step: &PlanStep) -> Result<GroundAction, PddlError> {
        let schema = self
            .domain
            .action(&step.name)
            .ok_or_else(|| PddlError::UnknownAction(step.name.clone()))?;
        if schema.arity() != step.args.len() {
            return Err(PddlError::ArityMismatch {
                name: step.name.clone(),
                expected: schema.arity(),
                found: step.args.len(),
            });
        }
        let binding: Binding = schema
            .params
            .iter()
            .zip(&step.args)
            .map(|(p, a)| (p.name.clone(), a.clone()))
            .collect();
        ground(schema, &binding, self)
    }
}

fn substitute(atoms: &BTreeSet<LiftedAtom>, binding: &Binding) -> BTreeSet<GroundAtom> {
    atoms
        .iter()
        .map(|atom| GroundAtom {
            predicate: atom.predicate.clone(),
            args: atom
                .args
                .iter()
                .map(|v| binding.get(v).cloned().unwrap_or_else(|| v.clone()))
                .collect(),
        })
        .collect()
}

/// Instantiates `schema` under a total, type-correct `binding`.
pub fn ground(
    schema: &ActionSchema,
    binding: &alloc::collections::BTreeMap<String, String>,
    objects: &ObjectTable<'_>,
) -> Result<GroundAction, PddlError> {
    let mut args = Vec::with_capacity(schema.params.len());
    for param in &schema.params {
        let object = binding
            .get(&param.name)
            .ok_or_else(|| PddlError::IncompleteBinding {
                action: schema.name.clone(),
                variable: param.name.clone(),
            })?;
        objects.check_object(object, &param.ty)?;
        args.push(object.clone());
    }
    Ok(GroundAction {
        name: schema.name.clone(),
        args,
        pre: substitute(&schema.pre, binding),
        add: substitute(&schema.add, binding),
        del: substitute(&schema.del, binding),
    })
}

/// Applies `action` to `state` under `mode`.
///
/// Unrelaxed preconditions must all hold; otherwise the missing atoms are
/// returned. The successor is `(state \ del) ∪ add`, with `del` ignored under
/// delete relaxation.
pub fn step(state: &State, action: &GroundAction, mode: RelaxationMode) -> Result<State, Inapplicable> {
    if !mode.ignores_preconditions() {
        let missing: BTreeSet<GroundAtom> = action
            .pre
            .iter()
            .filter(|a| !state.contains(a))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Inapplicable { missing });
        }
    }
    let mut next = state.0.clone();
    if !mode.ignores_deletes() {
        for atom in &action.del {
            next.remove(atom);
        }
    }
    next.extend(action.add.iter().cloned());
    Ok(State(next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use alloc::collections::BTreeMap;

    fn three_blocks() -> ProblemInstance {
        ProblemInstance {
            id: "t".into(),
            domain: "blocksworld".into(),
            objects: ["b1", "b2", "b3"]
                .iter()
                .map(|o| (o.to_string(), "object".to_string()))
                .collect(),
            init: State::default(),
            goal: BTreeSet::new(),
        }
    }

    fn atom(p: &str, args: &[&str]) -> GroundAtom {
        GroundAtom::new(p, args.iter().copied())
    }

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn grounds_pickup() {
        let domain = domains::blocksworld();
        let instance = three_blocks();
        let table = ObjectTable::new(&domain, &instance);
        let g = ground(domain.action("pickup").unwrap(), &bind(&[("?ob", "b1")]), &table).unwrap();
        let expected: BTreeSet<_> =
            [atom("clear", &["b1"]), atom("on-table", &["b1"]), atom("arm-empty", &[])].into();
        assert_eq!(g.pre, expected);
    }

    #[test]
    fn grounds_stack_deleting_clear_of_target() {
        let domain = domains::blocksworld();
        let instance = three_blocks();
        let table = ObjectTable::new(&domain, &instance);
        let schema = domain.action("stack").unwrap();
        let g = ground(schema, &bind(&[("?ob", "b1"), ("?underob", "b2")]), &table).unwrap();
        assert!(g.del.contains(&atom("clear", &["b2"])));
        assert!(g.del.contains(&atom("holding", &["b1"])));
        assert!(g.add.contains(&atom("on", &["b1", "b2"])));
    }

    #[test]
    fn zero_ary_schema_grounds_to_itself() {
        let domain = crate::pddl::parse_domain(
            "(define (domain d) (:requirements :strips) (:predicates (p) (q))
               (:action flip :parameters () :precondition (p) :effect (and (q) (not (p)))))",
        )
        .unwrap();
        let instance = ProblemInstance {
            domain: "d".into(),
            ..three_blocks()
        };
        let table = ObjectTable::new(&domain, &instance);
        let g = ground(&domain.actions[0], &BTreeMap::new(), &table).unwrap();
        assert!(g.args.is_empty());
        assert_eq!(g.pre, [atom("p", &[])].into());
        assert_eq!(g.add, [atom("q", &[])].into());
        assert_eq!(g.del, [atom("p", &[])].into());
    }

    #[test]
    fn grounding_errors() {
        let domain = domains::blocksworld();
        let instance = three_blocks();
        let table = ObjectTable::new(&domain, &instance);
        let stack = domain.action("stack").unwrap();
        assert!(matches!(
            ground(stack, &bind(&[("?ob", "b1")]), &table),
            Err(PddlError::IncompleteBinding { .. })
        ));
        assert_eq!(
            ground(stack, &bind(&[("?ob", "b1"), ("?underob", "zz")]), &table),
            Err(PddlError::UnknownObject("zz".into()))
        );
        let logistics = domains::logistics();
        let lg = ProblemInstance {
            id: "l".into(),
            domain: "logistics".into(),
            objects: alloc::vec![
                ("p0".into(), "package".into()),
                ("t0".into(), "truck".into()),
                ("l0".into(), "location".into()),
            ],
            init: State::default(),
            goal: BTreeSet::new(),
        };
        let table = ObjectTable::new(&logistics, &lg);
        let load = logistics.action("load-truck").unwrap();
        assert!(matches!(
            ground(load, &bind(&[("?pkg", "t0"), ("?truck", "t0"), ("?loc", "l0")]), &table),
            Err(PddlError::TypeMismatch { .. })
        ));
        assert!(ground(load, &bind(&[("?pkg", "p0"), ("?truck", "t0"), ("?loc", "l0")]), &table).is_ok());
    }

    #[test]
    fn step_semantics_per_mode() {
        let domain = domains::blocksworld();
        let instance = three_blocks();
        let table = ObjectTable::new(&domain, &instance);
        let pickup = table.resolve(&PlanStep::new("pickup", ["b1"])).unwrap();

        let full = State::new([atom("clear", &["b1"]), atom("on-table", &["b1"]), atom("arm-empty", &[])]);
        assert_eq!(
            step(&full, &pickup, RelaxationMode::None).unwrap(),
            State::new([atom("holding", &["b1"])])
        );

        let partial = State::new([atom("on-table", &["b1"]), atom("arm-empty", &[])]);
        assert_eq!(
            step(&partial, &pickup, RelaxationMode::None).unwrap_err().missing,
            [atom("clear", &["b1"])].into()
        );
        assert_eq!(
            step(&partial, &pickup, RelaxationMode::PreconditionRelaxed).unwrap(),
            State::new([atom("holding", &["b1"])])
        );
        let relaxed = step(&full, &pickup, RelaxationMode::DeleteRelaxed).unwrap();
        assert_eq!(relaxed.len(), 4);
        assert!(step(&State::default(), &pickup, RelaxationMode::Both).is_ok());
    }

    #[test]
    fn empty_action_leaves_state_unchanged() {
        let noop = GroundAction {
            name: "noop".into(),
            args: alloc::vec![],
            pre: BTreeSet::new(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
        };
        let state = State::new([atom("p", &[])]);
        for mode in RelaxationMode::ALL {
            assert_eq!(step(&state, &noop, mode).unwrap(), state);
        }
    }

    #[test]
    fn lattice_order() {
        use RelaxationMode::*;
        assert!(None.is_below(DeleteRelaxed) && DeleteRelaxed.is_below(Both));
        assert!(None.is_below(PreconditionRelaxed) && PreconditionRelaxed.is_below(Both));
        assert!(!DeleteRelaxed.is_below(PreconditionRelaxed));
        assert!(!Both.is_below(None));
    }
}
