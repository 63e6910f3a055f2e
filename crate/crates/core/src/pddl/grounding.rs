use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::{objects_by_param, ground, DomainModel, GroundAtom, ObjectTable, PddlError, PlanStep, ProblemInstance, State};

/// Fixed-width bitset over the atom universe of one grounding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits(Vec<u64>);

impl Bits {
    pub fn zeros(bits: usize) -> Self {
        Bits(vec![0; bits.div_ceil(64).max(1)])
    }

    pub fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn is_subset(&self, of: &Bits) -> bool {
        self.0.iter().zip(&of.0).all(|(a, b)| a & !b == 0)
    }

    /// Number of bits set in `self` but not in `other`.
    pub fn count_missing_from(&self, other: &Bits) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & !b).count_ones())
            .sum()
    }

    /// `self = self \ other`
    pub fn remove(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= !b;
        }
    }

    pub fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w * 64 + b)
        })
    }

    /// `self = (self \ del) ∪ add`
    pub fn apply(&mut self, del: Option<&Bits>, add: &Bits) {
        for (i, word) in self.0.iter_mut().enumerate() {
            if let Some(del) = del {
                *word &= !del.0[i];
            }
            *word |= add.0[i];
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledAction {
    pub step: PlanStep,
    pub schema: usize,
    pub pre: Bits,
    pub add: Bits,
    pub del: Bits,
    /// Static preconditions hold in the initial state.
    pub reachable: bool,
}

/// All type-correct ground atoms and actions of one instance, with states as
/// bitsets. Used by the breadth-first certifier and the repair search.
#[derive(Debug, Clone)]
pub struct Grounding {
    atoms: Vec<GroundAtom>,
    atom_index: HashMap<GroundAtom, usize>,
    actions: Vec<CompiledAction>,
    step_index: HashMap<PlanStep, usize>,
    by_schema: Vec<Vec<usize>>,
    achievers: Vec<Vec<usize>>,
    deleters: Vec<Vec<usize>>,
    reachable: Vec<usize>,
    init: Bits,
    goal: Bits,
}

fn cartesian(choices: &[Vec<alloc::string::String>]) -> Vec<Vec<alloc::string::String>> {
    let mut out = vec![Vec::new()];
    for options in choices {
        let mut next = Vec::with_capacity(out.len() * options.len());
        for prefix in &out {
            for o in options {
                let mut row = prefix.clone();
                row.push(o.clone());
                next.push(row);
            }
        }
        out = next;
    }
    out
}

impl Grounding {
    pub fn new(domain: &DomainModel, instance: &ProblemInstance) -> Result<Self, PddlError> {
        instance.check(domain)?;
        let table = ObjectTable::new(domain, instance);

        let mut atoms = Vec::new();
        for pred in &domain.predicates {
            for args in cartesian(&objects_by_param(domain, instance, &pred.params)) {
                atoms.push(GroundAtom {
                    predicate: pred.name.clone(),
                    args,
                });
            }
        }
        atoms.sort();
        let atom_index: HashMap<GroundAtom, usize> =
            atoms.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let n = atoms.len();
        let to_bits = |set: &BTreeSet<GroundAtom>| -> Bits {
            let mut bits = Bits::zeros(n);
            for atom in set {
                bits.set(atom_index[atom]);
            }
            bits
        };

        let fluent: BTreeSet<&str> = domain
            .actions
            .iter()
            .flat_map(|a| a.add.iter().chain(&a.del))
            .map(|a| a.predicate.as_str())
            .collect();

        let mut actions = Vec::new();
        let mut by_schema = vec![Vec::new(); domain.actions.len()];
        for (schema_idx, schema) in domain.actions.iter().enumerate() {
            for args in cartesian(&objects_by_param(domain, instance, &schema.params)) {
                let binding = schema
                    .params
                    .iter()
                    .map(|p| p.name.clone())
                    .zip(args.iter().cloned())
                    .collect();
                let g = ground(schema, &binding, &table)?;
                let reachable = g
                    .pre
                    .iter()
                    .filter(|a| !fluent.contains(a.predicate.as_str()))
                    .all(|a| instance.init.contains(a));
                by_schema[schema_idx].push(actions.len());
                actions.push(CompiledAction {
                    step: g.call(),
                    schema: schema_idx,
                    pre: to_bits(&g.pre),
                    add: to_bits(&g.add),
                    del: to_bits(&g.del),
                    reachable,
                });
            }
        }

        let step_index = actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.step.clone(), i))
            .collect();
        let mut achievers = vec![Vec::new(); n];
        let mut deleters = vec![Vec::new(); n];
        let mut reachable = Vec::new();
        for (i, a) in actions.iter().enumerate() {
            if !a.reachable {
                continue;
            }
            reachable.push(i);
            for atom in a.add.ones() {
                achievers[atom].push(i);
            }
            for atom in a.del.ones() {
                deleters[atom].push(i);
            }
        }

        let init = to_bits(&instance.init.0);
        let goal = to_bits(&instance.goal);
        Ok(Grounding {
            atoms,
            atom_index,
            actions,
            step_index,
            by_schema,
            achievers,
            deleters,
            reachable,
            init,
            goal,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom(&self, i: usize) -> &GroundAtom {
        &self.atoms[i]
    }

    pub fn atom_index(&self, atom: &GroundAtom) -> Option<usize> {
        self.atom_index.get(atom).copied()
    }

    pub fn actions(&self) -> &[CompiledAction] {
        &self.actions
    }

    pub fn action(&self, i: usize) -> &CompiledAction {
        &self.actions[i]
    }

    pub fn action_index(&self, step: &PlanStep) -> Option<usize> {
        self.step_index.get(step).copied()
    }

    /// Ground actions grouped by schema, in domain order.
    pub fn by_schema(&self) -> &[Vec<usize>] {
        &self.by_schema
    }

    /// Actions whose static preconditions hold initially.
    pub fn reachable_actions(&self) -> &[usize] {
        &self.reachable
    }

    /// Reachable actions adding `atom`.
    pub fn achievers(&self, atom: usize) -> &[usize] {
        &self.achievers[atom]
    }

    /// Reachable actions deleting `atom`.
    pub fn deleters(&self, atom: usize) -> &[usize] {
        &self.deleters[atom]
    }

    pub fn init(&self) -> &Bits {
        &self.init
    }

    pub fn goal(&self) -> &Bits {
        &self.goal
    }

    pub fn to_bits(&self, state: &State) -> Option<Bits> {
        let mut bits = Bits::zeros(self.atoms.len());
        for atom in state.atoms() {
            bits.set(self.atom_index(atom)?);
        }
        Some(bits)
    }

    pub fn to_state(&self, bits: &Bits) -> State {
        State(bits.ones().map(|i| self.atoms[i].clone()).collect())
    }

    pub fn applicable(&self, state: &Bits, action: usize) -> bool {
        self.actions[action].pre.is_subset(state)
    }

    pub fn successor(&self, state: &Bits, action: usize) -> Bits {
        let a = &self.actions[action];
        let mut next = state.clone();
        next.apply(Some(&a.del), &a.add);
        next
    }

    pub fn plan_steps(&self, actions: &[usize]) -> crate::pddl::Plan {
        actions.iter().map(|&i| self.actions[i].step.clone()).collect()
    }

    pub fn plan_indices(&self, plan: &crate::pddl::Plan) -> Result<Vec<usize>, PlanStep> {
        plan.steps
            .iter()
            .map(|s| self.action_index(s).ok_or_else(|| s.clone()))
            .collect()
    }
}
