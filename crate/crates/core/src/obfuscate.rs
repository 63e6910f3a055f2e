//! Bijective renaming of actions, predicates and objects, producing
//! "Mystery" domains that planners see as identical to the originals.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pddl::{
    ActionSchema, DomainModel, GroundAtom, LiftedAtom, Plan, PlanStep, PredicateSchema, ProblemInstance, State,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Identity,
    Deceptive,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObfuscationError {
    #[error("no {namespace} mapping for `{name}`")]
    Unmapped { namespace: &'static str, name: String },
    #[error("{namespace} names `{first}` and `{second}` both map to `{target}`")]
    NotInjective {
        namespace: &'static str,
        first: String,
        second: String,
        target: String,
    },
    #[error("`{0}` is used as a new name in more than one namespace")]
    SharedName(String),
}

/// Old name → new name, one table per namespace. The domain name itself is
/// renamed through `domains` when an entry exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfuscationMap {
    pub kind: MapKind,
    #[serde(default)]
    pub domains: BTreeMap<String, String>,
    #[serde(default)]
    pub actions: BTreeMap<String, String>,
    #[serde(default)]
    pub predicates: BTreeMap<String, String>,
    #[serde(default)]
    pub objects: BTreeMap<String, String>,
}

fn check_injective(namespace: &'static str, map: &BTreeMap<String, String>) -> Result<(), ObfuscationError> {
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (old, new) in map {
        if let Some(first) = seen.insert(new, old) {
            return Err(ObfuscationError::NotInjective {
                namespace,
                first: first.to_string(),
                second: old.clone(),
                target: new.clone(),
            });
        }
    }
    Ok(())
}

fn swap(map: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    map.iter().map(|(k, v)| (v.clone(), k.clone())).collect()
}

impl ObfuscationMap {
    pub fn identity() -> Self {
        Self {
            kind: MapKind::Identity,
            domains: BTreeMap::new(),
            actions: BTreeMap::new(),
            predicates: BTreeMap::new(),
            objects: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("maps serialize")
    }

    /// The shipped deceptive table, before restriction to a domain. It may
    /// carry several spellings of the same name (`pickup`, `pick-up`).
    pub fn deceptive_table() -> Self {
        Self::from_json(include_str!("../data/deceptive.json")).expect("shipped table parses")
    }

    /// Each namespace is injective. Randomized maps additionally never reuse
    /// a new name across namespaces.
    pub fn check(&self) -> Result<(), ObfuscationError> {
        check_injective("domain", &self.domains)?;
        check_injective("action", &self.actions)?;
        check_injective("predicate", &self.predicates)?;
        check_injective("object", &self.objects)?;
        if self.kind == MapKind::Randomized {
            let mut all = BTreeSet::new();
            for name in self.actions.values().chain(self.predicates.values()).chain(self.objects.values()) {
                if !all.insert(name) {
                    return Err(ObfuscationError::SharedName(name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        Self {
            kind: self.kind,
            domains: swap(&self.domains),
            actions: swap(&self.actions),
            predicates: swap(&self.predicates),
            objects: swap(&self.objects),
        }
    }

    fn lookup(&self, namespace: &'static str, table: &BTreeMap<String, String>, name: &str) -> Result<String, ObfuscationError> {
        if self.kind == MapKind::Identity && table.is_empty() {
            return Ok(name.to_string());
        }
        table.get(name).cloned().ok_or_else(|| ObfuscationError::Unmapped {
            namespace,
            name: name.to_string(),
        })
    }

    pub fn action(&self, name: &str) -> Result<String, ObfuscationError> {
        self.lookup("action", &self.actions, name)
    }

    pub fn predicate(&self, name: &str) -> Result<String, ObfuscationError> {
        self.lookup("predicate", &self.predicates, name)
    }

    pub fn object(&self, name: &str) -> Result<String, ObfuscationError> {
        self.lookup("object", &self.objects, name)
    }

    fn domain_name(&self, name: &str) -> String {
        self.domains.get(name).cloned().unwrap_or_else(|| name.to_string())
    }

    fn lifted(&self, atoms: &BTreeSet<LiftedAtom>) -> Result<BTreeSet<LiftedAtom>, ObfuscationError> {
        atoms
            .iter()
            .map(|a| {
                Ok(LiftedAtom {
                    predicate: self.predicate(&a.predicate)?,
                    args: a.args.clone(),
                })
            })
            .collect()
    }

    pub fn apply_domain(&self, domain: &DomainModel) -> Result<DomainModel, ObfuscationError> {
        let predicates = domain
            .predicates
            .iter()
            .map(|p| {
                Ok(PredicateSchema {
                    name: self.predicate(&p.name)?,
                    params: p.params.clone(),
                })
            })
            .collect::<Result<_, ObfuscationError>>()?;
        let actions = domain
            .actions
            .iter()
            .map(|a| {
                Ok(ActionSchema {
                    name: self.action(&a.name)?,
                    params: a.params.clone(),
                    pre: self.lifted(&a.pre)?,
                    add: self.lifted(&a.add)?,
                    del: self.lifted(&a.del)?,
                })
            })
            .collect::<Result<_, ObfuscationError>>()?;
        Ok(DomainModel {
            name: self.domain_name(&domain.name),
            requirements: domain.requirements.clone(),
            types: domain.types.clone(),
            predicates,
            actions,
        })
    }

    pub fn apply_atom(&self, atom: &GroundAtom) -> Result<GroundAtom, ObfuscationError> {
        Ok(GroundAtom {
            predicate: self.predicate(&atom.predicate)?,
            args: atom.args.iter().map(|o| self.object(o)).collect::<Result<_, _>>()?,
        })
    }

    fn atoms<'a>(&self, atoms: impl IntoIterator<Item = &'a GroundAtom>) -> Result<BTreeSet<GroundAtom>, ObfuscationError> {
        atoms.into_iter().map(|a| self.apply_atom(a)).collect()
    }

    pub fn apply_state(&self, state: &State) -> Result<State, ObfuscationError> {
        Ok(State(self.atoms(state.atoms())?))
    }

    /// Renames objects, atoms and the domain reference; the id is kept.
    pub fn apply_instance(&self, instance: &ProblemInstance) -> Result<ProblemInstance, ObfuscationError> {
        Ok(ProblemInstance {
            id: instance.id.clone(),
            domain: self.domain_name(&instance.domain),
            objects: instance
                .objects
                .iter()
                .map(|(o, ty)| Ok((self.object(o)?, ty.clone())))
                .collect::<Result<_, ObfuscationError>>()?,
            init: self.apply_state(&instance.init)?,
            goal: self.atoms(&instance.goal)?,
        })
    }

    pub fn apply_step(&self, step: &PlanStep) -> Result<PlanStep, ObfuscationError> {
        Ok(PlanStep {
            name: self.action(&step.name)?,
            args: step.args.iter().map(|o| self.object(o)).collect::<Result<_, _>>()?,
        })
    }

    pub fn apply_plan(&self, plan: &Plan) -> Result<Plan, ObfuscationError> {
        plan.steps.iter().map(|s| self.apply_step(s)).collect()
    }

    /// Keeps only the action and predicate entries that `domain` uses.
    pub fn restrict_to(&self, domain: &DomainModel) -> Result<Self, ObfuscationError> {
        let mut out = self.clone();
        out.actions = domain
            .actions
            .iter()
            .map(|a| Ok((a.name.clone(), self.action(&a.name)?)))
            .collect::<Result<_, ObfuscationError>>()?;
        out.predicates = domain
            .predicates
            .iter()
            .map(|p| Ok((p.name.clone(), self.predicate(&p.name)?)))
            .collect::<Result<_, ObfuscationError>>()?;
        out.domains.retain(|old, _| *old == domain.name);
        out.check()?;
        Ok(out)
    }
}

/// The shipped deceptive renaming, restricted to `domain`. Fails when the
/// domain uses an action or predicate the table does not cover.
pub fn deceptive_map(domain: &DomainModel) -> Result<ObfuscationMap, ObfuscationError> {
    ObfuscationMap::deceptive_table().restrict_to(domain)
}

/// Blocksworld under the shipped deceptive map.
pub fn mystery_blocksworld() -> DomainModel {
    let bw = crate::domains::blocksworld();
    deceptive_map(&bw)
        .and_then(|m| m.apply_domain(&bw))
        .expect("deceptive table covers blocksworld")
}

fn fresh_name(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    loop {
        let name = format!("o{:08x}", rng.random::<u32>());
        if used.insert(name.clone()) {
            return name;
        }
    }
}

/// Random `o` + 8 hex digit names for every action, predicate and object of
/// the instance, collision-free across namespaces and fixed by `seed`.
pub fn randomized_map(domain: &DomainModel, instance: &ProblemInstance, seed: u64) -> ObfuscationMap {
    randomized_map_over(domain, instance.object_names(), seed)
}

/// Like [`randomized_map`], over an arbitrary object set (e.g. the union of
/// a whole dataset's objects). Objects are named in sorted order.
pub fn randomized_map_over<'a>(domain: &DomainModel, objects: impl IntoIterator<Item = &'a str>, seed: u64) -> ObfuscationMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let mut actions = BTreeMap::new();
    for a in &domain.actions {
        actions.insert(a.name.clone(), fresh_name(&mut rng, &mut used));
    }
    let mut predicates = BTreeMap::new();
    for p in &domain.predicates {
        predicates.insert(p.name.clone(), fresh_name(&mut rng, &mut used));
    }
    let sorted: BTreeSet<&str> = objects.into_iter().collect();
    let mut object_map = BTreeMap::new();
    for o in sorted {
        object_map.insert(o.to_string(), fresh_name(&mut rng, &mut used));
    }
    let mut domains = BTreeMap::new();
    domains.insert(domain.name.clone(), format!("mystery-{}", fresh_name(&mut rng, &mut used)));
    ObfuscationMap {
        kind: MapKind::Randomized,
        domains,
        actions,
        predicates,
        objects: object_map,
    }
}

/// Names every object of `instances` must have for `map` to apply.
pub fn unmapped_objects<'a>(map: &ObfuscationMap, instances: impl IntoIterator<Item = &'a ProblemInstance>) -> Vec<String> {
    let mut out = BTreeSet::new();
    for instance in instances {
        for o in instance.object_names() {
            if map.object(o).is_err() {
                out.insert(o.to_string());
            }
        }
    }
    out.into_iter().collect()
}
