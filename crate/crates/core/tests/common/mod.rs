#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use planeval_core::validate::{StepFailure, ValidationReport, Verdict};
use planeval_core::{DomainModel, GroundAtom, Plan, PlanStep, ProblemInstance};
use rand::seq::IndexedRandom;
use rand::Rng;

type Fact = (String, Vec<String>);

/// What the naive executor concluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Naive {
    Valid,
    Broken { step: usize, missing: BTreeSet<Fact> },
    Malformed { step: usize },
    Short { unmet: BTreeSet<Fact> },
}

fn fact(a: &GroundAtom) -> Fact {
    (a.predicate.clone(), a.args.clone())
}

/// Straight-line STRIPS execution over string tuples. Shares nothing with the
/// crate beyond reading the schema fields.
pub fn naive_execute(domain: &DomainModel, inst: &ProblemInstance, plan: &Plan, ignore_pre: bool, ignore_del: bool) -> Naive {
    let objects: BTreeSet<&str> = inst.objects.iter().map(|(o, _)| o.as_str()).collect();
    let mut state: BTreeSet<Fact> = inst.init.atoms().map(fact).collect();
    for (i, call) in plan.steps.iter().enumerate() {
        let Some(schema) = domain.actions.iter().find(|a| a.name == call.name) else {
            return Naive::Malformed { step: i + 1 };
        };
        if schema.params.len() != call.args.len() || call.args.iter().any(|a| !objects.contains(a.as_str())) {
            return Naive::Malformed { step: i + 1 };
        }
        let typed_ok = schema.params.iter().zip(&call.args).all(|(p, o)| {
            let ty = inst.objects.iter().find(|(n, _)| n == o).map(|(_, t)| t.as_str()).unwrap();
            is_a(domain, ty, &p.ty)
        });
        if !typed_ok {
            return Naive::Malformed { step: i + 1 };
        }
        let sub: BTreeMap<&str, &str> = schema.params.iter().zip(&call.args).map(|(p, o)| (p.name.as_str(), o.as_str())).collect();
        let inst_atoms = |set: &BTreeSet<planeval_core::LiftedAtom>| -> BTreeSet<Fact> {
            set.iter()
                .map(|l| (l.predicate.clone(), l.args.iter().map(|v| sub.get(v.as_str()).map_or(v.clone(), |o| o.to_string())).collect()))
                .collect()
        };
        if !ignore_pre {
            let missing: BTreeSet<Fact> = inst_atoms(&schema.pre).into_iter().filter(|f| !state.contains(f)).collect();
            if !missing.is_empty() {
                return Naive::Broken { step: i + 1, missing };
            }
        }
        if !ignore_del {
            for f in inst_atoms(&schema.del) {
                state.remove(&f);
            }
        }
        state.extend(inst_atoms(&schema.add));
    }
    let unmet: BTreeSet<Fact> = inst.goal.iter().map(fact).filter(|f| !state.contains(f)).collect();
    if unmet.is_empty() {
        Naive::Valid
    } else {
        Naive::Short { unmet }
    }
}

pub fn agrees(report: &ValidationReport, naive: &Naive) -> bool {
    match (&report.verdict, naive) {
        (Verdict::Valid, Naive::Valid) => true,
        (Verdict::NonGoalReaching { unmet }, Naive::Short { unmet: u }) => unmet.iter().map(fact).collect::<BTreeSet<_>>() == *u,
        (
            Verdict::Inexecutable {
                step,
                failure: StepFailure::MissingPreconditions { missing },
                ..
            },
            Naive::Broken { step: s, missing: m },
        ) => step == s && missing.iter().map(fact).collect::<BTreeSet<_>>() == *m,
        (Verdict::Inexecutable { step, failure, .. }, Naive::Malformed { step: s }) => step == s && failure.is_malformed(),
        _ => false,
    }
}

fn is_a(domain: &DomainModel, ty: &str, want: &str) -> bool {
    let mut ty = ty.to_string();
    for _ in 0..=domain.types.len() {
        if ty == want || want == "object" {
            return true;
        }
        match domain.types.iter().find(|(t, _)| *t == ty) {
            Some((_, parent)) => ty = parent.clone(),
            None => return false,
        }
    }
    false
}

/// Random type-correct call of some schema, ignoring applicability.
pub fn random_call(domain: &DomainModel, inst: &ProblemInstance, rng: &mut impl Rng) -> PlanStep {
    let schema = domain.actions.choose(rng).unwrap();
    let args = schema.params.iter().map(|p| {
        let fits: Vec<&str> = inst
            .objects
            .iter()
            .filter(|(_, t)| is_a(domain, t, &p.ty))
            .map(|(o, _)| o.as_str())
            .collect();
        fits.choose(rng).unwrap().to_string()
    });
    PlanStep::new(schema.name.clone(), args.collect::<Vec<_>>())
}

/// A mix that exercises every verdict: optimal-plan prefixes and mutations,
/// pure noise, and the occasional malformed step.
pub fn random_plan(domain: &DomainModel, inst: &ProblemInstance, optimal: &Plan, rng: &mut impl Rng) -> Plan {
    let mut steps = match rng.random_range(0..4) {
        0 => optimal.steps.clone(),
        1 => optimal.steps[..rng.random_range(0..=optimal.len())].to_vec(),
        2 => {
            let mut s = optimal.steps.clone();
            if !s.is_empty() {
                let i = rng.random_range(0..s.len());
                s[i] = random_call(domain, inst, rng);
            }
            s
        }
        _ => (0..rng.random_range(0..8)).map(|_| random_call(domain, inst, rng)).collect(),
    };
    if rng.random_bool(0.05) {
        let at = rng.random_range(0..=steps.len());
        let junk = match rng.random_range(0..3) {
            0 => PlanStep::new("fly-to-moon", ["x"]),
            1 => PlanStep::new(domain.actions[0].name.clone(), Vec::<String>::new()),
            _ => PlanStep::new(domain.actions[0].name.clone(), vec!["no-such-object".to_string(); domain.actions[0].params.len()]),
        };
        steps.insert(at, junk);
    }
    Plan::new(steps)
}

/// Every type-correct call of every schema.
pub fn all_calls(domain: &DomainModel, inst: &ProblemInstance) -> Vec<PlanStep> {
    let mut out = Vec::new();
    for schema in &domain.actions {
        let pools: Vec<Vec<&str>> = schema
            .params
            .iter()
            .map(|p| inst.objects.iter().filter(|(_, t)| is_a(domain, t, &p.ty)).map(|(o, _)| o.as_str()).collect())
            .collect();
        let mut idx = vec![0usize; pools.len()];
        if pools.iter().any(Vec::is_empty) {
            continue;
        }
        loop {
            out.push(PlanStep::new(schema.name.clone(), idx.iter().zip(&pools).map(|(&i, p)| p[i]).collect::<Vec<_>>()));
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < pools[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    out
}

/// Optimal plan length by breadth-first search over plans, re-executing each
/// candidate with the naive executor. Slow; meant for tiny instances.
pub fn naive_optimal_length(domain: &DomainModel, inst: &ProblemInstance, limit: usize) -> Option<usize> {
    use std::collections::{HashSet, VecDeque};
    let calls = all_calls(domain, inst);
    let mut seen: HashSet<BTreeSet<Fact>> = HashSet::new();
    let mut queue = VecDeque::from([(inst.init.clone(), 0usize)]);
    seen.insert(inst.init.atoms().map(fact).collect());
    while let Some((state, depth)) = queue.pop_front() {
        let here = ProblemInstance { init: state.clone(), ..inst.clone() };
        if naive_execute(domain, &here, &Plan::default(), false, false) == Naive::Valid {
            return Some(depth);
        }
        if seen.len() > limit {
            return None;
        }
        for call in &calls {
            let plan = Plan::new([call.clone()]);
            let probe = ProblemInstance { goal: Default::default(), ..here.clone() };
            if naive_execute(domain, &probe, &plan, false, false) != Naive::Valid {
                continue;
            }
            let next = planeval_core::State::new(successor(domain, &here, call).into_iter().map(|(p, a)| GroundAtom::new(p, a)));
            if seen.insert(next.atoms().map(fact).collect()) {
                queue.push_back((next, depth + 1));
            }
        }
    }
    None
}

fn successor(domain: &DomainModel, inst: &ProblemInstance, call: &PlanStep) -> BTreeSet<Fact> {
    let schema = domain.actions.iter().find(|a| a.name == call.name).unwrap();
    let sub: BTreeMap<&str, &str> = schema.params.iter().zip(&call.args).map(|(p, o)| (p.name.as_str(), o.as_str())).collect();
    let ground = |l: &planeval_core::LiftedAtom| -> Fact { (l.predicate.clone(), l.args.iter().map(|v| sub[v.as_str()].to_string()).collect()) };
    let mut state: BTreeSet<Fact> = inst.init.atoms().map(fact).collect();
    for l in &schema.del {
        state.remove(&ground(l));
    }
    state.extend(schema.add.iter().map(ground));
    state
}
