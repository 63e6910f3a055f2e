mod common;

use std::collections::{BTreeMap, BTreeSet};

use planeval_core::gen::{certify_solvable, generate, Certificate, DomainKind, GenSpec, DEFAULT_NODE_BUDGET};
use planeval_core::pddl::{domain_to_pddl, parse_domain, parse_problem, problem_to_pddl};
use planeval_core::validate::validate;
use planeval_core::{GroundAtom, ProblemInstance, RelaxationMode, State};
use proptest::prelude::*;

/// Every block rests on exactly one thing (table, block or hand), `clear`
/// holds exactly for uncovered, unheld blocks, and the arm is empty exactly
/// when nothing is held.
fn legal_blocksworld(inst: &ProblemInstance, state: &State) -> Result<(), String> {
    let blocks: Vec<&str> = inst.object_names().collect();
    let has = |p: &str, args: &[&str]| state.contains(&GroundAtom::new(p, args.iter().copied()));
    let held: Vec<&str> = blocks.iter().copied().filter(|b| has("holding", &[b])).collect();
    if held.len() > 1 {
        return Err(format!("holding {held:?}"));
    }
    if has("arm-empty", &[]) == !held.is_empty() {
        return Err("arm-empty disagrees with holding".into());
    }
    for &b in &blocks {
        let supports = usize::from(has("on-table", &[b]))
            + usize::from(held.contains(&b))
            + blocks.iter().filter(|&&u| has("on", &[b, u])).count();
        if supports != 1 {
            return Err(format!("{b} has {supports} supports"));
        }
        let covered = blocks.iter().any(|&o| has("on", &[o, b]));
        if has("clear", &[b]) != (!covered && !held.contains(&b)) {
            return Err(format!("clear {b} is wrong"));
        }
        if has("on", &[b, b]) {
            return Err(format!("{b} on itself"));
        }
    }
    for atom in state.atoms() {
        if !["on", "on-table", "clear", "holding", "arm-empty"].contains(&atom.predicate.as_str()) {
            return Err(format!("unexpected {atom}"));
        }
    }
    Ok(())
}

#[test]
fn blocksworld_states_stay_legal_along_optimal_plans() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 120, 4)).unwrap();
    for (inst, plan) in ds.instances.iter().zip(&ds.optimal_plans) {
        let n = inst.objects.len();
        assert!((3..=5).contains(&n), "{} has {n} blocks", inst.id);
        let report = planeval_core::validate::validate_with_trace(&ds.domain, inst, plan, RelaxationMode::None);
        assert!(report.is_valid());
        for state in report.trace.unwrap() {
            legal_blocksworld(inst, &state).unwrap_or_else(|e| panic!("{}: {e}", inst.id));
        }
        for atom in &inst.goal {
            assert_eq!(atom.predicate, "on");
        }
    }
}

#[test]
fn logistics_topology() {
    let ds = generate(&GenSpec::new(DomainKind::Logistics, 60, 8)).unwrap();
    for inst in &ds.instances {
        let of_type = |t: &str| -> Vec<&str> { inst.objects.iter().filter(|(_, ty)| ty == t).map(|(o, _)| o.as_str()).collect() };
        let city_of: BTreeMap<&str, &str> = inst
            .init
            .atoms()
            .filter(|a| a.predicate == "in-city")
            .map(|a| (a.args[0].as_str(), a.args[1].as_str()))
            .collect();
        let at: BTreeMap<&str, &str> = inst
            .init
            .atoms()
            .filter(|a| a.predicate == "at")
            .map(|a| (a.args[0].as_str(), a.args[1].as_str()))
            .collect();
        for city in of_type("city") {
            let airports = of_type("airport").into_iter().filter(|a| city_of.get(a) == Some(&city)).count();
            assert_eq!(airports, 1, "{} {city}", inst.id);
            let trucks = of_type("truck").into_iter().filter(|t| city_of.get(at[t]) == Some(&city)).count();
            assert_eq!(trucks, 1, "{} {city}", inst.id);
        }
        for plane in of_type("airplane") {
            assert_eq!(inst.object_type(at[plane]), Some("airport"));
        }
        for goal in &inst.goal {
            assert_eq!(goal.predicate, "at");
            assert_eq!(inst.object_type(&goal.args[0]), Some("package"));
            assert_ne!(at.get(goal.args[0].as_str()), Some(&goal.args[1].as_str()), "goal already holds");
        }
    }
}

#[test]
fn certified_lengths_match_naive_bfs() {
    for (kind, count) in [(DomainKind::Blocksworld, 25), (DomainKind::Logistics, 8)] {
        let ds = generate(&GenSpec::new(kind, count, 21)).unwrap();
        let mut compared = 0;
        for (inst, plan) in ds.instances.iter().zip(&ds.optimal_plans) {
            let Some(naive) = common::naive_optimal_length(&ds.domain, inst, 20_000) else {
                continue;
            };
            assert_eq!(plan.len(), naive, "{}", inst.id);
            assert_eq!(
                certify_solvable(&ds.domain, inst, DEFAULT_NODE_BUDGET).unwrap(),
                Certificate::Optimal { length: naive }
            );
            compared += 1;
        }
        assert!(compared * 2 >= count, "{kind:?}: only {compared} compared");
    }
}

#[test]
fn two_city_air_transport() {
    let d = planeval_core::domains::logistics();
    let p = parse_problem(
        "(define (problem two) (:domain logistics)
          (:objects c0 c1 - city l0-0 l1-0 - airport l0-1 l1-1 - location t0 t1 - truck a0 - airplane p0 - package)
          (:init (in-city l0-0 c0) (in-city l0-1 c0) (in-city l1-0 c1) (in-city l1-1 c1)
                 (at t0 l0-0) (at t1 l1-0) (at a0 l0-0) (at p0 l0-1))
          (:goal (at p0 l1-1)))",
        &d,
    )
    .unwrap();
    let g = planeval_core::Grounding::new(&d, &p).unwrap();
    let plan = planeval_core::gen::shortest_plan(&g, DEFAULT_NODE_BUDGET).unwrap().unwrap();
    let count = |name: &str| plan.steps.iter().filter(|s| s.name.starts_with(name)).count();
    assert_eq!(count("fly-airplane"), 1);
    assert!(count("load-") >= 2 && count("unload-") >= 2);
    assert_eq!(common::naive_optimal_length(&d, &p, 100_000), Some(plan.len()));
}

#[test]
fn datasets_are_reproducible_and_round_trip() {
    for kind in [DomainKind::Blocksworld, DomainKind::Logistics] {
        let spec = GenSpec::new(kind, 30, 99);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let domain_text = domain_to_pddl(&a.domain);
        assert_eq!(parse_domain(&domain_text).unwrap(), a.domain);
        let mut ids = BTreeSet::new();
        for (i, inst) in a.instances.iter().enumerate() {
            assert_eq!(inst.id, format!("{}-{i}", kind.as_str()));
            assert!(ids.insert(&inst.id));
            let text = problem_to_pddl(inst);
            let back = parse_problem(&text, &a.domain).unwrap();
            assert_eq!(&back, inst);
            assert_eq!(problem_to_pddl(&back), text);
        }
    }
}

#[test]
fn three_blocks_on_the_table_have_seven_init_atoms() {
    let d = planeval_core::domains::blocksworld();
    let p = parse_problem(
        "(define (problem flat) (:domain blocksworld) (:objects red blue green)
          (:init (on-table red) (on-table blue) (on-table green) (clear red) (clear blue) (clear green) (arm-empty))
          (:goal (on red blue)))",
        &d,
    )
    .unwrap();
    assert_eq!(p.init.len(), 7);
    assert!(validate(&d, &p, &Default::default(), RelaxationMode::None).verdict.label() == "non-goal-reaching");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_seed_gives_solvable_legal_instances(seed in any::<u64>()) {
        let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 3, seed)).unwrap();
        for (inst, plan) in ds.instances.iter().zip(&ds.optimal_plans) {
            prop_assert!(legal_blocksworld(inst, &inst.init).is_ok());
            prop_assert!(validate(&ds.domain, inst, plan, RelaxationMode::None).is_valid());
        }
        prop_assert_eq!(ds, generate(&GenSpec::new(DomainKind::Blocksworld, 3, seed)).unwrap());
    }
}
