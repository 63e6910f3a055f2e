mod common;

use planeval_core::gen::{certify_solvable, generate, DomainKind, GenSpec, DEFAULT_NODE_BUDGET};
use planeval_core::obfuscate::{deceptive_map, randomized_map, ObfuscationMap};
use planeval_core::translate::DomainTemplates;
use planeval_core::validate::{diagnose, validate, StepFailure, Verdict};
use planeval_core::RelaxationMode;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rename(map: &ObfuscationMap, v: &Verdict) -> Verdict {
    match v {
        Verdict::Valid => Verdict::Valid,
        Verdict::NonGoalReaching { unmet } => Verdict::NonGoalReaching {
            unmet: unmet.iter().map(|a| map.apply_atom(a).unwrap()).collect(),
        },
        Verdict::Inexecutable { step, action, failure } => Verdict::Inexecutable {
            step: *step,
            // malformed steps may carry names the map has never seen
            action: map.apply_step(action).unwrap_or_else(|_| action.clone()),
            failure: match failure {
                StepFailure::MissingPreconditions { missing } => StepFailure::MissingPreconditions {
                    missing: missing.iter().map(|a| map.apply_atom(a).unwrap()).collect(),
                },
                other => other.clone(),
            },
        },
    }
}

#[test]
fn verdicts_survive_every_map() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 100, 17)).unwrap();
    let deceptive = deceptive_map(&ds.domain).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, (inst, opt)) in ds.instances.iter().zip(&ds.optimal_plans).enumerate() {
        let plan = common::random_plan(&ds.domain, inst, opt, &mut rng);
        let randomized = randomized_map(&ds.domain, inst, i as u64);
        for map in [ObfuscationMap::identity(), deceptive.clone(), randomized] {
            let Ok(mapped_plan) = map.apply_plan(&plan) else {
                // plans naming unknown actions or objects cannot be renamed
                continue;
            };
            let d = map.apply_domain(&ds.domain).unwrap();
            let p = map.apply_instance(inst).unwrap();
            for mode in RelaxationMode::ALL {
                let before = validate(&ds.domain, inst, &plan, mode).verdict;
                let after = validate(&d, &p, &mapped_plan, mode).verdict;
                assert_eq!(rename(&map, &before), after, "{} {mode:?} {:?}", inst.id, map.kind);
            }
        }
    }
}

#[test]
fn optimal_lengths_are_unchanged_by_mapping() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 60, 5)).unwrap();
    let mystery = ds.obfuscate(&deceptive_map(&ds.domain).unwrap(), "mystery").unwrap();
    for ((orig, plan), (mapped, mplan)) in ds
        .instances
        .iter()
        .zip(&ds.optimal_plans)
        .zip(mystery.instances.iter().zip(&mystery.optimal_plans))
    {
        let a = certify_solvable(&ds.domain, orig, DEFAULT_NODE_BUDGET).unwrap();
        let b = certify_solvable(&mystery.domain, mapped, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(a, b);
        assert_eq!(plan.len(), mplan.len());
        assert!(validate(&mystery.domain, mapped, mplan, RelaxationMode::None).is_valid());
    }
}

#[test]
fn diagnosis_never_leaks_original_names() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 30, 6)).unwrap();
    let map = deceptive_map(&ds.domain).unwrap();
    let templates = DomainTemplates::mystery_deceptive();
    let originals: Vec<&str> = ["pickup", "putdown", "unstack", "stack", "on-table", "arm-empty", "holding", "clear"].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d = map.apply_domain(&ds.domain).unwrap();
    let mut checked = 0;
    for inst in &ds.instances {
        let p = map.apply_instance(inst).unwrap();
        let plan = planeval_core::Plan::new((0..4).map(|_| common::random_call(&d, &p, &mut rng)));
        let report = validate(&d, &p, &plan, RelaxationMode::None);
        if report.is_valid() {
            continue;
        }
        for text in [diagnose(&report, None).unwrap(), diagnose(&report, Some(&templates)).unwrap()] {
            for word in &originals {
                assert!(!text.contains(word), "`{word}` leaked: {text}");
            }
            for (colour, _) in &inst.objects {
                assert!(!text.contains(colour.as_str()), "`{colour}` leaked: {text}");
            }
        }
        checked += 1;
    }
    assert!(checked > 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inverse_is_an_involution_and_undoes_the_map(seed in any::<u64>()) {
        let ds = generate(&GenSpec::new(DomainKind::Logistics, 1, seed % 32)).unwrap();
        let inst = &ds.instances[0];
        let map = randomized_map(&ds.domain, inst, seed);
        prop_assert_eq!(map.inverse().inverse(), map.clone());
        let inv = map.inverse();
        prop_assert_eq!(inv.apply_domain(&map.apply_domain(&ds.domain).unwrap()).unwrap(), ds.domain.clone());
        prop_assert_eq!(inv.apply_instance(&map.apply_instance(inst).unwrap()).unwrap(), inst.clone());
        let plan = &ds.optimal_plans[0];
        prop_assert_eq!(&inv.apply_plan(&map.apply_plan(plan).unwrap()).unwrap(), plan);
        prop_assert_eq!(randomized_map(&ds.domain, inst, seed), map);
    }
}
