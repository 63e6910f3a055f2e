mod common;

use std::collections::BTreeMap;

use planeval_core::gen::{generate, DomainKind, GenSpec};
use planeval_core::metrics::{levenshtein, mean};
use planeval_core::repair::{
    corrupt_plan, detect_flaws, random_seed_plan, repair, repair_with, GoalDistances, SearchConfig, SeedKind,
    DISTANCE_STATE_LIMIT,
};
use planeval_core::validate::validate;
use planeval_core::{Grounding, Plan, RelaxationMode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn seed_quality_orders_mean_steps() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 120, 7)).unwrap();
    let config = SearchConfig::default();
    let mut steps: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (i, (inst, opt)) in ds.instances.iter().zip(&ds.optimal_plans).enumerate() {
        let g = Grounding::new(&ds.domain, inst).unwrap();
        let dist = GoalDistances::compute(&g, DISTANCE_STATE_LIMIT);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let provided = corrupt_plan(opt, 0.5, &g, &mut rng).unwrap();
        let config = SearchConfig { rng_seed: i as u64, ..config.clone() };
        for seed in [
            SeedKind::Empty,
            SeedKind::Random { length: provided.len() },
            SeedKind::Provided { plan: provided.clone() },
        ] {
            let label = seed.label();
            let trace = repair_with(&g, dist.as_ref(), &ds.domain, inst, seed, &config).unwrap();
            assert!(trace.solved(), "{} {label}", inst.id);
            steps.entry(label).or_default().push(trace.search_steps as f64);
        }
    }
    let m = |k| mean(steps[k].iter().copied()).unwrap();
    assert!(m("provided") < m("random"), "{steps:?}");
    assert!(m("random") > m("empty"), "{steps:?}");
}

#[test]
fn random_seed_plans_are_schema_uniform() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 1, 0)).unwrap();
    let mut inst = ds.instances[0].clone();
    inst.objects.truncate(3);
    let names: Vec<String> = inst.object_names().map(String::from).collect();
    inst.init = planeval_core::gen::towers_to_state(&names.iter().map(|n| vec![n.clone()]).collect());
    inst.goal = [planeval_core::GroundAtom::new("on", [names[0].as_str(), names[1].as_str()])].into();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..1000 {
        let plan = random_seed_plan(&ds.domain, &inst, 5, &mut rng).unwrap();
        assert_eq!(plan.len(), 5);
        for s in plan.steps {
            *counts.entry(s.name).or_default() += 1.0;
        }
    }
    assert_eq!(counts.len(), 4);
    let (n, p) = (5000.0, 0.25);
    let sigma = f64::sqrt(n * p * (1.0 - p));
    for (name, c) in counts {
        assert!((c - n * p).abs() <= 3.0 * sigma, "{name}: {c}");
    }
}

#[test]
fn logistics_repairs_are_sound() {
    let ds = generate(&GenSpec::new(DomainKind::Logistics, 20, 1)).unwrap();
    let mut solved = 0;
    for inst in &ds.instances {
        let trace = repair(&ds.domain, inst, SeedKind::Empty, &SearchConfig::default()).unwrap();
        if let Some(plan) = trace.plan() {
            assert!(validate(&ds.domain, inst, plan, RelaxationMode::None).is_valid());
            solved += 1;
        }
    }
    assert!(solved >= 10, "{solved}/20");
}

#[test]
fn corrupting_half_of_an_optimal_plan() {
    let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 80, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (inst, opt) in ds.instances.iter().zip(&ds.optimal_plans) {
        let g = Grounding::new(&ds.domain, inst).unwrap();
        let changed = |p: &Plan| p.steps.iter().zip(&opt.steps).filter(|(a, b)| a != b).count();
        let half = corrupt_plan(opt, 0.5, &g, &mut rng).unwrap();
        assert_eq!(changed(&half), opt.len().div_ceil(2));
        assert_eq!(&corrupt_plan(opt, 0.0, &g, &mut rng).unwrap(), opt);
        assert!(levenshtein(&corrupt_plan(opt, 1.0, &g, &mut rng).unwrap(), opt) <= opt.len());
    }
}

fn small_config() -> impl Strategy<Value = SearchConfig> {
    (0usize..60, 0usize..20, 0usize..3, any::<u64>(), 0.0f64..0.5).prop_map(|(max_steps, extra, restarts, rng_seed, noise)| {
        SearchConfig {
            max_steps,
            restart_extra_steps: extra,
            restarts_allowed: restarts,
            rng_seed,
            noise,
            ..SearchConfig::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn traces_are_sound_bounded_and_deterministic(
        inst_seed in 0u64..40,
        config in small_config(),
        kind in 0u8..3,
        len in 0usize..8,
    ) {
        let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 1, inst_seed)).unwrap();
        let (inst, opt) = (&ds.instances[0], &ds.optimal_plans[0]);
        let g = Grounding::new(&ds.domain, inst).unwrap();
        let seed = match kind {
            0 => SeedKind::Empty,
            1 => SeedKind::Random { length: len },
            _ => SeedKind::Provided {
                plan: corrupt_plan(opt, 0.5, &g, &mut ChaCha8Rng::seed_from_u64(config.rng_seed)).unwrap(),
            },
        };
        let trace = repair(&ds.domain, inst, seed.clone(), &config).unwrap();
        prop_assert!(trace.search_steps <= config.budget());
        if trace.restarted {
            prop_assert!(trace.search_steps > config.max_steps);
        }
        if let Some(plan) = trace.plan() {
            prop_assert!(validate(&ds.domain, inst, plan, RelaxationMode::None).is_valid());
            prop_assert!(detect_flaws(&ds.domain, inst, plan).unwrap().is_empty());
        }
        prop_assert_eq!(trace, repair(&ds.domain, inst, seed, &config).unwrap());
    }

    #[test]
    fn no_flaws_exactly_when_valid(inst_seed in 0u64..40, plan_seed in any::<u64>()) {
        let ds = generate(&GenSpec::new(DomainKind::Blocksworld, 1, inst_seed)).unwrap();
        let (inst, opt) = (&ds.instances[0], &ds.optimal_plans[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(plan_seed);
        let plan = common::random_plan(&ds.domain, inst, opt, &mut rng);
        if let Ok(flaws) = detect_flaws(&ds.domain, inst, &plan) {
            prop_assert_eq!(flaws.is_empty(), validate(&ds.domain, inst, &plan, RelaxationMode::None).is_valid());
        }
    }
}
