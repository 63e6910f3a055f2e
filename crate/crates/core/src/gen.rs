//! Seeded benchmark generation for Blocksworld and Logistics, with
//! breadth-first certification of optimal plan lengths.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains;
use crate::obfuscate::{ObfuscationError, ObfuscationMap};
use crate::pddl::{Bits, DomainModel, GroundAtom, Grounding, PddlError, Plan, ProblemInstance, State, OBJECT_TYPE};

pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

/// Block names, in the order they are drawn from.
pub const BLOCK_NAMES: [&str; 12] = [
    "red", "blue", "orange", "yellow", "white", "magenta", "black", "cyan", "green", "violet", "silver", "gold",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Blocksworld,
    Logistics,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Blocksworld => "blocksworld",
            DomainKind::Logistics => "logistics",
        }
    }

    pub fn domain(self) -> DomainModel {
        match self {
            DomainKind::Blocksworld => domains::blocksworld(),
            DomainKind::Logistics => domains::logistics(),
        }
    }
}

/// How the `on` atoms of a Blocksworld goal relate to each other and to the
/// initial towers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalInteraction {
    /// Goal atoms form at least one chain (`x` on `y`, `y` on `z`) and none
    /// inverts an initial stacking relation.
    Positive,
    /// Some goal `x` on `y` has `y` initially above `x` in the same tower.
    Negative,
    /// Goal atoms share no block.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlocksworldParams {
    pub blocks: Range,
    /// Classes are assigned round-robin by instance index.
    pub interactions: Vec<GoalInteraction>,
}

impl Default for BlocksworldParams {
    fn default() -> Self {
        Self {
            blocks: Range::new(3, 5),
            interactions: vec![GoalInteraction::Positive, GoalInteraction::Negative, GoalInteraction::None],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticsParams {
    pub cities: Range,
    /// Includes the city's airport.
    pub locations_per_city: Range,
    pub packages: Range,
    pub airplanes: Range,
}

impl Default for LogisticsParams {
    fn default() -> Self {
        Self {
            cities: Range::new(1, 3),
            locations_per_city: Range::new(2, 3),
            packages: Range::new(1, 3),
            airplanes: Range::new(1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub domain_kind: DomainKind,
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub blocksworld: BlocksworldParams,
    #[serde(default)]
    pub logistics: LogisticsParams,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_NODE_BUDGET
}

impl GenSpec {
    pub fn new(domain_kind: DomainKind, count: usize, seed: u64) -> Self {
        Self {
            domain_kind,
            count,
            seed,
            blocksworld: BlocksworldParams::default(),
            logistics: LogisticsParams::default(),
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }

    pub fn check(&self) -> Result<(), GenError> {
        let bad = |why: String| Err(GenError::Infeasible(why));
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        let ranges: &[(&str, Range)] = match self.domain_kind {
            DomainKind::Blocksworld => &[("blocks", self.blocksworld.blocks)],
            DomainKind::Logistics => &[
                ("cities", self.logistics.cities),
                ("locations-per-city", self.logistics.locations_per_city),
                ("packages", self.logistics.packages),
                ("airplanes", self.logistics.airplanes),
            ],
        };
        for (name, r) in ranges {
            if r.min > r.max || r.min == 0 {
                return bad(format!("{name} range {}..={} is empty or starts at 0", r.min, r.max));
            }
        }
        match self.domain_kind {
            DomainKind::Blocksworld => {
                let b = &self.blocksworld;
                if b.interactions.is_empty() {
                    return bad("no goal-interaction class requested".into());
                }
                if b.blocks.max > BLOCK_NAMES.len() {
                    return bad(format!("at most {} blocks are supported", BLOCK_NAMES.len()));
                }
                for class in &b.interactions {
                    let need = match class {
                        GoalInteraction::Positive => 3,
                        GoalInteraction::Negative | GoalInteraction::None => 2,
                    };
                    if b.blocks.min < need {
                        return bad(format!("{class:?} goals need at least {need} blocks"));
                    }
                }
            }
            DomainKind::Logistics => {
                if self.logistics.locations_per_city.min < 2 {
                    return bad("each city needs an airport and at least one other location".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    #[error("instance {index}: no acceptable instance after {attempts} draws")]
    GaveUp { index: usize, attempts: usize },
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error(transparent)]
    Obfuscation(#[from] ObfuscationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub domain: DomainModel,
    pub instances: Vec<ProblemInstance>,
    /// An optimal plan per instance, in the same order.
    pub optimal_plans: Vec<Plan>,
    pub spec: GenSpec,
    pub version: String,
}

impl Dataset {
    /// Renames the whole dataset; instances are re-identified `{prefix}-{i}`.
    pub fn obfuscate(&self, map: &ObfuscationMap, prefix: &str) -> Result<Dataset, ObfuscationError> {
        let mut instances = Vec::with_capacity(self.instances.len());
        for (i, inst) in self.instances.iter().enumerate() {
            let mut mapped = map.apply_instance(inst)?;
            mapped.id = format!("{prefix}-{i}");
            instances.push(mapped);
        }
        Ok(Dataset {
            domain: map.apply_domain(&self.domain)?,
            instances,
            optimal_plans: self.optimal_plans.iter().map(|p| map.apply_plan(p)).collect::<Result<_, _>>()?,
            spec: self.spec.clone(),
            version: self.version.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Certificate {
    Optimal { length: usize },
    Unsolvable,
    BudgetExceeded { expanded: usize },
}

/// Breadth-first search for a shortest plan. Returns `Ok(None)` when the
/// goal is unreachable and `Err(expanded)` when the node budget runs out.
pub fn shortest_plan(grounding: &Grounding, budget: usize) -> Result<Option<Plan>, usize> {
    let goal = grounding.goal();
    if goal.is_subset(grounding.init()) {
        return Ok(Some(Plan::default()));
    }
    let mut nodes: Vec<(Bits, usize, usize)> = vec![(grounding.init().clone(), usize::MAX, usize::MAX)];
    let mut seen: HashMap<Bits, ()> = HashMap::new();
    seen.insert(grounding.init().clone(), ());
    let mut queue = VecDeque::from([0usize]);
    let actions = grounding.reachable_actions();
    while let Some(node) = queue.pop_front() {
        for &a in actions {
            if !grounding.applicable(&nodes[node].0, a) {
                continue;
            }
            let next = grounding.successor(&nodes[node].0, a);
            if seen.contains_key(&next) {
                continue;
            }
            if nodes.len() >= budget {
                return Err(nodes.len());
            }
            let reached = goal.is_subset(&next);
            seen.insert(next.clone(), ());
            nodes.push((next, node, a));
            let id = nodes.len() - 1;
            if reached {
                let mut path = Vec::new();
                let mut at = id;
                while nodes[at].1 != usize::MAX {
                    path.push(nodes[at].2);
                    at = nodes[at].1;
                }
                path.reverse();
                return Ok(Some(grounding.plan_steps(&path)));
            }
            queue.push_back(id);
        }
    }
    Ok(None)
}

/// Exact optimal plan length by breadth-first search within `budget` nodes.
pub fn certify_solvable(domain: &DomainModel, instance: &ProblemInstance, budget: usize) -> Result<Certificate, PddlError> {
    let grounding = Grounding::new(domain, instance)?;
    Ok(match shortest_plan(&grounding, budget) {
        Ok(Some(plan)) => Certificate::Optimal { length: plan.len() },
        Ok(None) => Certificate::Unsolvable,
        Err(expanded) => Certificate::BudgetExceeded { expanded },
    })
}

const MAX_DRAWS: usize = 10_000;

fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate(spec: &GenSpec) -> Result<Dataset, GenError> {
    match spec.domain_kind {
        DomainKind::Blocksworld => gen_blocksworld(spec),
        DomainKind::Logistics => gen_logistics(spec),
    }
}

fn build(
    spec: &GenSpec,
    mut draw: impl FnMut(usize, &mut ChaCha8Rng) -> Option<ProblemInstance>,
) -> Result<Dataset, GenError> {
    spec.check()?;
    let domain = spec.domain_kind.domain();
    let mut instances = Vec::with_capacity(spec.count);
    let mut optimal_plans = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let mut rng = instance_rng(spec.seed, index);
        let mut accepted = None;
        for _ in 0..MAX_DRAWS {
            let Some(mut instance) = draw(index, &mut rng) else {
                continue;
            };
            instance.id = format!("{}-{index}", spec.domain_kind.as_str());
            let grounding = Grounding::new(&domain, &instance)?;
            if let Ok(Some(plan)) = shortest_plan(&grounding, spec.node_budget) {
                accepted = Some((instance, plan));
                break;
            }
        }
        let (instance, plan) = accepted.ok_or(GenError::GaveUp {
            index,
            attempts: MAX_DRAWS,
        })?;
        instances.push(instance);
        optimal_plans.push(plan);
    }
    Ok(Dataset {
        domain,
        instances,
        optimal_plans,
        spec: spec.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Towers listed bottom to top.
pub type Towers = Vec<Vec<String>>;

fn lah(n: usize, k: usize) -> f64 {
    // L(n, k) = C(n-1, k-1) * n! / k!
    let mut c = 1.0;
    for i in 0..(k - 1) {
        c = c * (n - 1 - i) as f64 / (i + 1) as f64;
    }
    let mut falling = 1.0;
    for i in (k + 1)..=n {
        falling *= i as f64;
    }
    c * falling
}

/// Uniform over all arrangements of `blocks` into unordered towers.
pub fn sample_towers(blocks: &[String], rng: &mut ChaCha8Rng) -> Towers {
    let n = blocks.len();
    if n == 0 {
        return Vec::new();
    }
    let weights: Vec<f64> = (1..=n).map(|k| lah(n, k)).collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut k = n;
    for (i, w) in weights.iter().enumerate() {
        if pick < *w {
            k = i + 1;
            break;
        }
        pick -= w;
    }
    let mut order = blocks.to_vec();
    order.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    cuts.sort_unstable();
    let mut towers = Vec::with_capacity(k);
    let mut start = 0;
    for cut in cuts.into_iter().chain([n]) {
        towers.push(order[start..cut].to_vec());
        start = cut;
    }
    towers
}

pub fn towers_to_state(towers: &Towers) -> State {
    let mut atoms = BTreeSet::new();
    atoms.insert(GroundAtom::new("arm-empty", [""; 0]));
    for tower in towers {
        atoms.insert(GroundAtom::new("on-table", [tower[0].as_str()]));
        for pair in tower.windows(2) {
            atoms.insert(GroundAtom::new("on", [pair[1].as_str(), pair[0].as_str()]));
        }
        atoms.insert(GroundAtom::new("clear", [tower[tower.len() - 1].as_str()]));
    }
    State(atoms)
}

fn on_pairs(towers: &Towers) -> Vec<(String, String)> {
    towers
        .iter()
        .flat_map(|t| t.windows(2).map(|p| (p[1].clone(), p[0].clone())))
        .collect()
}

/// `true` when `upper` sits somewhere above `lower` in one tower.
fn above(towers: &Towers, upper: &str, lower: &str) -> bool {
    towers.iter().any(|t| {
        let u = t.iter().position(|b| b == upper);
        let l = t.iter().position(|b| b == lower);
        matches!((u, l), (Some(u), Some(l)) if u > l)
    })
}

/// Which class a goal (as `(upper, lower)` pairs) falls in relative to the
/// initial towers, if any.
pub fn classify_goal(init: &Towers, goal: &[(String, String)]) -> Option<GoalInteraction> {
    if goal.is_empty() {
        return None;
    }
    if goal.iter().any(|(x, y)| above(init, y, x)) {
        return Some(GoalInteraction::Negative);
    }
    let mut blocks = BTreeSet::new();
    let disjoint = goal.iter().all(|(x, y)| blocks.insert(x) && blocks.insert(y));
    if disjoint {
        return Some(GoalInteraction::None);
    }
    let uppers: BTreeSet<&String> = goal.iter().map(|(x, _)| x).collect();
    goal.iter()
        .any(|(_, y)| uppers.contains(y))
        .then_some(GoalInteraction::Positive)
}

fn draw_blocksworld(spec: &GenSpec, index: usize, rng: &mut ChaCha8Rng) -> Option<ProblemInstance> {
    let params = &spec.blocksworld;
    let class = params.interactions[index % params.interactions.len()];
    let n = params.blocks.sample(rng);
    let mut names: Vec<String> = BLOCK_NAMES.iter().map(|s| s.to_string()).collect();
    names.shuffle(rng);
    names.truncate(n);
    let init = sample_towers(&names, rng);
    let target = sample_towers(&names, rng);
    let mut goal = on_pairs(&target);
    if class == GoalInteraction::None {
        // keep a random block-disjoint subset
        goal.shuffle(rng);
        let mut used = BTreeSet::new();
        goal.retain(|(x, y)| {
            if used.contains(x) || used.contains(y) || rng.random_bool(0.25) {
                return false;
            }
            used.insert(x.clone());
            used.insert(y.clone());
            true
        });
    }
    if classify_goal(&init, &goal) != Some(class) {
        return None;
    }
    goal.sort();
    Some(ProblemInstance {
        id: String::new(),
        domain: "blocksworld".into(),
        objects: {
            let mut objects: Vec<(String, String)> = names.iter().map(|b| (b.clone(), OBJECT_TYPE.into())).collect();
            objects.sort();
            objects
        },
        init: towers_to_state(&init),
        goal: goal.iter().map(|(x, y)| GroundAtom::new("on", [x.as_str(), y.as_str()])).collect(),
    })
}

/// Blocksworld instances over 3–5 colour-named blocks by default. Initial and
/// goal configurations are drawn uniformly over tower arrangements and kept
/// when the goal falls in the instance's interaction class; every kept
/// instance is solved optimally before inclusion.
pub fn gen_blocksworld(spec: &GenSpec) -> Result<Dataset, GenError> {
    if spec.domain_kind != DomainKind::Blocksworld {
        return Err(GenError::Infeasible("spec is not for blocksworld".into()));
    }
    build(spec, |index, rng| draw_blocksworld(spec, index, rng))
}

fn draw_logistics(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Option<ProblemInstance> {
    let p = &spec.logistics;
    let cities = p.cities.sample(rng);
    let mut objects: Vec<(String, String)> = Vec::new();
    let mut init = BTreeSet::new();
    let mut locations = Vec::new();
    let mut airports = Vec::new();
    for c in 0..cities {
        let city = format!("c{c}");
        objects.push((city.clone(), "city".into()));
        let n = p.locations_per_city.sample(rng);
        let mut here = Vec::new();
        for l in 0..n {
            let loc = format!("l{c}-{l}");
            objects.push((loc.clone(), if l == 0 { "airport" } else { "location" }.into()));
            init.insert(GroundAtom::new("in-city", [loc.as_str(), city.as_str()]));
            here.push(loc);
        }
        airports.push(here[0].clone());
        let truck = format!("t{c}");
        objects.push((truck.clone(), "truck".into()));
        let start = &here[rng.random_range(0..here.len())];
        init.insert(GroundAtom::new("at", [truck.as_str(), start.as_str()]));
        locations.extend(here);
    }
    for a in 0..p.airplanes.sample(rng) {
        let plane = format!("a{a}");
        objects.push((plane.clone(), "airplane".into()));
        let start = &airports[rng.random_range(0..airports.len())];
        init.insert(GroundAtom::new("at", [plane.as_str(), start.as_str()]));
    }
    let mut goal = BTreeSet::new();
    for i in 0..p.packages.sample(rng) {
        let package = format!("p{i}");
        objects.push((package.clone(), "package".into()));
        let start = rng.random_range(0..locations.len());
        let mut end = rng.random_range(0..locations.len() - 1);
        if end >= start {
            end += 1;
        }
        init.insert(GroundAtom::new("at", [package.as_str(), locations[start].as_str()]));
        goal.insert(GroundAtom::new("at", [package.as_str(), locations[end].as_str()]));
    }
    Some(ProblemInstance {
        id: String::new(),
        domain: "logistics".into(),
        objects,
        init: State(init),
        goal,
    })
}

/// Logistics instances: one truck and one airport per city, packages sent
/// to a location other than their start, all certified solvable.
pub fn gen_logistics(spec: &GenSpec) -> Result<Dataset, GenError> {
    if spec.domain_kind != DomainKind::Logistics {
        return Err(GenError::Infeasible("spec is not for logistics".into()));
    }
    build(spec, |_, rng| draw_logistics(spec, rng))
}
