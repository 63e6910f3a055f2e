//! Local-search plan repair in the style of LPG: start from a seed plan and
//! keep repairing its earliest flaw until the plan is valid or the step
//! budget runs out.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use hashbrown::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pddl::{Bits, DomainModel, GroundAtom, Grounding, PddlError, Plan, PlanStep, ProblemInstance};
use crate::validate::{validate, RelaxationMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeedKind {
    Empty,
    /// A uniformly random plan of this length, drawn from the search RNG.
    Random { length: usize },
    Provided { plan: Plan },
}

impl SeedKind {
    pub fn label(&self) -> &'static str {
        match self {
            SeedKind::Empty => "empty",
            SeedKind::Random { .. } => "random",
            SeedKind::Provided { .. } => "provided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_steps: usize,
    /// Budget of each restart.
    pub restart_extra_steps: usize,
    pub restarts_allowed: usize,
    pub rng_seed: u64,
    /// Probability of moving to a random neighbour instead of a best one.
    pub noise: f64,
    /// How many of the latest moves may not be undone, unless undoing one
    /// beats the best score seen so far.
    pub tabu_tenure: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            restart_extra_steps: 50,
            restarts_allowed: 1,
            rng_seed: 0,
            noise: 0.1,
            tabu_tenure: 1,
        }
    }
}

impl SearchConfig {
    pub fn budget(&self) -> usize {
        self.max_steps + self.restart_extra_steps * self.restarts_allowed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Flaw {
    /// `step` is 1-based.
    UnsatisfiedPrecondition { step: usize, atom: GroundAtom },
    UnmetGoal { atom: GroundAtom },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    Solved { plan: Plan },
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTrace {
    pub outcome: Outcome,
    pub search_steps: usize,
    pub restarted: bool,
    pub seed: SeedKind,
    /// The seed as searched, after resolving it against the instance.
    pub seed_plan: Plan,
    pub initial_flaws: usize,
    /// Number of flaws picked for repair over the whole search.
    pub flaw_history_len: usize,
}

impl RepairTrace {
    pub fn plan(&self) -> Option<&Plan> {
        match &self.outcome {
            Outcome::Solved { plan } => Some(plan),
            Outcome::Exhausted => None,
        }
    }

    pub fn solved(&self) -> bool {
        self.plan().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error("plan step {step} `{action}` does not name a ground action of the instance")]
    Unresolvable { step: usize, action: PlanStep },
    #[error("the instance has no ground actions to sample from")]
    NoActions,
    #[error("fraction {0} is outside [0, 1]")]
    Fraction(f64),
}

/// Missing preconditions per step and unmet goals, simulating with every
/// step applied regardless of its preconditions.
pub fn detect_flaws(domain: &DomainModel, instance: &ProblemInstance, plan: &Plan) -> Result<Vec<Flaw>, RepairError> {
    let g = Grounding::new(domain, instance)?;
    let steps = resolve(&g, plan)?;
    Ok(flaws_in(&g, &steps))
}

fn resolve(g: &Grounding, plan: &Plan) -> Result<Vec<usize>, RepairError> {
    plan.steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            g.action_index(s).ok_or_else(|| RepairError::Unresolvable {
                step: i + 1,
                action: s.clone(),
            })
        })
        .collect()
}

pub fn flaws_in(g: &Grounding, steps: &[usize]) -> Vec<Flaw> {
    let mut out = Vec::new();
    let mut state = g.init().clone();
    for (i, &a) in steps.iter().enumerate() {
        let action = g.action(a);
        for atom in action.pre.ones().filter(|&q| !state.get(q)) {
            out.push(Flaw::UnsatisfiedPrecondition {
                step: i + 1,
                atom: g.atom(atom).clone(),
            });
        }
        state.apply(Some(&action.del), &action.add);
    }
    for atom in g.goal().ones().filter(|&q| !state.get(q)) {
        out.push(Flaw::UnmetGoal { atom: g.atom(atom).clone() });
    }
    out
}

/// Uniform over schemas, then uniform over that schema's ground actions;
/// applicability is not considered.
pub fn sample_action(g: &Grounding, rng: &mut impl Rng) -> Option<usize> {
    let schemas: Vec<&Vec<usize>> = g.by_schema().iter().filter(|s| !s.is_empty()).collect();
    let schema = schemas.choose(rng)?;
    schema.choose(rng).copied()
}

pub fn random_seed_plan_in(g: &Grounding, length: usize, rng: &mut impl Rng) -> Result<Plan, RepairError> {
    let steps = (0..length)
        .map(|_| sample_action(g, rng).ok_or(RepairError::NoActions))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(g.plan_steps(&steps))
}

/// `length` ground actions of `instance`, each drawn by picking an action
/// schema uniformly and then one of its groundings uniformly.
pub fn random_seed_plan(
    domain: &DomainModel,
    instance: &ProblemInstance,
    length: usize,
    rng: &mut impl Rng,
) -> Result<Plan, RepairError> {
    random_seed_plan_in(&Grounding::new(domain, instance)?, length, rng)
}

/// Replaces ⌈fraction·len⌉ distinct, uniformly chosen steps with random
/// ground actions that differ from the step they replace.
pub fn corrupt_plan(plan: &Plan, fraction: f64, g: &Grounding, rng: &mut impl Rng) -> Result<Plan, RepairError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(RepairError::Fraction(fraction));
    }
    let n = plan.len();
    let exact = fraction * n as f64;
    let mut k = exact as usize;
    if (k as f64) < exact - 1e-9 {
        k += 1;
    }
    let k = k.min(n);
    let mut out = plan.clone();
    let chosen = rand::seq::index::sample(rng, n, k);
    for i in chosen.iter() {
        let replacement = loop {
            let a = sample_action(g, rng).ok_or(RepairError::NoActions)?;
            let step = &g.action(a).step;
            if *step != plan.steps[i] || g.actions().len() < 2 {
                break step.clone();
            }
        };
        out.steps[i] = replacement;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Insert { pos: usize, action: usize },
    Delete { pos: usize },
}

/// Cost charged for an atom or state from which the goal cannot be reached.
const UNREACHABLE: u32 = 1_000;
/// The relaxed-cost cache is dropped when it grows past this many states.
const CACHE_LIMIT: usize = 200_000;
/// Exact goal distances are only tabulated for state spaces up to this size.
pub const DISTANCE_STATE_LIMIT: usize = 100_000;

/// Additive relaxed cost of every atom from `state`: 0 for atoms in the
/// state, otherwise 1 + the summed cost of the cheapest achiever's
/// preconditions, ignoring deletes.
fn relaxed_costs(g: &Grounding, state: &Bits) -> Vec<u32> {
    let mut cost: Vec<u32> = (0..g.atom_count()).map(|q| if state.get(q) { 0 } else { UNREACHABLE }).collect();
    loop {
        let mut changed = false;
        for &a in g.reachable_actions() {
            let action = g.action(a);
            let mut c = 1u32;
            for q in action.pre.ones() {
                c = c.saturating_add(cost[q]);
                if c >= UNREACHABLE {
                    break;
                }
            }
            if c >= UNREACHABLE {
                continue;
            }
            for q in action.add.ones() {
                if c < cost[q] {
                    cost[q] = c;
                    changed = true;
                }
            }
        }
        if !changed {
            return cost;
        }
    }
}

/// Shortest distance to the goal from every reachable state that can reach
/// it.
#[derive(Debug, Clone)]
pub struct GoalDistances(HashMap<Bits, u32>);

impl GoalDistances {
    /// Enumerates the reachable state space breadth-first and searches back
    /// from the goal states. `None` if there are more than `limit` states.
    pub fn compute(g: &Grounding, limit: usize) -> Option<Self> {
        let mut index: HashMap<Bits, usize> = HashMap::new();
        index.insert(g.init().clone(), 0);
        let mut states = alloc::vec![g.init().clone()];
        let mut preds: Vec<Vec<usize>> = alloc::vec![Vec::new()];
        let mut i = 0;
        while i < states.len() {
            for &a in g.reachable_actions() {
                if !g.applicable(&states[i], a) {
                    continue;
                }
                let next = g.successor(&states[i], a);
                let j = match index.get(&next) {
                    Some(&j) => j,
                    None => {
                        if states.len() >= limit {
                            return None;
                        }
                        index.insert(next.clone(), states.len());
                        states.push(next);
                        preds.push(Vec::new());
                        states.len() - 1
                    }
                };
                preds[j].push(i);
            }
            i += 1;
        }
        let mut dist = alloc::vec![u32::MAX; states.len()];
        let mut queue = VecDeque::new();
        for (k, s) in states.iter().enumerate() {
            if g.goal().is_subset(s) {
                dist[k] = 0;
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            for &p in &preds[k] {
                if dist[p] == u32::MAX {
                    dist[p] = dist[k] + 1;
                    queue.push_back(p);
                }
            }
        }
        Some(Self(states.into_iter().zip(dist).filter(|(_, d)| *d != u32::MAX).collect()))
    }

    pub fn get(&self, state: &Bits) -> Option<u32> {
        self.0.get(state).copied()
    }

    /// Number of states that can reach the goal.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Penalised score (what the search minimises), raw score (0 exactly for a
/// valid plan), plan length.
type Score = (u32, u32, usize);

/// The state reached at the first flaw and what must hold there for the rest
/// of the plan to work.
type Key = (Bits, Bits);

struct Search<'g> {
    g: &'g Grounding,
    distances: Option<&'g GoalDistances>,
    rng: ChaCha8Rng,
    noise: f64,
    picked: usize,
    costs: HashMap<Bits, Vec<u32>>,
    visited: HashMap<Key, u32>,
    /// `(action, inserted)` of the latest moves; undoing them is tabu.
    recent: VecDeque<(usize, bool)>,
    tenure: usize,
    best: u32,
}

/// Flaw count of `steps` run from `state` to the end, goal included.
fn count_from(g: &Grounding, mut state: Bits, steps: impl IntoIterator<Item = usize>) -> u32 {
    let mut flaws = 0;
    for a in steps {
        let action = g.action(a);
        flaws += action.pre.count_missing_from(&state);
        state.apply(Some(&action.del), &action.add);
    }
    flaws + g.goal().count_missing_from(&state)
}

/// What must hold before each step for the rest of the plan to run and
/// reach the goal. Index `plan.len()` is the goal.
fn regress(g: &Grounding, plan: &[usize]) -> Vec<Bits> {
    let mut needs = alloc::vec![g.goal().clone(); plan.len() + 1];
    for k in (0..plan.len()).rev() {
        needs[k] = regress_through(g, &needs[k + 1], plan[k]);
    }
    needs
}

fn regress_through(g: &Grounding, after: &Bits, a: usize) -> Bits {
    let action = g.action(a);
    let mut before = after.clone();
    before.remove(&action.del);
    before.remove(&action.add);
    before.apply(None, &action.pre);
    before
}

/// Runs `steps` from `state` while they apply; returns how many ran.
fn progress(g: &Grounding, state: &mut Bits, steps: &[usize]) -> usize {
    for (i, &a) in steps.iter().enumerate() {
        let action = g.action(a);
        if !action.pre.is_subset(state) {
            return i;
        }
        state.apply(Some(&action.del), &action.add);
    }
    steps.len()
}

impl<'g> Search<'g> {
    /// Additive relaxed cost of reaching every atom of `needed` from `state`.
    fn relaxed_cost(&mut self, state: &Bits, needed: &Bits) -> u32 {
        if needed.is_subset(state) {
            return 0;
        }
        if !self.costs.contains_key(state) {
            if self.costs.len() >= CACHE_LIMIT {
                self.costs.clear();
            }
            self.costs.insert(state.clone(), relaxed_costs(self.g, state));
        }
        let costs = &self.costs[state];
        needed.ones().map(|q| costs[q]).sum()
    }

    fn goal_distance(&mut self, state: &Bits) -> u32 {
        match self.distances {
            Some(d) => d.get(state).unwrap_or(UNREACHABLE),
            None => self.relaxed_cost(state, self.g.goal()),
        }
    }

    /// Score of `prefix ++ rest` where `prefix` is executable and ends in
    /// `state`: the goal distance of the state reached once `rest` stops
    /// applying, plus one per step left unexecuted.
    fn score_run(&mut self, mut state: Bits, rest: &[usize], needs: &[Bits]) -> (u32, Key) {
        let ran = progress(self.g, &mut state, rest);
        let h = self.goal_distance(&state) + (rest.len() - ran) as u32;
        (h, (state, needs[ran].clone()))
    }

    /// One accepted move. Returns the raw score of the new plan (0 when it is
    /// valid), or `None` when the flaw admits no neighbour.
    fn step(&mut self, plan: &mut Vec<usize>) -> Option<u32> {
        let g = self.g;
        let mut states = Vec::with_capacity(plan.len() + 1);
        let mut state = g.init().clone();
        let mut first = plan.len();
        for (i, &a) in plan.iter().enumerate() {
            states.push(state.clone());
            let action = g.action(a);
            if !action.pre.is_subset(&state) {
                first = i;
                break;
            }
            state.apply(Some(&action.del), &action.add);
        }
        if first == plan.len() {
            states.push(state);
        }
        let needed = if first < plan.len() { &g.action(plan[first]).pre } else { g.goal() };
        let unmet: Vec<usize> = needed.ones().filter(|&q| !states[first].get(q)).collect();
        if unmet.is_empty() {
            return None;
        }
        let needs = regress(g, plan);

        let mut moves = Vec::new();
        let mut seen = BTreeSet::new();
        for &atom in &unmet {
            for &a in g.achievers(atom) {
                for pos in 0..=first {
                    if seen.insert((pos, a)) {
                        moves.push(Move::Insert { pos, action: a });
                    }
                }
            }
        }
        for (pos, &a) in plan[..first].iter().enumerate() {
            if unmet.iter().any(|&atom| g.action(a).del.get(atom)) {
                moves.push(Move::Delete { pos });
            }
        }
        if first < plan.len() {
            moves.push(Move::Delete { pos: first });
        }
        if moves.is_empty() {
            return None;
        }
        self.picked += 1;

        let mut scored: Vec<(Move, Score, Key)> = Vec::with_capacity(moves.len());
        for m in moves {
            let (h, key, len) = match m {
                Move::Insert { pos, action } => {
                    let s = &states[pos];
                    let (h, key) = if g.applicable(s, action) {
                        self.score_run(g.successor(s, action), &plan[pos..], &needs[pos..])
                    } else {
                        // the new step is the first flaw; charge what its
                        // preconditions would cost on top
                        let pre = &g.action(action).pre;
                        let h = self.goal_distance(s) + (plan.len() + 1 - pos) as u32 + self.relaxed_cost(s, pre);
                        (h, (s.clone(), regress_through(g, &needs[pos], action)))
                    };
                    (h, key, plan.len() + 1)
                }
                Move::Delete { pos } => {
                    let mut rest = plan[pos..].to_vec();
                    rest.remove(0);
                    let needs = regress(g, &rest);
                    let (h, key) = self.score_run(states[pos].clone(), &rest, &needs);
                    (h, key, plan.len() - 1)
                }
            };
            let visits = self.visited.get(&key).copied().unwrap_or(0);
            scored.push((m, (h + visits, h, len), key));
        }
        let undoes = |m: &Move| match *m {
            Move::Insert { action, .. } => self.recent.contains(&(action, false)),
            Move::Delete { pos } => self.recent.contains(&(plan[pos], true)),
        };
        let allowed: Vec<&(Move, Score, Key)> = scored.iter().filter(|(m, s, _)| s.1 < self.best || !undoes(m)).collect();
        let pool: Vec<&(Move, Score, Key)> = if allowed.is_empty() { scored.iter().collect() } else { allowed };
        let (chosen, score, key) = if self.rng.random_bool(self.noise) {
            *pool.choose(&mut self.rng).expect("nonempty")
        } else {
            let best = pool.iter().map(|(_, s, _)| *s).min().expect("nonempty");
            let ties: Vec<_> = pool.iter().filter(|(_, s, _)| *s == best).collect();
            **ties.choose(&mut self.rng).expect("nonempty")
        };
        self.best = self.best.min(score.1);
        self.recent.push_back(match *chosen {
            Move::Insert { action, .. } => (action, true),
            Move::Delete { pos } => (plan[pos], false),
        });
        while self.recent.len() > self.tenure {
            self.recent.pop_front();
        }
        *self.visited.entry(key.clone()).or_insert(0) += 1;
        match *chosen {
            Move::Insert { pos, action } => plan.insert(pos, action),
            Move::Delete { pos } => {
                plan.remove(pos);
            }
        }
        Some(score.1)
    }
}

/// Repairs `seed` into a valid plan.
///
/// Each search step takes the earliest flawed step (or the goal) and
/// considers every neighbour that inserts an achiever of one of its missing
/// atoms at or before it, deletes an earlier step that deletes such an atom,
/// or deletes the flawed step. A neighbour is scored by the goal distance of
/// the state its executable prefix reaches plus its unexecuted steps, plus
/// the number of times the search already stood at the same configuration.
/// The best neighbour is taken, or with probability `noise` a uniformly
/// random one; moves undoing one of the last `tabu_tenure` moves are skipped
/// unless they beat the best score seen so far. After `max_steps` the search
/// restarts from the seed with a fresh RNG stream and `restart_extra_steps`
/// more steps; `restarted` is set once a restart makes its first move.
///
/// Goal distances are exact when the reachable state space has at most
/// [`DISTANCE_STATE_LIMIT`] states and additive relaxed costs otherwise.
///
/// Steps of a provided seed that do not name a ground action of the instance
/// are dropped before searching.
pub fn repair(
    domain: &DomainModel,
    instance: &ProblemInstance,
    seed: SeedKind,
    config: &SearchConfig,
) -> Result<RepairTrace, RepairError> {
    let g = Grounding::new(domain, instance)?;
    repair_in(&g, domain, instance, seed, config)
}

/// [`repair`] over a prebuilt grounding of `instance`.
pub fn repair_in(
    g: &Grounding,
    domain: &DomainModel,
    instance: &ProblemInstance,
    seed: SeedKind,
    config: &SearchConfig,
) -> Result<RepairTrace, RepairError> {
    let distances = GoalDistances::compute(g, DISTANCE_STATE_LIMIT);
    repair_with(g, distances.as_ref(), domain, instance, seed, config)
}

/// [`repair_in`] with goal distances computed once by the caller, for
/// running several seeds on the same instance.
pub fn repair_with(
    g: &Grounding,
    distances: Option<&GoalDistances>,
    domain: &DomainModel,
    instance: &ProblemInstance,
    seed: SeedKind,
    config: &SearchConfig,
) -> Result<RepairTrace, RepairError> {
    let initial: Vec<usize> = match &seed {
        SeedKind::Empty => Vec::new(),
        SeedKind::Random { length } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(u64::MAX);
            let plan = random_seed_plan_in(g, *length, &mut rng)?;
            g.plan_indices(&plan).expect("sampled from the grounding")
        }
        SeedKind::Provided { plan } => plan.steps.iter().filter_map(|s| g.action_index(s)).collect(),
    };
    let seed_plan = g.plan_steps(&initial);
    let initial_flaws = count_from(g, g.init().clone(), initial.iter().copied()) as usize;

    let mut trace = RepairTrace {
        outcome: Outcome::Exhausted,
        search_steps: 0,
        restarted: false,
        seed,
        seed_plan,
        initial_flaws,
        flaw_history_len: 0,
    };
    let is_valid = |steps: &[usize]| validate(domain, instance, &g.plan_steps(steps), RelaxationMode::None).is_valid();
    if initial_flaws == 0 && is_valid(&initial) {
        trace.outcome = Outcome::Solved {
            plan: trace.seed_plan.clone(),
        };
        return Ok(trace);
    }

    let budgets = core::iter::once(config.max_steps).chain(core::iter::repeat_n(config.restart_extra_steps, config.restarts_allowed));
    for (attempt, budget) in budgets.enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(attempt as u64);
        let mut search = Search {
            g,
            distances,
            rng,
            noise: config.noise,
            picked: 0,
            costs: HashMap::new(),
            visited: HashMap::new(),
            recent: VecDeque::new(),
            tenure: config.tabu_tenure,
            best: u32::MAX,
        };
        let mut plan = initial.clone();
        for _ in 0..budget {
            let Some(score) = search.step(&mut plan) else {
                break;
            };
            trace.search_steps += 1;
            trace.restarted |= attempt > 0;
            if score == 0 && is_valid(&plan) {
                trace.flaw_history_len += search.picked;
                trace.outcome = Outcome::Solved {
                    plan: g.plan_steps(&plan),
                };
                return Ok(trace);
            }
        }
        trace.flaw_history_len += search.picked;
    }
    Ok(trace)
}
