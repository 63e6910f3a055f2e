//! The three evaluation protocols, each producing one [`RunRecord`] per
//! instance: a single autonomous attempt, a verifier backprompt loop, and
//! repair runs seeded with the generator's plan against empty and random
//! seeds.

use std::collections::BTreeMap;
use std::time::Instant;

use planeval_core::metrics::levenshtein;
use planeval_core::repair::{repair_with, GoalDistances, RepairTrace, SearchConfig, SeedKind, DISTANCE_STATE_LIMIT};
use planeval_core::translate::{build_prompt, extract_plan, DomainTemplates, ExtractionFailure, PromptBundle, PromptStyle, Surface};
use planeval_core::validate::{diagnose, relaxed_sweep, validate, ValidationReport};
use planeval_core::{DomainModel, Grounding, Plan, ProblemInstance, RelaxationMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{GatewayError, Generator, GeneratorRequest, Message, Usage};

pub const DEFAULT_MAX_ROUNDS: usize = 15;

/// Appended to every backprompt after the verifier's feedback.
pub const BACKPROMPT_SUFFIX: &str =
    "Please provide a complete corrected plan for the same problem, one action per line, ending with [PLAN END].";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Autonomous,
    Backprompt,
    SeededRepair,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Autonomous => "autonomous",
            Protocol::Backprompt => "backprompt",
            Protocol::SeededRepair => "seeded-repair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalVerdict {
    Valid,
    Incorrect,
    Error,
}

/// One generator call and what became of its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub response: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_failure: Option<ExtractionFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
    /// Feedback sent back after this round, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairSummary {
    pub seed: String,
    pub seed_length: usize,
    pub solved: bool,
    pub steps: usize,
    pub restarted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
}

impl RepairSummary {
    fn of(trace: &RepairTrace) -> Self {
        Self {
            seed: trace.seed.label().into(),
            seed_length: trace.seed_plan.len(),
            solved: trace.solved(),
            steps: trace.search_steps,
            restarted: trace.restarted,
            plan: trace.plan().cloned(),
        }
    }

    pub fn plan_length(&self) -> Option<usize> {
        self.plan.as_ref().map(Plan::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRuns {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Plan>,
    /// The candidate could not be extracted; the provided run used the
    /// empty seed instead.
    pub fell_back_to_empty: bool,
    pub empty: RepairSummary,
    pub random: RepairSummary,
    /// Absent when the generator failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provided: Option<RepairSummary>,
    /// Between the candidate and the plan repaired from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub domain: String,
    pub protocol: Protocol,
    pub style: String,
    pub generator: String,
    /// The full conversation, prompts and raw responses alike.
    pub messages: Vec<Message>,
    pub rounds: Vec<Round>,
    pub rounds_used: usize,
    pub verdict: FinalVerdict,
    /// Verdict label per relaxation for the autonomous plan.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub relaxed: BTreeMap<RelaxationMode, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_length: Option<usize>,
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeded: Option<SeededRuns>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<GatewayError>,
    /// Only filled in when timing is requested, so that records stay
    /// reproducible by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl RunRecord {
    pub fn is_correct(&self) -> bool {
        self.verdict == FinalVerdict::Valid
    }

    /// The plan extracted in the last round.
    pub fn final_plan(&self) -> Option<&Plan> {
        self.rounds.last().and_then(|r| r.plan.as_ref())
    }
}

/// One instance to run, with the one-shot example when the style needs it.
#[derive(Clone, Copy)]
pub struct Task<'a> {
    pub domain: &'a DomainModel,
    pub instance: &'a ProblemInstance,
    pub example: Option<(&'a ProblemInstance, &'a Plan)>,
    pub style: PromptStyle,
    pub templates: Option<&'a DomainTemplates>,
    pub optimal_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOptions {
    pub max_rounds: usize,
    pub repair: SearchConfig,
    pub timing: bool,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self { max_rounds: DEFAULT_MAX_ROUNDS, repair: SearchConfig::default(), timing: false }
    }
}

/// Per-instance search seed: the configured seed mixed with the instance id,
/// so runs do not depend on batch order.
pub fn derive_seed(base: u64, instance_id: &str) -> u64 {
    let digest = Sha256::new().chain_update(base.to_le_bytes()).chain_update(instance_id.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

struct Session<'a> {
    task: Task<'a>,
    bundle: PromptBundle,
    generator: &'a dyn Generator,
    record: RunRecord,
    started: Instant,
    timing: bool,
}

impl<'a> Session<'a> {
    fn start(task: Task<'a>, protocol: Protocol, generator: &'a dyn Generator, timing: bool) -> Result<Self, RunError> {
        let bundle = build_prompt(task.domain, task.instance, task.example, task.style, task.templates)?;
        let record = RunRecord {
            instance_id: task.instance.id.clone(),
            domain: task.domain.name.clone(),
            protocol,
            style: task.style.label().into(),
            generator: generator.id(),
            messages: vec![Message::user(bundle.to_text())],
            rounds: Vec::new(),
            rounds_used: 0,
            verdict: FinalVerdict::Incorrect,
            relaxed: BTreeMap::new(),
            optimal_length: task.optimal_length,
            usage: Usage::default(),
            seeded: None,
            error: None,
            wall_time_ms: None,
        };
        Ok(Self { task, bundle, generator, record, started: Instant::now(), timing })
    }

    fn templates(&self) -> Option<&'a DomainTemplates> {
        match self.task.style.surface() {
            Surface::Natural => self.task.templates,
            Surface::Pddl => None,
        }
    }

    /// Asks once with the conversation so far. `false` when the generator
    /// failed, in which case the record is closed as an error.
    fn ask(&mut self) -> bool {
        let request = GeneratorRequest::new(self.generator.id(), self.record.messages.clone());
        self.record.rounds_used += 1;
        let response = match self.generator.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                self.record.error = Some(e);
                self.record.verdict = FinalVerdict::Error;
                return false;
            }
        };
        self.record.usage.add(&response.usage);
        self.record.messages.push(Message::assistant(response.text.clone()));
        let (plan, failure) = match extract_plan(&response.text, &self.bundle, self.task.domain, self.task.templates) {
            Ok(p) => (Some(p), None),
            Err(f) => (None, Some(f)),
        };
        let report = plan.as_ref().map(|p| validate(self.task.domain, self.task.instance, p, RelaxationMode::None));
        self.record.verdict = match &report {
            Some(r) if r.is_valid() => FinalVerdict::Valid,
            _ => FinalVerdict::Incorrect,
        };
        self.record.rounds.push(Round {
            response: response.text,
            usage: response.usage,
            latency_ms: response.latency_ms,
            cache_hit: response.cache_hit,
            plan,
            extraction_failure: failure,
            report,
            feedback: None,
        });
        true
    }

    fn feedback(&self) -> String {
        let round = self.record.rounds.last().expect("asked at least once");
        match (&round.report, &round.extraction_failure) {
            (Some(report), _) => diagnose(report, self.templates()).unwrap_or_default(),
            (None, Some(f)) => format!("The above plan could not be read: {}.", f.reason),
            (None, None) => String::new(),
        }
    }

    fn finish(mut self) -> RunRecord {
        if self.timing {
            self.record.wall_time_ms = Some(self.started.elapsed().as_millis() as u64);
        }
        self.record
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Prompt(#[from] planeval_core::translate::TranslateError),
    #[error(transparent)]
    Repair(#[from] planeval_core::repair::RepairError),
    #[error(transparent)]
    Pddl(#[from] planeval_core::PddlError),
}

/// Prompt once, extract, validate, and sweep the relaxations.
pub fn run_autonomous(task: Task<'_>, generator: &dyn Generator, options: &LoopOptions) -> Result<RunRecord, RunError> {
    let mut s = Session::start(task, Protocol::Autonomous, generator, options.timing)?;
    if s.ask() {
        if let Some(plan) = s.record.rounds[0].plan.clone() {
            s.record.relaxed = relaxed_sweep(task.domain, task.instance, &plan)
                .into_iter()
                .map(|(m, r)| (m, r.verdict.label().to_string()))
                .collect();
        }
    }
    Ok(s.finish())
}

/// Feeds the validator's diagnosis back until a plan validates or
/// `max_rounds` answers have been given.
pub fn run_backprompt(task: Task<'_>, generator: &dyn Generator, options: &LoopOptions) -> Result<RunRecord, RunError> {
    assert!(options.max_rounds >= 1, "at least one round");
    let mut s = Session::start(task, Protocol::Backprompt, generator, options.timing)?;
    while s.ask() && s.record.verdict != FinalVerdict::Valid && s.record.rounds_used < options.max_rounds {
        let feedback = s.feedback();
        s.record.rounds.last_mut().unwrap().feedback = Some(feedback.clone());
        s.record.messages.push(Message::user(format!("{feedback}\n{BACKPROMPT_SUFFIX}")));
    }
    Ok(s.finish())
}

/// Repairs from the generator's plan, from the empty plan and from a random
/// plan of the same length, with identical search settings.
pub fn run_seeded_repair(task: Task<'_>, generator: &dyn Generator, options: &LoopOptions) -> Result<RunRecord, RunError> {
    let mut s = Session::start(task, Protocol::SeededRepair, generator, options.timing)?;
    let answered = s.ask();
    let candidate = s.record.rounds.first().and_then(|r| r.plan.clone());
    let config = SearchConfig { rng_seed: derive_seed(options.repair.rng_seed, &task.instance.id), ..options.repair.clone() };
    let g = Grounding::new(task.domain, task.instance)?;
    let distances = GoalDistances::compute(&g, DISTANCE_STATE_LIMIT);
    let run = |seed| repair_with(&g, distances.as_ref(), task.domain, task.instance, seed, &config);

    let empty = run(SeedKind::Empty)?;
    let random = run(SeedKind::Random { length: candidate.as_ref().map_or(0, Plan::len) })?;
    let provided = match (&candidate, answered) {
        (Some(plan), _) => Some(run(SeedKind::Provided { plan: plan.clone() })?),
        (None, true) => Some(empty.clone()),
        (None, false) => None,
    };
    let edit_distance = match (&candidate, provided.as_ref().and_then(RepairTrace::plan)) {
        (Some(c), Some(solved)) => Some(levenshtein(c, solved)),
        _ => None,
    };
    if answered {
        s.record.verdict = match provided.as_ref().is_some_and(RepairTrace::solved) {
            true => FinalVerdict::Valid,
            false => FinalVerdict::Incorrect,
        };
    }
    s.record.seeded = Some(SeededRuns {
        fell_back_to_empty: answered && candidate.is_none(),
        candidate,
        empty: RepairSummary::of(&empty),
        random: RepairSummary::of(&random),
        provided: provided.as_ref().map(RepairSummary::of),
        edit_distance,
    });
    Ok(s.finish())
}

pub fn run(protocol: Protocol, task: Task<'_>, generator: &dyn Generator, options: &LoopOptions) -> Result<RunRecord, RunError> {
    match protocol {
        Protocol::Autonomous => run_autonomous(task, generator, options),
        Protocol::Backprompt => run_backprompt(task, generator, options),
        Protocol::SeededRepair => run_seeded_repair(task, generator, options),
    }
}
