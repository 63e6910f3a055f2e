//! VAL-style plan validation under the relaxation lattice, with diagnoses
//! suitable for feeding back to a plan generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::pddl::{step, DomainModel, GroundAtom, ObjectTable, PddlError, Plan, PlanStep, ProblemInstance, State};
use crate::translate::DomainTemplates;

pub use crate::pddl::RelaxationMode;

/// Why a step could not be executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepFailure {
    /// Preconditions absent from the state (never empty).
    MissingPreconditions { missing: BTreeSet<GroundAtom> },
    UnknownAction,
    WrongArity { expected: usize, found: usize },
    UnknownObject { object: String },
    TypeMismatch { object: String, expected: String },
}

impl StepFailure {
    pub fn is_malformed(&self) -> bool {
        !matches!(self, StepFailure::MissingPreconditions { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Valid,
    Inexecutable {
        /// 1-based index of the first failing step.
        step: usize,
        action: PlanStep,
        failure: StepFailure,
    },
    NonGoalReaching { unmet: BTreeSet<GroundAtom> },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Valid => "valid",
            Verdict::Inexecutable { .. } => "inexecutable",
            Verdict::NonGoalReaching { .. } => "non-goal-reaching",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub mode: RelaxationMode,
    /// States from the initial state through the last executed step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<State>>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.verdict.is_valid()
    }

    /// Atoms named by the failure: missing preconditions or unmet goals.
    pub fn failing_atoms(&self) -> Vec<&GroundAtom> {
        match &self.verdict {
            Verdict::Inexecutable {
                failure: StepFailure::MissingPreconditions { missing },
                ..
            } => missing.iter().collect(),
            Verdict::NonGoalReaching { unmet } => unmet.iter().collect(),
            _ => Vec::new(),
        }
    }
}

fn failure_of(err: PddlError) -> StepFailure {
    match err {
        PddlError::ArityMismatch { expected, found, .. } => StepFailure::WrongArity { expected, found },
        PddlError::UnknownObject(object) => StepFailure::UnknownObject { object },
        PddlError::TypeMismatch { object, expected } => StepFailure::TypeMismatch { object, expected },
        _ => StepFailure::UnknownAction,
    }
}

fn run(
    domain: &DomainModel,
    instance: &ProblemInstance,
    plan: &Plan,
    mode: RelaxationMode,
    keep_trace: bool,
) -> ValidationReport {
    let table = ObjectTable::new(domain, instance);
    let mut state = instance.init.clone();
    let mut trace = keep_trace.then(|| alloc::vec![state.clone()]);
    for (i, call) in plan.steps.iter().enumerate() {
        let inexecutable = |failure| ValidationReport {
            verdict: Verdict::Inexecutable {
                step: i + 1,
                action: call.clone(),
                failure,
            },
            mode,
            trace: trace.clone(),
        };
        // malformed steps fail in every mode, relaxed or not
        let action = match table.resolve(call) {
            Ok(action) => action,
            Err(err) => return inexecutable(failure_of(err)),
        };
        state = match step(&state, &action, mode) {
            Ok(next) => next,
            Err(inapplicable) => {
                return inexecutable(StepFailure::MissingPreconditions {
                    missing: inapplicable.missing,
                })
            }
        };
        if let Some(t) = trace.as_mut() {
            t.push(state.clone());
        }
    }
    let unmet: BTreeSet<GroundAtom> = instance.goal.iter().filter(|g| !state.contains(g)).cloned().collect();
    let verdict = if unmet.is_empty() {
        Verdict::Valid
    } else {
        Verdict::NonGoalReaching { unmet }
    };
    ValidationReport { verdict, mode, trace }
}

/// Executes `plan` from the initial state and checks the goal.
///
/// Stops at the first inexecutable step. Steps naming unknown actions or
/// objects, or with the wrong number of arguments, are inexecutable in every
/// mode.
pub fn validate(domain: &DomainModel, instance: &ProblemInstance, plan: &Plan, mode: RelaxationMode) -> ValidationReport {
    run(domain, instance, plan, mode, false)
}

/// Like [`validate`], keeping the visited states.
pub fn validate_with_trace(
    domain: &DomainModel,
    instance: &ProblemInstance,
    plan: &Plan,
    mode: RelaxationMode,
) -> ValidationReport {
    run(domain, instance, plan, mode, true)
}

/// Validates under all four modes.
///
/// # Panics
///
/// If the results violate relaxation monotonicity, which would mean the
/// execution semantics are broken.
pub fn relaxed_sweep(
    domain: &DomainModel,
    instance: &ProblemInstance,
    plan: &Plan,
) -> BTreeMap<RelaxationMode, ValidationReport> {
    let reports: BTreeMap<_, _> = RelaxationMode::ALL
        .iter()
        .map(|&mode| (mode, validate(domain, instance, plan, mode)))
        .collect();
    for (lower, low) in &reports {
        for (upper, high) in &reports {
            if lower.is_below(*upper) && low.is_valid() {
                assert!(high.is_valid(), "relaxation monotonicity violated: valid under {lower} but not {upper}");
            }
        }
    }
    reports
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagnoseError {
    #[error("cannot diagnose a valid plan")]
    ValidReport,
}

fn render_atom(atom: &GroundAtom, templates: Option<&DomainTemplates>) -> String {
    templates
        .and_then(|t| t.render_atom(atom).ok())
        .unwrap_or_else(|| atom.to_string())
}

fn render_step(call: &PlanStep, templates: Option<&DomainTemplates>) -> String {
    templates
        .and_then(|t| t.render_step(call).ok())
        .unwrap_or_else(|| call.to_string())
}

/// Feedback text naming the failing step and its missing preconditions, or
/// the unmet goals. Atoms and actions are rendered through `templates` when
/// given, otherwise in PDDL syntax.
pub fn diagnose(report: &ValidationReport, templates: Option<&DomainTemplates>) -> Result<String, DiagnoseError> {
    let mut out = String::from("The above plan is invalid.");
    match &report.verdict {
        Verdict::Valid => return Err(DiagnoseError::ValidReport),
        Verdict::Inexecutable { step, action, failure } => {
            let action = render_step(action, templates);
            match failure {
                StepFailure::MissingPreconditions { missing } => {
                    let _ = write!(
                        out,
                        " The action at step {step}, {action}, is not executable because these preconditions do not hold:"
                    );
                    for atom in missing {
                        let _ = write!(out, "\n{}", render_atom(atom, templates));
                    }
                }
                StepFailure::UnknownAction => {
                    let _ = write!(out, " The action at step {step}, {action}, is not an action of this domain.");
                }
                StepFailure::WrongArity { expected, found } => {
                    let _ = write!(
                        out,
                        " The action at step {step}, {action}, does not contain the required number of parameters: expected {expected}, got {found}."
                    );
                }
                StepFailure::UnknownObject { object } => {
                    let _ = write!(out, " The action at step {step}, {action}, refers to an unknown object {object}.");
                }
                StepFailure::TypeMismatch { object, expected } => {
                    let _ = write!(
                        out,
                        " The action at step {step}, {action}, uses {object} where an object of type {expected} is required."
                    );
                }
            }
        }
        Verdict::NonGoalReaching { unmet } => {
            out.push_str(" It can be executed but does not achieve these goal conditions:");
            for atom in unmet {
                let _ = write!(out, "\n{}", render_atom(atom, templates));
            }
        }
    }
    Ok(out)
}

/// One-line summary used in CLI output and logs.
pub fn summary(report: &ValidationReport) -> String {
    match &report.verdict {
        Verdict::Valid => format!("valid under {}", report.mode),
        Verdict::Inexecutable { step, action, .. } => {
            format!("inexecutable at step {step} {action} under {}", report.mode)
        }
        Verdict::NonGoalReaching { unmet } => {
            format!("non-goal-reaching ({} unmet) under {}", unmet.len(), report.mode)
        }
    }
}
