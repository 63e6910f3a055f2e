use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{normalize_line, DomainTemplates, PromptBundle, Surface, PLAN_START_TAG};
use crate::pddl::{DomainModel, Plan, PlanStep};

/// Why no plan could be read from a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{reason}")]
pub struct ExtractionFailure {
    /// The offending line, if a single line is to blame.
    pub line: Option<String>,
    pub reason: String,
}

impl ExtractionFailure {
    fn new(reason: impl Into<String>, line: Option<&str>) -> Self {
        Self {
            line: line.map(ToString::to_string),
            reason: reason.into(),
        }
    }
}

const ANNOTATION_LABELS: &[&str] = &[
    "prior state:",
    "justification:",
    "resulting state:",
    "explanation:",
    "current state:",
    "reasoning:",
];

fn is_step_label(line: &str) -> bool {
    let Some(rest) = line.strip_prefix("step") else {
        return false;
    };
    let rest = rest.trim_start();
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && rest[digits..].trim_start().starts_with(':') && rest[digits..].trim_start()[1..].trim().is_empty()
}

/// The part of a line that should name an action, or `None` for lines that
/// carry chain-of-thought annotations.
fn action_text(line: &str) -> Option<String> {
    let normalized = normalize_line(line);
    if normalized.is_empty() || is_step_label(&normalized) || ANNOTATION_LABELS.iter().any(|l| normalized.starts_with(l)) {
        return None;
    }
    let normalized = match normalized.strip_prefix("action:") {
        Some(rest) => rest.trim().to_string(),
        None => match normalized.strip_prefix("step") {
            // `Step 3: pick up the red block`
            Some(rest) => {
                let rest = rest.trim_start();
                let digits = rest.chars().take_while(char::is_ascii_digit).count();
                match rest[digits..].trim_start().strip_prefix(':') {
                    Some(after) if digits > 0 => after.trim().to_string(),
                    _ => normalized.clone(),
                }
            }
            None => normalized.clone(),
        },
    };
    Some(normalized)
}

fn parse_pddl_line(text: &str) -> Option<PlanStep> {
    let inner = text.trim().strip_prefix('(')?.strip_suffix(')')?;
    if inner.contains(['(', ')']) {
        return None;
    }
    let mut words = inner.split_whitespace();
    let name = words.next()?;
    Some(PlanStep::new(name, words))
}

/// Reads the plan out of a generator response.
///
/// Reading starts after the last `[PLAN]` line (or at the top when there is
/// none) and stops at the first plan-end tag. Blank lines, `;` comments on
/// the PDDL surface and chain-of-thought labels are skipped; every other line must name an action
/// of `domain`, or extraction fails with that line. An empty response is a
/// failure, while a response holding only the end tag is the empty plan.
pub fn extract_plan(
    response: &str,
    bundle: &PromptBundle,
    domain: &DomainModel,
    templates: Option<&DomainTemplates>,
) -> Result<Plan, ExtractionFailure> {
    if response.trim().is_empty() {
        return Err(ExtractionFailure::new("empty response", None));
    }
    let lines: Vec<&str> = response.lines().collect();
    let start = lines
        .iter()
        .rposition(|l| l.trim().eq_ignore_ascii_case(PLAN_START_TAG))
        .map_or(0, |i| i + 1);
    let tag = bundle.plan_end_tag.to_lowercase();

    let mut steps = Vec::new();
    for raw in &lines[start..] {
        let lower = raw.to_lowercase();
        let (content, done) = match lower.find(&tag) {
            Some(at) => (&raw[..at], true),
            None => (*raw, false),
        };
        let content = match bundle.style.surface() {
            // plan files allow `;` comments
            Surface::Pddl => content.split(';').next().unwrap_or_default(),
            Surface::Natural => content,
        };
        if let Some(text) = action_text(content) {
            let step = match bundle.style.surface() {
                Surface::Pddl => parse_pddl_line(&text),
                Surface::Natural => {
                    let templates =
                        templates.ok_or_else(|| ExtractionFailure::new("natural-language extraction needs templates", None))?;
                    templates
                        .match_line(&text)
                        .map_err(|e| ExtractionFailure::new(e.to_string(), Some(raw)))?
                }
            };
            let step = step.ok_or_else(|| ExtractionFailure::new(format!("unrecognised line `{}`", raw.trim()), Some(raw)))?;
            if domain.action(&step.name).is_none() {
                return Err(ExtractionFailure::new(format!("unknown action `{}`", step.name), Some(raw)));
            }
            steps.push(step);
        }
        if done {
            break;
        }
    }
    Ok(Plan::new(steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;
    use crate::translate::PromptStyle;
    use alloc::vec;

    fn bundle(style: PromptStyle) -> PromptBundle {
        PromptBundle {
            style,
            preamble: String::new(),
            domain_description: String::new(),
            example: None,
            query: String::new(),
            plan_end_tag: "[PLAN END]".into(),
        }
    }

    #[test]
    fn pddl_lines_until_end_tag() {
        let d = domains::blocksworld();
        let b = bundle(PromptStyle::PDDL_ONE_SHOT);
        let plan = extract_plan("(pickup a)\n(stack a b)\n[PLAN END]\n(putdown c)", &b, &d, None).unwrap();
        assert_eq!(plan.steps, vec![PlanStep::new("pickup", ["a"]), PlanStep::new("stack", ["a", "b"])]);
        let inline = extract_plan("(PICKUP a)[PLAN END]", &b, &d, None).unwrap();
        assert_eq!(inline.steps, vec![PlanStep::new("pickup", ["a"])]);
    }

    #[test]
    fn reads_after_last_plan_marker() {
        let d = domains::blocksworld();
        let b = bundle(PromptStyle::PDDL_ONE_SHOT);
        let response = "[PLAN]\n(pickup z)\n[PLAN END]\n[PLAN]\n1. (pickup a)\n[PLAN END]";
        assert_eq!(extract_plan(response, &b, &d, None).unwrap().steps, vec![PlanStep::new("pickup", ["a"])]);
    }

    #[test]
    fn empty_and_garbage() {
        let d = domains::blocksworld();
        let b = bundle(PromptStyle::PDDL_ONE_SHOT);
        assert!(extract_plan("  \n", &b, &d, None).is_err());
        assert!(extract_plan("[PLAN END]", &b, &d, None).unwrap().is_empty());
        let err = extract_plan("(pickup a)\nI think that is it\n[PLAN END]", &b, &d, None).unwrap_err();
        assert_eq!(err.line.as_deref(), Some("I think that is it"));
        assert!(extract_plan("(fly a b)\n[PLAN END]", &b, &d, None).is_err());
    }

    #[test]
    fn natural_cot_response() {
        let d = domains::blocksworld();
        let t = DomainTemplates::blocksworld();
        let b = bundle(PromptStyle::NATURAL_COT);
        let response = "Step 1:\nPrior state: the hand is empty\nAction: pick up the red block\nJustification: fine\n\
                        Resulting state: I am holding the red block\nStep 2: stack the red block on top of the blue block\n\
                        Explanation: done\n[PLAN END]";
        let plan = extract_plan(response, &b, &d, Some(&t)).unwrap();
        assert_eq!(
            plan.steps,
            vec![PlanStep::new("pickup", ["red"]), PlanStep::new("stack", ["red", "blue"])]
        );
    }
}
