use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{join_sentences, plan_to_nl, DomainTemplates, TranslateError, PLAN_END_TAG, PLAN_START_TAG};
use crate::pddl::{domain_to_pddl, problem_to_pddl, step, DomainModel, ObjectTable, Plan, ProblemInstance, RelaxationMode, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surface {
    Natural,
    Pddl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shots {
    Zero,
    One,
}

/// One of the five prompt configurations. Chain-of-thought is only offered
/// on the natural-language surface and always with one worked example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptStyle {
    surface: Surface,
    shots: Shots,
    cot: bool,
}

impl PromptStyle {
    pub const NATURAL_ONE_SHOT: Self = Self::unchecked(Surface::Natural, Shots::One, false);
    pub const NATURAL_ZERO_SHOT: Self = Self::unchecked(Surface::Natural, Shots::Zero, false);
    pub const NATURAL_COT: Self = Self::unchecked(Surface::Natural, Shots::One, true);
    pub const PDDL_ONE_SHOT: Self = Self::unchecked(Surface::Pddl, Shots::One, false);
    pub const PDDL_ZERO_SHOT: Self = Self::unchecked(Surface::Pddl, Shots::Zero, false);
    pub const ALL: [Self; 5] = [
        Self::NATURAL_ONE_SHOT,
        Self::NATURAL_ZERO_SHOT,
        Self::NATURAL_COT,
        Self::PDDL_ONE_SHOT,
        Self::PDDL_ZERO_SHOT,
    ];

    const fn unchecked(surface: Surface, shots: Shots, cot: bool) -> Self {
        Self { surface, shots, cot }
    }

    pub fn new(surface: Surface, shots: Shots, cot: bool) -> Result<Self, TranslateError> {
        let style = Self::unchecked(surface, shots, cot);
        if Self::ALL.contains(&style) {
            Ok(style)
        } else {
            Err(TranslateError::Style(format!(
                "chain-of-thought needs the natural surface and an example, got {}",
                style.label()
            )))
        }
    }

    pub fn surface(self) -> Surface {
        self.surface
    }

    pub fn shots(self) -> Shots {
        self.shots
    }

    pub fn cot(self) -> bool {
        self.cot
    }

    pub fn label(self) -> &'static str {
        match (self.surface, self.shots, self.cot) {
            (Surface::Natural, _, true) => "natural-cot",
            (Surface::Natural, Shots::One, false) => "natural-one-shot",
            (Surface::Natural, Shots::Zero, false) => "natural-zero-shot",
            (Surface::Pddl, Shots::One, _) => "pddl-one-shot",
            (Surface::Pddl, Shots::Zero, _) => "pddl-zero-shot",
        }
    }
}

impl core::fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

impl core::str::FromStr for PromptStyle {
    type Err = TranslateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|style| style.label() == s)
            .ok_or_else(|| TranslateError::Style(format!("unknown prompt style `{s}`")))
    }
}

impl TryFrom<String> for PromptStyle {
    type Error = TranslateError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PromptStyle> for String {
    fn from(style: PromptStyle) -> Self {
        style.label().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub problem: String,
    pub plan: String,
}

/// A rendered prompt in parts, plus the tag that closes the expected plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub style: PromptStyle,
    pub preamble: String,
    pub domain_description: String,
    pub example: Option<PromptExample>,
    pub query: String,
    pub plan_end_tag: String,
}

impl PromptBundle {
    /// Full prompt text. It ends with an open `[PLAN]` block for the query.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.preamble.is_empty() {
            out.push_str(self.preamble.trim_end());
            out.push_str("\n\n");
        }
        match self.style.surface {
            Surface::Natural => {
                out.push_str(self.domain_description.trim_end());
                out.push_str("\n\n");
                if let Some(ex) = &self.example {
                    let _ = write!(
                        out,
                        "[STATEMENT]\n{}\n\nMy plan is as follows:\n\n{PLAN_START_TAG}\n{}{}\n\n",
                        ex.problem.trim_end(),
                        ex.plan,
                        self.plan_end_tag
                    );
                }
                let _ = write!(
                    out,
                    "[STATEMENT]\n{}\n\nMy plan is as follows:\n\n{PLAN_START_TAG}\n",
                    self.query.trim_end()
                );
            }
            Surface::Pddl => {
                let _ = write!(out, "[DOMAIN]\n{}\n", self.domain_description.trim_end());
                if let Some(ex) = &self.example {
                    let _ = write!(
                        out,
                        "[STATEMENT]\n{}\n{PLAN_START_TAG}\n{}{}\n\n",
                        ex.problem.trim_end(),
                        ex.plan,
                        self.plan_end_tag
                    );
                }
                let _ = write!(out, "[STATEMENT]\n{}\n{PLAN_START_TAG}\n", self.query.trim_end());
            }
        }
        out
    }
}

/// Natural-language statement of an instance: initial conditions, then goal.
pub(crate) fn describe_problem(instance: &ProblemInstance, templates: &DomainTemplates) -> Result<String, TranslateError> {
    let mut init = templates.render_types(instance);
    init.extend(templates.render_facts(instance.init.atoms())?);
    let goal = templates.render_facts(&instance.goal)?;
    Ok(format!(
        "As initial conditions I have that, {}.\nMy goal is to have that {}.",
        join_sentences(&init),
        join_sentences(&goal)
    ))
}

const PDDL_PREAMBLE: &str = "Below is a PDDL domain and a problem. Write a plan that solves the problem: one action per line in PDDL syntax, e.g. (action arg1 arg2), and close the plan with [PLAN END].";
const NATURAL_ZERO_SHOT_PREAMBLE: &str = "Write a plan for the problem below: one action per line, phrased like the actions listed, and close the plan with [PLAN END].";
const COT_PREAMBLE: &str = "For every action in your plan, first state the current state, then the action, why the action can be taken, and the resulting state, as in the example. Close the plan with [PLAN END].";

/// Assembles the prompt for `query`. One-shot styles need `example`, an
/// instance of the same domain with a plan that solves it.
pub fn build_prompt(
    domain: &DomainModel,
    query: &ProblemInstance,
    example: Option<(&ProblemInstance, &Plan)>,
    style: PromptStyle,
    templates: Option<&DomainTemplates>,
) -> Result<PromptBundle, TranslateError> {
    let example = match style.shots {
        Shots::Zero => None,
        Shots::One => Some(example.ok_or_else(|| TranslateError::Style(format!("{style} needs an example")))?),
    };
    if let Some((ex, _)) = example {
        if ex.domain != domain.name {
            return Err(TranslateError::ExampleDomain {
                expected: domain.name.clone(),
                found: ex.domain.clone(),
            });
        }
    }
    let bundle = match style.surface {
        Surface::Pddl => PromptBundle {
            style,
            preamble: PDDL_PREAMBLE.into(),
            domain_description: domain_to_pddl(domain),
            example: example.map(|(p, plan)| PromptExample {
                problem: problem_to_pddl(p),
                plan: plan.steps.iter().map(|s| format!("{s}\n")).collect(),
            }),
            query: problem_to_pddl(query),
            plan_end_tag: PLAN_END_TAG.into(),
        },
        Surface::Natural => {
            let templates =
                templates.ok_or_else(|| TranslateError::Style("natural-language prompts need templates".into()))?;
            templates.check(domain)?;
            let example = match example {
                None => None,
                Some((p, plan)) => {
                    let plan_text = if style.cot {
                        annotate_cot(domain, p, plan, templates)?.to_text()
                    } else {
                        plan_to_nl(plan, templates)?
                    };
                    Some(PromptExample {
                        problem: describe_problem(p, templates)?,
                        plan: plan_text,
                    })
                }
            };
            let preamble = if style.cot {
                COT_PREAMBLE
            } else if style.shots == Shots::Zero {
                NATURAL_ZERO_SHOT_PREAMBLE
            } else {
                ""
            };
            PromptBundle {
                style,
                preamble: preamble.into(),
                domain_description: templates.preamble.clone(),
                example,
                query: describe_problem(query, templates)?,
                plan_end_tag: PLAN_END_TAG.into(),
            }
        }
    };
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotStep {
    pub prior_state: Vec<String>,
    pub action: String,
    pub justification: Vec<String>,
    pub resulting_state: Vec<String>,
}

/// A plan annotated step by step with the states it passes through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotAnnotation {
    pub steps: Vec<CotStep>,
    pub explanation: String,
}

impl CotAnnotation {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "Step {}:", i + 1);
            let _ = writeln!(out, "Prior state: {}", join_sentences(&s.prior_state));
            let _ = writeln!(out, "Action: {}", s.action);
            let _ = writeln!(
                out,
                "Justification: the action is applicable because {}",
                join_sentences(&s.justification)
            );
            let _ = writeln!(out, "Resulting state: {}", join_sentences(&s.resulting_state));
        }
        let _ = writeln!(out, "Explanation: {}", self.explanation);
        out
    }
}

fn sentences(state: &State, templates: &DomainTemplates) -> Result<Vec<String>, TranslateError> {
    templates.render_facts(state.atoms())
}

/// Annotates a valid plan with prior state, action, justification and
/// resulting state per step. Each step's prior state is the previous step's
/// resulting state.
pub fn annotate_cot(
    domain: &DomainModel,
    instance: &ProblemInstance,
    plan: &Plan,
    templates: &DomainTemplates,
) -> Result<CotAnnotation, TranslateError> {
    let table = ObjectTable::new(domain, instance);
    let mut state = instance.init.clone();
    let mut steps = Vec::with_capacity(plan.len());
    for (i, call) in plan.steps.iter().enumerate() {
        let action = table
            .resolve(call)
            .map_err(|e| TranslateError::InvalidExample(format!("step {}: {e}", i + 1)))?;
        let next = step(&state, &action, RelaxationMode::None)
            .map_err(|_| TranslateError::InvalidExample(format!("step {} ({call}) is not applicable", i + 1)))?;
        steps.push(CotStep {
            prior_state: sentences(&state, templates)?,
            action: templates.render_step(call)?,
            justification: templates.render_facts(&action.pre)?,
            resulting_state: sentences(&next, templates)?,
        });
        state = next;
    }
    if !state.satisfies(&instance.goal) {
        return Err(TranslateError::InvalidExample("the plan does not reach the goal".into()));
    }
    let goal = templates.render_facts(&instance.goal)?;
    Ok(CotAnnotation {
        steps,
        explanation: format!(
            "every action was applicable in the state before it, and the final state satisfies the goal: {}.",
            join_sentences(&goal)
        ),
    })
}
