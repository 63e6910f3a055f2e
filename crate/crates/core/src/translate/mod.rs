//! Template-based translation between PDDL and natural language, prompt
//! assembly for the five prompt configurations, and plan extraction from
//! generator responses.

mod extract;
mod prompt;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::pddl::{DomainModel, GroundAtom, LiftedAtom, Plan, PlanStep, ProblemInstance};

pub use extract::{extract_plan, ExtractionFailure};
pub use prompt::{annotate_cot, build_prompt, CotAnnotation, CotStep, PromptBundle, PromptExample, PromptStyle, Shots, Surface};

/// Sentinel line closing every plan in prompts and responses.
pub const PLAN_END_TAG: &str = "[PLAN END]";
/// Line opening a plan; extraction starts after the last one.
pub const PLAN_START_TAG: &str = "[PLAN]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranslateError {
    #[error("no {kind} template for `{name}`")]
    MissingTemplate { kind: &'static str, name: String },
    #[error("template for `{name}` has slot {{{slot}}} but arity is {arity}")]
    BadSlot { name: String, slot: usize, arity: usize },
    #[error("templates for domain `{templates}` used with domain `{domain}`")]
    WrongDomain { templates: String, domain: String },
    #[error("back-translation patterns of `{first}` and `{second}` are identical")]
    AmbiguousPatterns { first: String, second: String },
    #[error("line `{line}` matches both `{first}` and `{second}`")]
    AmbiguousLine { line: String, first: String, second: String },
    #[error("cannot translate line `{0}`")]
    Unmatched(String),
    #[error("example problem is for domain `{found}`, expected `{expected}`")]
    ExampleDomain { expected: String, found: String },
    #[error("{0}")]
    Style(String),
    #[error("example plan is not valid: {0}")]
    InvalidExample(String),
}

/// Sentence templates for one domain. `{0}`, `{1}`, … are argument slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTemplates {
    pub domain: String,
    /// Lifted domain description shown before any problem.
    #[serde(default)]
    pub preamble: String,
    /// Action name → command sentence, e.g. `stack the {0} block on top of the {1} block`.
    pub actions: BTreeMap<String, String>,
    /// Predicate name → fact sentence.
    pub predicates: BTreeMap<String, String>,
    /// Extra phrasings accepted when reading plans back; each action's own
    /// template is always accepted.
    #[serde(default)]
    pub back_patterns: BTreeMap<String, Vec<String>>,
    /// Optional type name → sentence stating an object's type.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub object_types: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Slot(usize),
}

fn tokenize(template: &str) -> Vec<Token> {
    template
        .split_whitespace()
        .map(|w| {
            let slot = w
                .strip_prefix('{')
                .and_then(|r| r.strip_suffix('}'))
                .and_then(|n| n.parse().ok());
            match slot {
                Some(i) => Token::Slot(i),
                None => Token::Word(w.to_lowercase()),
            }
        })
        .collect()
}

fn fill(template: &str, args: &[String]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').and_then(|close| Some((close, after[..close].parse::<usize>().ok()?))) {
            Some((close, i)) if i < args.len() => {
                out.push_str(&args[i]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

const ARTICLES: &[&str] = &["the", "a", "an"];

/// Matches words against a tokenized pattern. Articles in the literal part
/// are optional on either side; slot words are taken verbatim.
fn match_tokens(pattern: &[Token], words: &[&str], slots: &mut Vec<Option<String>>) -> bool {
    match (pattern.first(), words.first()) {
        (None, None) => true,
        (None, Some(_)) => false,
        (Some(Token::Slot(i)), Some(word)) => {
            let previous = slots[*i].clone();
            if previous.as_deref().is_some_and(|p| p != *word) {
                return false;
            }
            slots[*i] = Some(word.to_string());
            if match_tokens(&pattern[1..], &words[1..], slots) {
                return true;
            }
            slots[*i] = previous;
            false
        }
        (Some(Token::Slot(_)), None) => false,
        (Some(Token::Word(lit)), word) => {
            if word.is_some_and(|w| w == lit) && match_tokens(&pattern[1..], &words[1..], slots) {
                return true;
            }
            if ARTICLES.contains(&lit.as_str()) && match_tokens(&pattern[1..], words, slots) {
                return true;
            }
            if let Some(w) = word {
                if ARTICLES.contains(w) && w != lit {
                    return match_tokens(pattern, &words[1..], slots);
                }
            }
            false
        }
    }
}

/// Lowercases, strips list markers (`1.`, `2)`, `-`, `*`) and trailing
/// punctuation, and collapses whitespace.
pub(crate) fn normalize_line(line: &str) -> String {
    let mut s = line.trim().to_lowercase();
    loop {
        let trimmed = s.trim_start();
        let digits = trimmed.chars().take_while(char::is_ascii_digit).count();
        let next = if digits > 0 && trimmed[digits..].starts_with(['.', ')', ':']) {
            &trimmed[digits + 1..]
        } else if let Some(rest) = trimmed.strip_prefix(['-', '*', '•']) {
            rest
        } else {
            break;
        };
        s = next.to_string();
    }
    let s = s.trim_end_matches(['.', ',', ';', '!']);
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl DomainTemplates {
    /// Parses a template file (JSON).
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("templates serialize")
    }

    /// Shipped templates for the four-operator Blocksworld.
    pub fn blocksworld() -> Self {
        Self::from_json(include_str!("../../data/templates/blocksworld.json")).expect("shipped templates parse")
    }

    /// Shipped templates for Logistics.
    pub fn logistics() -> Self {
        Self::from_json(include_str!("../../data/templates/logistics.json")).expect("shipped templates parse")
    }

    /// Shipped templates for the deceptively renamed Blocksworld.
    pub fn mystery_deceptive() -> Self {
        let mut t: Self =
            Self::from_json(include_str!("../../data/templates/mystery-deceptive.json")).expect("shipped templates parse");
        if t.preamble.is_empty() {
            t.preamble = t.describe(&crate::obfuscate::mystery_blocksworld());
        }
        t
    }

    /// Mechanical templates for any domain: `<name> object {0} object {1}`
    /// for actions and facts alike. Used for randomly renamed domains.
    pub fn generic(domain: &DomainModel) -> Self {
        let phrase = |name: &str, arity: usize| {
            let mut s = String::from(name);
            for i in 0..arity {
                s.push_str(&format!(" object {{{i}}}"));
            }
            s
        };
        let mut t = DomainTemplates {
            domain: domain.name.clone(),
            preamble: String::new(),
            actions: domain.actions.iter().map(|a| (a.name.clone(), phrase(&a.name, a.arity()))).collect(),
            predicates: domain
                .predicates
                .iter()
                .map(|p| (p.name.clone(), phrase(&p.name, p.arity())))
                .collect(),
            back_patterns: BTreeMap::new(),
            object_types: BTreeMap::new(),
        };
        t.preamble = t.describe(domain);
        t
    }

    /// Lifted description of the domain's actions: what each needs, adds
    /// and removes, phrased through these templates.
    pub fn describe(&self, domain: &DomainModel) -> String {
        const NAMES: &[&str] = &["x", "y", "z", "w", "v", "u"];
        let placeholder = |i: usize| NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("x{i}"));
        let mut out = String::from("I am playing with a set of objects. Here are the actions I can do:\n\n");
        for action in &domain.actions {
            let args: Vec<String> = (0..action.arity()).map(placeholder).collect();
            let text = self
                .render_step(&PlanStep::new(action.name.clone(), args))
                .unwrap_or_else(|_| action.name.clone());
            out.push_str(&text);
            out.push('\n');
        }
        out.push_str("\nI have the following restrictions on my actions:\n");
        for action in &domain.actions {
            let vars: BTreeMap<&str, String> = action
                .params
                .iter()
                .enumerate()
                .map(|(i, p)| (p.name.as_str(), placeholder(i)))
                .collect();
            let args: Vec<String> = (0..action.arity()).map(placeholder).collect();
            let head = self
                .render_step(&PlanStep::new(action.name.clone(), args))
                .unwrap_or_else(|_| action.name.clone());
            let facts = |atoms: &alloc::collections::BTreeSet<LiftedAtom>| -> String {
                let rendered: Vec<String> = atoms
                    .iter()
                    .map(|a| {
                        let ground = GroundAtom {
                            predicate: a.predicate.clone(),
                            args: a.args.iter().map(|v| vars.get(v.as_str()).cloned().unwrap_or_else(|| v.clone())).collect(),
                        };
                        self.render_atom(&ground).unwrap_or_else(|_| ground.to_string())
                    })
                    .collect();
                if rendered.is_empty() {
                    "nothing".into()
                } else {
                    rendered.join(", ")
                }
            };
            out.push_str(&format!("To {head}, the following facts need to be true: {}.\n", facts(&action.pre)));
            out.push_str(&format!("Once I {head}, the following facts will be true: {}.\n", facts(&action.add)));
            out.push_str(&format!("Once I {head}, the following facts will be false: {}.\n", facts(&action.del)));
        }
        out
    }

    fn slot_check(name: &str, template: &str, arity: usize) -> Result<(), TranslateError> {
        for token in tokenize(template) {
            if let Token::Slot(slot) = token {
                if slot >= arity {
                    return Err(TranslateError::BadSlot {
                        name: name.to_string(),
                        slot,
                        arity,
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks that every action and predicate of `domain` is covered, slots
    /// are in range, and no two actions share a back-translation pattern.
    pub fn check(&self, domain: &DomainModel) -> Result<(), TranslateError> {
        if self.domain != domain.name {
            return Err(TranslateError::WrongDomain {
                templates: self.domain.clone(),
                domain: domain.name.clone(),
            });
        }
        for action in &domain.actions {
            let t = self.actions.get(&action.name).ok_or_else(|| TranslateError::MissingTemplate {
                kind: "action",
                name: action.name.clone(),
            })?;
            Self::slot_check(&action.name, t, action.arity())?;
            for p in self.back_patterns.get(&action.name).into_iter().flatten() {
                Self::slot_check(&action.name, p, action.arity())?;
            }
        }
        for pred in &domain.predicates {
            let t = self.predicates.get(&pred.name).ok_or_else(|| TranslateError::MissingTemplate {
                kind: "predicate",
                name: pred.name.clone(),
            })?;
            Self::slot_check(&pred.name, t, pred.arity())?;
        }
        for name in self.back_patterns.keys() {
            if domain.action(name).is_none() {
                return Err(TranslateError::MissingTemplate {
                    kind: "action",
                    name: name.clone(),
                });
            }
        }
        let patterns = self.patterns();
        for (i, (a, pa)) in patterns.iter().enumerate() {
            for (b, pb) in &patterns[i + 1..] {
                if a != b && pa == pb {
                    return Err(TranslateError::AmbiguousPatterns {
                        first: a.clone(),
                        second: b.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn patterns(&self) -> Vec<(String, Vec<Token>)> {
        let mut out = Vec::new();
        for (name, template) in &self.actions {
            out.push((name.clone(), tokenize(template)));
            for p in self.back_patterns.get(name).into_iter().flatten() {
                out.push((name.clone(), tokenize(p)));
            }
        }
        out
    }

    pub fn render_atom(&self, atom: &GroundAtom) -> Result<String, TranslateError> {
        let t = self.predicates.get(&atom.predicate).ok_or_else(|| TranslateError::MissingTemplate {
            kind: "predicate",
            name: atom.predicate.clone(),
        })?;
        Ok(fill(t, &atom.args))
    }

    pub fn render_step(&self, step: &PlanStep) -> Result<String, TranslateError> {
        let t = self.actions.get(&step.name).ok_or_else(|| TranslateError::MissingTemplate {
            kind: "action",
            name: step.name.clone(),
        })?;
        Ok(fill(t, &step.args))
    }

    /// Sentences for a set of atoms, plus object-type facts when requested.
    pub(crate) fn render_facts<'a>(
        &self,
        atoms: impl IntoIterator<Item = &'a GroundAtom>,
    ) -> Result<Vec<String>, TranslateError> {
        atoms.into_iter().map(|a| self.render_atom(a)).collect()
    }

    pub(crate) fn render_types(&self, instance: &ProblemInstance) -> Vec<String> {
        instance
            .objects
            .iter()
            .filter_map(|(o, ty)| self.object_types.get(ty).map(|t| fill(t, core::slice::from_ref(o))))
            .collect()
    }

    /// Parses one command line into a plan step, or `Ok(None)` when nothing
    /// matches.
    pub fn match_line(&self, line: &str) -> Result<Option<PlanStep>, TranslateError> {
        let normalized = normalize_line(line);
        let words: Vec<&str> = normalized.split_whitespace().collect();
        let mut found: Option<PlanStep> = None;
        for (name, pattern) in self.patterns() {
            let arity = pattern
                .iter()
                .filter_map(|t| match t {
                    Token::Slot(i) => Some(i + 1),
                    Token::Word(_) => None,
                })
                .max()
                .unwrap_or(0);
            let mut slots = alloc::vec![None; arity];
            if !match_tokens(&pattern, &words, &mut slots) {
                continue;
            }
            let Some(args) = slots.into_iter().collect::<Option<Vec<String>>>() else {
                continue;
            };
            let step = PlanStep { name: name.clone(), args };
            match &found {
                Some(prev) if *prev != step => {
                    return Err(TranslateError::AmbiguousLine {
                        line: line.to_string(),
                        first: prev.name.clone(),
                        second: name,
                    })
                }
                _ => found = Some(step),
            }
        }
        Ok(found)
    }
}

/// One command sentence per line; the empty plan renders as empty text.
pub fn plan_to_nl(plan: &Plan, templates: &DomainTemplates) -> Result<String, TranslateError> {
    let mut out = String::new();
    for step in &plan.steps {
        out.push_str(&templates.render_step(step)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads command sentences back into a plan; blank lines are skipped and any
/// other unmatched line is an error.
pub fn nl_to_plan(text: &str, templates: &DomainTemplates) -> Result<Plan, TranslateError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| templates.match_line(line)?.ok_or_else(|| TranslateError::Unmatched(line.to_string())))
        .collect()
}

/// `a`, `a and b`, `a, b and c`
pub(crate) fn join_sentences(items: &[String]) -> String {
    match items {
        [] => String::from("nothing in particular"),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains;

    #[test]
    fn shipped_templates_cover_their_domains() {
        DomainTemplates::blocksworld().check(&domains::blocksworld()).unwrap();
        DomainTemplates::logistics().check(&domains::logistics()).unwrap();
        DomainTemplates::mystery_deceptive()
            .check(&crate::obfuscate::mystery_blocksworld())
            .unwrap();
        let generic = DomainTemplates::generic(&domains::logistics());
        generic.check(&domains::logistics()).unwrap();
        assert!(generic.preamble.contains("fly-airplane object x object y object z"));
    }

    #[test]
    fn stack_sentence_round_trips() {
        let t = DomainTemplates::blocksworld();
        let step = PlanStep::new("stack", ["orange", "blue"]);
        let text = t.render_step(&step).unwrap();
        assert_eq!(text, "stack the orange block on top of the blue block");
        assert_eq!(t.match_line(&text).unwrap(), Some(step));
    }

    #[test]
    fn matching_tolerates_case_articles_and_numbering() {
        let t = DomainTemplates::blocksworld();
        let want = Some(PlanStep::new("unstack", ["red", "blue"]));
        assert_eq!(t.match_line("  2. Unstack the red block from on top of the blue block.").unwrap(), want);
        assert_eq!(t.match_line("unstack red block from on top of blue block").unwrap(), want);
        assert_eq!(t.match_line("- unstack the red block from on top of the blue block").unwrap(), want);
        assert_eq!(t.match_line("juggle the red block").unwrap(), None);
    }

    #[test]
    fn slot_words_are_never_dropped_as_articles() {
        let t = DomainTemplates::mystery_deceptive();
        assert_eq!(t.match_line("attack object a").unwrap(), Some(PlanStep::new("attack", ["a"])));
        assert_eq!(
            t.match_line("feast object a from object b").unwrap(),
            Some(PlanStep::new("feast", ["a", "b"]))
        );
    }

    #[test]
    fn empty_plan_round_trips_through_empty_text() {
        let t = DomainTemplates::blocksworld();
        let text = plan_to_nl(&Plan::default(), &t).unwrap();
        assert!(text.is_empty());
        assert!(nl_to_plan(&text, &t).unwrap().is_empty());
    }

    #[test]
    fn identical_patterns_are_rejected() {
        let mut t = DomainTemplates::blocksworld();
        t.actions.insert("putdown".into(), "pick up the {0} block".into());
        assert!(matches!(
            t.check(&domains::blocksworld()),
            Err(TranslateError::AmbiguousPatterns { .. })
        ));
    }

    #[test]
    fn missing_template_is_reported() {
        let mut t = DomainTemplates::blocksworld();
        t.predicates.remove("holding");
        assert_eq!(
            t.check(&domains::blocksworld()),
            Err(TranslateError::MissingTemplate {
                kind: "predicate",
                name: "holding".into()
            })
        );
    }

    #[test]
    fn normalizes_list_markers() {
        assert_eq!(normalize_line("  3) Pick up   the RED block. "), "pick up the red block");
        assert_eq!(normalize_line("10. (pickup a)"), "(pickup a)");
    }
}
