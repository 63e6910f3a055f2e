use alloc::string::String;
use core::fmt::Write;

use super::{DomainModel, Plan, ProblemInstance, TypedParam, OBJECT_TYPE};

fn params(out: &mut String, params: &[TypedParam], typed: bool) {
    let mut first = true;
    for p in params {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&p.name);
        if typed {
            let _ = write!(out, " - {}", p.ty);
        }
    }
}

fn conjunction<'a, T: core::fmt::Display + 'a>(
    out: &mut String,
    atoms: impl IntoIterator<Item = &'a T>,
    negated: impl IntoIterator<Item = &'a T>,
) {
    out.push_str("(and");
    for atom in atoms {
        let _ = write!(out, " {atom}");
    }
    for atom in negated {
        let _ = write!(out, " (not {atom})");
    }
    out.push(')');
}

/// Canonical PDDL text: declaration order is kept, atom sets come out sorted.
pub fn domain_to_pddl(domain: &DomainModel) -> String {
    let typed = domain.is_typed();
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name);
    out.push_str("  (:requirements");
    for req in &domain.requirements {
        let _ = write!(out, " {}", req.as_str());
    }
    out.push_str(")\n");
    if typed && !domain.types.is_empty() {
        out.push_str("  (:types");
        for (ty, parent) in &domain.types {
            let _ = write!(out, "\n    {ty} - {parent}");
        }
        out.push_str(")\n");
    }
    out.push_str("  (:predicates");
    for pred in &domain.predicates {
        let _ = write!(out, "\n    ({}", pred.name);
        if !pred.params.is_empty() {
            out.push(' ');
            params(&mut out, &pred.params, typed);
        }
        out.push(')');
    }
    out.push_str(")\n");
    for action in &domain.actions {
        let _ = writeln!(out, "  (:action {}", action.name);
        out.push_str("    :parameters (");
        params(&mut out, &action.params, typed);
        out.push_str(")\n    :precondition ");
        conjunction(&mut out, &action.pre, core::iter::empty());
        out.push_str("\n    :effect ");
        conjunction(&mut out, &action.add, &action.del);
        out.push_str(")\n");
    }
    out.push_str(")\n");
    out
}

pub fn problem_to_pddl(problem: &ProblemInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", problem.id);
    let _ = writeln!(out, "  (:domain {})", problem.domain);
    out.push_str("  (:objects");
    for (name, ty) in &problem.objects {
        if ty == OBJECT_TYPE {
            let _ = write!(out, "\n    {name}");
        } else {
            let _ = write!(out, "\n    {name} - {ty}");
        }
    }
    out.push_str(")\n  (:init");
    for atom in problem.init.atoms() {
        let _ = write!(out, "\n    {atom}");
    }
    out.push_str(")\n  (:goal ");
    conjunction(&mut out, &problem.goal, core::iter::empty());
    out.push_str("))\n");
    out
}

/// One step per line, closed by a unit-cost comment (also for empty plans).
pub fn plan_to_pddl(plan: &Plan) -> String {
    let mut out = String::new();
    for step in &plan.steps {
        let _ = writeln!(out, "{step}");
    }
    let _ = writeln!(out, "; cost = {} (unit cost)", plan.len());
    out
}
