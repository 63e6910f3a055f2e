use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::sexpr::{call_of, error_at, read_all, Sexpr};
use super::{
    ActionSchema, DomainModel, GroundAtom, LiftedAtom, PddlError, Plan, PlanStep, PredicateSchema,
    ProblemInstance, Requirement, State, TypedParam, OBJECT_TYPE,
};

const UNSUPPORTED_HEADS: &[&str] = &[
    "not", "or", "imply", "forall", "exists", "when", "=", "increase", "decrease", "assign",
    "scale-up", "scale-down", "either",
];

fn expect_define<'a>(exprs: &'a [Sexpr], what: &str) -> Result<&'a [Sexpr], PddlError> {
    let start = super::sexpr::Pos { line: 1, column: 1 };
    let expr = match exprs {
        [expr] => expr,
        [] => return Err(error_at(start, format!("expected `(define ({what} ...))`"))),
        [_, extra, ..] => return Err(error_at(extra.pos(), "trailing input after `define`")),
    };
    let items = expr
        .list()
        .ok_or_else(|| error_at(expr.pos(), "expected `(define ...)`"))?;
    match items.first().and_then(Sexpr::symbol) {
        Some("define") => Ok(&items[1..]),
        _ => Err(error_at(expr.pos(), "expected `define`")),
    }
}

fn header_name(expr: Option<&Sexpr>, keyword: &str, at: super::sexpr::Pos) -> Result<String, PddlError> {
    let expr = expr.ok_or_else(|| error_at(at, format!("missing `({keyword} name)`")))?;
    let (head, args) = call_of(expr)?;
    if head != keyword || args.len() != 1 {
        return Err(error_at(expr.pos(), format!("expected `({keyword} name)`")));
    }
    Ok(args.into_iter().next().unwrap())
}

fn section(expr: &Sexpr) -> Result<(&str, &[Sexpr]), PddlError> {
    let items = expr
        .list()
        .ok_or_else(|| error_at(expr.pos(), "expected a `(:section ...)`"))?;
    let head = items
        .first()
        .and_then(Sexpr::symbol)
        .ok_or_else(|| error_at(expr.pos(), "expected a section keyword"))?;
    Ok((head, &items[1..]))
}

fn symbols(items: &[Sexpr]) -> Result<Vec<(&str, super::sexpr::Pos)>, PddlError> {
    items
        .iter()
        .map(|e| {
            e.symbol()
                .map(|s| (s, e.pos()))
                .ok_or_else(|| error_at(e.pos(), "expected a name"))
        })
        .collect()
}

/// `a b - t c` → `[(a, t), (b, t), (c, object)]`.
fn typed_list(items: &[Sexpr], typing: bool) -> Result<Vec<(String, String)>, PddlError> {
    let syms = symbols(items)?;
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < syms.len() {
        let (sym, pos) = syms[i];
        if sym == "-" {
            if !typing {
                return Err(error_at(pos, "typed list requires the `:typing` requirement"));
            }
            let (ty, ty_pos) = *syms
                .get(i + 1)
                .ok_or_else(|| error_at(pos, "missing type after `-`"))?;
            if ty == "-" {
                return Err(error_at(ty_pos, "expected a type name"));
            }
            if pending.is_empty() {
                return Err(error_at(pos, "`-` without preceding names"));
            }
            out.extend(pending.drain(..).map(|n| (n, ty.to_string())));
            i += 2;
        } else {
            pending.push(sym.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, OBJECT_TYPE.to_string())));
    Ok(out)
}

fn check_supported_head(expr: &Sexpr) -> Result<(), PddlError> {
    if let Some(items) = expr.list() {
        if let Some(head) = items.first().and_then(Sexpr::symbol) {
            if UNSUPPORTED_HEADS.contains(&head) {
                return Err(PddlError::Unsupported(head.to_string()));
            }
        }
    }
    Ok(())
}

/// `()`, `(and a b ...)` or a single atom.
fn conjunction(expr: &Sexpr) -> Result<Vec<(String, Vec<String>)>, PddlError> {
    let items = expr
        .list()
        .ok_or_else(|| error_at(expr.pos(), "expected a conjunction"))?;
    match items.first().and_then(Sexpr::symbol) {
        None if items.is_empty() => Ok(Vec::new()),
        Some("and") => items[1..]
            .iter()
            .map(|e| {
                check_supported_head(e)?;
                call_of(e)
            })
            .collect(),
        _ => {
            check_supported_head(expr)?;
            Ok(alloc::vec![call_of(expr)?])
        }
    }
}

/// Effect literals split into (add, delete).
type Literals = (Vec<(String, Vec<String>)>, Vec<(String, Vec<String>)>);

fn effect_literals(expr: &Sexpr) -> Result<Literals, PddlError> {
    let items = expr
        .list()
        .ok_or_else(|| error_at(expr.pos(), "expected an effect"))?;
    let literals: &[Sexpr] = match items.first().and_then(Sexpr::symbol) {
        None if items.is_empty() => &[],
        Some("and") => &items[1..],
        _ => core::slice::from_ref(expr),
    };
    let mut add = Vec::new();
    let mut del = Vec::new();
    for lit in literals {
        let parts = lit
            .list()
            .ok_or_else(|| error_at(lit.pos(), "expected an effect literal"))?;
        if parts.first().and_then(Sexpr::symbol) == Some("not") {
            match &parts[1..] {
                [atom] => {
                    check_supported_head(atom)?;
                    del.push(call_of(atom)?);
                }
                _ => return Err(error_at(lit.pos(), "`not` takes exactly one atom")),
            }
        } else {
            check_supported_head(lit)?;
            add.push(call_of(lit)?);
        }
    }
    Ok((add, del))
}

fn check_arity(domain: &DomainModel, name: &str, found: usize) -> Result<(), PddlError> {
    let pred = domain
        .predicate(name)
        .ok_or_else(|| PddlError::UnknownPredicate(name.to_string()))?;
    if pred.arity() != found {
        return Err(PddlError::ArityMismatch {
            name: name.to_string(),
            expected: pred.arity(),
            found,
        });
    }
    Ok(())
}

fn unique<'a>(kind: &'static str, names: impl IntoIterator<Item = &'a str>) -> Result<(), PddlError> {
    let mut seen = BTreeSet::new();
    for name in names {
        if !seen.insert(name) {
            return Err(PddlError::Duplicate {
                kind,
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

pub fn parse_domain(text: &str) -> Result<DomainModel, PddlError> {
    let exprs = read_all(text)?;
    let body = expect_define(&exprs, "domain")?;
    let start = exprs[0].pos();
    let name = header_name(body.first(), "domain", start)?;
    let mut domain = DomainModel {
        name,
        requirements: Vec::new(),
        types: Vec::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
    };
    let mut raw_actions = Vec::new();
    for expr in &body[1..] {
        let (head, rest) = section(expr)?;
        match head {
            ":requirements" => {
                for (req, _) in symbols(rest)? {
                    let req = match req {
                        ":strips" => Requirement::Strips,
                        ":typing" => Requirement::Typing,
                        other => return Err(PddlError::UnsupportedRequirement(other.to_string())),
                    };
                    if !domain.requirements.contains(&req) {
                        domain.requirements.push(req);
                    }
                }
            }
            ":types" => {
                if !domain.is_typed() {
                    return Err(error_at(expr.pos(), "`:types` requires the `:typing` requirement"));
                }
                domain.types = typed_list(rest, true)?
                    .into_iter()
                    .filter(|(t, _)| t != OBJECT_TYPE)
                    .collect();
            }
            ":predicates" => {
                for p in rest {
                    let items = p
                        .list()
                        .ok_or_else(|| error_at(p.pos(), "expected `(predicate ?args...)`"))?;
                    let pname = items
                        .first()
                        .and_then(Sexpr::symbol)
                        .ok_or_else(|| error_at(p.pos(), "expected a predicate name"))?;
                    let params = typed_list(&items[1..], domain.is_typed())?
                        .into_iter()
                        .map(|(n, t)| TypedParam { name: n, ty: t })
                        .collect();
                    domain.predicates.push(PredicateSchema {
                        name: pname.to_string(),
                        params,
                    });
                }
            }
            ":action" => raw_actions.push(expr),
            other => return Err(PddlError::Unsupported(other.to_string())),
        }
    }
    if domain.requirements.is_empty() {
        domain.requirements.push(Requirement::Strips);
    }
    for expr in raw_actions {
        let action = parse_action(&domain, expr)?;
        domain.actions.push(action);
    }
    check_domain(&domain)?;
    Ok(domain)
}

fn parse_action(domain: &DomainModel, expr: &Sexpr) -> Result<ActionSchema, PddlError> {
    let items = expr.list().unwrap_or_default();
    let name = items
        .get(1)
        .and_then(Sexpr::symbol)
        .ok_or_else(|| error_at(expr.pos(), "expected an action name"))?
        .to_string();
    let mut params = Vec::new();
    let mut pre = Vec::new();
    let mut effects = (Vec::new(), Vec::new());
    let mut rest = &items[2..];
    while let [key, value, tail @ ..] = rest {
        match key.symbol() {
            Some(":parameters") => {
                let list = value
                    .list()
                    .ok_or_else(|| error_at(value.pos(), "expected a parameter list"))?;
                params = typed_list(list, domain.is_typed())?
                    .into_iter()
                    .map(|(n, t)| TypedParam { name: n, ty: t })
                    .collect();
            }
            Some(":precondition") => pre = conjunction(value)?,
            Some(":effect") => effects = effect_literals(value)?,
            Some(other) => return Err(PddlError::Unsupported(other.to_string())),
            None => return Err(error_at(key.pos(), "expected an action keyword")),
        }
        rest = tail;
    }
    if let [dangling] = rest {
        return Err(error_at(dangling.pos(), "keyword without a value"));
    }
    let lift = |atoms: Vec<(String, Vec<String>)>| -> BTreeSet<LiftedAtom> {
        atoms
            .into_iter()
            .map(|(predicate, args)| LiftedAtom { predicate, args })
            .collect()
    };
    Ok(ActionSchema {
        name,
        params,
        pre: lift(pre),
        add: lift(effects.0),
        del: lift(effects.1),
    })
}

fn check_domain(domain: &DomainModel) -> Result<(), PddlError> {
    unique("type", domain.types.iter().map(|(t, _)| t.as_str()))?;
    for (_, parent) in &domain.types {
        if !domain.has_type(parent) {
            return Err(PddlError::UnknownType(parent.clone()));
        }
    }
    // reject cycles: every type must reach `object`
    for (ty, _) in &domain.types {
        let mut current = ty.as_str();
        let mut hops = 0;
        while let Some(parent) = domain.parent_of(current) {
            current = parent;
            hops += 1;
            if hops > domain.types.len() {
                return Err(PddlError::Unsupported(format!("cyclic type `{ty}`")));
            }
        }
    }
    unique("predicate", domain.predicates.iter().map(|p| p.name.as_str()))?;
    unique("action", domain.actions.iter().map(|a| a.name.as_str()))?;
    for pred in &domain.predicates {
        unique("variable", pred.params.iter().map(|p| p.name.as_str()))?;
        for p in &pred.params {
            if !domain.has_type(&p.ty) {
                return Err(PddlError::UnknownType(p.ty.clone()));
            }
        }
    }
    for action in &domain.actions {
        unique("parameter", action.params.iter().map(|p| p.name.as_str()))?;
        for p in &action.params {
            if !domain.has_type(&p.ty) {
                return Err(PddlError::UnknownType(p.ty.clone()));
            }
        }
        for atom in action.pre.iter().chain(&action.add).chain(&action.del) {
            check_arity(domain, &atom.predicate, atom.args.len())?;
            for arg in &atom.args {
                if !action.params.iter().any(|p| &p.name == arg) {
                    return Err(PddlError::UnboundVariable {
                        action: action.name.clone(),
                        variable: arg.clone(),
                    });
                }
            }
        }
        if let Some(atom) = action.add.intersection(&action.del).next() {
            return Err(PddlError::AddDeleteOverlap {
                action: action.name.clone(),
                atom: atom.to_string(),
            });
        }
    }
    Ok(())
}

pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<ProblemInstance, PddlError> {
    let exprs = read_all(text)?;
    let body = expect_define(&exprs, "problem")?;
    let start = exprs[0].pos();
    let id = header_name(body.first(), "problem", start)?;
    let mut problem = ProblemInstance {
        id,
        domain: String::new(),
        objects: Vec::new(),
        init: State::default(),
        goal: BTreeSet::new(),
    };
    let mut saw_goal = false;
    for expr in &body[1..] {
        let (head, rest) = section(expr)?;
        match head {
            ":domain" => match symbols(rest)?.as_slice() {
                [(name, _)] => problem.domain = name.to_string(),
                _ => return Err(error_at(expr.pos(), "expected `(:domain name)`")),
            },
            ":requirements" => {
                for (req, _) in symbols(rest)? {
                    if req != ":strips" && req != ":typing" {
                        return Err(PddlError::UnsupportedRequirement(req.to_string()));
                    }
                }
            }
            ":objects" => problem.objects = typed_list(rest, domain.is_typed())?,
            ":init" => {
                for atom in rest {
                    check_supported_head(atom)?;
                    let (predicate, args) = call_of(atom)?;
                    problem.init.0.insert(GroundAtom { predicate, args });
                }
            }
            ":goal" => {
                let [goal] = rest else {
                    return Err(error_at(expr.pos(), "expected `(:goal condition)`"));
                };
                problem.goal = conjunction(goal)?
                    .into_iter()
                    .map(|(predicate, args)| GroundAtom { predicate, args })
                    .collect();
                saw_goal = true;
            }
            other => return Err(PddlError::Unsupported(other.to_string())),
        }
    }
    if !saw_goal {
        return Err(error_at(start, "problem has no `:goal`"));
    }
    if problem.domain.is_empty() {
        return Err(error_at(start, "problem has no `:domain`"));
    }
    problem.check(domain)?;
    Ok(problem)
}

/// Reads a plan file: one `(action arg...)` per line, `;` comments.
///
/// Action names must exist in `domain`; arity and objects are left to the
/// validator so malformed steps can be diagnosed rather than rejected.
pub fn parse_plan(text: &str, domain: &DomainModel) -> Result<Plan, PddlError> {
    read_all(text)?
        .iter()
        .map(|expr| {
            let (name, args) = call_of(expr)?;
            if domain.action(&name).is_none() {
                return Err(PddlError::UnknownAction(name));
            }
            Ok(PlanStep { name, args })
        })
        .collect()
}
