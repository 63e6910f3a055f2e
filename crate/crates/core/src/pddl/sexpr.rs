use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::PddlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Sexpr {
    Symbol(String, Pos),
    List(Vec<Sexpr>, Pos),
}

impl Sexpr {
    pub fn pos(&self) -> Pos {
        match self {
            Sexpr::Symbol(_, pos) | Sexpr::List(_, pos) => *pos,
        }
    }

    pub fn symbol(&self) -> Option<&str> {
        match self {
            Sexpr::Symbol(s, _) => Some(s),
            Sexpr::List(..) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List(items, _) => Some(items),
            Sexpr::Symbol(..) => None,
        }
    }
}

pub(crate) fn error_at(pos: Pos, message: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

/// Reads every top-level expression. Symbols are lowercased; `;` starts a
/// comment running to the end of the line.
pub(crate) fn read_all(text: &str) -> Result<Vec<Sexpr>, PddlError> {
    let mut stack: Vec<(Vec<Sexpr>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    let mut column = 1;
    let mut symbol = String::new();
    let mut symbol_pos = Pos { line, column };

    macro_rules! flush {
        () => {
            if !symbol.is_empty() {
                let sym = Sexpr::Symbol(core::mem::take(&mut symbol).to_lowercase(), symbol_pos);
                match stack.last_mut() {
                    Some((items, _)) => items.push(sym),
                    None => top.push(sym),
                }
            }
        };
    }

    while let Some(c) = chars.next() {
        let here = Pos { line, column };
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
        match c {
            '(' => {
                flush!();
                stack.push((Vec::new(), here));
            }
            ')' => {
                flush!();
                let (items, start) = stack
                    .pop()
                    .ok_or_else(|| error_at(here, "unbalanced `)`"))?;
                let list = Sexpr::List(items, start);
                match stack.last_mut() {
                    Some((items, _)) => items.push(list),
                    None => top.push(list),
                }
            }
            ';' => {
                flush!();
                for c in chars.by_ref() {
                    if c == '\n' {
                        line += 1;
                        column = 1;
                        break;
                    }
                }
            }
            c if c.is_whitespace() => flush!(),
            c => {
                if symbol.is_empty() {
                    symbol_pos = here;
                }
                symbol.push(c);
            }
        }
    }
    flush!();
    if let Some((_, start)) = stack.last() {
        return Err(error_at(*start, "unclosed `(`"));
    }
    Ok(top)
}

/// Parses a single `(head arg ...)` call such as `(on a b)`.
pub(crate) fn parse_call(text: &str) -> Result<(String, Vec<String>), PddlError> {
    let exprs = read_all(text)?;
    let start = Pos { line: 1, column: 1 };
    match exprs.as_slice() {
        [expr] => call_of(expr),
        [] => Err(error_at(start, "expected `(name args...)`")),
        [_, extra, ..] => Err(error_at(extra.pos(), "trailing input after call")),
    }
}

pub(crate) fn call_of(expr: &Sexpr) -> Result<(String, Vec<String>), PddlError> {
    let items = expr
        .list()
        .ok_or_else(|| error_at(expr.pos(), "expected `(name args...)`"))?;
    let (head, rest) = items
        .split_first()
        .ok_or_else(|| error_at(expr.pos(), "empty call"))?;
    let name = head
        .symbol()
        .ok_or_else(|| error_at(head.pos(), "expected a name"))?;
    let args = rest
        .iter()
        .map(|a| {
            a.symbol()
                .map(ToString::to_string)
                .ok_or_else(|| error_at(a.pos(), "nested expression in argument list"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.to_string(), args))
}
