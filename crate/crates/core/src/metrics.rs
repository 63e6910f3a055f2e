//! Plan distances and small aggregation helpers.

use alloc::vec;

use crate::pddl::{Plan, PlanStep};

/// Edit distance between two step sequences, where a token is a whole
/// ground action (name and every argument).
pub fn levenshtein(a: &Plan, b: &Plan) -> usize {
    edit_distance(&a.steps, &b.steps)
}

pub fn edit_distance(a: &[PlanStep], b: &[PlanStep]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: alloc::vec::Vec<usize> = (0..=b.len()).collect();
    let mut next = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        next[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let substitute = row[j] + usize::from(x != y);
            next[j + 1] = substitute.min(row[j + 1] + 1).min(next[j] + 1);
        }
        core::mem::swap(&mut row, &mut next);
    }
    row[b.len()]
}

/// Arithmetic mean, or `None` for an empty input.
pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `correct/total (pp.p%)`
pub fn fraction_label(correct: usize, total: usize) -> alloc::string::String {
    if total == 0 {
        return alloc::format!("{correct}/{total}");
    }
    alloc::format!("{correct}/{total} ({:.1}%)", 100.0 * correct as f64 / total as f64)
}
