//! Aggregates run records into per-cell counts and averages and renders them
//! as markdown, CSV or JSON.
//!
//! Cells are keyed by (domain, protocol, style, generator). Everything is
//! kept as integer sums and counts so partial summaries merge exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use planeval_core::metrics::fraction_label;
use planeval_core::RelaxationMode;
use serde::{Deserialize, Serialize};

use crate::modulo::{FinalVerdict, Protocol, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("instance `{id}` appears twice in {cell}")]
    Duplicate { id: String, cell: String },
    #[error("unknown format `{0}` (expected markdown, csv or json)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub domain: String,
    pub protocol: Protocol,
    pub style: String,
    pub generator: String,
}

impl CellKey {
    fn of(r: &RunRecord) -> Self {
        Self { domain: r.domain.clone(), protocol: r.protocol, style: r.style.clone(), generator: r.generator.clone() }
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}/{}", self.domain, self.protocol.as_str(), self.style, self.generator)
    }
}

/// A sum and a count; the mean is absent when the count is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Avg {
    pub sum: u64,
    pub n: u64,
}

impl Avg {
    fn push(&mut self, v: usize) {
        self.sum += v as u64;
        self.n += 1;
    }

    fn merge(&mut self, other: Avg) {
        self.sum += other.sum;
        self.n += other.n;
    }

    pub fn mean(self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }
}

/// Repair statistics for one seed kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStats {
    pub steps: Avg,
    pub seed_length: Avg,
    pub solved_length: Avg,
}

impl SeedStats {
    fn merge(&mut self, o: SeedStats) {
        self.steps.merge(o.steps);
        self.seed_length.merge(o.seed_length);
        self.solved_length.merge(o.solved_length);
    }
}

pub const SEED_KINDS: [&str; 3] = ["empty", "random", "provided"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub total: usize,
    pub correct: usize,
    pub errors: usize,
    /// Rounds used by correct records.
    pub rounds_when_correct: Avg,
    /// Seeded-repair records where every seed was repaired.
    pub seeded_all_solved: usize,
    pub seeded_total: usize,
    pub seeds: BTreeMap<String, SeedStats>,
    pub edit_distance: Avg,
    /// mode -> verdict label -> count
    pub relaxed: BTreeMap<RelaxationMode, BTreeMap<String, usize>>,
    /// optimal length -> (total, correct)
    pub histogram: BTreeMap<usize, (usize, usize)>,
    #[serde(skip)]
    ids: BTreeSet<String>,
}

impl Cell {
    fn add(&mut self, r: &RunRecord) {
        self.total += 1;
        if r.is_correct() {
            self.correct += 1;
            self.rounds_when_correct.push(r.rounds_used);
        }
        if r.verdict == FinalVerdict::Error {
            self.errors += 1;
        }
        if let Some(s) = &r.seeded {
            self.seeded_total += 1;
            if let Some(p) = s.provided.as_ref().filter(|p| p.solved && s.empty.solved && s.random.solved) {
                self.seeded_all_solved += 1;
                for (kind, run) in SEED_KINDS.into_iter().zip([&s.empty, &s.random, p]) {
                    let stats = self.seeds.entry(kind.into()).or_default();
                    stats.steps.push(run.steps);
                    stats.seed_length.push(run.seed_length);
                    stats.solved_length.push(run.plan_length().unwrap_or_default());
                }
                if let Some(d) = s.edit_distance {
                    self.edit_distance.push(d);
                }
            }
        }
        for (mode, label) in &r.relaxed {
            *self.relaxed.entry(*mode).or_default().entry(label.clone()).or_default() += 1;
        }
        if let Some(len) = r.optimal_length {
            let bucket = self.histogram.entry(len).or_default();
            bucket.0 += 1;
            bucket.1 += usize::from(r.is_correct());
        }
    }

    fn merge(&mut self, o: &Cell) {
        self.total += o.total;
        self.correct += o.correct;
        self.errors += o.errors;
        self.rounds_when_correct.merge(o.rounds_when_correct);
        self.seeded_all_solved += o.seeded_all_solved;
        self.seeded_total += o.seeded_total;
        for (k, v) in &o.seeds {
            self.seeds.entry(k.clone()).or_default().merge(*v);
        }
        self.edit_distance.merge(o.edit_distance);
        for (mode, labels) in &o.relaxed {
            let mine = self.relaxed.entry(*mode).or_default();
            for (l, c) in labels {
                *mine.entry(l.clone()).or_default() += c;
            }
        }
        for (len, (t, c)) in &o.histogram {
            let b = self.histogram.entry(*len).or_default();
            b.0 += t;
            b.1 += c;
        }
    }

    pub fn label(&self) -> String {
        fraction_label(self.correct, self.total)
    }

    /// Average feedback rounds over correct instances.
    pub fn afr(&self) -> Option<f64> {
        self.rounds_when_correct.mean()
    }

    pub fn seed(&self, kind: &str) -> SeedStats {
        self.seeds.get(kind).copied().unwrap_or_default()
    }

    fn relaxed_valid(&self, mode: RelaxationMode) -> Option<(usize, usize)> {
        let labels = self.relaxed.get(&mode)?;
        Some((labels.get("valid").copied().unwrap_or(0), labels.values().sum()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricsSummary {
    pub cells: BTreeMap<CellKey, Cell>,
}

impl MetricsSummary {
    pub fn add(&mut self, r: &RunRecord) -> Result<(), ReportError> {
        let key = CellKey::of(r);
        let cell = self.cells.entry(key.clone()).or_default();
        if !cell.ids.insert(r.instance_id.clone()) {
            return Err(ReportError::Duplicate { id: r.instance_id.clone(), cell: key.to_string() });
        }
        cell.add(r);
        Ok(())
    }

    /// Combines two summaries of disjoint record sets.
    pub fn merge(&mut self, other: &MetricsSummary) -> Result<(), ReportError> {
        for (key, theirs) in &other.cells {
            let mine = self.cells.entry(key.clone()).or_default();
            if let Some(id) = mine.ids.intersection(&theirs.ids).next() {
                return Err(ReportError::Duplicate { id: id.clone(), cell: key.to_string() });
            }
            mine.ids.extend(theirs.ids.iter().cloned());
            mine.merge(theirs);
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.cells.values().map(|c| c.total).sum()
    }
}

pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Result<MetricsSummary, ReportError> {
    let mut summary = MetricsSummary::default();
    for r in records {
        summary.add(r)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(ReportError::UnknownFormat(s.into())),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn dash(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

const CSV_HEADER: &str = "domain,protocol,style,generator,total,correct,percent,errors,afr,\
seeded_total,seeded_all_solved,\
steps_empty,steps_random,steps_provided,\
seed_length_empty,seed_length_random,seed_length_provided,\
solved_length_empty,solved_length_random,solved_length_provided,\
edit_distance,\
relaxed_valid_none,relaxed_valid_delete_relaxed,relaxed_valid_precondition_relaxed,relaxed_valid_both";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render(summary: &MetricsSummary, format: Format) -> String {
    match format {
        Format::Markdown => markdown(summary),
        Format::Csv => csv(summary),
        Format::Json => serde_json::to_string_pretty(&json_rows(summary)).expect("rows serialize") + "\n",
    }
}

fn markdown(summary: &MetricsSummary) -> String {
    let mut out = String::new();
    out.push_str("| Domain | Protocol | Style | Generator | Instances correct | A.F.R |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for (k, c) in &summary.cells {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            k.domain,
            k.protocol.as_str(),
            k.style,
            k.generator,
            c.label(),
            dash(c.afr())
        );
    }

    let seeded: Vec<_> = summary.cells.iter().filter(|(_, c)| c.seeded_total > 0).collect();
    if !seeded.is_empty() {
        out.push_str("\nSeeded repair (averages over instances every seed solved)\n\n");
        out.push_str(
            "| Domain | Style | Generator | Solved by all | Steps empty | Steps random | Steps provided \
             | Seed length random | Seed length provided | Solved length empty | Solved length random \
             | Solved length provided | Lev. distance |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for (k, c) in seeded {
            let (e, r, p) = (c.seed("empty"), c.seed("random"), c.seed("provided"));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {}/{} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                k.domain,
                k.style,
                k.generator,
                c.seeded_all_solved,
                c.seeded_total,
                dash(e.steps.mean()),
                dash(r.steps.mean()),
                dash(p.steps.mean()),
                dash(r.seed_length.mean()),
                dash(p.seed_length.mean()),
                dash(e.solved_length.mean()),
                dash(r.solved_length.mean()),
                dash(p.solved_length.mean()),
                dash(c.edit_distance.mean()),
            );
        }
    }

    let relaxed: Vec<_> = summary.cells.iter().filter(|(_, c)| !c.relaxed.is_empty()).collect();
    if !relaxed.is_empty() {
        out.push_str("\nValid under each model\n\n");
        out.push_str("| Domain | Style | Generator | none | delete-relaxed | precondition-relaxed | both |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for (k, c) in relaxed {
            let cols: Vec<String> = RelaxationMode::ALL
                .iter()
                .map(|m| c.relaxed_valid(*m).map_or("-".into(), |(v, n)| fraction_label(v, n)))
                .collect();
            let _ = writeln!(out, "| {} | {} | {} | {} |", k.domain, k.style, k.generator, cols.join(" | "));
        }
    }
    out
}

fn csv(summary: &MetricsSummary) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (k, c) in &summary.cells {
        let mut row = vec![
            csv_field(&k.domain),
            k.protocol.as_str().into(),
            csv_field(&k.style),
            csv_field(&k.generator),
            c.total.to_string(),
            c.correct.to_string(),
            num((c.total > 0).then(|| 100.0 * c.correct as f64 / c.total as f64)),
            c.errors.to_string(),
            num(c.afr()),
            c.seeded_total.to_string(),
            c.seeded_all_solved.to_string(),
        ];
        row.extend(SEED_KINDS.iter().map(|s| num(c.seed(s).steps.mean())));
        row.extend(SEED_KINDS.iter().map(|s| num(c.seed(s).seed_length.mean())));
        row.extend(SEED_KINDS.iter().map(|s| num(c.seed(s).solved_length.mean())));
        row.push(num(c.edit_distance.mean()));
        row.extend(RelaxationMode::ALL.iter().map(|m| c.relaxed_valid(*m).map_or(String::new(), |(v, _)| v.to_string())));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SeedRow {
    steps: Option<f64>,
    seed_length: Option<f64>,
    solved_length: Option<f64>,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    #[serde(flatten)]
    key: &'a CellKey,
    total: usize,
    correct: usize,
    label: String,
    errors: usize,
    afr: Option<f64>,
    seeded_total: usize,
    seeded_all_solved: usize,
    seeds: BTreeMap<&'static str, SeedRow>,
    edit_distance: Option<f64>,
    relaxed: &'a BTreeMap<RelaxationMode, BTreeMap<String, usize>>,
    histogram: Vec<HistogramBucket>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramBucket {
    pub optimal_length: usize,
    pub total: usize,
    pub correct: usize,
}

fn buckets(c: &Cell) -> Vec<HistogramBucket> {
    c.histogram.iter().map(|(&optimal_length, &(total, correct))| HistogramBucket { optimal_length, total, correct }).collect()
}

fn json_rows(summary: &MetricsSummary) -> Vec<JsonRow<'_>> {
    summary
        .cells
        .iter()
        .map(|(key, c)| JsonRow {
            key,
            total: c.total,
            correct: c.correct,
            label: c.label(),
            errors: c.errors,
            afr: c.afr(),
            seeded_total: c.seeded_total,
            seeded_all_solved: c.seeded_all_solved,
            seeds: SEED_KINDS
                .iter()
                .filter(|s| c.seeds.contains_key(**s))
                .map(|s| {
                    let st = c.seed(s);
                    (*s, SeedRow { steps: st.steps.mean(), seed_length: st.seed_length.mean(), solved_length: st.solved_length.mean() })
                })
                .collect(),
            edit_distance: c.edit_distance.mean(),
            relaxed: &c.relaxed,
            histogram: buckets(c),
        })
        .collect()
}

/// Optimal-length buckets, one row per (cell, length), for plotting.
pub fn histogram_csv(summary: &MetricsSummary) -> String {
    let mut out = String::from("domain,protocol,style,generator,optimal_length,total,correct\n");
    for (k, c) in &summary.cells {
        for b in buckets(c) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&k.domain),
                k.protocol.as_str(),
                csv_field(&k.style),
                csv_field(&k.generator),
                b.optimal_length,
                b.total,
                b.correct
            );
        }
    }
    out
}
