//! Runs a protocol over a dataset with a pool of workers, appending one
//! record per instance to `OUT/records.jsonl`. Instances that already have a
//! record there are skipped, so an interrupted batch can be resumed.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use planeval_core::repair::corrupt_plan;
use planeval_core::translate::{PromptStyle, Shots, PLAN_END_TAG};
use planeval_core::Grounding;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Loaded;
use crate::gateway::{Cassette, Generator, OneFixPerRound, PlannerBacked, Remote, RemoteConfig, Replay, Scripted};
use crate::modulo::{derive_seed, run, FinalVerdict, LoopOptions, Protocol, RunRecord, Task};
use crate::report::{aggregate, histogram_csv, render, Format, MetricsSummary};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Chat-completions endpoint configured through the environment.
    Remote,
    /// Always answers with an empty plan.
    Mock,
    /// Serves answers from a cassette only.
    Replay,
    /// Answers with a plan found by the repair planner.
    Planner,
    /// Starts from a corrupted optimal plan and fixes one step per round.
    OneFix,
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub protocol: Protocol,
    pub style: PromptStyle,
    pub generator: GeneratorKind,
    pub cassette: Option<PathBuf>,
    /// Record misses into the cassette instead of failing on them.
    pub record: bool,
    /// Overrides the remote model, or the model a replayed cassette was
    /// recorded with.
    pub model: Option<String>,
    pub options: LoopOptions,
    pub workers: usize,
    pub ids: Option<Vec<String>>,
    pub limit: Option<usize>,
    pub out: PathBuf,
}

impl BatchConfig {
    pub fn new(protocol: Protocol, style: PromptStyle, generator: GeneratorKind, out: impl Into<PathBuf>) -> Self {
        Self {
            protocol,
            style,
            generator,
            cassette: None,
            record: false,
            model: None,
            options: LoopOptions::default(),
            workers: 1,
            ids: None,
            limit: None,
            out: out.into(),
        }
    }
}

/// An instance the protocol could not be run on at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub ran: usize,
    pub skipped: usize,
    pub failures: Vec<Failure>,
    pub summary: MetricsSummary,
}

/// Builds the generator for each instance.
struct Factory {
    kind: GeneratorKind,
    shared: Option<Arc<dyn Generator>>,
    cassette: Option<Arc<Cassette>>,
    record: bool,
}

impl Factory {
    fn new(config: &BatchConfig) -> Result<Self> {
        if config.record && config.cassette.is_none() {
            bail!("--record needs --cassette");
        }
        if config.record && config.generator == GeneratorKind::Replay {
            bail!("the replay generator cannot record; pick the generator to record from");
        }
        if config.cassette.is_some() && !config.record && config.generator != GeneratorKind::Replay {
            bail!("--cassette is only read by the replay generator; add --record to record into it");
        }
        let cassette = match &config.cassette {
            Some(path) => {
                if config.record {
                    ensure_inside(path, &config.out)?;
                }
                Some(Arc::new(Cassette::open(path, config.record)?))
            }
            None if config.generator == GeneratorKind::Replay => bail!("the replay generator needs --cassette"),
            None => None,
        };
        let shared: Option<Arc<dyn Generator>> = match config.generator {
            GeneratorKind::Remote => {
                let mut remote = RemoteConfig::from_env()?;
                if let Some(m) = &config.model {
                    remote.model = m.clone();
                }
                Some(Arc::new(Remote::new(remote)))
            }
            GeneratorKind::Mock => Some(Arc::new(Scripted::constant(PLAN_END_TAG).named("mock"))),
            GeneratorKind::Replay => {
                let c = cassette.as_ref().unwrap();
                let model = config
                    .model
                    .clone()
                    .or_else(|| c.model().map(String::from))
                    .context("empty cassette; pass --model to name the recorded model")?;
                Some(Arc::new(Replay::over(c.clone(), None, model)))
            }
            GeneratorKind::Planner | GeneratorKind::OneFix => None,
        };
        Ok(Self { kind: config.generator, shared, cassette, record: config.record })
    }

    fn for_instance(&self, data: &Loaded, index: usize, config: &BatchConfig) -> Result<Arc<dyn Generator>> {
        let inner: Arc<dyn Generator> = match (&self.shared, self.kind) {
            (Some(g), _) => g.clone(),
            (None, GeneratorKind::Planner) => Arc::new(PlannerBacked::new(
                data.domain.clone(),
                data.instances[index].clone(),
                config.style.surface(),
                Some(data.templates.clone()),
                config.options.repair.clone(),
            )),
            (None, GeneratorKind::OneFix) => {
                let inst = &data.instances[index];
                let target = data.plans[index].clone().context("the one-fix generator needs optimal plans")?;
                let g = Grounding::new(&data.domain, inst)?;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.options.repair.rng_seed, &inst.id));
                let flawed = corrupt_plan(&target, 0.5, &g, &mut rng)?;
                Arc::new(OneFixPerRound::new(target, flawed, config.style.surface(), Some(data.templates.clone())))
            }
            (None, _) => unreachable!("shared generators are built up front"),
        };
        Ok(match (&self.cassette, self.record) {
            (Some(c), true) => {
                let id = inner.id();
                Arc::new(Replay::over(c.clone(), Some(inner), id))
            }
            _ => inner,
        })
    }
}

/// Fails unless `path` would be created somewhere under `dir`.
fn ensure_inside(path: &Path, dir: &Path) -> Result<()> {
    let dir = dir.canonicalize().with_context(|| format!("resolving {}", dir.display()))?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let parent = parent.canonicalize().with_context(|| format!("resolving {}", parent.display()))?;
    if !parent.starts_with(&dir) {
        bail!("{} is outside the output directory {}", path.display(), dir.display());
    }
    Ok(())
}

/// Reads the records file; a torn last line from an interrupted run is dropped.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if n + 1 == lines.len() && !text.ends_with('\n') => {}
            Err(e) => return Err(e).with_context(|| format!("{}:{}", path.display(), n + 1)),
        }
    }
    Ok(out)
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
}

/// Writes summary.{md,csv,json} and histogram.csv into `dir`.
pub fn write_summary(dir: &Path, summary: &MetricsSummary) -> Result<()> {
    for format in [Format::Markdown, Format::Csv, Format::Json] {
        fs::write(dir.join(format!("summary.{}", format.extension())), render(summary, format))?;
    }
    fs::write(dir.join("histogram.csv"), histogram_csv(summary))?;
    Ok(())
}

pub fn run_batch(data: &Loaded, config: &BatchConfig) -> Result<BatchOutcome> {
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let factory = Factory::new(config)?;
    let records_path = config.out.join(RECORDS_FILE);

    // gateway errors are retried on resume
    let mut existing = read_records(&records_path)?;
    existing.retain(|r| r.verdict != FinalVerdict::Error);
    let done: HashSet<&str> = existing.iter().map(|r| r.instance_id.as_str()).collect();

    let mut selected: Vec<usize> = match &config.ids {
        Some(ids) => ids
            .iter()
            .map(|id| data.index_of(id).with_context(|| format!("no instance `{id}` in the dataset")))
            .collect::<Result<_>>()?,
        None => (0..data.instances.len()).collect(),
    };
    if let Some(limit) = config.limit {
        selected.truncate(limit);
    }
    let pending: Vec<usize> = selected.iter().copied().filter(|&i| !done.contains(data.entries[i].id.as_str())).collect();
    let skipped = selected.len() - pending.len();

    // start the file over with the records we keep, then append as we go
    fs::write(&records_path, jsonl(&existing))?;
    let sink = Mutex::new(OpenOptions::new().append(true).open(&records_path)?);
    let fresh = Mutex::new(Vec::new());
    let failures = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let n = data.instances.len();

    let work = || -> Result<()> {
        loop {
            let k = next.fetch_add(1, Ordering::Relaxed);
            let Some(&i) = pending.get(k) else { return Ok(()) };
            let inst = &data.instances[i];
            let example = match config.style.shots() {
                Shots::One => {
                    let j = (i + 1) % n;
                    data.plans[j].as_ref().map(|p| (&data.instances[j], p))
                }
                Shots::Zero => None,
            };
            let task = Task {
                domain: &data.domain,
                instance: inst,
                example,
                style: config.style,
                templates: Some(&data.templates),
                optimal_length: data.entries[i].optimal_length,
            };
            let result = factory
                .for_instance(data, i, config)
                .and_then(|g| Ok(run(config.protocol, task, g.as_ref(), &config.options)?));
            match result {
                Ok(record) => {
                    let line = serde_json::to_string(&record)? + "\n";
                    let mut f = sink.lock().unwrap();
                    f.write_all(line.as_bytes())?;
                    f.flush()?;
                    drop(f);
                    fresh.lock().unwrap().push(record);
                }
                Err(e) => failures.lock().unwrap().push(Failure { instance_id: inst.id.clone(), error: format!("{e:#}") }),
            }
        }
    };
    std::thread::scope(|s| -> Result<()> {
        let handles: Vec<_> = (0..config.workers.max(1)).map(|_| s.spawn(work)).collect();
        for h in handles {
            h.join().expect("worker panicked")?;
        }
        Ok(())
    })?;
    drop(sink);

    let fresh = fresh.into_inner().unwrap();
    let ran = fresh.len();
    let mut all = existing;
    all.extend(fresh);
    let order: BTreeMap<&str, usize> = data.entries.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    all.sort_by(|a, b| {
        let key = |r: &RunRecord| (order.get(r.instance_id.as_str()).copied().unwrap_or(usize::MAX), r.instance_id.clone());
        key(a).cmp(&key(b))
    });
    let tmp = config.out.join(format!("{RECORDS_FILE}.tmp"));
    File::create(&tmp)?.write_all(jsonl(&all).as_bytes())?;
    fs::rename(&tmp, &records_path)?;

    let mut failures = failures.into_inner().unwrap();
    failures.sort_by_key(|f| order.get(f.instance_id.as_str()).copied());
    let failures_path = config.out.join(FAILURES_FILE);
    if failures.is_empty() {
        let _ = fs::remove_file(&failures_path);
    } else {
        fs::write(&failures_path, jsonl(&failures))?;
    }

    let summary = aggregate(&all)?;
    write_summary(&config.out, &summary)?;
    Ok(BatchOutcome { ran, skipped, failures, summary })
}
