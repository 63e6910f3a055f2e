use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use planeval::batch::{read_records, run_batch, write_summary, BatchConfig, GeneratorKind};
use planeval::dataset::{self, load, obfuscate_loaded, read_spec, templates_for, GenFile, Obfuscation, Parts};
use planeval::modulo::{LoopOptions, Protocol, DEFAULT_MAX_ROUNDS};
use planeval::report::{render, Format, MetricsSummary};
use planeval_core::obfuscate::{deceptive_map, randomized_map_over};
use planeval_core::pddl::{parse_domain, parse_plan, parse_problem};
use planeval_core::repair::{repair, SearchConfig, SeedKind};
use planeval_core::translate::{build_prompt, DomainTemplates, PromptStyle, Shots};
use planeval_core::validate::{diagnose, summary, validate, StepFailure, Verdict};
use planeval_core::RelaxationMode;
use serde_json::json;

#[derive(Parser)]
#[command(name = "planeval", version, about = "Generate planning benchmarks, query plan generators and score their plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a spec file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rename a dataset's actions, predicates and objects.
    Obfuscate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        map: MapArg,
        /// Seed for the randomized map.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the prompt for one instance, or write prompts for all of them.
    Prompt {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "natural-one-shot", value_parser = parse_style)]
        style: PromptStyle,
        #[arg(long, conflicts_with = "out")]
        id: Option<String>,
        #[arg(long, required_unless_present = "id")]
        out: Option<PathBuf>,
    },
    /// Validate a plan; exits 0 when valid, 2 when a step cannot be executed
    /// and 3 when the goal is not reached.
    Validate {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "none", value_parser = parse_mode)]
        mode: RelaxationMode,
        /// Sentence templates for the diagnosis.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Repair a plan by local search and print the trace as JSON.
    Repair {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        /// Seed plan; without it the search starts from the empty plan.
        #[arg(long, conflicts_with = "random")]
        plan: Option<PathBuf>,
        /// Start from a random plan of this length.
        #[arg(long)]
        random: Option<usize>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Run a protocol over a dataset.
    Run(RunArgs),
    /// Summarize one or more record files.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Write every format plus histogram.csv here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Deceptive,
    Randomized,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Autonomous,
    Backprompt,
    Seeded,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Autonomous => Protocol::Autonomous,
            ProtocolArg::Backprompt => Protocol::Backprompt,
            ProtocolArg::Seeded => Protocol::SeededRepair,
        }
    }
}

#[derive(clap::Args)]
struct SearchArgs {
    #[arg(long, default_value_t = SearchConfig::default().max_steps)]
    max_steps: usize,
    #[arg(long, default_value_t = SearchConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SearchConfig::default().rng_seed)]
    rng_seed: u64,
}

impl SearchArgs {
    fn config(&self) -> Result<SearchConfig> {
        if !(0.0..=1.0).contains(&self.noise) {
            bail!("--noise must be within [0, 1]");
        }
        Ok(SearchConfig { max_steps: self.max_steps, noise: self.noise, rng_seed: self.rng_seed, ..SearchConfig::default() })
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    #[arg(long, value_enum)]
    generator: GeneratorKind,
    #[arg(long, default_value = "natural-one-shot", value_parser = parse_style)]
    style: PromptStyle,
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Record generator answers into --cassette (which must be under --out).
    #[arg(long)]
    record: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    max_rounds: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Record wall-clock time per instance (makes records nondeterministic).
    #[arg(long)]
    timing: bool,
    /// Comma-separated instance ids.
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<String>>,
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_style(s: &str) -> Result<PromptStyle, String> {
    s.parse().map_err(|_| {
        let known: Vec<_> = PromptStyle::ALL.iter().map(|p| p.label()).collect();
        format!("expected one of {}", known.join(", "))
    })
}

fn parse_mode(s: &str) -> Result<RelaxationMode, String> {
    RelaxationMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
        let known: Vec<_> = RelaxationMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("expected one of {}", known.join(", "))
    })
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn generate(spec: &Path, out: &Path) -> Result<ExitCode> {
    let file = GenFile::load(spec)?;
    let n = dataset::write_generated(out, &file)?;
    eprintln!("wrote {n} instances to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn obfuscate(dir: &Path, how: MapArg, seed: u64, out: &Path) -> Result<ExitCode> {
    let data = load(dir)?;
    let (map, obfuscation) = match how {
        MapArg::Deceptive => (deceptive_map(&data.domain)?, Obfuscation::Deceptive),
        MapArg::Randomized => (
            randomized_map_over(&data.domain, data.instances.iter().flat_map(|i| i.object_names()), seed),
            Obfuscation::Randomized { seed },
        ),
    };
    let (domain, instances, plans) = obfuscate_loaded(&data, &map)?;
    // an unrenamed generated dataset keeps its provenance
    let file = read_spec(&data.dir)?
        .filter(|f| f.obfuscation.is_none())
        .map(|f| GenFile { obfuscation: Some(obfuscation), ..f });
    let parts = Parts { domain: &domain, instances: &instances, plans: &plans, kind: "mystery" };
    dataset::write(out, parts, file.as_ref(), Some(&map))?;
    eprintln!("wrote {} instances to {}", instances.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn prompt(dir: &Path, style: PromptStyle, id: Option<&str>, out: Option<&Path>) -> Result<ExitCode> {
    let data = load(dir)?;
    let n = data.instances.len();
    let text_for = |i: usize| -> Result<String> {
        let example = match style.shots() {
            Shots::One => {
                let j = (i + 1) % n;
                Some((&data.instances[j], data.plans[j].as_ref().context("one-shot prompts need optimal plans")?))
            }
            Shots::Zero => None,
        };
        Ok(build_prompt(&data.domain, &data.instances[i], example, style, Some(&data.templates))?.to_text())
    };
    match (id, out) {
        (Some(id), _) => {
            let i = data.index_of(id).with_context(|| format!("no instance `{id}`"))?;
            emit(&text_for(i)?)?;
        }
        (None, Some(out)) => {
            let dir = out.join("prompts").join(style.label());
            fs::create_dir_all(&dir)?;
            for (i, e) in data.entries.iter().enumerate() {
                fs::write(dir.join(format!("{}.txt", e.id)), text_for(i)?)?;
            }
            eprintln!("wrote {n} prompts to {}", dir.display());
        }
        (None, None) => unreachable!("clap requires one of them"),
    }
    Ok(ExitCode::SUCCESS)
}

fn validate_cmd(domain: &Path, problem: &Path, plan: &Path, mode: RelaxationMode, templates: Option<&Path>) -> Result<ExitCode> {
    let domain = parse_domain(&read(domain)?).context("parsing the domain")?;
    let problem = parse_problem(&read(problem)?, &domain).context("parsing the problem")?;
    let plan = parse_plan(&read(plan)?, &domain).context("parsing the plan")?;
    let templates = match templates {
        Some(p) => DomainTemplates::from_json(&read(p)?).context("parsing the templates")?,
        None => templates_for(&domain, None),
    };
    let report = validate(&domain, &problem, &plan, mode);
    let diagnosis = diagnose(&report, Some(&templates)).unwrap_or_else(|_| summary(&report));
    let names = |atoms: &mut dyn Iterator<Item = String>| atoms.collect::<Vec<_>>();
    let (step, action, failure, missing, unmet, code) = match &report.verdict {
        Verdict::Valid => (None, None, None, vec![], vec![], 0),
        Verdict::Inexecutable { step, action, failure } => {
            let missing = match failure {
                StepFailure::MissingPreconditions { missing } => names(&mut missing.iter().map(ToString::to_string)),
                _ => vec![],
            };
            (Some(*step), Some(action.to_string()), Some(failure), missing, vec![], 2)
        }
        Verdict::NonGoalReaching { unmet } => (None, None, None, vec![], names(&mut unmet.iter().map(ToString::to_string)), 3),
    };
    let out = json!({
        "verdict": report.verdict.label(),
        "mode": mode.as_str(),
        "step": step,
        "action": action,
        "failure": failure,
        "missing": missing,
        "unmet": unmet,
        "diagnosis": diagnosis,
    });
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))?;
    Ok(ExitCode::from(code))
}

fn repair_cmd(domain: &Path, problem: &Path, plan: Option<&Path>, random: Option<usize>, search: &SearchArgs) -> Result<ExitCode> {
    let domain = parse_domain(&read(domain)?).context("parsing the domain")?;
    let problem = parse_problem(&read(problem)?, &domain).context("parsing the problem")?;
    let seed = match (plan, random) {
        (Some(p), _) => SeedKind::Provided { plan: parse_plan(&read(p)?, &domain).context("parsing the plan")? },
        (None, Some(length)) => SeedKind::Random { length },
        (None, None) => SeedKind::Empty,
    };
    let trace = repair(&domain, &problem, seed, &search.config()?)?;
    emit(&(serde_json::to_string_pretty(&trace)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn run_cmd(args: RunArgs) -> Result<ExitCode> {
    if args.max_rounds == 0 {
        bail!("--max-rounds must be at least 1");
    }
    let data = load(&args.dataset)?;
    let mut config = BatchConfig::new(args.protocol.into(), args.style, args.generator, &args.out);
    config.cassette = args.cassette;
    config.record = args.record;
    config.model = args.model;
    config.options = LoopOptions { max_rounds: args.max_rounds, repair: args.search.config()?, timing: args.timing };
    config.workers = args.workers;
    config.ids = args.ids;
    config.limit = args.limit;
    let outcome = run_batch(&data, &config)?;
    eprintln!(
        "ran {} instances, skipped {} already recorded, {} failed",
        outcome.ran,
        outcome.skipped,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("  {}: {}", f.instance_id, f.error);
    }
    emit(&render(&outcome.summary, Format::Markdown))?;
    Ok(ExitCode::SUCCESS)
}

fn report_cmd(records: &[PathBuf], format: &str, out: Option<&Path>) -> Result<ExitCode> {
    let format: Format = format.parse()?;
    let mut summary = MetricsSummary::default();
    for path in records {
        if !path.exists() {
            bail!("{} does not exist", path.display());
        }
        let part = planeval::report::aggregate(&read_records(path)?)?;
        summary.merge(&part).with_context(|| format!("merging {}", path.display()))?;
    }
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_summary(dir, &summary)?;
        }
        None => emit(&render(&summary, format))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { spec, out } => generate(&spec, &out),
        Command::Obfuscate { dataset, map, seed, out } => obfuscate(&dataset, map, seed, &out),
        Command::Prompt { dataset, style, id, out } => prompt(&dataset, style, id.as_deref(), out.as_deref()),
        Command::Validate { domain, problem, plan, mode, templates } => {
            validate_cmd(&domain, &problem, &plan, mode, templates.as_deref())
        }
        Command::Repair { domain, problem, plan, random, search } => {
            repair_cmd(&domain, &problem, plan.as_deref(), random, &search)
        }
        Command::Run(args) => run_cmd(args),
        Command::Report { records, format, out } => report_cmd(&records, &format, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
