//! Plan generators: a chat-completions HTTP client, a record/replay cassette
//! that can wrap any generator, and deterministic offline generators.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use planeval_core::gen::{shortest_plan, DEFAULT_NODE_BUDGET};
use planeval_core::pddl::plan_to_pddl;
use planeval_core::repair::{repair_in, SearchConfig, SeedKind};
use planeval_core::translate::{plan_to_nl, DomainTemplates, Surface, PLAN_END_TAG};
use planeval_core::{DomainModel, Grounding, Plan, ProblemInstance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub max_tokens: u32,
}

impl GeneratorRequest {
    /// Temperature 0 and the plan-end tag as stop sequence.
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            stop: vec![PLAN_END_TAG.to_string()],
            max_tokens: 2048,
        }
    }

    /// Hex SHA-256 of the request's canonical JSON. Field order is fixed by
    /// the struct and message text is hashed verbatim.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("requests serialize");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt: u64,
    pub completion: u64,
    /// False when the provider sent no usage and zeros were filled in.
    #[serde(default)]
    pub reported: bool,
}

impl Usage {
    pub fn add(&mut self, other: &Usage) {
        self.prompt += other.prompt;
        self.completion += other.completion;
        self.reported |= other.reported;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub cache_hit: bool,
}

impl GeneratorResponse {
    fn offline(text: String) -> Self {
        Self { text, usage: Usage::default(), latency_ms: 0, cache_hit: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum GatewayError {
    #[error("network failure after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("authentication rejected ({status})")]
    Auth { status: u16 },
    #[error("provider status {status} after {attempts} attempts: {body}")]
    Provider { status: u16, attempts: u32, body: String },
    #[error("prompt exceeds the provider's context length: {0}")]
    ContextLength(String),
    #[error("malformed provider payload: {0}")]
    Malformed(String),
    #[error("no cassette entry for request {0}")]
    CassetteMiss(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// Something that answers chat requests. Implementations must tolerate
/// concurrent calls.
pub trait Generator: Send + Sync {
    /// Stable name recorded in run records and used as the request's model.
    fn id(&self) -> String;
    fn complete(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError>;
}

impl<G: Generator + ?Sized> Generator for Arc<G> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        (**self).complete(request)
    }
}

// ---------------------------------------------------------------- scripted

/// Returns `rounds[k]` on the k-th call and repeats the last entry after.
pub struct Scripted {
    rounds: Vec<String>,
    calls: AtomicUsize,
    id: String,
}

impl Scripted {
    pub fn new(rounds: Vec<String>) -> Self {
        assert!(!rounds.is_empty(), "a scripted policy needs at least one round");
        Self { rounds, calls: AtomicUsize::new(0), id: "scripted".into() }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        Self::new(vec![text.into()])
    }

    pub fn named(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl Generator for Scripted {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, _: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.rounds[k.min(self.rounds.len() - 1)].clone();
        Ok(GeneratorResponse::offline(text))
    }
}

/// Plan text as a model is asked to write it: one step per line, then the
/// plan-end tag.
pub fn render_plan(plan: &Plan, surface: Surface, templates: Option<&DomainTemplates>) -> String {
    let body = match (surface, templates) {
        (Surface::Natural, Some(t)) => plan_to_nl(plan, t).unwrap_or_else(|_| plan_to_pddl(plan)),
        _ => plan.steps.iter().map(|s| format!("{s}\n")).collect(),
    };
    format!("{body}{PLAN_END_TAG}\n")
}

// ---------------------------------------------------------- planner-backed

/// Answers every request for one instance with a plan from the repair
/// planner (falling back to breadth-first search if the repairer runs out of
/// steps), so its output always validates.
pub struct PlannerBacked {
    domain: DomainModel,
    instance: ProblemInstance,
    surface: Surface,
    templates: Option<DomainTemplates>,
    config: SearchConfig,
    text: OnceLock<Result<String, GatewayError>>,
}

impl PlannerBacked {
    pub fn new(
        domain: DomainModel,
        instance: ProblemInstance,
        surface: Surface,
        templates: Option<DomainTemplates>,
        config: SearchConfig,
    ) -> Self {
        Self { domain, instance, surface, templates, config, text: OnceLock::new() }
    }

    fn plan(&self) -> Result<Plan, GatewayError> {
        let g = Grounding::new(&self.domain, &self.instance).map_err(|e| GatewayError::Config(e.to_string()))?;
        let trace = repair_in(&g, &self.domain, &self.instance, SeedKind::Empty, &self.config)
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        if let Some(plan) = trace.plan() {
            return Ok(plan.clone());
        }
        match shortest_plan(&g, DEFAULT_NODE_BUDGET) {
            Ok(Some(plan)) => Ok(plan),
            _ => Err(GatewayError::Config(format!("no plan found for {}", self.instance.id))),
        }
    }
}

impl Generator for PlannerBacked {
    fn id(&self) -> String {
        "planner".into()
    }

    fn complete(&self, _: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let text = self
            .text
            .get_or_init(|| self.plan().map(|p| render_plan(&p, self.surface, self.templates.as_ref())));
        text.clone().map(GeneratorResponse::offline)
    }
}

// ------------------------------------------------------------ one fix/round

/// Starts from a flawed copy of a valid plan (same length, some steps
/// substituted) and, each time it is asked again, restores the earliest
/// substituted step at or before the step the latest feedback names.
pub struct OneFixPerRound {
    target: Plan,
    current: Mutex<Plan>,
    surface: Surface,
    templates: Option<DomainTemplates>,
}

impl OneFixPerRound {
    pub fn new(target: Plan, flawed: Plan, surface: Surface, templates: Option<DomainTemplates>) -> Self {
        assert_eq!(target.len(), flawed.len(), "flawed plan must be a substitution of the target");
        Self { target, current: Mutex::new(flawed), surface, templates }
    }
}

/// The step number a diagnosis blames (`... at step 3 ...`), if any.
pub fn blamed_step(feedback: &str) -> Option<usize> {
    let at = feedback.find("at step ")? + "at step ".len();
    let digits: String = feedback[at..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

impl Generator for OneFixPerRound {
    fn id(&self) -> String {
        "one-fix".into()
    }

    fn complete(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let mut current = self.current.lock().unwrap();
        let answered = request.messages.iter().any(|m| m.role == "assistant");
        if answered {
            let feedback = request.messages.iter().rev().find(|m| m.role == "user").map_or("", |m| m.content.as_str());
            let limit = blamed_step(feedback).unwrap_or(current.len());
            if let Some(i) = (0..current.len().min(limit)).find(|&i| current.steps[i] != self.target.steps[i]) {
                current.steps[i] = self.target.steps[i].clone();
            }
        }
        Ok(GeneratorResponse::offline(render_plan(&current, self.surface, self.templates.as_ref())))
    }
}

// ----------------------------------------------------------------- replay

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CassetteEntry {
    key: String,
    request: GeneratorRequest,
    response: GeneratorResponse,
    timestamp: u64,
}

/// A JSON-lines file of recorded exchanges, shareable between several
/// [`Replay`] layers. New entries are appended as they arrive.
pub struct Cassette {
    path: PathBuf,
    entries: Mutex<HashMap<String, GeneratorResponse>>,
    model: Option<String>,
    writer: Mutex<Option<File>>,
}

impl Cassette {
    /// Loads `path`; a missing file is an empty cassette only when `create`.
    pub fn open(path: impl AsRef<Path>, create: bool) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        let mut model = None;
        match File::open(&path) {
            Ok(f) => {
                for (n, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(|e| GatewayError::Cassette(e.to_string()))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: CassetteEntry = serde_json::from_str(&line)
                        .map_err(|e| GatewayError::Cassette(format!("{}:{}: {e}", path.display(), n + 1)))?;
                    model.get_or_insert(entry.request.model);
                    entries.insert(entry.key, entry.response);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && create => {}
            Err(e) => return Err(GatewayError::Cassette(format!("{}: {e}", path.display()))),
        }
        Ok(Self { path, entries: Mutex::new(entries), model, writer: Mutex::new(None) })
    }

    /// The model named by the first recorded request.
    pub fn model(&self) -> Option<&str> {
        self.model.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str) -> Option<GeneratorResponse> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    fn insert(&self, entry: CassetteEntry) -> Result<(), GatewayError> {
        // a concurrent identical request may have recorded it meanwhile
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(&entry.key) {
            return Ok(());
        }
        let io = |e: std::io::Error| GatewayError::Cassette(format!("{}: {e}", self.path.display()));
        let mut writer = self.writer.lock().unwrap();
        if writer.is_none() {
            *writer = Some(OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?);
        }
        let file = writer.as_mut().unwrap();
        let line = serde_json::to_string(&entry).expect("entries serialize");
        writeln!(file, "{line}").and_then(|_| file.flush()).map_err(io)?;
        entries.insert(entry.key, entry.response);
        Ok(())
    }
}

/// Record/replay layer over a [`Cassette`]. Hits are served from the
/// cassette without touching `inner`; misses go to `inner` and are recorded,
/// or fail when there is no inner generator.
pub struct Replay {
    id: String,
    cassette: Arc<Cassette>,
    inner: Option<Arc<dyn Generator>>,
}

impl Replay {
    pub fn open(path: impl AsRef<Path>, inner: Option<Arc<dyn Generator>>, id: impl Into<String>) -> Result<Self, GatewayError> {
        let cassette = Arc::new(Cassette::open(path, inner.is_some())?);
        Ok(Self::over(cassette, inner, id))
    }

    pub fn over(cassette: Arc<Cassette>, inner: Option<Arc<dyn Generator>>, id: impl Into<String>) -> Self {
        Self { id: id.into(), cassette, inner }
    }

    pub fn len(&self) -> usize {
        self.cassette.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cassette.is_empty()
    }
}

impl Generator for Replay {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let key = request.cache_key();
        if let Some(hit) = self.cassette.get(&key) {
            return Ok(GeneratorResponse { cache_hit: true, ..hit });
        }
        let inner = self.inner.as_ref().ok_or_else(|| GatewayError::CassetteMiss(key.clone()))?;
        let response = inner.complete(request)?;
        self.cassette.insert(CassetteEntry {
            key,
            request: request.clone(),
            response: response.clone(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })?;
        Ok(response)
    }
}

// ----------------------------------------------------------------- remote

pub const ENV_ENDPOINT: &str = "PLANEVAL_ENDPOINT";
pub const ENV_API_KEY: &str = "PLANEVAL_API_KEY";
pub const ENV_MODEL: &str = "PLANEVAL_MODEL";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            model: model.into(),
            max_retries: 5,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
            requests_per_minute: None,
        }
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        let var = |name: &str| std::env::var(name).map_err(|_| GatewayError::Config(format!("{name} is not set")));
        Ok(Self::new(var(ENV_ENDPOINT)?, var(ENV_API_KEY)?, var(ENV_MODEL)?))
    }
}

struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max_in_flight: usize,
    interval: Option<Duration>,
    next_slot: Mutex<Instant>,
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

impl Limiter {
    fn new(max_in_flight: usize, requests_per_minute: Option<u32>) -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
            interval: requests_per_minute.filter(|&r| r > 0).map(|r| Duration::from_secs(60) / r),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        drop(n);
        if let Some(interval) = self.interval {
            let wait = {
                let mut slot = self.next_slot.lock().unwrap();
                let now = Instant::now();
                let start = (*slot).max(now);
                *slot = start + interval;
                start - now
            };
            std::thread::sleep(wait);
        }
        Permit(self)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

/// Chat-completions client with bounded retries and client-side rate limits.
pub struct Remote {
    config: RemoteConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

enum Attempt {
    Done(Result<GeneratorResponse, GatewayError>),
    Retry { wait: Option<Duration>, error: GatewayError },
}

impl Remote {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let limiter = Limiter::new(config.max_in_flight, config.requests_per_minute);
        Self { config, agent, limiter }
    }

    fn attempt(&self, request: &GeneratorRequest, attempts: u32) -> Attempt {
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            stop: &request.stop,
            max_tokens: request.max_tokens,
        };
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let sent = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(&body);
        let mut response = match sent {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    wait: None,
                    error: GatewayError::Network { attempts, message: e.to_string() },
                }
            }
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    wait: None,
                    error: GatewayError::Network { attempts, message: e.to_string() },
                }
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => Attempt::Done(parse_wire(&text, latency_ms)),
            401 | 403 => Attempt::Done(Err(GatewayError::Auth { status })),
            429 | 500..=599 => Attempt::Retry {
                wait: retry_after,
                error: GatewayError::Provider { status, attempts, body: truncate(&text) },
            },
            _ if text.contains("context_length") || text.contains("maximum context length") => {
                Attempt::Done(Err(GatewayError::ContextLength(truncate(&text))))
            }
            _ => Attempt::Done(Err(GatewayError::Provider { status, attempts, body: truncate(&text) })),
        }
    }
}

fn truncate(text: &str) -> String {
    text.chars().take(500).collect()
}

fn parse_wire(text: &str, latency_ms: u64) -> Result<GeneratorResponse, GatewayError> {
    let wire: WireResponse = serde_json::from_str(text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| GatewayError::Malformed("no choices".into()))?;
    let usage = match wire.usage {
        Some(WireUsage { prompt_tokens: Some(p), completion_tokens: Some(c) }) => Usage { prompt: p, completion: c, reported: true },
        Some(u) => Usage {
            prompt: u.prompt_tokens.unwrap_or(0),
            completion: u.completion_tokens.unwrap_or(0),
            reported: false,
        },
        None => Usage::default(),
    };
    Ok(GeneratorResponse {
        text: choice.message.content.unwrap_or_default(),
        usage,
        latency_ms,
        cache_hit: false,
    })
}

impl Generator for Remote {
    fn id(&self) -> String {
        self.config.model.clone()
    }

    fn complete(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, GatewayError> {
        let mut backoff = self.config.base_backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request, attempts) {
                Attempt::Done(result) => return result,
                Attempt::Retry { error, .. } if attempts > self.config.max_retries => return Err(error),
                Attempt::Retry { wait, .. } => {
                    std::thread::sleep(wait.unwrap_or(backoff).min(self.config.max_backoff));
                    backoff = (backoff * 2).min(self.config.max_backoff);
                }
            }
        }
    }
}
