#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use planeval_core::gen::{generate, Dataset, DomainKind, GenSpec};
use planeval_core::repair::{corrupt_plan, detect_flaws};
use planeval_core::{Grounding, Plan, ProblemInstance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One canned HTTP answer.
#[derive(Clone)]
pub struct Canned {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub delay: Duration,
}

impl Canned {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        Self { status, headers: vec![], body: body.into(), delay: Duration::ZERO }
    }

    pub fn ok(text: &str) -> Self {
        Self::new(200, chat(text, Some((7, 3))))
    }

    pub fn header(mut self, k: &str, v: &str) -> Self {
        self.headers.push((k.into(), v.into()));
        self
    }

    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

pub fn chat(text: &str, usage: Option<(u64, u64)>) -> String {
    let mut v = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
    if let Some((p, c)) = usage {
        v["usage"] = serde_json::json!({"prompt_tokens": p, "completion_tokens": c});
    }
    v.to_string()
}

#[derive(Debug, Clone)]
pub struct Received {
    pub authorization: Option<String>,
    pub body: serde_json::Value,
}

/// A local server answering POSTs from a script; the last answer repeats.
pub struct Server {
    pub url: String,
    pub received: Arc<Mutex<Vec<Received>>>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

impl Server {
    pub fn start(script: Vec<Canned>) -> Self {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let received = Arc::new(Mutex::new(Vec::new()));
        let peak = Arc::new(AtomicUsize::new(0));
        let live = Arc::new(AtomicUsize::new(0));
        let next = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        {
            let received = received.clone();
            let peak = peak.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let (received, peak, live, next, script) =
                        (received.clone(), peak.clone(), live.clone(), next.clone(), script.clone());
                    thread::spawn(move || {
                        let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        if let Some(r) = read_request(&stream) {
                            let k = next.fetch_add(1, Ordering::SeqCst);
                            let canned = script[k.min(script.len() - 1)].clone();
                            received.lock().unwrap().push(r);
                            thread::sleep(canned.delay);
                            write_response(stream, &canned);
                        }
                        live.fetch_sub(1, Ordering::SeqCst);
                    });
                }
            });
        }
        Self { url, received, peak_in_flight: peak }
    }

    pub fn hits(&self) -> usize {
        self.received.lock().unwrap().len()
    }
}

fn read_request(stream: &TcpStream) -> Option<Received> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    if line.is_empty() {
        return None;
    }
    let mut length = 0;
    let mut authorization = None;
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let (k, v) = l.split_once(':')?;
        match k.trim().to_ascii_lowercase().as_str() {
            "content-length" => length = v.trim().parse().ok()?,
            "authorization" => authorization = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Received { authorization, body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null) })
}

fn write_response(mut stream: TcpStream, c: &Canned) {
    let mut head = format!(
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        c.status,
        c.body.len()
    );
    for (k, v) in &c.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(c.body.as_bytes());
    let _ = stream.flush();
}

pub fn blocksworld(count: usize, seed: u64) -> Dataset {
    generate(&GenSpec::new(DomainKind::Blocksworld, count, seed)).unwrap()
}

/// A corrupted copy of an optimal plan together with its initial flaw count.
pub struct FlawFixture {
    pub instance: ProblemInstance,
    pub target: Plan,
    pub flawed: Plan,
    pub flaws: usize,
}

/// Fixtures where every substituted step shows up as at least one flaw, so
/// the flaw count bounds the number of repairs needed.
pub fn flaw_fixtures(ds: &Dataset, wanted: usize, seed: u64) -> Vec<FlawFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (inst, opt) in ds.instances.iter().zip(&ds.optimal_plans) {
        if out.len() == wanted {
            break;
        }
        let g = Grounding::new(&ds.domain, inst).unwrap();
        let flawed = corrupt_plan(opt, 0.5, &g, &mut rng).unwrap();
        let substituted = flawed.steps.iter().zip(&opt.steps).filter(|(a, b)| a != b).count();
        let flaws = detect_flaws(&ds.domain, inst, &flawed).unwrap().len();
        if substituted > 0 && substituted <= flaws {
            out.push(FlawFixture { instance: inst.clone(), target: opt.clone(), flawed, flaws });
        }
    }
    out
}
