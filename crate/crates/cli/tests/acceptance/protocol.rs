//! Remote backend against a local chat-completions stub.
//!
//! The stub answers each request with the position of a role it picks from
//! a hash of the prompt, in one of several reply styles, and records which
//! role it meant. Client tallies must match those records exactly, whatever
//! presentation order the prompt used.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nudge_core::agents::cache::ResponseCache;
use nudge_core::agents::remote::{HttpTransport, RemoteAgent, RetryPolicy};
use nudge_core::agents::{AgentConfig, Backend};
use nudge_core::decoy_space::{DecoyGrid, DEFAULT_AREA1_LADDER};
use nudge_core::exec::{Execution, Executor};
use nudge_core::personas::Segment;
use nudge_core::scenario::{draw_situations, FxTable, SituationRanges};
use nudge_core::seeding::hash_str;
use nudge_core::simulation::{run_cell, ResponseTally, Schedule, SweepPlan};

use crate::common::Outcome;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Every 7th request (by arrival) gets a 503, every 11th a 429, never
    /// twice in a row for the same body.
    Flaky,
    Healthy,
    AlwaysUnavailable,
    Unauthorized,
}

#[derive(Default)]
struct Counters {
    hits: AtomicUsize,
    ok: AtomicUsize,
    injected: AtomicUsize,
    /// Roles the stub meant, for successful replies.
    answered: Mutex<BTreeMap<&'static str, u64>>,
    last_failed: Mutex<HashMap<u64, bool>>,
}

struct Stub {
    url: String,
    mode: Arc<Mutex<Mode>>,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
}

impl Stub {
    fn start() -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let mode = Arc::new(Mutex::new(Mode::Healthy));
        let counters = Arc::new(Counters::default());
        let stop = Arc::new(AtomicBool::new(false));
        let (m, c, s) = (mode.clone(), counters.clone(), stop.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (m, c) = (m.clone(), c.clone());
                std::thread::spawn(move || serve(stream, &m, &c));
            }
        });
        Stub { url, mode, counters, stop }
    }

    fn set_mode(&self, mode: Mode) {
        *self.mode.lock().unwrap() = mode;
    }

    fn hits(&self) -> usize {
        self.counters.hits.load(Ordering::SeqCst)
    }

    fn reset(&self) {
        self.counters.hits.store(0, Ordering::SeqCst);
        self.counters.ok.store(0, Ordering::SeqCst);
        self.counters.injected.store(0, Ordering::SeqCst);
        self.counters.answered.lock().unwrap().clear();
        self.counters.last_failed.lock().unwrap().clear();
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.url.trim_start_matches("http://").split('/').next().unwrap());
    }
}

fn serve(stream: TcpStream, mode: &Mutex<Mode>, counters: &Counters) {
    stream.set_read_timeout(Some(Duration::from_secs(30))).ok();
    stream.set_nodelay(true).ok();
    let mut writer = stream.try_clone().expect("clone stream");
    let mut reader = BufReader::new(stream);
    loop {
        let mut content_length = None;
        let mut first = true;
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => return,
                Ok(_) => {}
            }
            let line = line.trim_end();
            if line.is_empty() {
                if first {
                    continue;
                }
                break;
            }
            first = false;
            if let Some((name, value)) = line.split_once(':') {
                if name.eq_ignore_ascii_case("content-length") {
                    content_length = value.trim().parse::<usize>().ok();
                }
            }
        }
        let len = content_length.expect("request without Content-Length");
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let (status, reply) = respond(&body, *mode.lock().unwrap(), counters);
        let response = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{reply}",
            reply.len()
        );
        if writer.write_all(response.as_bytes()).is_err() {
            return;
        }
    }
}

/// Positions (1-based) of target, competitor and decoy in a rendered prompt.
fn positions(prompt: &str) -> BTreeMap<&'static str, usize> {
    let mut starts = Vec::new();
    for n in 1..=3 {
        if let Some(i) = prompt.find(&format!("{n}. Pay ")) {
            starts.push((n, i));
        }
    }
    let mut out = BTreeMap::new();
    for (j, &(n, start)) in starts.iter().enumerate() {
        let end = starts.get(j + 1).map(|s| s.1).unwrap_or(prompt.len());
        let text = &prompt[start..end];
        let role = if text.contains("fully offset") {
            "target"
        } else if text.contains("not offset") {
            "competitor"
        } else {
            "decoy"
        };
        out.insert(role, n);
    }
    out
}

fn respond(body: &[u8], mode: Mode, counters: &Counters) -> (&'static str, String) {
    let hit = counters.hits.fetch_add(1, Ordering::SeqCst) + 1;
    let request: serde_json::Value = serde_json::from_slice(body).expect("JSON body");
    let messages = request["messages"].as_array().expect("messages");
    assert_eq!(messages.len(), 2, "one system and one user message");
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    let prompt = messages[1]["content"].as_str().expect("user content");
    let body_hash = hash_str(std::str::from_utf8(body).unwrap());

    match mode {
        Mode::AlwaysUnavailable => return ("503 Service Unavailable", r#"{"error":"down"}"#.into()),
        Mode::Unauthorized => return ("401 Unauthorized", r#"{"error":"bad key"}"#.into()),
        Mode::Flaky => {
            let mut last = counters.last_failed.lock().unwrap();
            let failed_before = last.get(&body_hash).copied().unwrap_or(false);
            let status = if failed_before {
                None
            } else if hit % 7 == 0 {
                Some("503 Service Unavailable")
            } else if hit % 11 == 0 {
                Some("429 Too Many Requests")
            } else {
                None
            };
            last.insert(body_hash, status.is_some());
            if let Some(s) = status {
                counters.injected.fetch_add(1, Ordering::SeqCst);
                return (s, r#"{"error":"try again"}"#.into());
            }
        }
        Mode::Healthy => {}
    }

    let pos = positions(prompt);
    let h = hash_str(prompt);
    let roles: Vec<&'static str> = pos.keys().copied().collect();
    let role = roles[(h % roles.len() as u64) as usize];
    let n = pos[role];
    let text = match (h / 7) % 4 {
        0 => format!("{n}"),
        1 => format!("Option {n}"),
        2 => format!("{n}."),
        _ => format!("I would choose option {n}"),
    };
    counters.ok.fetch_add(1, Ordering::SeqCst);
    *counters.answered.lock().unwrap().entry(role).or_default() += 1;
    let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
    ("200 OK", reply.to_string())
}

fn agent(url: &str, cache: Option<Arc<ResponseCache>>) -> RemoteAgent {
    let config = AgentConfig {
        backend: Backend::RemoteLlm,
        model_name: "stub-model".into(),
        temperature: 0.8,
        max_retries: 3,
        cache_enabled: true,
    };
    let transport = HttpTransport::new(url, "test-key", Duration::from_secs(30));
    let mut a = RemoteAgent::new(config, Arc::new(transport)).unwrap().with_retry(RetryPolicy::no_wait());
    if let Some(c) = cache {
        a = a.with_cache(c);
    }
    a
}

fn tally_matches(t: &ResponseTally, answered: &BTreeMap<&'static str, u64>) -> bool {
    t.n_target == answered.get("target").copied().unwrap_or(0)
        && t.n_competitor == answered.get("competitor").copied().unwrap_or(0)
        && t.n_decoy == answered.get("decoy").copied().unwrap_or(0)
        && t.n_invalid == 0
}

pub fn check() -> Outcome {
    let started = Instant::now();
    let stub = Stub::start();
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("responses.jsonl");
    let plan = SweepPlan {
        master_seed: 77,
        draws: draw_situations(77, 30, &SituationRanges::default()).unwrap(),
        fx: FxTable::default(),
        bottles_per_kg: 50.0,
        schedule: Schedule::default(),
    };
    let expected = plan.schedule.calls_per_cell(plan.draws.len());
    let segment = Segment::parse_key("us_woman_age_lo_inc_hi_concern_notrust").unwrap();
    let grid = DecoyGrid::new(&DEFAULT_AREA1_LADDER).unwrap();
    let cell = Some((7, &grid.cells()[7]));
    let sequential = Executor::new(Execution::Sequential);
    let mut report = Vec::new();
    let mut pass = expected == 3000;

    // Flaky endpoint, file-backed cache.
    stub.set_mode(Mode::Flaky);
    let cache = Arc::new(ResponseCache::open(&cache_path).unwrap());
    let a = agent(&stub.url, Some(cache.clone()));
    let first = run_cell(&plan, &segment, cell, &a, &sequential).unwrap();
    let hits = stub.hits();
    let ok = stub.counters.ok.load(Ordering::SeqCst);
    let injected = stub.counters.injected.load(Ordering::SeqCst);
    let answered = stub.counters.answered.lock().unwrap().clone();
    let matches = tally_matches(&first, &answered);
    let step = ok == expected && hits == expected + injected && injected > 0 && first.total() == expected as u64 && matches;
    pass &= step;
    report.push(format!(
        "flaky run: {hits} HTTP requests = {ok} answered + {injected} injected 503/429 retried; tally T/C/D {}/{}/{} vs stub {:?}: {}",
        first.n_target,
        first.n_competitor,
        first.n_decoy,
        answered,
        if step { "ok" } else { "MISMATCH" }
    ));

    // Same agent again: everything comes from the cache.
    let again = run_cell(&plan, &segment, cell, &a, &sequential).unwrap();
    let step = stub.hits() == hits && again == first;
    pass &= step;
    report.push(format!("repeat with cache: {} new requests, identical tally: {}", stub.hits() - hits, again == first));

    // Fresh process view: reopened cache file, parallel executor.
    drop(a);
    drop(cache);
    let reopened = Arc::new(ResponseCache::open(&cache_path).unwrap());
    let entries = reopened.len();
    let b = agent(&stub.url, Some(reopened));
    let third = run_cell(&plan, &segment, cell, &b, &Executor::new(Execution::with_ceiling(8))).unwrap();
    let step = stub.hits() == hits && third == first && entries == expected;
    pass &= step;
    report.push(format!(
        "reopened cache ({entries} entries), 8 workers: {} new requests, identical tally: {}",
        stub.hits() - hits,
        third == first
    ));

    // Healthy endpoint without cache, 8 workers, adversarial orders on another cell.
    stub.reset();
    stub.set_mode(Mode::Healthy);
    let c = agent(&stub.url, None);
    let other = Some((30, &grid.cells()[30]));
    let par = run_cell(&plan, &segment, other, &c, &Executor::new(Execution::with_ceiling(8))).unwrap();
    let answered = stub.counters.answered.lock().unwrap().clone();
    let step = stub.hits() == expected && tally_matches(&par, &answered);
    pass &= step;
    report.push(format!(
        "parallel uncached run: {} requests; tally T/C/D {}/{}/{} vs stub {:?}",
        stub.hits(),
        par.n_target,
        par.n_competitor,
        par.n_decoy,
        answered
    ));

    // Retry budget: max_retries = 3 means 4 attempts, then an error.
    stub.reset();
    stub.set_mode(Mode::AlwaysUnavailable);
    let d = agent(&stub.url, None);
    let err = run_cell(&plan, &segment, cell, &d, &sequential).err();
    let step = err.is_some() && stub.hits() == 4;
    pass &= step;
    report.push(format!("always-503 endpoint: {} attempts before giving up ({:?})", stub.hits(), err.map(|e| e.to_string())));

    stub.reset();
    stub.set_mode(Mode::Unauthorized);
    let err = run_cell(&plan, &segment, cell, &d, &sequential).err();
    let step = err.is_some() && stub.hits() == 1;
    pass &= step;
    report.push(format!("401 endpoint: {} attempt, not retried", stub.hits()));

    let elapsed = started.elapsed().as_secs_f64();
    pass &= elapsed < 60.0;
    report.push(format!("runtime {elapsed:.1}s (limit 60s)"));
    Outcome::new(pass, format!("{expected} requests per (segment, cell), retries and cache verified")).with_report(report)
}
