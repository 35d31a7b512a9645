//! Completion providers and code extraction.
//!
//! [`HttpProvider`] talks to a chat-completions endpoint. [`ScriptedProvider`]
//! replays canned completions by attempt number and [`ReplayProvider`] reads
//! transcripts archived by an earlier run, refusing any whose prompt digest
//! differs from the prompt being sent.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::Prompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestContext<'a> {
    pub task_id: &'a str,
    /// 1-based attempt number within the task's chain.
    pub attempt: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("no scripted completion for task `{task_id}` attempt {attempt}")]
    ScriptExhausted { task_id: String, attempt: u32 },
    #[error("no recorded transcript at {0}")]
    ReplayMissing(PathBuf),
    #[error("recorded prompt for task `{task_id}` attempt {attempt} differs from the current prompt")]
    ReplayMismatch { task_id: String, attempt: u32 },
}

pub trait Provider: Send + Sync {
    fn complete(&self, ctx: &RequestContext<'_>, prompt: &Prompt) -> Result<String, ProviderError>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("completion is empty")]
    EmptyCompletion,
    #[error("completion opens a code block that never closes")]
    NoCodeBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub raw: String,
    pub code: String,
}

/// Contents of the first fenced code block, or the whole completion when it
/// has no fence at all.
pub fn extract_code(text: &str) -> Result<String, GenerateError> {
    if text.trim().is_empty() {
        return Err(GenerateError::EmptyCompletion);
    }
    let mut lines = text.lines();
    let mut fence = None;
    for line in lines.by_ref() {
        let t = line.trim_start();
        let ticks = t.len() - t.trim_start_matches('`').len();
        if ticks >= 3 {
            fence = Some(&t[..ticks]);
            break;
        }
    }
    let Some(fence) = fence else {
        return Ok(text.to_string());
    };
    let mut code = String::new();
    for line in lines {
        let t = line.trim();
        if t.starts_with(fence) && t.trim_start_matches('`').is_empty() {
            if code.trim().is_empty() {
                return Err(GenerateError::EmptyCompletion);
            }
            return Ok(code);
        }
        code.push_str(line);
        code.push('\n');
    }
    Err(GenerateError::NoCodeBlock)
}

pub fn generate(provider: &dyn Provider, ctx: &RequestContext<'_>, prompt: &Prompt) -> Result<Generation, GenerateError> {
    let raw = provider.complete(ctx, prompt)?;
    let code = extract_code(&raw)?;
    Ok(Generation { raw, code })
}

/// Archived exchange for one attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub task_id: String,
    pub attempt: u32,
    pub strategy: String,
    pub prompt: String,
    pub prompt_digest: String,
    pub completion: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn transcript_path(run_dir: &Path, task_id: &str, attempt: u32) -> PathBuf {
    run_dir.join(task_id).join(format!("attempt_{attempt}.json"))
}

/// Completions fixed in advance, indexed by task and attempt.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    scripts: HashMap<String, Vec<String>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(scripts: HashMap<String, Vec<String>>) -> Self {
        ScriptedProvider {
            scripts,
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads `<dir>/<task_id>/attempt_<n>.md` files.
    pub fn from_dir(dir: &Path) -> Result<Self, ProviderError> {
        let cfg = |e: std::io::Error| ProviderError::Config(format!("{}: {e}", dir.display()));
        let mut scripts = HashMap::new();
        for entry in std::fs::read_dir(dir).map_err(cfg)? {
            let entry = entry.map_err(cfg)?;
            if !entry.file_type().map_err(cfg)?.is_dir() {
                continue;
            }
            let task_id = entry.file_name().to_string_lossy().into_owned();
            let mut numbered = Vec::new();
            for f in std::fs::read_dir(entry.path()).map_err(cfg)? {
                let path = f.map_err(cfg)?.path();
                let n = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_prefix("attempt_"))
                    .and_then(|n| n.strip_suffix(".md"))
                    .and_then(|n| n.parse::<u32>().ok());
                if let Some(n) = n {
                    numbered.push((n, std::fs::read_to_string(&path).map_err(cfg)?));
                }
            }
            numbered.sort();
            if numbered.iter().enumerate().any(|(i, (n, _))| *n as usize != i + 1) {
                return Err(ProviderError::Config(format!("attempt files for `{task_id}` are not numbered 1..n")));
            }
            scripts.insert(task_id, numbered.into_iter().map(|(_, s)| s).collect());
        }
        Ok(ScriptedProvider::new(scripts))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, ctx: &RequestContext<'_>, _prompt: &Prompt) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.scripts
            .get(ctx.task_id)
            .and_then(|s| s.get(ctx.attempt as usize - 1))
            .cloned()
            .ok_or_else(|| ProviderError::ScriptExhausted {
                task_id: ctx.task_id.to_string(),
                attempt: ctx.attempt,
            })
    }
}

/// Serves completions from a previous run's transcript archive.
#[derive(Debug)]
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: &Path) -> Result<Self, ProviderError> {
        if !dir.is_dir() {
            return Err(ProviderError::Config(format!(
                "replay directory {} does not exist",
                dir.display()
            )));
        }
        Ok(ReplayProvider { dir: dir.to_path_buf() })
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, ctx: &RequestContext<'_>, prompt: &Prompt) -> Result<String, ProviderError> {
        let path = transcript_path(&self.dir, ctx.task_id, ctx.attempt);
        let text = std::fs::read_to_string(&path).map_err(|_| ProviderError::ReplayMissing(path.clone()))?;
        let t: Transcript = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        if t.prompt_digest != prompt.digest() {
            return Err(ProviderError::ReplayMismatch {
                task_id: ctx.task_id.to_string(),
                attempt: ctx.attempt,
            });
        }
        Ok(t.completion)
    }
}

fn default_key_env() -> String {
    "SIMCODER_API_KEY".into()
}
fn default_retries() -> u32 {
    4
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_backoff_max_ms() -> u64 {
    16_000
}
fn default_retry_after_cap() -> f64 {
    60.0
}
fn default_timeout() -> u64 {
    120
}
fn default_in_flight() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Sampling seed forwarded to endpoints that accept one.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_initial_ms: u64,
    #[serde(default = "default_backoff_max_ms")]
    pub backoff_max_ms: u64,
    /// Longest `Retry-After` wait honored, in seconds.
    #[serde(default = "default_retry_after_cap")]
    pub retry_after_cap_s: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub min_interval_ms: u64,
}

/// Provider section of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    Http(HttpConfig),
    Scripted { script_dir: PathBuf },
}

impl ProviderConfig {
    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        toml::from_str(text).map_err(|e| ProviderError::Config(e.to_string()))
    }
}

/// Caps concurrent requests and spaces their starts.
#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    min_interval: Duration,
    state: Mutex<(usize, Option<Instant>)>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a RateLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().unwrap().0 -= 1;
        self.0.freed.notify_one();
    }
}

impl RateLimiter {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Self {
        RateLimiter {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            state: Mutex::new((0, None)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        loop {
            if st.0 < self.max_in_flight {
                let now = Instant::now();
                match st.1.map(|last| last + self.min_interval) {
                    Some(ready) if ready > now => {
                        st = self.freed.wait_timeout(st, ready - now).unwrap().0;
                    }
                    _ => {
                        st.0 += 1;
                        st.1 = Some(now);
                        return Permit(self);
                    }
                }
            } else {
                st = self.freed.wait(st).unwrap();
            }
        }
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpProvider {
    /// Reads the credential from the configured environment variable.
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| ProviderError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(Self::with_key(config, api_key))
    }

    pub fn with_key(config: HttpConfig, api_key: String) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(config.timeout_s)))
                .build(),
        );
        let limiter = RateLimiter::new(config.max_in_flight, Duration::from_millis(config.min_interval_ms));
        HttpProvider {
            config,
            api_key,
            agent,
            limiter,
        }
    }

    fn request_body(&self, prompt: &Prompt) -> String {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system_preamble},
                {"role": "user", "content": prompt.user_text()},
            ],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        if let Some(seed) = self.config.seed {
            body["seed"] = serde_json::json!(seed);
        }
        body.to_string()
    }

    fn backoff(&self, retry: u32, retry_after: Option<f64>) -> Duration {
        let secs = match retry_after {
            Some(s) => s.min(self.config.retry_after_cap_s),
            None => {
                let ms = self
                    .config
                    .backoff_initial_ms
                    .saturating_mul(1u64 << retry.min(20))
                    .min(self.config.backoff_max_ms);
                ms as f64 / 1000.0
            }
        };
        Duration::from_secs_f64(secs.max(0.0))
    }
}

fn parse_completion(body: &str) -> Result<String, ProviderError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
    v["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
}

impl Provider for HttpProvider {
    fn complete(&self, ctx: &RequestContext<'_>, prompt: &Prompt) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.request_body(prompt);
        let mut retry = 0;
        loop {
            let (status, retry_after, text) = {
                let _permit = self.limiter.acquire();
                let mut resp = self
                    .agent
                    .post(&url)
                    .header("Authorization", format!("Bearer {}", self.api_key))
                    .header("Content-Type", "application/json")
                    .send(body.as_str())
                    .map_err(|e| ProviderError::Transport(e.to_string()))?;
                let status = resp.status().as_u16();
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<f64>().ok());
                let text = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| ProviderError::Transport(e.to_string()))?;
                (status, retry_after, text)
            };
            if status == 200 {
                return parse_completion(&text);
            }
            let retryable = status == 429 || (500..600).contains(&status);
            if !retryable || retry >= self.config.max_retries {
                return Err(ProviderError::Http { status, body: text });
            }
            let wait = self.backoff(retry, retry_after);
            log::warn!(
                "task {} attempt {}: HTTP {status}, retrying in {:.3}s",
                ctx.task_id,
                ctx.attempt,
                wait.as_secs_f64()
            );
            std::thread::sleep(wait);
            retry += 1;
        }
    }
}

/// Builds the provider a config file describes. Relative script directories
/// resolve against `base_dir`.
pub fn provider_from_config(config: ProviderConfig, base_dir: &Path) -> Result<Box<dyn Provider>, ProviderError> {
    Ok(match config {
        ProviderConfig::Http(c) => Box::new(HttpProvider::new(c)?),
        ProviderConfig::Scripted { script_dir } => Box::new(ScriptedProvider::from_dir(&base_dir.join(script_dir))?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::prompt::{build_prompt, PromptStrategy};
    use crate::agent::task::{Granularity, TargetModule, Task, TestVector};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn prompt() -> Prompt {
        let task = Task {
            task_id: "t".into(),
            description: "d".into(),
            target_module: TargetModule::Mapping,
            granularity: Granularity::Function,
            kernel: "fold_cycles".into(),
            exemplars: vec![],
            test_vectors: vec![TestVector { input: "a=1".into(), expected: "b=1".into() }],
        };
        build_prompt(PromptStrategy::ZeroShot, &task, "spec").unwrap()
    }

    #[test]
    fn extraction_rules() {
        assert_eq!(extract_code("print(1)\n").unwrap(), "print(1)\n");
        assert_eq!(extract_code("Here:\n```python\nx = 1\n```\nbye").unwrap(), "x = 1\n");
        assert_eq!(extract_code("```\na\n```\n```\nb\n```").unwrap(), "a\n");
        assert_eq!(extract_code("````\n```\n````").unwrap(), "```\n");
        assert_eq!(extract_code("  \n"), Err(GenerateError::EmptyCompletion));
        assert_eq!(extract_code("```py\nx = 1\n"), Err(GenerateError::NoCodeBlock));
    }

    #[test]
    fn scripted_by_attempt() {
        let p = ScriptedProvider::new(HashMap::from([("t".to_string(), vec!["a".into(), "b".into()])]));
        let pr = prompt();
        assert_eq!(p.complete(&RequestContext { task_id: "t", attempt: 2 }, &pr).unwrap(), "b");
        assert!(matches!(
            p.complete(&RequestContext { task_id: "t", attempt: 3 }, &pr),
            Err(ProviderError::ScriptExhausted { .. })
        ));
        assert_eq!(p.calls(), 2);
        let g = generate(&p, &RequestContext { task_id: "t", attempt: 1 }, &pr).unwrap();
        assert_eq!(g.code, "a");
    }

    #[test]
    fn replay_checks_digest() {
        let dir = tempfile::tempdir().unwrap();
        let pr = prompt();
        let t = Transcript {
            task_id: "t".into(),
            attempt: 1,
            strategy: "zero_shot".into(),
            prompt: pr.render(),
            prompt_digest: pr.digest(),
            completion: "done".into(),
            started_unix_ms: 0,
            finished_unix_ms: 0,
        };
        let path = transcript_path(dir.path(), "t", 1);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string(&t).unwrap()).unwrap();
        let rp = ReplayProvider::new(dir.path()).unwrap();
        assert_eq!(rp.complete(&RequestContext { task_id: "t", attempt: 1 }, &pr).unwrap(), "done");
        let mut other = pr.clone();
        other.arch_spec = "changed".into();
        assert!(matches!(
            rp.complete(&RequestContext { task_id: "t", attempt: 1 }, &other),
            Err(ProviderError::ReplayMismatch { .. })
        ));
        assert!(matches!(
            rp.complete(&RequestContext { task_id: "t", attempt: 2 }, &pr),
            Err(ProviderError::ReplayMissing(_))
        ));
        assert!(ReplayProvider::new(&dir.path().join("nope")).is_err());
    }

    #[test]
    fn provider_config_parses() {
        let c = ProviderConfig::parse("kind = \"http\"\nbase_url = \"http://x\"\nmodel = \"m\"\n").unwrap();
        match c {
            ProviderConfig::Http(h) => {
                assert_eq!(h.api_key_env, "SIMCODER_API_KEY");
                assert_eq!(h.max_retries, 4);
            }
            _ => panic!("expected http"),
        }
        assert!(ProviderConfig::parse("kind = \"carrier-pigeon\"").is_err());
    }

    /// Serves canned `(status, extra headers, body)` responses, one per
    /// connection, and reports how many requests arrived.
    fn stub_server(responses: Vec<(u16, &'static str, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for (status, headers, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n{headers}\r\n{body}",
                    body.len()
                )
                .unwrap();
                served += 1;
            }
            served
        });
        (url, handle)
    }

    fn http_config(url: &str) -> HttpConfig {
        HttpConfig {
            base_url: url.to_string(),
            model: "m".into(),
            api_key_env: "UNUSED".into(),
            temperature: None,
            seed: Some(7),
            max_retries: 2,
            backoff_initial_ms: 1,
            backoff_max_ms: 5,
            retry_after_cap_s: 0.05,
            timeout_s: 10,
            max_in_flight: 1,
            min_interval_ms: 0,
        }
    }

    #[test]
    fn retries_429_honoring_capped_retry_after() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"```\nprint(2)\n```"}}]}"#.to_string();
        let (url, server) = stub_server(vec![
            (429, "Retry-After: 30\r\n", "slow down".into()),
            (503, "", "busy".into()),
            (200, "Content-Type: application/json\r\n", ok),
        ]);
        let p = HttpProvider::with_key(http_config(&url), "k".into());
        let start = Instant::now();
        let g = generate(&p, &RequestContext { task_id: "t", attempt: 1 }, &prompt()).unwrap();
        assert_eq!(g.code, "print(2)\n");
        assert!(start.elapsed() < Duration::from_secs(5), "retry-after cap ignored");
        assert_eq!(server.join().unwrap(), 3);
    }

    #[test]
    fn gives_up_after_retry_cap() {
        let (url, server) = stub_server(vec![(429, "Retry-After: 0\r\n", "no".into()); 3]);
        let p = HttpProvider::with_key(http_config(&url), "k".into());
        let err = p.complete(&RequestContext { task_id: "t", attempt: 1 }, &prompt()).unwrap_err();
        assert_eq!(err, ProviderError::Http { status: 429, body: "no".into() });
        assert_eq!(server.join().unwrap(), 3);
    }

    #[test]
    fn client_errors_not_retried() {
        let (url, server) = stub_server(vec![(401, "", "bad key".into())]);
        let p = HttpProvider::with_key(http_config(&url), "k".into());
        let err = p.complete(&RequestContext { task_id: "t", attempt: 1 }, &prompt()).unwrap_err();
        assert!(matches!(err, ProviderError::Http { status: 401, .. }));
        assert_eq!(server.join().unwrap(), 1);
    }

    #[test]
    fn limiter_spaces_requests() {
        let l = RateLimiter::new(1, Duration::from_millis(20));
        let start = Instant::now();
        for _ in 0..3 {
            drop(l.acquire());
        }
        assert!(start.elapsed() >= Duration::from_millis(40));
    }
}
