//! Per-generation hyperparameter supervision.
//!
//! The advisor sees the trailing window of generation reports and proposes
//! the next [`HyperParams`]. Sources: a deterministic rule-based policy, a
//! chat-completion endpoint, or a replay of a previously recorded audit log.
//! Every path ends in a clamp, and every failure falls back to the current
//! parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::evolution::{GenerationReport, HyperParams, MaterialMultipliers};

pub const ADVISOR_SCHEMA_VERSION: &str = "voxevo-advisor/1";
/// Environment variable holding the endpoint credential.
pub const LLM_KEY_ENV: &str = "VOXEVO_LLM_KEY";

/// Diversity below which the scripted policy boosts mutation.
pub const LOW_DIVERSITY: f64 = 0.05;
/// Best-fitness improvement (m) under which the scripted policy counts a stall.
pub const STALL_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("reply contains no JSON object")]
    NoJsonObject,
    #[error("reply is missing key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{0}` is not a number")]
    NotNumeric(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("malformed response: {0}")]
    Response(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorRequest {
    /// Up to three consecutive reports, oldest first.
    pub window: Vec<GenerationReport>,
    pub current_params: HyperParams,
    pub schema_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplySource {
    #[serde(rename = "llm")]
    Llm,
    #[serde(rename = "scripted")]
    Scripted,
    #[serde(rename = "fallback-previous")]
    FallbackPrevious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorReply {
    pub params: HyperParams,
    pub rationale: String,
    pub source: ReplySource,
}

impl AdvisorReply {
    fn fallback(req: &AdvisorRequest, why: impl Into<String>) -> Self {
        Self {
            params: req.current_params.clamped(),
            rationale: why.into(),
            source: ReplySource::FallbackPrevious,
        }
    }
}

pub trait Advisor: Send {
    fn advise(&mut self, req: &AdvisorRequest) -> AdvisorReply;
}

const PREAMBLE: &str = "You supervise a genetic algorithm that co-designs the body and control of \
voxel-based soft robots. Each generation you receive recent population statistics and choose \
the hyperparameters for the next generation. Fitness is horizontal distance travelled in metres; \
diversity is the mean pairwise fraction of voxels whose material differs (0 to 1).";

/// Deterministic prompt for a request: preamble, one table row per report
/// (oldest first), current parameters, and the reply instruction.
pub fn build_prompt(req: &AdvisorRequest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PREAMBLE}");
    let _ = writeln!(out);
    let _ = writeln!(out, "Schema: {}", req.schema_version);
    let _ = writeln!(out, "Recent generations (oldest first):");
    let _ = writeln!(
        out,
        "generation,mutation_rate,mutation_scale,crossover_rate,elite_fraction,best_fitness,mean_fitness,std_fitness,diversity"
    );
    for r in &req.window {
        let p = &r.params;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e},{:.6e},{:.6}",
            r.generation,
            p.mutation_rate,
            p.mutation_scale,
            p.crossover_rate,
            p.elite_fraction,
            r.best_fitness,
            r.mean_fitness,
            r.std_fitness,
            r.diversity
        );
    }
    let p = &req.current_params;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Current parameters: mutation_rate={:.6}, mutation_scale={:.6}, crossover_rate={:.6}, elite_fraction={:.6}",
        p.mutation_rate, p.mutation_scale, p.crossover_rate, p.elite_fraction
    );
    let _ = writeln!(
        out,
        "Allowed ranges: mutation_rate [0.001, 1], mutation_scale [0.001, 1], crossover_rate [0, 1], elite_fraction [0.05, 0.9]."
    );
    let _ = writeln!(out);
    let _ = write!(
        out,
        "Reply with a single JSON object with exactly the keys \"mutation_rate\", \"mutation_scale\", \
\"crossover_rate\" and \"elite_fraction\" (numbers). You may add \"material_multipliers\" with keys \
\"muscle_expand\", \"muscle_contract\", \"soft_tissue\", \"hard_bone\" in [0.1, 10]."
    );
    out
}

/// Finds the first JSON object embedded in `text`.
fn first_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn number(map: &serde_json::Map<String, Value>, key: &'static str) -> Result<f64, ParseError> {
    match map.get(key) {
        None => Err(ParseError::MissingKey(key)),
        Some(v) => v.as_f64().ok_or_else(|| ParseError::NotNumeric(key.to_string())),
    }
}

/// Extracts and clamps hyperparameters from free text. Unknown keys are
/// ignored; `material_multipliers` is read only when `allow_materials` is set
/// (missing entries default to 1).
pub fn parse_reply(text: &str, allow_materials: bool) -> Result<HyperParams, ParseError> {
    let map = first_json_object(text).ok_or(ParseError::NoJsonObject)?;
    let mut params = HyperParams {
        mutation_rate: number(&map, "mutation_rate")?,
        mutation_scale: number(&map, "mutation_scale")?,
        crossover_rate: number(&map, "crossover_rate")?,
        elite_fraction: number(&map, "elite_fraction")?,
        material_multipliers: None,
    };
    if allow_materials {
        if let Some(m) = map.get("material_multipliers") {
            let m = m
                .as_object()
                .ok_or_else(|| ParseError::NotNumeric("material_multipliers".into()))?;
            let field = |key: &str| -> Result<f64, ParseError> {
                match m.get(key) {
                    None => Ok(1.0),
                    Some(v) => v
                        .as_f64()
                        .ok_or_else(|| ParseError::NotNumeric(format!("material_multipliers.{key}"))),
                }
            };
            params.material_multipliers = Some(MaterialMultipliers {
                muscle_expand: field("muscle_expand")?,
                muscle_contract: field("muscle_contract")?,
                soft_tissue: field("soft_tissue")?,
                hard_bone: field("hard_bone")?,
            });
        }
    }
    Ok(params.clamped())
}

/// Rule-based policy.
///
/// * latest diversity below [`LOW_DIVERSITY`]: mutation rate and scale ×1.5;
/// * a full window whose best fitness improved by less than
///   [`STALL_EPSILON`]: crossover rate ×1.25.
pub fn scripted_advisor(req: &AdvisorRequest) -> AdvisorReply {
    let mut params = req.current_params;
    let mut fired = Vec::new();
    if let Some(latest) = req.window.last() {
        if latest.diversity < LOW_DIVERSITY {
            params.mutation_rate *= 1.5;
            params.mutation_scale *= 1.5;
            fired.push("low diversity: mutation x1.5");
        }
    }
    if let (Some(first), Some(last)) = (req.window.first(), req.window.last()) {
        if req.window.len() >= crate::evolution::ADVISOR_WINDOW
            && last.best_fitness - first.best_fitness < STALL_EPSILON
        {
            params.crossover_rate *= 1.25;
            fired.push("stalled best fitness: crossover x1.25");
        }
    }
    AdvisorReply {
        params: params.clamped(),
        rationale: if fired.is_empty() {
            "no rule fired".to_string()
        } else {
            fired.join("; ")
        },
        source: ReplySource::Scripted,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedAdvisor;

impl Advisor for ScriptedAdvisor {
    fn advise(&mut self, req: &AdvisorRequest) -> AdvisorReply {
        scripted_advisor(req)
    }
}

/// Retries after the first attempt, with delays `base, 2·base, 4·base, …`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub api_key: Option<String>,
    pub allow_material_updates: bool,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    /// Chat-completion request body for a prompt.
    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": PREAMBLE},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.temperature,
        })
    }
}

/// Something that can POST a JSON body and return the response text.
pub trait Transport: Send {
    fn post(
        &mut self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<String, TransportError>;
}

/// Blocking HTTP transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(
        &mut self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<String, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| TransportError::Request(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Response(e.to_string()))
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion response; any
/// other body is returned as-is so the JSON extractor can still try it.
pub fn completion_content(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .map(str::to_owned)
        })
        .unwrap_or_else(|| body.to_string())
}

/// One line of the JSON-lines audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Generation index of the newest report in the window.
    pub generation: u64,
    pub attempt: u32,
    pub prompt: String,
    pub raw_reply: Option<String>,
    pub outcome: String,
    pub params: Option<HyperParams>,
    pub source: Option<ReplySource>,
    /// Set on the attempt that decided the reply.
    #[serde(rename = "final")]
    pub is_final: bool,
}

#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &AuditEntry) -> std::io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
        writeln!(f, "{line}")
    }

    pub fn read(path: &Path) -> std::io::Result<Vec<AuditEntry>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
        Ok(out)
    }
}

/// Chat-completion advisor with bounded retries and fallback.
pub struct LlmAdvisor<T: Transport> {
    pub endpoint: EndpointConfig,
    transport: T,
    audit: Option<AuditLog>,
    sleep: fn(Duration),
}

impl<T: Transport> LlmAdvisor<T> {
    pub fn new(endpoint: EndpointConfig, transport: T) -> Self {
        Self {
            endpoint,
            transport,
            audit: None,
            sleep: std::thread::sleep,
        }
    }

    pub fn with_audit(mut self, log: AuditLog) -> Self {
        self.audit = Some(log);
        self
    }

    /// Replaces the backoff sleep, e.g. with a no-op in tests.
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn record(&self, entry: AuditEntry) {
        if let Some(log) = &self.audit {
            // Audit failures must not stall the run.
            let _ = log.append(&entry);
        }
    }
}

impl<T: Transport> Advisor for LlmAdvisor<T> {
    fn advise(&mut self, req: &AdvisorRequest) -> AdvisorReply {
        llm_advisor(self, req)
    }
}

/// Sends the prompt, retrying on transport or parse failure, and falls back to
/// the current parameters once retries are exhausted.
pub fn llm_advisor<T: Transport>(advisor: &mut LlmAdvisor<T>, req: &AdvisorRequest) -> AdvisorReply {
    let prompt = build_prompt(req);
    let body = advisor.endpoint.request_body(&prompt);
    let generation = req.window.last().map_or(0, |r| r.generation);
    let attempts = advisor.endpoint.retry.max_retries + 1;
    let mut last_error = String::new();

    for attempt in 0..attempts {
        if attempt > 0 {
            (advisor.sleep)(advisor.endpoint.retry.delay(attempt));
        }
        let is_last = attempt + 1 == attempts;
        let key = advisor.endpoint.api_key.clone();
        let sent = advisor
            .transport
            .post(&advisor.endpoint.url, key.as_deref(), &body, advisor.endpoint.timeout);
        let (raw, outcome) = match sent {
            Err(e) => (None, Err(format!("transport_error: {e}"))),
            Ok(raw) => {
                let content = completion_content(&raw);
                match parse_reply(&content, advisor.endpoint.allow_material_updates) {
                    Ok(params) => (Some(raw), Ok((params, content))),
                    Err(e) => (Some(raw), Err(format!("parse_error: {e}"))),
                }
            }
        };
        match outcome {
            Ok((params, content)) => {
                advisor.record(AuditEntry {
                    generation,
                    attempt,
                    prompt: prompt.clone(),
                    raw_reply: raw,
                    outcome: "accepted".into(),
                    params: Some(params),
                    source: Some(ReplySource::Llm),
                    is_final: true,
                });
                return AdvisorReply {
                    params,
                    rationale: content,
                    source: ReplySource::Llm,
                };
            }
            Err(e) => {
                let reply = AdvisorReply::fallback(req, e.clone());
                advisor.record(AuditEntry {
                    generation,
                    attempt,
                    prompt: prompt.clone(),
                    raw_reply: raw,
                    outcome: e.clone(),
                    params: is_last.then_some(reply.params),
                    source: is_last.then_some(ReplySource::FallbackPrevious),
                    is_final: is_last,
                });
                last_error = e;
            }
        }
    }
    AdvisorReply::fallback(req, last_error)
}

/// Replays the decisions recorded in an audit log, keyed by generation.
#[derive(Debug, Clone, Default)]
pub struct ReplayAdvisor {
    decisions: BTreeMap<u64, (HyperParams, ReplySource)>,
}

impl ReplayAdvisor {
    pub fn from_entries(entries: &[AuditEntry]) -> Self {
        let decisions = entries
            .iter()
            .filter(|e| e.is_final)
            .filter_map(|e| Some((e.generation, (e.params?, e.source?))))
            .collect();
        Self { decisions }
    }

    pub fn open(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_entries(&AuditLog::read(path)?))
    }
}

impl Advisor for ReplayAdvisor {
    fn advise(&mut self, req: &AdvisorRequest) -> AdvisorReply {
        let generation = req.window.last().map_or(0, |r| r.generation);
        match self.decisions.get(&generation) {
            Some(&(_, ReplySource::FallbackPrevious)) => AdvisorReply::fallback(req, "replayed fallback"),
            Some(&(params, source)) => AdvisorReply {
                params: params.clamped(),
                rationale: "replayed".into(),
                source,
            },
            None => AdvisorReply::fallback(req, format!("no recorded decision for generation {generation}")),
        }
    }
}
