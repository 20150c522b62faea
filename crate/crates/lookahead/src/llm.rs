//! Chat-completions backend: the only module that touches the network.
//!
//! Speaks the de-facto chat-completions JSON protocol so it works against
//! hosted gateways and local stubs alike. Visual feedback travels as base64
//! SVG data URLs, one image part per observation that produced one. The
//! model's reply is parsed by taking the first fenced code block as the
//! action and the text before it as the thought; later blocks are ignored.
//!
//! The API key is read from a named environment variable at request time
//! and exists only in the outgoing auth header. Logged requests, responses,
//! and error strings pass through `scrub`, so the key never reaches traces
//! or logs.

use crate::agents::{
    AgentBackend, AgentConcurrency, AgentError, CandidateView, ProposalContext, VoteContext,
    VoterBackend, VoterError,
};
use crate::env::EnvKind;
use crate::trace::{Action, ActionBody, Observation, ReasoningStep, Rollout, Thought};
use base64::Engine as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("endpoint misconfigured: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("unparseable reply: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key value
    /// itself is never stored.
    pub api_key_env_var: String,
    pub timeout: Duration,
    /// Retries after the initial attempt, on transport errors, 429 and 5xx.
    pub max_retries: u32,
    /// Initial backoff, doubled after each retry.
    pub backoff: Duration,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8080/v1".into(),
            model_name: "local-model".into(),
            api_key_env_var: "LOOKAHEAD_API_KEY".into(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_secs(2),
        }
    }
}

impl EndpointConfig {
    fn validate(&self) -> Result<(), LlmError> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(LlmError::Config(format!(
                "base_url must be an http(s) URL, got {:?}",
                self.base_url
            )));
        }
        if self.model_name.is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        Ok(())
    }
}

/// Prompt scaffolds. `{task}`, `{history}`, `{observation_text}` and
/// `{image_slot}` are resolved in the propose scaffold; the vote scaffold
/// uses `{task}`, `{history}`, `{candidate}` and `{rollout}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub system_text: String,
    pub propose: String,
    pub vote: String,
}

impl TemplateSet {
    /// The scaffolds compiled into the binary.
    pub fn embedded() -> Self {
        TemplateSet {
            system_text: include_str!("../templates/system.txt").to_string(),
            propose: include_str!("../templates/propose.txt").to_string(),
            vote: include_str!("../templates/vote.txt").to_string(),
        }
    }

    /// Loads overrides from a directory. For each scaffold the most
    /// specific existing file wins: `propose_nav.txt`, then `propose.txt`,
    /// then the embedded default; likewise for `vote` and `system`.
    pub fn from_dir(dir: &std::path::Path, kind: Option<EnvKind>) -> std::io::Result<Self> {
        let pick = |stem: &str, fallback: &str| -> std::io::Result<String> {
            if let Some(kind) = kind {
                let specific = dir.join(format!("{stem}_{}.txt", kind.as_str()));
                if specific.is_file() {
                    return std::fs::read_to_string(specific);
                }
            }
            let generic = dir.join(format!("{stem}.txt"));
            if generic.is_file() {
                return std::fs::read_to_string(generic);
            }
            Ok(fallback.to_string())
        };
        let embedded = TemplateSet::embedded();
        Ok(TemplateSet {
            system_text: pick("system", &embedded.system_text)?,
            propose: pick("propose", &embedded.propose)?,
            vote: pick("vote", &embedded.vote)?,
        })
    }
}

/// Replaces every occurrence of the secret with a placeholder. Applied to
/// anything that leaves this module as text: log lines and error messages.
pub fn scrub(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[redacted]")
    }
}

fn step_text(step: &ReasoningStep) -> String {
    format!(
        "step {}\nthought: {}\naction: {}\nobservation: {}",
        step.index, step.thought.text, step.action.raw_text, step.observation.text_feedback
    )
}

fn rollout_text(rollout: &Rollout) -> String {
    let mut out = String::new();
    for step in &rollout.suffix.steps {
        out.push_str(&step_text(step));
        out.push('\n');
    }
    out.push_str(&format!(
        "outcome: {} ({})",
        rollout.outcome.kind.as_str(),
        rollout.outcome.final_state_digest
    ));
    out
}

fn image_part(svg: &str) -> serde_json::Value {
    let encoded = base64::engine::general_purpose::STANDARD.encode(svg.as_bytes());
    serde_json::json!({
        "type": "image_url",
        "image_url": { "url": format!("data:image/svg+xml;base64,{encoded}") }
    })
}

fn text_part(text: &str) -> serde_json::Value {
    serde_json::json!({ "type": "text", "text": text })
}

/// Builds the chat message list for a proposal: system text, then one user
/// message whose parts interleave history text with one image per
/// observation that carried visual feedback. Deterministic in its inputs.
pub fn compose_propose_messages(
    templates: &TemplateSet,
    task_description: &str,
    initial_observation: &Observation,
    steps: &[ReasoningStep],
) -> serde_json::Value {
    let current = steps
        .last()
        .map(|s| &s.observation)
        .unwrap_or(initial_observation);
    let rendered = templates
        .propose
        .replace("{task}", task_description)
        .replace("{observation_text}", &current.text_feedback);

    let mut parts: Vec<serde_json::Value> = Vec::new();
    let (head, tail) = match rendered.split_once("{history}") {
        Some(pair) => pair,
        None => ("", rendered.as_str()),
    };
    if !head.is_empty() {
        parts.push(text_part(head));
    }

    // History: the initial observation plus every step except the latest,
    // whose observation is the one being reacted to.
    if !steps.is_empty() {
        let mut items: Vec<(String, Option<&String>)> = Vec::new();
        items.push((
            format!("initial observation: {}", initial_observation.text_feedback),
            initial_observation.visual_feedback.as_ref(),
        ));
        for step in &steps[..steps.len() - 1] {
            items.push((step_text(step), step.observation.visual_feedback.as_ref()));
        }
        if let Some(last) = steps.last() {
            items.push((
                format!(
                    "step {}\nthought: {}\naction: {}",
                    last.index, last.thought.text, last.action.raw_text
                ),
                None,
            ));
        }
        for (text, visual) in items {
            parts.push(text_part(&text));
            if let Some(svg) = visual {
                parts.push(image_part(svg));
            }
        }
    }

    match tail.split_once("{image_slot}") {
        Some((before, after)) => {
            if !before.is_empty() {
                parts.push(text_part(before));
            }
            if let Some(svg) = &current.visual_feedback {
                parts.push(image_part(svg));
            }
            if !after.is_empty() {
                parts.push(text_part(after));
            }
        }
        None => {
            if !tail.is_empty() {
                parts.push(text_part(tail));
            }
            if let Some(svg) = &current.visual_feedback {
                parts.push(image_part(svg));
            }
        }
    }

    serde_json::json!([
        { "role": "system", "content": templates.system_text },
        { "role": "user", "content": parts }
    ])
}

fn compose_vote_messages(
    templates: &TemplateSet,
    task_description: &str,
    committed: &[ReasoningStep],
    candidate: &CandidateView<'_>,
) -> serde_json::Value {
    let history = if committed.is_empty() {
        "(none)".to_string()
    } else {
        committed.iter().map(step_text).collect::<Vec<_>>().join("\n")
    };
    let rendered = templates
        .vote
        .replace("{task}", task_description)
        .replace("{history}", &history)
        .replace("{candidate}", &step_text(candidate.step))
        .replace("{rollout}", &rollout_text(candidate.rollout));
    serde_json::json!([
        { "role": "system", "content": templates.system_text },
        { "role": "user", "content": [ text_part(&rendered) ] }
    ])
}

/// First fenced code block in the reply, with any language tag stripped,
/// plus the text preceding the fence. Later blocks are ignored.
fn first_fenced_block(reply: &str) -> Option<(&str, String)> {
    let open = reply.find("```")?;
    let before = &reply[..open];
    let rest = &reply[open + 3..];
    let body_start = rest.find('\n').map(|n| n + 1).unwrap_or(0);
    // A language tag occupies the fence line; without a newline the block
    // is bare like ```{...}```.
    let body = &rest[body_start..];
    let close = body.find("```")?;
    let mut block = body[..close].trim().to_string();
    if body_start == 0 {
        block = rest[..rest.find("```")?].trim().to_string();
    }
    Some((before, block))
}

/// Parses a proposal reply: first fenced block becomes the action, the text
/// before it the thought.
pub fn parse_proposal_reply(reply: &str) -> Result<(Thought, Action), LlmError> {
    let (before, block) = first_fenced_block(reply)
        .ok_or_else(|| LlmError::Parse("reply contains no fenced block".into()))?;
    let body = ActionBody::from_wire_text(&block)
        .map_err(|e| LlmError::Parse(format!("fenced block is not an action: {e}")))?;
    Ok((
        Thought::new(before.trim()),
        Action::with_raw(body, block),
    ))
}

/// Parses a vote reply: first fenced block must be `{"score": x}` with
/// x in [0, 1].
pub fn parse_vote_reply(reply: &str) -> Result<f64, LlmError> {
    let (_, block) = first_fenced_block(reply)
        .ok_or_else(|| LlmError::Parse("reply contains no fenced block".into()))?;
    let value: serde_json::Value = serde_json::from_str(&block)
        .map_err(|e| LlmError::Parse(format!("fenced block is not JSON: {e}")))?;
    let score = value
        .get("score")
        .and_then(|s| s.as_f64())
        .ok_or_else(|| LlmError::Parse("fenced block has no numeric \"score\"".into()))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(LlmError::Parse(format!("score {score} is outside [0, 1]")));
    }
    Ok(score)
}

/// Blocking chat-completions client with retry and scrubbed debug logging.
pub struct LlmClient {
    endpoint: EndpointConfig,
    http: reqwest::blocking::Client,
    retries: AtomicU64,
}

impl LlmClient {
    pub fn new(endpoint: EndpointConfig) -> Result<Self, LlmError> {
        endpoint.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(LlmClient {
            endpoint,
            http,
            retries: AtomicU64::new(0),
        })
    }

    /// Retries performed across the client's lifetime.
    pub fn retries_recorded(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn secret(&self) -> String {
        std::env::var(&self.endpoint.api_key_env_var).unwrap_or_default()
    }

    /// Sends one completion request, retrying on transport errors, 429 and
    /// 5xx with exponential backoff. Returns the assistant message text.
    pub fn complete(
        &self,
        messages: &serde_json::Value,
        temperature: f64,
    ) -> Result<String, LlmError> {
        let url = format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        );
        let body = serde_json::json!({
            "model": self.endpoint.model_name,
            "temperature": temperature,
            "messages": messages,
        });
        let secret = self.secret();
        log::debug!(
            "llm request to {url}: {}",
            scrub(&body.to_string(), &secret)
        );

        let mut backoff = self.endpoint.backoff;
        let mut last_error = LlmError::Transport("no attempt made".into());
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
                self.retries.fetch_add(1, Ordering::Relaxed);
            }
            let mut request = self.http.post(&url).json(&body);
            if !secret.is_empty() {
                request = request.header("authorization", format!("Bearer {secret}"));
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().unwrap_or_default();
                    log::debug!("llm response {status}: {}", scrub(&text, &secret));
                    if status.as_u16() == 429 {
                        last_error = LlmError::RateLimited(scrub(&text, &secret));
                        continue;
                    }
                    if status.is_server_error() {
                        last_error =
                            LlmError::Transport(format!("{status}: {}", scrub(&text, &secret)));
                        continue;
                    }
                    if !status.is_success() {
                        // Client errors are deterministic; retrying only
                        // repeats them.
                        return Err(LlmError::Transport(format!(
                            "{status}: {}",
                            scrub(&text, &secret)
                        )));
                    }
                    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                        LlmError::Parse(format!("response is not JSON: {e}"))
                    })?;
                    return value
                        .pointer("/choices/0/message/content")
                        .and_then(|c| c.as_str())
                        .map(str::to_string)
                        .ok_or_else(|| {
                            LlmError::Parse("response lacks choices[0].message.content".into())
                        });
                }
                Err(e) => {
                    last_error = LlmError::Transport(scrub(&e.to_string(), &secret));
                }
            }
        }
        Err(last_error)
    }
}

/// One proposal round trip.
pub fn llm_propose(
    client: &LlmClient,
    templates: &TemplateSet,
    ctx: &ProposalContext<'_>,
) -> Result<(Thought, Action), LlmError> {
    let messages = compose_propose_messages(
        templates,
        ctx.task_description,
        ctx.initial_observation,
        ctx.steps,
    );
    let reply = client.complete(&messages, ctx.temperature)?;
    parse_proposal_reply(&reply)
}

/// One vote round trip for one candidate.
pub fn llm_vote(
    client: &LlmClient,
    templates: &TemplateSet,
    ctx: &VoteContext<'_>,
    candidate: &CandidateView<'_>,
) -> Result<f64, LlmError> {
    let messages =
        compose_vote_messages(templates, ctx.task_description, ctx.committed, candidate);
    let reply = client.complete(&messages, ctx.temperature)?;
    parse_vote_reply(&reply)
}

/// Model-backed proposer. Safe for sibling rollouts on threads: requests
/// are independent and the client holds no per-call state.
pub struct LlmAgent {
    client: LlmClient,
    templates: TemplateSet,
    name: String,
}

impl LlmAgent {
    pub fn new(endpoint: EndpointConfig, templates: TemplateSet) -> Result<Self, LlmError> {
        let name = format!("llm:{}", endpoint.model_name);
        Ok(LlmAgent {
            client: LlmClient::new(endpoint)?,
            templates,
            name,
        })
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }
}

impl AgentBackend for LlmAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(
        &self,
        ctx: &ProposalContext<'_>,
        _rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<(Thought, Action), AgentError> {
        llm_propose(&self.client, &self.templates, ctx)
            .map_err(|e| AgentError::Backend(e.to_string()))
    }

    fn concurrency(&self) -> AgentConcurrency {
        AgentConcurrency::ConcurrentSafe
    }
}

/// Model-backed voter: one completion per candidate per engine vote call,
/// so vote-sample averaging stays where the engine does it.
pub struct LlmVoter {
    client: LlmClient,
    templates: TemplateSet,
    name: String,
}

impl LlmVoter {
    pub fn new(endpoint: EndpointConfig, templates: TemplateSet) -> Result<Self, LlmError> {
        let name = format!("llm-voter:{}", endpoint.model_name);
        Ok(LlmVoter {
            client: LlmClient::new(endpoint)?,
            templates,
            name,
        })
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }
}

impl VoterBackend for LlmVoter {
    fn name(&self) -> &str {
        &self.name
    }

    fn vote(
        &self,
        ctx: &VoteContext<'_>,
        candidates: &[CandidateView<'_>],
    ) -> Result<Vec<f64>, VoterError> {
        candidates
            .iter()
            .map(|candidate| {
                llm_vote(&self.client, &self.templates, ctx, candidate)
                    .map_err(|e| VoterError::Backend(e.to_string()))
            })
            .collect()
    }
}
