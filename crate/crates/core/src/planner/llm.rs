//! Remote planner: one chat-completions request whose reply lists candidate
//! workflows in a versioned JSON schema.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    pad_with_rule_based, plan_rule_based, validate_spec, TaskDescriptor, WorkflowSpec,
};
use crate::detector::DetectorKind;
use crate::error::{Error, Result};
use crate::evidence::EvidenceKind;
use crate::graph::TopologyChoice;

pub const API_KEY_ENV: &str = "SIGNGAD_LLM_API_KEY";
pub const DEFAULT_TIMEOUT_SECS: u64 = 30;
pub const PLAN_SCHEMA_VERSION: u64 = 1;

/// Reply format the remote planner must follow.
pub const PLAN_SCHEMA: &str = r#"{
  "schema_version": 1,
  "workflows": [
    {
      "topology": "base" | "fused",
      "evidence": [ "degree_anomaly" | "relation_degree_profile" | "relation_disagreement"
                  | "neighbor_feature_deviation" | "feature_smoothness"
                  | "reconstruction_residual", ... ],
      "detector": "linear" | "tree" | "stacked" | "relation_aware"
    },
    ...
  ]
}"#;

pub trait PlannerClient: Send + Sync {
    /// Sends one system + user message pair and returns the reply text.
    fn complete(&self, system: &str, user: &str) -> Result<String>;
}

/// Chat-completions client over HTTPS.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpChatClient {
    /// Client with the API key taken from the environment, if set.
    pub fn from_env(endpoint: &str, model: &str, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout,
        }
    }
}

impl PlannerClient for HttpChatClient {
    fn complete(&self, system: &str, user: &str) -> Result<String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Client(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Client(format!("planner endpoint returned {status}")));
        }
        let value: Value = resp.json().map_err(|e| Error::Client(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Client("reply has no message content".into()))
    }
}

/// `(system, user)` messages for a planning request.
pub fn build_prompt(descriptor: &TaskDescriptor, n_workflows: usize) -> (String, String) {
    let system = format!(
        "You design anomaly detection workflows for attributed multi-relation graphs. \
         Each workflow picks a topology, an ordered set of closed-form evidence functions \
         and a detector. Reply with a single JSON object and nothing else, following this \
         schema:\n{PLAN_SCHEMA}\n\
         Relation-dependent choices (fused topology, relation_* evidence, relation_aware \
         detector) need at least one extra relation. Evidence lists must not repeat a kind."
    );
    let stats = serde_json::to_string_pretty(&descriptor.stats).unwrap_or_default();
    let user = format!(
        "Task description:\n{}\n\nGraph statistics:\n{}\n\nLabeled training nodes: {}\n\n\
         Propose {} distinct workflows, most promising first.",
        descriptor.task_text, stats, descriptor.supervision_budget, n_workflows
    );
    (system, user)
}

#[derive(Debug, Deserialize)]
struct RawPlan {
    schema_version: u64,
    workflows: Vec<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkflow {
    topology: TopologyChoice,
    evidence: Vec<EvidenceKind>,
    detector: DetectorKind,
}

/// Entries of a planner reply that match the schema, plus one message per
/// entry that did not. Fails when the reply as a whole is unusable.
pub fn parse_plan_response(text: &str) -> Result<(Vec<WorkflowSpec>, Vec<String>)> {
    const SRC: &str = "planner reply";
    let start = text.find('{');
    let end = text.rfind('}');
    let body = match (start, end) {
        (Some(s), Some(e)) if s < e => &text[s..=e],
        _ => return Err(Error::parse(SRC, 0, "no JSON object found")),
    };
    let plan: RawPlan =
        serde_json::from_str(body).map_err(|e| Error::parse(SRC, e.line(), e.to_string()))?;
    if plan.schema_version != PLAN_SCHEMA_VERSION {
        return Err(Error::parse(
            SRC,
            0,
            format!("unsupported schema version {}", plan.schema_version),
        ));
    }
    let mut specs = Vec::new();
    let mut rejected = Vec::new();
    for (i, entry) in plan.workflows.into_iter().enumerate() {
        match serde_json::from_value::<RawWorkflow>(entry) {
            Ok(w) => specs.push(WorkflowSpec::new(w.topology, w.evidence, w.detector)),
            Err(e) => rejected.push(format!("workflow {i}: {e}")),
        }
    }
    Ok((specs, rejected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Rule,
    Llm,
    /// The remote planner failed; the rule-based plan was used instead.
    RuleFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub specs: Vec<WorkflowSpec>,
    pub source: PlanSource,
    /// Number of leading specs that came from the remote planner.
    pub n_from_llm: usize,
    pub warnings: Vec<String>,
}

/// Plans with `client`, keeping valid distinct proposals and padding from the
/// rule-based grid. Any client or parse failure falls back to the rule-based
/// plan.
pub fn plan_llm(
    descriptor: &TaskDescriptor,
    n_workflows: usize,
    client: &dyn PlannerClient,
) -> Result<PlanOutcome> {
    let rule = plan_rule_based(descriptor, n_workflows)?;
    let (system, user) = build_prompt(descriptor, n_workflows);
    let parsed = client
        .complete(&system, &user)
        .and_then(|reply| parse_plan_response(&reply));
    let (proposed, rejected) = match parsed {
        Ok(p) => p,
        Err(e) => {
            let msg = format!("remote planner failed, using rule-based plan: {e}");
            log::warn!("{msg}");
            return Ok(PlanOutcome {
                specs: rule,
                source: PlanSource::RuleFallback,
                n_from_llm: 0,
                warnings: vec![msg],
            });
        }
    };

    let r = descriptor.stats.n_extra_relations;
    let mut warnings: Vec<String> = rejected
        .into_iter()
        .map(|m| format!("dropped planner proposal ({m})"))
        .collect();
    let mut kept: Vec<WorkflowSpec> = Vec::new();
    for spec in proposed {
        let violations = validate_spec(&spec, r);
        if !violations.is_empty() {
            warnings.push(format!(
                "dropped planner proposal {}: {}",
                spec.label(),
                violations.join("; ")
            ));
        } else if kept.iter().any(|s| s.same_design(&spec)) {
            warnings.push(format!("dropped duplicate planner proposal {}", spec.label()));
        } else if kept.len() < n_workflows {
            kept.push(spec);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let n_from_llm = kept.len();
    Ok(PlanOutcome {
        specs: pad_with_rule_based(kept, r, n_workflows),
        source: PlanSource::Llm,
        n_from_llm,
        warnings,
    })
}
