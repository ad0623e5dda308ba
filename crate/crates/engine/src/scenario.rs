//! Scripted trigger sequences replayed against an in-memory engine.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tailor_core::{ObservationVector, OptionId, ProfileId, Provenance};

use crate::backend::MockBackend;
use crate::config::EngineConfig;
use crate::engine::{Clock, Engine, EngineError, EngineOptions, ExplainRequest};
use crate::records::Trigger;

pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTrigger {
    pub trigger: Trigger,
    #[serde(default = "one")]
    pub repeat: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub label: String,
    #[serde(default)]
    pub triggers: Vec<ScriptTrigger>,
    /// Also generate an explanation with the mock backend.
    #[serde(default)]
    pub explain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub version: u32,
    pub steps: Vec<ScriptStep>,
}

/// Policy state after one script step, at the most probable prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub label: String,
    pub profile: ProfileId,
    pub observation: ObservationVector,
    pub choices: Vec<OptionId>,
    pub labels: Vec<String>,
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub steps: Vec<StepResult>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unsupported script version {0}")]
    Version(u32),
    #[error("step {index} ({label}): {source}")]
    Step { index: usize, label: String, source: EngineError },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn observe(engine: &mut Engine, label: &str) -> Result<StepResult, EngineError> {
    let profile = engine.active_profile();
    let policy = engine.policy(profile)?;
    let choices = policy.default_choices();
    let catalog = &engine.config().catalog;
    let labels = choices
        .iter()
        .map(|id| catalog.option(*id).map(|o| o.label.clone()).unwrap_or_default())
        .collect();
    Ok(StepResult {
        label: label.to_string(),
        profile,
        observation: policy.default_observation.clone(),
        choices,
        labels,
        value: policy.snapshot.value,
        provenance: policy.snapshot.provenance.clone(),
        explanation: None,
    })
}

/// Runs `script` on a fresh engine. An empty script yields the bootstrap
/// snapshot of the default profile as its only step.
pub fn run_scenario(config: EngineConfig, script: &Script) -> Result<Timeline, ScenarioError> {
    if script.version != SCRIPT_VERSION {
        return Err(ScenarioError::Version(script.version));
    }
    let options = EngineOptions { eager: false, verify: true, clock: Clock::Logical };
    let mut engine = Engine::new(config, Arc::new(MockBackend::new()), options)?;
    if script.steps.is_empty() {
        return Ok(Timeline { steps: vec![observe(&mut engine, "bootstrap")?] });
    }
    let mut steps = Vec::with_capacity(script.steps.len());
    for (index, step) in script.steps.iter().enumerate() {
        let run = |engine: &mut Engine| -> Result<StepResult, EngineError> {
            for t in &step.triggers {
                for _ in 0..t.repeat {
                    engine.handle(t.trigger.clone())?;
                }
            }
            let mut result = observe(engine, &step.label)?;
            if step.explain {
                let record = engine.explain(&ExplainRequest {
                    observation: Some(result.observation.clone()),
                    ..ExplainRequest::default()
                })?;
                result.explanation = Some(record.text);
            }
            Ok(result)
        };
        let result = run(&mut engine)
            .map_err(|source| ScenarioError::Step { index, label: step.label.clone(), source })?;
        steps.push(result);
    }
    Ok(Timeline { steps })
}
