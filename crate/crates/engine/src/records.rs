//! Triggers, stored context, explanation records and timeline events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tailor_core::model::JointTable;
use tailor_core::{ObservationVector, OptionId, PlanList, PlannerInput, ProfileId, Provenance, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    Feedback(FeedbackInput),
    CognitivePrediction(CognitiveUpdate),
    Context(ContextChange),
}

impl Trigger {
    pub fn kind(&self) -> &'static str {
        match self {
            Trigger::Feedback(_) => "feedback",
            Trigger::CognitivePrediction(_) => "cognitive_prediction",
            Trigger::Context(ContextChange::Profile { .. }) => "context:profile",
            Trigger::Context(ContextChange::Plan(_)) => "context:plan",
            Trigger::Context(ContextChange::Problem(_)) => "context:problem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackInput {
    pub profile: ProfileId,
    /// One option per slot, slot order.
    pub shown: Vec<OptionId>,
    pub verdict: Verdict,
    #[serde(default)]
    pub explanation_id: Option<String>,
}

/// Replacement joint tables for some skills of one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CognitiveUpdate {
    pub profile: ProfileId,
    pub tables: BTreeMap<String, JointTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum ContextChange {
    Profile { profile: ProfileId },
    Plan(PlanIngest),
    Problem(ProblemIngest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanIngest {
    #[serde(default)]
    pub id: Option<String>,
    /// Problem the plans solve; defaults to the latest problem.
    #[serde(default)]
    pub problem_id: Option<String>,
    pub planner_input: PlannerInput,
    /// Plans from an external planner; computed with the engine's planner
    /// when absent.
    #[serde(default)]
    pub plans: Option<PlanList>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemIngest {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredPlan {
    pub id: String,
    pub problem_id: Option<String>,
    pub planner_input: PlannerInput,
    pub plans: PlanList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredProblem {
    pub id: String,
    pub text: String,
}

/// One line of the context store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextEntry {
    Problem(StoredProblem),
    Plan(StoredPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationRecord {
    pub id: String,
    pub profile: ProfileId,
    pub observation: ObservationVector,
    pub choices: Vec<OptionId>,
    /// Option labels, slot order, for display.
    pub labels: Vec<String>,
    /// The filled prompt, verbatim.
    pub prompt: String,
    pub backend: String,
    pub text: String,
    pub plan_id: String,
    pub created_at_ms: u64,
    /// Global ledger sequence when the record was created.
    pub ledger_sequence: u64,
    /// Key of the policy snapshot the choices came from.
    pub provenance: Provenance,
    pub policy_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Trigger,
    Rejected,
    Resynthesis,
    Explanation,
}

/// Entry of the adaptation timeline served by `/events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEvent {
    pub sequence: u64,
    pub at_ms: u64,
    pub kind: EventKind,
    pub detail: String,
    pub profile: Option<ProfileId>,
    pub ledger_sequence: u64,
    /// Choices at the default observation before and after a re-synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<Vec<OptionId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Vec<OptionId>>,
}
