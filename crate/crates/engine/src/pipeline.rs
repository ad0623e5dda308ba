//! Problem generation from natural language and planner-input validation.

use serde::{Deserialize, Serialize};
use tailor_core::planner::{self, Plan, PlanError, PlannerInput};

use crate::backend::{BackendError, GenerationBackend};
use crate::json;

/// A task planner treated as a black box.
pub trait Planner: Send + Sync {
    fn id(&self) -> &str;
    fn plan(&self, input: &PlannerInput) -> Result<Vec<Plan>, PlanError>;
}

/// Exhaustive search over agent assignments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferencePlanner;

impl Planner for ReferencePlanner {
    fn id(&self) -> &str {
        "reference"
    }

    fn plan(&self, input: &PlannerInput) -> Result<Vec<Plan>, PlanError> {
        planner::reference_plan(input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Parsable,
    Processable,
    Feasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    pub criterion: Criterion,
    pub check: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub parsable: bool,
    pub processable: bool,
    pub feasible: bool,
    pub reasons: Vec<Reason>,
    /// Plans meeting the success threshold.
    pub plan_count: usize,
    /// Cheapest plan meeting the threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_plan: Option<Plan>,
}

/// Removes a surrounding Markdown code fence, which generators often add.
fn strip_fence(raw: &str) -> &str {
    let text = raw.trim();
    let Some(rest) = text.strip_prefix("```") else { return text };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses `raw` as a planner input; `None` plus a report on failure.
pub fn validate(raw: &str, planner: &dyn Planner) -> (Option<PlannerInput>, ValidationReport) {
    let mut report = ValidationReport {
        parsable: false,
        processable: false,
        feasible: false,
        reasons: Vec::new(),
        plan_count: 0,
        best_plan: None,
    };
    let reason = |criterion, check: &str, message: String| Reason { criterion, check: check.into(), message };

    let value: serde_json::Value = match serde_json::from_str(strip_fence(raw)) {
        Ok(v) => v,
        Err(e) => {
            report.reasons.push(reason(Criterion::Parsable, "json", e.to_string()));
            return (None, report);
        }
    };
    report.parsable = true;

    let input: PlannerInput = match json::from_value(value) {
        Ok(input) => input,
        Err(e) => {
            let check = match e.path() {
                Some(path) => format!("schema:{path}"),
                None => "schema".into(),
            };
            report.reasons.push(reason(Criterion::Processable, &check, e.to_string()));
            return (None, report);
        }
    };
    let issues = planner::check_processable(&input);
    if !issues.is_empty() {
        report
            .reasons
            .extend(issues.into_iter().map(|i| reason(Criterion::Processable, &i.check, i.message)));
        return (Some(input), report);
    }
    report.processable = true;

    match planner.plan(&input) {
        Ok(plans) if plans.is_empty() => report.reasons.push(reason(
            Criterion::Feasible,
            "success_threshold",
            format!("no assignment reaches mission success probability {}", input.min_success_probability),
        )),
        Ok(plans) => {
            report.feasible = true;
            report.plan_count = plans.len();
            report.best_plan = plans.into_iter().next();
        }
        Err(e) => {
            let check = match e {
                PlanError::NoCapableAgent { .. } => "capability",
                PlanError::Unreachable { .. } => "reachability",
                PlanError::TooLarge { .. } => "search_limit",
                PlanError::NotProcessable(_) => "processable",
            };
            report.reasons.push(reason(Criterion::Feasible, check, e.to_string()));
        }
    }
    (Some(input), report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedProblem {
    pub prompt: String,
    /// Backend output, kept verbatim.
    pub raw: String,
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<PlannerInput>,
    pub report: ValidationReport,
    /// Generated inputs always go to an expert before planning.
    pub needs_review: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("input `{0}` is empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One-shot prompt: instructions, the example input, then the problem.
pub fn problem_prompt(problem: &str, example: &str, instructions: &str) -> String {
    format!(
        "{}\n\n### Planner input example\n{}\n\n### Planning problem\n{}\n",
        instructions.trim_end(),
        example.trim_end(),
        problem.trim_end()
    )
}

pub fn generate_planner_input(
    problem: &str,
    example: &str,
    instructions: &str,
    backend: &dyn GenerationBackend,
    planner: &dyn Planner,
) -> Result<GeneratedProblem, GenerateError> {
    for (name, text) in [("h1", problem), ("i1", example), ("i2", instructions)] {
        if text.trim().is_empty() {
            return Err(GenerateError::EmptyInput(name));
        }
    }
    let prompt = problem_prompt(problem, example, instructions);
    let raw = backend.generate(&prompt)?;
    let (candidate, report) = validate(&raw, planner);
    Ok(GeneratedProblem { prompt, raw, backend: backend.id(), candidate, report, needs_review: true })
}
