//! The adaptation loop: triggers update knowledge, policies are
//! re-synthesised when their key goes stale, explanations are generated
//! from fresh policies only.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tailor_core::policy::{
    most_likely_observation, observation_probability, posterior, solve_decomposed, Solution,
};
use tailor_core::prism::export_prism;
use tailor_core::value_iteration::solve_value_iteration;
use tailor_core::{
    AcceptanceCounts, BuildError, CognitiveModel, FeedbackEvent, LedgerError, ObservationVector,
    OptionId, PlanList, PolicyError, PolicySnapshot, PomdpSpec, Profile, ProfileId, PromptContext,
    Provenance, TemplateError, Verdict,
};

use crate::backend::{BackendError, GenerationBackend};
use crate::config::{ConfigError, EngineConfig};
use crate::json;
use crate::pipeline::{Planner, ReferencePlanner};
use crate::records::{
    CognitiveUpdate, ContextChange, ContextEntry, EventKind, ExplanationRecord, FeedbackInput,
    PlanIngest, ProblemIngest, StoredPlan, StoredProblem, TimelineEvent, Trigger,
};
use crate::store::{JsonlLog, StoreError};

pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const EXPLANATIONS_FILE: &str = "explanations.jsonl";
pub const CONTEXT_FILE: &str = "context.jsonl";
pub const COGNITIVE_MODEL_FILE: &str = "cognitive-model.json";

/// Start of the logical clock, 2025-01-01T00:00:00Z.
pub const LOGICAL_EPOCH_MS: u64 = 1_735_689_600_000;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: cannot replay line {line}: {source}")]
    Replay { path: String, line: usize, source: LedgerError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("cognitive model rejected: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("no {0} available for the explanation context")]
    MissingContext(&'static str),
    #[error("policy changed while the explanation was generated")]
    Stale,
    #[error("solvers disagree: {0}")]
    SolverMismatch(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<tailor_core::PlanError> for EngineError {
    fn from(e: tailor_core::PlanError) -> Self {
        EngineError::BadRequest(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    /// Starts at [`LOGICAL_EPOCH_MS`] and advances one second per reading.
    Logical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    /// Re-synthesise affected policies as soon as a trigger lands.
    pub eager: bool,
    /// Cross-check every solve with value iteration.
    pub verify: bool,
    pub clock: Clock,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { eager: false, verify: false, clock: Clock::System }
    }
}

/// A published policy with the solver detail behind it.
#[derive(Debug, Clone)]
pub struct CachedPolicy {
    pub snapshot: PolicySnapshot,
    pub solution: Solution,
    /// Most probable prediction vector, used when a request names none.
    pub default_observation: ObservationVector,
}

impl CachedPolicy {
    pub fn default_choices(&self) -> Vec<OptionId> {
        self.snapshot.choices(&self.default_observation).map(<[_]>::to_vec).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProbability {
    pub level: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillBelief {
    pub skill: String,
    pub levels: Vec<LevelProbability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefView {
    pub profile: ProfileId,
    pub observation: ObservationVector,
    /// Marginal probability of the observation.
    pub probability: f64,
    pub skills: Vec<SkillBelief>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    /// Defaults to the active profile; a different profile is a context change.
    #[serde(default)]
    pub profile: Option<ProfileId>,
    /// Defaults to the most probable prediction.
    #[serde(default)]
    pub observation: Option<ObservationVector>,
    /// Defaults to the latest plan.
    #[serde(default)]
    pub plan_id: Option<String>,
}

/// An explanation whose prompt is ready but whose text is not yet generated.
#[derive(Debug, Clone)]
pub struct PreparedExplanation {
    pub id: String,
    pub profile: ProfileId,
    pub observation: ObservationVector,
    pub choices: Vec<OptionId>,
    pub prompt: String,
    pub plan_id: String,
    pub provenance: Provenance,
    pub policy_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerOutcome {
    pub kind: String,
    /// Profiles whose policy key changed.
    pub invalidated: Vec<ProfileId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stored_id: Option<String>,
}

struct Persistence {
    dir: PathBuf,
    feedback: JsonlLog<FeedbackEvent>,
    explanations: JsonlLog<ExplanationRecord>,
    context: JsonlLog<ContextEntry>,
}

pub struct Engine {
    config: EngineConfig,
    cognitive: CognitiveModel,
    model_hash: String,
    params_hash: String,
    counts: AcceptanceCounts,
    persistence: Option<Persistence>,
    explanations: BTreeMap<String, ExplanationRecord>,
    voted: BTreeSet<String>,
    policies: BTreeMap<ProfileId, Arc<CachedPolicy>>,
    problems: Vec<StoredProblem>,
    plans: Vec<StoredPlan>,
    active: ProfileId,
    events: Vec<TimelineEvent>,
    options: EngineOptions,
    ticks: u64,
    backend: Arc<dyn GenerationBackend>,
    planner: Arc<dyn Planner>,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io { path: path.display().to_string(), source }
}

impl Engine {
    /// In-memory engine.
    pub fn new(
        config: EngineConfig,
        backend: Arc<dyn GenerationBackend>,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let counts = config.base_counts()?;
        let cognitive = config.cognitive_model.clone();
        Ok(Self {
            model_hash: json::content_hash(&cognitive),
            params_hash: config.params_hash(),
            active: config.default_profile,
            cognitive,
            counts,
            config,
            persistence: None,
            explanations: BTreeMap::new(),
            voted: BTreeSet::new(),
            policies: BTreeMap::new(),
            problems: Vec::new(),
            plans: Vec::new(),
            events: Vec::new(),
            options,
            ticks: 0,
            backend,
            planner: Arc::new(ReferencePlanner),
        })
    }

    /// Engine persisted under `dir`; state is rebuilt from the files there.
    pub fn open(
        config: EngineConfig,
        dir: &Path,
        backend: Arc<dyn GenerationBackend>,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let mut engine = Self::new(config, backend, options)?;
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;

        let model_path = dir.join(COGNITIVE_MODEL_FILE);
        if model_path.exists() {
            let text = std::fs::read_to_string(&model_path).map_err(io_error(&model_path))?;
            let model: CognitiveModel = json::parse(&text).map_err(ConfigError::from)?;
            engine.check_model(&model)?;
            engine.model_hash = json::content_hash(&model);
            engine.cognitive = model;
        }

        let feedback_path = dir.join(FEEDBACK_FILE);
        let (feedback, events) = JsonlLog::<FeedbackEvent>::open(&feedback_path)?;
        engine.counts = AcceptanceCounts::replay(&engine.counts, &events).map_err(|(i, source)| {
            EngineError::Replay { path: feedback_path.display().to_string(), line: i + 1, source }
        })?;
        engine.voted = events.iter().map(|e| e.explanation_id.clone()).collect();

        let (explanations, records) = JsonlLog::<ExplanationRecord>::open(&dir.join(EXPLANATIONS_FILE))?;
        engine.explanations = records.into_iter().map(|r| (r.id.clone(), r)).collect();

        let (context, entries) = JsonlLog::<ContextEntry>::open(&dir.join(CONTEXT_FILE))?;
        for entry in entries {
            match entry {
                ContextEntry::Problem(p) => engine.problems.push(p),
                ContextEntry::Plan(p) => engine.plans.push(p),
            }
        }

        engine.persistence = Some(Persistence { dir: dir.to_path_buf(), feedback, explanations, context });
        Ok(engine)
    }

    pub fn with_planner(mut self, planner: Arc<dyn Planner>) -> Self {
        self.planner = planner;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn cognitive_model(&self) -> &CognitiveModel {
        &self.cognitive
    }

    pub fn counts(&self) -> &AcceptanceCounts {
        &self.counts
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.config.catalog.profiles
    }

    pub fn active_profile(&self) -> ProfileId {
        self.active
    }

    pub fn backend(&self) -> Arc<dyn GenerationBackend> {
        Arc::clone(&self.backend)
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    pub fn explanation(&self, id: &str) -> Option<&ExplanationRecord> {
        self.explanations.get(id)
    }

    pub fn plan(&self, id: &str) -> Option<&StoredPlan> {
        self.plans.iter().find(|p| p.id == id)
    }

    pub fn events_since(&self, sequence: u64) -> &[TimelineEvent] {
        let start = self.events.partition_point(|e| e.sequence <= sequence);
        &self.events[start..]
    }

    fn now(&mut self) -> u64 {
        self.ticks += 1;
        match self.options.clock {
            Clock::Logical => LOGICAL_EPOCH_MS + 1_000 * self.ticks,
            Clock::System => {
                SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
            }
        }
    }

    fn push_event(
        &mut self,
        kind: EventKind,
        profile: Option<ProfileId>,
        detail: String,
        change: Option<(Vec<OptionId>, Vec<OptionId>)>,
    ) {
        let at_ms = self.now();
        let (before, after) = match change {
            Some((b, a)) => (Some(b), Some(a)),
            None => (None, None),
        };
        self.events.push(TimelineEvent {
            sequence: self.events.len() as u64 + 1,
            at_ms,
            kind,
            detail,
            profile,
            ledger_sequence: self.counts.last_sequence,
            before,
            after,
        });
    }

    fn check_profile(&self, profile: ProfileId) -> Result<(), EngineError> {
        self.config
            .catalog
            .profile(profile)
            .map(|_| ())
            .ok_or_else(|| EngineError::NotFound(format!("profile {profile}")))
    }

    /// A replacement model must keep the configured skills and profiles.
    fn check_model(&self, model: &CognitiveModel) -> Result<(), EngineError> {
        if model.skills != self.config.cognitive_model.skills {
            return Err(EngineError::InvalidModel("skills differ from the configuration".into()));
        }
        let ids: Vec<ProfileId> = model.profiles.iter().map(|p| p.profile).collect();
        let expected: Vec<ProfileId> = self.config.catalog.profiles.iter().map(|p| p.id).collect();
        if ids != expected {
            return Err(EngineError::InvalidModel(format!("profiles {ids:?}, expected {expected:?}")));
        }
        let report = model.validate();
        if !report.is_ok() {
            return Err(EngineError::InvalidModel(report.to_string()));
        }
        Ok(())
    }

    /// Key a snapshot of `profile` must carry to be current.
    pub fn snapshot_key(&self, profile: ProfileId) -> Provenance {
        Provenance {
            ledger_sequence: self.counts.profile_sequence(profile),
            model_hash: self.model_hash.clone(),
            params_hash: self.params_hash.clone(),
        }
    }

    pub fn spec(&self, profile: ProfileId) -> Result<PomdpSpec, EngineError> {
        self.check_profile(profile)?;
        Ok(PomdpSpec::build(
            &self.config.catalog,
            &self.cognitive,
            &self.counts,
            &self.config.utility,
            &self.config.prior,
            profile,
        )?)
    }

    fn solve(&self, profile: ProfileId) -> Result<CachedPolicy, EngineError> {
        let spec = self.spec(profile)?;
        let solution = solve_decomposed(&spec)?;
        if self.options.verify {
            let exact = solve_value_iteration(&spec)?;
            if (exact.value - solution.value).abs() > 1e-9 {
                return Err(EngineError::SolverMismatch(format!(
                    "value {} vs {}",
                    solution.value, exact.value
                )));
            }
            for (a, b) in solution.entries.iter().zip(&exact.entries) {
                if a.observation != b.observation || a.argmax != b.argmax {
                    return Err(EngineError::SolverMismatch(format!("observation {}", a.observation)));
                }
            }
            if solution.entries.len() != exact.entries.len() {
                return Err(EngineError::SolverMismatch("observation sets differ".into()));
            }
        }
        let snapshot = solution.snapshot(self.snapshot_key(profile));
        Ok(CachedPolicy { snapshot, solution, default_observation: most_likely_observation(&spec) })
    }

    /// Current policy for `profile`, re-synthesised if its key is stale.
    pub fn policy(&mut self, profile: ProfileId) -> Result<Arc<CachedPolicy>, EngineError> {
        self.check_profile(profile)?;
        let key = self.snapshot_key(profile);
        if let Some(cached) = self.policies.get(&profile) {
            if cached.snapshot.provenance == key {
                return Ok(Arc::clone(cached));
            }
        }
        let fresh = Arc::new(self.solve(profile)?);
        let before = self.policies.get(&profile).map(|c| c.default_choices()).unwrap_or_default();
        let after = fresh.default_choices();
        self.push_event(
            EventKind::Resynthesis,
            Some(profile),
            format!("policy for profile {profile} re-synthesised, value {:.6}", fresh.snapshot.value),
            Some((before, after)),
        );
        self.policies.insert(profile, Arc::clone(&fresh));
        Ok(fresh)
    }

    /// Posterior over true skill levels; `obs` defaults to the most probable.
    pub fn belief(&self, profile: ProfileId, obs: Option<ObservationVector>) -> Result<BeliefView, EngineError> {
        let spec = self.spec(profile)?;
        let observation = obs.unwrap_or_else(|| most_likely_observation(&spec));
        observation.validate(&spec.skills).map_err(|e| EngineError::BadRequest(e.to_string()))?;
        let tables = &spec.active_block().joint;
        let belief = posterior(tables, &observation)?;
        Ok(BeliefView {
            profile,
            probability: observation_probability(tables, &observation),
            observation,
            skills: spec
                .skills
                .iter()
                .zip(belief.per_skill)
                .map(|(skill, b)| SkillBelief {
                    skill: skill.name.clone(),
                    levels: skill
                        .levels
                        .iter()
                        .zip(b)
                        .map(|(level, probability)| LevelProbability { level: level.clone(), probability })
                        .collect(),
                })
                .collect(),
        })
    }

    pub fn export_prism(&self, profile: ProfileId) -> Result<String, EngineError> {
        Ok(export_prism(&self.spec(profile)?))
    }

    pub fn handle(&mut self, trigger: Trigger) -> Result<TriggerOutcome, EngineError> {
        let kind = trigger.kind().to_string();
        let result = match trigger {
            Trigger::Feedback(input) => self.record_feedback(input),
            Trigger::CognitivePrediction(update) => self.update_model(update),
            Trigger::Context(ContextChange::Profile { profile }) => self.switch_profile(profile),
            Trigger::Context(ContextChange::Plan(ingest)) => self.ingest_plan(ingest),
            Trigger::Context(ContextChange::Problem(ingest)) => self.ingest_problem(ingest),
        };
        match result {
            Ok(outcome) => {
                if self.options.eager {
                    for &profile in &outcome.invalidated {
                        self.policy(profile)?;
                    }
                }
                Ok(outcome)
            }
            Err(e) => {
                self.push_event(EventKind::Rejected, None, format!("{kind}: {e}"), None);
                Err(e)
            }
        }
    }

    fn outcome(kind: &str, invalidated: Vec<ProfileId>) -> TriggerOutcome {
        TriggerOutcome { kind: kind.into(), invalidated, feedback: None, stored_id: None }
    }

    fn record_feedback(&mut self, input: FeedbackInput) -> Result<TriggerOutcome, EngineError> {
        self.check_profile(input.profile)?;
        let explanation_id = match input.explanation_id {
            Some(id) => {
                if self.voted.contains(&id) {
                    return Err(EngineError::Conflict(format!("explanation {id} already has feedback")));
                }
                id
            }
            None => format!("unattributed-{}", self.counts.last_sequence + 1),
        };
        let event = FeedbackEvent {
            sequence: self.counts.last_sequence + 1,
            timestamp_ms: self.now(),
            profile: input.profile,
            shown: input.shown,
            verdict: input.verdict,
            explanation_id,
        };
        self.counts.check(&event)?;
        // Durable before visible.
        if let Some(p) = &mut self.persistence {
            p.feedback.append(&event)?;
        }
        self.counts.record(&event)?;
        self.voted.insert(event.explanation_id.clone());
        let verdict = match event.verdict {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        };
        self.push_event(
            EventKind::Trigger,
            Some(event.profile),
            format!("feedback #{}: {verdict} {}", event.sequence, join(&event.shown)),
            None,
        );
        let mut outcome = Self::outcome("feedback", vec![event.profile]);
        outcome.feedback = Some(event);
        Ok(outcome)
    }

    /// Feedback on a served explanation, attributed to the options it showed.
    pub fn feedback_on(&mut self, explanation_id: &str, verdict: Verdict) -> Result<FeedbackEvent, EngineError> {
        let record = self
            .explanations
            .get(explanation_id)
            .ok_or_else(|| EngineError::NotFound(format!("explanation {explanation_id}")))?;
        let input = FeedbackInput {
            profile: record.profile,
            shown: record.choices.clone(),
            verdict,
            explanation_id: Some(record.id.clone()),
        };
        let outcome = self.handle(Trigger::Feedback(input))?;
        Ok(outcome.feedback.expect("feedback outcome carries its event"))
    }

    fn update_model(&mut self, update: CognitiveUpdate) -> Result<TriggerOutcome, EngineError> {
        self.check_profile(update.profile)?;
        let mut model = self.cognitive.clone();
        let block = model
            .profiles
            .iter_mut()
            .find(|p| p.profile == update.profile)
            .ok_or_else(|| EngineError::NotFound(format!("profile {}", update.profile)))?;
        for (skill, table) in update.tables {
            if !block.tables.contains_key(&skill) {
                return Err(EngineError::InvalidModel(format!("unknown skill `{skill}`")));
            }
            block.tables.insert(skill, table);
        }
        self.check_model(&model)?;
        // A build also rejects all-zero tables.
        PomdpSpec::build(
            &self.config.catalog,
            &model,
            &self.counts,
            &self.config.utility,
            &self.config.prior,
            update.profile,
        )
        .map_err(|e| EngineError::InvalidModel(e.to_string()))?;

        if let Some(p) = &self.persistence {
            let path = p.dir.join(COGNITIVE_MODEL_FILE);
            let tmp = p.dir.join(format!("{COGNITIVE_MODEL_FILE}.tmp"));
            std::fs::write(&tmp, json::canonical(&model)).map_err(io_error(&tmp))?;
            std::fs::rename(&tmp, &path).map_err(io_error(&path))?;
        }
        self.model_hash = json::content_hash(&model);
        self.cognitive = model;
        self.push_event(
            EventKind::Trigger,
            Some(update.profile),
            format!("cognitive prediction update for profile {}", update.profile),
            None,
        );
        Ok(Self::outcome("cognitive_prediction", self.profiles().iter().map(|p| p.id).collect()))
    }

    fn switch_profile(&mut self, profile: ProfileId) -> Result<TriggerOutcome, EngineError> {
        self.check_profile(profile)?;
        let previous = self.active;
        self.active = profile;
        self.push_event(
            EventKind::Trigger,
            Some(profile),
            format!("context: profile {previous} -> {profile}"),
            None,
        );
        Ok(Self::outcome("context:profile", vec![profile]))
    }

    fn ingest_problem(&mut self, ingest: ProblemIngest) -> Result<TriggerOutcome, EngineError> {
        if ingest.text.trim().is_empty() {
            return Err(EngineError::BadRequest("problem text is empty".into()));
        }
        let id = ingest.id.unwrap_or_else(|| format!("problem-{}", self.problems.len() + 1));
        if self.problems.iter().any(|p| p.id == id) {
            return Err(EngineError::Conflict(format!("problem {id} exists")));
        }
        let problem = StoredProblem { id: id.clone(), text: ingest.text };
        if let Some(p) = &mut self.persistence {
            p.context.append(&ContextEntry::Problem(problem.clone()))?;
        }
        self.problems.push(problem);
        self.push_event(EventKind::Trigger, None, format!("context: new problem {id}"), None);
        let mut outcome = Self::outcome("context:problem", Vec::new());
        outcome.stored_id = Some(id);
        Ok(outcome)
    }

    fn ingest_plan(&mut self, ingest: PlanIngest) -> Result<TriggerOutcome, EngineError> {
        let issues = tailor_core::planner::check_processable(&ingest.planner_input);
        if let Some(issue) = issues.first() {
            return Err(EngineError::BadRequest(format!("planner input: {}: {}", issue.check, issue.message)));
        }
        if let Some(problem) = &ingest.problem_id {
            if !self.problems.iter().any(|p| &p.id == problem) {
                return Err(EngineError::NotFound(format!("problem {problem}")));
            }
        }
        let plans = match ingest.plans {
            Some(list) => list,
            None => PlanList { version: 1, plans: self.planner.plan(&ingest.planner_input)? },
        };
        if plans.plans.is_empty() {
            return Err(EngineError::BadRequest("plan list is empty".into()));
        }
        let id = ingest.id.unwrap_or_else(|| format!("plans-{}", self.plans.len() + 1));
        if self.plan(&id).is_some() {
            return Err(EngineError::Conflict(format!("plan {id} exists")));
        }
        let problem_id = ingest.problem_id.or_else(|| self.problems.last().map(|p| p.id.clone()));
        let stored = StoredPlan { id: id.clone(), problem_id, planner_input: ingest.planner_input, plans };
        if let Some(p) = &mut self.persistence {
            p.context.append(&ContextEntry::Plan(stored.clone()))?;
        }
        self.plans.push(stored);
        self.push_event(EventKind::Trigger, None, format!("context: new plan {id}"), None);
        let mut outcome = Self::outcome("context:plan", Vec::new());
        outcome.stored_id = Some(id);
        Ok(outcome)
    }

    /// Fixes slot choices from a fresh policy and fills the prompt.
    pub fn prepare_explanation(&mut self, request: &ExplainRequest) -> Result<PreparedExplanation, EngineError> {
        let profile = request.profile.unwrap_or(self.active);
        if profile != self.active {
            self.handle(Trigger::Context(ContextChange::Profile { profile }))?;
        }
        let plan = match &request.plan_id {
            Some(id) => self.plan(id).ok_or_else(|| EngineError::NotFound(format!("plan {id}")))?,
            None => self.plans.last().ok_or(EngineError::MissingContext("plan"))?,
        };
        let problem = plan
            .problem_id
            .as_ref()
            .and_then(|id| self.problems.iter().find(|p| &p.id == id))
            .or(self.problems.last())
            .ok_or(EngineError::MissingContext("problem"))?;
        let context = PromptContext {
            problem: problem.text.clone(),
            planner_input: json::canonical(&plan.planner_input),
            plan: json::canonical(&plan.plans),
        };
        let plan_id = plan.id.clone();

        let policy = self.policy(profile)?;
        let observation = request.observation.clone().unwrap_or_else(|| policy.default_observation.clone());
        observation
            .validate(&self.cognitive.skills)
            .map_err(|e| EngineError::BadRequest(e.to_string()))?;
        let choices = tailor_core::policy::prompt_options(&policy.snapshot, &observation)?;
        let profile_def = self.config.catalog.profile(profile).expect("checked by policy()");
        let prompt = self.config.template.fill(&self.config.catalog, profile_def, &choices, &context)?;
        let ordinal = self.explanations.len() + 1;
        Ok(PreparedExplanation {
            id: format!("exp-{ordinal}"),
            profile,
            observation,
            choices,
            prompt,
            plan_id,
            provenance: policy.snapshot.provenance.clone(),
            policy_value: policy.snapshot.value,
        })
    }

    /// Stores the generated text if the policy is still current.
    pub fn commit_explanation(
        &mut self,
        prepared: PreparedExplanation,
        backend: &str,
        text: String,
    ) -> Result<ExplanationRecord, EngineError> {
        if self.snapshot_key(prepared.profile) != prepared.provenance {
            return Err(EngineError::Stale);
        }
        if self.explanations.contains_key(&prepared.id) {
            return Err(EngineError::Stale);
        }
        let labels = prepared
            .choices
            .iter()
            .map(|id| self.config.catalog.option(*id).map(|o| o.label.clone()).unwrap_or_default())
            .collect();
        let record = ExplanationRecord {
            id: prepared.id,
            profile: prepared.profile,
            observation: prepared.observation,
            choices: prepared.choices,
            labels,
            prompt: prepared.prompt,
            backend: backend.to_string(),
            text,
            plan_id: prepared.plan_id,
            created_at_ms: self.now(),
            ledger_sequence: self.counts.last_sequence,
            provenance: prepared.provenance,
            policy_value: prepared.policy_value,
        };
        if let Some(p) = &mut self.persistence {
            p.explanations.append(&record)?;
        }
        self.explanations.insert(record.id.clone(), record.clone());
        self.push_event(
            EventKind::Explanation,
            Some(record.profile),
            format!("explanation {} with {}", record.id, join(&record.choices)),
            None,
        );
        Ok(record)
    }

    /// Prepare, generate with the engine's backend, commit.
    pub fn explain(&mut self, request: &ExplainRequest) -> Result<ExplanationRecord, EngineError> {
        let prepared = self.prepare_explanation(request)?;
        let backend = self.backend();
        let text = backend.generate(&prepared.prompt)?;
        self.commit_explanation(prepared, &backend.id(), text)
    }
}

fn join(ids: &[OptionId]) -> String {
    let parts: Vec<String> = ids.iter().map(ToString::to_string).collect();
    format!("<{}>", parts.join(","))
}
