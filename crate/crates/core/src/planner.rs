//! Planner input/output documents and the naive reference planner.
//!
//! The reference planner stands in for an external task planner: it
//! enumerates every assignment of task instances (one per task location)
//! to capable agents, scores each by movement plus task cost, and keeps the
//! ones whose mission success probability meets the input's threshold.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const DEFAULT_MOVEMENT_COST: f64 = 10.0;

/// Search is refused above this many candidate assignments.
pub const MAX_ASSIGNMENTS: usize = 1_000_000;

fn default_movement_cost() -> f64 {
    DEFAULT_MOVEMENT_COST
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerInput {
    pub version: u32,
    pub locations: Vec<String>,
    /// Bidirectional connections between locations.
    pub edges: Vec<[String; 2]>,
    pub tasks: Vec<Task>,
    pub agents: Vec<Agent>,
    pub min_success_probability: f64,
    /// Cost of traversing one edge.
    #[serde(default = "default_movement_cost")]
    pub movement_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub name: String,
    /// One task instance is created per location.
    pub locations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Robot,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Agent {
    pub id: String,
    pub kind: AgentKind,
    pub initial_location: String,
    pub capabilities: Vec<Capability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capability {
    pub task: String,
    pub cost: f64,
    pub success_probability: f64,
    pub duration: f64,
    pub max_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub agent: String,
    pub task: String,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub id: String,
    /// In execution order per agent.
    pub assignments: Vec<Assignment>,
    pub total_cost: f64,
    pub success_probability: f64,
    /// Sum of task durations; reported, not optimised.
    pub total_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanList {
    pub version: u32,
    pub plans: Vec<Plan>,
}

/// A failed processability check; `check` is a stable identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub check: String,
    pub message: String,
}

impl Issue {
    fn new(check: &str, message: String) -> Self {
        Self { check: String::from(check), message }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no agent capable of task {task}")]
    NoCapableAgent { task: String },
    #[error("no capable agent can reach task {task} at {location}")]
    Unreachable { task: String, location: String },
    #[error("{combinations} candidate assignments exceed the search limit")]
    TooLarge { combinations: usize },
    #[error("input not processable: {0:?}")]
    NotProcessable(Vec<Issue>),
}

/// Probability that a task succeeds within `retries + 1` independent attempts.
pub fn task_success(p: f64, retries: u32) -> f64 {
    1.0 - libm::pow(1.0 - p, f64::from(retries) + 1.0)
}

/// Schema-level and referential checks on a parsed input.
pub fn check_processable(input: &PlannerInput) -> Vec<Issue> {
    let mut issues = Vec::new();
    let has_location = |l: &String| input.locations.contains(l);
    if !(0.0..=1.0).contains(&input.min_success_probability) {
        issues.push(Issue::new(
            "min_success_probability",
            format!("threshold {} outside [0, 1]", input.min_success_probability),
        ));
    }
    if input.movement_cost.is_nan() || input.movement_cost < 0.0 {
        issues.push(Issue::new("movement_cost", format!("movement cost {} is negative", input.movement_cost)));
    }
    for (i, l) in input.locations.iter().enumerate() {
        if input.locations[..i].contains(l) {
            issues.push(Issue::new("duplicate_id", format!("location {l} listed twice")));
        }
    }
    for [a, b] in &input.edges {
        for end in [a, b] {
            if !has_location(end) {
                issues.push(Issue::new("unknown_location", format!("edge references unknown location {end}")));
            }
        }
    }
    for (i, task) in input.tasks.iter().enumerate() {
        if input.tasks[..i].iter().any(|t| t.id == task.id) {
            issues.push(Issue::new("duplicate_id", format!("task {} listed twice", task.id)));
        }
        if task.locations.is_empty() {
            issues.push(Issue::new("task_location", format!("task {} has no location", task.id)));
        }
        for l in &task.locations {
            if !has_location(l) {
                issues.push(Issue::new("unknown_location", format!("task {} at unknown location {l}", task.id)));
            }
        }
    }
    if input.tasks.is_empty() {
        issues.push(Issue::new("tasks", String::from("no tasks")));
    }
    if input.agents.is_empty() {
        issues.push(Issue::new("agents", String::from("no agents")));
    }
    for (i, agent) in input.agents.iter().enumerate() {
        if input.agents[..i].iter().any(|a| a.id == agent.id) {
            issues.push(Issue::new("duplicate_id", format!("agent {} listed twice", agent.id)));
        }
        if !has_location(&agent.initial_location) {
            issues.push(Issue::new(
                "unknown_location",
                format!("agent {} starts at unknown location {}", agent.id, agent.initial_location),
            ));
        }
        for cap in &agent.capabilities {
            if !input.tasks.iter().any(|t| t.id == cap.task) {
                issues.push(Issue::new("unknown_task", format!("agent {} lists unknown task {}", agent.id, cap.task)));
            }
            if !(0.0..=1.0).contains(&cap.success_probability) {
                issues.push(Issue::new(
                    "probability_range",
                    format!("agent {} task {}: success probability {} outside [0, 1]", agent.id, cap.task, cap.success_probability),
                ));
            }
            if [cap.cost, cap.duration].iter().any(|v| v.is_nan() || *v < 0.0) {
                issues.push(Issue::new(
                    "negative_value",
                    format!("agent {} task {}: cost and duration must be >= 0", agent.id, cap.task),
                ));
            }
        }
    }
    issues
}

/// Hop counts between all location pairs; `None` when disconnected.
fn hop_distances(input: &PlannerInput) -> BTreeMap<(usize, usize), usize> {
    let index: BTreeMap<&str, usize> =
        input.locations.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut adjacent = vec![Vec::new(); input.locations.len()];
    for [a, b] in &input.edges {
        if let (Some(&a), Some(&b)) = (index.get(a.as_str()), index.get(b.as_str())) {
            adjacent[a].push(b);
            adjacent[b].push(a);
        }
    }
    let mut out = BTreeMap::new();
    for start in 0..input.locations.len() {
        let mut dist = vec![usize::MAX; input.locations.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            out.insert((start, u), dist[u]);
            for &v in &adjacent[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    out
}

struct Instance<'a> {
    task: &'a Task,
    location: usize,
    /// (agent index, capability) pairs able to serve this instance.
    candidates: Vec<(usize, &'a Capability)>,
}

/// All assignments meeting the success threshold, cheapest first.
pub fn reference_plan(input: &PlannerInput) -> Result<Vec<Plan>, PlanError> {
    let issues = check_processable(input);
    if !issues.is_empty() {
        return Err(PlanError::NotProcessable(issues));
    }
    let location_index = |l: &str| input.locations.iter().position(|x| x == l).expect("checked");
    let distances = hop_distances(input);
    let starts: Vec<usize> = input.agents.iter().map(|a| location_index(&a.initial_location)).collect();

    let mut instances = Vec::new();
    for task in &input.tasks {
        let capable: Vec<(usize, &Capability)> = input
            .agents
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.capabilities.iter().find(|c| c.task == task.id).map(|c| (i, c)))
            .collect();
        if capable.is_empty() {
            return Err(PlanError::NoCapableAgent { task: task.id.clone() });
        }
        for l in &task.locations {
            let location = location_index(l);
            let candidates: Vec<_> = capable
                .iter()
                .copied()
                .filter(|(a, _)| distances.contains_key(&(starts[*a], location)))
                .collect();
            if candidates.is_empty() {
                return Err(PlanError::Unreachable { task: task.id.clone(), location: l.clone() });
            }
            instances.push(Instance { task, location, candidates });
        }
    }

    let combinations = instances
        .iter()
        .try_fold(1usize, |acc, inst| acc.checked_mul(inst.candidates.len()))
        .filter(|&n| n <= MAX_ASSIGNMENTS)
        .ok_or(PlanError::TooLarge {
            combinations: instances.iter().map(|i| i.candidates.len()).fold(1usize, usize::saturating_mul),
        })?;

    let mut plans: Vec<(Vec<usize>, Plan)> = Vec::new();
    let mut choice = vec![0usize; instances.len()];
    for _ in 0..combinations {
        let mut position = starts.clone();
        let mut cost = 0.0;
        let mut success = 1.0;
        let mut duration = 0.0;
        let mut assignments = Vec::with_capacity(instances.len());
        let mut agents = Vec::with_capacity(instances.len());
        for (inst, &c) in instances.iter().zip(&choice) {
            let (agent, cap) = inst.candidates[c];
            // Agents move sequentially through their instances; every
            // candidate location is in the agent's component.
            let hops = distances[&(position[agent], inst.location)];
            cost += input.movement_cost * hops as f64 + cap.cost;
            position[agent] = inst.location;
            success *= task_success(cap.success_probability, cap.max_retries);
            duration += cap.duration;
            agents.push(agent);
            assignments.push(Assignment {
                agent: input.agents[agent].id.clone(),
                task: inst.task.id.clone(),
                location: input.locations[inst.location].clone(),
            });
        }
        if success >= input.min_success_probability {
            plans.push((
                agents,
                Plan {
                    id: String::new(),
                    assignments,
                    total_cost: cost,
                    success_probability: success,
                    total_duration: duration,
                },
            ));
        }
        for (slot, inst) in choice.iter_mut().zip(&instances).rev() {
            *slot += 1;
            if *slot < inst.candidates.len() {
                break;
            }
            *slot = 0;
        }
    }

    plans.sort_by(|(ka, a), (kb, b)| {
        a.total_cost
            .total_cmp(&b.total_cost)
            .then(b.success_probability.total_cmp(&a.success_probability))
            .then(ka.cmp(kb))
    });
    plans.dedup_by(|(a, _), (b, _)| a == b);
    Ok(plans
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut plan))| {
            plan.id = format!("plan-{}", i + 1);
            plan
        })
        .collect())
}
