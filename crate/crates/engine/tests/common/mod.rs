#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use tailor::backend::MockBackend;
use tailor::engine::{Clock, Engine, EngineOptions};
use tailor::json;
use tailor::records::{ContextChange, PlanIngest, ProblemIngest, Trigger};
use tailor::EngineConfig;
use tailor_core::PlannerInput;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn config() -> EngineConfig {
    EngineConfig::load(&fixture("engine.json")).unwrap()
}

pub fn planner_input() -> PlannerInput {
    json::parse(&read_fixture("planner_input.json")).unwrap()
}

pub fn options() -> EngineOptions {
    EngineOptions { eager: false, verify: true, clock: Clock::Logical }
}

pub fn engine() -> Engine {
    Engine::new(config(), Arc::new(MockBackend::new()), options()).unwrap()
}

/// Ingests the construction problem and its reference plans.
pub fn with_context(engine: &mut Engine) {
    let text = read_fixture("problem.txt");
    engine.handle(Trigger::Context(ContextChange::Problem(ProblemIngest { id: None, text }))).unwrap();
    let ingest = PlanIngest { id: None, problem_id: None, planner_input: planner_input(), plans: None };
    engine.handle(Trigger::Context(ContextChange::Plan(ingest))).unwrap();
}
