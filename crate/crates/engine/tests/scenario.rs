mod common;

use tailor::json;
use tailor::scenario::{run_scenario, Script, ScenarioError};
use tailor_core::OptionId;

fn script(text: &str) -> Script {
    json::parse(text).unwrap()
}

fn adaptation() -> Script {
    script(&common::read_fixture("adaptation_scenario.json"))
}

fn ids(s: &[&str]) -> Vec<OptionId> {
    s.iter().map(|x| x.parse().unwrap()).collect()
}

#[test]
fn adaptation_fixture_replays_the_adaptation_sequence() {
    let timeline = run_scenario(common::config(), &adaptation()).unwrap();
    let got: Vec<_> = timeline.steps.iter().map(|s| (s.label.as_str(), s.choices.clone())).collect();
    assert_eq!(
        got,
        vec![
            ("t0", ids(&["p1_q2", "p2_q2", "p3_q1"])),
            ("t1", ids(&["p1_q1", "p2_q1", "p3_q2"])),
            ("t2", ids(&["p1_q1", "p2_q1", "p3_q1"])),
            ("t3", ids(&["p1_q2", "p2_q1", "p3_q3"])),
        ]
    );
    assert_eq!(timeline.steps[2].provenance.ledger_sequence, 54);
    assert_ne!(timeline.steps[2].provenance.model_hash, timeline.steps[3].provenance.model_hash);
}

#[test]
fn replay_is_deterministic() {
    let a = run_scenario(common::config(), &adaptation()).unwrap();
    let b = run_scenario(common::config(), &adaptation()).unwrap();
    assert_eq!(json::canonical(&a), json::canonical(&b));
}

#[test]
fn empty_script_yields_the_bootstrap_snapshot() {
    let timeline = run_scenario(common::config(), &script(r#"{"version": 1, "steps": []}"#)).unwrap();
    assert_eq!(timeline.steps.len(), 1);
    assert_eq!(timeline.steps[0].label, "bootstrap");
    assert_eq!(timeline.steps[0].provenance.ledger_sequence, 0);
}

#[test]
fn failing_step_reports_its_index() {
    let s = script(
        r#"{"version": 1, "steps": [
            {"label": "ok", "triggers": []},
            {"label": "bad", "triggers": [{"trigger": {"kind": "context", "change": "profile", "profile": 9}}]}
        ]}"#,
    );
    match run_scenario(common::config(), &s) {
        Err(ScenarioError::Step { index, label, .. }) => assert_eq!((index, label.as_str()), (1, "bad")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn schema_errors_point_at_the_step() {
    let err = json::parse::<Script>(
        r#"{"version": 1, "steps": [{"label": "a"}, {"label": "b", "triggers": [{"trigger": {"kind": "nope"}}]}]}"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("steps[1]"), "{err}");
}

#[test]
fn explain_steps_use_the_mock_backend() {
    let s = script(&format!(
        r#"{{"version": 1, "steps": [{{"label": "e", "explain": true, "triggers": [
            {{"trigger": {{"kind": "context", "change": "problem", "text": {}}}}},
            {{"trigger": {{"kind": "context", "change": "plan", "planner_input": {}}}}}
        ]}}]}}"#,
        serde_json::to_string(&common::read_fixture("problem.txt")).unwrap(),
        common::read_fixture("planner_input.json")
    ));
    let timeline = run_scenario(common::config(), &s).unwrap();
    assert!(timeline.steps[0].explanation.as_deref().unwrap().starts_with("mock explanation sha256:"));
}
