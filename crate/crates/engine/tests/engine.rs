mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{config, engine, options, with_context};
use tailor::backend::MockBackend;
use tailor::engine::{Engine, EngineError, ExplainRequest, FEEDBACK_FILE};
use tailor::records::{CognitiveUpdate, ContextChange, EventKind, FeedbackInput, Trigger};
use tailor_core::{ObservationVector, OptionId, ProfileId, Verdict};

fn ids(s: &[&str]) -> Vec<OptionId> {
    s.iter().map(|x| x.parse().unwrap()).collect()
}

fn feedback(profile: u32, shown: &[&str], verdict: Verdict) -> Trigger {
    Trigger::Feedback(FeedbackInput {
        profile: ProfileId(profile),
        shown: ids(shown),
        verdict,
        explanation_id: None,
    })
}

fn malformed_update() -> Trigger {
    let mut tables = BTreeMap::new();
    tables.insert("attention".to_string(), vec![vec![0.5, 0.2, 0.1], vec![0.1, 0.1, 0.1], vec![0.05, 0.05, 0.0]]);
    Trigger::CognitivePrediction(CognitiveUpdate { profile: ProfileId(1), tables })
}

fn lowered_attention() -> Trigger {
    let mut tables = BTreeMap::new();
    tables.insert(
        "attention".to_string(),
        vec![vec![0.50, 0.08, 0.02], vec![0.10, 0.15, 0.02], vec![0.02, 0.03, 0.08]],
    );
    Trigger::CognitivePrediction(CognitiveUpdate { profile: ProfileId(1), tables })
}

#[test]
fn policies_are_cached_until_their_key_changes() {
    let mut e = engine();
    let a = e.policy(ProfileId(1)).unwrap();
    let b = e.policy(ProfileId(1)).unwrap();
    assert!(Arc::ptr_eq(&a, &b));

    // Feedback for another profile leaves profile 1 untouched.
    e.handle(feedback(2, &["p1_q1", "p2_q1", "p3_q1"], Verdict::Accepted)).unwrap();
    assert!(Arc::ptr_eq(&a, &e.policy(ProfileId(1)).unwrap()));

    e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q1"], Verdict::Accepted)).unwrap();
    let c = e.policy(ProfileId(1)).unwrap();
    assert!(!Arc::ptr_eq(&a, &c));
    assert_eq!(c.snapshot.provenance.ledger_sequence, 2);
    assert_eq!(c.snapshot.provenance.model_hash, a.snapshot.provenance.model_hash);
}

#[test]
fn malformed_model_update_is_rejected_and_prior_policy_kept() {
    let mut e = engine();
    let before = e.policy(ProfileId(1)).unwrap();
    let err = e.handle(malformed_update()).unwrap_err();
    assert!(matches!(err, EngineError::InvalidModel(_)), "{err}");
    let after = e.policy(ProfileId(1)).unwrap();
    assert!(Arc::ptr_eq(&before, &after));
    assert_eq!(e.events_since(0).last().unwrap().kind, EventKind::Rejected);
}

#[test]
fn unknown_skill_in_update_is_rejected() {
    let mut e = engine();
    let mut tables = BTreeMap::new();
    tables.insert("reasoning".to_string(), vec![vec![1.0]]);
    let err = e.handle(Trigger::CognitivePrediction(CognitiveUpdate { profile: ProfileId(1), tables })).unwrap_err();
    assert!(matches!(err, EngineError::InvalidModel(_)));
}

#[test]
fn identical_model_updates_yield_identical_snapshots() {
    let mut e = engine();
    e.handle(lowered_attention()).unwrap();
    let first = e.policy(ProfileId(1)).unwrap().snapshot.clone();
    e.handle(lowered_attention()).unwrap();
    let second = e.policy(ProfileId(1)).unwrap().snapshot.clone();
    assert_eq!(first, second);
}

#[test]
fn model_update_invalidates_every_profile() {
    let mut e = engine();
    let p2 = e.policy(ProfileId(2)).unwrap();
    let outcome = e.handle(lowered_attention()).unwrap();
    assert_eq!(outcome.invalidated, vec![ProfileId(1), ProfileId(2), ProfileId(3)]);
    let p2_after = e.policy(ProfileId(2)).unwrap();
    assert_ne!(p2.snapshot.provenance.model_hash, p2_after.snapshot.provenance.model_hash);
    // Only profile 1's tables changed, so profile 2's choices do not move.
    assert_eq!(p2.snapshot.entries, p2_after.snapshot.entries);
}

#[test]
fn explanation_uses_fresh_policy_and_fills_every_hole() {
    let mut e = engine();
    with_context(&mut e);
    let record = e.explain(&ExplainRequest::default()).unwrap();
    assert_eq!(record.profile, ProfileId(3));
    assert_eq!(record.choices, ids(&["p1_q2", "p2_q2", "p3_q1"]));
    assert_eq!(record.labels, vec!["summary", "casual", "list"]);
    assert_eq!(record.text, MockBackend::render(&record.prompt));
    assert!(record.prompt.contains("Non-expert (assumes minimal technical knowledge"));
    assert!(record.prompt.contains("in a step-by-step list"));
    assert!(record.prompt.contains("Foundation preparation"));
    assert!(!tailor_core::prompt::has_hole_marker(&record.prompt, &e.config().catalog));
    assert_eq!(record.provenance, e.snapshot_key(ProfileId(3)));
}

#[test]
fn explanation_for_another_profile_switches_context() {
    let mut e = engine();
    with_context(&mut e);
    let request = ExplainRequest { profile: Some(ProfileId(1)), ..ExplainRequest::default() };
    let record = e.explain(&request).unwrap();
    assert_eq!(e.active_profile(), ProfileId(1));
    assert_eq!(record.choices, ids(&["p1_q1", "p2_q1", "p3_q2"]));
}

#[test]
fn explicit_observation_is_honoured() {
    let mut e = engine();
    with_context(&mut e);
    let request = ExplainRequest {
        profile: Some(ProfileId(1)),
        observation: Some(ObservationVector(vec![1, 1])),
        plan_id: None,
    };
    let record = e.explain(&request).unwrap();
    let expected = e.policy(ProfileId(1)).unwrap().snapshot.choices(&ObservationVector(vec![1, 1])).unwrap().to_vec();
    assert_eq!(record.choices, expected);

    let bad = ExplainRequest { observation: Some(ObservationVector(vec![4, 1])), ..request };
    assert!(matches!(e.explain(&bad).unwrap_err(), EngineError::BadRequest(_)));
}

#[test]
fn explanation_without_plan_is_reported() {
    let mut e = engine();
    let err = e.explain(&ExplainRequest::default()).unwrap_err();
    assert!(matches!(err, EngineError::MissingContext("plan")));
}

#[test]
fn commit_after_a_trigger_is_stale() {
    let mut e = engine();
    with_context(&mut e);
    let prepared = e.prepare_explanation(&ExplainRequest::default()).unwrap();
    e.handle(feedback(3, &["p1_q2", "p2_q2", "p3_q1"], Verdict::Accepted)).unwrap();
    let err = e.commit_explanation(prepared, "mock", "text".into()).unwrap_err();
    assert!(matches!(err, EngineError::Stale));
}

#[test]
fn feedback_on_explanation_counts_once() {
    let mut e = engine();
    with_context(&mut e);
    let record = e.explain(&ExplainRequest::default()).unwrap();
    let before = e.counts().get(ProfileId(3), record.choices[2]).unwrap();
    let event = e.feedback_on(&record.id, Verdict::Rejected).unwrap();
    assert_eq!(event.shown, record.choices);
    assert_eq!(event.explanation_id, record.id);
    let after = e.counts().get(ProfileId(3), record.choices[2]).unwrap();
    assert_eq!(after.rejected, before.rejected + 1);

    let err = e.feedback_on(&record.id, Verdict::Accepted).unwrap_err();
    assert!(matches!(err, EngineError::Conflict(_)));
    assert!(matches!(e.feedback_on("exp-404", Verdict::Accepted).unwrap_err(), EngineError::NotFound(_)));
}

#[test]
fn feedback_with_wrong_shape_is_rejected_without_side_effects() {
    let mut e = engine();
    let counts = e.counts().clone();
    assert!(e.handle(feedback(1, &["p1_q1", "p2_q1"], Verdict::Accepted)).is_err());
    assert!(e.handle(feedback(9, &["p1_q1", "p2_q1", "p3_q1"], Verdict::Accepted)).is_err());
    assert!(e.handle(feedback(1, &["p2_q1", "p1_q1", "p3_q1"], Verdict::Accepted)).is_err());
    assert_eq!(&counts, e.counts());
}

#[test]
fn eager_mode_resynthesises_on_trigger() {
    let mut opts = options();
    opts.eager = true;
    let mut e = Engine::new(config(), Arc::new(MockBackend::new()), opts).unwrap();
    e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q2"], Verdict::Rejected)).unwrap();
    let resyntheses = e.events_since(0).iter().filter(|ev| ev.kind == EventKind::Resynthesis).count();
    assert_eq!(resyntheses, 1);
}

#[test]
fn timeline_records_policy_diffs() {
    let mut e = engine();
    e.handle(Trigger::Context(ContextChange::Profile { profile: ProfileId(1) })).unwrap();
    e.policy(ProfileId(1)).unwrap();
    for _ in 0..5 {
        e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q2"], Verdict::Accepted)).unwrap();
    }
    for _ in 0..49 {
        e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q2"], Verdict::Rejected)).unwrap();
    }
    e.policy(ProfileId(1)).unwrap();
    let diffs: Vec<_> = e.events_since(0).iter().filter(|ev| ev.kind == EventKind::Resynthesis).collect();
    assert_eq!(diffs.len(), 2);
    assert_eq!(diffs[1].before.as_deref(), Some(&ids(&["p1_q1", "p2_q1", "p3_q2"])[..]));
    assert_eq!(diffs[1].after.as_deref(), Some(&ids(&["p1_q1", "p2_q1", "p3_q1"])[..]));
    let last = e.events_since(0).last().unwrap().sequence;
    assert!(e.events_since(last).is_empty());
    assert_eq!(e.events_since(last - 1).len(), 1);
}

#[test]
fn persisted_engine_recovers_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mk = || Engine::open(config(), dir.path(), Arc::new(MockBackend::new()), options()).unwrap();
    let (snapshot, counts, record) = {
        let mut e = mk();
        with_context(&mut e);
        let record = e.explain(&ExplainRequest { profile: Some(ProfileId(1)), ..Default::default() }).unwrap();
        e.feedback_on(&record.id, Verdict::Rejected).unwrap();
        e.handle(lowered_attention()).unwrap();
        (e.policy(ProfileId(1)).unwrap().snapshot.clone(), e.counts().clone(), record)
    };
    let mut e = mk();
    assert_eq!(e.counts(), &counts);
    assert_eq!(e.policy(ProfileId(1)).unwrap().snapshot, snapshot);
    assert_eq!(e.explanation(&record.id), Some(&record));
    // The vote survived the restart.
    assert!(matches!(e.feedback_on(&record.id, Verdict::Accepted).unwrap_err(), EngineError::Conflict(_)));
    // Context survived too: a new explanation needs no re-ingest.
    let next = e.explain(&ExplainRequest::default()).unwrap();
    assert_ne!(next.id, record.id);
}

#[test]
fn corrupt_feedback_log_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut e = Engine::open(config(), dir.path(), Arc::new(MockBackend::new()), options()).unwrap();
        e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q2"], Verdict::Accepted)).unwrap();
    }
    let path = dir.path().join(FEEDBACK_FILE);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"sequence\": 2, \"oops\": true}\n");
    std::fs::write(&path, text).unwrap();
    let err = Engine::open(config(), dir.path(), Arc::new(MockBackend::new()), options()).err().unwrap();
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn out_of_order_feedback_log_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut e = Engine::open(config(), dir.path(), Arc::new(MockBackend::new()), options()).unwrap();
        e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q2"], Verdict::Accepted)).unwrap();
        e.handle(feedback(1, &["p1_q1", "p2_q1", "p3_q2"], Verdict::Accepted)).unwrap();
    }
    let path = dir.path().join(FEEDBACK_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    std::fs::write(&path, format!("{}\n{}\n", lines[1], lines[0])).unwrap();
    let err = Engine::open(config(), dir.path(), Arc::new(MockBackend::new()), options()).err().unwrap();
    assert!(matches!(err, EngineError::Replay { line: 1, .. }), "{err}");
}

#[test]
fn verify_mode_agrees_on_the_fixture() {
    let mut e = engine();
    for p in 1..=3 {
        e.policy(ProfileId(p)).unwrap();
    }
}

#[test]
fn beliefs_are_normalised_posteriors() {
    let e = engine();
    let view = e.belief(ProfileId(1), Some(ObservationVector(vec![3, 3]))).unwrap();
    assert_eq!(view.skills.len(), 2);
    for skill in &view.skills {
        let total: f64 = skill.levels.iter().map(|l| l.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    // P(attention high | predicted high) = 0.65 / (0.01 + 0.05 + 0.65)
    assert!((view.skills[0].levels[2].probability - 0.65 / 0.71).abs() < 1e-12);
    assert!((view.probability - 0.71 * 0.83).abs() < 1e-12);
    assert!(matches!(e.belief(ProfileId(7), None).unwrap_err(), EngineError::NotFound(_)));
}
