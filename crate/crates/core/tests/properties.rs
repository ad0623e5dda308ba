//! Property suites over randomly generated small instances.

use std::collections::BTreeSet;

use proptest::prelude::*;
use tailor_core::feedback::{AcceptanceCounts, BetaPrior, Counts, FeedbackEvent, Verdict};
use tailor_core::model::{ObservationVector, OptionId, ProfileId, SkillVector};
use tailor_core::policy::{posterior, solve_decomposed, Solution};
use tailor_core::prompt::{has_hole_marker, PromptContext, PromptTemplate};
use tailor_core::testing::{seeded_instance, Instance, Limits};
use tailor_core::utility::{expected_utility, utility_with_kappa, UtilityParams};
use tailor_core::value_iteration::{solve_value_iteration, ExplicitModel};

fn policy_map(solution: &Solution) -> Vec<(ObservationVector, Vec<OptionId>)> {
    solution.entries.iter().map(|e| (e.observation.clone(), e.choices.clone())).collect()
}

fn all_choice_vectors(instance: &Instance) -> Vec<Vec<OptionId>> {
    let mut out: Vec<Vec<OptionId>> = vec![vec![]];
    for slot in &instance.catalog.slots {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                slot.options.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.id);
                    v
                })
            })
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn estimate_is_monotone_and_interior(a in 0u64..10_000, r in 0u64..10_000) {
        let prior = BetaPrior::default();
        let base = Counts::new(a, r).estimate(&prior);
        prop_assert!(base > 0.0 && base < 1.0);
        prop_assert!(Counts::new(a + 1, r).estimate(&prior) > base);
        prop_assert!(Counts::new(a, r + 1).estimate(&prior) < base);
    }

    #[test]
    fn utility_is_bounded_and_monotone(r in 0.0f64..1.0, dr in 1e-6f64..0.5, k in 0.5f64..1.0) {
        let params = UtilityParams::default();
        let u = utility_with_kappa(k, r, &params).unwrap();
        prop_assert!(u >= params.b_min && u <= params.b_max);
        let r2 = (r + dr).min(1.0);
        prop_assert!(utility_with_kappa(k, r2, &params).unwrap() > u);
        prop_assert!(utility_with_kappa(1.0, r, &params).unwrap() >= u);
    }

    #[test]
    fn expected_utility_is_linear_in_belief(seed in any::<u64>(), lambda in 0.0f64..1.0, r in 0.0f64..=1.0) {
        let instance = seeded_instance(seed, Limits::default());
        let skills = &instance.cognitive.skills;
        let option = &instance.catalog.slots[0].options[0];
        let hidden: Vec<SkillVector> = {
            let spec = instance.spec(ProfileId(1)).unwrap();
            spec.hidden_vectors()
        };
        let n = hidden.len() as f64;
        let uniform: Vec<(SkillVector, f64)> = hidden.iter().map(|u| (u.clone(), 1.0 / n)).collect();
        let point: Vec<(SkillVector, f64)> =
            hidden.iter().enumerate().map(|(i, u)| (u.clone(), if i == 0 { 1.0 } else { 0.0 })).collect();
        let mixed: Vec<(SkillVector, f64)> = uniform
            .iter()
            .zip(&point)
            .map(|((u, a), (_, b))| (u.clone(), lambda * a + (1.0 - lambda) * b))
            .collect();
        let params = UtilityParams::default();
        let eu = |b: &[(SkillVector, f64)]| expected_utility(option, skills, b, r, &params).unwrap();
        let combined = lambda * eu(&uniform) + (1.0 - lambda) * eu(&point);
        prop_assert!((eu(&mixed) - combined).abs() < 1e-9);
    }

    #[test]
    fn replay_equals_live_recording(seed in any::<u64>(), picks in prop::collection::vec((any::<u32>(), any::<u64>(), any::<bool>()), 0..60)) {
        let instance = seeded_instance(seed, Limits::default());
        let catalog = &instance.catalog;
        let base = instance.counts.clone();
        let mut live = base.clone();
        let mut log = Vec::new();
        for (i, (profile_pick, choice_pick, accepted)) in picks.into_iter().enumerate() {
            let profile = ProfileId(profile_pick % catalog.profiles.len() as u32 + 1);
            let choices = all_choice_vectors(&instance);
            let shown = choices[(choice_pick % choices.len() as u64) as usize].clone();
            let event = FeedbackEvent {
                sequence: i as u64 + 1,
                timestamp_ms: 1_000 * i as u64,
                profile,
                shown,
                verdict: if accepted { Verdict::Accepted } else { Verdict::Rejected },
                explanation_id: format!("e{i}"),
            };
            live.record(&event).unwrap();
            log.push(event);
        }
        prop_assert_eq!(&AcceptanceCounts::replay(&base, &log).unwrap(), &live);

        let zero = AcceptanceCounts::zeroed(catalog);
        let straight = AcceptanceCounts::replay(&zero, &log).unwrap();
        let flipped: Vec<FeedbackEvent> =
            log.iter().map(|e| FeedbackEvent { verdict: e.verdict.flipped(), ..e.clone() }).collect();
        let swapped = AcceptanceCounts::replay(&zero, &flipped).unwrap();
        for (profile, per) in &straight.counts {
            for (option, c) in per {
                let s = swapped.get(*profile, *option).unwrap();
                prop_assert_eq!((s.accepted, s.rejected), (c.rejected, c.accepted));
            }
        }
    }

    #[test]
    fn fill_is_injective_and_complete(seed in any::<u64>()) {
        let instance = seeded_instance(seed, Limits::default());
        let catalog = &instance.catalog;
        let text = PromptTemplate::holes(catalog)
            .iter()
            .map(|h| format!("{h}: <{h}>"))
            .collect::<Vec<_>>()
            .join("\n");
        let template = PromptTemplate { version: 1, text };
        let context = PromptContext { problem: "p".into(), planner_input: "{}".into(), plan: "[]".into() };
        let profile = &catalog.profiles[0];
        let mut seen = BTreeSet::new();
        for choices in all_choice_vectors(&instance) {
            let prompt = template.fill(catalog, profile, &choices, &context).unwrap();
            prop_assert!(!has_hole_marker(&prompt, catalog));
            prop_assert!(seen.insert(prompt));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solvers_agree_and_states_are_observation_consistent(seed in any::<u64>()) {
        let instance = seeded_instance(seed, Limits::default());
        for profile in instance.profile_ids() {
            let spec = instance.spec(profile).unwrap();
            prop_assert!(ExplicitModel::expand(&spec).observation_consistent());
            let fast = solve_decomposed(&spec).unwrap();
            let exact = solve_value_iteration(&spec).unwrap();
            prop_assert!((fast.value - exact.value).abs() < 1e-9);
            let p = spec.slot_count() as f64;
            prop_assert!(fast.value >= p * spec.params.b_min - 1e-9 && fast.value <= p * spec.params.b_max + 1e-9);
            prop_assert_eq!(fast.entries.len(), exact.entries.len());
            for (a, b) in fast.entries.iter().zip(&exact.entries) {
                prop_assert_eq!(&a.observation, &b.observation);
                prop_assert_eq!(&a.argmax, &b.argmax);
                prop_assert_eq!(&a.choices, &b.choices);
                prop_assert!((a.probability - b.probability).abs() < 1e-12);
                let belief = posterior(&spec.active_block().joint, &a.observation).unwrap();
                for b_k in &belief.per_skill {
                    prop_assert!((b_k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            let mass: f64 = fast.entries.iter().map(|e| e.probability).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn policy_is_invariant_to_utility_scale(seed in any::<u64>(), lo in 0.0f64..100.0, width in 1e-3f64..1000.0) {
        let mut instance = seeded_instance(seed, Limits::default());
        let base = policy_map(&solve_decomposed(&instance.spec(ProfileId(1)).unwrap()).unwrap());
        instance.params.b_min = lo;
        instance.params.b_max = lo + width;
        let scaled = policy_map(&solve_decomposed(&instance.spec(ProfileId(1)).unwrap()).unwrap());
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn acceptance_never_moves_argmax_away(seed in any::<u64>(), pick in any::<u64>()) {
        let mut instance = seeded_instance(seed, Limits::default());
        let profiles = instance.catalog.profiles.len() as u64;
        let profile = ProfileId((pick % profiles) as u32 + 1);
        let ids: Vec<OptionId> = instance.catalog.option_ids().collect();
        let target = ids[((pick / profiles) % ids.len() as u64) as usize];
        let before = solve_decomposed(&instance.spec(profile).unwrap()).unwrap();
        let c = instance.counts.counts.get_mut(&profile).unwrap().get_mut(&target).unwrap();
        c.accepted += 1;
        let after = solve_decomposed(&instance.spec(profile).unwrap()).unwrap();
        let p = target.slot as usize - 1;
        for (b, a) in before.entries.iter().zip(&after.entries) {
            let (old, new) = (b.choices[p], a.choices[p]);
            prop_assert!(new == old || new == target, "slot {} moved {} -> {}", p + 1, old, new);
            if old == target {
                prop_assert_eq!(new, target);
            }
        }
    }

    /// Relabelling one skill's hidden levels, consistently in the joint
    /// tables and in every alignment profile, leaves the policy unchanged.
    #[test]
    fn policy_depends_only_on_observables(seed in any::<u64>(), rotate in 1usize..3) {
        let instance = seeded_instance(seed, Limits::default());
        let mut permuted = instance.clone();
        let skill = &instance.cognitive.skills[0];
        let m = skill.level_count();
        let perm = |i: usize| (i + rotate) % m;
        for block in &mut permuted.cognitive.profiles {
            let original = block.tables[&skill.name].clone();
            let table = block.tables.get_mut(&skill.name).unwrap();
            for (i, row) in original.into_iter().enumerate() {
                table[perm(i)] = row;
            }
        }
        for slot in &mut permuted.catalog.slots {
            for option in &mut slot.options {
                if let Some(levels) = option.alignment.get_mut(&skill.name) {
                    for label in levels.iter_mut() {
                        let i = skill.levels.iter().position(|l| l == label).unwrap();
                        *label = skill.levels[perm(i)].clone();
                    }
                }
            }
        }
        for profile in instance.profile_ids() {
            let a = solve_decomposed(&instance.spec(profile).unwrap()).unwrap();
            let b = solve_decomposed(&permuted.spec(profile).unwrap()).unwrap();
            prop_assert_eq!(policy_map(&a), policy_map(&b));
            prop_assert!((a.value - b.value).abs() < 1e-9);
        }
    }

    #[test]
    fn domain_types_round_trip_through_json(seed in any::<u64>()) {
        let instance = seeded_instance(seed, Limits::default());
        let catalog = serde_json::to_string(&instance.catalog).unwrap();
        prop_assert_eq!(serde_json::from_str::<tailor_core::PromptCatalog>(&catalog).unwrap(), instance.catalog.clone());
        let cognitive = serde_json::to_string(&instance.cognitive).unwrap();
        prop_assert_eq!(serde_json::from_str::<tailor_core::CognitiveModel>(&cognitive).unwrap(), instance.cognitive.clone());
        let counts = serde_json::to_string(&instance.counts).unwrap();
        prop_assert_eq!(serde_json::from_str::<AcceptanceCounts>(&counts).unwrap(), instance.counts.clone());
        let snapshot = solve_decomposed(&instance.spec(ProfileId(1)).unwrap()).unwrap().snapshot(Default::default());
        let text = serde_json::to_string(&snapshot).unwrap();
        prop_assert_eq!(serde_json::from_str::<tailor_core::PolicySnapshot>(&text).unwrap(), snapshot);
    }
}

#[test]
fn diminishing_returns_example() {
    let params = UtilityParams::default();
    let u = |r| utility_with_kappa(1.0, r, &params).unwrap();
    assert!(u(0.3) - u(0.2) > u(0.98) - u(0.95));
}
