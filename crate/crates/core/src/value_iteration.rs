//! Exact finite-horizon backward induction over the explicit POMDP.
//!
//! The state space is expanded from the Turn flow: a state is
//! `(step, hidden levels set so far, predicted levels set so far)` and its
//! observation is `(step, predicted levels)`. Beliefs are distributions
//! over explicit states that share an observation history; they are
//! propagated through the joint transition tables directly, without
//! assuming per-skill independence, and rewards are read from the built
//! reward table rather than recomputed from the utility formula.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{ObservationVector, OptionId};
use crate::policy::{select, ObservationPolicy, PolicyError, Solution};
use crate::pomdp::PomdpSpec;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct State {
    pub step: usize,
    /// 0 = not yet drawn.
    pub hidden: Vec<u32>,
    pub observed: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActionLabel {
    ObserveCogSkill(usize),
    SelectPrompt(OptionId),
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub label: ActionLabel,
    pub reward: f64,
    /// (probability, successor state index); zero-probability outcomes dropped.
    pub branches: Vec<(f64, usize)>,
}

/// Reachable explicit states of the active profile's POMDP.
#[derive(Debug, Clone)]
pub struct ExplicitModel {
    pub states: Vec<State>,
    pub actions: Vec<Vec<Action>>,
}

impl ExplicitModel {
    pub fn expand(spec: &PomdpSpec) -> Self {
        let block = spec.active_block();
        let k_count = spec.skill_count();
        let p_count = spec.slot_count();
        let radices = spec.level_counts();
        let hidden_index = |hidden: &[u32]| -> usize {
            hidden
                .iter()
                .zip(&radices)
                .fold(0usize, |acc, (&level, &m)| acc * m + (level as usize - 1))
        };

        let initial = State { step: 0, hidden: alloc::vec![0; k_count], observed: alloc::vec![0; k_count] };
        let mut index: BTreeMap<State, usize> = BTreeMap::new();
        let mut states = Vec::new();
        let mut actions: Vec<Vec<Action>> = Vec::new();
        index.insert(initial.clone(), 0);
        states.push(initial);
        let mut cursor = 0;
        while cursor < states.len() {
            let state = states[cursor].clone();
            let mut intern = |s: State, states: &mut Vec<State>| -> usize {
                *index.entry(s.clone()).or_insert_with(|| {
                    states.push(s);
                    states.len() - 1
                })
            };
            let mut out = Vec::new();
            if state.step < k_count {
                let k = state.step;
                let mut branches = Vec::new();
                for (i, j, p) in block.observe_branches(k) {
                    if p <= 0.0 {
                        continue;
                    }
                    let mut next = state.clone();
                    next.step += 1;
                    next.hidden[k] = i;
                    next.observed[k] = j;
                    branches.push((p, intern(next, &mut states)));
                }
                out.push(Action { label: ActionLabel::ObserveCogSkill(k), reward: 0.0, branches });
            } else if state.step < k_count + p_count {
                let p = state.step - k_count;
                let u = hidden_index(&state.hidden);
                let mut next = state.clone();
                next.step += 1;
                let successor = intern(next, &mut states);
                for q in 0..spec.slots[p].options {
                    out.push(Action {
                        label: ActionLabel::SelectPrompt(OptionId::new(p as u32 + 1, q as u32 + 1)),
                        reward: block.rewards[p][q][u].value,
                        branches: alloc::vec![(1.0, successor)],
                    });
                }
            } else if state.step == k_count + p_count {
                let mut next = state.clone();
                next.step += 1;
                let successor = intern(next, &mut states);
                out.push(Action { label: ActionLabel::End, reward: 0.0, branches: alloc::vec![(1.0, successor)] });
            }
            actions.push(out);
            cursor += 1;
        }
        Self { states, actions }
    }

    pub fn observation(&self, state: usize) -> (usize, &[u32]) {
        let s = &self.states[state];
        (s.step, &s.observed)
    }

    /// Every pair of states with the same observation offers the same
    /// action labels.
    pub fn observation_consistent(&self) -> bool {
        let mut seen: BTreeMap<(usize, Vec<u32>), Vec<ActionLabel>> = BTreeMap::new();
        for (i, state) in self.states.iter().enumerate() {
            let labels: Vec<ActionLabel> = self.actions[i].iter().map(|a| a.label).collect();
            let key = (state.step, state.observed.clone());
            match seen.get(&key) {
                Some(existing) if *existing != labels => return false,
                Some(_) => {}
                None => {
                    seen.insert(key, labels);
                }
            }
        }
        true
    }
}

/// Decision taken at one selection step for one observation.
struct SlotDecision {
    best: usize,
    tied: Vec<usize>,
    immediate: Vec<f64>,
}

struct Induction {
    model: ExplicitModel,
    span: f64,
    /// Reward-to-go per observation history `(step, predicted levels)`.
    /// Actions never reveal information after the last observation, so the
    /// history determines the belief and memoisation is exact.
    memo: BTreeMap<(usize, Vec<u32>), f64>,
    decisions: BTreeMap<(usize, Vec<u32>), SlotDecision>,
    reach: BTreeMap<Vec<u32>, f64>,
}

impl Induction {
    /// Optimal expected reward-to-go of `belief` (normalised weights over
    /// states sharing one observation history). `reach` is the probability
    /// of that history.
    fn value(&mut self, belief: &[(usize, f64)], reach: f64) -> Result<f64, PolicyError> {
        let first = belief[0].0;
        let step = self.model.states[first].step;
        let key = (step, self.model.states[first].observed.clone());
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let labels: Vec<ActionLabel> = self.model.actions[first].iter().map(|a| a.label).collect();
        for &(s, _) in belief {
            let other: Vec<ActionLabel> = self.model.actions[s].iter().map(|a| a.label).collect();
            if other != labels {
                return Err(PolicyError::InconsistentObservation { step });
            }
        }
        if labels.is_empty() {
            self.reach.insert(key.1.clone(), reach);
            self.memo.insert(key, 0.0);
            return Ok(0.0);
        }

        let mut q_values = Vec::with_capacity(labels.len());
        let mut immediate = Vec::with_capacity(labels.len());
        for a in 0..labels.len() {
            let mut reward = 0.0;
            let mut successors: BTreeMap<Vec<u32>, Vec<(usize, f64)>> = BTreeMap::new();
            for &(s, w) in belief {
                let action = &self.model.actions[s][a];
                reward += w * action.reward;
                for &(p, next) in &action.branches {
                    successors
                        .entry(self.model.states[next].observed.clone())
                        .or_default()
                        .push((next, w * p));
                }
            }
            let mut continuation = 0.0;
            for (_, mut weights) in successors {
                let mass: f64 = weights.iter().map(|(_, w)| w).sum();
                if mass <= 0.0 {
                    continue;
                }
                merge(&mut weights);
                for (_, w) in weights.iter_mut() {
                    *w /= mass;
                }
                continuation += mass * self.value(&weights, reach * mass)?;
            }
            immediate.push(reward);
            q_values.push(reward + continuation);
        }

        let value = match labels[0] {
            ActionLabel::SelectPrompt(_) => {
                let (best, tied) = select(&q_values, self.span);
                let value = q_values[best];
                self.decisions.insert(key.clone(), SlotDecision { best, tied, immediate });
                value
            }
            _ => q_values[0],
        };
        self.memo.insert(key, value);
        Ok(value)
    }
}

/// Folds duplicate successor states into one weight.
fn merge(weights: &mut Vec<(usize, f64)>) {
    weights.sort_by_key(|(s, _)| *s);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    for &(s, w) in weights.iter() {
        match out.last_mut() {
            Some((last, acc)) if *last == s => *acc += w,
            _ => out.push((s, w)),
        }
    }
    *weights = out;
}

/// Exact solution by backward induction over reachable beliefs.
pub fn solve_value_iteration(spec: &PomdpSpec) -> Result<Solution, PolicyError> {
    let model = ExplicitModel::expand(spec);
    let mut run = Induction {
        model,
        span: spec.params.span(),
        memo: BTreeMap::new(),
        decisions: BTreeMap::new(),
        reach: BTreeMap::new(),
    };
    let value = run.value(&[(0, 1.0)], 1.0)?;
    let k_count = spec.skill_count();
    let mut entries = Vec::with_capacity(run.reach.len());
    for (observed, probability) in run.reach {
        let mut record = ObservationPolicy {
            observation: ObservationVector(observed.clone()),
            probability,
            choices: Vec::new(),
            argmax: Vec::new(),
            slot_values: Vec::new(),
            value: 0.0,
        };
        for p in 0..spec.slot_count() {
            let decision = run
                .decisions
                .remove(&(k_count + p, observed.clone()))
                .ok_or(PolicyError::InconsistentObservation { step: k_count + p })?;
            record.choices.push(OptionId::new(p as u32 + 1, decision.best as u32 + 1));
            record.argmax.push(decision.tied.iter().map(|&q| q as u32 + 1).collect());
            record.value += decision.immediate[decision.best];
            record.slot_values.push(decision.immediate);
        }
        entries.push(record);
    }
    Ok(Solution { profile: spec.active, entries, value })
}
