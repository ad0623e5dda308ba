//! Observation-based policies and the decomposed exact solver.
//!
//! Skills are drawn independently, so the posterior over hidden levels
//! factorises per skill, and prompt selections neither change the hidden
//! state nor reveal anything new. The optimal observation-based policy
//! therefore picks, for each positive-probability observation and each
//! slot, the option with the highest expected utility under that
//! observation's posterior.
//! [`crate::value_iteration`] solves the same problem by backward
//! induction over the explicit belief MDP and must agree with this one.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{JointTable, ObservationVector, OptionId, ProfileId};
use crate::pomdp::PomdpSpec;
use crate::utility::{self, UtilityError};

/// Options whose value is within this fraction of `b_max - b_min` of the
/// best are tied; ties go to the lowest option index.
pub const ARGMAX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("observation {0} has zero probability under the model")]
    ImpossibleObservation(ObservationVector),
    #[error("observation {0} is not in the policy")]
    UnknownObservation(ObservationVector),
    #[error("observation {obs} has {got} components, expected {expected}")]
    ObservationShape { obs: ObservationVector, got: usize, expected: usize },
    #[error("states sharing observation at step {step} expose different actions")]
    InconsistentObservation { step: usize },
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

/// Per-skill posterior over true levels given the predicted levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    /// `per_skill[k][i]` = P(true level i+1 | predicted level of skill k).
    pub per_skill: Vec<Vec<f64>>,
}

/// Factorised Bayes posterior `b_k(i) = J_k[i][j_k] / sum_i' J_k[i'][j_k]`.
pub fn posterior(tables: &[JointTable], obs: &ObservationVector) -> Result<Belief, PolicyError> {
    if obs.0.len() != tables.len() {
        return Err(PolicyError::ObservationShape {
            obs: obs.clone(),
            got: obs.0.len(),
            expected: tables.len(),
        });
    }
    let mut per_skill = Vec::with_capacity(tables.len());
    for (table, &j) in tables.iter().zip(&obs.0) {
        let col = (j as usize).wrapping_sub(1);
        if j == 0 || table.iter().any(|row| col >= row.len()) {
            return Err(PolicyError::ImpossibleObservation(obs.clone()));
        }
        let column: Vec<f64> = table.iter().map(|row| row[col]).collect();
        let mass: f64 = column.iter().sum();
        if mass <= 0.0 {
            return Err(PolicyError::ImpossibleObservation(obs.clone()));
        }
        per_skill.push(column.into_iter().map(|p| p / mass).collect());
    }
    Ok(Belief { per_skill })
}

/// Marginal probability of predicting `obs`.
pub fn observation_probability(tables: &[JointTable], obs: &ObservationVector) -> f64 {
    tables
        .iter()
        .zip(&obs.0)
        .map(|(table, &j)| {
            table.iter().map(|row| row.get((j as usize).wrapping_sub(1)).copied().unwrap_or(0.0)).sum::<f64>()
        })
        .product()
}

/// The most probable prediction vector; ties go to the lexicographically
/// smallest.
pub fn most_likely_observation(spec: &PomdpSpec) -> ObservationVector {
    let tables = &spec.active_block().joint;
    let mut best: Option<(ObservationVector, f64)> = None;
    for obs in spec.observation_vectors() {
        let p = observation_probability(tables, &obs);
        if best.as_ref().is_none_or(|(_, bp)| p > *bp) {
            best = Some((obs, p));
        }
    }
    best.map(|(o, _)| o).unwrap_or(ObservationVector(Vec::new()))
}

/// Index of the chosen option and the tied set (0-based) for one slot.
pub(crate) fn select(values: &[f64], span: f64) -> (usize, Vec<usize>) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = ARGMAX_TOLERANCE * span;
    let tied: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= max - tol)
        .map(|(q, _)| q)
        .collect();
    (tied[0], tied)
}

/// Solver output for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPolicy {
    pub observation: ObservationVector,
    pub probability: f64,
    pub choices: Vec<OptionId>,
    /// Tied-best option indices per slot, 1-based.
    pub argmax: Vec<Vec<u32>>,
    /// Expected utility of every option, `slot_values[p][q]`.
    pub slot_values: Vec<Vec<f64>>,
    /// Sum over slots of the best expected utility.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub profile: ProfileId,
    /// Sorted by observation.
    pub entries: Vec<ObservationPolicy>,
    /// Expected total acceptance reward.
    pub value: f64,
}

impl Solution {
    pub fn entry(&self, obs: &ObservationVector) -> Option<&ObservationPolicy> {
        self.entries.iter().find(|e| &e.observation == obs)
    }

    pub fn snapshot(&self, provenance: Provenance) -> PolicySnapshot {
        PolicySnapshot {
            profile: self.profile,
            entries: self
                .entries
                .iter()
                .map(|e| PolicyEntry {
                    observation: e.observation.clone(),
                    probability: e.probability,
                    choices: e.choices.clone(),
                })
                .collect(),
            value: self.value,
            provenance,
        }
    }
}

/// State the snapshot was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub ledger_sequence: u64,
    pub model_hash: String,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub observation: ObservationVector,
    pub probability: f64,
    pub choices: Vec<OptionId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySnapshot {
    pub profile: ProfileId,
    pub entries: Vec<PolicyEntry>,
    pub value: f64,
    pub provenance: Provenance,
}

impl PolicySnapshot {
    pub fn choices(&self, obs: &ObservationVector) -> Result<&[OptionId], PolicyError> {
        self.entries
            .iter()
            .find(|e| &e.observation == obs)
            .map(|e| e.choices.as_slice())
            .ok_or_else(|| PolicyError::UnknownObservation(obs.clone()))
    }
}

/// One option per slot for `obs` under `policy`.
pub fn prompt_options(
    policy: &PolicySnapshot,
    obs: &ObservationVector,
) -> Result<Vec<OptionId>, PolicyError> {
    policy.choices(obs).map(<[OptionId]>::to_vec)
}

/// Exact solution via per-observation, per-slot maximisation.
pub fn solve_decomposed(spec: &PomdpSpec) -> Result<Solution, PolicyError> {
    let block = spec.active_block();
    let params = &spec.params;
    let span = params.span();
    let mut entries = Vec::new();
    let mut total = 0.0;
    for obs in spec.observation_vectors() {
        let probability = observation_probability(&block.joint, &obs);
        if probability <= 0.0 {
            continue;
        }
        let belief = posterior(&block.joint, &obs)?;
        let mut choices = Vec::with_capacity(spec.slot_count());
        let mut argmax = Vec::with_capacity(spec.slot_count());
        let mut slot_values = Vec::with_capacity(spec.slot_count());
        let mut value = 0.0;
        for (p, targets) in spec.alignments.iter().enumerate() {
            let values = targets
                .iter()
                .enumerate()
                .map(|(q, t)| {
                    let g = utility::gain(block.estimates[p][q], params)?;
                    Ok(params.b_min + span * g * t.expected_kappa(&belief.per_skill, params))
                })
                .collect::<Result<Vec<f64>, UtilityError>>()?;
            let (best, tied) = select(&values, span);
            value += values[best];
            choices.push(OptionId::new(p as u32 + 1, best as u32 + 1));
            argmax.push(tied.into_iter().map(|q| q as u32 + 1).collect());
            slot_values.push(values);
        }
        total += probability * value;
        entries.push(ObservationPolicy { observation: obs, probability, choices, argmax, slot_values, value });
    }
    Ok(Solution { profile: spec.active, entries, value: total })
}
