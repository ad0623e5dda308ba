//! Assembly of the profile POMDP.
//!
//! The flow has `S_total = K + P + 1` steps: `K` observation steps, each
//! drawing a skill's true and predicted level jointly from the profile's
//! table, `P` prompt-selection steps, and one closing step into the
//! terminal state. Rewards sit on the `SelectPrompt_p_q` actions and depend
//! on the profile and the full hidden skill vector.

use alloc::string::String;
use alloc::vec::Vec;

use crate::feedback::{AcceptanceCounts, BetaPrior, Counts, LedgerError};
use crate::model::{
    CognitiveModel, CognitiveSkill, JointTable, ModelError, ObservationVector, OptionId, ProfileId,
    PromptCatalog, SkillVector,
};
use crate::utility::{self, Alignment, AlignmentTargets, UtilityError, UtilityParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid cognitive model: {0}")]
    InvalidCognitiveModel(String),
    #[error("profile {profile}, skill `{skill}`: joint table has no probability mass")]
    ZeroProbability { profile: ProfileId, skill: String },
    #[error(transparent)]
    Counts(#[from] LedgerError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error("reward {value} for {option} outside [b_min, b_max]")]
    RewardRange { option: OptionId, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotInfo {
    pub name: String,
    pub options: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardEntry {
    pub hidden: SkillVector,
    pub alignment: Alignment,
    pub value: f64,
}

/// Everything profile-specific: joint tables, feedback counts, and the
/// reward of each `SelectPrompt_p_q` under each hidden skill vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBlock {
    pub profile: ProfileId,
    /// One table per skill, skill order.
    pub joint: Vec<JointTable>,
    /// `counts[p][q]`, 0-based.
    pub counts: Vec<Vec<Counts>>,
    /// `estimates[p][q]` = posterior mean acceptance probability.
    pub estimates: Vec<Vec<f64>>,
    /// `rewards[p][q][u]` with `u` indexing [`PomdpSpec::hidden_vectors`].
    pub rewards: Vec<Vec<Vec<RewardEntry>>>,
}

impl ProfileBlock {
    /// Stochastic outcomes of `ObserveCogSkill_k` (1-based levels).
    pub fn observe_branches(&self, skill: usize) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.joint[skill].iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, p)| (i as u32 + 1, j as u32 + 1, *p))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStep {
    /// Step index is 0-based; `branches` counts (true, predicted) outcomes.
    Observe { skill: usize, branches: usize },
    Select { slot: usize, actions: usize },
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpSpec {
    pub skills: Vec<CognitiveSkill>,
    pub slots: Vec<SlotInfo>,
    /// `alignments[p][q]`, 0-based.
    pub alignments: Vec<Vec<AlignmentTargets>>,
    pub profiles: Vec<ProfileBlock>,
    pub active: ProfileId,
    pub params: UtilityParams,
    pub prior: BetaPrior,
}

impl PomdpSpec {
    pub fn build(
        catalog: &PromptCatalog,
        cognitive: &CognitiveModel,
        counts: &AcceptanceCounts,
        params: &UtilityParams,
        prior: &BetaPrior,
        active: ProfileId,
    ) -> Result<Self, BuildError> {
        params.validate()?;
        for block in &cognitive.profiles {
            for (skill, table) in &block.tables {
                if table.iter().flatten().all(|p| *p == 0.0) {
                    return Err(BuildError::ZeroProbability {
                        profile: block.profile,
                        skill: skill.clone(),
                    });
                }
            }
        }
        let report = cognitive.validate();
        if !report.is_ok() {
            return Err(BuildError::InvalidCognitiveModel(alloc::format!("{report}")));
        }
        catalog.validate(&cognitive.skills)?;
        if cognitive.profile(active).is_none() || catalog.profile(active).is_none() {
            return Err(ModelError::UnknownProfile(active).into());
        }
        if catalog.profiles.len() != cognitive.profiles.len() {
            return Err(ModelError::Catalog(alloc::format!(
                "catalog has {} profiles, cognitive model has {}",
                catalog.profiles.len(),
                cognitive.profiles.len()
            ))
            .into());
        }

        let skills = cognitive.skills.clone();
        let alignments = catalog
            .slots
            .iter()
            .map(|slot| {
                slot.options
                    .iter()
                    .map(|o| AlignmentTargets::resolve(o, &skills))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let slots = catalog
            .slots
            .iter()
            .map(|s| SlotInfo { name: s.name.clone(), options: s.options.len() })
            .collect();
        let hidden = enumerate_levels(&skills.iter().map(|s| s.level_count()).collect::<Vec<_>>());

        let mut profiles = Vec::with_capacity(catalog.profiles.len());
        for profile in &catalog.profiles {
            let joint = cognitive.tables_for(profile.id)?.into_iter().cloned().collect();
            let mut block_counts = Vec::new();
            let mut estimates = Vec::new();
            let mut rewards = Vec::new();
            for (p, slot) in catalog.slots.iter().enumerate() {
                let mut slot_counts = Vec::new();
                let mut slot_estimates = Vec::new();
                let mut slot_rewards = Vec::new();
                for (q, option) in slot.options.iter().enumerate() {
                    let c = counts.get(profile.id, option.id)?;
                    let r = c.estimate(prior);
                    let per_u = hidden
                        .iter()
                        .map(|u| {
                            let alignment = alignments[p][q].classify(u);
                            let value =
                                utility::utility_with_kappa(params.kappa(alignment), r, params)?;
                            if !(value >= params.b_min && value <= params.b_max) {
                                return Err(BuildError::RewardRange { option: option.id, value });
                            }
                            Ok(RewardEntry { hidden: u.clone(), alignment, value })
                        })
                        .collect::<Result<Vec<_>, BuildError>>()?;
                    slot_counts.push(c);
                    slot_estimates.push(r);
                    slot_rewards.push(per_u);
                }
                block_counts.push(slot_counts);
                estimates.push(slot_estimates);
                rewards.push(slot_rewards);
            }
            profiles.push(ProfileBlock {
                profile: profile.id,
                joint,
                counts: block_counts,
                estimates,
                rewards,
            });
        }

        Ok(Self { skills, slots, alignments, profiles, active, params: *params, prior: *prior })
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Number of flow transitions, `K + P + 1`.
    pub fn s_total(&self) -> usize {
        self.skill_count() + self.slot_count() + 1
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.skills.iter().map(|s| s.level_count()).collect()
    }

    pub fn block(&self, profile: ProfileId) -> Option<&ProfileBlock> {
        self.profiles.iter().find(|b| b.profile == profile)
    }

    pub fn active_block(&self) -> &ProfileBlock {
        self.block(self.active).expect("active profile checked at build")
    }

    /// All hidden skill vectors, lexicographic with skill 1 most significant.
    pub fn hidden_vectors(&self) -> Vec<SkillVector> {
        enumerate_levels(&self.level_counts())
    }

    /// All observation vectors in the same order as [`Self::hidden_vectors`].
    pub fn observation_vectors(&self) -> Vec<ObservationVector> {
        self.hidden_vectors().into_iter().map(|u| ObservationVector(u.0)).collect()
    }

    pub fn flow(&self) -> Vec<FlowStep> {
        let mut steps: Vec<FlowStep> = self
            .skills
            .iter()
            .enumerate()
            .map(|(k, s)| FlowStep::Observe { skill: k, branches: s.level_count().pow(2) })
            .collect();
        steps.extend(
            self.slots
                .iter()
                .enumerate()
                .map(|(p, s)| FlowStep::Select { slot: p, actions: s.options }),
        );
        steps.push(FlowStep::End);
        steps
    }

    /// Reward-bearing actions (`SelectPrompt_p_q`) in the flow.
    pub fn reward_action_count(&self) -> usize {
        self.slots.iter().map(|s| s.options).sum()
    }

    /// Guarded reward entries per profile: `sum_p |options_p| * prod_k M_k`.
    pub fn reward_entry_count(&self) -> usize {
        self.reward_action_count() * self.level_counts().iter().product::<usize>()
    }
}

/// Mixed-radix enumeration of 1-based level vectors.
pub(crate) fn enumerate_levels(radices: &[usize]) -> Vec<SkillVector> {
    let total: usize = radices.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut current: Vec<u32> = alloc::vec![1; radices.len()];
    if radices.contains(&0) {
        return out;
    }
    loop {
        out.push(SkillVector(current.clone()));
        let mut k = radices.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if (current[k] as usize) < radices[k] {
                current[k] += 1;
                break;
            }
            current[k] = 1;
        }
    }
}
