//! Random small instances for property and cross-solver tests.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::feedback::{AcceptanceCounts, BetaPrior, Counts};
use crate::model::{
    CognitiveModel, CognitiveSkill, OptionId, Profile, ProfileId, ProfileTables, PromptCatalog,
    PromptSlot, SlotOption,
};
use crate::pomdp::{BuildError, PomdpSpec};
use crate::utility::UtilityParams;

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub skills: usize,
    pub levels: usize,
    pub slots: usize,
    pub options: usize,
    pub profiles: usize,
    /// Counts are drawn from `0..=max_count`; small values make ties common.
    pub max_count: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { skills: 2, levels: 3, slots: 3, options: 3, profiles: 3, max_count: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub catalog: PromptCatalog,
    pub cognitive: CognitiveModel,
    pub counts: AcceptanceCounts,
    pub params: UtilityParams,
    pub prior: BetaPrior,
}

impl Instance {
    pub fn spec(&self, active: ProfileId) -> Result<PomdpSpec, BuildError> {
        PomdpSpec::build(&self.catalog, &self.cognitive, &self.counts, &self.params, &self.prior, active)
    }

    pub fn profile_ids(&self) -> impl Iterator<Item = ProfileId> + '_ {
        self.catalog.profiles.iter().map(|p| p.id)
    }
}

/// Normalised table with roughly a fifth of the cells zeroed.
fn joint_table(rng: &mut impl Rng, m: usize) -> Vec<Vec<f64>> {
    loop {
        let mut table: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..m)
                    .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.01..1.0) })
                    .collect()
            })
            .collect();
        let total: f64 = table.iter().flatten().sum();
        if total > 0.0 {
            for cell in table.iter_mut().flatten() {
                *cell /= total;
            }
            return table;
        }
    }
}

pub fn random_instance(rng: &mut impl Rng, limits: Limits) -> Instance {
    let skills: Vec<CognitiveSkill> = (0..rng.random_range(1..=limits.skills))
        .map(|k| CognitiveSkill {
            name: format!("skill{}", k + 1),
            levels: (0..rng.random_range(1..=limits.levels)).map(|i| format!("l{}", i + 1)).collect(),
        })
        .collect();
    let profiles: Vec<Profile> = (1..=rng.random_range(1..=limits.profiles) as u32)
        .map(|n| Profile { id: ProfileId(n), name: format!("profile{n}"), description: format!("profile {n}") })
        .collect();

    let slots: Vec<PromptSlot> = (1..=rng.random_range(1..=limits.slots) as u32)
        .map(|p| PromptSlot {
            name: format!("slot{p}"),
            options: (1..=rng.random_range(2..=limits.options.max(2)) as u32)
                .map(|q| {
                    let mut alignment = BTreeMap::new();
                    for skill in &skills {
                        if rng.random_bool(0.5) {
                            let mut levels = skill.levels.clone();
                            levels.shuffle(rng);
                            levels.truncate(rng.random_range(1..=levels.len()));
                            levels.sort();
                            alignment.insert(skill.name.clone(), levels);
                        }
                    }
                    SlotOption {
                        id: OptionId::new(p, q),
                        label: format!("p{p}_q{q}"),
                        prompt_text: format!("text for p{p}_q{q}"),
                        alignment,
                    }
                })
                .collect(),
        })
        .collect();

    let cognitive = CognitiveModel {
        skills: skills.clone(),
        profiles: profiles
            .iter()
            .map(|profile| ProfileTables {
                profile: profile.id,
                tables: skills
                    .iter()
                    .map(|s| (s.name.clone(), joint_table(rng, s.level_count())))
                    .collect::<BTreeMap<String, _>>(),
            })
            .collect(),
    };
    let catalog = PromptCatalog { profiles, slots };
    let bootstrap = catalog
        .profiles
        .iter()
        .map(|profile| {
            let per = catalog
                .option_ids()
                .map(|id| {
                    let c = Counts::new(rng.random_range(0..=limits.max_count), rng.random_range(0..=limits.max_count));
                    (id, c)
                })
                .collect();
            (profile.id, per)
        })
        .collect();
    let counts = AcceptanceCounts::bootstrapped(&catalog, &bootstrap).expect("ids come from the catalog");
    Instance { catalog, cognitive, counts, params: UtilityParams::default(), prior: BetaPrior::default() }
}

/// Instance number `seed` of a reproducible stream.
pub fn seeded_instance(seed: u64, limits: Limits) -> Instance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), limits)
}
