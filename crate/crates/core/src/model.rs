//! Shared domain types: profiles, cognitive skills and their joint
//! prediction tables, and the prompt catalog.
//!
//! Levels, skills, slots and options are 1-based so exported models line
//! up with the PRISM naming (`cogSkill_1`, `SelectPrompt_1_2`, ...).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Tolerance on the total mass of a joint prediction table.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown profile {0}")]
    UnknownProfile(ProfileId),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("skill `{skill}` has no level `{level}`")]
    UnknownLevel { skill: String, level: String },
    #[error("unknown option {0}")]
    UnknownOption(OptionId),
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error("invalid cognitive model: {0}")]
    Cognitive(String),
}

/// 1-based profile index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileId(pub u32);

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ProfileId {
    type Err = core::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(ProfileId)
    }
}

/// Slot/option pair `(p, q)`, written `p{p}_q{q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionId {
    pub slot: u32,
    pub option: u32,
}

impl OptionId {
    pub const fn new(slot: u32, option: u32) -> Self {
        Self { slot, option }
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}_q{}", self.slot, self.option)
    }
}

impl FromStr for OptionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected `p<slot>_q<option>`, got `{s}`");
        let rest = s.strip_prefix('p').ok_or_else(bad)?;
        let (slot, option) = rest.split_once("_q").ok_or_else(bad)?;
        let slot: u32 = slot.parse().map_err(|_| bad())?;
        let option: u32 = option.parse().map_err(|_| bad())?;
        if slot == 0 || option == 0 {
            return Err(bad());
        }
        Ok(Self { slot, option })
    }
}

impl Serialize for OptionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub id: ProfileId,
    pub name: String,
    /// Text injected for the `<user_profile>` hole.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CognitiveSkill {
    pub name: String,
    /// Level labels, lowest first. Level `i` is `levels[i - 1]`.
    pub levels: Vec<String>,
}

impl CognitiveSkill {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// 1-based index of a level label.
    pub fn level_index(&self, label: &str) -> Option<u32> {
        self.levels.iter().position(|l| l == label).map(|i| i as u32 + 1)
    }
}

/// Predicted skill level per skill, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationVector(pub Vec<u32>);

/// True (hidden) skill level per skill, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkillVector(pub Vec<u32>);

fn check_levels(levels: &[u32], skills: &[CognitiveSkill]) -> Result<(), ModelError> {
    if levels.len() != skills.len() {
        return Err(ModelError::Cognitive(format!(
            "vector has {} components, expected {}",
            levels.len(),
            skills.len()
        )));
    }
    for (level, skill) in levels.iter().zip(skills) {
        if *level == 0 || *level as usize > skill.level_count() {
            return Err(ModelError::UnknownLevel {
                skill: skill.name.clone(),
                level: level.to_string(),
            });
        }
    }
    Ok(())
}

impl ObservationVector {
    pub fn validate(&self, skills: &[CognitiveSkill]) -> Result<(), ModelError> {
        check_levels(&self.0, skills)
    }
}

impl SkillVector {
    pub fn validate(&self, skills: &[CognitiveSkill]) -> Result<(), ModelError> {
        check_levels(&self.0, skills)
    }
}

impl fmt::Display for ObservationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, level) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{level}")?;
        }
        Ok(())
    }
}

impl FromStr for ObservationVector {
    type Err = String;

    /// Accepts comma-separated 1-based levels, e.g. `3,2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|part| part.trim().parse::<u32>().map_err(|_| format!("bad level `{part}` in `{s}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(ObservationVector)
    }
}

/// `J[i][j] = P(true level i, predicted level j | profile)`, 0-based storage.
pub type JointTable = Vec<Vec<f64>>;

/// Joint tables of one profile, keyed by skill name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTables {
    pub profile: ProfileId,
    pub tables: BTreeMap<String, JointTable>,
}

/// Per-profile joint distributions over (true, predicted) skill levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CognitiveModel {
    pub skills: Vec<CognitiveSkill>,
    pub profiles: Vec<ProfileTables>,
}

/// One failed check found by [`CognitiveModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSkills,
    NoLevels { skill: String },
    DuplicateLevel { skill: String, level: String },
    DuplicateSkill { skill: String },
    ProfileIds { found: Vec<u32> },
    UnknownSkill { profile: ProfileId, skill: String },
    MissingTable { profile: ProfileId, skill: String },
    Shape { profile: ProfileId, skill: String },
    EntryOutOfRange { profile: ProfileId, skill: String, row: usize, col: usize, value: f64 },
    Mass { profile: ProfileId, skill: String, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSkills => f.write_str("model declares no skills"),
            Violation::NoLevels { skill } => write!(f, "skill `{skill}` has no levels"),
            Violation::DuplicateLevel { skill, level } => {
                write!(f, "skill `{skill}` repeats level `{level}`")
            }
            Violation::DuplicateSkill { skill } => write!(f, "skill `{skill}` declared twice"),
            Violation::ProfileIds { found } => {
                write!(f, "profile ids must be 1..N without gaps, found {found:?}")
            }
            Violation::UnknownSkill { profile, skill } => {
                write!(f, "profile {profile}: table for undeclared skill `{skill}`")
            }
            Violation::MissingTable { profile, skill } => {
                write!(f, "profile {profile}: missing table for skill `{skill}`")
            }
            Violation::Shape { profile, skill } => {
                write!(f, "profile {profile}, skill `{skill}`: table is not levels x levels")
            }
            Violation::EntryOutOfRange { profile, skill, row, col, value } => write!(
                f,
                "profile {profile}, skill `{skill}`: entry [{}][{}] = {value} outside [0,1]",
                row + 1,
                col + 1
            ),
            Violation::Mass { profile, skill, sum } => {
                write!(f, "profile {profile}, skill `{skill}`: entries sum to {sum}, expected 1")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn contiguous(ids: impl Iterator<Item = u32>) -> bool {
    let mut ids: Vec<u32> = ids.collect();
    ids.sort_unstable();
    ids.iter().enumerate().all(|(i, id)| *id == i as u32 + 1)
}

impl CognitiveModel {
    pub fn skill_index(&self, name: &str) -> Option<usize> {
        self.skills.iter().position(|s| s.name == name)
    }

    pub fn profile(&self, id: ProfileId) -> Option<&ProfileTables> {
        self.profiles.iter().find(|p| p.profile == id)
    }

    /// Joint tables for `profile` in skill order.
    pub fn tables_for(&self, profile: ProfileId) -> Result<Vec<&JointTable>, ModelError> {
        let block = self.profile(profile).ok_or(ModelError::UnknownProfile(profile))?;
        self.skills
            .iter()
            .map(|s| {
                block
                    .tables
                    .get(&s.name)
                    .ok_or_else(|| ModelError::UnknownSkill(s.name.clone()))
            })
            .collect()
    }

    /// Checks every structural and probabilistic invariant; never fails,
    /// the report lists each violated (profile, skill) cell.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.skills.is_empty() {
            violations.push(Violation::NoSkills);
        }
        for (i, skill) in self.skills.iter().enumerate() {
            if self.skills[..i].iter().any(|s| s.name == skill.name) {
                violations.push(Violation::DuplicateSkill { skill: skill.name.clone() });
            }
            if skill.levels.is_empty() {
                violations.push(Violation::NoLevels { skill: skill.name.clone() });
            }
            for (j, level) in skill.levels.iter().enumerate() {
                if skill.levels[..j].contains(level) {
                    violations.push(Violation::DuplicateLevel {
                        skill: skill.name.clone(),
                        level: level.clone(),
                    });
                }
            }
        }
        if !contiguous(self.profiles.iter().map(|p| p.profile.0)) {
            violations.push(Violation::ProfileIds {
                found: self.profiles.iter().map(|p| p.profile.0).collect(),
            });
        }
        for block in &self.profiles {
            for name in block.tables.keys() {
                if self.skill_index(name).is_none() {
                    violations.push(Violation::UnknownSkill {
                        profile: block.profile,
                        skill: name.clone(),
                    });
                }
            }
            for skill in &self.skills {
                let Some(table) = block.tables.get(&skill.name) else {
                    violations.push(Violation::MissingTable {
                        profile: block.profile,
                        skill: skill.name.clone(),
                    });
                    continue;
                };
                validate_table(block.profile, skill, table, &mut violations);
            }
        }
        ValidationReport { violations }
    }
}

fn validate_table(
    profile: ProfileId,
    skill: &CognitiveSkill,
    table: &JointTable,
    out: &mut Vec<Violation>,
) {
    let m = skill.level_count();
    if table.len() != m || table.iter().any(|row| row.len() != m) {
        out.push(Violation::Shape { profile, skill: skill.name.clone() });
        return;
    }
    let mut sum = 0.0;
    for (row, values) in table.iter().enumerate() {
        for (col, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::EntryOutOfRange {
                    profile,
                    skill: skill.name.clone(),
                    row,
                    col,
                    value,
                });
            }
            sum += value;
        }
    }
    let error = (sum - 1.0).abs();
    if error.is_nan() || error > MASS_TOLERANCE {
        out.push(Violation::Mass { profile, skill: skill.name.clone(), sum });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotOption {
    pub id: OptionId,
    /// Short label used in badges and logs, e.g. "summary".
    pub label: String,
    /// Verbatim text injected into the slot's hole.
    pub prompt_text: String,
    /// Skill name -> level labels this option is intended for. Skills not
    /// named here do not influence the option's alignment.
    #[serde(default)]
    pub alignment: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSlot {
    /// Also the template hole name, e.g. `level_of_detail`.
    pub name: String,
    pub options: Vec<SlotOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptCatalog {
    pub profiles: Vec<Profile>,
    pub slots: Vec<PromptSlot>,
}

impl PromptCatalog {
    pub fn profile(&self, id: ProfileId) -> Option<&Profile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn option(&self, id: OptionId) -> Option<&SlotOption> {
        self.slots
            .get((id.slot as usize).checked_sub(1)?)?
            .options
            .get((id.option as usize).checked_sub(1)?)
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.options.len()).collect()
    }

    /// All option ids in slot-major order.
    pub fn option_ids(&self) -> impl Iterator<Item = OptionId> + '_ {
        self.slots.iter().flat_map(|s| s.options.iter().map(|o| o.id))
    }

    /// Contiguity, non-empty texts, and alignment references against `skills`.
    pub fn validate(&self, skills: &[CognitiveSkill]) -> Result<(), ModelError> {
        if self.profiles.is_empty() {
            return Err(ModelError::Catalog("no profiles".into()));
        }
        for (i, profile) in self.profiles.iter().enumerate() {
            if profile.id.0 != i as u32 + 1 {
                return Err(ModelError::Catalog(format!(
                    "profile ids must be contiguous from 1, found {} at position {}",
                    profile.id,
                    i + 1
                )));
            }
            if profile.description.trim().is_empty() {
                return Err(ModelError::Catalog(format!(
                    "profile {} has an empty description",
                    profile.id
                )));
            }
        }
        if self.slots.is_empty() {
            return Err(ModelError::Catalog("no prompt slots".into()));
        }
        for (p, slot) in self.slots.iter().enumerate() {
            let p = p as u32 + 1;
            if self.slots[..p as usize - 1].iter().any(|s| s.name == slot.name) {
                return Err(ModelError::Catalog(format!("slot name `{}` repeated", slot.name)));
            }
            if slot.options.len() < 2 {
                return Err(ModelError::Catalog(format!(
                    "slot `{}` needs at least 2 options",
                    slot.name
                )));
            }
            for (q, option) in slot.options.iter().enumerate() {
                let expected = OptionId::new(p, q as u32 + 1);
                if option.id != expected {
                    return Err(ModelError::Catalog(format!(
                        "slot `{}`: option {} found where {} expected",
                        slot.name, option.id, expected
                    )));
                }
                if option.prompt_text.trim().is_empty() {
                    return Err(ModelError::Catalog(format!("option {} has empty prompt text", option.id)));
                }
                for (skill_name, levels) in &option.alignment {
                    let skill = skills
                        .iter()
                        .find(|s| &s.name == skill_name)
                        .ok_or_else(|| ModelError::UnknownSkill(skill_name.clone()))?;
                    for level in levels {
                        if skill.level_index(level).is_none() {
                            return Err(ModelError::UnknownLevel {
                                skill: skill_name.clone(),
                                level: level.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
