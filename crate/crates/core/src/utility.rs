//! Prospect-theoretic acceptance utility.
//!
//! `utility = b_min + kappa * (b_max - b_min) * r^alpha`, where `r` is the
//! estimated acceptance probability of an option and `kappa` penalises
//! misalignment between the option and the user's hidden skill levels.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{CognitiveSkill, ModelError, SkillVector, SlotOption};

/// Tolerance on the total mass of a belief passed to [`expected_utility`].
pub const BELIEF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UtilityError {
    #[error("acceptance probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("belief mass {0} is not 1")]
    Unnormalized(f64),
    #[error("invalid utility parameters: {0}")]
    Params(&'static str),
    #[error(transparent)]
    Config(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityParams {
    pub b_min: f64,
    pub b_max: f64,
    pub alpha: f64,
    pub kappa_match: f64,
    pub kappa_okay: f64,
    pub kappa_mismatch: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            b_min: 5.0,
            b_max: 20.0,
            alpha: 0.88,
            kappa_match: 1.0,
            kappa_okay: 0.75,
            kappa_mismatch: 0.5,
        }
    }
}

impl UtilityParams {
    pub fn validate(&self) -> Result<(), UtilityError> {
        let finite = [self.b_min, self.b_max, self.alpha, self.kappa_okay, self.kappa_mismatch]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(UtilityError::Params("non-finite value"));
        }
        if !(self.b_min >= 0.0 && self.b_max > self.b_min) {
            return Err(UtilityError::Params("need b_max > b_min >= 0"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(UtilityError::Params("need 0 < alpha <= 1"));
        }
        if self.kappa_match != 1.0 {
            return Err(UtilityError::Params("kappa_match must be 1"));
        }
        if !(self.kappa_mismatch > 0.0
            && self.kappa_mismatch <= self.kappa_okay
            && self.kappa_okay <= self.kappa_match)
        {
            return Err(UtilityError::Params("need 0 < kappa_mismatch <= kappa_okay <= 1"));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.b_max - self.b_min
    }

    pub fn kappa(&self, alignment: Alignment) -> f64 {
        match alignment {
            Alignment::Match => self.kappa_match,
            Alignment::Okay => self.kappa_okay,
            Alignment::Mismatch => self.kappa_mismatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Match,
    Okay,
    Mismatch,
}

impl Alignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::Match => "match",
            Alignment::Okay => "okay",
            Alignment::Mismatch => "mismatch",
        }
    }
}

/// An option's alignment profile resolved to skill and level indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignmentTargets {
    /// (0-based skill index, intended[level - 1]) for each named skill.
    pub targets: Vec<(usize, Vec<bool>)>,
}

impl AlignmentTargets {
    pub fn resolve(option: &SlotOption, skills: &[CognitiveSkill]) -> Result<Self, ModelError> {
        let mut targets = Vec::with_capacity(option.alignment.len());
        for (name, levels) in &option.alignment {
            let k = skills
                .iter()
                .position(|s| &s.name == name)
                .ok_or_else(|| ModelError::UnknownSkill(name.clone()))?;
            let skill = &skills[k];
            let mut mask = alloc::vec![false; skill.level_count()];
            for label in levels {
                let i = skill.level_index(label).ok_or_else(|| ModelError::UnknownLevel {
                    skill: name.clone(),
                    level: label.clone(),
                })?;
                mask[i as usize - 1] = true;
            }
            targets.push((k, mask));
        }
        targets.sort_by_key(|(k, _)| *k);
        Ok(Self { targets })
    }

    /// Match when every named skill is at an intended level, mismatch when
    /// none is, okay otherwise. Options naming no skill always match.
    pub fn classify(&self, hidden: &SkillVector) -> Alignment {
        let hits = self
            .targets
            .iter()
            .filter(|(k, mask)| {
                hidden.0.get(*k).is_some_and(|&level| {
                    mask.get((level as usize).wrapping_sub(1)).copied().unwrap_or(false)
                })
            })
            .count();
        if hits == self.targets.len() {
            Alignment::Match
        } else if hits == 0 {
            Alignment::Mismatch
        } else {
            Alignment::Okay
        }
    }

    /// Expected kappa under independent per-skill distributions over true
    /// levels (`belief[k][i]`). Hit events are independent across skills,
    /// so only the probabilities of "all hit" and "none hit" are needed.
    pub fn expected_kappa(&self, belief: &[Vec<f64>], params: &UtilityParams) -> f64 {
        if self.targets.is_empty() {
            return params.kappa_match;
        }
        let mut all = 1.0;
        let mut none = 1.0;
        for (k, mask) in &self.targets {
            let hit: f64 = belief[*k]
                .iter()
                .zip(mask)
                .filter(|(_, intended)| **intended)
                .map(|(p, _)| *p)
                .sum();
            all *= hit;
            none *= 1.0 - hit;
        }
        let okay = 1.0 - all - none;
        all * params.kappa_match + okay * params.kappa_okay + none * params.kappa_mismatch
    }
}

/// Classifies `option` against hidden levels `hidden`; returns the class
/// and its coefficient.
pub fn kappa(
    option: &SlotOption,
    skills: &[CognitiveSkill],
    hidden: &SkillVector,
    params: &UtilityParams,
) -> Result<(Alignment, f64), UtilityError> {
    hidden.validate(skills)?;
    let alignment = AlignmentTargets::resolve(option, skills)?.classify(hidden);
    Ok((alignment, params.kappa(alignment)))
}

/// The gain term `r^alpha` in `[0, 1]`.
pub fn gain(r: f64, params: &UtilityParams) -> Result<f64, UtilityError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(UtilityError::Probability(r));
    }
    Ok(libm::pow(r, params.alpha))
}

/// Utility for a known kappa coefficient.
pub fn utility_with_kappa(kappa: f64, r: f64, params: &UtilityParams) -> Result<f64, UtilityError> {
    Ok(params.b_min + kappa * params.span() * gain(r, params)?)
}

/// `Utility(n, p, q, U)` for the option `(p, q)` and hidden levels `U`,
/// given the profile's acceptance estimate `r`.
pub fn utility(
    option: &SlotOption,
    skills: &[CognitiveSkill],
    hidden: &SkillVector,
    r: f64,
    params: &UtilityParams,
) -> Result<f64, UtilityError> {
    let (_, k) = kappa(option, skills, hidden, params)?;
    utility_with_kappa(k, r, params)
}

/// Utility averaged over an explicit belief on hidden skill vectors.
pub fn expected_utility(
    option: &SlotOption,
    skills: &[CognitiveSkill],
    belief: &[(SkillVector, f64)],
    r: f64,
    params: &UtilityParams,
) -> Result<f64, UtilityError> {
    let mass: f64 = belief.iter().map(|(_, p)| p).sum();
    let error = (mass - 1.0).abs();
    if error.is_nan() || error > BELIEF_TOLERANCE || belief.iter().any(|(_, p)| *p < 0.0) {
        return Err(UtilityError::Unnormalized(mass));
    }
    let targets = AlignmentTargets::resolve(option, skills)?;
    let g = gain(r, params)?;
    let mut total = 0.0;
    for (hidden, p) in belief {
        hidden.validate(skills)?;
        let k = params.kappa(targets.classify(hidden));
        total += p * (params.b_min + k * params.span() * g);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;
    use alloc::string::String;
    use alloc::vec;
    use alloc::vec::Vec;

    fn skills() -> Vec<CognitiveSkill> {
        let levels = || vec!["low".into(), "medium".into(), "high".into()];
        vec![
            CognitiveSkill { name: "attention".into(), levels: levels() },
            CognitiveSkill { name: "understanding".into(), levels: levels() },
        ]
    }

    fn option(alignment: &[(&str, &[&str])]) -> SlotOption {
        let alignment: BTreeMap<String, Vec<String>> = alignment
            .iter()
            .map(|(s, ls)| (String::from(*s), ls.iter().map(|l| String::from(*l)).collect()))
            .collect();
        SlotOption {
            id: crate::model::OptionId::new(1, 1),
            label: "x".into(),
            prompt_text: "x".into(),
            alignment,
        }
    }

    const LOW: u32 = 1;
    const HIGH: u32 = 3;

    #[test]
    fn kappa_classes() {
        let p = UtilityParams::default();
        let s = skills();
        let low_attention = option(&[("attention", &["low"])]);
        let both_high = option(&[("attention", &["high"]), ("understanding", &["high"])]);
        assert_eq!(
            kappa(&low_attention, &s, &SkillVector(vec![LOW, HIGH]), &p).unwrap(),
            (Alignment::Match, 1.0)
        );
        assert_eq!(
            kappa(&both_high, &s, &SkillVector(vec![HIGH, LOW]), &p).unwrap(),
            (Alignment::Okay, 0.75)
        );
        assert_eq!(
            kappa(&both_high, &s, &SkillVector(vec![LOW, LOW]), &p).unwrap(),
            (Alignment::Mismatch, 0.5)
        );
    }

    #[test]
    fn kappa_rejects_unknown_skill() {
        let p = UtilityParams::default();
        let err = kappa(&option(&[("memory", &["low"])]), &skills(), &SkillVector(vec![1, 1]), &p);
        assert!(matches!(err, Err(UtilityError::Config(ModelError::UnknownSkill(_)))));
    }

    #[test]
    fn utility_endpoints() {
        let p = UtilityParams::default();
        for k in [0.5, 0.75, 1.0] {
            assert_eq!(utility_with_kappa(k, 0.0, &p).unwrap(), 5.0);
        }
        assert_eq!(utility_with_kappa(1.0, 1.0, &p).unwrap(), 20.0);
        assert!(matches!(utility_with_kappa(1.0, 1.5, &p), Err(UtilityError::Probability(_))));
        assert!(matches!(utility_with_kappa(1.0, -0.1, &p), Err(UtilityError::Probability(_))));
    }

    #[test]
    fn half_match_half_mismatch_at_certain_acceptance() {
        let p = UtilityParams::default();
        let opt = option(&[("attention", &["low"])]);
        let belief = vec![(SkillVector(vec![LOW, LOW]), 0.5), (SkillVector(vec![HIGH, LOW]), 0.5)];
        let eu = expected_utility(&opt, &skills(), &belief, 1.0, &p).unwrap();
        assert!((eu - 16.25).abs() < 1e-12);
    }

    #[test]
    fn point_mass_and_constant_kappa() {
        let p = UtilityParams::default();
        let s = skills();
        let opt = option(&[("attention", &["low", "medium", "high"])]);
        let point = vec![(SkillVector(vec![LOW, HIGH]), 1.0)];
        let plain = utility(&opt, &s, &SkillVector(vec![LOW, HIGH]), 0.3, &p).unwrap();
        assert_eq!(expected_utility(&opt, &s, &point, 0.3, &p).unwrap(), plain);
        let uniform: Vec<_> = (1..=3)
            .flat_map(|a| (1..=3).map(move |u| (SkillVector(vec![a, u]), 1.0 / 9.0)))
            .collect();
        let eu = expected_utility(&opt, &s, &uniform, 0.3, &p).unwrap();
        assert!((eu - plain).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_belief_is_rejected() {
        let p = UtilityParams::default();
        let belief = vec![(SkillVector(vec![1, 1]), 0.7)];
        let err = expected_utility(&option(&[]), &skills(), &belief, 0.5, &p);
        assert!(matches!(err, Err(UtilityError::Unnormalized(_))));
    }

    #[test]
    fn params_validation() {
        assert!(UtilityParams::default().validate().is_ok());
        let d = UtilityParams::default();
        assert!(UtilityParams { b_max: 5.0, ..d }.validate().is_err());
        assert!(UtilityParams { alpha: 1.2, ..d }.validate().is_err());
        assert!(UtilityParams { kappa_okay: 0.4, ..d }.validate().is_err());
    }

    #[test]
    fn factorized_expected_kappa_matches_enumeration() {
        let p = UtilityParams::default();
        let s = skills();
        let opt = option(&[("attention", &["medium", "high"]), ("understanding", &["high"])]);
        let targets = AlignmentTargets::resolve(&opt, &s).unwrap();
        let belief = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]];
        let mut brute = 0.0;
        for a in 1..=3u32 {
            for u in 1..=3u32 {
                let w = belief[0][a as usize - 1] * belief[1][u as usize - 1];
                brute += w * p.kappa(targets.classify(&SkillVector(vec![a, u])));
            }
        }
        assert!((targets.expected_kappa(&belief, &p) - brute).abs() < 1e-15);
    }
}
