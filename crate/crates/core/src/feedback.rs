//! Accept/reject feedback and the beta-binomial acceptance estimates.
//!
//! One explanation-level verdict is attributed to every slot option shown
//! in that explanation. Counts are a fold over the event log on top of an
//! optional bootstrap seeded from configuration, so replaying the log must
//! always reproduce the live counts.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{OptionId, ProfileId, PromptCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn flipped(self) -> Self {
        match self {
            Verdict::Accepted => Verdict::Rejected,
            Verdict::Rejected => Verdict::Accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackEvent {
    pub sequence: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub profile: ProfileId,
    /// Exactly one option per slot, in slot order.
    pub shown: Vec<OptionId>,
    pub verdict: Verdict,
    pub explanation_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("sequence conflict: expected {expected}, got {got}")]
    SequenceConflict { expected: u64, got: u64 },
    #[error("unknown profile {0}")]
    UnknownProfile(ProfileId),
    #[error("no counts for profile {profile}, option {option}")]
    NotFound { profile: ProfileId, option: OptionId },
    #[error("shown options must cover every slot exactly once: {0}")]
    Coverage(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub accepted: u64,
    pub rejected: u64,
}

impl Counts {
    pub const fn new(accepted: u64, rejected: u64) -> Self {
        Self { accepted, rejected }
    }

    /// Numerator and denominator of the posterior mean.
    pub fn posterior_parts(&self, prior: &BetaPrior) -> (f64, f64) {
        let a = self.accepted as f64 + prior.a0;
        (a, self.accepted as f64 + self.rejected as f64 + prior.a0 + prior.b0)
    }

    /// Posterior mean acceptance probability under `prior`.
    pub fn estimate(&self, prior: &BetaPrior) -> f64 {
        let (num, den) = self.posterior_parts(prior);
        num / den
    }

    fn apply(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::Accepted => self.accepted += 1,
            Verdict::Rejected => self.rejected += 1,
        }
    }
}

/// Beta prior on acceptance probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaPrior {
    pub a0: f64,
    pub b0: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { a0: 1.0, b0: 1.0 }
    }
}

impl BetaPrior {
    pub fn is_valid(&self) -> bool {
        self.a0 > 0.0 && self.b0 > 0.0 && self.a0.is_finite() && self.b0.is_finite()
    }
}

/// Per-(profile, slot, option) accept/reject counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceCounts {
    /// Sequence number of the last applied event, 0 before any.
    pub last_sequence: u64,
    /// Sequence of the last event per profile; drives snapshot freshness.
    pub profile_sequence: BTreeMap<ProfileId, u64>,
    pub counts: BTreeMap<ProfileId, BTreeMap<OptionId, Counts>>,
    slot_sizes: Vec<u32>,
}

impl AcceptanceCounts {
    /// Zero counts for every (profile, option) in the catalog.
    pub fn zeroed(catalog: &PromptCatalog) -> Self {
        let mut counts = BTreeMap::new();
        let mut profile_sequence = BTreeMap::new();
        for profile in &catalog.profiles {
            let per: BTreeMap<OptionId, Counts> =
                catalog.option_ids().map(|id| (id, Counts::default())).collect();
            counts.insert(profile.id, per);
            profile_sequence.insert(profile.id, 0);
        }
        Self {
            last_sequence: 0,
            profile_sequence,
            counts,
            slot_sizes: catalog.option_counts().into_iter().map(|n| n as u32).collect(),
        }
    }

    /// Zero counts plus bootstrap values from prior experience.
    pub fn bootstrapped(
        catalog: &PromptCatalog,
        bootstrap: &BTreeMap<ProfileId, BTreeMap<OptionId, Counts>>,
    ) -> Result<Self, LedgerError> {
        let mut out = Self::zeroed(catalog);
        for (profile, per) in bootstrap {
            let target = out.counts.get_mut(profile).ok_or(LedgerError::UnknownProfile(*profile))?;
            for (option, counts) in per {
                let slot = target
                    .get_mut(option)
                    .ok_or(LedgerError::NotFound { profile: *profile, option: *option })?;
                *slot = *counts;
            }
        }
        Ok(out)
    }

    pub fn get(&self, profile: ProfileId, option: OptionId) -> Result<Counts, LedgerError> {
        self.counts
            .get(&profile)
            .and_then(|per| per.get(&option))
            .copied()
            .ok_or(LedgerError::NotFound { profile, option })
    }

    /// Posterior mean `r_{n,p,q}`.
    pub fn estimate(
        &self,
        profile: ProfileId,
        option: OptionId,
        prior: &BetaPrior,
    ) -> Result<f64, LedgerError> {
        Ok(self.get(profile, option)?.estimate(prior))
    }

    pub fn profile_sequence(&self, profile: ProfileId) -> u64 {
        self.profile_sequence.get(&profile).copied().unwrap_or(0)
    }

    /// Checks an event against the current state without applying it.
    pub fn check(&self, event: &FeedbackEvent) -> Result<(), LedgerError> {
        let expected = self.last_sequence + 1;
        if event.sequence != expected {
            return Err(LedgerError::SequenceConflict { expected, got: event.sequence });
        }
        let per = self.counts.get(&event.profile).ok_or(LedgerError::UnknownProfile(event.profile))?;
        if event.shown.len() != self.slot_sizes.len() {
            return Err(LedgerError::Coverage(alloc::format!(
                "{} options shown for {} slots",
                event.shown.len(),
                self.slot_sizes.len()
            )));
        }
        for (p, option) in event.shown.iter().enumerate() {
            if option.slot != p as u32 + 1 {
                return Err(LedgerError::Coverage(alloc::format!(
                    "position {} holds {option}",
                    p + 1
                )));
            }
            if !per.contains_key(option) {
                return Err(LedgerError::NotFound { profile: event.profile, option: *option });
            }
        }
        Ok(())
    }

    /// Applies one event: every shown option of the event's profile gets
    /// its acceptance or rejection counter incremented.
    pub fn record(&mut self, event: &FeedbackEvent) -> Result<(), LedgerError> {
        self.check(event)?;
        let per = self.counts.get_mut(&event.profile).expect("checked above");
        for option in &event.shown {
            per.get_mut(option).expect("checked above").apply(event.verdict);
        }
        self.last_sequence = event.sequence;
        self.profile_sequence.insert(event.profile, event.sequence);
        Ok(())
    }

    /// Folds `events` onto `base`. On failure returns the 0-based index of
    /// the offending event.
    pub fn replay<'a>(
        base: &Self,
        events: impl IntoIterator<Item = &'a FeedbackEvent>,
    ) -> Result<Self, (usize, LedgerError)> {
        let mut out = base.clone();
        for (i, event) in events.into_iter().enumerate() {
            out.record(event).map_err(|e| (i, e))?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Profile, PromptSlot, SlotOption};
    use alloc::string::ToString;
    use alloc::vec;

    fn catalog() -> PromptCatalog {
        let slot = |p: u32, n: u32| PromptSlot {
            name: alloc::format!("slot{p}"),
            options: (1..=n)
                .map(|q| SlotOption {
                    id: OptionId::new(p, q),
                    label: "l".into(),
                    prompt_text: "t".into(),
                    alignment: BTreeMap::new(),
                })
                .collect(),
        };
        PromptCatalog {
            profiles: vec![Profile { id: ProfileId(1), name: "a".into(), description: "d".into() }],
            slots: vec![slot(1, 2), slot(2, 2), slot(3, 3)],
        }
    }

    fn event(sequence: u64, shown: [(u32, u32); 3], verdict: Verdict) -> FeedbackEvent {
        FeedbackEvent {
            sequence,
            timestamp_ms: 0,
            profile: ProfileId(1),
            shown: shown.iter().map(|&(p, q)| OptionId::new(p, q)).collect(),
            verdict,
            explanation_id: "e".to_string(),
        }
    }

    #[test]
    fn uniform_prior_at_bootstrap() {
        let counts = AcceptanceCounts::zeroed(&catalog());
        let r = counts.estimate(ProfileId(1), OptionId::new(1, 1), &BetaPrior::default()).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn accept_increments_every_shown_option() {
        let mut counts = AcceptanceCounts::zeroed(&catalog());
        counts.record(&event(1, [(1, 1), (2, 1), (3, 2)], Verdict::Accepted)).unwrap();
        for (p, q) in [(1, 1), (2, 1), (3, 2)] {
            assert_eq!(counts.get(ProfileId(1), OptionId::new(p, q)).unwrap(), Counts::new(1, 0));
        }
        assert_eq!(counts.get(ProfileId(1), OptionId::new(3, 1)).unwrap(), Counts::default());
        assert_eq!(counts.profile_sequence(ProfileId(1)), 1);
    }

    #[test]
    fn duplicate_or_gapped_sequence_conflicts() {
        let mut counts = AcceptanceCounts::zeroed(&catalog());
        for s in 1..=5 {
            counts.record(&event(s, [(1, 1), (2, 1), (3, 1)], Verdict::Rejected)).unwrap();
        }
        let dup = counts.record(&event(5, [(1, 1), (2, 1), (3, 1)], Verdict::Rejected));
        assert_eq!(dup, Err(LedgerError::SequenceConflict { expected: 6, got: 5 }));
        let gap = counts.record(&event(7, [(1, 1), (2, 1), (3, 1)], Verdict::Rejected));
        assert!(matches!(gap, Err(LedgerError::SequenceConflict { .. })));
        assert_eq!(counts.last_sequence, 5);
    }

    #[test]
    fn coverage_is_enforced() {
        let mut counts = AcceptanceCounts::zeroed(&catalog());
        let mut bad = event(1, [(1, 1), (2, 1), (3, 1)], Verdict::Accepted);
        bad.shown.swap(0, 1);
        assert!(matches!(counts.record(&bad), Err(LedgerError::Coverage(_))));
        bad.shown = vec![OptionId::new(1, 1)];
        assert!(matches!(counts.record(&bad), Err(LedgerError::Coverage(_))));
        let unknown = event(1, [(1, 1), (2, 1), (3, 4)], Verdict::Accepted);
        assert!(matches!(counts.record(&unknown), Err(LedgerError::NotFound { .. })));
    }

    #[test]
    fn unknown_option_is_not_found() {
        let counts = AcceptanceCounts::zeroed(&catalog());
        let err = counts.estimate(ProfileId(1), OptionId::new(4, 1), &BetaPrior::default());
        assert!(matches!(err, Err(LedgerError::NotFound { .. })));
        let err = counts.estimate(ProfileId(2), OptionId::new(1, 1), &BetaPrior::default());
        assert!(matches!(err, Err(LedgerError::NotFound { .. })));
    }

    #[test]
    fn replay_of_empty_log_is_identity_and_flip_swaps() {
        let base = AcceptanceCounts::zeroed(&catalog());
        assert_eq!(AcceptanceCounts::replay(&base, []).unwrap(), base);

        let log: Vec<FeedbackEvent> = (1..=6)
            .map(|s| {
                let v = if s % 3 == 0 { Verdict::Rejected } else { Verdict::Accepted };
                event(s, [(1, 1), (2, 2), (3, 3)], v)
            })
            .collect();
        let flipped: Vec<FeedbackEvent> = log
            .iter()
            .cloned()
            .map(|mut e| {
                e.verdict = e.verdict.flipped();
                e
            })
            .collect();
        let a = AcceptanceCounts::replay(&base, &log).unwrap();
        let b = AcceptanceCounts::replay(&base, &flipped).unwrap();
        for id in catalog().option_ids() {
            let x = a.get(ProfileId(1), id).unwrap();
            let y = b.get(ProfileId(1), id).unwrap();
            assert_eq!((x.accepted, x.rejected), (y.rejected, y.accepted));
        }
    }

    #[test]
    fn replay_reports_failing_index() {
        let base = AcceptanceCounts::zeroed(&catalog());
        let log = [
            event(1, [(1, 1), (2, 1), (3, 1)], Verdict::Accepted),
            event(3, [(1, 1), (2, 1), (3, 1)], Verdict::Accepted),
        ];
        let err = AcceptanceCounts::replay(&base, &log).unwrap_err();
        assert_eq!(err.0, 1);
    }
}
