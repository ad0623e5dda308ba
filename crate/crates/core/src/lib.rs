//! Policy synthesis core for self-adaptive task-plan explanations.
//!
//! The crate models a user's hidden cognitive state and explanation
//! preferences as a finite-horizon POMDP. Hidden skill levels are drawn
//! jointly with a predictor's output, the policy observes only the
//! predictions, and each prompt slot (level of detail, tone, format) is
//! filled with the option maximising expected acceptance utility.
//!
//! Everything here is pure computation over owned values and builds
//! without `std`; persistence, JSON, generation backends and the service
//! loop live in the `tailor` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod feedback;
pub mod model;
pub mod planner;
pub mod policy;
pub mod pomdp;
pub mod prism;
pub mod prompt;
#[cfg(feature = "testing")]
pub mod testing;
pub mod utility;
pub mod value_iteration;

pub use feedback::{AcceptanceCounts, BetaPrior, Counts, FeedbackEvent, LedgerError, Verdict};
pub use model::{
    CognitiveModel, CognitiveSkill, ModelError, ObservationVector, OptionId, Profile, ProfileId,
    PromptCatalog, PromptSlot, SkillVector, SlotOption, ValidationReport, Violation,
};
pub use policy::{Belief, PolicyEntry, PolicyError, PolicySnapshot, Provenance, Solution};
pub use planner::{Plan, PlanError, PlanList, PlannerInput};
pub use pomdp::{BuildError, PomdpSpec};
pub use prompt::{PromptContext, PromptTemplate, TemplateError};
pub use utility::{Alignment, UtilityError, UtilityParams};
