//! Explanation-prompt template filling.
//!
//! A template carries named holes written `<name>`: `<user_profile>`, one
//! hole per catalog slot (the slot name), and the context holes
//! `<problem_context>`, `<planner_input>` and `<plan>`. Filling is a single
//! left-to-right pass, so inserted text is never re-scanned.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{OptionId, Profile, PromptCatalog};

pub const USER_PROFILE: &str = "user_profile";
pub const PROBLEM_CONTEXT: &str = "problem_context";
pub const PLANNER_INPUT: &str = "planner_input";
pub const PLAN: &str = "plan";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("hole <{0}> appears {1} times, expected exactly once")]
    HoleCount(String, usize),
    #[error("no content for hole <{0}>")]
    MissingContent(String),
    #[error("content for hole <{0}> contains a hole marker")]
    MarkerInContent(String),
    #[error("choices do not cover the slots: {0}")]
    Choices(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub version: u32,
    pub text: String,
}

/// Context injected next to the slot texts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptContext {
    /// Natural-language problem description.
    pub problem: String,
    /// Planner input document.
    pub planner_input: String,
    /// The plan being explained.
    pub plan: String,
}

fn marker(name: &str) -> String {
    format!("<{name}>")
}

impl PromptTemplate {
    /// Hole names required for `catalog`, in a fixed order.
    pub fn holes(catalog: &PromptCatalog) -> Vec<String> {
        let mut holes = Vec::with_capacity(catalog.slots.len() + 4);
        holes.push(String::from(USER_PROFILE));
        holes.extend(catalog.slots.iter().map(|s| s.name.clone()));
        holes.push(String::from(PROBLEM_CONTEXT));
        holes.push(String::from(PLANNER_INPUT));
        holes.push(String::from(PLAN));
        holes
    }

    pub fn validate(&self, catalog: &PromptCatalog) -> Result<(), TemplateError> {
        for hole in Self::holes(catalog) {
            let n = self.text.matches(&marker(&hole)).count();
            if n != 1 {
                return Err(TemplateError::HoleCount(hole, n));
            }
        }
        Ok(())
    }

    /// Replaces every hole with its verbatim text.
    pub fn fill(
        &self,
        catalog: &PromptCatalog,
        profile: &Profile,
        choices: &[OptionId],
        context: &PromptContext,
    ) -> Result<String, TemplateError> {
        self.validate(catalog)?;
        if choices.len() != catalog.slots.len() {
            return Err(TemplateError::Choices(format!(
                "{} choices for {} slots",
                choices.len(),
                catalog.slots.len()
            )));
        }
        let mut content: BTreeMap<String, &str> = BTreeMap::new();
        content.insert(marker(USER_PROFILE), &profile.description);
        for (p, (slot, choice)) in catalog.slots.iter().zip(choices).enumerate() {
            if choice.slot as usize != p + 1 {
                return Err(TemplateError::Choices(format!("position {} holds {choice}", p + 1)));
            }
            let option = catalog
                .option(*choice)
                .ok_or_else(|| TemplateError::Choices(format!("unknown option {choice}")))?;
            content.insert(marker(&slot.name), &option.prompt_text);
        }
        content.insert(marker(PROBLEM_CONTEXT), &context.problem);
        content.insert(marker(PLANNER_INPUT), &context.planner_input);
        content.insert(marker(PLAN), &context.plan);

        for (m, value) in &content {
            let name = &m[1..m.len() - 1];
            if value.trim().is_empty() {
                return Err(TemplateError::MissingContent(String::from(name)));
            }
            if content.keys().any(|other| value.contains(other.as_str())) {
                return Err(TemplateError::MarkerInContent(String::from(name)));
            }
        }

        let mut out = String::with_capacity(self.text.len() + 256);
        let mut rest = self.text.as_str();
        while let Some(pos) = rest.find('<') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            match content.iter().find(|(m, _)| tail.starts_with(m.as_str())) {
                Some((m, value)) => {
                    out.push_str(value);
                    rest = &tail[m.len()..];
                }
                None => {
                    out.push('<');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// True if `text` still contains one of the catalog's hole markers.
pub fn has_hole_marker(text: &str, catalog: &PromptCatalog) -> bool {
    PromptTemplate::holes(catalog).iter().any(|h| text.contains(&marker(h)))
}
