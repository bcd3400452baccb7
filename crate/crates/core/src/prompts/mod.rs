//! The augmentation and multiple-choice selection prompts, and the parser
//! that maps a model's answer back onto the candidate list.

mod parse;
mod render;
mod templates;

pub use parse::parse_selection;
pub use render::{
    mark_mention, option_letter, render_augmentation_prompt, render_options, render_selection_prompt,
    PromptSettings, ABSTAIN_OPTION, DESCRIPTION_LIMIT, MAX_OPTIONS,
};
pub use templates::{TemplateError, TemplateSet, BUILTIN_VERSION};

use serde::{Deserialize, Serialize};

/// The model's free-text answer about what a mention represents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxiliaryContext {
    pub doc_id: String,
    pub mention_index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseMethod {
    OptionLetter,
    TitleMatch,
    AbstainPhrase,
    FallbackAbstain,
    /// No candidates, so no prompt was issued.
    Skipped,
    /// Selection bypassed in favour of the top prior.
    PriorOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Chosen(usize),
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub outcome: Outcome,
    pub raw_response: String,
    pub parse_method: ParseMethod,
}

impl Selection {
    pub fn chosen(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Chosen(i) => Some(i),
            Outcome::Abstain => None,
        }
    }
}
