//! Prompt templates for each DSS stage.

use serde::{Deserialize, Serialize};

use crate::error::{AlbmError, Result};

const DESCRIPTION: &str = "What are useful visual features for distinguishing a {class name} in a photo?\n\
List short descriptive phrases, one per line, with no numbering and no extra text.";

const SUMMARY: &str = "Your task is to extract attributes of different categories from the descriptions I gave you.\n\
Specially, you can complete the task by following the instructions:\n\
1. You can select the noun related to the attribute form {exsit attribute set}, and if you think the attribute describe by the phrase is not among them, you can answer other words.\n\
2. Each phrase corresponds to a description, and the number of the two should also be consistent.\n\
3. Output a Python dictionary with the {attribute name} as the key, and no newline required between each description. PLEASE USE \":\" AFTER the KEY.";

const RESUMMARIZE: &str = "Your task is to merge the attributes I give you into semantically consistent attribute groups.\n\
Specially, you can complete the task by following the instructions:\n\
1. Only merge the attributes I give, and only merge semantically consistent attributes.\n\
2. The semantics of the merged attributes should not be repeated.\n\
3. The words representing an attribute group must be the words of the attributes I give, and the words in the same attribute group must all come from the attributes I give.\n\
4. The sum of the words in all attribute groups should be equal to the attribute set I gave.\n\
5. Output some python lists, each list represents a attribute group.\n\
===\n\
Please merge semantically consistent attribute among the attributes {attribute set}:\n\
===";

const VISUAL_FILTER: &str = "Suppose you have some photos of {all class name}, please write down {attribute set} in order whether these attributes are the visual attributes of these pictures:";

const SUPPLEMENT: &str = "Your task is to describe a certain attribute of a certain class.\n\
Specially, you can complete the task by using short and precise descriptions. And no newline is required before each description.\n\
===\n\
Please describe the attribute {attribute} of the class {class name} according to the following examples, and no newline required between each description:\n\
===";

pub const CLASS_NAME: &str = "{class name}";
pub const EXISTING_ATTRIBUTES: &str = "{exsit attribute set}";
pub const ATTRIBUTE_SET: &str = "{attribute set}";
pub const ALL_CLASS_NAMES: &str = "{all class name}";
pub const ATTRIBUTE: &str = "{attribute}";

/// Templates with `{name}` placeholders, one per LLM-backed stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSet {
    pub description: String,
    pub summary: String,
    pub resummarize: String,
    pub visual_filter: String,
    pub supplement: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            description: DESCRIPTION.into(),
            summary: SUMMARY.into(),
            resummarize: RESUMMARIZE.into(),
            visual_filter: VISUAL_FILTER.into(),
            supplement: SUPPLEMENT.into(),
        }
    }
}

impl PromptSet {
    /// Checks that every placeholder the pipeline fills is present.
    pub fn validate(&self) -> Result<()> {
        let required: [(&str, &str, &[&str]); 5] = [
            ("description", &self.description, &[CLASS_NAME]),
            ("summary", &self.summary, &[EXISTING_ATTRIBUTES]),
            ("resummarize", &self.resummarize, &[ATTRIBUTE_SET]),
            ("visual_filter", &self.visual_filter, &[ALL_CLASS_NAMES, ATTRIBUTE_SET]),
            ("supplement", &self.supplement, &[ATTRIBUTE, CLASS_NAME]),
        ];
        let missing: Vec<String> = required
            .iter()
            .flat_map(|(name, text, holes)| {
                holes
                    .iter()
                    .filter(|h| !text.contains(**h))
                    .map(move |h| format!("prompt {name} lacks placeholder {h}"))
            })
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(AlbmError::Config(missing))
        }
    }
}

/// Replaces each `{name}` placeholder with its value.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (hole, value) in values {
        out = out.replace(hole, value);
    }
    out
}

/// Python list literal, e.g. `['fur', 'size']`.
pub fn python_list<S: AsRef<str>>(items: &[S]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|s| format!("'{}'", s.as_ref().replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", quoted.join(", "))
}
