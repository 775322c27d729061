//! Hierarchical dialogue-act label set.
//!
//! Labels form a forest rooted at nine top-level acts. Every label can be
//! described more coarsely by any of its ancestors; [`Taxonomy::collapse`]
//! maps a label to the deepest ancestor that belongs to the reduced set the
//! sequence model is trained on. Priority rules are annotation-guide
//! tie-breakers kept as data so they can evolve with the guide.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The nine acts every label descends from.
pub const TOP_LEVEL_ACTS: [&str; 9] = [
    "Inform",
    "Query",
    "Request",
    "Assign",
    "Propose",
    "Acknowledge",
    "Reject",
    "Code",
    "Social",
];

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.toml");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("taxonomy file: {0}")]
    Parse(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{label}` names unknown parent `{parent}`")]
    DanglingParent { label: String, parent: String },
    #[error("parent chain of `{0}` contains a cycle")]
    Cycle(String),
    #[error("root label `{0}` is not a top-level act")]
    UnknownRoot(String),
    #[error("label `{label}` does not extend its parent id `{parent}`")]
    IdPrefix { label: String, parent: String },
    #[error("reduced set member `{0}` is not a label")]
    MissingReducedMember(String),
    #[error("label `{0}` has no ancestor in the reduced set")]
    NoReducedAncestor(String),
    #[error("priority rule references unknown label `{0}`")]
    UnknownRuleLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActLabel {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthesized: bool,
}

/// Conditions under which a priority rule applies. Empty fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPattern {
    /// The preceding utterance must carry a descendant-or-self of one of these.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub previous: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityRule {
    pub prefer: String,
    pub over: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub context: ContextPattern,
}

/// What is known about the utterance being labeled when resolving overlaps.
#[derive(Debug, Clone, Copy, Default)]
pub struct PriorityContext<'a> {
    pub previous: Option<&'a str>,
    pub speaker_role: Option<&'a str>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReducedSetSection {
    labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyFile {
    #[serde(default = "default_version")]
    version: u32,
    reduced_set: ReducedSetSection,
    #[serde(default)]
    label: Vec<ActLabel>,
    #[serde(default)]
    priority_rule: Vec<PriorityRule>,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    labels: Vec<ActLabel>,
    index: HashMap<String, usize>,
    reduced_set: Vec<String>,
    priority_rules: Vec<PriorityRule>,
    hash: String,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.reduced_set == other.reduced_set
            && self.priority_rules == other.priority_rules
    }
}

impl Taxonomy {
    /// The shipped 55-label taxonomy with its 18-label reduced set.
    pub fn shipped() -> Self {
        Self::from_toml_str(DEFAULT_TAXONOMY).expect("shipped taxonomy is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile =
            toml::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::new(file.label, file.reduced_set.labels, file.priority_rule)
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self, TaxonomyError> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn new(
        labels: Vec<ActLabel>,
        reduced_set: Vec<String>,
        priority_rules: Vec<PriorityRule>,
    ) -> Result<Self, TaxonomyError> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.id.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateLabel(label.id.clone()));
            }
        }
        for label in &labels {
            if let Some(parent) = &label.parent {
                if !index.contains_key(parent) {
                    return Err(TaxonomyError::DanglingParent {
                        label: label.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
        for label in &labels {
            let mut seen = HashSet::new();
            let mut cursor = Some(label);
            while let Some(current) = cursor {
                if !seen.insert(current.id.as_str()) {
                    return Err(TaxonomyError::Cycle(label.id.clone()));
                }
                cursor = current.parent.as_ref().map(|p| &labels[index[p]]);
            }
        }
        for label in &labels {
            match &label.parent {
                None if !TOP_LEVEL_ACTS.contains(&label.id.as_str()) => {
                    return Err(TaxonomyError::UnknownRoot(label.id.clone()));
                }
                Some(parent) if !label.id.starts_with(&format!("{parent}-")) => {
                    return Err(TaxonomyError::IdPrefix {
                        label: label.id.clone(),
                        parent: parent.clone(),
                    });
                }
                _ => {}
            }
        }
        for member in &reduced_set {
            if !index.contains_key(member) {
                return Err(TaxonomyError::MissingReducedMember(member.clone()));
            }
        }

        let taxonomy = Self {
            labels,
            index,
            reduced_set,
            priority_rules,
            hash: String::new(),
        };
        for label in &taxonomy.labels {
            taxonomy
                .ancestors(&label.id)?
                .iter()
                .rev()
                .find(|a| taxonomy.in_reduced_set(a))
                .ok_or_else(|| TaxonomyError::NoReducedAncestor(label.id.clone()))?;
        }
        for rule in &taxonomy.priority_rules {
            let referenced = [&rule.prefer, &rule.over]
                .into_iter()
                .chain(rule.context.previous.iter());
            for id in referenced {
                if !taxonomy.contains(id) {
                    return Err(TaxonomyError::UnknownRuleLabel(id.clone()));
                }
            }
        }

        let mut taxonomy = taxonomy;
        taxonomy.hash = hex::encode(Sha256::digest(taxonomy.to_toml_string().as_bytes()));
        Ok(taxonomy)
    }

    pub fn to_toml_string(&self) -> String {
        let file = TaxonomyFile {
            version: 1,
            reduced_set: ReducedSetSection {
                labels: self.reduced_set.clone(),
            },
            label: self.labels.clone(),
            priority_rule: self.priority_rules.clone(),
        };
        toml::to_string(&file).expect("taxonomy serializes")
    }

    /// Hex SHA-256 of the canonical serialization. Binds models to a taxonomy.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn labels(&self) -> &[ActLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ActLabel> {
        self.index.get(id).map(|&i| &self.labels[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Reduced-set members in file order; this is the model label order.
    pub fn reduced_set(&self) -> &[String] {
        &self.reduced_set
    }

    pub fn in_reduced_set(&self, id: &str) -> bool {
        self.reduced_set.iter().any(|r| r == id)
    }

    pub fn priority_rules(&self) -> &[PriorityRule] {
        &self.priority_rules
    }

    pub fn roots(&self) -> impl Iterator<Item = &ActLabel> {
        self.labels.iter().filter(|l| l.parent.is_none())
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ActLabel> + 'a {
        self.labels
            .iter()
            .filter(move |l| l.parent.as_deref() == Some(id))
    }

    /// Ancestor chain from the top-level act down to `id` itself.
    pub fn ancestors(&self, id: &str) -> Result<Vec<&str>, TaxonomyError> {
        let mut chain = Vec::new();
        let mut cursor = Some(self.lookup(id)?);
        while let Some(label) = cursor {
            chain.push(label.id.as_str());
            cursor = label.parent.as_deref().map(|p| &self.labels[self.index[p]]);
        }
        chain.reverse();
        Ok(chain)
    }

    pub fn root(&self, id: &str) -> Result<&str, TaxonomyError> {
        Ok(self.ancestors(id)?[0])
    }

    pub fn is_descendant_or_self(&self, id: &str, ancestor: &str) -> bool {
        self.ancestors(id)
            .map(|chain| chain.contains(&ancestor))
            .unwrap_or(false)
    }

    /// Deepest ancestor-or-self of `id` in the reduced set.
    pub fn collapse(&self, id: &str) -> Result<&str, TaxonomyError> {
        self.ancestors(id)?
            .into_iter()
            .rev()
            .find(|a| self.in_reduced_set(a))
            .ok_or_else(|| TaxonomyError::NoReducedAncestor(id.to_string()))
    }

    /// Resolve overlapping candidate labels with the first applicable priority
    /// rule. Without one, the first candidate wins.
    pub fn apply_priority<'c>(
        &self,
        candidates: &[&'c str],
        context: &PriorityContext<'_>,
    ) -> Option<&'c str> {
        let first = *candidates.first()?;
        for rule in &self.priority_rules {
            let preferred = candidates
                .iter()
                .find(|c| self.is_descendant_or_self(c, &rule.prefer));
            let demoted = candidates
                .iter()
                .any(|c| self.is_descendant_or_self(c, &rule.over));
            if let (Some(preferred), true) = (preferred, demoted) {
                if self.context_matches(&rule.context, context) {
                    return Some(preferred);
                }
            }
        }
        Some(first)
    }

    /// Rules in which `label` is the deprioritized side, with their preferred alternative.
    pub fn priority_hints(&self, label: &str) -> Vec<&PriorityRule> {
        self.priority_rules
            .iter()
            .filter(|r| self.is_descendant_or_self(label, &r.over))
            .collect()
    }

    fn context_matches(&self, pattern: &ContextPattern, context: &PriorityContext<'_>) -> bool {
        let previous_ok = pattern.previous.is_empty()
            || context.previous.is_some_and(|prev| {
                pattern
                    .previous
                    .iter()
                    .any(|p| self.is_descendant_or_self(prev, p))
            });
        let role_ok = match &pattern.speaker_role {
            None => true,
            Some(role) => context.speaker_role == Some(role.as_str()),
        };
        previous_ok && role_ok
    }

    fn lookup(&self, id: &str) -> Result<&ActLabel, TaxonomyError> {
        self.get(id)
            .ok_or_else(|| TaxonomyError::UnknownLabel(id.to_string()))
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::shipped()
    }
}
