//! Description, summary and supplement: building an attribute-formed concept
//! table with an LLM.
//!
//! Stages run in order: [`describe`] (or [`load_concept_file`]),
//! [`summarize_iterative`], [`merge_synonyms`], [`filter_nonvisual`],
//! [`filter_sparse`], [`supplement`]. [`run`] chains everything after
//! description.

pub mod llm;
pub mod parse;
pub mod prompts;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concept_space::{attribute_key, AttributeSet, ConceptTable, Provenance};
use crate::error::{AlbmError, Result};
pub use llm::{request_hash, Fixture, HttpConfig, LlmClient, LlmMode, RetryPolicy, Transport};
#[cfg(feature = "http")]
pub use llm::HttpTransport;
pub use prompts::PromptSet;

use prompts::{python_list, render};

/// Separator used when several concepts of one class share an attribute.
pub const CELL_JOINER: &str = ", ";

/// Free-form concepts per class, before any attribute is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawConceptList {
    pub classes: Vec<String>,
    pub concepts: Vec<Vec<String>>,
}

impl RawConceptList {
    pub fn new(classes: Vec<String>, concepts: Vec<Vec<String>>) -> Result<Self> {
        if classes.is_empty() {
            return Err(AlbmError::Empty("class list".into()));
        }
        if classes.len() != concepts.len() {
            return Err(AlbmError::dim("raw concept lists", classes.len(), concepts.len()));
        }
        Ok(Self { classes, concepts })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledConcept {
    pub text: String,
    pub attribute: String,
}

/// Concepts tagged with an attribute from an ordered vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledConcepts {
    pub classes: Vec<String>,
    pub attributes: Vec<String>,
    pub concepts: Vec<Vec<LabeledConcept>>,
}

impl LabeledConcepts {
    /// Number of classes with at least one concept under each attribute.
    pub fn coverage(&self) -> Vec<usize> {
        let index: HashMap<&str, usize> = self
            .attributes
            .iter()
            .enumerate()
            .map(|(j, a)| (a.as_str(), j))
            .collect();
        let mut counts = vec![0; self.attributes.len()];
        for row in &self.concepts {
            let present: HashSet<usize> = row
                .iter()
                .filter_map(|c| index.get(c.attribute.as_str()).copied())
                .collect();
            for j in present {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Cell text per (class, attribute): matching concepts joined in order,
    /// `None` where a class has nothing for that attribute.
    pub fn cells(&self) -> Vec<Vec<Option<String>>> {
        self.concepts
            .iter()
            .map(|row| {
                self.attributes
                    .iter()
                    .map(|a| {
                        let texts: Vec<&str> = row
                            .iter()
                            .filter(|c| &c.attribute == a)
                            .map(|c| c.text.as_str())
                            .collect();
                        (!texts.is_empty()).then(|| texts.join(CELL_JOINER))
                    })
                    .collect()
            })
            .collect()
    }

    fn retain_attributes(&mut self, keep: &HashSet<String>) {
        self.attributes.retain(|a| keep.contains(a));
        for row in &mut self.concepts {
            row.retain(|c| keep.contains(&c.attribute));
        }
    }
}

/// Reads a class list: one name per line, blank lines ignored.
pub fn read_class_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| AlbmError::io(path, e))?;
    let classes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let mut seen = HashSet::new();
    for c in &classes {
        if !seen.insert(c) {
            return Err(AlbmError::Argument(format!("class {c:?} listed twice")));
        }
    }
    if classes.is_empty() {
        return Err(AlbmError::Empty(format!("class list {}", path.display())));
    }
    Ok(classes)
}

/// Asks the LLM for free-form concepts of every class.
pub fn describe(classes: &[String], client: &LlmClient, prompts: &PromptSet) -> Result<RawConceptList> {
    if classes.is_empty() {
        return Err(AlbmError::Empty("class list".into()));
    }
    let results = client.fan_out(classes, |class| {
        let prompt = render(&prompts.description, &[(prompts::CLASS_NAME, class)]);
        parse::parse_phrases(&client.complete(&prompt)?)
    });
    let concepts = results.into_iter().collect::<Result<Vec<_>>>()?;
    RawConceptList::new(classes.to_vec(), concepts)
}

/// Loads pre-collected concepts instead of describing. Accepts a JSON object
/// mapping class name to a list of phrases, or text lines `class: phrase`.
/// With `classes`, output follows that order and classes absent from the
/// file get an empty list; otherwise file order is used.
pub fn load_concept_file(path: &Path, classes: Option<&[String]>) -> Result<RawConceptList> {
    let text = std::fs::read_to_string(path).map_err(|e| AlbmError::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_class: HashMap<String, Vec<String>> = HashMap::new();
    if text.trim_start().starts_with('{') {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)?;
        for (class, value) in map {
            let list: Vec<String> = serde_json::from_value(value)
                .map_err(|e| AlbmError::Format(format!("concepts of {class:?}: {e}")))?;
            order.push(class.clone());
            by_class.insert(class, list);
        }
    } else {
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (class, concept) = line.split_once(':').ok_or_else(|| {
                AlbmError::Format(format!("{}:{}: expected `class: concept`", path.display(), n + 1))
            })?;
            let class = class.trim().to_string();
            let concept = concept.trim();
            if !by_class.contains_key(&class) {
                order.push(class.clone());
            }
            let entry = by_class.entry(class).or_default();
            if !concept.is_empty() {
                entry.push(concept.to_string());
            }
        }
    }
    let classes = match classes {
        Some(cs) => {
            let wanted: HashSet<&String> = cs.iter().collect();
            for c in order.iter().filter(|c| !wanted.contains(c)) {
                log::warn!("concept file has class {c:?} that is not in the class list; ignored");
            }
            cs.to_vec()
        }
        None => order,
    };
    let concepts = classes
        .iter()
        .map(|c| {
            by_class.get(c).cloned().unwrap_or_else(|| {
                log::warn!("concept file has no entry for class {c:?}");
                Vec::new()
            })
        })
        .collect();
    RawConceptList::new(classes, concepts)
}

fn summary_request(prompts: &PromptSet, existing: &[String], class: &str, concepts: &[String]) -> String {
    let mut prompt = render(&prompts.summary, &[(prompts::EXISTING_ATTRIBUTES, &python_list(existing))]);
    prompt.push_str("\n===\nCategory: ");
    prompt.push_str(class);
    prompt.push_str("\nDescriptions:\n");
    for c in concepts {
        prompt.push_str("- ");
        prompt.push_str(c);
        prompt.push('\n');
    }
    prompt.push_str("===");
    prompt
}

/// Labels every concept with one attribute, one class at a time. Each call
/// sees the vocabulary built so far, so earlier words get reused.
pub fn summarize_iterative(raw: &RawConceptList, client: &LlmClient, prompts: &PromptSet) -> Result<LabeledConcepts> {
    let mut attributes: Vec<String> = Vec::new();
    let mut concepts = Vec::with_capacity(raw.classes.len());
    for (class, list) in raw.classes.iter().zip(&raw.concepts) {
        if list.is_empty() {
            concepts.push(Vec::new());
            continue;
        }
        let prompt = summary_request(prompts, &attributes, class, list);
        let pairs = parse::parse_pairs(&client.complete(&prompt)?)?;
        if pairs.len() != list.len() {
            return Err(AlbmError::Consistency {
                class: class.clone(),
                concepts: list.len(),
                labels: pairs.len(),
            });
        }
        let mut row = Vec::with_capacity(list.len());
        for (text, (key, _)) in list.iter().zip(pairs) {
            let attribute = attribute_key(&key);
            if !attributes.contains(&attribute) {
                attributes.push(attribute.clone());
            }
            row.push(LabeledConcept {
                text: text.clone(),
                attribute,
            });
        }
        concepts.push(row);
    }
    Ok(LabeledConcepts {
        classes: raw.classes.clone(),
        attributes,
        concepts,
    })
}

/// Checks that `groups` partition `words` exactly.
pub fn validate_partition(words: &[String], groups: &[Vec<String>]) -> Result<()> {
    let known: HashSet<&String> = words.iter().collect();
    let mut seen: HashSet<&String> = HashSet::new();
    let mut invented = Vec::new();
    let mut repeated = Vec::new();
    for w in groups.iter().flatten() {
        if !known.contains(w) {
            if !invented.contains(w) {
                invented.push(w.clone());
            }
        } else if !seen.insert(w) && !repeated.contains(w) {
            repeated.push(w.clone());
        }
    }
    let dropped: Vec<String> = words.iter().filter(|w| !seen.contains(w)).cloned().collect();
    if invented.is_empty() && repeated.is_empty() && dropped.is_empty() {
        Ok(())
    } else {
        Err(AlbmError::PartitionViolation {
            invented,
            dropped,
            repeated,
        })
    }
}

/// Merges synonymous attributes. Each group is renamed to its first member;
/// merged groups keep the position of their earliest member.
pub fn merge_synonyms(
    labeled: &LabeledConcepts,
    client: &LlmClient,
    prompts: &PromptSet,
) -> Result<(LabeledConcepts, BTreeMap<String, String>)> {
    let words = &labeled.attributes;
    if words.is_empty() {
        return Err(AlbmError::EmptyAttributeSet);
    }
    if words.len() == 1 {
        let map = BTreeMap::from([(words[0].clone(), words[0].clone())]);
        return Ok((labeled.clone(), map));
    }
    let prompt = render(&prompts.resummarize, &[(prompts::ATTRIBUTE_SET, &python_list(words))]);
    let groups: Vec<Vec<String>> = parse::parse_groups(&client.complete(&prompt)?)?
        .into_iter()
        .map(|g| g.iter().map(|w| attribute_key(w)).collect())
        .collect();
    validate_partition(words, &groups)?;

    let position: HashMap<&String, usize> = words.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let mut ordered: Vec<&Vec<String>> = groups.iter().collect();
    ordered.sort_by_key(|g| g.iter().map(|w| position[w]).min());
    let mut map = BTreeMap::new();
    for g in &ordered {
        for w in g.iter() {
            map.insert(w.clone(), g[0].clone());
        }
    }
    let merged = LabeledConcepts {
        classes: labeled.classes.clone(),
        attributes: ordered.iter().map(|g| g[0].clone()).collect(),
        concepts: labeled
            .concepts
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| LabeledConcept {
                        text: c.text.clone(),
                        attribute: map[&c.attribute].clone(),
                    })
                    .collect()
            })
            .collect(),
    };
    Ok((merged, map))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VisualFilterOutcome {
    pub removed: Vec<String>,
    pub warnings: Vec<String>,
}

/// Drops attributes the LLM judges non-visual, with their concepts.
/// Verdicts naming unknown attributes only produce warnings.
pub fn filter_nonvisual(
    labeled: &LabeledConcepts,
    client: &LlmClient,
    prompts: &PromptSet,
) -> Result<(LabeledConcepts, VisualFilterOutcome)> {
    if labeled.attributes.is_empty() {
        return Err(AlbmError::EmptyAttributeSet);
    }
    let prompt = render(
        &prompts.visual_filter,
        &[
            (prompts::ALL_CLASS_NAMES, &labeled.classes.join(", ")),
            (prompts::ATTRIBUTE_SET, &python_list(&labeled.attributes)),
        ],
    );
    let verdicts = parse::parse_visual(&client.complete(&prompt)?, &labeled.attributes)?;
    let known: HashSet<&String> = labeled.attributes.iter().collect();
    let mut outcome = VisualFilterOutcome::default();
    let mut flagged = HashSet::new();
    let mut judged = HashSet::new();
    for (name, visual) in verdicts {
        let key = attribute_key(&name);
        if !known.contains(&key) {
            outcome
                .warnings
                .push(format!("visual filter judged unknown attribute {key:?}; ignored"));
            continue;
        }
        judged.insert(key.clone());
        if !visual {
            flagged.insert(key);
        }
    }
    for a in &labeled.attributes {
        if !judged.contains(a) {
            outcome
                .warnings
                .push(format!("visual filter gave no verdict for {a:?}; kept"));
        }
    }
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    outcome.removed = labeled
        .attributes
        .iter()
        .filter(|a| flagged.contains(*a))
        .cloned()
        .collect();
    let keep: HashSet<String> = labeled
        .attributes
        .iter()
        .filter(|a| !flagged.contains(*a))
        .cloned()
        .collect();
    let mut out = labeled.clone();
    out.retain_attributes(&keep);
    Ok((out, outcome))
}

/// Keeps attribute `j` iff at least `r` percent of classes have a concept
/// for it.
pub fn filter_sparse(labeled: &LabeledConcepts, r: f64) -> Result<LabeledConcepts> {
    if !(0.0..=100.0).contains(&r) {
        return Err(AlbmError::Argument(format!("sparsity threshold r={r} outside [0, 100]")));
    }
    let k = labeled.classes.len() as f64;
    let keep: HashSet<String> = labeled
        .attributes
        .iter()
        .zip(labeled.coverage())
        .filter(|(_, count)| *count as f64 * 100.0 >= r * k)
        .map(|(a, _)| a.clone())
        .collect();
    let mut out = labeled.clone();
    out.retain_attributes(&keep);
    if out.attributes.is_empty() {
        return Err(AlbmError::EmptyAttributeSet);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupplementConfig {
    /// Requests per missing cell before giving up on empty answers.
    pub attempts: u32,
    /// Filled cells of other classes shown as examples.
    pub examples: usize,
}

impl Default for SupplementConfig {
    fn default() -> Self {
        Self {
            attempts: 3,
            examples: 3,
        }
    }
}

/// Fills every missing cell with a supplemented description and returns the
/// completed table.
pub fn supplement(
    labeled: &LabeledConcepts,
    client: &LlmClient,
    prompts: &PromptSet,
    cfg: &SupplementConfig,
) -> Result<ConceptTable> {
    let attributes = AttributeSet::new(&labeled.attributes)?;
    let cells = labeled.cells();
    let missing: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, c)| c.is_none())
                .map(move |(j, _)| (i, j))
        })
        .collect();
    let filled = client.fan_out(&missing, |&(i, j)| {
        let class = &labeled.classes[i];
        let attribute = &labeled.attributes[j];
        let mut prompt = render(
            &prompts.supplement,
            &[(prompts::ATTRIBUTE, attribute), (prompts::CLASS_NAME, class)],
        );
        let examples = labeled
            .classes
            .iter()
            .zip(&cells)
            .filter_map(|(other, row)| row[j].as_ref().map(|t| (other, t)))
            .take(cfg.examples);
        for (other, text) in examples {
            prompt.push_str(&format!("\n{other}: {text}"));
        }
        let attempts = cfg.attempts.max(1);
        for attempt in 0..attempts {
            let answer = if attempt == 0 {
                client.complete(&prompt)?
            } else {
                client.complete_fresh(&prompt)?
            };
            let text = parse::parse_single(&answer)?;
            if !text.is_empty() {
                return Ok(text);
            }
        }
        Err(AlbmError::SupplementFailed {
            class: class.clone(),
            attribute: attribute.clone(),
            attempts,
        })
    });
    let mut table: Vec<Vec<String>> = Vec::with_capacity(cells.len());
    let mut provenance = Vec::with_capacity(cells.len());
    for row in &cells {
        table.push(row.iter().map(|c| c.clone().unwrap_or_default()).collect());
        provenance.push(vec![Provenance::Described; row.len()]);
    }
    for (&(i, j), text) in missing.iter().zip(filled) {
        table[i][j] = text?;
        provenance[i][j] = Provenance::Supplemented;
    }
    ConceptTable::new(attributes, labeled.classes.clone(), table, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DssConfig {
    /// Minimum class coverage, in percent, for an attribute to survive.
    pub r: f64,
    pub supplement: SupplementConfig,
}

impl Default for DssConfig {
    fn default() -> Self {
        Self {
            r: 30.0,
            supplement: SupplementConfig::default(),
        }
    }
}

/// Everything the pipeline decided along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct DssOutcome {
    pub table: ConceptTable,
    /// Attribute vocabulary before merging.
    pub summarized: Vec<String>,
    pub merge_map: BTreeMap<String, String>,
    pub removed_nonvisual: Vec<String>,
    pub removed_sparse: Vec<String>,
    pub warnings: Vec<String>,
}

/// Runs summary, merge, both filters and supplement on described concepts.
pub fn run(raw: &RawConceptList, client: &LlmClient, prompts: &PromptSet, cfg: &DssConfig) -> Result<DssOutcome> {
    prompts.validate()?;
    let summarized = summarize_iterative(raw, client, prompts)?;
    let (merged, merge_map) = merge_synonyms(&summarized, client, prompts)?;
    let (visual, vis) = filter_nonvisual(&merged, client, prompts)?;
    let dense = filter_sparse(&visual, cfg.r)?;
    let removed_sparse = visual
        .attributes
        .iter()
        .filter(|a| !dense.attributes.contains(a))
        .cloned()
        .collect();
    let table = supplement(&dense, client, prompts, &cfg.supplement)?;
    Ok(DssOutcome {
        table,
        summarized: summarized.attributes,
        merge_map,
        removed_nonvisual: vis.removed,
        removed_sparse,
        warnings: vis.warnings,
    })
}
