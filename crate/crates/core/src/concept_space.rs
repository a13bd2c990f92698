//! Attribute-formed class-specific concept space.
//!
//! Every class is described on the same ordered attribute list, so column `j`
//! of the concept grid means the same attribute for every class. Scoring and
//! training rely on that alignment.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{AlbmError, Result};
use crate::io::write_atomic;
use crate::linalg::{ensure_finite, l2_norm};

/// Version tag written into every concept-set file.
pub const CONCEPT_FILE_VERSION: &str = "accs-v1";

/// Template used by the feature extractor to embed concept cells.
pub const CONCEPT_TEXT_TEMPLATE: &str = "the {attribute} of {class}: {concept}";

/// Normalized key used for attribute identity: trimmed, inner whitespace
/// collapsed, lowercased.
pub fn attribute_key(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The unified, ordered attribute list. Position `j` is the attribute index
/// used by every other structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AttributeSet {
    names: Vec<String>,
}

impl AttributeSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for name in names {
            let trimmed = name.as_ref().trim().to_string();
            if trimmed.is_empty() {
                return Err(AlbmError::Argument("empty attribute name".into()));
            }
            if !seen.insert(attribute_key(&trimmed)) {
                return Err(AlbmError::DuplicateAttribute(trimmed));
            }
            out.push(trimmed);
        }
        if out.is_empty() {
            return Err(AlbmError::EmptyAttributeSet);
        }
        Ok(Self { names: out })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let key = attribute_key(name);
        self.names.iter().position(|n| attribute_key(n) == key)
    }
}

impl TryFrom<Vec<String>> for AttributeSet {
    type Error = AlbmError;

    fn try_from(v: Vec<String>) -> Result<Self> {
        AttributeSet::new(v)
    }
}

impl From<AttributeSet> for Vec<String> {
    fn from(a: AttributeSet) -> Self {
        a.names
    }
}

/// Where a concept cell came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Labeled from the free-form class description.
    Described,
    /// Filled in afterwards for a missing (class, attribute) cell.
    Supplemented,
}

/// K x N_a grid of concept strings. Cells are never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTable {
    attributes: AttributeSet,
    class_names: Vec<String>,
    concepts: Vec<Vec<String>>,
    provenance: Vec<Vec<Provenance>>,
}

impl ConceptTable {
    pub fn new(
        attributes: AttributeSet,
        class_names: Vec<String>,
        concepts: Vec<Vec<String>>,
        provenance: Vec<Vec<Provenance>>,
    ) -> Result<Self> {
        let k = class_names.len();
        let n_a = attributes.len();
        if k == 0 {
            return Err(AlbmError::Empty("concept table has no classes".into()));
        }
        if concepts.len() != k || provenance.len() != k {
            return Err(AlbmError::dim(
                "concept table rows",
                k,
                format!("{} concept rows, {} provenance rows", concepts.len(), provenance.len()),
            ));
        }
        for (i, (row, prov)) in concepts.iter().zip(&provenance).enumerate() {
            if row.len() != n_a || prov.len() != n_a {
                return Err(AlbmError::dim(
                    format!("concept table row {i}"),
                    n_a,
                    format!("{} concepts, {} provenance tags", row.len(), prov.len()),
                ));
            }
            if let Some(j) = row.iter().position(|c| c.trim().is_empty()) {
                return Err(AlbmError::Argument(format!(
                    "empty concept at class {:?}, attribute {:?}",
                    class_names[i],
                    attributes.names()[j]
                )));
            }
        }
        Ok(Self {
            attributes,
            class_names,
            concepts,
            provenance,
        })
    }

    pub fn attributes(&self) -> &AttributeSet {
        &self.attributes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn concept(&self, class: usize, attribute: usize) -> &str {
        &self.concepts[class][attribute]
    }

    pub fn provenance(&self, class: usize, attribute: usize) -> Provenance {
        self.provenance[class][attribute]
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.concepts
    }

    /// Concept cells rendered with [`CONCEPT_TEXT_TEMPLATE`], class-major.
    pub fn concept_texts(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.num_classes() * self.num_attributes());
        for (i, row) in self.concepts.iter().enumerate() {
            for (j, concept) in row.iter().enumerate() {
                out.push(
                    CONCEPT_TEXT_TEMPLATE
                        .replace("{attribute}", &self.attributes.names()[j])
                        .replace("{class}", &self.class_names[i])
                        .replace("{concept}", concept),
                );
            }
        }
        out
    }

    pub fn restrict(&self, class_indices: &[usize]) -> Result<Self> {
        check_selection(class_indices, self.num_classes())?;
        Ok(Self {
            attributes: self.attributes.clone(),
            class_names: class_indices.iter().map(|&i| self.class_names[i].clone()).collect(),
            concepts: class_indices.iter().map(|&i| self.concepts[i].clone()).collect(),
            provenance: class_indices.iter().map(|&i| self.provenance[i].clone()).collect(),
        })
    }

    pub fn to_file(&self) -> ConceptSetFile {
        ConceptSetFile {
            version: CONCEPT_FILE_VERSION.to_string(),
            attributes: self.attributes.names().to_vec(),
            classes: self.class_names.clone(),
            concepts: self.concepts.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal tables.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConceptSetFile = serde_json::from_str(text)?;
        file.into_table()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AlbmError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk layout of a concept set (`accs-v1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSetFile {
    pub version: String,
    pub attributes: Vec<String>,
    pub classes: Vec<String>,
    pub concepts: Vec<Vec<String>>,
    pub provenance: Vec<Vec<Provenance>>,
}

impl ConceptSetFile {
    pub fn into_table(self) -> Result<ConceptTable> {
        if self.version != CONCEPT_FILE_VERSION {
            return Err(AlbmError::Format(format!(
                "concept file version {:?}, expected {CONCEPT_FILE_VERSION:?}",
                self.version
            )));
        }
        ConceptTable::new(
            AttributeSet::new(self.attributes)?,
            self.classes,
            self.concepts,
            self.provenance,
        )
    }
}

/// Concept table plus unit-norm text embeddings of every cell and every
/// class name.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSpace {
    table: ConceptTable,
    embeddings: Array3<f64>,
    name_embeddings: Array2<f64>,
}

impl ConceptSpace {
    /// Checks shapes and L2-normalizes every concept and name row.
    pub fn assemble(
        table: ConceptTable,
        concept_embeds: Array3<f64>,
        name_embeds: Array2<f64>,
    ) -> Result<Self> {
        let (k, n_a) = (table.num_classes(), table.num_attributes());
        let (ck, cn, d) = concept_embeds.dim();
        if (ck, cn) != (k, n_a) {
            return Err(AlbmError::dim(
                "concept embeddings",
                format!("{k}x{n_a}xd"),
                format!("{ck}x{cn}x{d}"),
            ));
        }
        if name_embeds.dim() != (k, d) {
            return Err(AlbmError::dim(
                "name embeddings",
                format!("{k}x{d}"),
                format!("{}x{}", name_embeds.nrows(), name_embeds.ncols()),
            ));
        }
        if d == 0 {
            return Err(AlbmError::dim("embedding width", ">= 1", 0));
        }
        ensure_finite(&concept_embeds, "concept embeddings")?;
        ensure_finite(&name_embeds, "name embeddings")?;

        let mut embeddings = concept_embeds;
        for i in 0..k {
            for j in 0..n_a {
                let mut row = embeddings.slice_mut(ndarray::s![i, j, ..]);
                let norm = l2_norm(row.view());
                if norm == 0.0 {
                    return Err(AlbmError::DegenerateEmbedding {
                        class: i,
                        attribute: j,
                    });
                }
                row.mapv_inplace(|x| x / norm);
            }
        }
        let mut name_embeddings = name_embeds;
        for (i, mut row) in name_embeddings.axis_iter_mut(Axis(0)).enumerate() {
            let norm = l2_norm(row.view());
            if norm == 0.0 {
                return Err(AlbmError::Argument(format!(
                    "zero-norm class-name embedding for class {i}"
                )));
            }
            row.mapv_inplace(|x| x / norm);
        }
        Ok(Self {
            table,
            embeddings,
            name_embeddings,
        })
    }

    /// Keeps only the listed classes, in the listed order.
    pub fn restrict(&self, class_indices: &[usize]) -> Result<Self> {
        let table = self.table.restrict(class_indices)?;
        Ok(Self {
            table,
            embeddings: self.embeddings.select(Axis(0), class_indices),
            name_embeddings: self.name_embeddings.select(Axis(0), class_indices),
        })
    }

    pub fn table(&self) -> &ConceptTable {
        &self.table
    }

    pub fn attributes(&self) -> &AttributeSet {
        self.table.attributes()
    }

    pub fn num_classes(&self) -> usize {
        self.embeddings.dim().0
    }

    pub fn num_attributes(&self) -> usize {
        self.embeddings.dim().1
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim().2
    }

    /// `K x N_a x d`, unit rows.
    pub fn embeddings(&self) -> &Array3<f64> {
        &self.embeddings
    }

    pub fn concept(&self, class: usize, attribute: usize) -> ArrayView1<'_, f64> {
        self.embeddings.slice(ndarray::s![class, attribute, ..])
    }

    /// `K x d`, unit rows.
    pub fn name_embeddings(&self) -> ArrayView2<'_, f64> {
        self.name_embeddings.view()
    }

    /// Concept embeddings flattened class-major to `(K * N_a) x d`, the
    /// class-shared concept matrix used by the baseline bottleneck.
    pub fn flat_concepts(&self) -> Array2<f64> {
        let (k, n_a, d) = self.embeddings.dim();
        self.embeddings
            .to_shape((k * n_a, d))
            .expect("contiguous concept tensor")
            .to_owned()
    }
}

fn check_selection(indices: &[usize], len: usize) -> Result<()> {
    let mut seen = HashSet::new();
    for &i in indices {
        if i >= len {
            return Err(AlbmError::Index { index: i, len });
        }
        if !seen.insert(i) {
            return Err(AlbmError::Argument(format!("class index {i} selected twice")));
        }
    }
    Ok(())
}
