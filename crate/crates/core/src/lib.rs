//! Attribute-formed language bottleneck models at desk scale.
//!
//! Images are classified through a class-specific concept grid: every class
//! is described on one shared, ordered attribute list, and class `i` is
//! scored only against its own concepts. The crate covers
//!
//! - building that grid with an LLM ([`dss`]: describe, summarize, supplement),
//! - scoring embedding vectors against it ([`scoring`]),
//! - training, transferring and pruning concept classifiers ([`classifier`]),
//! - learning per-attribute visual prompts on a small vision transformer
//!   with hand-written backward passes ([`vapl`]),
//! - and the on-disk formats that connect them ([`io`]).

pub mod classifier;
pub mod concept_space;
pub mod dss;
pub mod error;
pub mod io;
pub mod linalg;
pub mod scoring;
pub mod vapl;

pub use classifier::{
    evaluate, prune_to_nec, train_walpha, train_wp_shared, transfer_to_novel, ConceptClassifier,
    LabeledActivations, Metrics, Model, TrainConfig, TrainOutcome,
};
pub use concept_space::{AttributeSet, ConceptSpace, ConceptTable, Provenance};
pub use error::{AlbmError, Result};
pub use scoring::{activations, ActivationMatrix, ScoringConfig};
