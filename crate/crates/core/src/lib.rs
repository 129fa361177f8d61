//! Chest radiograph report labeling and multi-system agreement toolkit.
//!
//! The pipeline, end to end:
//!
//! 1. [`corpus`] loads semi-structured CXR reports and splits them into
//!    named sections (or synthesizes a seeded test corpus).
//! 2. [`adapters`] ingests entity records produced by external NLP systems
//!    through a JSON Lines interchange format, applying per-system category
//!    filters.
//! 3. [`normalize`] lemmatizes entity text and maps every system's raw
//!    assertion output onto {positive, negative, uncertain}.
//! 4. [`chexmap`] maps normalized entities onto the 13 chest-radiograph
//!    disease categories via a compiled pattern rule set and reduces each
//!    report to one status per category per system.
//! 5. [`rulelab`] is a self-contained rule-based labeler (mention detection
//!    plus negation/uncertainty cues) so the pipeline runs without any
//!    external system output.
//! 6. [`consensus`] builds a pseudo-ground-truth by majority voting across
//!    systems.
//! 7. [`stats`] computes the agreement battery: Fleiss' kappa under two
//!    conditions, chi-square independence, paired t-tests with Bonferroni
//!    correction, and per-system assertion accuracy against the consensus.

pub mod adapters;
pub mod chexmap;
pub mod consensus;
pub mod corpus;
pub mod normalize;
pub mod rulelab;
pub mod stats;

pub use adapters::{EntityMention, Registry, SystemId, SystemSpec};
pub use chexmap::{DiseaseCategory, LabelMatrix, RuleSet};
pub use corpus::{Report, SectionKind};
pub use normalize::AssertionStatus;
