//! Mapping normalized entities onto the 13 chest-radiograph disease
//! categories, and reducing per-mention statuses to one status per category
//! per report.
//!
//! The mapping rules live in an editable JSON document: per category, a list
//! of synonym patterns that match the finding directly, plus compound rules
//! pairing anatomy patterns with attribute patterns ("cardiomediastinal
//! silhouette" followed by "enlarged") and exclusion patterns that invalidate
//! the pair. Patterns are compiled case-insensitively with a conservative
//! regex dialect: literals, alternation, character classes, word boundaries,
//! and optional groups; backreferences and look-around are rejected at
//! compile time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{EntityMention, SystemId};
use crate::normalize::AssertionStatus;

/// The 13 report-label categories: 12 diseases plus a derived No Findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiseaseCategory {
    EnlargedCardiomediastinum,
    Cardiomegaly,
    LungOpacity,
    LungLesion,
    Edema,
    Consolidation,
    Pneumonia,
    Atelectasis,
    Pneumothorax,
    PleuralEffusion,
    PleuralOther,
    Fracture,
    NoFindings,
}

impl DiseaseCategory {
    pub const ALL: [DiseaseCategory; 13] = [
        DiseaseCategory::EnlargedCardiomediastinum,
        DiseaseCategory::Cardiomegaly,
        DiseaseCategory::LungOpacity,
        DiseaseCategory::LungLesion,
        DiseaseCategory::Edema,
        DiseaseCategory::Consolidation,
        DiseaseCategory::Pneumonia,
        DiseaseCategory::Atelectasis,
        DiseaseCategory::Pneumothorax,
        DiseaseCategory::PleuralEffusion,
        DiseaseCategory::PleuralOther,
        DiseaseCategory::Fracture,
        DiseaseCategory::NoFindings,
    ];

    /// The 12 matchable disease categories (everything but No Findings).
    pub const DISEASES: &'static [DiseaseCategory] = &[
        DiseaseCategory::EnlargedCardiomediastinum,
        DiseaseCategory::Cardiomegaly,
        DiseaseCategory::LungOpacity,
        DiseaseCategory::LungLesion,
        DiseaseCategory::Edema,
        DiseaseCategory::Consolidation,
        DiseaseCategory::Pneumonia,
        DiseaseCategory::Atelectasis,
        DiseaseCategory::Pneumothorax,
        DiseaseCategory::PleuralEffusion,
        DiseaseCategory::PleuralOther,
        DiseaseCategory::Fracture,
    ];

    /// Position in [`Self::ALL`]; indexes the 13-element status vectors.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DiseaseCategory::EnlargedCardiomediastinum => "enlarged_cardiomediastinum",
            DiseaseCategory::Cardiomegaly => "cardiomegaly",
            DiseaseCategory::LungOpacity => "lung_opacity",
            DiseaseCategory::LungLesion => "lung_lesion",
            DiseaseCategory::Edema => "edema",
            DiseaseCategory::Consolidation => "consolidation",
            DiseaseCategory::Pneumonia => "pneumonia",
            DiseaseCategory::Atelectasis => "atelectasis",
            DiseaseCategory::Pneumothorax => "pneumothorax",
            DiseaseCategory::PleuralEffusion => "pleural_effusion",
            DiseaseCategory::PleuralOther => "pleural_other",
            DiseaseCategory::Fracture => "fracture",
            DiseaseCategory::NoFindings => "no_findings",
        }
    }

    pub fn parse(s: &str) -> Option<DiseaseCategory> {
        let folded = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        DiseaseCategory::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == folded)
    }
}

impl fmt::Display for DiseaseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ChexmapError {
    #[error("ruleset: {0}")]
    Parse(String),
    #[error("category {category}, pattern {pattern:?}: {message}")]
    Pattern {
        category: String,
        pattern: String,
        message: String,
    },
    #[error("ruleset covers no matchable category")]
    EmptyRuleset,
    #[error("no_findings is a derived category and cannot carry patterns")]
    NoFindingsPatterns,
    #[error("mention for exam {exam} has no standardized assertion; run normalization first")]
    PipelineOrder { exam: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// --- Rule compilation --------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawCompound {
    #[serde(default)]
    anatomy: Vec<String>,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    exclusions: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawRule {
    #[serde(default)]
    synonyms: Vec<String>,
    #[serde(default)]
    compounds: Vec<RawCompound>,
}

#[derive(Debug)]
struct CompiledCompound {
    anatomy: Vec<Regex>,
    attributes: Vec<Regex>,
    exclusions: Vec<Regex>,
}

#[derive(Debug)]
struct CompiledRule {
    synonyms: Vec<Regex>,
    compounds: Vec<CompiledCompound>,
}

/// Compiled, immutable matcher over the 12 matchable categories.
#[derive(Debug)]
pub struct RuleSet {
    rules: BTreeMap<DiseaseCategory, CompiledRule>,
}

const DEFAULT_RULES_JSON: &str = include_str!("../assets/chexpert_rules.json");

fn compile_pattern(category: &str, pattern: &str) -> Result<Regex, ChexmapError> {
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .build()
        .map_err(|e| ChexmapError::Pattern {
            category: category.to_string(),
            pattern: pattern.to_string(),
            message: e.to_string(),
        })
}

/// Compile a ruleset from its JSON source.
pub fn compile_rules(json: &str) -> Result<RuleSet, ChexmapError> {
    let raw: BTreeMap<String, RawRule> =
        serde_json::from_str(json).map_err(|e| ChexmapError::Parse(e.to_string()))?;

    let mut rules = BTreeMap::new();
    for (name, rule) in raw {
        let category = DiseaseCategory::parse(&name)
            .ok_or_else(|| ChexmapError::Parse(format!("unknown category {name:?}")))?;
        let has_patterns = !rule.synonyms.is_empty() || !rule.compounds.is_empty();
        if category == DiseaseCategory::NoFindings {
            if has_patterns {
                return Err(ChexmapError::NoFindingsPatterns);
            }
            continue;
        }
        if !has_patterns {
            continue;
        }
        let synonyms = rule
            .synonyms
            .iter()
            .map(|p| compile_pattern(&name, p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut compounds = Vec::new();
        for c in &rule.compounds {
            compounds.push(CompiledCompound {
                anatomy: c
                    .anatomy
                    .iter()
                    .map(|p| compile_pattern(&name, p))
                    .collect::<Result<Vec<_>, _>>()?,
                attributes: c
                    .attributes
                    .iter()
                    .map(|p| compile_pattern(&name, p))
                    .collect::<Result<Vec<_>, _>>()?,
                exclusions: c
                    .exclusions
                    .iter()
                    .map(|p| compile_pattern(&name, p))
                    .collect::<Result<Vec<_>, _>>()?,
            });
        }
        rules.insert(category, CompiledRule { synonyms, compounds });
    }
    if rules.is_empty() {
        return Err(ChexmapError::EmptyRuleset);
    }
    Ok(RuleSet { rules })
}

/// Compile the ruleset shipped with the crate.
pub fn builtin_rules() -> RuleSet {
    compile_rules(DEFAULT_RULES_JSON).expect("builtin ruleset compiles")
}

/// Compile a ruleset from a JSON file on disk.
pub fn compile_rules_file(path: &Path) -> Result<RuleSet, ChexmapError> {
    let json = std::fs::read_to_string(path)?;
    compile_rules(&json)
}

/// A category mention located in text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMention {
    pub category: DiseaseCategory,
    pub span: Range<usize>,
}

impl RuleSet {
    /// Categories with at least one pattern.
    pub fn covered_categories(&self) -> Vec<DiseaseCategory> {
        self.rules.keys().copied().collect()
    }

    /// Map an already-lemmatized entity text onto disease categories.
    ///
    /// A category is included when any synonym matches, or when some compound
    /// rule has an anatomy match followed by an attribute match and none of
    /// that rule's exclusion patterns match anywhere in the text.
    pub fn map_entity(&self, text: &str) -> BTreeSet<DiseaseCategory> {
        let mut out = BTreeSet::new();
        for (&category, rule) in &self.rules {
            if rule.matches(text) {
                out.insert(category);
            }
        }
        out
    }

    /// Locate every maximal category mention in `text`, for the rule labeler.
    ///
    /// Overlapping matches of one category are merged into a maximal span;
    /// overlapping mentions of different categories are all reported.
    pub fn detect_mentions(&self, text: &str) -> Vec<CategoryMention> {
        let mut out = Vec::new();
        for (&category, rule) in &self.rules {
            let mut spans: Vec<Range<usize>> = Vec::new();
            for syn in &rule.synonyms {
                for m in syn.find_iter(text) {
                    spans.push(m.range());
                }
            }
            for compound in &rule.compounds {
                if compound.excluded(text) {
                    continue;
                }
                for anat in &compound.anatomy {
                    for a in anat.find_iter(text) {
                        if let Some(attr_end) = compound.first_attribute_end(text, a.end()) {
                            spans.push(a.start()..attr_end);
                        }
                    }
                }
            }
            spans.sort_by_key(|r| (r.start, std::cmp::Reverse(r.end)));
            let mut merged: Vec<Range<usize>> = Vec::new();
            for span in spans {
                match merged.last_mut() {
                    Some(last) if span.start < last.end => {
                        last.end = last.end.max(span.end);
                    }
                    _ => merged.push(span),
                }
            }
            out.extend(merged.into_iter().map(|span| CategoryMention { category, span }));
        }
        out.sort_by_key(|m| (m.span.start, m.span.end, m.category.index()));
        out
    }
}

impl CompiledRule {
    fn matches(&self, text: &str) -> bool {
        if self.synonyms.iter().any(|p| p.is_match(text)) {
            return true;
        }
        self.compounds.iter().any(|c| c.matches(text))
    }
}

impl CompiledCompound {
    fn excluded(&self, text: &str) -> bool {
        self.exclusions.iter().any(|p| p.is_match(text))
    }

    fn first_attribute_end(&self, text: &str, from: usize) -> Option<usize> {
        self.attributes
            .iter()
            .filter_map(|p| p.find_at(text, from).map(|m| m.end()))
            .min()
    }

    fn matches(&self, text: &str) -> bool {
        if self.excluded(text) {
            return false;
        }
        self.anatomy.iter().any(|anat| {
            anat.find_iter(text)
                .any(|a| self.first_attribute_end(text, a.end()).is_some())
        })
    }
}

// --- Reduction ---------------------------------------------------------------

fn rank(status: AssertionStatus) -> u8 {
    match status {
        AssertionStatus::Negative => 0,
        AssertionStatus::Uncertain => 1,
        AssertionStatus::Positive => 2,
        AssertionStatus::Absent => u8::MAX, // never combined; guarded below
    }
}

/// Combine evidence per category by precedence Positive > Uncertain >
/// Negative, then derive No Findings. Categories without evidence are Absent.
pub fn combine_labels<I>(evidence: I) -> [AssertionStatus; 13]
where
    I: IntoIterator<Item = (DiseaseCategory, AssertionStatus)>,
{
    let mut best: [Option<AssertionStatus>; 13] = [None; 13];
    for (category, status) in evidence {
        if status == AssertionStatus::Absent || category == DiseaseCategory::NoFindings {
            continue;
        }
        let slot = &mut best[category.index()];
        *slot = Some(match *slot {
            Some(current) if rank(current) >= rank(status) => current,
            _ => status,
        });
    }
    let mut out = [AssertionStatus::Absent; 13];
    for (i, slot) in best.iter().enumerate() {
        if let Some(status) = slot {
            out[i] = *status;
        }
    }
    out[DiseaseCategory::NoFindings.index()] = derive_no_findings(&out);
    out
}

/// No Findings is positive exactly when every disease category is negative
/// or absent; a report carrying only negated findings still asserts the
/// absence of findings.
pub fn derive_no_findings(statuses: &[AssertionStatus; 13]) -> AssertionStatus {
    let clean = DiseaseCategory::DISEASES.iter().all(|&d| {
        matches!(
            statuses[d.index()],
            AssertionStatus::Negative | AssertionStatus::Absent
        )
    });
    if clean {
        AssertionStatus::Positive
    } else {
        AssertionStatus::Absent
    }
}

/// Reduce one exam's mentions (single system, assertions standardized) to a
/// 13-category status vector.
pub fn reduce_report(
    mentions: &[EntityMention],
    matcher: &RuleSet,
) -> Result<[AssertionStatus; 13], ChexmapError> {
    let mut evidence = Vec::new();
    for m in mentions {
        let status = m.assertion.ok_or_else(|| ChexmapError::PipelineOrder {
            exam: m.exam_id.clone(),
        })?;
        for category in matcher.map_entity(&m.normalized_text) {
            evidence.push((category, status));
        }
    }
    Ok(combine_labels(evidence))
}

// --- Label matrix -------------------------------------------------------------

pub const ABSENT_ROW: [AssertionStatus; 13] = [AssertionStatus::Absent; 13];

/// Dense (exam x category x system) status cube; cells default to Absent.
#[derive(Debug, Clone, Default)]
pub struct LabelMatrix {
    cells: BTreeMap<String, BTreeMap<SystemId, [AssertionStatus; 13]>>,
}

impl LabelMatrix {
    pub fn new() -> LabelMatrix {
        LabelMatrix::default()
    }

    /// Register an exam so it participates in every system's slice even if
    /// no system labeled it.
    pub fn ensure_exam(&mut self, exam_id: &str) {
        self.cells.entry(exam_id.to_string()).or_default();
    }

    pub fn set(&mut self, exam_id: &str, system: &SystemId, row: [AssertionStatus; 13]) {
        self.cells
            .entry(exam_id.to_string())
            .or_default()
            .insert(system.clone(), row);
    }

    /// Full status row for (exam, system); Absent where nothing was recorded.
    pub fn row(&self, exam_id: &str, system: &SystemId) -> [AssertionStatus; 13] {
        self.cells
            .get(exam_id)
            .and_then(|m| m.get(system))
            .copied()
            .unwrap_or(ABSENT_ROW)
    }

    pub fn get(
        &self,
        exam_id: &str,
        category: DiseaseCategory,
        system: &SystemId,
    ) -> AssertionStatus {
        self.row(exam_id, system)[category.index()]
    }

    pub fn exams(&self) -> impl Iterator<Item = &String> {
        self.cells.keys()
    }

    pub fn n_exams(&self) -> usize {
        self.cells.len()
    }

    /// Systems that contributed at least one row.
    pub fn systems(&self) -> BTreeSet<SystemId> {
        self.cells
            .values()
            .flat_map(|m| m.keys().cloned())
            .collect()
    }

    pub fn insert_slice(&mut self, system: &SystemId, rows: BTreeMap<String, [AssertionStatus; 13]>) {
        for (exam, row) in rows {
            self.set(&exam, system, row);
        }
    }
}

// --- Slice files ---------------------------------------------------------------

/// Write one system's slice as CSV: `exam_id` plus the 13 category columns.
pub fn write_slice_csv<W: Write>(
    w: W,
    rows: &BTreeMap<String, [AssertionStatus; 13]>,
) -> Result<(), ChexmapError> {
    let mut writer = csv::Writer::from_writer(w);
    let mut header = vec!["exam_id".to_string()];
    header.extend(DiseaseCategory::ALL.iter().map(|c| c.as_str().to_string()));
    writer
        .write_record(&header)
        .map_err(|e| ChexmapError::Parse(e.to_string()))?;
    for (exam, row) in rows {
        let mut record = vec![exam.clone()];
        record.extend(row.iter().map(|s| s.as_str().to_string()));
        writer
            .write_record(&record)
            .map_err(|e| ChexmapError::Parse(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a slice written by [`write_slice_csv`].
pub fn read_slice_csv<R: BufRead>(
    r: R,
) -> Result<BTreeMap<String, [AssertionStatus; 13]>, ChexmapError> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| ChexmapError::Parse(e.to_string()))?
        .clone();
    let mut order: Vec<DiseaseCategory> = Vec::new();
    for h in headers.iter().skip(1) {
        let category = DiseaseCategory::parse(h)
            .ok_or_else(|| ChexmapError::Parse(format!("unknown category column {h:?}")))?;
        order.push(category);
    }
    let mut rows = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| ChexmapError::Parse(e.to_string()))?;
        let exam = record
            .get(0)
            .ok_or_else(|| ChexmapError::Parse("missing exam_id".into()))?
            .to_string();
        let mut row = ABSENT_ROW;
        for (i, category) in order.iter().enumerate() {
            let cell = record
                .get(i + 1)
                .ok_or_else(|| ChexmapError::Parse(format!("{exam}: truncated row")))?;
            let status = AssertionStatus::parse(cell)
                .ok_or_else(|| ChexmapError::Parse(format!("{exam}: bad status {cell:?}")))?;
            row[category.index()] = status;
        }
        rows.insert(exam, row);
    }
    Ok(rows)
}
