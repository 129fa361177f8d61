//! Report corpus: loading, section segmentation, and synthetic generation.
//!
//! CXR reports arrive as plain text in a semi-structured layout with named
//! sections (clinical history, findings, impression, ...). [`parse_report`]
//! recognizes section headers at line starts and partitions the text so that
//! every character belongs to exactly one section; text before the first
//! header is the preamble, and a report with no recognizable header at all is
//! treated as one big findings section.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chexmap::DiseaseCategory;
use crate::normalize::AssertionStatus;

/// Named report sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Preamble,
    ClinicalHistory,
    Findings,
    Impression,
    Comparison,
    ProcedureComments,
}

impl SectionKind {
    /// Stable identifier used in file formats.
    pub fn as_str(&self) -> &'static str {
        match self {
            SectionKind::Preamble => "preamble",
            SectionKind::ClinicalHistory => "clinical_history",
            SectionKind::Findings => "findings",
            SectionKind::Impression => "impression",
            SectionKind::Comparison => "comparison",
            SectionKind::ProcedureComments => "procedure_comments",
        }
    }

    /// Parse a section name as written by interchange producers.
    ///
    /// Accepts the snake_case identifiers, the CamelCase variant names, and
    /// any casing of either; returns `None` for "UNKNOWN" or anything else.
    pub fn parse(s: &str) -> Option<SectionKind> {
        let folded: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | ' ' | '-'))
            .collect::<String>()
            .to_ascii_lowercase();
        match folded.as_str() {
            "preamble" => Some(SectionKind::Preamble),
            "clinicalhistory" | "history" | "indication" => Some(SectionKind::ClinicalHistory),
            "findings" => Some(SectionKind::Findings),
            "impression" | "impressions" => Some(SectionKind::Impression),
            "comparison" => Some(SectionKind::Comparison),
            "procedurecomments" => Some(SectionKind::ProcedureComments),
            _ => None,
        }
    }
}

impl fmt::Display for SectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Patient sex as recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Sex {
    fn parse(s: &str) -> Sex {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Sex::Male,
            "f" | "female" => Sex::Female,
            _ => Sex::Unknown,
        }
    }
}

/// One section's extent within the report text.
///
/// `start..end` covers the whole section including its header line, so the
/// spans of all sections concatenated in order reproduce the input exactly.
/// `body_start..end` is the content with the header token stripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub kind: SectionKind,
    pub start: usize,
    pub end: usize,
    pub body_start: usize,
}

impl SectionSpan {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Report metadata carried by the manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub age_months: Option<u32>,
    pub sex: Sex,
}

/// One exam's text partitioned into named sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub exam_id: String,
    pub age_months: Option<u32>,
    pub sex: Sex,
    pub raw_text: String,
    /// Sections in document order; spans partition `raw_text`.
    pub sections: Vec<SectionSpan>,
}

impl Report {
    /// Span for a section kind, if present.
    pub fn section(&self, kind: SectionKind) -> Option<&SectionSpan> {
        self.sections.iter().find(|s| s.kind == kind)
    }

    /// Full section slice including its header line.
    pub fn section_text(&self, kind: SectionKind) -> Option<&str> {
        self.section(kind).map(|s| &self.raw_text[s.start..s.end])
    }

    /// Section content with the header token stripped.
    pub fn section_body(&self, kind: SectionKind) -> Option<&str> {
        self.section(kind)
            .map(|s| self.raw_text[s.body_start..s.end].trim())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty report text for exam {0}")]
    EmptyReport(String),
    #[error("duplicate exam_id {0} in manifest")]
    DuplicateExamId(String),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("invalid synthesis profile: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Header synonyms, matched case-insensitively at line start. Longer names
/// are tried first so "clinical history" wins over "history".
const HEADER_SYNONYMS: &[(&str, SectionKind)] = &[
    ("procedure comments", SectionKind::ProcedureComments),
    ("clinical history", SectionKind::ClinicalHistory),
    ("impressions", SectionKind::Impression),
    ("indication", SectionKind::ClinicalHistory),
    ("impression", SectionKind::Impression),
    ("comparison", SectionKind::Comparison),
    ("findings", SectionKind::Findings),
    ("history", SectionKind::ClinicalHistory),
];

/// A header match at a line start: section kind plus the offset where the
/// body (content after the name and ":"/"-" separator) begins.
fn match_header(line: &str) -> Option<(SectionKind, usize)> {
    let trimmed = line.trim_start();
    let indent = line.len() - trimmed.len();
    let lower = trimmed.to_ascii_lowercase();
    for &(name, kind) in HEADER_SYNONYMS {
        if !lower.starts_with(name) {
            continue;
        }
        let rest = &trimmed[name.len()..];
        // Bare name on its own line, or name followed by ":" or "-".
        let after = rest.trim_start();
        if after.is_empty() {
            return Some((kind, indent + trimmed.len()));
        }
        if let Some(stripped) = after.strip_prefix([':', '-']) {
            let sep_at = rest.len() - after.len() + 1;
            let body_in_line =
                indent + name.len() + sep_at + (stripped.len() - stripped.trim_start().len());
            return Some((kind, body_in_line));
        }
    }
    None
}

/// Segment report text into sections by scanning for header lines.
///
/// Never fails on malformed structure: unknown lines stay inside the current
/// section, a repeated header is treated as content, and text with no header
/// at all becomes a single findings section.
pub fn parse_report(exam_id: &str, meta: ReportMeta, text: &str) -> Result<Report, CorpusError> {
    if text.is_empty() {
        return Err(CorpusError::EmptyReport(exam_id.to_string()));
    }

    let mut sections: Vec<SectionSpan> = Vec::new();
    let mut seen: BTreeMap<SectionKind, ()> = BTreeMap::new();

    let mut line_start = 0usize;
    while line_start < text.len() {
        let line_end = text[line_start..]
            .find('\n')
            .map(|i| line_start + i)
            .unwrap_or(text.len());
        let line = &text[line_start..line_end];
        if let Some((kind, body_in_line)) = match_header(line) {
            if !seen.contains_key(&kind) {
                seen.insert(kind, ());
                if let Some(prev) = sections.last_mut() {
                    prev.end = line_start;
                } else if line_start > 0 {
                    sections.push(SectionSpan {
                        kind: SectionKind::Preamble,
                        start: 0,
                        end: line_start,
                        body_start: 0,
                    });
                }
                let body_start = if body_in_line >= line.len() {
                    // Bare header: body begins after the newline.
                    (line_end + 1).min(text.len())
                } else {
                    line_start + body_in_line
                };
                sections.push(SectionSpan {
                    kind,
                    start: line_start,
                    end: text.len(),
                    body_start,
                });
            }
        }
        line_start = line_end + 1;
    }

    if sections.is_empty() {
        sections.push(SectionSpan {
            kind: SectionKind::Findings,
            start: 0,
            end: text.len(),
            body_start: 0,
        });
    }

    Ok(Report {
        exam_id: exam_id.to_string(),
        age_months: meta.age_months,
        sex: meta.sex,
        raw_text: text.to_string(),
        sections,
    })
}

/// A manifest row that could not be turned into a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub exam_id: String,
    pub message: String,
}

/// Result of loading a manifest: reports in manifest order plus per-row
/// error records for rows that were skipped.
#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub reports: Vec<Report>,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    exam_id: String,
    #[serde(default)]
    age_months: String,
    #[serde(default)]
    sex: String,
    path: String,
}

/// Load a corpus from a CSV manifest (`exam_id,age_months,sex,path`).
///
/// Report paths are resolved relative to the manifest's directory. A missing
/// or unreadable report file yields a per-row error record and processing
/// continues; a duplicate exam_id is fatal.
pub fn load_corpus(manifest_path: &Path) -> Result<CorpusLoad, CorpusError> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(manifest_path)
        .map_err(|e| CorpusError::Manifest {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;

    let mut seen = BTreeMap::new();
    let mut load = CorpusLoad::default();
    for (idx, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let rownum = idx + 2; // 1-based, after the header line
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                load.errors.push(RowError {
                    row: rownum,
                    exam_id: String::new(),
                    message: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        if seen.insert(row.exam_id.clone(), ()).is_some() {
            return Err(CorpusError::DuplicateExamId(row.exam_id));
        }
        let meta = ReportMeta {
            age_months: row.age_months.trim().parse::<u32>().ok(),
            sex: Sex::parse(&row.sex),
        };
        let path = base.join(&row.path);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                load.errors.push(RowError {
                    row: rownum,
                    exam_id: row.exam_id,
                    message: format!("{}: {e}", path.display()),
                });
                continue;
            }
        };
        match parse_report(&row.exam_id, meta, &text) {
            Ok(report) => load.reports.push(report),
            Err(e) => load.errors.push(RowError {
                row: rownum,
                exam_id: row.exam_id,
                message: e.to_string(),
            }),
        }
    }
    Ok(load)
}

// --- Synthetic corpus generation -------------------------------------------

/// Per-disease prevalence and hedging/negation frequencies for synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthProfile {
    /// Probability that a disease is present (mentioned affirmatively).
    pub prevalence: BTreeMap<DiseaseCategory, f64>,
    /// Probability that a present disease is phrased as a hedge.
    pub hedging: f64,
    /// Probability that an absent disease is mentioned as an explicit negation.
    pub negated_mention: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        let prevalence = DiseaseCategory::DISEASES
            .iter()
            .map(|&d| (d, 0.3))
            .collect();
        SynthProfile {
            prevalence,
            hedging: 0.0,
            negated_mention: 0.25,
        }
    }
}

impl SynthProfile {
    fn validate(&self) -> Result<(), CorpusError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        for (d, &p) in &self.prevalence {
            if !ok(p) {
                return Err(CorpusError::Config(format!("prevalence({d}) = {p}")));
            }
        }
        if !ok(self.hedging) {
            return Err(CorpusError::Config(format!("hedging = {}", self.hedging)));
        }
        if !ok(self.negated_mention) {
            return Err(CorpusError::Config(format!(
                "negated_mention = {}",
                self.negated_mention
            )));
        }
        Ok(())
    }
}

/// A synthesized corpus together with the generator's intended labels.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub reports: Vec<Report>,
    /// exam_id -> intended status for all 13 categories.
    pub truth: BTreeMap<String, [AssertionStatus; 13]>,
}

/// Sentence templates per intended status. The phrases come straight from
/// the rule labeler's own vocabulary so the labeler can reproduce the
/// intended statuses.
fn disease_phrase(category: DiseaseCategory) -> &'static str {
    match category {
        DiseaseCategory::EnlargedCardiomediastinum => "mediastinal widening",
        DiseaseCategory::Cardiomegaly => "cardiomegaly",
        DiseaseCategory::LungOpacity => "focal opacity",
        DiseaseCategory::LungLesion => "pulmonary nodule",
        DiseaseCategory::Edema => "pulmonary edema",
        DiseaseCategory::Consolidation => "consolidation",
        DiseaseCategory::Pneumonia => "pneumonia",
        DiseaseCategory::Atelectasis => "atelectasis",
        DiseaseCategory::Pneumothorax => "pneumothorax",
        DiseaseCategory::PleuralEffusion => "pleural effusion",
        DiseaseCategory::PleuralOther => "pleural thickening",
        DiseaseCategory::Fracture => "rib fracture",
        DiseaseCategory::NoFindings => unreachable!("NoFindings has no phrase"),
    }
}

const POSITIVE_TEMPLATES: &[&str] = &[
    "There is {}.",
    "Findings consistent with {}.",
    "Persistent {} in the right lung.",
];
const NEGATIVE_TEMPLATES: &[&str] = &[
    "No {}.",
    "No evidence of {}.",
    "There is no {}.",
];
const HEDGED_TEMPLATES: &[&str] = &[
    "Possible {}.",
    "Findings may represent {}.",
    "Suspected {}.",
];
const NO_FINDINGS_TEMPLATES: &[&str] = &[
    "Normal chest radiograph.",
    "Normal study.",
];
const HISTORY_TEMPLATES: &[&str] = &["Cough.", "Fever.", "Chest pain.", "Follow-up."];

fn fill(template: &str, phrase: &str) -> String {
    template.replacen("{}", phrase, 1)
}

/// Generate a deterministic corpus of `n` reports with known labels.
pub fn generate_synthetic(
    seed: u64,
    n: usize,
    profile: &SynthProfile,
) -> Result<SyntheticCorpus, CorpusError> {
    if n == 0 {
        return Err(CorpusError::Config("n must be positive".into()));
    }
    profile.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(n);
    let mut truth = BTreeMap::new();

    for i in 0..n {
        let exam_id = format!("SYN-{i:05}");
        let age_months = rng.gen_range(0u32..=216);
        let sex = if rng.gen_bool(0.5) { Sex::Male } else { Sex::Female };

        let mut statuses = [AssertionStatus::Absent; 13];
        let mut sentences = Vec::new();
        for &disease in DiseaseCategory::DISEASES {
            let prevalence = profile.prevalence.get(&disease).copied().unwrap_or(0.0);
            let phrase = disease_phrase(disease);
            let status = if rng.gen::<f64>() < prevalence {
                if rng.gen::<f64>() < profile.hedging {
                    sentences.push(fill(
                        HEDGED_TEMPLATES[rng.gen_range(0..HEDGED_TEMPLATES.len())],
                        phrase,
                    ));
                    AssertionStatus::Uncertain
                } else {
                    sentences.push(fill(
                        POSITIVE_TEMPLATES[rng.gen_range(0..POSITIVE_TEMPLATES.len())],
                        phrase,
                    ));
                    AssertionStatus::Positive
                }
            } else if rng.gen::<f64>() < profile.negated_mention {
                sentences.push(fill(
                    NEGATIVE_TEMPLATES[rng.gen_range(0..NEGATIVE_TEMPLATES.len())],
                    phrase,
                ));
                AssertionStatus::Negative
            } else {
                AssertionStatus::Absent
            };
            statuses[disease.index()] = status;
        }

        let impression = if sentences.is_empty() {
            NO_FINDINGS_TEMPLATES[rng.gen_range(0..NO_FINDINGS_TEMPLATES.len())].to_string()
        } else {
            sentences.join(" ")
        };
        statuses[DiseaseCategory::NoFindings.index()] =
            crate::chexmap::derive_no_findings(&statuses);

        let history = HISTORY_TEMPLATES[rng.gen_range(0..HISTORY_TEMPLATES.len())];
        let text = format!(
            "CLINICAL HISTORY: {history}\nFINDINGS: Two views of the chest were obtained.\nIMPRESSION: {impression}\n"
        );
        let meta = ReportMeta {
            age_months: Some(age_months),
            sex,
        };
        let report = parse_report(&exam_id, meta, &text)?;
        truth.insert(exam_id, statuses);
        reports.push(report);
    }

    Ok(SyntheticCorpus { reports, truth })
}

// --- Corpus archive ---------------------------------------------------------

/// Write reports as a JSON Lines archive, one report per line.
pub fn write_archive<W: std::io::Write>(
    mut w: W,
    reports: &[Report],
) -> Result<(), std::io::Error> {
    for report in reports {
        serde_json::to_writer(&mut w, report)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a JSON Lines archive produced by [`write_archive`].
pub fn read_archive<R: std::io::BufRead>(r: R) -> Result<Vec<Report>, CorpusError> {
    let mut reports = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: Report = serde_json::from_str(&line).map_err(|e| CorpusError::Manifest {
            path: PathBuf::from("<archive>"),
            message: format!("line {}: {e}", i + 1),
        })?;
        reports.push(report);
    }
    Ok(reports)
}
