//! Ingestion of external labeler outputs through the JSON Lines interchange
//! format, with per-system disease-category filters.
//!
//! The core never talks to vendor APIs; converters produce interchange files
//! (one JSON object per extracted entity) and everything downstream is
//! vendor-agnostic. Category filters are exact and case-sensitive since the
//! filtered values are machine-emitted enums.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SectionKind;
use crate::normalize::AssertionStatus;

/// Identifier of an entity-producing system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemId(String);

impl SystemId {
    pub fn new(id: impl Into<String>) -> SystemId {
        SystemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn aws() -> SystemId {
        SystemId::new("AWS")
    }
    pub fn az() -> SystemId {
        SystemId::new("AZ")
    }
    pub fn gc() -> SystemId {
        SystemId::new("GC")
    }
    pub fn sp() -> SystemId {
        SystemId::new("SP")
    }
    pub fn rulelab() -> SystemId {
        SystemId::new("RULELAB")
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SystemId {
    fn from(s: &str) -> SystemId {
        SystemId::new(s)
    }
}

/// How a system expresses assertions in the interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionMode {
    Categorical,
    ConfidenceThreshold,
}

/// Registration record: which raw entity categories to keep and how the
/// system reports assertions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: SystemId,
    pub selected_categories: BTreeSet<String>,
    pub assertion_mode: AssertionMode,
}

impl SystemSpec {
    pub fn new<I, S>(id: SystemId, categories: I, assertion_mode: AssertionMode) -> SystemSpec
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SystemSpec {
            id,
            selected_categories: categories.into_iter().map(Into::into).collect(),
            assertion_mode,
        }
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("system {0} already registered")]
    DuplicateSystem(SystemId),
    #[error("system {0} not registered")]
    UnknownSystem(SystemId),
    #[error("system spec for {0} selects no categories")]
    EmptyCategories(SystemId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable after configuration: register every system up front, then ingest.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    systems: std::collections::BTreeMap<SystemId, SystemSpec>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    /// Registry preloaded with the four commercial systems' category filters
    /// plus the internal rule labeler.
    pub fn builtin() -> Registry {
        let mut r = Registry::new();
        r.register(SystemSpec::new(
            SystemId::aws(),
            ["MEDICAL_CONDITION"],
            AssertionMode::ConfidenceThreshold,
        ))
        .unwrap();
        r.register(SystemSpec::new(
            SystemId::az(),
            ["SYMPTOM_OR_SIGN", "DIAGNOSIS"],
            AssertionMode::Categorical,
        ))
        .unwrap();
        r.register(SystemSpec::new(
            SystemId::gc(),
            ["PROBLEM"],
            AssertionMode::Categorical,
        ))
        .unwrap();
        r.register(SystemSpec::new(
            SystemId::sp(),
            ["Disease_Syndrome_Disorder", "Symptom", "ImagingFindings"],
            AssertionMode::Categorical,
        ))
        .unwrap();
        r.register(SystemSpec::new(
            SystemId::rulelab(),
            ["FINDING"],
            AssertionMode::Categorical,
        ))
        .unwrap();
        r
    }

    pub fn register(&mut self, spec: SystemSpec) -> Result<(), AdapterError> {
        if spec.selected_categories.is_empty() {
            return Err(AdapterError::EmptyCategories(spec.id));
        }
        if self.systems.contains_key(&spec.id) {
            return Err(AdapterError::DuplicateSystem(spec.id));
        }
        self.systems.insert(spec.id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, id: &SystemId) -> Option<&SystemSpec> {
        self.systems.get(id)
    }

    pub fn contains(&self, id: &SystemId) -> bool {
        self.systems.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &SystemId> {
        self.systems.keys()
    }
}

/// Raw assertion as produced by a source system: either a categorical label
/// or a negation confidence score in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawAssertion {
    Categorical(String),
    Confidence(f64),
}

/// One extracted entity, normalized across systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub exam_id: String,
    pub system: SystemId,
    /// `None` when the producer declared the section as "UNKNOWN".
    pub section: Option<SectionKind>,
    pub surface_text: String,
    /// Filled by the normalize stage; empty until then.
    #[serde(default)]
    pub normalized_text: String,
    pub span: Option<(usize, usize)>,
    pub raw_category: String,
    pub raw_assertion: RawAssertion,
    /// Filled by the normalize stage.
    #[serde(default)]
    pub assertion: Option<AssertionStatus>,
}

/// Interchange line layout. Exactly one of `assertion` and
/// `negation_confidence` must be present.
#[derive(Debug, Serialize, Deserialize)]
struct InterchangeRecord {
    exam_id: String,
    system: String,
    section: String,
    text: String,
    category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    assertion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    negation_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    begin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<usize>,
}

/// A record that could not be ingested; the stream continues past it.
#[derive(Debug, Clone, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Outcome of ingesting one interchange file.
///
/// `mentions.len() + dropped + errors.len() == total` always holds.
#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub mentions: Vec<EntityMention>,
    /// Records outside the system's selected categories.
    pub dropped: u64,
    pub errors: Vec<RecordError>,
    pub total: u64,
}

fn record_to_mention(
    record: InterchangeRecord,
    system: &SystemId,
    line: usize,
) -> Result<Option<EntityMention>, String> {
    if record.system != system.as_str() {
        return Err(format!(
            "record declares system {:?}, expected {}",
            record.system, system
        ));
    }
    let raw_assertion = match (record.assertion, record.negation_confidence) {
        (Some(a), None) => RawAssertion::Categorical(a),
        (None, Some(cs)) => {
            if !(0.0..=1.0).contains(&cs) {
                return Err(format!("negation_confidence {cs} outside [0,1]"));
            }
            RawAssertion::Confidence(cs)
        }
        (Some(_), Some(_)) => {
            return Err("both assertion and negation_confidence present".to_string())
        }
        (None, None) => return Err("neither assertion nor negation_confidence present".to_string()),
    };
    let span = match (record.begin, record.end) {
        (Some(b), Some(e)) if b <= e => Some((b, e)),
        (Some(_), Some(_)) => return Err("begin > end".to_string()),
        (None, None) => None,
        _ => return Err("begin and end must both be present or both absent".to_string()),
    };
    if record.exam_id.is_empty() {
        return Err("empty exam_id".to_string());
    }
    let _ = line;
    Ok(Some(EntityMention {
        exam_id: record.exam_id,
        system: system.clone(),
        section: SectionKind::parse(&record.section),
        surface_text: record.text,
        normalized_text: String::new(),
        span,
        raw_category: record.category,
        raw_assertion,
        assertion: None,
    }))
}

/// Ingest an interchange stream for a registered system.
///
/// Records whose category is outside the system's selected set are dropped
/// and counted; malformed records become per-record errors.
pub fn ingest<R: BufRead>(
    registry: &Registry,
    system: &SystemId,
    reader: R,
) -> Result<IngestOutcome, AdapterError> {
    let spec = registry
        .get(system)
        .ok_or_else(|| AdapterError::UnknownSystem(system.clone()))?;

    let mut outcome = IngestOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        outcome.total += 1;
        let record: InterchangeRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                outcome.errors.push(RecordError {
                    line: lineno,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        if !spec.selected_categories.contains(&record.category) {
            outcome.dropped += 1;
            continue;
        }
        match record_to_mention(record, system, lineno) {
            Ok(Some(m)) => outcome.mentions.push(m),
            Ok(None) => outcome.dropped += 1,
            Err(message) => outcome.errors.push(RecordError {
                line: lineno,
                message,
            }),
        }
    }
    Ok(outcome)
}

/// [`ingest`] from a file path.
pub fn ingest_path(
    registry: &Registry,
    system: &SystemId,
    path: &Path,
) -> Result<IngestOutcome, AdapterError> {
    let file = std::fs::File::open(path)?;
    ingest(registry, system, std::io::BufReader::new(file))
}

/// Write mentions as JSON Lines (one [`EntityMention`] per line).
pub fn write_mentions<W: std::io::Write>(
    mut w: W,
    mentions: &[EntityMention],
) -> Result<(), std::io::Error> {
    for m in mentions {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read mentions written by [`write_mentions`].
pub fn read_mentions<R: BufRead>(r: R) -> Result<Vec<EntityMention>, AdapterError> {
    let mut mentions = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: EntityMention = serde_json::from_str(&line).map_err(|e| {
            AdapterError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        mentions.push(m);
    }
    Ok(mentions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(system: &str, category: &str, assertion: &str) -> String {
        format!(
            r#"{{"exam_id":"e1","system":"{system}","section":"IMPRESSION","text":"pneumonia","category":"{category}","assertion":"{assertion}"}}"#
        )
    }

    #[test]
    fn builtin_registry_has_table_filters() {
        let r = Registry::builtin();
        assert!(r.get(&SystemId::aws()).unwrap().selected_categories.contains("MEDICAL_CONDITION"));
        let sp = r.get(&SystemId::sp()).unwrap();
        assert!(sp.selected_categories.contains("Disease_Syndrome_Disorder"));
        assert!(sp.selected_categories.contains("Symptom"));
        assert!(sp.selected_categories.contains("ImagingFindings"));
    }

    #[test]
    fn reregistration_is_an_error() {
        let mut r = Registry::builtin();
        let err = r.register(SystemSpec::new(
            SystemId::aws(),
            ["MEDICAL_CONDITION"],
            AssertionMode::ConfidenceThreshold,
        ));
        assert!(matches!(err, Err(AdapterError::DuplicateSystem(_))));
    }

    #[test]
    fn empty_categories_rejected() {
        let mut r = Registry::new();
        let err = r.register(SystemSpec::new(
            SystemId::new("X"),
            Vec::<String>::new(),
            AssertionMode::Categorical,
        ));
        assert!(matches!(err, Err(AdapterError::EmptyCategories(_))));
    }

    #[test]
    fn az_diagnosis_retained() {
        let r = Registry::builtin();
        let input = line("AZ", "DIAGNOSIS", "positive");
        let out = ingest(&r, &SystemId::az(), input.as_bytes()).unwrap();
        assert_eq!(out.mentions.len(), 1);
        assert_eq!(out.dropped, 0);
        assert_eq!(out.mentions[0].section, Some(SectionKind::Impression));
        assert!(out.mentions[0].assertion.is_none());
    }

    #[test]
    fn gc_medication_dropped() {
        let r = Registry::builtin();
        let input = line("GC", "MEDICATION", "likely");
        let out = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        assert!(out.mentions.is_empty());
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn category_filter_is_case_sensitive() {
        let r = Registry::builtin();
        let input = line("GC", "problem", "likely");
        let out = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn aws_confidence_out_of_range_is_record_error() {
        let r = Registry::builtin();
        let input = r#"{"exam_id":"e1","system":"AWS","section":"IMPRESSION","text":"pneumonia","category":"MEDICAL_CONDITION","negation_confidence":1.3}"#;
        let out = ingest(&r, &SystemId::aws(), input.as_bytes()).unwrap();
        assert!(out.mentions.is_empty());
        assert_eq!(out.errors.len(), 1);
        assert!(out.errors[0].message.contains("1.3"));
    }

    #[test]
    fn unknown_system_is_fatal() {
        let r = Registry::builtin();
        assert!(matches!(
            ingest(&r, &SystemId::new("NOPE"), "".as_bytes()),
            Err(AdapterError::UnknownSystem(_))
        ));
    }

    #[test]
    fn counts_balance() {
        let r = Registry::builtin();
        let input = [
            line("GC", "PROBLEM", "likely"),
            line("GC", "MEDICATION", "likely"),
            "not json at all".to_string(),
            line("GC", "PROBLEM", "unlikely"),
        ]
        .join("\n");
        let out = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        assert_eq!(out.total, 4);
        assert_eq!(out.mentions.len() as u64 + out.dropped + out.errors.len() as u64, out.total);
    }

    #[test]
    fn ingestion_is_deterministic() {
        let r = Registry::builtin();
        let input = [line("GC", "PROBLEM", "likely"), line("GC", "PROBLEM", "unlikely")].join("\n");
        let a = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        let b = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        assert_eq!(a.mentions, b.mentions);
    }

    #[test]
    fn unknown_section_maps_to_none() {
        let r = Registry::builtin();
        let input = r#"{"exam_id":"e1","system":"GC","section":"UNKNOWN","text":"x","category":"PROBLEM","assertion":"likely"}"#;
        let out = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        assert_eq!(out.mentions[0].section, None);
    }

    #[test]
    fn both_assertion_fields_is_an_error() {
        let r = Registry::builtin();
        let input = r#"{"exam_id":"e1","system":"GC","section":"IMPRESSION","text":"x","category":"PROBLEM","assertion":"likely","negation_confidence":0.5}"#;
        let out = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn mention_round_trip() {
        let r = Registry::builtin();
        let input = line("GC", "PROBLEM", "likely");
        let out = ingest(&r, &SystemId::gc(), input.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_mentions(&mut buf, &out.mentions).unwrap();
        let back = read_mentions(&buf[..]).unwrap();
        assert_eq!(back, out.mentions);
    }
}
