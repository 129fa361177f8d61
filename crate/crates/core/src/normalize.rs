//! Entity normalization: lemmatization, assertion standardization, and
//! entity-level descriptive statistics.
//!
//! Every source system reports assertions in its own vocabulary; here they
//! all collapse onto {positive, negative, uncertain}. `Absent` exists only at
//! the disease-label level, for categories a system produced no mention for,
//! and is never the output of assertion standardization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{EntityMention, RawAssertion, SystemId};
use crate::corpus::{Report, SectionKind};

/// Standardized assertion status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionStatus {
    Positive,
    Negative,
    Uncertain,
    Absent,
}

impl AssertionStatus {
    pub const ALL: [AssertionStatus; 4] = [
        AssertionStatus::Positive,
        AssertionStatus::Negative,
        AssertionStatus::Uncertain,
        AssertionStatus::Absent,
    ];

    /// Position in [`Self::ALL`], used to index vote-count arrays.
    pub fn index(self) -> usize {
        match self {
            AssertionStatus::Positive => 0,
            AssertionStatus::Negative => 1,
            AssertionStatus::Uncertain => 2,
            AssertionStatus::Absent => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AssertionStatus::Positive => "positive",
            AssertionStatus::Negative => "negative",
            AssertionStatus::Uncertain => "uncertain",
            AssertionStatus::Absent => "absent",
        }
    }

    pub fn parse(s: &str) -> Option<AssertionStatus> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Some(AssertionStatus::Positive),
            "negative" => Some(AssertionStatus::Negative),
            "uncertain" => Some(AssertionStatus::Uncertain),
            "absent" => Some(AssertionStatus::Absent),
            _ => None,
        }
    }
}

impl fmt::Display for AssertionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("system {system}: unmapped assertion value {raw:?}")]
    UnmappedAssertion { system: SystemId, raw: String },
    #[error("system {system}: assertion mode does not accept {got}")]
    ModeMismatch { system: SystemId, got: &'static str },
    #[error("system {0} has no assertion mapping")]
    UnknownSystem(SystemId),
    #[error("negation confidence {0} outside [0,1]")]
    ConfidenceRange(f64),
    #[error("mentions reference exams missing from the corpus: {0:?}")]
    OrphanExams(Vec<String>),
    #[error("invalid lemma rules, line {line}: {message}")]
    LemmaConfig { line: usize, message: String },
}

// --- Lemmatizer -------------------------------------------------------------

#[derive(Debug, Clone)]
struct SuffixRule {
    suffix: String,
    replacement: String,
    min_len: usize,
    fix: bool,
}

/// Rule-based lemmatizer: an exception dictionary consulted first, then
/// suffix-rewrite rules applied in order until the token stops changing.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    exceptions: BTreeMap<String, String>,
    rules: Vec<SuffixRule>,
}

const DEFAULT_LEMMA_RULES: &str = include_str!("../assets/lemma_rules.txt");

static DEFAULT_LEMMATIZER: Lazy<Lemmatizer> =
    Lazy::new(|| Lemmatizer::from_str(DEFAULT_LEMMA_RULES).expect("builtin lemma rules"));

impl Default for Lemmatizer {
    fn default() -> Self {
        DEFAULT_LEMMATIZER.clone()
    }
}

impl Lemmatizer {
    /// Parse the tab-separated rules format. See `assets/lemma_rules.txt`.
    pub fn from_str(text: &str) -> Result<Lemmatizer, NormalizeError> {
        let mut exceptions = BTreeMap::new();
        let mut rules = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |message: String| NormalizeError::LemmaConfig {
                line: i + 1,
                message,
            };
            if let Some(suffix) = fields[0].strip_prefix('-') {
                if fields.len() < 3 {
                    return Err(err("suffix rule needs replacement and minlen".into()));
                }
                let min_len = fields[2]
                    .parse::<usize>()
                    .map_err(|e| err(format!("bad minlen: {e}")))?;
                let fix = match fields.get(3).copied() {
                    None | Some("") => false,
                    Some("fix") => true,
                    Some(other) => return Err(err(format!("unknown flag {other:?}"))),
                };
                rules.push(SuffixRule {
                    suffix: suffix.to_string(),
                    replacement: fields[1].to_string(),
                    min_len,
                    fix,
                });
            } else {
                if fields.len() != 2 {
                    return Err(err("exception needs exactly surface<TAB>lemma".into()));
                }
                exceptions.insert(fields[0].to_lowercase(), fields[1].to_lowercase());
            }
        }
        let lemmatizer = Lemmatizer { exceptions, rules };
        // Exception targets must be stable or idempotence breaks.
        for (surface, lemma) in &lemmatizer.exceptions {
            let again = lemmatizer.lemma_token(lemma);
            if &again != lemma {
                return Err(NormalizeError::LemmaConfig {
                    line: 0,
                    message: format!(
                        "exception {surface:?} -> {lemma:?} is not a fixed point (re-lemmatizes to {again:?})"
                    ),
                });
            }
        }
        Ok(lemmatizer)
    }

    pub fn from_file(path: &Path) -> Result<Lemmatizer, NormalizeError> {
        let text = std::fs::read_to_string(path).map_err(|e| NormalizeError::LemmaConfig {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Lemmatizer::from_str(&text)
    }

    /// Normalize a phrase: lowercase, strip punctuation except intra-word
    /// hyphen and slash, collapse whitespace, lemmatize each token.
    pub fn lemmatize(&self, phrase: &str) -> String {
        let lower = phrase.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut cleaned = String::with_capacity(lower.len());
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() {
                cleaned.push(c);
            } else if (c == '-' || c == '/')
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
            {
                cleaned.push(c);
            } else if c != '\'' {
                cleaned.push(' ');
            }
        }
        cleaned
            .split_whitespace()
            .map(|token| self.lemma_compound(token))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Lemmatize a token that may contain intra-word '-' or '/'.
    fn lemma_compound(&self, token: &str) -> String {
        let mut out = String::with_capacity(token.len());
        let mut part = String::new();
        for c in token.chars() {
            if c == '-' || c == '/' {
                out.push_str(&self.lemma_token(&part));
                out.push(c);
                part.clear();
            } else {
                part.push(c);
            }
        }
        out.push_str(&self.lemma_token(&part));
        out
    }

    fn lemma_token(&self, token: &str) -> String {
        if token.chars().any(|c| c.is_ascii_digit()) {
            return token.to_string();
        }
        let mut current = token.to_string();
        // every builtin rule shrinks the token or is an identity guard, so
        // len + 1 rounds always reach a fixed point
        for _ in 0..=token.len() {
            if let Some(lemma) = self.exceptions.get(&current) {
                return lemma.clone();
            }
            let mut next = None;
            for rule in &self.rules {
                if current.len() >= rule.min_len && current.ends_with(&rule.suffix) {
                    let stem = &current[..current.len() - rule.suffix.len()];
                    let mut rewritten = format!("{stem}{}", rule.replacement);
                    if rule.fix {
                        rewritten = repair_stem(&rewritten);
                    }
                    next = Some(rewritten);
                    break;
                }
            }
            match next {
                Some(n) if n != current => current = n,
                _ => break,
            }
        }
        current
    }
}

/// Structural repair after stripping "-ed"/"-ing": undouble the trailing
/// consonant from suffix doubling (scarr -> scar) and restore a dropped
/// final e (diagnos -> diagnose, enlarg -> enlarge).
fn repair_stem(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n < 3 {
        return stem.to_string();
    }
    let last = chars[n - 1];
    let prev = chars[n - 2];
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u');
    if last == prev && matches!(last, 'b' | 'd' | 'g' | 'k' | 'm' | 'n' | 'p' | 'r' | 't') {
        return stem[..stem.len() - last.len_utf8()].to_string();
    }
    let restore_e = match last {
        'c' | 'v' | 'u' => true,
        'g' => prev != 'n',
        's' | 'z' | 't' | 'r' | 'd' => is_vowel(prev),
        _ => false,
    };
    if restore_e {
        format!("{stem}e")
    } else {
        stem.to_string()
    }
}

/// Lemmatize with the builtin rule table.
pub fn lemmatize(phrase: &str) -> String {
    DEFAULT_LEMMATIZER.lemmatize(phrase)
}

// --- Assertion standardization ----------------------------------------------

/// AWS negation-confidence thresholds: CS < t_pos is positive, CS > t_neg is
/// negative, the closed interval in between is uncertain.
pub const CONFIDENCE_T_POS: f64 = 0.25;
pub const CONFIDENCE_T_NEG: f64 = 0.75;

/// Per-system mapping from raw assertion output to a standardized status.
#[derive(Debug, Clone)]
pub enum AssertionRule {
    Categorical(BTreeMap<String, AssertionStatus>),
    ConfidenceThreshold { t_pos: f64, t_neg: f64 },
}

/// Registry of assertion rules keyed by system.
#[derive(Debug, Clone, Default)]
pub struct AssertionMap {
    rules: BTreeMap<SystemId, AssertionRule>,
}

impl AssertionMap {
    pub fn new() -> AssertionMap {
        AssertionMap::default()
    }

    /// The builtin standardization criteria for AWS, AZ, GC, SP, and the
    /// internal rule labeler.
    pub fn builtin() -> AssertionMap {
        use AssertionStatus::*;
        let mut map = AssertionMap::new();
        map.set(
            SystemId::aws(),
            AssertionRule::ConfidenceThreshold {
                t_pos: CONFIDENCE_T_POS,
                t_neg: CONFIDENCE_T_NEG,
            },
        );
        map.set(
            SystemId::az(),
            AssertionRule::categorical([
                ("positive", Positive),
                ("negative", Negative),
                ("positivepossible", Uncertain),
                ("negativepossible", Uncertain),
                ("neutralpossible", Uncertain),
            ]),
        );
        map.set(
            SystemId::gc(),
            AssertionRule::categorical([
                ("likely", Positive),
                ("unlikely", Negative),
                ("somewhat_likely", Uncertain),
                ("somewhat_unlikely", Uncertain),
                ("uncertain", Uncertain),
                ("conditional", Uncertain),
            ]),
        );
        map.set(
            SystemId::sp(),
            AssertionRule::categorical([
                ("present", Positive),
                ("none", Positive),
                ("past", Positive),
                ("absent", Negative),
                ("family", Negative),
                ("someone else", Negative),
                ("planned", Negative),
                ("hypothetical", Uncertain),
                ("possible", Uncertain),
            ]),
        );
        map.set(
            SystemId::rulelab(),
            AssertionRule::categorical([
                ("positive", Positive),
                ("negative", Negative),
                ("uncertain", Uncertain),
            ]),
        );
        map
    }

    pub fn set(&mut self, system: SystemId, rule: AssertionRule) {
        self.rules.insert(system, rule);
    }

    /// Map one raw assertion to its standardized status.
    ///
    /// Categorical lookup is exact and case-sensitive; these are
    /// machine-emitted enum values. Confidence scores must lie in [0,1].
    pub fn standardize(
        &self,
        system: &SystemId,
        raw: &RawAssertion,
    ) -> Result<AssertionStatus, NormalizeError> {
        let rule = self
            .rules
            .get(system)
            .ok_or_else(|| NormalizeError::UnknownSystem(system.clone()))?;
        match (rule, raw) {
            (AssertionRule::Categorical(table), RawAssertion::Categorical(value)) => table
                .get(value)
                .copied()
                .ok_or_else(|| NormalizeError::UnmappedAssertion {
                    system: system.clone(),
                    raw: value.clone(),
                }),
            (AssertionRule::ConfidenceThreshold { t_pos, t_neg }, RawAssertion::Confidence(cs)) => {
                if !(0.0..=1.0).contains(cs) {
                    return Err(NormalizeError::ConfidenceRange(*cs));
                }
                Ok(if *cs < *t_pos {
                    AssertionStatus::Positive
                } else if *cs > *t_neg {
                    AssertionStatus::Negative
                } else {
                    AssertionStatus::Uncertain
                })
            }
            (AssertionRule::Categorical(_), RawAssertion::Confidence(_)) => {
                Err(NormalizeError::ModeMismatch {
                    system: system.clone(),
                    got: "a confidence score",
                })
            }
            (AssertionRule::ConfidenceThreshold { .. }, RawAssertion::Categorical(_)) => {
                Err(NormalizeError::ModeMismatch {
                    system: system.clone(),
                    got: "a categorical value",
                })
            }
        }
    }
}

impl AssertionRule {
    fn categorical<const N: usize>(entries: [(&str, AssertionStatus); N]) -> AssertionRule {
        AssertionRule::Categorical(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

/// Convenience wrapper over [`AssertionMap::standardize`].
pub fn standardize_assertion(
    map: &AssertionMap,
    system: &SystemId,
    raw: &RawAssertion,
) -> Result<AssertionStatus, NormalizeError> {
    map.standardize(system, raw)
}

/// A mention that failed normalization, by index into the input slice.
#[derive(Debug)]
pub struct MentionError {
    pub index: usize,
    pub error: NormalizeError,
}

/// Fill `normalized_text` and `assertion` on every mention in place.
///
/// Mentions whose raw assertion cannot be mapped keep `assertion = None` and
/// are reported; the rest of the stream is unaffected.
pub fn normalize_mentions(
    mentions: &mut [EntityMention],
    lemmatizer: &Lemmatizer,
    map: &AssertionMap,
) -> Vec<MentionError> {
    let mut errors = Vec::new();
    for (index, mention) in mentions.iter_mut().enumerate() {
        mention.normalized_text = lemmatizer.lemmatize(&mention.surface_text);
        match map.standardize(&mention.system, &mention.raw_assertion) {
            Ok(status) => mention.assertion = Some(status),
            Err(error) => errors.push(MentionError { index, error }),
        }
    }
    errors
}

// --- Entity descriptives ----------------------------------------------------

/// Counts for one system within one section (or overall).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionDescriptives {
    pub total: u64,
    /// Mean mentions per report; reports with no mentions count as zero.
    pub mean_per_report: f64,
    /// Population standard deviation of the per-report counts.
    pub std_dev: f64,
    /// Distinct normalized entity texts.
    pub unique: u64,
}

/// Per-system, per-section entity statistics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EntityDescriptives {
    pub n_reports: usize,
    /// system -> overall stats across all sections.
    pub overall: BTreeMap<SystemId, SectionDescriptives>,
    /// system -> section id ("unknown" for unsectioned mentions) -> stats.
    pub by_section: BTreeMap<SystemId, BTreeMap<String, SectionDescriptives>>,
}

fn population_sd(counts: &[u64], mean: f64) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let var = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / counts.len() as f64;
    var.sqrt()
}

fn summarize(
    per_report: &BTreeMap<&str, u64>,
    exams: &[&str],
    texts: &BTreeSet<&str>,
) -> SectionDescriptives {
    let counts: Vec<u64> = exams
        .iter()
        .map(|e| per_report.get(e).copied().unwrap_or(0))
        .collect();
    let total: u64 = counts.iter().sum();
    let mean = if counts.is_empty() {
        0.0
    } else {
        total as f64 / counts.len() as f64
    };
    SectionDescriptives {
        total,
        mean_per_report: mean,
        std_dev: population_sd(&counts, mean),
        unique: texts.len() as u64,
    }
}

/// Compute entity descriptives for every system present in `mentions`.
///
/// Every mention's exam must exist in the corpus; the per-report denominators
/// come from the corpus, so systems that skipped reports average in zeros.
pub fn entity_descriptives(
    mentions: &[EntityMention],
    corpus: &[Report],
) -> Result<EntityDescriptives, NormalizeError> {
    let exam_ids: BTreeSet<&str> = corpus.iter().map(|r| r.exam_id.as_str()).collect();
    let mut orphans: BTreeSet<String> = BTreeSet::new();
    for m in mentions {
        if !exam_ids.contains(m.exam_id.as_str()) {
            orphans.insert(m.exam_id.clone());
        }
    }
    if !orphans.is_empty() {
        return Err(NormalizeError::OrphanExams(orphans.into_iter().collect()));
    }

    let exams: Vec<&str> = corpus.iter().map(|r| r.exam_id.as_str()).collect();
    let mut out = EntityDescriptives {
        n_reports: corpus.len(),
        ..EntityDescriptives::default()
    };

    let systems: BTreeSet<&SystemId> = mentions.iter().map(|m| &m.system).collect();
    for system in systems {
        let mine: Vec<&EntityMention> = mentions.iter().filter(|m| &m.system == system).collect();
        let mut overall_counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut overall_texts: BTreeSet<&str> = BTreeSet::new();
        let mut sections: BTreeMap<String, (BTreeMap<&str, u64>, BTreeSet<&str>)> =
            BTreeMap::new();
        for m in &mine {
            *overall_counts.entry(m.exam_id.as_str()).or_insert(0) += 1;
            overall_texts.insert(m.normalized_text.as_str());
            let section = m
                .section
                .map(|s| s.as_str().to_string())
                .unwrap_or_else(|| "unknown".to_string());
            let entry = sections.entry(section).or_default();
            *entry.0.entry(m.exam_id.as_str()).or_insert(0) += 1;
            entry.1.insert(m.normalized_text.as_str());
        }
        out.overall.insert(
            system.clone(),
            summarize(&overall_counts, &exams, &overall_texts),
        );
        let by_section = sections
            .into_iter()
            .map(|(name, (counts, texts))| (name, summarize(&counts, &exams, &texts)))
            .collect();
        out.by_section.insert(system.clone(), by_section);
    }
    Ok(out)
}

/// Per-report mention counts for one system, in corpus order. Scope limits
/// counting to one section; `None` counts every section.
pub fn per_report_counts(
    mentions: &[EntityMention],
    corpus: &[Report],
    system: &SystemId,
    scope: Option<SectionKind>,
) -> Vec<f64> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for m in mentions {
        if &m.system != system {
            continue;
        }
        if let Some(kind) = scope {
            if m.section != Some(kind) {
                continue;
            }
        }
        *counts.entry(m.exam_id.as_str()).or_insert(0) += 1;
    }
    corpus
        .iter()
        .map(|r| counts.get(r.exam_id.as_str()).copied().unwrap_or(0) as f64)
        .collect()
}
