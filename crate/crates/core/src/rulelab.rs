//! Self-contained rule-based report labeler.
//!
//! Detects disease-category mentions in impression text with the compiled
//! ruleset, then classifies each mention from negation and uncertainty cue
//! phrases in a token window around it (NegEx-style: six tokens before, three
//! after, bounded by sentence punctuation and the conjunctions "but" /
//! "however"). Uncertainty outranks negation when both fire, and a stability
//! marker directly before the mention ("stable cardiomegaly") asserts the
//! finding as present.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use once_cell::sync::Lazy;
use thiserror::Error;

use crate::chexmap::{combine_labels, CategoryMention, RuleSet};
use crate::normalize::AssertionStatus;

/// Default pre-mention window in word tokens.
pub const DEFAULT_PRE_WINDOW: usize = 6;
/// Default post-mention window in word tokens.
pub const DEFAULT_POST_WINDOW: usize = 3;

/// Markers that assert an unchanged-but-present finding.
const STABLE_MARKERS: &[&str] = &["stable", "unchanged", "persistent"];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cue {0:?} appears in more than one section")]
    Overlap(String),
    #[error("scope window must be at least 1")]
    Window,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Negation and uncertainty cue phrases plus the scope windows.
#[derive(Debug, Clone)]
pub struct CueLexicon {
    pre_negation: Vec<Vec<String>>,
    post_negation: Vec<Vec<String>>,
    uncertainty: Vec<Vec<String>>,
    pub pre_window: usize,
    pub post_window: usize,
}

const DEFAULT_LEXICON: &str = include_str!("../assets/cue_lexicon.txt");

static BUILTIN_LEXICON: Lazy<CueLexicon> =
    Lazy::new(|| CueLexicon::from_str(DEFAULT_LEXICON).expect("builtin lexicon"));

impl Default for CueLexicon {
    fn default() -> Self {
        BUILTIN_LEXICON.clone()
    }
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    phrase
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

impl CueLexicon {
    /// Parse the sectioned plain-text format (`[pre_negation]`,
    /// `[post_negation]`, `[uncertainty]`, one cue phrase per line).
    pub fn from_str(text: &str) -> Result<CueLexicon, LexiconError> {
        let mut lexicon = CueLexicon {
            pre_negation: Vec::new(),
            post_negation: Vec::new(),
            uncertainty: Vec::new(),
            pre_window: DEFAULT_PRE_WINDOW,
            post_window: DEFAULT_POST_WINDOW,
        };
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name {
                    "pre_negation" => "pre",
                    "post_negation" => "post",
                    "uncertainty" => "unc",
                    other => {
                        return Err(LexiconError::Parse {
                            line: i + 1,
                            message: format!("unknown section {other:?}"),
                        })
                    }
                });
                continue;
            }
            let tokens = phrase_tokens(line);
            match section {
                Some("pre") => lexicon.pre_negation.push(tokens),
                Some("post") => lexicon.post_negation.push(tokens),
                Some("unc") => lexicon.uncertainty.push(tokens),
                _ => {
                    return Err(LexiconError::Parse {
                        line: i + 1,
                        message: "cue before any section header".into(),
                    })
                }
            }
        }
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn from_file(path: &Path) -> Result<CueLexicon, LexiconError> {
        CueLexicon::from_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), LexiconError> {
        if self.pre_window == 0 || self.post_window == 0 {
            return Err(LexiconError::Window);
        }
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for list in [&self.pre_negation, &self.post_negation, &self.uncertainty] {
            let mut local: BTreeSet<String> = BTreeSet::new();
            for phrase in list {
                local.insert(phrase.join(" "));
            }
            for phrase in local {
                if !seen.insert(phrase.clone()) {
                    return Err(LexiconError::Overlap(phrase));
                }
            }
        }
        Ok(())
    }
}

// --- Tokenization -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokenKind {
    Word,
    /// Sentence punctuation: '.', ';', '!', '?'.
    Boundary,
}

#[derive(Debug, Clone)]
struct Token {
    lower: String,
    start: usize,
    end: usize,
    kind: TokenKind,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}' || c == '-'
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some((start, c)) = iter.next() {
        if is_word_char(c) {
            let mut end = start + c.len_utf8();
            while let Some(&(i, n)) = iter.peek() {
                if is_word_char(n) {
                    end = i + n.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            tokens.push(Token {
                lower: text[start..end].to_lowercase(),
                start,
                end,
                kind: TokenKind::Word,
            });
        } else if matches!(c, '.' | ';' | '!' | '?') {
            tokens.push(Token {
                lower: c.to_string(),
                start,
                end: start + c.len_utf8(),
                kind: TokenKind::Boundary,
            });
        }
    }
    tokens
}

/// Conjunctions that reset cue scope.
fn is_reset_word(token: &Token) -> bool {
    token.kind == TokenKind::Word && matches!(token.lower.as_str(), "but" | "however")
}

fn window_before(tokens: &[Token], first: usize, size: usize) -> Vec<&Token> {
    let mut out = Vec::new();
    let mut i = first;
    while i > 0 && out.len() < size {
        i -= 1;
        let t = &tokens[i];
        if t.kind == TokenKind::Boundary || is_reset_word(t) {
            break;
        }
        out.push(t);
    }
    out.reverse();
    out
}

fn window_after(tokens: &[Token], last: usize, size: usize) -> Vec<&Token> {
    let mut out = Vec::new();
    for t in tokens.iter().skip(last + 1) {
        if t.kind == TokenKind::Boundary || is_reset_word(t) {
            break;
        }
        out.push(t);
        if out.len() == size {
            break;
        }
    }
    out
}

fn contains_phrase(window: &[&Token], phrase: &[String]) -> bool {
    if phrase.is_empty() || window.len() < phrase.len() {
        return false;
    }
    window
        .windows(phrase.len())
        .any(|w| w.iter().zip(phrase).all(|(t, p)| t.lower == *p))
}

fn any_cue(window: &[&Token], cues: &[Vec<String>]) -> bool {
    cues.iter().any(|phrase| contains_phrase(window, phrase))
}

// --- Classification -------------------------------------------------------------

/// Locate every disease-category mention in impression text.
pub fn detect_mentions(matcher: &RuleSet, impression_text: &str) -> Vec<CategoryMention> {
    matcher.detect_mentions(impression_text)
}

/// Classify the assertion status of a mention at `span` within `text`.
///
/// An uncertainty cue anywhere in the window wins; otherwise a stability
/// marker directly before the mention asserts presence; otherwise negation
/// cues apply; otherwise the mention is positive.
pub fn classify_assertion(
    lexicon: &CueLexicon,
    text: &str,
    span: &Range<usize>,
) -> AssertionStatus {
    let tokens = tokenize(text);
    let first = tokens
        .iter()
        .position(|t| t.kind == TokenKind::Word && t.end > span.start);
    let last = tokens
        .iter()
        .rposition(|t| t.kind == TokenKind::Word && t.start < span.end);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) if f <= l => (f, l),
        _ => return AssertionStatus::Positive,
    };

    let pre = window_before(&tokens, first, lexicon.pre_window);
    let post = window_after(&tokens, last, lexicon.post_window);

    if any_cue(&pre, &lexicon.uncertainty) || any_cue(&post, &lexicon.uncertainty) {
        return AssertionStatus::Uncertain;
    }
    let stable_nearby = pre
        .iter()
        .rev()
        .take(2)
        .any(|t| STABLE_MARKERS.contains(&t.lower.as_str()));
    if stable_nearby {
        return AssertionStatus::Positive;
    }
    if any_cue(&pre, &lexicon.pre_negation) || any_cue(&post, &lexicon.post_negation) {
        return AssertionStatus::Negative;
    }
    AssertionStatus::Positive
}

/// Full labeling of one impression: detect, classify, and reduce to the
/// 13-category status vector.
pub fn label(
    matcher: &RuleSet,
    lexicon: &CueLexicon,
    impression_text: &str,
) -> [AssertionStatus; 13] {
    let evidence = detect_mentions(matcher, impression_text)
        .into_iter()
        .map(|m| {
            let status = classify_assertion(lexicon, impression_text, &m.span);
            (m.category, status)
        });
    combine_labels(evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chexmap::{builtin_rules, DiseaseCategory};

    fn lex() -> CueLexicon {
        CueLexicon::default()
    }

    #[test]
    fn detects_single_mention() {
        let rules = builtin_rules();
        let mentions = detect_mentions(&rules, "No appreciable pneumothorax on the left.");
        let spans: Vec<_> = mentions
            .iter()
            .filter(|m| m.category == DiseaseCategory::Pneumothorax)
            .collect();
        assert_eq!(spans.len(), 1);
        assert_eq!(
            &"No appreciable pneumothorax on the left."[spans[0].span.clone()],
            "pneumothorax"
        );
    }

    #[test]
    fn detects_multiple_categories() {
        let rules = builtin_rules();
        let text = "stable cardiomegaly and fracture of one of the pacemaker leads";
        let cats: BTreeSet<_> = detect_mentions(&rules, text)
            .into_iter()
            .map(|m| m.category)
            .collect();
        assert!(cats.contains(&DiseaseCategory::Cardiomegaly));
        assert!(cats.contains(&DiseaseCategory::Fracture));
    }

    #[test]
    fn normal_text_has_no_mentions() {
        assert!(detect_mentions(&builtin_rules(), "Normal.").is_empty());
    }

    fn classify(text: &str, needle: &str) -> AssertionStatus {
        let start = text.find(needle).expect("needle present");
        classify_assertion(&lex(), text, &(start..start + needle.len()))
    }

    #[test]
    fn without_is_negative() {
        assert_eq!(
            classify("without focal pneumonia", "pneumonia"),
            AssertionStatus::Negative
        );
    }

    #[test]
    fn may_represent_is_uncertain() {
        assert_eq!(
            classify("may represent developing consolidation", "consolidation"),
            AssertionStatus::Uncertain
        );
    }

    #[test]
    fn stable_finding_is_positive() {
        assert_eq!(
            classify("stable cardiomegaly", "cardiomegaly"),
            AssertionStatus::Positive
        );
        // the stability marker shields the mention from a distant negation
        assert_eq!(
            classify(
                "No acute cardiopulmonary abnormality with stable cardiomegaly",
                "cardiomegaly"
            ),
            AssertionStatus::Positive
        );
    }

    #[test]
    fn uncertainty_outranks_negation() {
        assert_eq!(
            classify("cannot exclude pneumonia", "pneumonia"),
            AssertionStatus::Uncertain
        );
    }

    #[test]
    fn sentence_boundary_blocks_cues() {
        assert_eq!(
            classify("No effusion. There is pneumonia.", "pneumonia"),
            AssertionStatus::Positive
        );
    }

    #[test]
    fn conjunction_resets_scope() {
        assert_eq!(
            classify("no evidence of effusion but pneumonia is present", "pneumonia"),
            AssertionStatus::Positive
        );
    }

    #[test]
    fn post_negation_cue() {
        assert_eq!(
            classify("pneumothorax is not seen", "pneumothorax"),
            AssertionStatus::Negative
        );
    }

    #[test]
    fn classification_is_window_local() {
        let base = "No appreciable pneumothorax on the left.";
        let padded = format!("Lines and tubes are in place. {base} Bones are intact.");
        assert_eq!(
            classify(base, "pneumothorax"),
            classify(&padded, "pneumothorax")
        );
    }

    #[test]
    fn label_negated_pneumothorax() {
        let rules = builtin_rules();
        let labels = label(
            &rules,
            &lex(),
            "1. Pectus bars in place. 2. No appreciable pneumothorax on the left.",
        );
        assert_eq!(
            labels[DiseaseCategory::Pneumothorax.index()],
            AssertionStatus::Negative
        );
    }

    #[test]
    fn label_hedged_opacity_and_pneumonia() {
        let rules = builtin_rules();
        let labels = label(
            &rules,
            &lex(),
            "Poorly defined left lower lobe opacity concerning for developing pneumonia.",
        );
        assert_eq!(
            labels[DiseaseCategory::Pneumonia.index()],
            AssertionStatus::Uncertain
        );
        // the hedge sits within the opacity mention's post window too
        assert!(matches!(
            labels[DiseaseCategory::LungOpacity.index()],
            AssertionStatus::Positive | AssertionStatus::Uncertain
        ));
    }

    #[test]
    fn label_empty_text() {
        let rules = builtin_rules();
        let labels = label(&rules, &lex(), "");
        for d in DiseaseCategory::DISEASES {
            assert_eq!(labels[d.index()], AssertionStatus::Absent);
        }
        assert_eq!(
            labels[DiseaseCategory::NoFindings.index()],
            AssertionStatus::Positive
        );
    }

    #[test]
    fn label_is_deterministic() {
        let rules = builtin_rules();
        let text = "Right suprahilar opacity may represent developing consolidation.";
        assert_eq!(label(&rules, &lex(), text), label(&rules, &lex(), text));
    }

    #[test]
    fn overlapping_cue_sections_rejected() {
        let bad = "[pre_negation]\nno\n[uncertainty]\nno\n";
        assert!(matches!(
            CueLexicon::from_str(bad),
            Err(LexiconError::Overlap(_))
        ));
    }

    #[test]
    fn reproduces_synthetic_ground_truth() {
        let rules = builtin_rules();
        let lexicon = lex();
        let corpus =
            crate::corpus::generate_synthetic(11, 200, &crate::corpus::SynthProfile::default())
                .unwrap();
        let mut cells = 0usize;
        let mut matches = 0usize;
        for report in &corpus.reports {
            let body = report
                .section_body(crate::corpus::SectionKind::Impression)
                .unwrap_or("");
            let labels = label(&rules, &lexicon, body);
            let truth = &corpus.truth[&report.exam_id];
            for i in 0..13 {
                cells += 1;
                if labels[i] == truth[i] {
                    matches += 1;
                }
            }
        }
        let agreement = matches as f64 / cells as f64;
        assert!(
            agreement >= 0.99,
            "agreement {agreement} over {cells} cells"
        );
    }
}
