//! Hand-checked radiology vocabulary oracle for the lemmatizer: fifty-plus
//! surface/lemma pairs fixed before the rule table was tuned. Every pair must
//! hold exactly, and every lemma must be a fixed point.

use cxrlabel::normalize::lemmatize;

const ORACLE: &[(&str, &str)] = &[
    ("opacities", "opacity"),
    ("opacity", "opacity"),
    ("effusions", "effusion"),
    ("atelectasis", "atelectasis"),
    ("pneumonias", "pneumonia"),
    ("infiltrates", "infiltrate"),
    ("consolidations", "consolidation"),
    ("nodules", "nodule"),
    ("masses", "mass"),
    ("mass", "mass"),
    ("lungs", "lung"),
    ("findings", "finding"),
    ("finding", "finding"),
    ("fractures", "fracture"),
    ("pneumothoraces", "pneumothorax"),
    ("pneumothorax", "pneumothorax"),
    ("densities", "density"),
    ("lucencies", "lucency"),
    ("granulomas", "granuloma"),
    ("diagnosed", "diagnose"),
    ("diagnoses", "diagnose"),
    ("diagnosing", "diagnose"),
    ("enlarged", "enlarge"),
    ("improved", "improve"),
    ("improving", "improve"),
    ("worsened", "worsen"),
    ("worsening", "worsen"),
    ("increased", "increase"),
    ("decreased", "decrease"),
    ("resolved", "resolve"),
    ("resolving", "resolve"),
    ("demonstrated", "demonstrate"),
    ("demonstrates", "demonstrate"),
    ("collapsed", "collapse"),
    ("thickened", "thicken"),
    ("thickening", "thicken"),
    ("scarring", "scar"),
    ("scarred", "scar"),
    ("noted", "note"),
    ("notes", "note"),
    ("obscured", "obscure"),
    ("compared", "compare"),
    ("unchanged", "unchanged"),
    ("changed", "change"),
    ("excluded", "exclude"),
    ("suspected", "suspect"),
    ("elevated", "elevate"),
    ("aerated", "aerate"),
    ("apices", "apex"),
    ("bases", "base"),
    ("ribs", "rib"),
    ("studies", "study"),
];

#[test]
fn hand_checked_radiology_vocabulary() {
    let mut failures = Vec::new();
    for &(surface, expected) in ORACLE {
        let got = lemmatize(surface);
        if got != expected {
            failures.push(format!("{surface:?} -> {got:?}, expected {expected:?}"));
        }
    }
    assert!(failures.is_empty(), "lemma mismatches:\n{}", failures.join("\n"));
}

#[test]
fn oracle_lemmas_are_fixed_points() {
    for &(_, lemma) in ORACLE {
        assert_eq!(lemmatize(lemma), lemma);
    }
}
