//! Pseudo-ground-truth construction by voting across systems.
//!
//! The default rule is unique plurality over the four statuses; any tie among
//! top counts falls back to uncertain with the tie flag set. Strict majority
//! mode instead requires a status to win more than half the votes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::SystemId;
use crate::chexmap::{DiseaseCategory, LabelMatrix};
use crate::normalize::AssertionStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    Plurality,
    StrictMajority,
}

impl VoteMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VoteMode::Plurality => "plurality",
            VoteMode::StrictMajority => "strict",
        }
    }

    pub fn parse(s: &str) -> Option<VoteMode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plurality" => Some(VoteMode::Plurality),
            "strict" | "strict_majority" | "majority" => Some(VoteMode::StrictMajority),
            _ => None,
        }
    }
}

impl fmt::Display for VoteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("cannot vote over an empty status list")]
    Arity,
    #[error("system {0} contributed no slice to the label matrix")]
    UnknownSystem(SystemId),
}

/// Vote counts and the resulting consensus for one (exam, category) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    /// Counts indexed by [`AssertionStatus::index`].
    pub counts: [usize; 4],
    pub consensus: AssertionStatus,
    /// Set when the fallback-to-uncertain rule decided the cell.
    pub tie: bool,
}

/// Vote over one cell's statuses.
pub fn vote(statuses: &[AssertionStatus], mode: VoteMode) -> Result<VoteOutcome, ConsensusError> {
    if statuses.is_empty() {
        return Err(ConsensusError::Arity);
    }
    let mut counts = [0usize; 4];
    for s in statuses {
        counts[s.index()] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let leaders: Vec<AssertionStatus> = AssertionStatus::ALL
        .iter()
        .copied()
        .filter(|s| counts[s.index()] == top)
        .collect();

    let (consensus, tie) = match mode {
        VoteMode::Plurality => {
            if leaders.len() == 1 {
                (leaders[0], false)
            } else {
                (AssertionStatus::Uncertain, true)
            }
        }
        VoteMode::StrictMajority => {
            if leaders.len() == 1 && 2 * top > statuses.len() {
                (leaders[0], false)
            } else {
                (AssertionStatus::Uncertain, true)
            }
        }
    };
    Ok(VoteOutcome {
        counts,
        consensus,
        tie,
    })
}

/// One consensus cell with its exam and category keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConsensusResult {
    pub exam_id: String,
    pub category: DiseaseCategory,
    #[serde(flatten)]
    pub outcome: VoteOutcome,
}

/// Consensus over every (exam, category) cell of a label matrix.
#[derive(Debug, Clone)]
pub struct ConsensusMatrix {
    pub systems: Vec<SystemId>,
    pub mode: VoteMode,
    cells: BTreeMap<String, [VoteOutcome; 13]>,
}

impl ConsensusMatrix {
    pub fn get(&self, exam_id: &str, category: DiseaseCategory) -> Option<&VoteOutcome> {
        self.cells.get(exam_id).map(|row| &row[category.index()])
    }

    pub fn exams(&self) -> impl Iterator<Item = &String> {
        self.cells.keys()
    }

    pub fn n_exams(&self) -> usize {
        self.cells.len()
    }

    /// Consensus statuses as a plain 13-vector per exam.
    pub fn status_row(&self, exam_id: &str) -> Option<[AssertionStatus; 13]> {
        self.cells.get(exam_id).map(|row| {
            let mut out = [AssertionStatus::Absent; 13];
            for (i, cell) in row.iter().enumerate() {
                out[i] = cell.consensus;
            }
            out
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = ConsensusResult> + '_ {
        self.cells.iter().flat_map(|(exam, row)| {
            DiseaseCategory::ALL.iter().map(move |&category| ConsensusResult {
                exam_id: exam.clone(),
                category,
                outcome: row[category.index()],
            })
        })
    }
}

/// Build the pseudo-ground-truth by voting across `systems` for every exam
/// in the matrix. Systems missing a particular exam vote Absent.
pub fn build_pseudo_ground_truth(
    matrix: &LabelMatrix,
    systems: &[SystemId],
    mode: VoteMode,
) -> Result<ConsensusMatrix, ConsensusError> {
    if systems.is_empty() {
        return Err(ConsensusError::Arity);
    }
    let present = matrix.systems();
    for s in systems {
        if !present.contains(s) {
            return Err(ConsensusError::UnknownSystem(s.clone()));
        }
    }
    let mut cells = BTreeMap::new();
    for exam in matrix.exams() {
        let rows: Vec<[AssertionStatus; 13]> =
            systems.iter().map(|s| matrix.row(exam, s)).collect();
        let mut out = [VoteOutcome {
            counts: [0; 4],
            consensus: AssertionStatus::Absent,
            tie: false,
        }; 13];
        for category in DiseaseCategory::ALL {
            let statuses: Vec<AssertionStatus> =
                rows.iter().map(|r| r[category.index()]).collect();
            out[category.index()] = vote(&statuses, mode)?;
        }
        cells.insert(exam.clone(), out);
    }
    Ok(ConsensusMatrix {
        systems: systems.to_vec(),
        mode,
        cells,
    })
}

/// Export: `exam_id,category,consensus,tie,pos,neg,unc,abs`.
pub fn write_consensus_csv<W: Write>(
    w: W,
    matrix: &ConsensusMatrix,
) -> Result<(), std::io::Error> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["exam_id", "category", "consensus", "tie", "pos", "neg", "unc", "abs"])?;
    for cell in matrix.iter() {
        writer.write_record([
            cell.exam_id.as_str(),
            cell.category.as_str(),
            cell.outcome.consensus.as_str(),
            if cell.outcome.tie { "true" } else { "false" },
            &cell.outcome.counts[AssertionStatus::Positive.index()].to_string(),
            &cell.outcome.counts[AssertionStatus::Negative.index()].to_string(),
            &cell.outcome.counts[AssertionStatus::Uncertain.index()].to_string(),
            &cell.outcome.counts[AssertionStatus::Absent.index()].to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
