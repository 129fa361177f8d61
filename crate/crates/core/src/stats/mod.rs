//! The agreement and inference battery: Fleiss' kappa under two exam-set
//! conditions, chi-square tests of independence, paired t-tests with
//! Bonferroni correction, and per-system assertion accuracy against the
//! voted consensus.

pub mod special;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::adapters::SystemId;
use crate::chexmap::{DiseaseCategory, LabelMatrix};
use crate::consensus::ConsensusMatrix;
use crate::normalize::AssertionStatus;

pub use special::{chi2_sf, student_t_two_sided};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("arity: {0}")]
    Arity(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("pipeline order: {0}")]
    PipelineOrder(String),
}

/// Generic hypothesis-test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bonferroni-adjusted p, when a correction was applied.
    pub adjusted_p: Option<f64>,
    pub degenerate: bool,
}

// --- Fleiss' kappa --------------------------------------------------------------

/// Exam-set condition for per-category kappa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaCondition {
    All,
    ExcludingAbsent,
}

impl KappaCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            KappaCondition::All => "all",
            KappaCondition::ExcludingAbsent => "excluding_absent",
        }
    }
}

/// Core Fleiss' kappa outcome. `kappa` is `None` when the statistic is
/// undefined: expected agreement is exactly 1 (single used category), or no
/// items remain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FleissOutcome {
    pub kappa: Option<f64>,
    pub n_items: usize,
    pub n_raters: usize,
    pub degenerate: bool,
}

/// Fleiss' kappa over an items x categories count table.
///
/// Every item must carry the same number of ratings (raters) n >= 2. Per-item
/// agreement is sum_j n_ij (n_ij - 1) / (n (n - 1)); kappa is
/// (P_bar - Pe_bar) / (1 - Pe_bar).
pub fn fleiss_kappa(table: &[Vec<usize>]) -> Result<FleissOutcome, StatsError> {
    if table.is_empty() {
        return Err(StatsError::Arity("no items".into()));
    }
    let k = table[0].len();
    if k == 0 {
        return Err(StatsError::Arity("no categories".into()));
    }
    let n_raters: usize = table[0].iter().sum();
    if n_raters < 2 {
        return Err(StatsError::Arity(format!(
            "need at least 2 raters, got {n_raters}"
        )));
    }
    for (i, row) in table.iter().enumerate() {
        if row.len() != k {
            return Err(StatsError::Arity(format!("item {i} has {} categories, expected {k}", row.len())));
        }
        let total: usize = row.iter().sum();
        if total != n_raters {
            return Err(StatsError::Arity(format!(
                "item {i} has {total} ratings, expected {n_raters}"
            )));
        }
    }

    let n_items = table.len();
    let mut category_totals = vec![0usize; k];
    let mut agreement_num = 0usize; // sum over items of sum_j n_ij (n_ij - 1)
    for row in table {
        for (j, &count) in row.iter().enumerate() {
            category_totals[j] += count;
            agreement_num += count * (count - count.min(1));
        }
    }

    // Expected agreement is 1 exactly when one category holds every rating.
    let used = category_totals.iter().filter(|&&t| t > 0).count();
    if used <= 1 {
        return Ok(FleissOutcome {
            kappa: None,
            n_items,
            n_raters,
            degenerate: true,
        });
    }

    let p_bar =
        agreement_num as f64 / (n_items as f64 * n_raters as f64 * (n_raters as f64 - 1.0));
    let total_ratings = (n_items * n_raters) as f64;
    let pe_bar: f64 = category_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / total_ratings;
            p * p
        })
        .sum();

    let kappa = (p_bar - pe_bar) / (1.0 - pe_bar);
    Ok(FleissOutcome {
        kappa: Some(kappa),
        n_items,
        n_raters,
        degenerate: false,
    })
}

/// Per-category kappa under one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaResult {
    pub category: DiseaseCategory,
    pub condition: KappaCondition,
    pub kappa: Option<f64>,
    pub n_items: usize,
    pub n_raters: usize,
    pub degenerate: bool,
}

/// Fleiss' kappa for one disease category across the given systems.
///
/// Under `ExcludingAbsent`, exams where every system rated the category
/// absent are dropped before computing agreement.
pub fn kappa_conditioned(
    matrix: &LabelMatrix,
    systems: &[SystemId],
    category: DiseaseCategory,
    condition: KappaCondition,
) -> Result<KappaResult, StatsError> {
    if systems.len() < 2 {
        return Err(StatsError::Arity("need at least 2 systems".into()));
    }
    let mut table: Vec<Vec<usize>> = Vec::new();
    for exam in matrix.exams() {
        let mut counts = vec![0usize; 4];
        for system in systems {
            let status = matrix.get(exam, category, system);
            counts[status.index()] += 1;
        }
        if condition == KappaCondition::ExcludingAbsent
            && counts[AssertionStatus::Absent.index()] == systems.len()
        {
            continue;
        }
        table.push(counts);
    }
    if table.is_empty() {
        return Ok(KappaResult {
            category,
            condition,
            kappa: None,
            n_items: 0,
            n_raters: systems.len(),
            degenerate: false,
        });
    }
    let outcome = fleiss_kappa(&table)?;
    Ok(KappaResult {
        category,
        condition,
        kappa: outcome.kappa,
        n_items: outcome.n_items,
        n_raters: outcome.n_raters,
        degenerate: outcome.degenerate,
    })
}

// --- Chi-square independence ------------------------------------------------------

/// Chi-square result plus which zero-margin rows/columns were dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareOutcome {
    #[serde(flatten)]
    pub result: TestResult,
    pub dropped_rows: Vec<usize>,
    pub dropped_cols: Vec<usize>,
}

/// Chi-square test of independence over an R x C count table.
///
/// Rows and columns with zero margins are dropped (and reported); if fewer
/// than two of either remain the test is degenerate with p = 1.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquareOutcome, StatsError> {
    if table.is_empty() || table[0].is_empty() {
        return Err(StatsError::Arity("empty contingency table".into()));
    }
    let n_cols = table[0].len();
    if table.iter().any(|row| row.len() != n_cols) {
        return Err(StatsError::Arity("ragged contingency table".into()));
    }
    let total: u64 = table.iter().flatten().sum();
    if total == 0 {
        return Err(StatsError::DegenerateInput("all counts are zero".into()));
    }

    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..n_cols)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let dropped_rows: Vec<usize> = (0..table.len()).filter(|&i| row_sums[i] == 0).collect();
    let dropped_cols: Vec<usize> = (0..n_cols).filter(|&j| col_sums[j] == 0).collect();
    let rows: Vec<usize> = (0..table.len()).filter(|&i| row_sums[i] > 0).collect();
    let cols: Vec<usize> = (0..n_cols).filter(|&j| col_sums[j] > 0).collect();

    if rows.len() < 2 || cols.len() < 2 {
        return Ok(ChiSquareOutcome {
            result: TestResult {
                statistic: 0.0,
                dof: 0,
                p_value: 1.0,
                adjusted_p: None,
                degenerate: true,
            },
            dropped_rows,
            dropped_cols,
        });
    }

    let total_f = total as f64;
    let mut statistic = 0.0;
    for &i in &rows {
        for &j in &cols {
            let expected = row_sums[i] as f64 * col_sums[j] as f64 / total_f;
            let observed = table[i][j] as f64;
            let d = observed - expected;
            statistic += d * d / expected;
        }
    }
    let dof = (rows.len() - 1) * (cols.len() - 1);
    Ok(ChiSquareOutcome {
        result: TestResult {
            statistic,
            dof,
            p_value: chi2_sf(statistic, dof),
            adjusted_p: None,
            degenerate: false,
        },
        dropped_rows,
        dropped_cols,
    })
}

// --- Paired t-test ------------------------------------------------------------------

/// Two-sided paired t-test. Sample (n-1) standard deviation of the
/// differences; all-zero differences give p = 1 and zero-variance nonzero
/// differences give p = 0, both flagged degenerate.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Arity(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::Arity("need at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n_f = n as f64;
    let mean = diffs.iter().sum::<f64>() / n_f;
    let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
    let sd = (ss / (n_f - 1.0)).sqrt();
    let dof = n - 1;

    if sd == 0.0 {
        if mean == 0.0 {
            return Ok(TestResult {
                statistic: 0.0,
                dof,
                p_value: 1.0,
                adjusted_p: None,
                degenerate: true,
            });
        }
        return Ok(TestResult {
            statistic: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
            dof,
            p_value: 0.0,
            adjusted_p: None,
            degenerate: true,
        });
    }

    let statistic = mean / (sd / n_f.sqrt());
    Ok(TestResult {
        statistic,
        dof,
        p_value: student_t_two_sided(statistic.abs(), dof),
        adjusted_p: None,
        degenerate: false,
    })
}

/// Bonferroni correction: min(1, p * m) for each p. Requires m at least the
/// number of p-values and every p in [0, 1].
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>, StatsError> {
    if m < p_values.len() {
        return Err(StatsError::Range(format!(
            "m = {m} is smaller than the number of p-values ({})",
            p_values.len()
        )));
    }
    let mut out = Vec::with_capacity(p_values.len());
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::Range(format!("p = {p} outside [0,1]")));
        }
        out.push((p * m as f64).min(1.0));
    }
    Ok(out)
}

// --- Assertion accuracy ------------------------------------------------------------

/// Which cells count toward accuracy denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyDomain {
    /// Every exam.
    AllExams,
    /// Only exams where the consensus is not Absent for the category.
    ConsensusPresent,
}

impl AccuracyDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            AccuracyDomain::AllExams => "all_exams",
            AccuracyDomain::ConsensusPresent => "consensus_present",
        }
    }
}

/// Exact-match counts for one (system, category) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CellAccuracy {
    pub matches: usize,
    pub total: usize,
}

impl CellAccuracy {
    pub fn accuracy(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.matches as f64 / self.total as f64)
        }
    }
}

/// Per-system, per-category assertion accuracy against the consensus.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyTable {
    pub domain: AccuracyDomain,
    pub systems: Vec<SystemId>,
    pub cells: BTreeMap<SystemId, BTreeMap<DiseaseCategory, CellAccuracy>>,
}

fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

impl AccuracyTable {
    pub fn cell(&self, system: &SystemId, category: DiseaseCategory) -> Option<CellAccuracy> {
        self.cells.get(system).and_then(|m| m.get(&category)).copied()
    }

    /// Mean and population sd of one system's per-category accuracies.
    pub fn system_mean_sd(&self, system: &SystemId) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .cells
            .get(system)?
            .values()
            .filter_map(|c| c.accuracy())
            .collect();
        mean_sd(&values)
    }

    /// Mean and population sd of one category's accuracies across systems.
    pub fn category_mean_sd(&self, category: DiseaseCategory) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .systems
            .iter()
            .filter_map(|s| self.cell(s, category).and_then(|c| c.accuracy()))
            .collect();
        mean_sd(&values)
    }

    /// Mean and population sd over the per-system means.
    pub fn grand_mean_sd(&self) -> Option<(f64, f64)> {
        let values: Vec<f64> = self
            .systems
            .iter()
            .filter_map(|s| self.system_mean_sd(s).map(|(m, _)| m))
            .collect();
        mean_sd(&values)
    }
}

/// Exact-status accuracy of each system against the consensus, per category.
pub fn assertion_accuracy(
    matrix: &LabelMatrix,
    consensus: &ConsensusMatrix,
    systems: &[SystemId],
    domain: AccuracyDomain,
) -> Result<AccuracyTable, StatsError> {
    let matrix_exams: Vec<&String> = matrix.exams().collect();
    let consensus_exams: Vec<&String> = consensus.exams().collect();
    if matrix_exams != consensus_exams {
        return Err(StatsError::PipelineOrder(
            "label matrix and consensus matrix cover different exams".into(),
        ));
    }

    let mut cells: BTreeMap<SystemId, BTreeMap<DiseaseCategory, CellAccuracy>> = BTreeMap::new();
    for system in systems {
        let per_category = cells.entry(system.clone()).or_default();
        for category in DiseaseCategory::ALL {
            per_category.insert(category, CellAccuracy::default());
        }
    }
    for exam in matrix_exams {
        for category in DiseaseCategory::ALL {
            let consensus_status = consensus
                .get(exam, category)
                .expect("exam sets verified equal")
                .consensus;
            if domain == AccuracyDomain::ConsensusPresent
                && consensus_status == AssertionStatus::Absent
            {
                continue;
            }
            for system in systems {
                let cell = cells
                    .get_mut(system)
                    .unwrap()
                    .get_mut(&category)
                    .unwrap();
                cell.total += 1;
                if matrix.get(exam, category, system) == consensus_status {
                    cell.matches += 1;
                }
            }
        }
    }
    Ok(AccuracyTable {
        domain,
        systems: systems.to_vec(),
        cells,
    })
}
