//! Dataset ingestion, validation, filtering, and imputation.
//!
//! Input is long-form CSV: a predictions file with header
//! `task_id,expert_id,prediction` and an outcomes file with header
//! `task_id,outcome`. Missing predictions are absent rows. Tasks keep the
//! order of first appearance in the outcomes file; experts are ordered
//! lexicographically by id.
//!
//! Two filters produce a dense matrix: [`filter_complete`] keeps only experts
//! who answered every task, and [`filter_hfc`] drops low-response tasks, then
//! low-activity experts, then fills the remaining holes with the mean of the
//! realized outcomes over the surviving tasks. Filter order is fixed: tasks
//! first, then experts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scoring::{OutcomeKind, OutcomeVector, PredictionMatrix};

/// One prediction row as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub task_id: String,
    pub expert_id: String,
    pub prediction: f64,
}

/// Validated long-form records plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub predictions: Vec<PredictionRecord>,
    /// `(task_id, outcome)` in file order; task ids are unique.
    pub outcomes: Vec<(String, f64)>,
    pub outcome_kind: OutcomeKind,
    pub predictions_path: String,
    pub outcomes_path: String,
}

impl RawDataset {
    pub fn num_tasks(&self) -> usize {
        self.outcomes.len()
    }

    pub fn num_prediction_records(&self) -> usize {
        self.predictions.len()
    }

    pub fn num_experts(&self) -> usize {
        let mut ids: Vec<&str> = self.predictions.iter().map(|r| r.expert_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// A dense, fully-imputed dataset ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: PredictionMatrix,
    pub outcomes: OutcomeVector,
    /// Row-major m*n mask; true exactly where a cell was filled by
    /// imputation rather than reported.
    pub imputed_mask: Vec<bool>,
}

impl Dataset {
    pub fn imputed_count(&self) -> usize {
        self.imputed_mask.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Deserialize)]
struct OutcomeRow {
    task_id: String,
    outcome: f64,
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    task_id: String,
    expert_id: String,
    prediction: f64,
}

fn parse_error(path: &str, err: &csv::Error, message: String) -> Error {
    let line = err.position().map_or(0, csv::Position::line);
    Error::Parse {
        path: path.to_string(),
        line,
        message,
    }
}

/// Loads and validates the two CSVs.
///
/// Rejects duplicate outcome tasks, duplicate `(task, expert)` cells,
/// predictions for unknown tasks, non-finite values, and (for binary-outcome
/// datasets) predictions outside `[0, 1]`.
pub fn load_csv(
    predictions_path: impl AsRef<Path>,
    outcomes_path: impl AsRef<Path>,
) -> Result<RawDataset> {
    let outcomes_path = outcomes_path.as_ref();
    let predictions_path = predictions_path.as_ref();
    let out_name = outcomes_path.display().to_string();
    let pred_name = predictions_path.display().to_string();

    let mut outcomes: Vec<(String, f64)> = Vec::new();
    let mut seen_tasks: HashSet<String> = HashSet::new();
    let mut reader = csv::Reader::from_path(outcomes_path)?;
    for (row_idx, row) in reader.deserialize::<OutcomeRow>().enumerate() {
        let row = row.map_err(|e| parse_error(&out_name, &e, e.to_string()))?;
        let line = row_idx as u64 + 2; // 1-based, after the header
        if !row.outcome.is_finite() {
            return Err(Error::Parse {
                path: out_name.clone(),
                line,
                message: format!("non-finite outcome {}", row.outcome),
            });
        }
        if !seen_tasks.insert(row.task_id.clone()) {
            return Err(Error::Parse {
                path: out_name.clone(),
                line,
                message: format!("duplicate outcome for task `{}`", row.task_id),
            });
        }
        outcomes.push((row.task_id, row.outcome));
    }
    if outcomes.is_empty() {
        return Err(Error::validation(format!("{out_name}: no outcome rows")));
    }
    let outcome_kind = if outcomes.iter().all(|(_, y)| *y == 0.0 || *y == 1.0) {
        OutcomeKind::Binary
    } else {
        OutcomeKind::Continuous
    };

    let mut predictions: Vec<PredictionRecord> = Vec::new();
    let mut seen_cells: HashSet<(String, String)> = HashSet::new();
    let mut reader = csv::Reader::from_path(predictions_path)?;
    for (row_idx, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let row = row.map_err(|e| parse_error(&pred_name, &e, e.to_string()))?;
        let line = row_idx as u64 + 2;
        if !row.prediction.is_finite() {
            return Err(Error::Parse {
                path: pred_name.clone(),
                line,
                message: format!("non-finite prediction {}", row.prediction),
            });
        }
        if !seen_tasks.contains(&row.task_id) {
            return Err(Error::Parse {
                path: pred_name.clone(),
                line,
                message: format!("prediction for unknown task `{}`", row.task_id),
            });
        }
        if outcome_kind == OutcomeKind::Binary && !(0.0..=1.0).contains(&row.prediction) {
            return Err(Error::Parse {
                path: pred_name.clone(),
                line,
                message: format!(
                    "prediction {} outside [0, 1] for binary outcomes",
                    row.prediction
                ),
            });
        }
        let cell = (row.task_id.clone(), row.expert_id.clone());
        if !seen_cells.insert(cell) {
            return Err(Error::Parse {
                path: pred_name.clone(),
                line,
                message: format!(
                    "duplicate prediction for task `{}`, expert `{}`",
                    row.task_id, row.expert_id
                ),
            });
        }
        predictions.push(PredictionRecord {
            task_id: row.task_id,
            expert_id: row.expert_id,
            prediction: row.prediction,
        });
    }

    Ok(RawDataset {
        predictions,
        outcomes,
        outcome_kind,
        predictions_path: pred_name,
        outcomes_path: out_name,
    })
}

/// Writes a raw dataset back out in canonical order: outcomes in task order,
/// predictions by (task order, expert id). Binary outcomes are written as
/// `0`/`1`.
pub fn write_csv(
    raw: &RawDataset,
    predictions_path: impl AsRef<Path>,
    outcomes_path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = std::fs::File::create(outcomes_path.as_ref())?;
    writeln!(out, "task_id,outcome")?;
    for (task, y) in &raw.outcomes {
        if raw.outcome_kind == OutcomeKind::Binary {
            writeln!(out, "{},{}", task, *y as i64)?;
        } else {
            writeln!(out, "{},{}", task, y)?;
        }
    }
    let task_order: HashMap<&str, usize> = raw
        .outcomes
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.as_str(), i))
        .collect();
    let mut records: Vec<&PredictionRecord> = raw.predictions.iter().collect();
    records.sort_by(|a, b| {
        task_order[a.task_id.as_str()]
            .cmp(&task_order[b.task_id.as_str()])
            .then_with(|| a.expert_id.cmp(&b.expert_id))
    });
    let mut out = std::fs::File::create(predictions_path.as_ref())?;
    writeln!(out, "task_id,expert_id,prediction")?;
    for r in records {
        writeln!(out, "{},{},{}", r.task_id, r.expert_id, r.prediction)?;
    }
    Ok(())
}

/// Groups predictions by expert id (lexicographic key order) as
/// `(row index, value)` pairs over the given task rows.
fn group_by_expert<'a>(
    raw: &'a RawDataset,
    tasks: &'a [(String, f64)],
) -> BTreeMap<&'a str, Vec<(usize, f64)>> {
    let task_index: HashMap<&str, usize> = tasks
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.as_str(), i))
        .collect();
    let mut by_expert: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for r in &raw.predictions {
        if let Some(&row) = task_index.get(r.task_id.as_str()) {
            by_expert
                .entry(r.expert_id.as_str())
                .or_default()
                .push((row, r.prediction));
        }
    }
    by_expert
}

fn assemble(
    tasks: &[(String, f64)],
    experts: Vec<(&str, Vec<(usize, f64)>)>,
    fill: Option<f64>,
    outcome_kind: OutcomeKind,
) -> Result<Dataset> {
    let m = tasks.len();
    let n = experts.len();
    if n < 2 {
        return Err(Error::validation(format!(
            "only {n} experts survive filtering; need at least 2"
        )));
    }
    let mut values = vec![f64::NAN; m * n];
    for (j, (_, cells)) in experts.iter().enumerate() {
        for &(i, v) in cells {
            values[i * n + j] = v;
        }
    }
    let mut imputed_mask = vec![false; m * n];
    for (idx, v) in values.iter_mut().enumerate() {
        if v.is_nan() {
            match fill {
                Some(f) => {
                    *v = f;
                    imputed_mask[idx] = true;
                }
                None => {
                    return Err(Error::validation(
                        "internal: missing cell without an imputation value",
                    ))
                }
            }
        }
    }
    let matrix = PredictionMatrix::new(
        values,
        tasks.iter().map(|(t, _)| t.clone()).collect(),
        experts.iter().map(|(e, _)| e.to_string()).collect(),
    )?;
    let outcomes = OutcomeVector::new(tasks.iter().map(|(_, y)| *y).collect(), outcome_kind)?;
    Ok(Dataset {
        matrix,
        outcomes,
        imputed_mask,
    })
}

/// Keeps only experts with a prediction on every task. No imputation.
pub fn filter_complete(raw: &RawDataset) -> Result<Dataset> {
    let tasks = raw.outcomes.clone();
    let m = tasks.len();
    let experts: Vec<(&str, Vec<(usize, f64)>)> = group_by_expert(raw, &tasks)
        .into_iter()
        .filter(|(_, cells)| cells.len() == m)
        .collect();
    assemble(&tasks, experts, None, raw.outcome_kind)
}

/// Activity filter: drops tasks with fewer than `min_task_responses`
/// predictions, then experts answering less than `min_expert_completion` of
/// the remaining tasks, then fills the leftover holes with the mean of the
/// realized outcomes over the surviving tasks.
pub fn filter_hfc(
    raw: &RawDataset,
    min_task_responses: usize,
    min_expert_completion: f64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&min_expert_completion) {
        return Err(Error::validation(
            "min_expert_completion must be in [0, 1]",
        ));
    }
    let mut responses_per_task: HashMap<&str, usize> = HashMap::new();
    for r in &raw.predictions {
        *responses_per_task.entry(r.task_id.as_str()).or_default() += 1;
    }
    let tasks: Vec<(String, f64)> = raw
        .outcomes
        .iter()
        .filter(|(t, _)| responses_per_task.get(t.as_str()).copied().unwrap_or(0) >= min_task_responses)
        .cloned()
        .collect();
    if tasks.is_empty() {
        return Err(Error::validation(format!(
            "no task has {min_task_responses} responses"
        )));
    }
    let m = tasks.len();
    let experts: Vec<(&str, Vec<(usize, f64)>)> = group_by_expert(raw, &tasks)
        .into_iter()
        .filter(|(_, cells)| cells.len() as f64 / m as f64 >= min_expert_completion)
        .collect();
    let base_rate = tasks.iter().map(|(_, y)| *y).sum::<f64>() / m as f64;
    assemble(&tasks, experts, Some(base_rate), raw.outcome_kind)
}
