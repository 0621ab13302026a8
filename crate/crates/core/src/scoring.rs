//! Foundational data types, squared-error scoring, ranking, and winner
//! selection shared by all competition mechanisms.
//!
//! Scores are *sums* of squared errors over tasks (reporting layers may
//! divide by the task count for display). Ties are exact floating-point
//! equalities and are broken toward the lowest expert index; the full tied
//! set is kept on the result. All summations run in task-index order so
//! results are bit-reproducible.

use serde::Serialize;

use crate::error::{Error, Result};

/// Which mechanism produced a [`CompetitionResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismTag {
    Standard,
    Oracular,
    #[serde(rename = "womac-topk")]
    WomacTopK,
    WomacLsq,
}

/// Whether outcomes are 0/1 events or real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// An m-tasks by n-experts matrix of reported predictions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    values: Vec<f64>,
    num_tasks: usize,
    num_experts: usize,
    task_ids: Vec<String>,
    expert_ids: Vec<String>,
}

impl PredictionMatrix {
    /// Builds a matrix from row-major values and identifier lists.
    ///
    /// Requires at least one task, at least two experts, finite entries, and
    /// unique identifiers.
    pub fn new(
        values: Vec<f64>,
        task_ids: Vec<String>,
        expert_ids: Vec<String>,
    ) -> Result<Self> {
        let m = task_ids.len();
        let n = expert_ids.len();
        if m < 1 {
            return Err(Error::validation("prediction matrix needs at least 1 task"));
        }
        if n < 2 {
            return Err(Error::validation(
                "prediction matrix needs at least 2 experts",
            ));
        }
        if values.len() != m * n {
            return Err(Error::dimension(format!(
                "expected {} values for {}x{} matrix, got {}",
                m * n,
                m,
                n,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "prediction matrix contains non-finite entry {bad}"
            )));
        }
        ensure_unique(&task_ids, "task_id")?;
        ensure_unique(&expert_ids, "expert_id")?;
        Ok(Self {
            values,
            num_tasks: m,
            num_experts: n,
            task_ids,
            expert_ids,
        })
    }

    /// Builds a matrix from task rows, generating identifiers `t0..` / `e0..`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dimension("ragged rows in prediction matrix"));
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(
            values,
            (0..m).map(|i| format!("t{i}")).collect(),
            (0..n).map(|j| format!("e{j}")).collect(),
        )
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn expert_ids(&self) -> &[String] {
        &self.expert_ids
    }

    #[inline]
    pub fn at(&self, task: usize, expert: usize) -> f64 {
        self.values[task * self.num_experts + expert]
    }

    /// Row `task` as a slice of length `num_experts`.
    #[inline]
    pub fn row(&self, task: usize) -> &[f64] {
        let start = task * self.num_experts;
        &self.values[start..start + self.num_experts]
    }

    pub fn column(&self, expert: usize) -> Vec<f64> {
        (0..self.num_tasks).map(|i| self.at(i, expert)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// New matrix keeping only the given task rows, in the order given.
    pub fn select_tasks(&self, tasks: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(tasks.len() * self.num_experts);
        let mut ids = Vec::with_capacity(tasks.len());
        for &i in tasks {
            if i >= self.num_tasks {
                return Err(Error::validation(format!("task index {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
            ids.push(self.task_ids[i].clone());
        }
        Self::new(values, ids, self.expert_ids.clone())
    }

    /// New matrix keeping only the given expert columns, in the order given.
    pub fn select_experts(&self, experts: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.num_tasks * experts.len());
        for i in 0..self.num_tasks {
            for &j in experts {
                if j >= self.num_experts {
                    return Err(Error::validation(format!("expert index {j} out of range")));
                }
                values.push(self.at(i, j));
            }
        }
        let ids = experts
            .iter()
            .map(|&j| self.expert_ids[j].clone())
            .collect();
        Self::new(values, self.task_ids.clone(), ids)
    }

    /// Copy with expert column `expert` replaced by `column`.
    pub fn with_column(&self, expert: usize, column: &[f64]) -> Result<Self> {
        if expert >= self.num_experts {
            return Err(Error::validation(format!(
                "expert index {expert} out of range"
            )));
        }
        if column.len() != self.num_tasks {
            return Err(Error::dimension("replacement column has wrong length"));
        }
        let mut values = self.values.clone();
        for (i, &v) in column.iter().enumerate() {
            values[i * self.num_experts + expert] = v;
        }
        Self::new(values, self.task_ids.clone(), self.expert_ids.clone())
    }
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::validation(format!("duplicate {what} `{id}`")));
        }
    }
    Ok(())
}

/// Realized outcomes, one per task.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector {
    values: Vec<f64>,
    kind: OutcomeKind,
}

impl OutcomeVector {
    pub fn new(values: Vec<f64>, kind: OutcomeKind) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "outcome vector contains non-finite entry {bad}"
            )));
        }
        if kind == OutcomeKind::Binary {
            if let Some(bad) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::validation(format!(
                    "binary outcome {bad} is not 0 or 1"
                )));
            }
        }
        Ok(Self { values, kind })
    }

    pub fn binary(values: Vec<f64>) -> Result<Self> {
        Self::new(values, OutcomeKind::Binary)
    }

    pub fn continuous(values: Vec<f64>) -> Result<Self> {
        Self::new(values, OutcomeKind::Continuous)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn select(&self, tasks: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(tasks.len());
        for &i in tasks {
            if i >= self.values.len() {
                return Err(Error::validation(format!("task index {i} out of range")));
            }
            values.push(self.values[i]);
        }
        Self::new(values, self.kind)
    }
}

/// Per-expert per-task reference solutions t_ij that experts are scored
/// against. Shared-reference mechanisms carry the same column for everyone.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatrix {
    values: Vec<f64>,
    num_tasks: usize,
    num_experts: usize,
}

impl ReferenceMatrix {
    pub fn new(values: Vec<f64>, num_tasks: usize, num_experts: usize) -> Result<Self> {
        if values.len() != num_tasks * num_experts {
            return Err(Error::dimension(format!(
                "expected {} values for {}x{} reference matrix, got {}",
                num_tasks * num_experts,
                num_tasks,
                num_experts,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "reference matrix contains non-finite entry {bad}"
            )));
        }
        Ok(Self {
            values,
            num_tasks,
            num_experts,
        })
    }

    /// Reference matrix where every expert is scored against `reference`.
    pub fn shared(reference: &[f64], num_experts: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(reference.len() * num_experts);
        for &t in reference {
            for _ in 0..num_experts {
                values.push(t);
            }
        }
        Self::new(values, reference.len(), num_experts)
    }

    #[inline]
    pub fn at(&self, task: usize, expert: usize) -> f64 {
        self.values[task * self.num_experts + expert]
    }

    pub fn column(&self, expert: usize) -> Vec<f64> {
        (0..self.num_tasks).map(|i| self.at(i, expert)).collect()
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when every expert column equals column 0 bitwise.
    pub fn columns_identical(&self) -> bool {
        (0..self.num_tasks).all(|i| {
            let row = &self.values[i * self.num_experts..(i + 1) * self.num_experts];
            row.iter().all(|&v| v.to_bits() == row[0].to_bits())
        })
    }
}

/// Outcome of one competition: per-expert scores and the selected winner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetitionResult {
    /// Sum of squared errors per expert.
    pub scores: Vec<f64>,
    /// Lowest index attaining the minimal score.
    pub winner: usize,
    /// All indices tied (exact equality) at the minimal score, ascending.
    pub tied_winners: Vec<usize>,
    pub mechanism: MechanismTag,
}

/// Sum of squared differences, accumulated left to right.
///
/// Returns exactly 0 iff the vectors are equal.
pub fn sum_squared_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::dimension(format!(
            "vector lengths differ: {} vs {}",
            pred.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(reference) {
        if !p.is_finite() || !t.is_finite() {
            return Err(Error::validation("non-finite input to sum_squared_error"));
        }
        let d = p - t;
        total += d * d;
    }
    Ok(total)
}

/// Lowest index attaining the minimum, plus every index tied with it.
pub fn select_winner(scores: &[f64]) -> Result<(usize, Vec<usize>)> {
    if scores.is_empty() {
        return Err(Error::validation("cannot select a winner from empty scores"));
    }
    if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite score {bad}")));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s < best {
            best = s;
        }
    }
    let tied: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == best)
        .map(|(j, _)| j)
        .collect();
    Ok((tied[0], tied))
}

/// Scores every expert column of `w` against its reference column and picks
/// the winner.
pub fn score_all(
    w: &PredictionMatrix,
    t: &ReferenceMatrix,
    mechanism: MechanismTag,
) -> Result<CompetitionResult> {
    if w.num_tasks() != t.num_tasks() || w.num_experts() != t.num_experts() {
        return Err(Error::dimension(format!(
            "prediction matrix is {}x{} but reference matrix is {}x{}",
            w.num_tasks(),
            w.num_experts(),
            t.num_tasks(),
            t.num_experts()
        )));
    }
    let n = w.num_experts();
    let mut scores = vec![0.0; n];
    for (j, slot) in scores.iter_mut().enumerate() {
        let mut total = 0.0;
        for i in 0..w.num_tasks() {
            let d = w.at(i, j) - t.at(i, j);
            total += d * d;
        }
        *slot = total;
    }
    let (winner, tied_winners) = select_winner(&scores)?;
    Ok(CompetitionResult {
        scores,
        winner,
        tied_winners,
        mechanism,
    })
}
