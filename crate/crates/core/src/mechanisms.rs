//! The three competition mechanisms: standard (scored against realized
//! outcomes), oracular (scored against ground truth), and WOMAC (scored
//! against jackknifed meta-learner reference solutions).
//!
//! WOMAC builds a per-expert per-task reference `t_ij` by fitting the
//! meta-learner on every task except `i` and every expert except `j`, then
//! applying it to the peers' reports on task `i`. Expert `j`'s reference
//! column therefore never depends on expert `j`'s own reports.
//!
//! The `(i, j)` cell grid is embarrassingly parallel; each cell writes its
//! own slot and every reduction runs in fixed task order, so results are
//! independent of the parallel schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ridge_normal_solve;
use crate::meta::{jackknife_sse_matrix, strict_count_selected, strict_ranks};
use crate::scoring::{
    score_all, CompetitionResult, MechanismTag, OutcomeVector, PredictionMatrix, ReferenceMatrix,
};

/// Ground-truth values, one per task.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVector {
    values: Vec<f64>,
}

impl OracleVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "oracle vector contains non-finite entry {bad}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which model produces the per-cell reference solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaLearner {
    /// Simple average of the peers whose strict-rank fraction (by error
    /// against outcomes on the other tasks) is below `k`.
    TopKAverage { k: f64 },
    /// Marginal screening down to `screen_size` peer columns, then
    /// ridge-regularized least squares with an intercept.
    LeastSquares { screen_size: usize, ridge: f64 },
}

/// How cells with no usable report would be handled. Matrices are validated
/// dense, so `Error` is the only policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WomacConfig {
    pub meta_learner: MetaLearner,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

impl WomacConfig {
    pub fn top_k_average(k: f64) -> Self {
        Self {
            meta_learner: MetaLearner::TopKAverage { k },
            missing_policy: MissingPolicy::Error,
        }
    }

    pub fn least_squares(screen_size: usize, ridge: f64) -> Self {
        Self {
            meta_learner: MetaLearner::LeastSquares { screen_size, ridge },
            missing_policy: MissingPolicy::Error,
        }
    }

    pub fn mechanism_tag(&self) -> MechanismTag {
        match self.meta_learner {
            MetaLearner::TopKAverage { .. } => MechanismTag::WomacTopK,
            MetaLearner::LeastSquares { .. } => MechanismTag::WomacLsq,
        }
    }

    fn validate(&self, num_experts: usize) -> Result<()> {
        match self.meta_learner {
            MetaLearner::TopKAverage { k } => {
                if !k.is_finite() || k <= 0.0 || k > 1.0 {
                    return Err(Error::validation(format!("k must be in (0, 1], got {k}")));
                }
                if num_experts < 3 {
                    return Err(Error::validation(
                        "top-k averaging needs at least 3 experts",
                    ));
                }
            }
            MetaLearner::LeastSquares { screen_size, ridge } => {
                if screen_size < 1 || screen_size > num_experts - 1 {
                    return Err(Error::validation(format!(
                        "screen_size must be in [1, {}], got {screen_size}",
                        num_experts - 1
                    )));
                }
                if !ridge.is_finite() || ridge < 0.0 {
                    return Err(Error::validation(format!(
                        "ridge must be nonnegative, got {ridge}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scores every expert against the realized outcomes.
pub fn run_standard(w: &PredictionMatrix, y: &OutcomeVector) -> Result<CompetitionResult> {
    if w.num_tasks() != y.len() {
        return Err(Error::dimension(format!(
            "matrix has {} tasks but outcome vector has {}",
            w.num_tasks(),
            y.len()
        )));
    }
    let t = ReferenceMatrix::shared(y.values(), w.num_experts())?;
    score_all(w, &t, MechanismTag::Standard)
}

/// Scores every expert against the ground truth directly.
pub fn run_oracular(w: &PredictionMatrix, theta: &OracleVector) -> Result<CompetitionResult> {
    if w.num_tasks() != theta.len() {
        return Err(Error::dimension(format!(
            "matrix has {} tasks but oracle vector has {}",
            w.num_tasks(),
            theta.len()
        )));
    }
    let t = ReferenceMatrix::shared(theta.values(), w.num_experts())?;
    score_all(w, &t, MechanismTag::Oracular)
}

/// Runs the WOMAC mechanism, returning the result and the reference matrix
/// the experts were scored against.
pub fn run_womac(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    cfg: &WomacConfig,
) -> Result<(CompetitionResult, ReferenceMatrix)> {
    if w.num_tasks() != y.len() {
        return Err(Error::dimension(format!(
            "matrix has {} tasks but outcome vector has {}",
            w.num_tasks(),
            y.len()
        )));
    }
    if w.num_tasks() < 2 {
        return Err(Error::validation(
            "WOMAC needs at least 2 tasks to jackknife over",
        ));
    }
    cfg.validate(w.num_experts())?;
    let reference = womac_reference(w, y, cfg)?;
    let result = score_all(w, &reference, cfg.mechanism_tag())?;
    Ok((result, reference))
}

/// Scores only; the winner and reference matrix are discarded.
pub fn womac_score_only(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    cfg: &WomacConfig,
) -> Result<Vec<f64>> {
    run_womac(w, y, cfg).map(|(result, _)| result.scores)
}

/// Builds the full reference matrix. Inputs are already validated; the
/// constructor still re-checks finiteness in case extreme values overflowed.
fn womac_reference(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    cfg: &WomacConfig,
) -> Result<ReferenceMatrix> {
    let m = w.num_tasks();
    let n = w.num_experts();
    let jack = jackknife_sse_matrix(w, y);
    let mut values = vec![0.0; m * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, out_row)| {
            let jack_row = &jack[i * n..(i + 1) * n];
            match cfg.meta_learner {
                MetaLearner::TopKAverage { k } => {
                    top_k_row(w, i, jack_row, k, out_row);
                }
                MetaLearner::LeastSquares { screen_size, ridge } => {
                    least_squares_row(w, y, i, jack_row, screen_size, ridge, out_row);
                }
            }
        });
    ReferenceMatrix::new(values, m, n)
}

/// Fills row `i` of the reference matrix under top-k averaging.
///
/// For the cell `(i, j)`, peer `j'` is selected when the number of experts
/// other than `j` with a strictly smaller jackknife error, as a fraction of
/// the `n - 1` peers, is below `k`. Selected peers' reports on task `i` are
/// averaged in ascending expert order.
fn top_k_row(w: &PredictionMatrix, i: usize, jack_row: &[f64], k: f64, out_row: &mut [f64]) {
    let n = jack_row.len();
    let ranks = strict_ranks(jack_row);
    let w_row = w.row(i);
    for (j, slot) in out_row.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut best_peer: Option<usize> = None;
        for jp in 0..n {
            if jp == j {
                continue;
            }
            let beats_from_j = usize::from(jack_row[j] < jack_row[jp]);
            let strictly_better = ranks[jp] - beats_from_j;
            if strict_count_selected(strictly_better, n - 1, k) {
                sum += w_row[jp];
                count += 1;
            }
            best_peer = match best_peer {
                Some(b)
                    if jack_row[b] < jack_row[jp]
                        || (jack_row[b] == jack_row[jp] && b < jp) =>
                {
                    Some(b)
                }
                _ => Some(jp),
            };
        }
        *slot = if count > 0 {
            sum / count as f64
        } else {
            // Unreachable for k > 0; the best-ranked peer stands in.
            w_row[best_peer.expect("n >= 3 guarantees a peer")]
        };
    }
}

/// Fills row `i` of the reference matrix under the least-squares learner.
///
/// For each cell, the `screen_size` peers with the smallest jackknife error
/// (ties to the lower index) form the design; the regression of outcomes on
/// those peers' reports over the other tasks, with intercept, is solved via
/// ridge-regularized normal equations and evaluated on task `i`.
fn least_squares_row(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    i: usize,
    jack_row: &[f64],
    screen_size: usize,
    ridge: f64,
    out_row: &mut [f64],
) {
    let n = jack_row.len();
    let ys = y.values();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        jack_row[a]
            .partial_cmp(&jack_row[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let dim = screen_size + 1;
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut design = vec![0.0; dim];
    for (j, slot) in out_row.iter_mut().enumerate() {
        let screened: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&jp| jp != j)
            .take(screen_size)
            .collect();
        gram.iter_mut().for_each(|v| *v = 0.0);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for (i2, &yv) in ys.iter().enumerate() {
            if i2 == i {
                continue;
            }
            design[0] = 1.0;
            for (c, &jp) in screened.iter().enumerate() {
                design[c + 1] = w.at(i2, jp);
            }
            for r in 0..dim {
                for c in 0..dim {
                    gram[r * dim + c] += design[r] * design[c];
                }
                rhs[r] += design[r] * yv;
            }
        }
        let beta = ridge_normal_solve(&gram, &rhs, dim, ridge);
        let mut pred = beta[0];
        for (c, &jp) in screened.iter().enumerate() {
            pred += beta[c + 1] * w.at(i, jp);
        }
        *slot = pred;
    }
}
