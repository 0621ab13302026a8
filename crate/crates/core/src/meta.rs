//! Meta-learner weight computation and in-sample tuning of the top-k
//! fraction.
//!
//! A peer is *selected* for the top-k set when the fraction of rivals with a
//! strictly smaller error is below `k`; selected peers share uniform weight.
//! The strict-count rule means tied peers are selected or rejected together,
//! and the single best peer is always selected (its strict count is zero),
//! so the selected set is never empty for any `k > 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::{OutcomeVector, PredictionMatrix};

/// Grid used when tuning `k` in-sample; averaging roughly the top 5% tends
/// to minimize error against outcomes, so the grid is dense near there.
pub const DEFAULT_K_GRID: [f64; 8] = [0.01, 0.02, 0.05, 0.10, 0.20, 0.30, 0.50, 1.00];

/// Uniform weights over the peers selected for one jackknife cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightAssignment {
    /// Selected peers as original expert indices, ascending.
    pub selected_peers: Vec<usize>,
    /// `1 / selected_peers.len()`.
    pub weight_per_peer: f64,
    /// The expert the weights are computed for; never selected.
    pub excluded_expert: usize,
}

/// Objective curve and winner of an in-sample sweep over `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KTuneReport {
    pub k_grid: Vec<f64>,
    /// Leave-one-task-out aggregate sum of squared errors against outcomes,
    /// one per grid entry.
    pub objective: Vec<f64>,
    /// Grid value with the minimal objective; ties go to the smallest `k`.
    pub best_k: f64,
}

/// The selection predicate, written exactly as the weight rule states it:
/// the fraction of strictly-better rivals must be below `k`.
#[inline]
pub(crate) fn strict_count_selected(strictly_better: usize, rivals: usize, k: f64) -> bool {
    (strictly_better as f64) / (rivals as f64) < k
}

/// Top-k selection with uniform weights.
///
/// `peer_mses[p]` is peer `p`'s error against outcomes, in peer order (the
/// excluded expert's own column removed). Returned indices are original
/// expert indices: peer `p` maps to expert `p` when `p < excluded`, else
/// `p + 1`.
pub fn topk_weights(peer_mses: &[f64], k: f64, excluded: usize) -> Result<WeightAssignment> {
    if peer_mses.is_empty() {
        return Err(Error::validation("topk_weights requires at least one peer"));
    }
    if !k.is_finite() || k <= 0.0 || k > 1.0 {
        return Err(Error::validation(format!("k must be in (0, 1], got {k}")));
    }
    if let Some(bad) = peer_mses.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite peer MSE {bad}")));
    }
    let rivals = peer_mses.len();
    let mut selected: Vec<usize> = Vec::new();
    for (p, &mse) in peer_mses.iter().enumerate() {
        let strictly_better = peer_mses.iter().filter(|&&other| other < mse).count();
        if strict_count_selected(strictly_better, rivals, k) {
            selected.push(p);
        }
    }
    if selected.is_empty() {
        // Unreachable for k > 0 (the best peer has strict count 0), kept as
        // a guarantee that a reference is always defined.
        let best = (0..rivals)
            .min_by(|&a, &b| peer_mses[a].partial_cmp(&peer_mses[b]).unwrap().then(a.cmp(&b)))
            .unwrap();
        selected.push(best);
    }
    let weight = 1.0 / selected.len() as f64;
    let selected_peers = selected
        .into_iter()
        .map(|p| if p < excluded { p } else { p + 1 })
        .collect();
    Ok(WeightAssignment {
        selected_peers,
        weight_per_peer: weight,
        excluded_expert: excluded,
    })
}

/// Per-cell jackknife errors: entry `(i, j)` is expert `j`'s sum of squared
/// errors against outcomes over every task except `i`, summed in task order.
///
/// Row-major, `m * n` values.
pub(crate) fn jackknife_sse_matrix(w: &PredictionMatrix, y: &OutcomeVector) -> Vec<f64> {
    let m = w.num_tasks();
    let n = w.num_experts();
    let ys = y.values();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (j, slot) in row.iter_mut().enumerate() {
            let mut total = 0.0;
            for (i2, &yv) in ys.iter().enumerate() {
                if i2 == i {
                    continue;
                }
                let d = w.at(i2, j) - yv;
                total += d * d;
            }
            *slot = total;
        }
    }
    out
}

/// For each expert, the number of experts with a strictly smaller value.
/// Tied experts share the same count.
pub(crate) fn strict_ranks(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0usize; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos;
        while end + 1 < n && values[order[end + 1]] == values[order[pos]] {
            end += 1;
        }
        for &idx in &order[pos..=end] {
            ranks[idx] = pos;
        }
        pos = end + 1;
    }
    ranks
}

/// Tunes `k` by the pooled leave-one-task-out objective.
///
/// For each task `i`, the aggregate prediction `a_i(k)` is the simple average
/// of the experts whose strict-rank fraction over all `n` experts (judged by
/// error against the other tasks' outcomes) is below `k`; no expert is
/// excluded. The objective for `k` is the sum over tasks of
/// `(y_i - a_i(k))^2`.
pub fn tune_k(w: &PredictionMatrix, y: &OutcomeVector, k_grid: &[f64]) -> Result<KTuneReport> {
    if k_grid.is_empty() {
        return Err(Error::validation("k grid must be non-empty"));
    }
    for &k in k_grid {
        if !k.is_finite() || k <= 0.0 || k > 1.0 {
            return Err(Error::validation(format!("k must be in (0, 1], got {k}")));
        }
    }
    if w.num_tasks() != y.len() {
        return Err(Error::dimension(format!(
            "matrix has {} tasks but outcome vector has {}",
            w.num_tasks(),
            y.len()
        )));
    }
    if w.num_tasks() < 2 {
        return Err(Error::validation(
            "tune_k needs at least 2 tasks for the leave-one-task-out objective",
        ));
    }

    let m = w.num_tasks();
    let n = w.num_experts();
    let jack = jackknife_sse_matrix(w, y);
    let mut objective = vec![0.0; k_grid.len()];
    for i in 0..m {
        let ranks = strict_ranks(&jack[i * n..(i + 1) * n]);
        let row = w.row(i);
        for (gi, &k) in k_grid.iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (j, &rank) in ranks.iter().enumerate() {
                if strict_count_selected(rank, n, k) {
                    sum += row[j];
                    count += 1;
                }
            }
            let aggregate = sum / count as f64;
            let d = y.values()[i] - aggregate;
            objective[gi] += d * d;
        }
    }

    // Full ordered scan; ties go to the smallest k value.
    let mut best_idx = 0;
    for gi in 1..k_grid.len() {
        let better = objective[gi] < objective[best_idx]
            || (objective[gi] == objective[best_idx] && k_grid[gi] < k_grid[best_idx]);
        if better {
            best_idx = gi;
        }
    }
    Ok(KTuneReport {
        k_grid: k_grid.to_vec(),
        objective,
        best_k: k_grid[best_idx],
    })
}
