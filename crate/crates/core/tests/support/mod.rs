//! Brute-force reference implementations and instance generators shared by
//! the integration and acceptance suites.
//!
//! `naive_womac_reference` is a literal per-cell transcription of the
//! jackknife mechanism: everything is recomputed from scratch inside the
//! `(i, j)` double loop, with its own Gaussian-elimination solver, so it
//! shares no code with the library's optimized path.
#![allow(dead_code)] // each test target uses a different subset
#![allow(clippy::needless_range_loop)] // literal loop transcription is the point

use rand::Rng;
use womac_core::rng::StreamRng;
use womac_core::scoring::{OutcomeVector, PredictionMatrix};

#[derive(Debug, Clone, Copy)]
pub enum NaiveLearner {
    TopK { k: f64 },
    Lsq { screen_size: usize, ridge: f64 },
}

/// Gaussian elimination with partial pivoting; panics on a singular system
/// (generators keep ridge positive so this cannot happen in tests).
fn gaussian_solve(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * (dim + 1)];
    for r in 0..dim {
        m[r * (dim + 1)..r * (dim + 1) + dim].copy_from_slice(&a[r * dim..(r + 1) * dim]);
        m[r * (dim + 1) + dim] = b[r];
    }
    let w = dim + 1;
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&r1, &r2| {
                m[r1 * w + col]
                    .abs()
                    .partial_cmp(&m[r2 * w + col].abs())
                    .unwrap()
            })
            .unwrap();
        assert!(m[pivot_row * w + col].abs() > 1e-300, "singular system");
        if pivot_row != col {
            for c in 0..w {
                m.swap(col * w + c, pivot_row * w + c);
            }
        }
        for r in col + 1..dim {
            let factor = m[r * w + col] / m[col * w + col];
            for c in col..w {
                m[r * w + c] -= factor * m[col * w + c];
            }
        }
    }
    let mut x = vec![0.0; dim];
    for r in (0..dim).rev() {
        let mut sum = m[r * w + dim];
        for c in r + 1..dim {
            sum -= m[r * w + c] * x[c];
        }
        x[r] = sum / m[r * w + r];
    }
    x
}

/// Per-cell reference solutions, recomputed from scratch for every `(i, j)`.
pub fn naive_womac_reference(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    learner: &NaiveLearner,
) -> Vec<f64> {
    let m = w.num_tasks();
    let n = w.num_experts();
    let ys = y.values();
    let mut reference = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            // Each peer's error against outcomes, excluding task i.
            let mut sse = vec![0.0; n];
            for l in 0..n {
                if l == j {
                    continue;
                }
                let mut total = 0.0;
                for (i2, &yv) in ys.iter().enumerate() {
                    if i2 == i {
                        continue;
                    }
                    let d = w.at(i2, l) - yv;
                    total += d * d;
                }
                sse[l] = total;
            }
            reference[i * n + j] = match learner {
                NaiveLearner::TopK { k } => {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for jp in 0..n {
                        if jp == j {
                            continue;
                        }
                        let mut better = 0usize;
                        for l in 0..n {
                            if l == j {
                                continue;
                            }
                            if sse[l] < sse[jp] {
                                better += 1;
                            }
                        }
                        if (better as f64) / ((n - 1) as f64) < *k {
                            sum += w.at(i, jp);
                            count += 1;
                        }
                    }
                    assert!(count > 0, "top-k selected no peers");
                    sum / count as f64
                }
                NaiveLearner::Lsq { screen_size, ridge } => {
                    let mut peers: Vec<usize> = (0..n).filter(|&l| l != j).collect();
                    peers.sort_by(|&a, &b| {
                        sse[a].partial_cmp(&sse[b]).unwrap().then(a.cmp(&b))
                    });
                    let screened = &peers[..*screen_size];
                    let dim = screen_size + 1;
                    let mut gram = vec![0.0; dim * dim];
                    let mut rhs = vec![0.0; dim];
                    for i2 in 0..m {
                        if i2 == i {
                            continue;
                        }
                        let mut x = vec![1.0];
                        for &jp in screened {
                            x.push(w.at(i2, jp));
                        }
                        for r in 0..dim {
                            for c in 0..dim {
                                gram[r * dim + c] += x[r] * x[c];
                            }
                            rhs[r] += x[r] * ys[i2];
                        }
                    }
                    for d in 1..dim {
                        gram[d * dim + d] += ridge;
                    }
                    let beta = gaussian_solve(&gram, &rhs, dim);
                    let mut pred = beta[0];
                    for (c, &jp) in screened.iter().enumerate() {
                        pred += beta[c + 1] * w.at(i, jp);
                    }
                    pred
                }
            };
        }
    }
    reference
}

/// Scores and lowest-index winner from a naive reference.
pub fn naive_womac_scores(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    learner: &NaiveLearner,
) -> (Vec<f64>, usize) {
    let n = w.num_experts();
    let reference = naive_womac_reference(w, y, learner);
    let mut scores = vec![0.0; n];
    for j in 0..n {
        let mut total = 0.0;
        for i in 0..w.num_tasks() {
            let d = w.at(i, j) - reference[i * n + j];
            total += d * d;
        }
        scores[j] = total;
    }
    let mut winner = 0;
    for j in 1..n {
        if scores[j] < scores[winner] {
            winner = j;
        }
    }
    (scores, winner)
}

/// Random instance: predictions uniform in [0, 1]; outcomes fair coin flips
/// when `binary`, else uniform in [0, 1].
pub fn random_instance(
    rng: &mut StreamRng,
    m: usize,
    n: usize,
    binary: bool,
) -> (PredictionMatrix, OutcomeVector) {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let w = PredictionMatrix::from_rows(&rows).unwrap();
    let y = if binary {
        OutcomeVector::binary(
            (0..m)
                .map(|_| if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap()
    } else {
        OutcomeVector::continuous((0..m).map(|_| rng.gen::<f64>()).collect()).unwrap()
    };
    (w, y)
}
