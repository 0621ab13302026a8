//! Train/test replication harness: sub-sampled splits, in-sample WOMAC and
//! MSE scores, out-of-sample MSE, and the Pearson/Spearman correlations
//! between them.
//!
//! For each training size in the grid, `subsamples` disjoint train/test index
//! pairs are drawn; on each split every expert gets an in-sample WOMAC score
//! (k tuned on the train rows when requested), an in-sample MSE score, and an
//! out-of-sample MSE score, and the per-split correlations are averaged.
//! Splits are evaluated into per-split slots and aggregated in split order,
//! so reports are bit-reproducible for a given config.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{run_standard, womac_score_only, WomacConfig};
use crate::meta::{tune_k, DEFAULT_K_GRID};
use crate::rng::stream_rng;
use crate::scoring::{OutcomeVector, PredictionMatrix};

use rand::Rng;

/// Stream number reserved for drawing the expert subsample, away from the
/// `grid_index * subsamples + split_index` streams used for splits.
const EXPERT_SUBSAMPLE_STREAM: u64 = u64::MAX;

/// How the top-k fraction is chosen on each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KPolicy {
    /// Tune on the split's train rows over this grid.
    TunedInSample { grid: Vec<f64> },
    Fixed { k: f64 },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::TunedInSample {
            grid: DEFAULT_K_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m_train_grid: Vec<usize>,
    /// Number of sub-sampled train/test pairs per training size (`d`).
    pub subsamples: usize,
    pub m_test: usize,
    pub k_policy: KPolicy,
    /// Restrict the expert pool to a random subset of this size.
    pub expert_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m_train_grid: vec![5, 10, 15, 20, 25, 30, 35, 40],
            subsamples: 150,
            m_test: 10,
            k_policy: KPolicy::default(),
            expert_subsample: None,
            seed: 0,
        }
    }
}

/// Disjoint train and test task indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-expert score triple for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitScores {
    pub womac_in: Vec<f64>,
    pub mse_in: Vec<f64>,
    pub mse_out: Vec<f64>,
    /// The k the WOMAC scores were computed with.
    pub k_used: f64,
}

/// Mean/spread of one correlation statistic across the splits of one
/// training size. `mean` is `None` when every split was excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub se: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

/// Raw per-split correlations (kept so the report is self-contained).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRecord {
    pub split: Split,
    pub k_used: f64,
    pub pearson_womac: Option<f64>,
    pub pearson_mse: Option<f64>,
    pub spearman_womac: Option<f64>,
    pub spearman_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MTrainSummary {
    pub m_train: usize,
    pub pearson_womac: CorrelationSummary,
    pub pearson_mse: CorrelationSummary,
    /// Per-split WOMAC-minus-MSE Pearson gap.
    pub pearson_gap: CorrelationSummary,
    pub spearman_womac: CorrelationSummary,
    pub spearman_mse: CorrelationSummary,
    pub spearman_gap: CorrelationSummary,
    pub splits: Vec<SplitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub config: ExperimentConfig,
    /// Expert ids actually scored (after any subsampling).
    pub expert_ids: Vec<String>,
    pub per_m_train: Vec<MTrainSummary>,
}

/// Draws `subsamples` disjoint (train, test) index pairs for every training
/// size in the grid, uniformly without replacement. Grid entry `g`, split
/// `s` uses seed stream `g * subsamples + s`.
pub fn make_splits(
    m_total: usize,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<Vec<Split>>> {
    if cfg.m_train_grid.is_empty() {
        return Err(Error::validation("m_train grid must be non-empty"));
    }
    if cfg.subsamples < 1 {
        return Err(Error::validation("need at least 1 subsample"));
    }
    if cfg.m_test < 1 {
        return Err(Error::validation("m_test must be at least 1"));
    }
    for &m_train in &cfg.m_train_grid {
        if m_train < 2 {
            return Err(Error::validation(format!(
                "m_train {m_train} is too small to jackknife over"
            )));
        }
        if m_train + cfg.m_test > m_total {
            return Err(Error::validation(format!(
                "m_train {} + m_test {} exceeds dataset size {}",
                m_train, cfg.m_test, m_total
            )));
        }
    }
    let mut all = Vec::with_capacity(cfg.m_train_grid.len());
    for (g, &m_train) in cfg.m_train_grid.iter().enumerate() {
        let mut per_size = Vec::with_capacity(cfg.subsamples);
        for s in 0..cfg.subsamples {
            let stream = (g * cfg.subsamples + s) as u64;
            let mut rng = stream_rng(seed, stream);
            let take = m_train + cfg.m_test;
            let mut indices: Vec<usize> = (0..m_total).collect();
            for t in 0..take {
                let pick = t + rng.gen_range(0..m_total - t);
                indices.swap(t, pick);
            }
            let mut train: Vec<usize> = indices[..m_train].to_vec();
            let mut test: Vec<usize> = indices[m_train..take].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            per_size.push(Split { train, test });
        }
        all.push(per_size);
    }
    Ok(all)
}

/// Scores one split: in-sample WOMAC (top-k averaging, k per policy),
/// in-sample MSE, out-of-sample MSE.
pub fn score_split(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    split: &Split,
    k_policy: &KPolicy,
) -> Result<SplitScores> {
    let train_w = w.select_tasks(&split.train)?;
    let train_y = y.select(&split.train)?;
    let test_w = w.select_tasks(&split.test)?;
    let test_y = y.select(&split.test)?;
    let k = match k_policy {
        KPolicy::Fixed { k } => *k,
        KPolicy::TunedInSample { grid } => tune_k(&train_w, &train_y, grid)?.best_k,
    };
    let womac_in = womac_score_only(&train_w, &train_y, &WomacConfig::top_k_average(k))?;
    let mse_in = run_standard(&train_w, &train_y)?.scores;
    let mse_out = run_standard(&test_w, &test_y)?.scores;
    Ok(SplitScores {
        womac_in,
        mse_in,
        mse_out,
        k_used: k,
    })
}

/// Sample Pearson correlation. `Ok(None)` when either input has zero
/// variance (the correlation is undefined and the caller excludes it).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::dimension(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::validation(
            "correlation needs at least 2 observations",
        ));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite input to correlation"));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some(sxy / (sxx.sqrt() * syy.sqrt())))
}

/// Mid-ranks: tied values share the average of the positions they occupy.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos;
        while end + 1 < n && values[order[end + 1]] == values[order[pos]] {
            end += 1;
        }
        let avg_rank = (pos + end) as f64 / 2.0 + 1.0;
        for &idx in &order[pos..=end] {
            ranks[idx] = avg_rank;
        }
        pos = end + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::dimension(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::validation(
            "correlation needs at least 2 observations",
        ));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite input to correlation"));
    }
    pearson(&mid_ranks(x), &mid_ranks(y))
}

fn summarize(values: &[Option<f64>]) -> CorrelationSummary {
    let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let used = present.len();
    let excluded = values.len() - used;
    if used == 0 {
        return CorrelationSummary {
            mean: None,
            sd: None,
            se: None,
            used,
            excluded,
        };
    }
    let mean = present.iter().sum::<f64>() / used as f64;
    let (sd, se) = if used >= 2 {
        let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (used - 1) as f64;
        let sd = var.sqrt();
        (Some(sd), Some(sd / (used as f64).sqrt()))
    } else {
        (None, None)
    };
    CorrelationSummary {
        mean: Some(mean),
        sd,
        se,
        used,
        excluded,
    }
}

fn gap(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x - y),
        _ => None,
    }
}

/// Runs the full protocol: splits, per-split score triples, correlations,
/// and per-training-size summaries including the WOMAC-minus-MSE gap.
pub fn run_correlation_experiment(
    w: &PredictionMatrix,
    y: &OutcomeVector,
    cfg: &ExperimentConfig,
) -> Result<CorrelationReport> {
    if w.num_tasks() != y.len() {
        return Err(Error::dimension(format!(
            "matrix has {} tasks but outcome vector has {}",
            w.num_tasks(),
            y.len()
        )));
    }
    let pool;
    let w = match cfg.expert_subsample {
        None => w,
        Some(count) => {
            if count < 3 {
                return Err(Error::validation(
                    "expert subsample must keep at least 3 experts",
                ));
            }
            if count > w.num_experts() {
                return Err(Error::validation(format!(
                    "expert subsample {} exceeds pool of {}",
                    count,
                    w.num_experts()
                )));
            }
            let mut rng = stream_rng(cfg.seed, EXPERT_SUBSAMPLE_STREAM);
            let mut indices: Vec<usize> = (0..w.num_experts()).collect();
            for t in 0..count {
                let pick = t + rng.gen_range(0..indices.len() - t);
                indices.swap(t, pick);
            }
            let mut keep = indices[..count].to_vec();
            keep.sort_unstable();
            pool = w.select_experts(&keep)?;
            &pool
        }
    };

    let splits = make_splits(w.num_tasks(), cfg, cfg.seed)?;
    let mut per_m_train = Vec::with_capacity(cfg.m_train_grid.len());
    for (g, &m_train) in cfg.m_train_grid.iter().enumerate() {
        let records: Vec<SplitRecord> = splits[g]
            .par_iter()
            .map(|split| -> Result<SplitRecord> {
                let scores = score_split(w, y, split, &cfg.k_policy)?;
                Ok(SplitRecord {
                    split: split.clone(),
                    k_used: scores.k_used,
                    pearson_womac: pearson(&scores.womac_in, &scores.mse_out)?,
                    pearson_mse: pearson(&scores.mse_in, &scores.mse_out)?,
                    spearman_womac: spearman(&scores.womac_in, &scores.mse_out)?,
                    spearman_mse: spearman(&scores.mse_in, &scores.mse_out)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pearson_womac = summarize(&records.iter().map(|r| r.pearson_womac).collect::<Vec<_>>());
        let pearson_mse = summarize(&records.iter().map(|r| r.pearson_mse).collect::<Vec<_>>());
        let pearson_gap = summarize(
            &records
                .iter()
                .map(|r| gap(r.pearson_womac, r.pearson_mse))
                .collect::<Vec<_>>(),
        );
        let spearman_womac =
            summarize(&records.iter().map(|r| r.spearman_womac).collect::<Vec<_>>());
        let spearman_mse = summarize(&records.iter().map(|r| r.spearman_mse).collect::<Vec<_>>());
        let spearman_gap = summarize(
            &records
                .iter()
                .map(|r| gap(r.spearman_womac, r.spearman_mse))
                .collect::<Vec<_>>(),
        );
        per_m_train.push(MTrainSummary {
            m_train,
            pearson_womac,
            pearson_mse,
            pearson_gap,
            spearman_womac,
            spearman_mse,
            spearman_gap,
            splits: records,
        });
    }
    Ok(CorrelationReport {
        config: cfg.clone(),
        expert_ids: w.expert_ids().to_vec(),
        per_m_train,
    })
}

fn push_csv_row(out: &mut String, m_train: usize, corr: &str, score: &str, s: &CorrelationSummary) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{}\n",
        m_train,
        corr,
        score,
        fmt(s.mean),
        fmt(s.sd),
        fmt(s.se),
        s.used,
        s.excluded
    ));
}

/// Flat CSV view of a report: one row per training size, correlation kind,
/// and score kind (womac, mse, and their per-split gap).
pub fn summary_csv(report: &CorrelationReport) -> String {
    let mut out = String::from("m_train,correlation,score,mean,sd,se,used,excluded\n");
    for row in &report.per_m_train {
        push_csv_row(&mut out, row.m_train, "pearson", "womac", &row.pearson_womac);
        push_csv_row(&mut out, row.m_train, "pearson", "mse", &row.pearson_mse);
        push_csv_row(&mut out, row.m_train, "pearson", "gap", &row.pearson_gap);
        push_csv_row(&mut out, row.m_train, "spearman", "womac", &row.spearman_womac);
        push_csv_row(&mut out, row.m_train, "spearman", "mse", &row.spearman_mse);
        push_csv_row(&mut out, row.m_train, "spearman", "gap", &row.spearman_gap);
    }
    out
}
