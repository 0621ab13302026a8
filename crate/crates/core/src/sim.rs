//! Synthetic world generation and Monte Carlo estimation of win
//! probabilities.
//!
//! A world is: ground truths `theta_i` from a prior, expert predictions
//! `x_ij ~ N(theta_i, tau_j^2)` drawn independently per cell given the
//! ground truth, and outcomes from the outcome model. Draw order within a
//! replicate is fixed (theta by task, then predictions row-major, then
//! outcomes by task, then any reference noise by task), and replicate `r`
//! owns the generator for stream `r`, so estimates depend only on the seed
//! and never on thread count or evaluation order.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{run_oracular, run_standard, run_womac, OracleVector, WomacConfig};
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::scoring::{OutcomeVector, PredictionMatrix};

const Z_95: f64 = 1.959963984540054;

/// Distribution of the ground truth per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaPrior {
    /// Known ground-truth vector, length m.
    Fixed(Vec<f64>),
    /// Independent draws from a Gaussian.
    Gaussian { mean: f64, sd: f64 },
}

/// How outcomes are generated from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeModel {
    /// `y_i ~ N(theta_i, sd^2)`, continuous outcomes.
    Gaussian { sd: f64 },
    /// `y_i ~ Bernoulli(sigmoid(theta_i))`, binary outcomes.
    BernoulliLogistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Task count.
    pub m: usize,
    pub theta_prior: ThetaPrior,
    pub outcome_model: OutcomeModel,
    /// Per-expert prediction noise `tau_j`; length is the expert count.
    pub expert_sds: Vec<f64>,
}

impl WorldConfig {
    pub fn num_experts(&self) -> usize {
        self.expert_sds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::validation("world needs at least 1 task"));
        }
        if self.expert_sds.len() < 2 {
            return Err(Error::validation("world needs at least 2 experts"));
        }
        if let Some(bad) = self
            .expert_sds
            .iter()
            .find(|s| !s.is_finite() || **s <= 0.0)
        {
            return Err(Error::validation(format!(
                "expert sds must be positive and finite, got {bad}"
            )));
        }
        match &self.theta_prior {
            ThetaPrior::Fixed(v) => {
                if v.len() != self.m {
                    return Err(Error::dimension(format!(
                        "fixed theta has length {} but m = {}",
                        v.len(),
                        self.m
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation("fixed theta contains non-finite entry"));
                }
            }
            ThetaPrior::Gaussian { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || *sd <= 0.0 {
                    return Err(Error::validation("gaussian prior needs finite mean, sd > 0"));
                }
            }
        }
        if let OutcomeModel::Gaussian { sd } = self.outcome_model {
            if !sd.is_finite() || sd <= 0.0 {
                return Err(Error::validation("outcome sd must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Noise applied to the ground truth to form the reference the estimator
/// mechanism scores against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceNoiseModel {
    Exact,
    GaussianNoise { sd: f64 },
}

impl ReferenceNoiseModel {
    fn validate(&self) -> Result<()> {
        if let ReferenceNoiseModel::GaussianNoise { sd } = self {
            if !sd.is_finite() || *sd <= 0.0 {
                return Err(Error::validation(
                    "reference noise sd must be positive and finite",
                ));
            }
        }
        Ok(())
    }
}

/// How an expert maps true predictions to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationStrategy {
    Truthful,
    /// Step the report `offset` past the expert's own signal, on the side of
    /// the signal: `w = x + offset * direction * sign(x)`. With
    /// `direction = +1` the report moves outward past the peer cluster (the
    /// single-question outflanking deviation); `-1` moves it toward the
    /// consensus instead.
    Outflank { offset: f64, direction: i8 },
    /// Report `x_i + shift_i` per task.
    Shift(Vec<f64>),
}

impl DeviationStrategy {
    fn validate(&self, m: usize) -> Result<()> {
        match self {
            DeviationStrategy::Truthful => Ok(()),
            DeviationStrategy::Outflank { offset, direction } => {
                if !offset.is_finite() {
                    return Err(Error::validation("outflank offset must be finite"));
                }
                if *direction != 1 && *direction != -1 {
                    return Err(Error::validation("outflank direction must be +1 or -1"));
                }
                Ok(())
            }
            DeviationStrategy::Shift(v) => {
                if v.len() != m {
                    return Err(Error::dimension(format!(
                        "shift vector has length {} but m = {}",
                        v.len(),
                        m
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation("shift vector contains non-finite entry"));
                }
                Ok(())
            }
        }
    }
}

/// Which competition is run inside each replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMechanism {
    /// Reference is the realized outcome vector.
    Standard,
    /// Reference is the ground truth passed through the reference noise
    /// model (`Exact` noise gives the oracular competition).
    Estimator,
    /// Reference is the WOMAC jackknife reference built from reports and
    /// outcomes.
    Womac(WomacConfig),
}

/// Monte Carlo win frequencies with normal-approximation confidence bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinProbEstimate {
    pub win_counts: Vec<u64>,
    pub per_expert_freq: Vec<f64>,
    pub replicates: u64,
    /// 95% half-widths, `1.96 * sqrt(f(1-f)/R)`.
    pub ci_halfwidth: Vec<f64>,
}

impl WinProbEstimate {
    /// Half-widths at an arbitrary normal quantile `z`.
    pub fn ci_halfwidth_z(&self, z: f64) -> Vec<f64> {
        self.per_expert_freq
            .iter()
            .map(|&f| z * (f * (1.0 - f) / self.replicates as f64).sqrt())
            .collect()
    }
}

/// One grid point of [`efficiency_curve`]: the best expert's identification
/// frequency under two reference noise models at task count `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub m: usize,
    pub best_expert: usize,
    pub freq_a: f64,
    pub ci_a: f64,
    pub freq_b: f64,
    pub ci_b: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws one world from `rng`: theta per task, predictions row-major, then
/// outcomes per task.
fn sample_world_rng(
    cfg: &WorldConfig,
    rng: &mut StreamRng,
) -> Result<(OracleVector, PredictionMatrix, OutcomeVector)> {
    let m = cfg.m;
    let n = cfg.num_experts();
    let theta: Vec<f64> = match &cfg.theta_prior {
        ThetaPrior::Fixed(v) => v.clone(),
        ThetaPrior::Gaussian { mean, sd } => {
            let dist = Normal::new(*mean, *sd).expect("validated");
            (0..m).map(|_| dist.sample(rng)).collect()
        }
    };
    let mut values = Vec::with_capacity(m * n);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for &th in &theta {
        for &tau in &cfg.expert_sds {
            values.push(th + tau * unit.sample(rng));
        }
    }
    let x = PredictionMatrix::new(
        values,
        (0..m).map(|i| format!("t{i}")).collect(),
        (0..n).map(|j| format!("e{j}")).collect(),
    )?;
    let y = match cfg.outcome_model {
        OutcomeModel::Gaussian { sd } => OutcomeVector::continuous(
            theta.iter().map(|&th| th + sd * unit.sample(rng)).collect(),
        )?,
        OutcomeModel::BernoulliLogistic => OutcomeVector::binary(
            theta
                .iter()
                .map(|&th| {
                    let u: f64 = rng.gen();
                    if u < sigmoid(th) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )?,
    };
    Ok((OracleVector::new(theta)?, x, y))
}

/// Samples one world deterministically from `seed` (stream 0).
pub fn sample_world(
    cfg: &WorldConfig,
    seed: u64,
) -> Result<(OracleVector, PredictionMatrix, OutcomeVector)> {
    cfg.validate()?;
    let mut rng = stream_rng(seed, 0);
    sample_world_rng(cfg, &mut rng)
}

fn apply_strategies(
    x: &PredictionMatrix,
    strategies: &[DeviationStrategy],
) -> Result<PredictionMatrix> {
    let m = x.num_tasks();
    let n = x.num_experts();
    let mut values = Vec::with_capacity(m * n);
    for i in 0..m {
        for (j, strategy) in strategies.iter().enumerate() {
            let v = x.at(i, j);
            values.push(match strategy {
                DeviationStrategy::Truthful => v,
                DeviationStrategy::Outflank { offset, direction } => {
                    v + offset * f64::from(*direction) * v.signum()
                }
                DeviationStrategy::Shift(shift) => v + shift[i],
            });
        }
    }
    PredictionMatrix::new(
        values,
        x.task_ids().to_vec(),
        x.expert_ids().to_vec(),
    )
}

/// Estimates each expert's probability of winning by Monte Carlo.
///
/// Replicate `r` samples a world from stream `r`, applies the per-expert
/// strategies to form reports, runs the mechanism, and records the winner.
pub fn estimate_win_prob(
    cfg: &WorldConfig,
    mechanism: &SimMechanism,
    ref_noise: &ReferenceNoiseModel,
    strategies: &[DeviationStrategy],
    replicates: usize,
    seed: u64,
) -> Result<WinProbEstimate> {
    cfg.validate()?;
    ref_noise.validate()?;
    if replicates < 1 {
        return Err(Error::validation("need at least 1 replicate"));
    }
    let n = cfg.num_experts();
    if strategies.len() != n {
        return Err(Error::dimension(format!(
            "{} strategies for {} experts",
            strategies.len(),
            n
        )));
    }
    for s in strategies {
        s.validate(cfg.m)?;
    }
    if !matches!(mechanism, SimMechanism::Estimator)
        && matches!(ref_noise, ReferenceNoiseModel::GaussianNoise { .. })
    {
        return Err(Error::validation(
            "reference noise applies only to the estimator mechanism",
        ));
    }

    let winners: Vec<usize> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let mut rng = stream_rng(seed, r as u64);
            let (theta, x, y) = sample_world_rng(cfg, &mut rng)?;
            let w = apply_strategies(&x, strategies)?;
            let result = match mechanism {
                SimMechanism::Standard => run_standard(&w, &y)?,
                SimMechanism::Estimator => {
                    let reference = match ref_noise {
                        ReferenceNoiseModel::Exact => theta,
                        ReferenceNoiseModel::GaussianNoise { sd } => {
                            let dist = Normal::new(0.0, *sd).expect("validated");
                            OracleVector::new(
                                theta
                                    .values()
                                    .iter()
                                    .map(|&th| th + dist.sample(&mut rng))
                                    .collect(),
                            )?
                        }
                    };
                    run_oracular(&w, &reference)?
                }
                SimMechanism::Womac(womac_cfg) => run_womac(&w, &y, womac_cfg)?.0,
            };
            Ok(result.winner)
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut win_counts = vec![0u64; n];
    for &w in &winners {
        win_counts[w] += 1;
    }
    let replicates = replicates as u64;
    let per_expert_freq: Vec<f64> = win_counts
        .iter()
        .map(|&c| c as f64 / replicates as f64)
        .collect();
    let ci_halfwidth = per_expert_freq
        .iter()
        .map(|&f| Z_95 * (f * (1.0 - f) / replicates as f64).sqrt())
        .collect();
    Ok(WinProbEstimate {
        win_counts,
        per_expert_freq,
        replicates,
        ci_halfwidth,
    })
}

/// Best-expert identification frequency as the task count grows, under two
/// reference noise models (all experts truthful, estimator mechanism).
///
/// Grid point `g` uses seed streams `2g` (model A) and `2g + 1` (model B).
pub fn efficiency_curve(
    cfg: &WorldConfig,
    ref_noise_a: &ReferenceNoiseModel,
    ref_noise_b: &ReferenceNoiseModel,
    m_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<EfficiencyPoint>> {
    if m_grid.is_empty() {
        return Err(Error::validation("m grid must be non-empty"));
    }
    cfg.validate()?;
    let n = cfg.num_experts();
    let best_expert = (0..n)
        .min_by(|&a, &b| {
            cfg.expert_sds[a]
                .partial_cmp(&cfg.expert_sds[b])
                .unwrap()
                .then(a.cmp(&b))
        })
        .unwrap();
    let truthful = vec![DeviationStrategy::Truthful; n];
    let mut points = Vec::with_capacity(m_grid.len());
    for (g, &m) in m_grid.iter().enumerate() {
        let cfg_m = WorldConfig {
            m,
            theta_prior: cfg.theta_prior.clone(),
            outcome_model: cfg.outcome_model,
            expert_sds: cfg.expert_sds.clone(),
        };
        let a = estimate_win_prob(
            &cfg_m,
            &SimMechanism::Estimator,
            ref_noise_a,
            &truthful,
            replicates,
            derive_seed(seed, 2 * g as u64),
        )?;
        let b = estimate_win_prob(
            &cfg_m,
            &SimMechanism::Estimator,
            ref_noise_b,
            &truthful,
            replicates,
            derive_seed(seed, 2 * g as u64 + 1),
        )?;
        points.push(EfficiencyPoint {
            m,
            best_expert,
            freq_a: a.per_expert_freq[best_expert],
            ci_a: a.ci_halfwidth[best_expert],
            freq_b: b.per_expert_freq[best_expert],
            ci_b: b.ci_halfwidth[best_expert],
        });
    }
    Ok(points)
}
