//! Pool scoring from MC-dropout samples and deterministic top-k selection.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ExampleId;
use crate::error::{Error, Result};
use crate::model::PredictiveSamples;
use crate::rng::Prng;
use crate::tensor::Tensor;
use crate::LOG_EPS;

/// The scoring rules. `random` is the acquisition baseline; the other three
/// rank by predictive uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionId {
    MaxEntropy,
    MeanStd,
    Bald,
    Random,
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionId::MaxEntropy => "max_entropy",
            FunctionId::MeanStd => "mean_std",
            FunctionId::Bald => "bald",
            FunctionId::Random => "random",
        })
    }
}

impl FromStr for FunctionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_entropy" => Ok(FunctionId::MaxEntropy),
            "mean_std" => Ok(FunctionId::MeanStd),
            "bald" => Ok(FunctionId::Bald),
            "random" => Ok(FunctionId::Random),
            other => Err(Error::config(format!("unknown acquisition function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionScore {
    pub example_id: ExampleId,
    pub score: f64,
    pub function_id: FunctionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    MostUncertain,
    LeastUncertain,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::MostUncertain => "most_uncertain",
            Direction::LeastUncertain => "least_uncertain",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most_uncertain" | "most" => Ok(Direction::MostUncertain),
            "least_uncertain" | "least" => Ok(Direction::LeastUncertain),
            other => Err(Error::config(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub k: usize,
    pub direction: Direction,
}

/// Shannon entropy in nats with the 1e-12 log guard.
fn entropy(row: &[f64]) -> f64 {
    -row.iter().map(|&p| p * (p + LOG_EPS).ln()).sum::<f64>()
}

/// MC average over passes: element [n,c] = mean over t of samples[t,n,c].
pub fn consensus_probs(samples: &PredictiveSamples) -> Tensor {
    let (t, n, c) = (samples.passes(), samples.num_examples(), samples.num_classes());
    let mut out = Tensor::zeros(&[n, c]);
    for ti in 0..t {
        let slice = &samples.samples.data()[ti * n * c..(ti + 1) * n * c];
        for (o, v) in out.data_mut().iter_mut().zip(slice) {
            *o += v;
        }
    }
    out.scale(1.0 / t as f64);
    out
}

fn scores_from(samples: &PredictiveSamples, function_id: FunctionId, per_example: impl Fn(usize) -> f64) -> Vec<AcquisitionScore> {
    (0..samples.num_examples())
        .map(|n| AcquisitionScore {
            example_id: samples.example_ids[n].clone(),
            score: per_example(n),
            function_id,
        })
        .collect()
}

/// Entropy of the consensus distribution, per example.
pub fn score_max_entropy(samples: &PredictiveSamples) -> Vec<AcquisitionScore> {
    let consensus = consensus_probs(samples);
    let c = samples.num_classes();
    scores_from(samples, FunctionId::MaxEntropy, |n| {
        entropy(&consensus.data()[n * c..(n + 1) * c])
    })
}

/// Mean over classes of the population std of per-pass probabilities.
pub fn score_mean_std(samples: &PredictiveSamples) -> Vec<AcquisitionScore> {
    let (t, c) = (samples.passes(), samples.num_classes());
    let tf = t as f64;
    scores_from(samples, FunctionId::MeanStd, |n| {
        let mut acc = 0.0;
        for ci in 0..c {
            // Two-pass population variance; the one-pass form cancels badly
            // when the passes agree.
            let mean = (0..t).map(|ti| samples.row(ti, n)[ci]).sum::<f64>() / tf;
            let var = (0..t)
                .map(|ti| {
                    let d = samples.row(ti, n)[ci] - mean;
                    d * d
                })
                .sum::<f64>()
                / tf;
            acc += var.sqrt();
        }
        acc / c as f64
    })
}

/// Mutual information: entropy of the consensus minus mean per-pass entropy.
pub fn score_bald(samples: &PredictiveSamples) -> Vec<AcquisitionScore> {
    let consensus = consensus_probs(samples);
    let (t, c) = (samples.passes(), samples.num_classes());
    scores_from(samples, FunctionId::Bald, |n| {
        let h_consensus = entropy(&consensus.data()[n * c..(n + 1) * c]);
        let mean_h: f64 = (0..t).map(|ti| entropy(samples.row(ti, n))).sum::<f64>() / t as f64;
        // Nonnegative analytically; roundoff can land a hair below zero.
        (h_consensus - mean_h).max(0.0)
    })
}

/// Uniform [0,1) scores in id order from the seeded generator.
pub fn score_random(ids: &[ExampleId], rng: &mut Prng) -> Vec<AcquisitionScore> {
    ids.iter()
        .map(|id| AcquisitionScore {
            example_id: id.clone(),
            score: rng.random::<f64>(),
            function_id: FunctionId::Random,
        })
        .collect()
}

/// Dispatch on the configured function. `Random` draws from `rng`; the other
/// functions never touch it.
pub fn score_pool(
    function: FunctionId,
    samples: &PredictiveSamples,
    rng: &mut Prng,
) -> Vec<AcquisitionScore> {
    match function {
        FunctionId::MaxEntropy => score_max_entropy(samples),
        FunctionId::MeanStd => score_mean_std(samples),
        FunctionId::Bald => score_bald(samples),
        FunctionId::Random => score_random(&samples.example_ids, rng),
    }
}

/// Pick k ids by score. `most_uncertain` takes the highest scores,
/// `least_uncertain` the lowest; ties break by ascending id; the result is
/// ordered by (score per direction, then id).
pub fn select_top_k(scores: &[AcquisitionScore], config: &SelectionConfig) -> Result<Vec<ExampleId>> {
    if config.k > scores.len() {
        return Err(Error::Selection {
            requested: config.k,
            available: scores.len(),
        });
    }
    let mut order: Vec<&AcquisitionScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        let by_score = match config.direction {
            Direction::MostUncertain => b.score.total_cmp(&a.score),
            Direction::LeastUncertain => a.score.total_cmp(&b.score),
        };
        by_score.then_with(|| a.example_id.cmp(&b.example_id))
    });
    Ok(order[..config.k].iter().map(|s| s.example_id.clone()).collect())
}

/// Write scores as `example_id,function_id,score` CSV.
pub fn write_scores_csv(path: &Path, scores: &[AcquisitionScore]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["example_id", "function_id", "score"])?;
    for s in scores {
        w.write_record([s.example_id.as_str(), &s.function_id.to_string(), &format!("{:.17e}", s.score)])?;
    }
    w.flush()?;
    Ok(())
}
