//! Pool-based active learning: seed-set construction, per-round retraining,
//! MC scoring of the pool, acquisition, and bookkeeping.
//!
//! Every random draw derives from (rng_seed, purpose stream, round, ...) so a
//! run is a pure function of config + dataset, and a crashed run resumes from
//! persisted reports without replaying the completed rounds' arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    score_pool, select_top_k, AcquisitionScore, Direction, FunctionId, SelectionConfig,
};
use crate::adam::{adam_step, AdamState};
use crate::data::preprocess::{preprocess, Mode, PreprocessConfig};
use crate::data::{standardized_batch, ChannelStats, Dataset, Example, ExampleId};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ConfusionMatrix};
use crate::model::{
    backward, build_model, forward, mc_predict, ArchitectureConfig, DropoutPlan, ModelState,
};
use crate::ops::loss::{cross_entropy_loss, one_hot};
use crate::rng::{derive, fnv1a, stream};
use crate::tensor::Tensor;

/// Dropout probability in the decay formula (the paper's p row, not the 0.25
/// first-layer rate).
pub const DECAY_DROPOUT_P: f64 = 0.5;
/// Squared length scale l² in the decay formula.
pub const LENGTH_SCALE_SQ: f64 = 0.5;

/// (1 − p) · l² / |labeled|, recomputed every round as the set grows.
pub fn weight_decay_for(labeled: usize) -> f64 {
    (1.0 - DECAY_DROPOUT_P) * LENGTH_SCALE_SQ / labeled as f64
}

/// Labeled examples in acquisition order: seed set first, then each round's
/// acquisitions appended in selection order.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    examples: Vec<Example>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn push(&mut self, example: Example) {
        self.examples.push(example);
    }

    pub fn ids(&self) -> BTreeSet<ExampleId> {
        self.examples.iter().map(|e| e.id.clone()).collect()
    }
}

/// An example whose label the oracle has not yet revealed. The label is
/// absent from the type, not merely hidden.
#[derive(Debug, Clone)]
pub struct PoolExample {
    pub id: ExampleId,
    pub image: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct UnlabeledPool {
    examples: Vec<PoolExample>,
}

impl UnlabeledPool {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[PoolExample] {
        &self.examples
    }

    pub fn ids(&self) -> BTreeSet<ExampleId> {
        self.examples.iter().map(|e| e.id.clone()).collect()
    }

    /// Remove the given ids, returning them in the order given. Unknown ids
    /// are an error; nothing is removed twice.
    pub fn take(&mut self, ids: &[ExampleId]) -> Result<Vec<PoolExample>> {
        let wanted: BTreeSet<&ExampleId> = ids.iter().collect();
        if wanted.len() != ids.len() {
            return Err(Error::data("acquisition list contains duplicate ids"));
        }
        let mut by_id: BTreeMap<ExampleId, PoolExample> = BTreeMap::new();
        let mut keep = Vec::with_capacity(self.examples.len() - wanted.len());
        for ex in self.examples.drain(..) {
            if wanted.contains(&ex.id) {
                by_id.insert(ex.id.clone(), ex);
            } else {
                keep.push(ex);
            }
        }
        self.examples = keep;
        ids.iter()
            .map(|id| {
                by_id
                    .remove(id)
                    .ok_or_else(|| Error::data(format!("id {id} is not in the pool")))
            })
            .collect()
    }
}

/// Holds every ground-truth label but hands them out only through `reveal`.
/// `peek` answers without authorization and counts how often it was used on
/// an unrevealed id, so tests can assert the loop never cheats.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    labels: BTreeMap<ExampleId, usize>,
    revealed: BTreeSet<ExampleId>,
    illicit_reads: std::cell::Cell<u64>,
}

impl LabelOracle {
    pub fn new(examples: &[Example]) -> LabelOracle {
        LabelOracle {
            labels: examples.iter().map(|e| (e.id.clone(), e.label)).collect(),
            revealed: BTreeSet::new(),
            illicit_reads: std::cell::Cell::new(0),
        }
    }

    /// The legitimate path: marks the id revealed and returns its label.
    pub fn reveal(&mut self, id: &ExampleId) -> Result<usize> {
        let Some(&label) = self.labels.get(id) else {
            return Err(Error::data(format!("oracle knows no label for {id}")));
        };
        if !self.revealed.insert(id.clone()) {
            return Err(Error::data(format!("label for {id} was already revealed")));
        }
        Ok(label)
    }

    /// Unauthorized read: returns the label regardless, but bumps the illicit
    /// counter when the id has not been revealed.
    pub fn peek(&self, id: &ExampleId) -> Option<usize> {
        let label = self.labels.get(id).copied();
        if label.is_some() && !self.revealed.contains(id) {
            self.illicit_reads.set(self.illicit_reads.get() + 1);
        }
        label
    }

    pub fn is_revealed(&self, id: &ExampleId) -> bool {
        self.revealed.contains(id)
    }

    pub fn revealed_len(&self) -> usize {
        self.revealed.len()
    }

    pub fn illicit_reads(&self) -> u64 {
        self.illicit_reads.get()
    }
}

/// How the seed set is drawn from the train split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedComposition {
    /// Exact per-class counts, index = class.
    PerClass(Vec<usize>),
    /// Proportional to the split's class ratio, largest-remainder rounding.
    Stratified { size: usize },
}

impl SeedComposition {
    pub fn total(&self, histogram: &[usize]) -> usize {
        match self {
            SeedComposition::PerClass(counts) => counts.iter().sum(),
            SeedComposition::Stratified { size } => {
                let _ = histogram;
                *size
            }
        }
    }
}

/// Largest-remainder apportionment of `size` across class counts.
fn stratified_counts(histogram: &[usize], size: usize) -> Vec<usize> {
    let total: usize = histogram.iter().sum();
    let mut counts: Vec<usize> = Vec::with_capacity(histogram.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(histogram.len());
    for (class, &n) in histogram.iter().enumerate() {
        let quota = size as f64 * n as f64 / total as f64;
        let floor = quota.floor();
        counts.push(floor as usize);
        remainders.push((quota - floor, class));
    }
    let assigned: usize = counts.iter().sum();
    // Largest remainder first; equal remainders favor the lower class index.
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for i in 0..size - assigned {
        counts[remainders[i].1] += 1;
    }
    counts
}

/// Draw the seed set and form the pool from the remainder. Seed labels are
/// revealed through the returned oracle; pool examples carry no label at all.
/// The pool keeps the train split's original order.
pub fn build_seed_set(
    train: Vec<Example>,
    composition: &SeedComposition,
    num_classes: usize,
    rng: &mut crate::rng::Prng,
) -> Result<(LabeledSet, UnlabeledPool, LabelOracle)> {
    let histogram = Dataset::class_histogram(&train, num_classes);
    let counts = match composition {
        SeedComposition::PerClass(counts) => {
            if counts.len() != num_classes {
                return Err(Error::config(format!(
                    "seed composition lists {} classes, dataset has {num_classes}",
                    counts.len()
                )));
            }
            counts.clone()
        }
        SeedComposition::Stratified { size } => {
            if *size > train.len() {
                return Err(Error::config(format!(
                    "seed size {size} exceeds train split of {}",
                    train.len()
                )));
            }
            stratified_counts(&histogram, *size)
        }
    };

    let shortfalls: Vec<String> = counts
        .iter()
        .zip(&histogram)
        .enumerate()
        .filter(|(_, (want, have))| want > have)
        .map(|(class, (want, have))| format!("class {class}: want {want}, have {have}"))
        .collect();
    if !shortfalls.is_empty() {
        return Err(Error::config(format!(
            "seed composition exceeds available examples ({})",
            shortfalls.join("; ")
        )));
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut remaining = counts;
    let mut chosen = vec![false; train.len()];
    for &i in &order {
        let class = train[i].label;
        if remaining[class] > 0 {
            remaining[class] -= 1;
            chosen[i] = true;
        }
    }

    let mut oracle = LabelOracle::new(&train);
    let mut labeled = LabeledSet::default();
    let mut pool = UnlabeledPool::default();
    for (i, ex) in train.into_iter().enumerate() {
        if chosen[i] {
            oracle.reveal(&ex.id)?;
            labeled.push(ex);
        } else {
            pool.examples.push(PoolExample {
                id: ex.id,
                image: ex.image,
            });
        }
    }
    Ok((labeled, pool, oracle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    /// Reinitialize from (rng_seed, round) before each round's training.
    FromScratch,
    /// Keep training the previous round's weights.
    Continue,
}

impl std::str::FromStr for RetrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "from_scratch" => Ok(RetrainMode::FromScratch),
            "continue" => Ok(RetrainMode::Continue),
            other => Err(Error::config(format!("unknown retrain mode {other:?}"))),
        }
    }
}

/// What the rounds acquire with. `NoAcquisition` runs the full round axis
/// without ever querying, giving the no-uncertainty baseline an aligned
/// report series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionChoice {
    NoAcquisition,
    Function(FunctionId),
}

impl AcquisitionChoice {
    pub fn function(&self) -> Option<FunctionId> {
        match self {
            AcquisitionChoice::NoAcquisition => None,
            AcquisitionChoice::Function(f) => Some(*f),
        }
    }
}

impl std::fmt::Display for AcquisitionChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AcquisitionChoice::NoAcquisition => f.write_str("none"),
            AcquisitionChoice::Function(id) => id.fmt(f),
        }
    }
}

impl std::str::FromStr for AcquisitionChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            Ok(AcquisitionChoice::NoAcquisition)
        } else {
            Ok(AcquisitionChoice::Function(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub seed_composition: SeedComposition,
    pub query_size: usize,
    pub rounds: usize,
    pub direction: Direction,
    pub acquisition: AcquisitionChoice,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mc_passes: usize,
    pub retrain_mode: RetrainMode,
    pub rng_seed: u64,
}

impl LoopConfig {
    pub fn validate(&self, train_histogram: &[usize]) -> Result<()> {
        let seed_total = self.seed_composition.total(train_histogram);
        if self.query_size == 0 {
            return Err(Error::config("query_size must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if seed_total < self.batch_size {
            return Err(Error::config(format!(
                "seed set of {seed_total} is smaller than batch_size {}",
                self.batch_size
            )));
        }
        if self.epochs_per_round == 0 {
            return Err(Error::config("epochs_per_round must be at least 1"));
        }
        if self.mc_passes == 0 {
            return Err(Error::config("mc_passes must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One row of the per-round report stream. `elapsed_secs` is measured, not
/// derived, so it is skipped during serialization to keep reruns byte-equal;
/// callers wanting timings read the field directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub labeled_size: usize,
    pub pool_size: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub acquired_ids: Vec<ExampleId>,
    pub pool_shortfall: bool,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurves {
    pub epoch_losses: Vec<f64>,
    pub weight_decay: f64,
}

/// Frozen per-experiment context: architecture, preprocessing, train stats.
#[derive(Debug, Clone, Copy)]
pub struct TrainContext<'a> {
    pub arch: &'a ArchitectureConfig,
    pub preprocess: &'a PreprocessConfig,
    pub stats: &'a ChannelStats,
}

/// Train for `epochs_per_round` epochs of shuffled mini-batches with dropout
/// active and weight decay set from the current labeled count. With
/// `from_scratch` (or no incoming model) the weights reinitialize from
/// (rng_seed, round); `continue` resumes the passed weights. The Adam moments
/// are fresh either way because the decay coefficient changes with |labeled|.
pub fn train_round(
    model_in: Option<ModelState>,
    labeled: &LabeledSet,
    ctx: &TrainContext<'_>,
    cfg: &LoopConfig,
    round: usize,
) -> Result<(ModelState, TrainingCurves)> {
    if labeled.is_empty() {
        return Err(Error::data("cannot train on an empty labeled set"));
    }
    let round_tag = round as u64;
    let mut model = match (cfg.retrain_mode, model_in) {
        (RetrainMode::Continue, Some(m)) => m,
        _ => build_model(ctx.arch, &mut derive(cfg.rng_seed, &[stream::INIT, round_tag]))?,
    };

    let n = labeled.len();
    let decay = weight_decay_for(n);
    let mut adam = AdamState::new(&model.params(), cfg.learning_rate, decay);
    let num_classes = ctx.arch.num_classes;
    let s = ctx.preprocess.target_size;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs_per_round);
    for epoch in 0..cfg.epochs_per_round {
        let mut epoch_rng = derive(cfg.rng_seed, &[stream::TRAIN, round_tag, epoch as u64]);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_rng);

        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(batch_idx.len() * 3 * s * s);
            let mut labels = Vec::with_capacity(batch_idx.len());
            for &i in batch_idx {
                let ex = &labeled.examples()[i];
                // Per-example augmentation stream: stable under batch order.
                let mut aug_rng = derive(
                    cfg.rng_seed,
                    &[stream::AUG, round_tag, epoch as u64, fnv1a(ex.id.as_str().as_bytes())],
                );
                let img = preprocess(&ex.image, ctx.preprocess, ctx.stats, Mode::Train, &mut aug_rng)?;
                data.extend_from_slice(img.data());
                labels.push(ex.label);
            }
            let batch = Tensor::from_vec(&[batch_idx.len(), 3, s, s], data)?;
            let targets = one_hot(&labels, num_classes)?;

            let cache = forward(&model, &batch, DropoutPlan::Draw(&mut epoch_rng))?;
            let loss = cross_entropy_loss(&cache.probs, &targets)?;
            let grads = backward(&model, &cache, &targets)?;
            adam_step(&mut model.params_mut(), &grads.refs(), &mut adam);
            loss_sum += loss * batch_idx.len() as f64;
        }
        epoch_losses.push(loss_sum / n as f64);
    }

    Ok((
        model,
        TrainingCurves {
            epoch_losses,
            weight_decay: decay,
        },
    ))
}

/// Callbacks for incremental persistence. All default to no-ops.
pub trait ExperimentObserver {
    fn on_report(&mut self, _report: &RoundReport) -> Result<()> {
        Ok(())
    }
    fn on_scores(&mut self, _round: usize, _scores: &[AcquisitionScore]) -> Result<()> {
        Ok(())
    }
    fn on_model(&mut self, _round: usize, _model: &ModelState) -> Result<()> {
        Ok(())
    }
}

pub struct NullObserver;
impl ExperimentObserver for NullObserver {}

/// Mutable experiment state between rounds.
pub struct LoopState {
    pub model: Option<ModelState>,
    pub labeled: LabeledSet,
    pub pool: UnlabeledPool,
    pub oracle: LabelOracle,
    pub next_round: usize,
}

impl LoopState {
    /// Fresh state: seed set drawn from the train split.
    pub fn initialize(dataset: &Dataset, cfg: &LoopConfig) -> Result<LoopState> {
        let mut rng = derive(cfg.rng_seed, &[stream::SEED_SETUP]);
        let (labeled, pool, oracle) = build_seed_set(
            dataset.train.clone(),
            &cfg.seed_composition,
            dataset.num_classes,
            &mut rng,
        )?;
        Ok(LoopState {
            model: None,
            labeled,
            pool,
            oracle,
            next_round: 0,
        })
    }

    /// Reconstruct state after `completed` persisted rounds by replaying their
    /// acquisitions; no training or scoring reruns. `model` is only needed to
    /// continue a `retrain_mode = continue` run.
    pub fn resume(
        dataset: &Dataset,
        cfg: &LoopConfig,
        completed: &[RoundReport],
        model: Option<ModelState>,
    ) -> Result<LoopState> {
        let mut state = LoopState::initialize(dataset, cfg)?;
        for report in completed {
            if report.round != state.next_round {
                return Err(Error::data(format!(
                    "resume expected round {} next, report says {}",
                    state.next_round, report.round
                )));
            }
            if report.labeled_size != state.labeled.len() || report.pool_size != state.pool.len() {
                return Err(Error::data(format!(
                    "resume mismatch at round {}: report has {}/{} labeled/pool, replay has {}/{}",
                    report.round,
                    report.labeled_size,
                    report.pool_size,
                    state.labeled.len(),
                    state.pool.len()
                )));
            }
            let moved = state.pool.take(&report.acquired_ids)?;
            for ex in moved {
                let label = state.oracle.reveal(&ex.id)?;
                state.labeled.push(Example {
                    id: ex.id,
                    image: ex.image,
                    label,
                });
            }
            state.next_round += 1;
        }
        state.model = model;
        Ok(state)
    }
}

/// One round: train, evaluate on eval and test, then (unless this is the
/// final round or acquisition is off) score the pool, select, reveal, move.
pub fn run_round(
    state: &mut LoopState,
    dataset: &Dataset,
    ctx: &TrainContext<'_>,
    cfg: &LoopConfig,
    observer: &mut dyn ExperimentObserver,
) -> Result<RoundReport> {
    let round = state.next_round;
    let started = Instant::now();
    let labeled_size = state.labeled.len();
    let pool_size = state.pool.len();

    let model_in = match cfg.retrain_mode {
        RetrainMode::Continue => state.model.take(),
        RetrainMode::FromScratch => None,
    };
    let (model, curves) = train_round(model_in, &state.labeled, ctx, cfg, round)?;
    observer.on_model(round, &model)?;

    let eval_refs: Vec<&Example> = dataset.eval.iter().collect();
    let test_refs: Vec<&Example> = dataset.test.iter().collect();
    let eval_metrics = evaluate(&model, &eval_refs, ctx.stats, cfg.batch_size)?;
    let test_metrics = evaluate(&model, &test_refs, ctx.stats, cfg.batch_size)?;

    let acquiring = round < cfg.rounds && cfg.acquisition.function().is_some();
    let mut acquired_ids = Vec::new();
    let mut pool_shortfall = false;
    if acquiring {
        pool_shortfall = state.pool.len() < cfg.query_size;
        if !state.pool.is_empty() {
            let function = cfg.acquisition.function().expect("checked above");
            let round_tag = round as u64;
            let images: Vec<&Tensor> = state.pool.examples().iter().map(|e| &e.image).collect();
            let batch = standardized_batch(&images, ctx.stats)?;
            let ids: Vec<ExampleId> = state.pool.examples().iter().map(|e| e.id.clone()).collect();
            let samples = mc_predict(
                &model,
                &batch,
                &ids,
                cfg.mc_passes,
                &mut derive(cfg.rng_seed, &[stream::MC, round_tag]),
            )?;
            let mut acq_rng = derive(cfg.rng_seed, &[stream::ACQ, round_tag]);
            let scores = score_pool(function, &samples, &mut acq_rng);
            observer.on_scores(round, &scores)?;

            let selection = SelectionConfig {
                k: cfg.query_size.min(state.pool.len()),
                direction: cfg.direction,
            };
            acquired_ids = select_top_k(&scores, &selection)?;
            let moved = state.pool.take(&acquired_ids)?;
            for ex in moved {
                let label = state.oracle.reveal(&ex.id)?;
                state.labeled.push(Example {
                    id: ex.id,
                    image: ex.image,
                    label,
                });
            }
        }
    }

    state.model = Some(model);
    state.next_round += 1;

    let report = RoundReport {
        round,
        labeled_size,
        pool_size,
        train_loss: *curves.epoch_losses.last().expect("at least one epoch"),
        eval_loss: eval_metrics.loss,
        eval_accuracy: eval_metrics.accuracy,
        test_loss: test_metrics.loss,
        test_accuracy: test_metrics.accuracy,
        confusion: test_metrics.confusion,
        acquired_ids,
        pool_shortfall,
        elapsed_secs: started.elapsed().as_secs_f64(),
    };
    observer.on_report(&report)?;
    Ok(report)
}

fn check_context(dataset: &Dataset, ctx: &TrainContext<'_>) -> Result<()> {
    ctx.arch.validate()?;
    ctx.preprocess.validate()?;
    if dataset.eval.is_empty() || dataset.test.is_empty() {
        return Err(Error::data("experiment needs non-empty eval and test splits"));
    }
    if ctx.arch.num_classes != dataset.num_classes {
        return Err(Error::config(format!(
            "architecture has {} classes, dataset has {}",
            ctx.arch.num_classes, dataset.num_classes
        )));
    }
    for (name, size) in [
        ("architecture image_size", ctx.arch.image_size),
        ("preprocess target_size", ctx.preprocess.target_size),
    ] {
        if size != dataset.image_size {
            return Err(Error::config(format!(
                "{name} {size} does not match dataset image size {}",
                dataset.image_size
            )));
        }
    }
    Ok(())
}

/// Run rounds `state.next_round..=cfg.rounds`, returning their reports.
pub fn run_rounds_from(
    mut state: LoopState,
    dataset: &Dataset,
    ctx: &TrainContext<'_>,
    cfg: &LoopConfig,
    observer: &mut dyn ExperimentObserver,
) -> Result<(Vec<RoundReport>, LoopState)> {
    let mut reports = Vec::with_capacity(cfg.rounds + 1 - state.next_round);
    while state.next_round <= cfg.rounds {
        reports.push(run_round(&mut state, dataset, ctx, cfg, observer)?);
    }
    Ok((reports, state))
}

/// The full protocol: rounds 0..=R, acquiring in all but the last. Reports
/// stream through the observer as they complete.
pub fn run_experiment(
    dataset: &Dataset,
    ctx: &TrainContext<'_>,
    cfg: &LoopConfig,
    observer: &mut dyn ExperimentObserver,
) -> Result<Vec<RoundReport>> {
    check_context(dataset, ctx)?;
    cfg.validate(&Dataset::class_histogram(&dataset.train, dataset.num_classes))?;
    let state = LoopState::initialize(dataset, cfg)?;
    let (reports, _state) = run_rounds_from(state, dataset, ctx, cfg, observer)?;
    Ok(reports)
}
