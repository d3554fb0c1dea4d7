//! Whole-experiment flows driven through the public API alone, the way an
//! embedding application would: interrupt a run, persist what a harness would
//! persist (reports plus a checkpoint), and verify the continuation cannot be
//! told apart from a run that never stopped.

use bal_core::acquisition::{Direction, FunctionId};
use bal_core::al::{
    run_experiment, run_round, run_rounds_from, AcquisitionChoice, LoopConfig, LoopState,
    NullObserver, RetrainMode, RoundReport, SeedComposition, TrainContext,
};
use bal_core::data::preprocess::PreprocessConfig;
use bal_core::data::synthetic::{generate_synthetic, SyntheticSpec};
use bal_core::data::Dataset;
use bal_core::model::{load_checkpoint, save_checkpoint, ArchitectureConfig};
use bal_core::rng::{derive, stream};

fn dataset() -> Dataset {
    let spec = SyntheticSpec {
        num_classes: 2,
        image_size: 8,
        difficulty: 0.4,
        train_counts: vec![30, 30],
        eval_counts: vec![4, 4],
        test_counts: vec![6, 6],
    };
    generate_synthetic(&spec, &mut derive(21, &[stream::SYNTH])).unwrap()
}

fn arch() -> ArchitectureConfig {
    ArchitectureConfig {
        in_channels: 3,
        num_filters: 2,
        kernel_size: 2,
        pool_size: 2,
        dense_size: 4,
        num_classes: 2,
        dropout1: 0.25,
        dropout2: 0.5,
        image_size: 8,
    }
}

fn config(retrain_mode: RetrainMode) -> LoopConfig {
    LoopConfig {
        seed_composition: SeedComposition::PerClass(vec![8, 8]),
        query_size: 5,
        rounds: 3,
        direction: Direction::MostUncertain,
        acquisition: AcquisitionChoice::Function(FunctionId::Bald),
        epochs_per_round: 2,
        batch_size: 8,
        learning_rate: 1e-3,
        mc_passes: 2,
        retrain_mode,
        rng_seed: 77,
    }
}

fn as_json(reports: &[RoundReport]) -> Vec<String> {
    reports.iter().map(|r| serde_json::to_string(r).unwrap()).collect()
}

fn run_interrupted(dataset: &Dataset, ctx: &TrainContext<'_>, cfg: &LoopConfig) -> Vec<RoundReport> {
    // Two rounds, then a simulated crash: only the artifacts a harness keeps
    // survive into the second half.
    let mut state = LoopState::initialize(dataset, cfg).unwrap();
    let mut done = Vec::new();
    for _ in 0..2 {
        done.push(run_round(&mut state, dataset, ctx, cfg, &mut NullObserver).unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("round_1.balm");
    save_checkpoint(&ckpt, state.model.as_ref().unwrap()).unwrap();
    drop(state);

    let model = match cfg.retrain_mode {
        RetrainMode::Continue => Some(load_checkpoint(&ckpt).unwrap()),
        RetrainMode::FromScratch => None,
    };
    let resumed = LoopState::resume(dataset, cfg, &done, model).unwrap();
    let (rest, _state) = run_rounds_from(resumed, dataset, ctx, cfg, &mut NullObserver).unwrap();
    done.extend(rest);
    done
}

#[test]
fn interrupted_run_is_indistinguishable_from_straight_run() {
    let ds = dataset();
    let arch = arch();
    let preprocess = PreprocessConfig {
        target_size: 8,
        center_crop_fraction: 1.0,
        horizontal_flip_prob: 0.0,
    };
    let stats = ds.stats;
    let ctx = TrainContext { arch: &arch, preprocess: &preprocess, stats: &stats };

    for mode in [RetrainMode::FromScratch, RetrainMode::Continue] {
        let cfg = config(mode);
        let straight = run_experiment(&ds, &ctx, &cfg, &mut NullObserver).unwrap();
        assert_eq!(straight.len(), cfg.rounds + 1);
        let spliced = run_interrupted(&ds, &ctx, &cfg);
        assert_eq!(
            as_json(&straight),
            as_json(&spliced),
            "resume diverged under {mode:?}"
        );
    }
}
