//! Config file schema, defaults, and resolution into core configs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bal_core::acquisition::Direction;
use bal_core::al::{AcquisitionChoice, LoopConfig, RetrainMode, SeedComposition};
use bal_core::data::preprocess::PreprocessConfig;
use bal_core::data::synthetic::SyntheticSpec;
use bal_core::model::ArchitectureConfig;
use bal_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: DataSource,
    /// Working image size: synthetic render size, manifest resize target.
    pub image_size: usize,
    /// Manifest CSV path (manifest source only), relative to the cwd.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub synthetic: SyntheticSection,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Synthetic,
            image_size: 32,
            manifest: None,
            synthetic: SyntheticSection::default(),
        }
    }
}

/// Synthetic generator knobs; the render size comes from `data.image_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub num_classes: usize,
    pub difficulty: f64,
    pub train_counts: Vec<usize>,
    pub eval_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            num_classes: 2,
            difficulty: 0.5,
            train_counts: vec![300, 300],
            eval_counts: vec![50, 50],
            test_counts: vec![100, 100],
        }
    }
}

/// Architecture knobs; class count and image size come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub in_channels: usize,
    pub num_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dense_size: usize,
    pub dropout1: f64,
    pub dropout2: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = ArchitectureConfig::default();
        ModelSection {
            in_channels: a.in_channels,
            num_filters: a.num_filters,
            kernel_size: a.kernel_size,
            pool_size: a.pool_size,
            dense_size: a.dense_size,
            dropout1: a.dropout1,
            dropout2: a.dropout2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub retrain_mode: RetrainMode,
    pub center_crop_fraction: f64,
    pub horizontal_flip_prob: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs_per_round: 100,
            batch_size: 8,
            learning_rate: 1e-4,
            retrain_mode: RetrainMode::FromScratch,
            center_crop_fraction: 0.875,
            horizontal_flip_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSection {
    /// Stratified seed size, used when `seed_per_class` is empty.
    pub seed_size: usize,
    /// Exact per-class seed counts; `[]` means stratify `seed_size` instead.
    pub seed_per_class: Vec<usize>,
    pub query_size: usize,
    pub rounds: usize,
    pub mc_passes: usize,
}

impl Default for LoopSection {
    fn default() -> Self {
        LoopSection {
            seed_size: 100,
            seed_per_class: vec![80, 20],
            query_size: 100,
            rounds: 5,
            mc_passes: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    /// One of max_entropy, mean_std, bald, random, none.
    pub function: String,
    pub direction: Direction,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        AcquisitionSection {
            function: "bald".to_string(),
            direction: Direction::MostUncertain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output root; empty means `$BAL_OUT` or `./runs`.
    pub dir: String,
    /// Experiment name; empty means the config file stem.
    pub name: String,
    pub checkpoints: bool,
    pub scores: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: String::new(),
            name: String::new(),
            checkpoints: true,
            scores: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Mandatory: no default, every run states its seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default, rename = "loop")]
    pub loop_: LoopSection,
    #[serde(default)]
    pub acquisition: AcquisitionSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("config {}: {e}", path.display())))
    }

    /// The defaults document printed by `bal defaults`.
    pub fn defaults_toml() -> String {
        let defaults = ConfigFile::default();
        let body = toml::to_string(&defaults).expect("defaults serialize");
        format!(
            "# Default configuration. rng_seed is mandatory and has no default.\n\
             # rng_seed = <u64>\n\
             #\n\
             # seed_per_class = [] stratifies seed_size across classes instead of\n\
             # using exact per-class counts.\n\n{body}"
        )
    }
}

/// Everything a command needs, with CLI overrides applied and every default
/// materialized.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub rng_seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub loop_cfg: LoopConfig,
    pub preprocess_aug: (f64, f64),
    pub out_root: PathBuf,
    pub name: String,
    pub checkpoints: bool,
    pub scores: bool,
    /// The materialized file, re-serialized as `config.resolved`.
    pub file: ConfigFile,
}

impl Resolved {
    pub fn resolved_toml(&self) -> String {
        toml::to_string(&self.file).expect("resolved config serialize")
    }

    /// Preprocess config for the resolved image size.
    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            target_size: self.data.image_size,
            center_crop_fraction: self.preprocess_aug.0,
            horizontal_flip_prob: self.preprocess_aug.1,
        }
    }

    /// Architecture for a dataset with `num_classes` classes.
    pub fn architecture(&self, num_classes: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            in_channels: self.model.in_channels,
            num_filters: self.model.num_filters,
            kernel_size: self.model.kernel_size,
            pool_size: self.model.pool_size,
            dense_size: self.model.dense_size,
            num_classes,
            dropout1: self.model.dropout1,
            dropout2: self.model.dropout2,
            image_size: self.data.image_size,
        }
    }

    /// Synthetic spec at the working image size.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let s = &self.data.synthetic;
        SyntheticSpec {
            num_classes: s.num_classes,
            image_size: self.data.image_size,
            difficulty: s.difficulty,
            train_counts: s.train_counts.clone(),
            eval_counts: s.eval_counts.clone(),
            test_counts: s.test_counts.clone(),
        }
    }
}

/// Apply CLI overrides and check cross-field rules. `config_path` names the
/// experiment when `[output].name` is empty.
pub fn resolve(
    mut file: ConfigFile,
    config_path: &Path,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<Resolved> {
    if let Some(seed) = seed_flag {
        file.rng_seed = Some(seed);
    }
    let Some(rng_seed) = file.rng_seed else {
        return Err(Error::config(
            "rng_seed is mandatory: set it in the config file or pass --seed",
        ));
    };

    if file.data.source == DataSource::Manifest && file.data.manifest.is_none() {
        return Err(Error::config("data.source = \"manifest\" needs data.manifest"));
    }

    let acquisition: AcquisitionChoice = file.acquisition.function.parse()?;
    let seed_composition = if file.loop_.seed_per_class.is_empty() {
        SeedComposition::Stratified {
            size: file.loop_.seed_size,
        }
    } else {
        SeedComposition::PerClass(file.loop_.seed_per_class.clone())
    };

    let loop_cfg = LoopConfig {
        seed_composition,
        query_size: file.loop_.query_size,
        rounds: file.loop_.rounds,
        direction: file.acquisition.direction,
        acquisition,
        epochs_per_round: file.training.epochs_per_round,
        batch_size: file.training.batch_size,
        learning_rate: file.training.learning_rate,
        mc_passes: file.loop_.mc_passes,
        retrain_mode: file.training.retrain_mode,
        rng_seed,
    };

    let out_root = if let Some(flag) = out_flag {
        flag.to_path_buf()
    } else if !file.output.dir.is_empty() {
        PathBuf::from(&file.output.dir)
    } else if let Ok(env_root) = std::env::var("BAL_OUT") {
        PathBuf::from(env_root)
    } else {
        PathBuf::from("runs")
    };

    let name = if file.output.name.is_empty() {
        config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".to_string())
    } else {
        file.output.name.clone()
    };

    // Materialize derived values back into the file copy so config.resolved
    // replays identically without flags or env vars.
    file.output.dir = out_root.to_string_lossy().into_owned();
    file.output.name = name.clone();

    Ok(Resolved {
        rng_seed,
        data: file.data.clone(),
        model: file.model.clone(),
        loop_cfg,
        preprocess_aug: (
            file.training.center_crop_fraction,
            file.training.horizontal_flip_prob,
        ),
        out_root,
        name,
        checkpoints: file.output.checkpoints,
        scores: file.output.scores,
        file,
    })
}
