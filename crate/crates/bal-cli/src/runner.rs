//! Experiment execution and artifact layout.
//!
//! Every cell owns `<out>/<name>/<function>/<variant>/` with config.resolved,
//! reports.jsonl (appended as rounds finish, so a crashed run resumes),
//! timings.jsonl, summary.csv, and optional checkpoints/ and scores/.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use bal_core::acquisition::{write_scores_csv, AcquisitionScore, Direction};
use bal_core::al::{
    run_rounds_from, AcquisitionChoice, ExperimentObserver, LoopConfig, LoopState, RetrainMode,
    RoundReport, TrainContext,
};
use bal_core::data::synthetic::generate_synthetic;
use bal_core::data::{load_dataset, Dataset};
use bal_core::metrics::{summarize_ablation, AblationCell};
use bal_core::model::{load_checkpoint, save_checkpoint, ModelState};
use bal_core::rng::{derive, stream};
use bal_core::{Error, Result};

use crate::config::{DataSource, Resolved};

pub fn load_or_generate_dataset(resolved: &Resolved) -> Result<Dataset> {
    match resolved.data.source {
        DataSource::Synthetic => {
            let spec = resolved.synthetic_spec();
            generate_synthetic(&spec, &mut derive(resolved.rng_seed, &[stream::SYNTH]))
        }
        DataSource::Manifest => {
            let path = resolved.data.manifest.as_deref().expect("checked at resolve");
            load_dataset(Path::new(path), resolved.data.image_size)
        }
    }
}

pub fn variant_dir_name(query_size: usize, direction: Direction) -> String {
    let dir = match direction {
        Direction::MostUncertain => "most",
        Direction::LeastUncertain => "least",
    };
    format!("k{query_size}_{dir}")
}

/// One grid cell: a full experiment in its own directory.
#[derive(Debug, Clone)]
pub struct Cell {
    pub dir: PathBuf,
    pub label: String,
    pub cfg: LoopConfig,
    pub resolved_toml: String,
}

impl Cell {
    /// Cell directory and variant-adjusted resolved config for one
    /// (function, query size, direction) combination.
    pub fn plan(resolved: &Resolved, choice: AcquisitionChoice, query_size: usize, direction: Direction) -> Cell {
        let label = choice.to_string();
        let dir = resolved
            .out_root
            .join(&resolved.name)
            .join(&label)
            .join(variant_dir_name(query_size, direction));
        let mut cfg = resolved.loop_cfg.clone();
        cfg.acquisition = choice;
        cfg.query_size = query_size;
        cfg.direction = direction;
        let mut file = resolved.file.clone();
        file.acquisition.function = label.clone();
        file.acquisition.direction = direction;
        file.loop_.query_size = query_size;
        let resolved_toml = toml::to_string(&file).expect("cell config serialize");
        Cell {
            dir,
            label,
            cfg,
            resolved_toml,
        }
    }
}

/// Streams artifacts to a cell directory as the experiment progresses.
struct RunSink {
    reports: fs::File,
    timings: fs::File,
    scores_dir: Option<PathBuf>,
    checkpoints_dir: Option<PathBuf>,
}

impl RunSink {
    fn open(dir: &Path, checkpoints: bool, scores: bool) -> Result<RunSink> {
        let append = |name: &str| {
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(name))
        };
        let scores_dir = scores.then(|| dir.join("scores"));
        let checkpoints_dir = checkpoints.then(|| dir.join("checkpoints"));
        for d in scores_dir.iter().chain(&checkpoints_dir) {
            fs::create_dir_all(d)?;
        }
        Ok(RunSink {
            reports: append("reports.jsonl")?,
            timings: append("timings.jsonl")?,
            scores_dir,
            checkpoints_dir,
        })
    }
}

impl ExperimentObserver for RunSink {
    fn on_report(&mut self, report: &RoundReport) -> Result<()> {
        let line = serde_json::to_string(report)?;
        writeln!(self.reports, "{line}")?;
        self.reports.flush()?;
        writeln!(
            self.timings,
            "{}",
            serde_json::json!({ "round": report.round, "elapsed_secs": report.elapsed_secs })
        )?;
        self.timings.flush()?;
        Ok(())
    }

    fn on_scores(&mut self, round: usize, scores: &[AcquisitionScore]) -> Result<()> {
        if let Some(dir) = &self.scores_dir {
            write_scores_csv(&dir.join(format!("round_{round}.csv")), scores)?;
        }
        Ok(())
    }

    fn on_model(&mut self, round: usize, model: &ModelState) -> Result<()> {
        if let Some(dir) = &self.checkpoints_dir {
            save_checkpoint(&dir.join(format!("round_{round}.balm")), model)?;
        }
        Ok(())
    }
}

/// Parse persisted reports, listing every corrupt line on stderr before
/// failing with the first parse error.
pub fn read_reports(path: &Path) -> Result<Vec<RoundReport>> {
    let text = fs::read_to_string(path)?;
    let mut reports = Vec::new();
    let mut first_error: Option<Error> = None;
    let mut bad = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RoundReport>(line) {
            Ok(r) => reports.push(r),
            Err(e) => {
                eprintln!("{}: line {}: {e}", path.display(), i + 1);
                bad += 1;
                if first_error.is_none() {
                    first_error = Some(e.into());
                }
            }
        }
    }
    if let Some(e) = first_error {
        eprintln!("{}: {bad} corrupt record(s)", path.display());
        return Err(e);
    }
    Ok(reports)
}

fn write_summary(dir: &Path, label: &str, query_size: usize, reports: &[RoundReport]) -> Result<()> {
    let last = reports.last().expect("at least one report");
    let cells = [AblationCell {
        method: label.to_string(),
        query_size,
        test_loss: last.test_loss,
        test_accuracy: last.test_accuracy,
    }];
    fs::write(dir.join("summary.csv"), summarize_ablation(&cells, &[query_size]))?;
    Ok(())
}

/// Execute one cell start to finish, resuming from any persisted reports.
/// Returns the full report list (persisted + fresh).
pub fn run_cell(cell: &Cell, dataset: &Dataset, resolved: &Resolved) -> Result<Vec<RoundReport>> {
    fs::create_dir_all(&cell.dir)?;

    let resolved_path = cell.dir.join("config.resolved");
    if resolved_path.exists() {
        let existing = fs::read_to_string(&resolved_path)?;
        if existing != cell.resolved_toml {
            return Err(Error::config(format!(
                "{} holds a different configuration; use a fresh output directory",
                cell.dir.display()
            )));
        }
    } else {
        fs::write(&resolved_path, &cell.resolved_toml)?;
    }

    let reports_path = cell.dir.join("reports.jsonl");
    let completed = if reports_path.exists() {
        read_reports(&reports_path)?
    } else {
        Vec::new()
    };

    let arch = resolved.architecture(dataset.num_classes);
    let pre = resolved.preprocess();
    let ctx = TrainContext {
        arch: &arch,
        preprocess: &pre,
        stats: &dataset.stats,
    };

    let total = cell.cfg.rounds + 1;
    if completed.len() > total {
        return Err(Error::config(format!(
            "{} holds {} reports for a {}-round config",
            cell.dir.display(),
            completed.len(),
            cell.cfg.rounds
        )));
    }
    let all = if completed.len() == total {
        completed
    } else {
        let model = match (cell.cfg.retrain_mode, completed.is_empty()) {
            (RetrainMode::Continue, false) => {
                let round = completed.len() - 1;
                let path = cell.dir.join(format!("checkpoints/round_{round}.balm"));
                Some(load_checkpoint(&path).map_err(|e| {
                    Error::config(format!(
                        "cannot resume continue-mode run without {}: {e}",
                        path.display()
                    ))
                })?)
            }
            _ => None,
        };
        let state = LoopState::resume(dataset, &cell.cfg, &completed, model)?;
        let mut sink = RunSink::open(&cell.dir, resolved.checkpoints, resolved.scores)?;
        let (fresh, state) = run_rounds_from(state, dataset, &ctx, &cell.cfg, &mut sink)?;
        debug_assert_eq!(state.oracle.illicit_reads(), 0);
        let mut all = completed;
        all.extend(fresh);
        all
    };

    write_summary(&cell.dir, &cell.label, cell.cfg.query_size, &all)?;
    Ok(all)
}

/// Run cells, at most `jobs` at a time on scoped threads. Cell directories
/// are disjoint, so parallel cells never share files.
pub fn run_cells(
    cells: &[Cell],
    dataset: &Dataset,
    resolved: &Resolved,
    jobs: usize,
) -> Result<Vec<Vec<RoundReport>>> {
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<Vec<RoundReport>>>> = Vec::new();
    results.resize_with(cells.len(), || None);
    for (chunk_idx, chunk) in cells.chunks(jobs).enumerate() {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|cell| scope.spawn(move || run_cell(cell, dataset, resolved)))
                .collect();
            for (i, handle) in handles.into_iter().enumerate() {
                let slot = chunk_idx * jobs + i;
                results[slot] = Some(match handle.join() {
                    Ok(r) => r,
                    Err(_) => Err(Error::Io(std::io::Error::other("worker thread panicked"))),
                });
            }
        });
    }
    results
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

/// Write the aligned per-round series for a set of labeled runs.
pub fn write_series_csv(path: &Path, runs: &[(String, Vec<RoundReport>)]) -> Result<()> {
    let mut out = String::from(
        "function,round,labeled_size,train_loss,eval_loss,eval_accuracy,test_loss,test_accuracy\n",
    );
    for (label, reports) in runs {
        for r in reports {
            out.push_str(&format!(
                "{label},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.round, r.labeled_size, r.train_loss, r.eval_loss, r.eval_accuracy, r.test_loss, r.test_accuracy
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn experiment_root(resolved: &Resolved) -> PathBuf {
    resolved.out_root.join(&resolved.name)
}

fn write_root_config(resolved: &Resolved) -> Result<PathBuf> {
    let root = experiment_root(resolved);
    fs::create_dir_all(&root)?;
    fs::write(root.join("config.resolved"), resolved.resolved_toml())?;
    Ok(root)
}

pub fn cmd_run(resolved: &Resolved) -> Result<()> {
    let dataset = load_or_generate_dataset(resolved)?;
    let cell = Cell::plan(
        resolved,
        resolved.loop_cfg.acquisition,
        resolved.loop_cfg.query_size,
        resolved.loop_cfg.direction,
    );
    let reports = run_cell(&cell, &dataset, resolved)?;
    let last = reports.last().expect("at least one report");
    println!(
        "run {}: {} rounds, final |labeled|={}, test accuracy {:.4}, test loss {:.4}",
        cell.dir.display(),
        reports.len(),
        last.labeled_size,
        last.test_accuracy,
        last.test_loss
    );
    Ok(())
}

pub fn cmd_compare(resolved: &Resolved, functions: &[String], jobs: usize) -> Result<()> {
    if functions.len() < 2 {
        return Err(Error::config("compare needs at least two functions"));
    }
    let mut choices = Vec::with_capacity(functions.len());
    for f in functions {
        let choice: AcquisitionChoice = f.parse()?;
        if choices.contains(&choice) {
            return Err(Error::config(format!("duplicate function {f:?}")));
        }
        choices.push(choice);
    }

    let dataset = load_or_generate_dataset(resolved)?;
    let cells: Vec<Cell> = choices
        .iter()
        .map(|&c| Cell::plan(resolved, c, resolved.loop_cfg.query_size, resolved.loop_cfg.direction))
        .collect();
    let reports = run_cells(&cells, &dataset, resolved, jobs)?;

    let root = write_root_config(resolved)?;
    let runs: Vec<(String, Vec<RoundReport>)> = cells
        .iter()
        .zip(reports)
        .map(|(c, r)| (c.label.clone(), r))
        .collect();
    write_series_csv(&root.join("series.csv"), &runs)?;

    let grid: Vec<AblationCell> = runs
        .iter()
        .map(|(label, reports)| {
            let last = reports.last().expect("non-empty");
            AblationCell {
                method: label.clone(),
                query_size: resolved.loop_cfg.query_size,
                test_loss: last.test_loss,
                test_accuracy: last.test_accuracy,
            }
        })
        .collect();
    fs::write(
        root.join("summary.csv"),
        summarize_ablation(&grid, &[resolved.loop_cfg.query_size]),
    )?;
    println!("compare {}: {} variants, series.csv and summary.csv written", root.display(), runs.len());
    Ok(())
}

pub enum AblateAxis {
    QuerySizes(Vec<usize>),
    Direction,
}

pub fn cmd_ablate(
    resolved: &Resolved,
    axis: &AblateAxis,
    functions: &[String],
    jobs: usize,
) -> Result<()> {
    let mut choices = Vec::new();
    for f in functions {
        let choice: AcquisitionChoice = f.parse()?;
        if choice.function().is_none() {
            return Err(Error::config("the no-acquisition baseline has no ablation axis"));
        }
        if choices.contains(&choice) {
            return Err(Error::config(format!("duplicate function {f:?}")));
        }
        choices.push(choice);
    }
    if choices.is_empty() {
        return Err(Error::config("ablate needs at least one function"));
    }

    let dataset = load_or_generate_dataset(resolved)?;
    match axis {
        AblateAxis::QuerySizes(sizes) => {
            if sizes.is_empty() {
                return Err(Error::config("query-size ablation needs a non-empty list"));
            }
            if sizes.contains(&0) {
                return Err(Error::config("query sizes must be at least 1"));
            }
            let cells: Vec<Cell> = choices
                .iter()
                .flat_map(|&c| {
                    sizes
                        .iter()
                        .map(move |&q| (c, q))
                })
                .map(|(c, q)| Cell::plan(resolved, c, q, resolved.loop_cfg.direction))
                .collect();
            let reports = run_cells(&cells, &dataset, resolved, jobs)?;
            let grid: Vec<AblationCell> = cells
                .iter()
                .zip(&reports)
                .map(|(cell, r)| {
                    let last = r.last().expect("non-empty");
                    AblationCell {
                        method: cell.label.clone(),
                        query_size: cell.cfg.query_size,
                        test_loss: last.test_loss,
                        test_accuracy: last.test_accuracy,
                    }
                })
                .collect();
            let root = write_root_config(resolved)?;
            fs::write(root.join("summary.csv"), summarize_ablation(&grid, sizes))?;
            println!(
                "ablate {}: {} cells ({} functions x {} query sizes), summary.csv written",
                root.display(),
                cells.len(),
                choices.len(),
                sizes.len()
            );
        }
        AblateAxis::Direction => {
            let q = resolved.loop_cfg.query_size;
            let cells: Vec<Cell> = choices
                .iter()
                .flat_map(|&c| {
                    [Direction::MostUncertain, Direction::LeastUncertain]
                        .into_iter()
                        .map(move |d| (c, d))
                })
                .map(|(c, d)| Cell::plan(resolved, c, q, d))
                .collect();
            let reports = run_cells(&cells, &dataset, resolved, jobs)?;
            let mut out = String::from("method,metric,most_uncertain,least_uncertain\n");
            for (ci, choice) in choices.iter().enumerate() {
                let most = reports[ci * 2].last().expect("non-empty");
                let least = reports[ci * 2 + 1].last().expect("non-empty");
                out.push_str(&format!(
                    "{choice},loss,{:.4},{:.4}\n{choice},accuracy,{:.4},{:.4}\n",
                    most.test_loss, least.test_loss, most.test_accuracy, least.test_accuracy
                ));
            }
            let root = write_root_config(resolved)?;
            fs::write(root.join("direction_summary.csv"), out)?;
            println!(
                "ablate {}: {} cells ({} functions x 2 directions), direction_summary.csv written",
                root.display(),
                cells.len(),
                choices.len()
            );
        }
    }
    Ok(())
}

pub fn cmd_synth(resolved: &Resolved) -> Result<()> {
    let spec = resolved.synthetic_spec();
    let dataset = generate_synthetic(&spec, &mut derive(resolved.rng_seed, &[stream::SYNTH]))?;
    let dir = experiment_root(resolved).join("dataset");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.resolved"), resolved.resolved_toml())?;
    let manifest = bal_core::data::export_dataset(&dataset, &dir)?;
    println!(
        "synth {}: {} train / {} eval / {} test examples",
        manifest.display(),
        dataset.train.len(),
        dataset.eval.len(),
        dataset.test.len()
    );
    Ok(())
}
