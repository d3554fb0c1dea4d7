//! Loss, accuracy, confusion counts, and the ablation summary grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{standardized_batch, ChannelStats, Example};
use crate::error::{Error, Result};
use crate::model::{forward_eval, ModelState};
use crate::ops::loss::{cross_entropy_loss, one_hot};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.num_classes + predicted] += 1;
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.num_classes).map(|c| self.count(c, c)).sum();
        diag as f64 / self.total() as f64
    }

    /// Diagonal over row sum; `None` when a class has no true examples.
    pub fn per_class_recall(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|c| {
                let row: u64 = (0..self.num_classes).map(|p| self.count(c, p)).sum();
                (row > 0).then(|| self.count(c, c) as f64 / row as f64)
            })
            .collect()
    }
}

/// Long-format `true,pred,count` CSV, all cells including zeros.
pub fn write_confusion_csv(path: &Path, matrix: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["true", "pred", "count"])?;
    for t in 0..matrix.num_classes() {
        for p in 0..matrix.num_classes() {
            w.write_record([t.to_string(), p.to_string(), matrix.count(t, p).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Index of the largest probability; exact ties go to the lowest class.
pub fn argmax_class(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Dropout-free forward pass over a whole split in batches. Loss is the
/// per-example mean cross-entropy; accuracy comes from the confusion counts.
pub fn evaluate(
    model: &ModelState,
    examples: &[&Example],
    stats: &ChannelStats,
    batch_size: usize,
) -> Result<EvalMetrics> {
    if examples.is_empty() {
        return Err(Error::data("cannot evaluate an empty split"));
    }
    if batch_size == 0 {
        return Err(Error::config("evaluation batch_size must be positive"));
    }
    let c = model.config.num_classes;
    let mut confusion = ConfusionMatrix::new(c);
    let mut loss_sum = 0.0;
    for chunk in examples.chunks(batch_size) {
        let images: Vec<&crate::tensor::Tensor> = chunk.iter().map(|e| &e.image).collect();
        let batch = standardized_batch(&images, stats)?;
        let probs = forward_eval(model, &batch)?;
        let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();
        let targets = one_hot(&labels, c)?;
        loss_sum += cross_entropy_loss(&probs, &targets)? * chunk.len() as f64;
        for (i, ex) in chunk.iter().enumerate() {
            let row = &probs.data()[i * c..(i + 1) * c];
            confusion.record(ex.label, argmax_class(row));
        }
    }
    Ok(EvalMetrics {
        loss: loss_sum / examples.len() as f64,
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// One grid cell of the query-size ablation: final-round test metrics for a
/// (method, query size) run. The method is a display label so the
/// no-acquisition baseline fits the grid; repeated cells are seed replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub method: String,
    pub query_size: usize,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

fn format_cell(values: &[f64]) -> String {
    match values {
        [] => "NA".to_string(),
        [v] => format!("{v:.4}"),
        many => {
            let n = many.len() as f64;
            let mean = many.iter().sum::<f64>() / n;
            let var = many.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            format!("{mean:.4} ± {:.4}", var.sqrt())
        }
    }
}

/// Method × query-size grid as CSV text. Columns are the given query sizes
/// sorted descending; each method contributes a loss row and an accuracy row.
/// Missing cells print NA; repeated cells print mean ± sample std.
pub fn summarize_ablation(cells: &[AblationCell], query_sizes: &[usize]) -> String {
    let mut sizes: Vec<usize> = query_sizes.to_vec();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.dedup();

    let mut methods: Vec<&str> = Vec::new();
    for cell in cells {
        if !methods.contains(&cell.method.as_str()) {
            methods.push(&cell.method);
        }
    }

    let mut out = String::from("method,metric");
    for q in &sizes {
        out.push_str(&format!(",q{q}"));
    }
    out.push('\n');
    for method in methods {
        for (metric, pick) in [
            ("loss", &(|c: &AblationCell| c.test_loss) as &dyn Fn(&AblationCell) -> f64),
            ("accuracy", &|c: &AblationCell| c.test_accuracy),
        ] {
            out.push_str(&format!("{method},{metric}"));
            for &q in &sizes {
                let values: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.method == method && c.query_size == q)
                    .map(pick)
                    .collect();
                out.push(',');
                out.push_str(&format_cell(&values));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::FunctionId;
    use crate::data::ExampleId;
    use crate::model::{build_model, ArchitectureConfig};
    use crate::rng::derive;
    use crate::tensor::Tensor;
    use approx::assert_abs_diff_eq;

    fn flat_stats() -> ChannelStats {
        ChannelStats {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    fn small_config() -> ArchitectureConfig {
        ArchitectureConfig {
            num_filters: 2,
            kernel_size: 2,
            dense_size: 4,
            image_size: 8,
            ..ArchitectureConfig::default()
        }
    }

    /// All parameters zero: logits are constant, probs uniform, argmax class 0.
    fn constant_model() -> ModelState {
        let mut model = build_model(&small_config(), &mut derive(0, &[1])).unwrap();
        for p in model.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        model
    }

    fn split(counts: &[usize]) -> Vec<Example> {
        let mut out = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(Example {
                    id: ExampleId(format!("c{class}-{i}")),
                    image: Tensor::zeros(&[3, 8, 8]),
                    label: class,
                });
            }
        }
        out
    }

    #[test]
    fn perfect_predictions_fill_the_diagonal() {
        let mut m = ConfusionMatrix::new(3);
        for c in 0..3 {
            for _ in 0..4 {
                m.record(c, c);
            }
        }
        assert_eq!(m.total(), 12);
        assert_abs_diff_eq!(m.accuracy(), 1.0, epsilon = 0.0);
        assert_eq!(m.count(0, 1), 0);
        assert_eq!(m.per_class_recall(), vec![Some(1.0); 3]);
    }

    #[test]
    fn constant_predictor_on_imbalanced_split() {
        // 280 class-0 plus 70 class-1, everything predicted class 0: accuracy
        // 0.8 with the minority entirely in the bottom-left cell.
        let model = constant_model();
        let examples = split(&[280, 70]);
        let refs: Vec<&Example> = examples.iter().collect();
        let m = evaluate(&model, &refs, &flat_stats(), 32).unwrap();
        assert_abs_diff_eq!(m.accuracy, 0.8, epsilon = 1e-12);
        assert_eq!(m.confusion.count(0, 0), 280);
        assert_eq!(m.confusion.count(1, 0), 70);
        assert_eq!(m.confusion.count(1, 1), 0);
        assert_eq!(m.confusion.total(), 350);
        let recall = m.confusion.per_class_recall();
        assert_abs_diff_eq!(recall[0].unwrap(), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(recall[1].unwrap(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn uniform_model_loss_is_ln_two() {
        let model = constant_model();
        let examples = split(&[5, 5]);
        let refs: Vec<&Example> = examples.iter().collect();
        let m = evaluate(&model, &refs, &flat_stats(), 4).unwrap();
        assert_abs_diff_eq!(m.loss, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn matrix_accuracy_matches_online_accuracy_exactly() {
        let model = build_model(&small_config(), &mut derive(7, &[2])).unwrap();
        let mut rng = derive(7, &[3]);
        let examples: Vec<Example> = (0..23)
            .map(|i| {
                use rand::Rng;
                let mut img = Tensor::zeros(&[3, 8, 8]);
                img.data_mut().iter_mut().for_each(|v| *v = rng.random());
                Example {
                    id: ExampleId(format!("r{i}")),
                    image: img,
                    label: i % 2,
                }
            })
            .collect();
        let refs: Vec<&Example> = examples.iter().collect();
        let a = evaluate(&model, &refs, &flat_stats(), 7).unwrap();
        let b = evaluate(&model, &refs, &flat_stats(), 23).unwrap();
        assert_eq!(a.confusion, b.confusion, "batch size must not change counts");
        assert_abs_diff_eq!(a.loss, b.loss, epsilon = 1e-12);
        assert_abs_diff_eq!(a.accuracy, a.confusion.accuracy(), epsilon = 0.0);
        assert_eq!(a.confusion.total(), 23);
    }

    #[test]
    fn empty_split_is_rejected() {
        let model = constant_model();
        assert!(evaluate(&model, &[], &flat_stats(), 8).is_err());
    }

    #[test]
    fn argmax_ties_take_the_lowest_class() {
        assert_eq!(argmax_class(&[0.5, 0.5]), 0);
        assert_eq!(argmax_class(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax_class(&[0.1, 0.9]), 1);
    }

    fn cell(function: FunctionId, q: usize, loss: f64, acc: f64) -> AblationCell {
        AblationCell {
            method: function.to_string(),
            query_size: q,
            test_loss: loss,
            test_accuracy: acc,
        }
    }

    #[test]
    fn single_cell_grid() {
        let grid = summarize_ablation(&[cell(FunctionId::Bald, 100, 0.25, 0.8)], &[100]);
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines[0], "method,metric,q100");
        assert_eq!(lines[1], "bald,loss,0.2500");
        assert_eq!(lines[2], "bald,accuracy,0.8000");
    }

    #[test]
    fn full_grid_has_three_methods_by_seven_sizes() {
        let sizes = [115, 100, 90, 80, 70, 60, 50];
        let mut cells = Vec::new();
        for f in [FunctionId::MaxEntropy, FunctionId::MeanStd, FunctionId::Bald] {
            for &q in &sizes {
                cells.push(cell(f, q, 0.3, 0.75));
            }
        }
        let grid = summarize_ablation(&cells, &sizes);
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines[0], "method,metric,q115,q100,q90,q80,q70,q60,q50");
        assert!(lines[1].starts_with("max_entropy,loss,"));
        assert_eq!(lines[1].split(',').count(), 2 + 7);
    }

    #[test]
    fn missing_cells_become_na_and_duplicates_aggregate() {
        let cells = vec![
            cell(FunctionId::Bald, 100, 0.2, 0.8),
            cell(FunctionId::Bald, 100, 0.4, 0.9),
        ];
        let grid = summarize_ablation(&cells, &[100, 50]);
        let lines: Vec<&str> = grid.lines().collect();
        // Sample std of {0.2, 0.4} is 0.1414..., of {0.8, 0.9} is 0.0707...
        assert_eq!(lines[1], "bald,loss,0.3000 ± 0.1414,NA");
        assert_eq!(lines[2], "bald,accuracy,0.8500 ± 0.0707,NA");
    }

    #[test]
    fn confusion_csv_lists_every_cell() {
        let mut m = ConfusionMatrix::new(2);
        m.record(0, 0);
        m.record(1, 0);
        m.record(1, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("confusion.csv");
        write_confusion_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "true,pred,count\n0,0,1\n0,1,0\n1,0,2\n1,1,0\n");
    }

    #[test]
    fn recall_is_none_for_absent_classes() {
        let mut m = ConfusionMatrix::new(2);
        m.record(0, 0);
        assert_eq!(m.per_class_recall(), vec![Some(1.0), None]);
    }
}
