//! Procedural blob images for end-to-end runs without an external corpus.
//!
//! Each class renders a soft-edged disc whose radius grows with the class
//! index; difficulty widens the radius jitter and adds pixel noise, moving the
//! classes from linearly separable toward overlapping.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, ExampleId};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub image_size: usize,
    /// 0.0 = cleanly separable, 1.0 = heavy jitter and noise.
    pub difficulty: f64,
    /// Per-class example counts for each split.
    pub train_counts: Vec<usize>,
    pub eval_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 2,
            image_size: 32,
            difficulty: 0.5,
            train_counts: vec![300, 300],
            eval_counts: vec![50, 50],
            test_counts: vec![100, 100],
        }
    }
}

impl SyntheticSpec {
    /// Equal counts in every class.
    pub fn balanced(num_classes: usize, image_size: usize, difficulty: f64, per_class: [usize; 3]) -> Self {
        SyntheticSpec {
            num_classes,
            image_size,
            difficulty,
            train_counts: vec![per_class[0]; num_classes],
            eval_counts: vec![per_class[1]; num_classes],
            test_counts: vec![per_class[2]; num_classes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "synthetic num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.image_size < 8 {
            return Err(Error::config(format!(
                "synthetic image_size must be at least 8, got {}",
                self.image_size
            )));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::config(format!(
                "synthetic difficulty must lie in [0, 1], got {}",
                self.difficulty
            )));
        }
        for (name, counts) in [
            ("train_counts", &self.train_counts),
            ("eval_counts", &self.eval_counts),
            ("test_counts", &self.test_counts),
        ] {
            if counts.len() != self.num_classes {
                return Err(Error::config(format!(
                    "synthetic {name} has {} entries for {} classes",
                    counts.len(),
                    self.num_classes
                )));
            }
        }
        if self.train_counts.iter().sum::<usize>() == 0 {
            return Err(Error::config("synthetic train split is empty"));
        }
        Ok(())
    }
}

const BACKGROUND: f64 = 0.15;
const FOREGROUND: [f64; 3] = [0.85, 0.65, 0.45];
const RADIUS_LO: f64 = 0.20;
const RADIUS_HI: f64 = 0.36;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One [3, S, S] image in [0, 1]. Per example the generator draws radius
/// jitter, center jitter, then S*S noise values, in that order.
fn render_example(spec: &SyntheticSpec, class: usize, rng: &mut Prng) -> Tensor {
    let s = spec.image_size;
    let sf = s as f64;
    let class_frac = class as f64 / (spec.num_classes - 1) as f64;
    let base_radius = sf * (RADIUS_LO + (RADIUS_HI - RADIUS_LO) * class_frac);

    let jitter = 0.04 + 0.10 * spec.difficulty;
    let radius = base_radius * (1.0 + (rng.random::<f64>() * 2.0 - 1.0) * jitter);
    let cx = sf / 2.0 + (rng.random::<f64>() * 2.0 - 1.0) * 0.06 * sf;
    let cy = sf / 2.0 + (rng.random::<f64>() * 2.0 - 1.0) * 0.06 * sf;
    let edge = sf * 0.07;
    let noise_amp = spec.difficulty * 0.25;

    let mut out = Tensor::zeros(&[3, s, s]);
    let data = out.data_mut();
    for y in 0..s {
        for x in 0..s {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let dist = (dx * dx + dy * dy).sqrt();
            let inside = sigmoid((radius - dist) / edge);
            let noise: f64 = if noise_amp > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            for ch in 0..3 {
                let v = BACKGROUND + (FOREGROUND[ch] - BACKGROUND) * inside + noise_amp * noise;
                data[(ch * s + y) * s + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Generate all three splits from the spec. Both the example set and the
/// draw order are fully determined by `rng`.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Prng) -> Result<Dataset> {
    spec.validate()?;
    let mut splits: [Vec<Example>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let plans = [
        ("train", &spec.train_counts),
        ("eval", &spec.eval_counts),
        ("test", &spec.test_counts),
    ];
    for (si, (split_name, counts)) in plans.into_iter().enumerate() {
        for (class, &count) in counts.iter().enumerate() {
            for i in 0..count {
                splits[si].push(Example {
                    id: ExampleId(format!("{split_name}-c{class}-{i:04}")),
                    image: render_example(spec, class, rng),
                    label: class,
                });
            }
        }
    }
    let [train, eval, test] = splits;
    let class_names = (0..spec.num_classes).map(|c| format!("class{c}")).collect();
    Dataset::from_splits(spec.num_classes, class_names, spec.image_size, train, eval, test)
}
