use crate::num::RngStream;
use crate::Tensor;

use super::generate::{generate_scene, SceneConfig};
use super::SceneError;

/// Which downstream task the oracle answers for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Segmentation,
    /// Per-class pixel sets derived from the predicted label grid.
    DetectionProxy,
    Classification,
}

/// Oracle output: a label grid for segmentation/detection, or a class
/// distribution for classification.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskPrediction {
    Segmentation(Vec<u8>),
    ClassProbs(Vec<f64>),
}

/// Deterministic nearest-prototype segmenter: one mean color per class,
/// fitted once from generator samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOracle {
    pub kind: TaskKind,
    /// Per-class mean RGB, index m-1.
    pub prototypes: Vec<[f64; 3]>,
}

pub const ORACLE_FIT_SAMPLES: u64 = 256;

impl TaskOracle {
    /// Fits per-class mean-color prototypes from `ORACLE_FIT_SAMPLES`
    /// seeded generator draws.
    pub fn fit(kind: TaskKind, config: &SceneConfig, seed: u64) -> Result<Self, SceneError> {
        config.validate()?;
        let m = config.num_classes;
        let mut sums = vec![[0.0f64; 3]; m];
        let mut counts = vec![0u64; m];
        for k in 0..ORACLE_FIT_SAMPLES {
            let s = generate_scene(&mut RngStream::new(seed, k), config)?;
            let hw = s.height * s.width;
            for (p, &c) in s.labels.iter().enumerate() {
                let idx = (c - 1) as usize;
                counts[idx] += 1;
                for ch in 0..3 {
                    sums[idx][ch] += s.image.data()[ch * hw + p];
                }
            }
        }
        let prototypes = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    // Class never appeared; park its prototype far away so
                    // it is never predicted.
                    [f64::MAX / 4.0; 3]
                } else {
                    [s[0] / c as f64, s[1] / c as f64, s[2] / c as f64]
                }
            })
            .collect();
        Ok(Self { kind, prototypes })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    /// Per-pixel nearest-prototype labels for a [3, H, W] image.
    pub fn predict_labels(&self, image: &Tensor) -> Vec<u8> {
        let hw = image.len() / 3;
        (0..hw)
            .map(|p| {
                let px = [
                    image.data()[p],
                    image.data()[hw + p],
                    image.data()[2 * hw + p],
                ];
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (i, proto) in self.prototypes.iter().enumerate() {
                    let d: f64 = (0..3).map(|c| (px[c] - proto[c]).powi(2)).sum();
                    if d < best_d {
                        best = i;
                        best_d = d;
                    }
                }
                (best + 1) as u8
            })
            .collect()
    }

    pub fn predict(&self, image: &Tensor) -> TaskPrediction {
        let labels = self.predict_labels(image);
        match self.kind {
            TaskKind::Segmentation | TaskKind::DetectionProxy => {
                TaskPrediction::Segmentation(labels)
            }
            TaskKind::Classification => {
                let m = self.num_classes();
                let mut probs = vec![0.0f64; m];
                for &c in &labels {
                    probs[(c - 1) as usize] += 1.0;
                }
                let total = labels.len() as f64;
                for p in &mut probs {
                    *p /= total;
                }
                TaskPrediction::ClassProbs(probs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted() -> TaskOracle {
        TaskOracle::fit(TaskKind::Segmentation, &SceneConfig::default(), 900).unwrap()
    }

    #[test]
    fn clean_scene_accuracy_at_least_95_percent() {
        let oracle = fitted();
        let config = SceneConfig::default();
        let mut correct = 0usize;
        let mut total = 0usize;
        for k in 0..100 {
            let s = generate_scene(&mut RngStream::new(901, k), &config).unwrap();
            let pred = oracle.predict_labels(&s.image);
            correct += pred.iter().zip(&s.labels).filter(|(a, b)| a == b).count();
            total += s.labels.len();
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.95, "pixel accuracy {acc}");
    }

    #[test]
    fn exact_prototype_color_predicts_that_class() {
        let oracle = fitted();
        for (i, proto) in oracle.prototypes.iter().enumerate() {
            let mut data = vec![0.0; 3 * 64];
            for c in 0..3 {
                for p in 0..64 {
                    data[c * 64 + p] = proto[c];
                }
            }
            let image = Tensor::new(vec![3, 8, 8], data).unwrap();
            assert!(oracle.predict_labels(&image).iter().all(|&c| c == (i + 1) as u8));
        }
    }

    #[test]
    fn prediction_is_deterministic() {
        let oracle = fitted();
        let s = generate_scene(&mut RngStream::new(902, 0), &SceneConfig::default()).unwrap();
        assert_eq!(oracle.predict(&s.image), oracle.predict(&s.image));
    }

    #[test]
    fn classification_probs_sum_to_one() {
        let oracle =
            TaskOracle::fit(TaskKind::Classification, &SceneConfig::default(), 900).unwrap();
        let s = generate_scene(&mut RngStream::new(903, 0), &SceneConfig::default()).unwrap();
        match oracle.predict(&s.image) {
            TaskPrediction::ClassProbs(p) => {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected prediction {other:?}"),
        }
    }
}
