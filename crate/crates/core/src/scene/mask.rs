use crate::layout::PATCH;
use crate::Tensor;

use super::SceneError;

/// Binary masks for one class at full and downscaled (1/8) resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask {
    pub class_id: u8,
    /// H*W indicator, row-major.
    pub full: Vec<u8>,
    /// (H/8)*(W/8) indicator from the cell-majority rule.
    pub down: Vec<u8>,
    pub height: usize,
    pub width: usize,
}

impl SemanticMask {
    pub fn grid_h(&self) -> usize {
        self.height / PATCH
    }

    pub fn grid_w(&self) -> usize {
        self.width / PATCH
    }

    /// Downscaled indicator as a [1, cells] tensor.
    pub fn down_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.down.len()], self.down.iter().map(|&v| v as f64).collect())
            .expect("mask tensor")
    }

    /// Full-resolution indicator replicated over the three channels,
    /// flat [3*H*W] — ready to gate an image tensor elementwise.
    pub fn full_rgb_tensor(&self) -> Tensor {
        let hw = self.height * self.width;
        let mut data = vec![0.0f64; 3 * hw];
        for (p, &v) in self.full.iter().enumerate() {
            if v != 0 {
                data[p] = 1.0;
                data[hw + p] = 1.0;
                data[2 * hw + p] = 1.0;
            }
        }
        Tensor::new(vec![3 * hw], data).expect("mask tensor")
    }
}

/// One representation unit: per-class feature map gated by the
/// downscaled mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticConcept {
    pub class_id: u8,
    /// [n, cells] with zeros at every cell off the downscaled mask.
    pub features: Tensor,
    pub mask: SemanticMask,
}

impl SemanticConcept {
    /// True when the class is absent from the scene at cell resolution.
    pub fn is_empty(&self) -> bool {
        self.mask.down.iter().all(|&v| v == 0)
    }
}

/// Assigns each 8x8 cell to the class holding the pixel-count majority;
/// ties go to the lowest class id.
pub fn downscale_labels(labels: &[u8], height: usize, width: usize, m: usize) -> Vec<u8> {
    assert_eq!(labels.len(), height * width);
    assert!(height % PATCH == 0 && width % PATCH == 0);
    let (gh, gw) = (height / PATCH, width / PATCH);
    let mut out = vec![0u8; gh * gw];
    for u in 0..gh {
        for v in 0..gw {
            let mut counts = vec![0usize; m + 1];
            for di in 0..PATCH {
                for dj in 0..PATCH {
                    let c = labels[(u * PATCH + di) * width + (v * PATCH + dj)] as usize;
                    counts[c.min(m)] += 1;
                }
            }
            let mut best = 1usize;
            for c in 2..=m {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            out[u * gw + v] = best as u8;
        }
    }
    out
}

/// Indicator masks for class `class_id` at both resolutions.
pub fn extract_mask(
    labels: &[u8],
    height: usize,
    width: usize,
    m: usize,
    class_id: u8,
) -> Result<SemanticMask, SceneError> {
    if class_id == 0 || class_id as usize > m {
        return Err(SceneError::BadClassId(class_id, m));
    }
    if labels.len() != height * width || height % PATCH != 0 || width % PATCH != 0 {
        return Err(SceneError::BadDimensions { h: height, w: width });
    }
    let full: Vec<u8> = labels.iter().map(|&c| (c == class_id) as u8).collect();
    let down = downscale_labels(labels, height, width, m)
        .into_iter()
        .map(|c| (c == class_id) as u8)
        .collect();
    Ok(SemanticMask { class_id, full, down, height, width })
}

/// f^(m) = f gated by the downscaled mask, broadcast over channels.
pub fn decompose_features(features: &Tensor, mask: &SemanticMask) -> SemanticConcept {
    let cells = mask.down.len();
    let (n, cols) = features.rows_cols();
    assert_eq!(cols, cells, "feature grid does not match mask grid");
    let mut data = Vec::with_capacity(n * cells);
    for ch in 0..n {
        for (cell, &on) in mask.down.iter().enumerate() {
            data.push(if on != 0 { features.data()[ch * cells + cell] } else { 0.0 });
        }
    }
    SemanticConcept {
        class_id: mask.class_id,
        features: Tensor::new(vec![n, cells], data).expect("concept features"),
        mask: mask.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::RngStream;
    use crate::scene::{generate_scene, SceneConfig};

    #[test]
    fn uniform_map_gives_all_ones_mask() {
        let labels = vec![3u8; 16 * 16];
        let mask = extract_mask(&labels, 16, 16, 4, 3).unwrap();
        assert!(mask.full.iter().all(|&v| v == 1));
        assert!(mask.down.iter().all(|&v| v == 1));
        let absent = extract_mask(&labels, 16, 16, 4, 2).unwrap();
        assert!(absent.full.iter().all(|&v| v == 0));
        assert!(absent.down.iter().all(|&v| v == 0));
    }

    #[test]
    fn majority_33_of_64_wins_cell() {
        // Single 8x8 block, 33 pixels of class 2 vs 31 of class 1.
        let mut labels = vec![1u8; 64];
        for p in 0..33 {
            labels[p] = 2;
        }
        let mask = extract_mask(&labels, 8, 8, 2, 2).unwrap();
        assert_eq!(mask.down, vec![1]);
        // Independent count oracle.
        let count = labels.iter().filter(|&&c| c == 2).count();
        assert!(count > 64 - count);
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let labels: Vec<u8> = (0..64).map(|p| if p < 32 { 5 } else { 2 }).collect();
        assert_eq!(downscale_labels(&labels, 8, 8, 8), vec![2]);
    }

    #[test]
    fn masks_partition_on_random_scenes() {
        let config = SceneConfig::default();
        for k in 0..20 {
            let s = generate_scene(&mut RngStream::new(40, k), &config).unwrap();
            let mut full_sum = vec![0u32; s.height * s.width];
            let mut down_sum = vec![0u32; (s.height / 8) * (s.width / 8)];
            for class in 1..=config.num_classes as u8 {
                let mask = extract_mask(&s.labels, s.height, s.width, config.num_classes, class)
                    .unwrap();
                for (acc, &v) in full_sum.iter_mut().zip(&mask.full) {
                    *acc += v as u32;
                }
                for (acc, &v) in down_sum.iter_mut().zip(&mask.down) {
                    *acc += v as u32;
                }
            }
            assert!(full_sum.iter().all(|&v| v == 1));
            assert!(down_sum.iter().all(|&v| v == 1));
        }
    }

    #[test]
    fn decompose_identity_zero_and_checkerboard() {
        let cells = 16;
        let features = Tensor::new(vec![3, cells], (0..3 * cells).map(|i| i as f64).collect())
            .unwrap();
        let base = SemanticMask {
            class_id: 1,
            full: vec![1; 8 * 16],
            down: vec![1; cells],
            height: 8,
            width: 16,
        };
        assert_eq!(decompose_features(&features, &base).features, features);

        let zero = SemanticMask { down: vec![0; cells], ..base.clone() };
        let c = decompose_features(&features, &zero);
        assert!(c.features.data().iter().all(|&v| v == 0.0));
        assert!(c.is_empty());

        let checker = SemanticMask {
            down: (0..cells).map(|i| (i % 2) as u8).collect(),
            ..base
        };
        let c = decompose_features(&features, &checker);
        for ch in 0..3 {
            for cell in 0..cells {
                let expect = if cell % 2 == 1 { (ch * cells + cell) as f64 } else { 0.0 };
                assert_eq!(c.features.data()[ch * cells + cell], expect);
            }
        }
    }

    #[test]
    fn decomposition_sums_back_to_features() {
        let config = SceneConfig::default();
        let s = generate_scene(&mut RngStream::new(41, 0), &config).unwrap();
        let cells = (s.height / 8) * (s.width / 8);
        let mut rng = RngStream::new(41, 1);
        let features =
            Tensor::new(vec![8, cells], (0..8 * cells).map(|_| rng.normal()).collect()).unwrap();
        let mut sum = Tensor::zeros(vec![8, cells]);
        for class in 1..=config.num_classes as u8 {
            let mask =
                extract_mask(&s.labels, s.height, s.width, config.num_classes, class).unwrap();
            sum = sum.add(&decompose_features(&features, &mask).features).unwrap();
        }
        for (a, b) in sum.data().iter().zip(features.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_class_id_rejected() {
        let labels = vec![1u8; 64];
        assert_eq!(
            extract_mask(&labels, 8, 8, 4, 0),
            Err(SceneError::BadClassId(0, 4))
        );
        assert_eq!(
            extract_mask(&labels, 8, 8, 4, 5),
            Err(SceneError::BadClassId(5, 4))
        );
    }
}
