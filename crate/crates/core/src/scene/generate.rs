use crate::num::RngStream;
use crate::Tensor;

use super::SceneError;

/// Generator settings for the synthetic street-scene stand-in.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub palette_seed: u64,
    /// Standard deviation of the per-pixel texture noise.
    pub noise_std: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { height: 32, width: 64, num_classes: 8, palette_seed: 1, noise_std: 0.03 }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.num_classes < 2 {
            return Err(SceneError::TooFewClasses(self.num_classes));
        }
        if self.num_classes > 16 {
            return Err(SceneError::TooManyClasses(self.num_classes));
        }
        if self.height % 8 != 0 || self.width % 8 != 0 || self.height == 0 || self.width == 0 {
            return Err(SceneError::BadDimensions { h: self.height, w: self.width });
        }
        Ok(())
    }
}

/// One generated scene: image in [0,1] as [3, H, W] plus the per-pixel
/// ground-truth label map with entries in {1..M}.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub image: Tensor,
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
}

/// Mean RGB color per class, derived deterministically from the palette
/// seed with hues spread around the wheel so prototypes stay separable.
pub fn class_palette(num_classes: usize, palette_seed: u64) -> Vec<[f64; 3]> {
    let mut rng = RngStream::new(palette_seed, 0x9a1e77e);
    (0..num_classes)
        .map(|m| {
            let hue = (m as f64 + rng.uniform(0.05, 0.3)) / num_classes as f64;
            let sat = rng.uniform(0.55, 0.9);
            let val = rng.uniform(0.45, 0.9);
            hsv_to_rgb(hue.fract(), sat, val)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match (i as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Layered geometric scene: background, road band, sky band, then
/// randomly placed rectangles and ellipses for the remaining classes.
pub fn generate_scene(rng: &mut RngStream, config: &SceneConfig) -> Result<SceneSample, SceneError> {
    config.validate()?;
    let (h, w, m) = (config.height, config.width, config.num_classes);
    let mut labels = vec![1u8; h * w];

    // Road band near the bottom (class 2).
    let road_top = (h as f64 * rng.uniform(0.6, 0.75)) as usize;
    let road_bot = (road_top + h.max(4) / 4).min(h);
    for i in road_top..road_bot {
        for j in 0..w {
            labels[i * w + j] = 2;
        }
    }

    // Sky band at the top (class 3).
    if m >= 3 {
        let sky_rows = (h as f64 * rng.uniform(0.12, 0.28)).max(1.0) as usize;
        for i in 0..sky_rows {
            for j in 0..w {
                labels[i * w + j] = 3;
            }
        }
    }

    // Object classes: alternating rectangles and ellipses, each present
    // with high probability so the class-frequency contract holds.
    for class in 4..=m {
        if !rng.bernoulli(0.92) {
            continue;
        }
        let ci = rng.uniform(0.25, 0.8) * h as f64;
        let cj = rng.uniform(0.1, 0.9) * w as f64;
        let ri = rng.uniform(0.08, 0.2) * h as f64 + 1.0;
        let rj = rng.uniform(0.05, 0.15) * w as f64 + 1.0;
        let ellipse = class % 2 == 1;
        for i in 0..h {
            for j in 0..w {
                let di = (i as f64 - ci) / ri;
                let dj = (j as f64 - cj) / rj;
                let inside = if ellipse {
                    di * di + dj * dj <= 1.0
                } else {
                    di.abs() <= 1.0 && dj.abs() <= 1.0
                };
                if inside {
                    labels[i * w + j] = class as u8;
                }
            }
        }
    }

    let palette = class_palette(m, config.palette_seed);
    let mut data = vec![0.0f64; 3 * h * w];
    for i in 0..h {
        for j in 0..w {
            let base = palette[(labels[i * w + j] - 1) as usize];
            for (c, &b) in base.iter().enumerate() {
                let v = b + rng.normal() * config.noise_std;
                data[c * h * w + i * w + j] = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(SceneSample {
        image: Tensor::new(vec![3, h, w], data).expect("scene image"),
        labels,
        height: h,
        width: w,
        num_classes: m,
    })
}
