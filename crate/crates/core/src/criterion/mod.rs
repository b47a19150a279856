//! Loss and metric functions: IoU-family semantic losses, cross entropy
//! with optional label smoothing, the frozen perceptual proxy, the
//! composite rate-semantic-perceptual criterion, PSNR/SSIM, and a
//! Fréchet distance over proxy features.

mod metrics;
mod perceptual;
mod semantic;

pub use metrics::{frechet_proxy, pixel_metrics, PixelMetrics};
pub use perceptual::{perceptual_loss, perceptual_loss_graph, PerceptualExtractor};
pub use semantic::{ce_loss, det_loss, iou, miou, miou_loss, DET_LOSS_FLOOR};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CriterionError {
    #[error("probabilities sum to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("smoothing {0} outside [0, 1)")]
    BadSmoothing(f64),
    #[error("label {0} out of range 1..={1}")]
    BadLabel(usize, usize),
    #[error("need at least 2 feature vectors per set, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite covariance")]
    NonFiniteCovariance,
    #[error("{0}")]
    Invalid(String),
}

/// Trade-off weights of the composite criterion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CriterionWeights {
    pub lambda: f64,
    pub eta: f64,
}

impl Default for CriterionWeights {
    fn default() -> Self {
        Self { lambda: 1.0, eta: 10.0 }
    }
}

impl CriterionWeights {
    pub fn validate(&self) -> Result<(), CriterionError> {
        if self.lambda < 0.0 || self.eta < 0.0 || !self.lambda.is_finite() || !self.eta.is_finite()
        {
            return Err(CriterionError::Invalid(format!(
                "weights must be finite and non-negative, got lambda={} eta={}",
                self.lambda, self.eta
            )));
        }
        Ok(())
    }
}

/// One evaluation of the composite criterion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CriterionReport {
    pub rate_bpp: f64,
    pub l_s: f64,
    pub l_p: f64,
    pub composite: f64,
}

/// L = lambda * rate + L_S + eta * L_P.
pub fn composite_loss(rate_bpp: f64, l_s: f64, l_p: f64, weights: &CriterionWeights) -> f64 {
    weights.lambda * rate_bpp + l_s + weights.eta * l_p
}

pub fn criterion_report(
    rate_bpp: f64,
    l_s: f64,
    l_p: f64,
    weights: &CriterionWeights,
) -> CriterionReport {
    CriterionReport { rate_bpp, l_s, l_p, composite: composite_loss(rate_bpp, l_s, l_p, weights) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_arithmetic() {
        let w = CriterionWeights::default();
        assert!((composite_loss(0.1, 0.2, 0.03, &w) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_reduce_to_semantic_term() {
        let w = CriterionWeights { lambda: 0.0, eta: 0.0 };
        assert_eq!(composite_loss(5.0, 0.7, 3.0, &w), 0.7);
    }

    #[test]
    fn strictly_increasing_in_each_argument() {
        let w = CriterionWeights { lambda: 0.5, eta: 2.0 };
        let base = composite_loss(1.0, 1.0, 1.0, &w);
        assert!(composite_loss(1.1, 1.0, 1.0, &w) > base);
        assert!(composite_loss(1.0, 1.1, 1.0, &w) > base);
        assert!(composite_loss(1.0, 1.0, 1.1, &w) > base);
    }

    #[test]
    fn linearity_in_rate() {
        let w = CriterionWeights::default();
        let a = composite_loss(0.2, 0.0, 0.0, &w);
        let b = composite_loss(0.4, 0.0, 0.0, &w);
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(CriterionWeights { lambda: -1.0, eta: 0.0 }.validate().is_err());
        assert!(CriterionWeights::default().validate().is_ok());
    }

    #[test]
    fn report_invariant_holds() {
        let w = CriterionWeights::default();
        let r = criterion_report(0.3, 0.4, 0.02, &w);
        assert_eq!(r.composite, w.lambda * r.rate_bpp + r.l_s + w.eta * r.l_p);
    }
}
