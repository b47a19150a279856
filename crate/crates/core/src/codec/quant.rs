use std::rc::Rc;

use crate::num::{nearest_center_index, soft_quant_value};
use crate::Tensor;

use super::CodecError;

/// Number of quantization levels available to the allocator.
pub const NUM_LEVELS: u8 = 6;

/// Scalar quantizer for one level: 2^level centers uniformly spaced on
/// [-1, 1], plus the softness used by the differentiable variant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    level: u8,
    centers: Rc<Vec<f64>>,
    sigma: f64,
}

impl QuantizerSpec {
    pub fn new(level: u8, sigma: f64) -> Result<Self, CodecError> {
        if level < 1 || level > NUM_LEVELS {
            return Err(CodecError::InvalidLevel(level));
        }
        if !(sigma > 0.0) {
            return Err(CodecError::InvalidSoftness(sigma));
        }
        Ok(Self { level, centers: Rc::new(centers_for_level(level)), sigma })
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn centers_rc(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.centers)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Half the grid spacing: the worst-case absolute error for inputs
    /// inside [-1, 1].
    pub fn max_error(&self) -> f64 {
        1.0 / ((1usize << self.level) as f64 - 1.0)
    }
}

/// 2^level centers from -1 to 1 inclusive, strictly increasing.
pub fn centers_for_level(level: u8) -> Vec<f64> {
    let k = 1usize << level;
    (0..k).map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64).collect()
}

impl QuantizerSpec {
    /// Nearest-center assignment after clipping to [-1, 1]; ties go to
    /// the lower-index center. Returns the quantized tensor and the
    /// center-index grid.
    pub fn quantize_hard(&self, f: &Tensor) -> (Tensor, Vec<u8>) {
        let symbols: Vec<u8> = f
            .data()
            .iter()
            .map(|&x| nearest_center_index(&self.centers, x) as u8)
            .collect();
        let data = symbols.iter().map(|&s| self.centers[s as usize]).collect();
        let q = Tensor::new(f.shape().to_vec(), data).expect("hard quantization");
        (q, symbols)
    }

    /// Softmax-weighted average of centers per entry (differentiable).
    pub fn quantize_soft(&self, f: &Tensor) -> Tensor {
        f.map(|x| soft_quant_value(&self.centers, self.sigma, x))
    }

    pub fn dequantize(&self, symbols: &[u8], shape: Vec<usize>) -> Result<Tensor, CodecError> {
        let k = self.centers.len();
        let data = symbols
            .iter()
            .map(|&s| {
                if (s as usize) < k {
                    Ok(self.centers[s as usize])
                } else {
                    Err(CodecError::UnknownSymbol(s))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tensor::new(shape, data).map_err(|e| CodecError::Malformed(e.to_string()))
    }
}
