use nalgebra::{DMatrix, DVector};

use crate::Tensor;

use super::CriterionError;

pub const PSNR_CAP_DB: f64 = 99.0;
const PSNR_MSE_FLOOR: f64 = 1e-10;
const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PixelMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
}

/// PSNR (dB, peak 1.0, capped at 99) and mean SSIM over non-overlapping
/// 8x8 windows per channel, for [3, H, W] images in [0, 1].
pub fn pixel_metrics(x: &Tensor, x_hat: &Tensor, height: usize, width: usize) -> PixelMetrics {
    assert_eq!(x.len(), x_hat.len());
    assert_eq!(x.len(), 3 * height * width);
    let mse = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    let psnr_db = if mse < PSNR_MSE_FLOOR {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    };

    let hw = height * width;
    let (wh, ww) = (height / SSIM_WINDOW, width / SSIM_WINDOW);
    let npix = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for c in 0..3 {
        for u in 0..wh {
            for v in 0..ww {
                let (mut ma, mut mb) = (0.0, 0.0);
                for di in 0..SSIM_WINDOW {
                    for dj in 0..SSIM_WINDOW {
                        let p = c * hw + (u * SSIM_WINDOW + di) * width + v * SSIM_WINDOW + dj;
                        ma += x.data()[p];
                        mb += x_hat.data()[p];
                    }
                }
                ma /= npix;
                mb /= npix;
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for di in 0..SSIM_WINDOW {
                    for dj in 0..SSIM_WINDOW {
                        let p = c * hw + (u * SSIM_WINDOW + di) * width + v * SSIM_WINDOW + dj;
                        let da = x.data()[p] - ma;
                        let db = x_hat.data()[p] - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                }
                va /= npix;
                vb /= npix;
                cov /= npix;
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                windows += 1;
            }
        }
    }
    PixelMetrics { psnr_db, ssim: total / windows as f64 }
}

/// Fréchet distance between two Gaussian fits:
/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the
/// matrix square root taken through symmetric eigendecompositions and
/// eigenvalues floored at zero.
pub fn frechet_proxy(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, CriterionError> {
    if a.len() < 2 {
        return Err(CriterionError::TooFewSamples(a.len()));
    }
    if b.len() < 2 {
        return Err(CriterionError::TooFewSamples(b.len()));
    }
    let d = a[0].len();
    if b[0].len() != d || a.iter().chain(b).any(|v| v.len() != d) {
        return Err(CriterionError::Invalid("feature dimensions differ".into()));
    }
    let (mu_a, cov_a) = moments(a, d)?;
    let (mu_b, cov_b) = moments(b, d)?;

    let sqrt_b = psd_sqrt(&cov_b);
    let inner = &sqrt_b * &cov_a * &sqrt_b;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = nalgebra::SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();

    let mean_term = (&mu_a - &mu_b).norm_squared();
    let val = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    if !val.is_finite() {
        return Err(CriterionError::NonFiniteCovariance);
    }
    Ok(val.max(0.0))
}

fn moments(set: &[Vec<f64>], d: usize) -> Result<(DVector<f64>, DMatrix<f64>), CriterionError> {
    let k = set.len();
    let mut mu = DVector::zeros(d);
    for v in set {
        for (i, &x) in v.iter().enumerate() {
            mu[i] += x;
        }
    }
    mu /= k as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let dv = DVector::from_iterator(d, v.iter().cloned()) - &mu;
        cov += &dv * dv.transpose();
    }
    cov /= (k - 1) as f64;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(CriterionError::NonFiniteCovariance);
    }
    Ok((mu, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}
