use nalgebra::{DMatrix, DVector};

use super::HarnessError;

/// One point of a rate-quality curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CurvePoint {
    /// Bits per pixel; must be positive.
    pub rate: f64,
    /// Quality metric at that rate (mIoU, PSNR, ...).
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdMode {
    /// Average rate difference in percent at equal quality.
    Rate,
    /// Average quality difference at equal rate.
    Quality,
}

fn curve_err<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Curve(msg.into()))
}

/// Least-squares cubic y = c0 + c1 x + c2 x^2 + c3 x^3; exact
/// interpolation when given four points.
fn cubic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 4], HarnessError> {
    let n = xs.len();
    let v = DMatrix::from_fn(n, 4, |i, j| xs[i].powi(j as i32));
    let vt = v.transpose();
    let gram = &vt * &v;
    let rhs = vt * DVector::from_column_slice(ys);
    match gram.lu().solve(&rhs) {
        Some(c) if c.iter().all(|v| v.is_finite()) => Ok([c[0], c[1], c[2], c[3]]),
        _ => curve_err("degenerate curve: cubic fit is singular"),
    }
}

/// Definite integral of the fitted cubic over [lo, hi].
fn integrate(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    (0..4)
        .map(|k| c[k] * (hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1)) / (k as f64 + 1.0))
        .sum()
}

fn check_curve(curve: &[CurvePoint]) -> Result<(), HarnessError> {
    if curve.len() < 4 {
        return curve_err(format!("need at least 4 curve points, got {}", curve.len()));
    }
    if curve.iter().any(|p| !(p.rate > 0.0) || !p.quality.is_finite()) {
        return curve_err("curve points need positive rates and finite qualities");
    }
    for (i, a) in curve.iter().enumerate() {
        for b in &curve[i + 1..] {
            if a.rate == b.rate {
                return curve_err(format!("duplicate rate {} in curve", a.rate));
            }
        }
    }
    Ok(())
}

/// Mean difference of the two fitted polynomials (b minus a) over the
/// overlapping x-interval.
fn mean_gap(
    ax: &[f64],
    ay: &[f64],
    bx: &[f64],
    by: &[f64],
) -> Result<f64, HarnessError> {
    let a_min = ax.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_max = ax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let b_min = bx.iter().cloned().fold(f64::INFINITY, f64::min);
    let b_max = bx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = a_min.max(b_min);
    let hi = a_max.min(b_max);
    if !(hi > lo) {
        return curve_err(format!("curves do not overlap: [{a_min}, {a_max}] vs [{b_min}, {b_max}]"));
    }
    let ca = cubic_fit(ax, ay)?;
    let cb = cubic_fit(bx, by)?;
    Ok((integrate(&cb, lo, hi) - integrate(&ca, lo, hi)) / (hi - lo))
}

/// Bjontegaard delta between two curves: average rate saving of `b` over
/// `a` in percent (`BdMode::Rate`), or average quality gain
/// (`BdMode::Quality`). Positive means `b` spends more bits / scores
/// higher.
pub fn bd_metric(a: &[CurvePoint], b: &[CurvePoint], mode: BdMode) -> Result<f64, HarnessError> {
    check_curve(a)?;
    check_curve(b)?;
    match mode {
        BdMode::Quality => {
            let ax: Vec<f64> = a.iter().map(|p| p.rate.log10()).collect();
            let ay: Vec<f64> = a.iter().map(|p| p.quality).collect();
            let bx: Vec<f64> = b.iter().map(|p| p.rate.log10()).collect();
            let by: Vec<f64> = b.iter().map(|p| p.quality).collect();
            mean_gap(&ax, &ay, &bx, &by)
        }
        BdMode::Rate => {
            let ax: Vec<f64> = a.iter().map(|p| p.quality).collect();
            let ay: Vec<f64> = a.iter().map(|p| p.rate.log10()).collect();
            let bx: Vec<f64> = b.iter().map(|p| p.quality).collect();
            let by: Vec<f64> = b.iter().map(|p| p.rate.log10()).collect();
            let d = mean_gap(&ax, &ay, &bx, &by)?;
            Ok((10f64.powf(d) - 1.0) * 100.0)
        }
    }
}
