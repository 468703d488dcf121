//! PSNR and SSIM on dB-valued rasters, plus the SSIM gradient used as a
//! photometric training term.

use crate::error::{Error, Result};
use crate::spectrum::SpectrumGrid;

pub const PSNR_CAP_DB: f64 = 99.0;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

fn check(a: &SpectrumGrid, b: &SpectrumGrid) -> Result<()> {
    a.same_shape(b)
}

fn clamped(g: &SpectrumGrid, floor: f64) -> Result<Vec<f64>> {
    Ok(g.pathloss_values()?.iter().map(|&v| v.clamp(floor, 0.0)).collect())
}

/// PSNR over raw buffers with peak `range`; identical inputs report the cap.
pub fn psnr_values(pred: &[f64], gt: &[f64], range: f64) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", pred.len(), gt.len())));
    }
    let mse = pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * range.log10() - 10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// PSNR of path-loss spectra clamped to `[floor_db, 0]` with range `-floor_db`.
pub fn psnr(pred: &SpectrumGrid, gt: &SpectrumGrid) -> Result<f64> {
    check(pred, gt)?;
    let floor = gt.floor_db;
    psnr_values(&clamped(pred, floor)?, &clamped(gt, floor)?, -floor)
}

/// SSIM of path-loss spectra (11×11 gaussian window, σ = 1.5, stabilizers
/// relative to the `-floor_db` dynamic range).
pub fn ssim(pred: &SpectrumGrid, gt: &SpectrumGrid) -> Result<f64> {
    check(pred, gt)?;
    let floor = gt.floor_db;
    let (v, _) = ssim_values(&clamped(pred, floor)?, &clamped(gt, floor)?, gt.width, gt.height, -floor, false)?;
    Ok(v)
}

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" convolution: output is `(w - 10) × (h - 10)`.
fn blur_valid(x: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..WINDOW).map(|j| k[j] * x[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WINDOW).map(|j| k[j] * tmp[(r + j) * ow + c]).sum();
        }
    }
    out
}

/// Adjoint of [`blur_valid`]: scatters a `(w - 10) × (h - 10)` map back to `w × h`.
fn blur_valid_adjoint(g: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for r in 0..oh {
        for c in 0..ow {
            let v = g[r * ow + c];
            for j in 0..WINDOW {
                tmp[(r + j) * ow + c] += k[j] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..ow {
            let v = tmp[r * ow + c];
            for j in 0..WINDOW {
                out[r * w + c + j] += k[j] * v;
            }
        }
    }
    out
}

/// Mean SSIM of `x` against `y` over all full windows, and optionally its
/// gradient with respect to `x`.
pub fn ssim_values(x: &[f64], y: &[f64], w: usize, h: usize, range: f64, with_grad: bool) -> Result<(f64, Vec<f64>)> {
    if x.len() != w * h || y.len() != w * h {
        return Err(Error::DimensionMismatch("ssim buffers do not match the raster".into()));
    }
    if w < WINDOW || h < WINDOW {
        return Err(Error::invalid(format!("ssim needs at least {WINDOW}x{WINDOW} pixels")));
    }
    let k = kernel();
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = blur_valid(x, w, h, &k);
    let my = blur_valid(y, w, h, &k);
    let ex2 = blur_valid(&xx, w, h, &k);
    let ey2 = blur_valid(&yy, w, h, &k);
    let exy = blur_valid(&xy, w, h, &k);
    let n = mx.len();
    let mut total = 0.0;
    let (mut d_mu, mut d_ex2, mut d_exy) = if with_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let sx = ex2[i] - ux * ux;
        let sy = ey2[i] - uy * uy;
        let sxy = exy[i] - ux * uy;
        let a1 = 2.0 * ux * uy + c1;
        let a2 = 2.0 * sxy + c2;
        let b1 = ux * ux + uy * uy + c1;
        let b2 = sx + sy + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if with_grad {
            d_mu[i] = (2.0 * uy * a2 - 2.0 * uy * a1) / (b1 * b2) - s * (2.0 * ux / b1 - 2.0 * ux / b2);
            d_ex2[i] = -s / b2;
            d_exy[i] = 2.0 * a1 / (b1 * b2);
        }
    }
    let mean = total / n as f64;
    if !with_grad {
        return Ok((mean, Vec::new()));
    }
    let inv = 1.0 / n as f64;
    let gmu = blur_valid_adjoint(&d_mu, w, h, &k);
    let gx2 = blur_valid_adjoint(&d_ex2, w, h, &k);
    let gxy = blur_valid_adjoint(&d_exy, w, h, &k);
    let grad = (0..w * h)
        .map(|j| inv * (gmu[j] + 2.0 * x[j] * gx2[j] + y[j] * gxy[j]))
        .collect();
    Ok((mean, grad))
}
