//! Evaluation metrics: the training objective, PSNR, and code sparsity.

use crate::codes::CodeMap;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::operators::DictOperator;
use crate::signal::Signal;

/// Sum over signals of 1/2 ||x_i - sum_k d_k * z_ik||^2 + lambda sum_k ||z_ik||_1.
pub fn objective(
    signals: &[Signal],
    dict: &Dictionary,
    codes: &[CodeMap],
    lambda: f64,
) -> Result<f64> {
    if signals.len() != codes.len() {
        return Err(Error::shape(format!(
            "{} signals but {} code maps",
            signals.len(),
            codes.len()
        )));
    }
    let mut total = 0.0;
    for (x, z) in signals.iter().zip(codes) {
        let op = DictOperator::new(dict, x.height(), x.width())?;
        let recon = op.apply(z)?;
        let fit: f64 = x
            .pixels()
            .iter()
            .zip(recon.pixels().iter())
            .map(|(a, b)| {
                let r = a - b;
                r * r
            })
            .sum();
        total += 0.5 * fit + lambda * z.l1_norm();
    }
    Ok(total)
}

/// Peak signal-to-noise ratio in dB; identical inputs return +infinity.
pub fn psnr(reference: &Signal, reconstruction: &Signal, peak: f64) -> Result<f64> {
    if reference.height() != reconstruction.height()
        || reference.width() != reconstruction.width()
    {
        return Err(Error::shape(format!(
            "psnr inputs {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            reconstruction.height(),
            reconstruction.width()
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::param("peak", "must be > 0"));
    }
    let n = reference.len() as f64;
    let mse: f64 = reference
        .pixels()
        .iter()
        .zip(reconstruction.pixels().iter())
        .map(|(a, b)| {
            let r = a - b;
            r * r
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR with both images mapped by the reference's [min, max] -> [0, 1]
/// affine map and peak fixed to 1. This is the convention used for all
/// reported reconstruction quality so traces are comparable across runs.
pub fn psnr_rescaled(reference: &Signal, reconstruction: &Signal) -> Result<f64> {
    let (lo, hi) = reference.min_max();
    let span = hi - lo;
    if span <= 0.0 {
        return psnr(reference, reconstruction, 1.0);
    }
    let map = |s: &Signal| Signal::from_array_unchecked(s.pixels().mapv(|v| (v - lo) / span));
    psnr(&map(reference), &map(reconstruction), 1.0)
}

/// Fraction of coefficients with |value| >= threshold, out of D*K.
pub fn nonzero_fraction(codes: &CodeMap, threshold: f64) -> f64 {
    let count: usize = codes
        .maps()
        .iter()
        .map(|m| m.iter().filter(|v| v.abs() >= threshold).count())
        .sum();
    count as f64 / codes.total_len() as f64
}
