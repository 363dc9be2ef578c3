//! Downstream tasks with a fixed dictionary: sparse inference,
//! reconstruction, and inpainting from partial pixel observations.

use crate::codes::CodeMap;
use crate::config::{AdmmParams, QuadMode};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::lasso::{resolve_factor, solve_codes_system, CodeLinearOp};
use crate::mask::{ObservationMask, SubsampleMask};
use crate::operators::DictOperator;
use crate::signal::Signal;

/// Full-support sparse inference: minimize the training objective over the
/// codes with the dictionary fixed.
pub fn infer_codes(
    signal: &Signal,
    dict: &Dictionary,
    lambda: f64,
    admm_iters: usize,
) -> Result<CodeMap> {
    let mut params = AdmmParams::for_lambda(lambda);
    params.iterations = admm_iters;
    infer_codes_with(signal, dict, lambda, &params)
}

pub fn infer_codes_with(
    signal: &Signal,
    dict: &Dictionary,
    lambda: f64,
    params: &AdmmParams,
) -> Result<CodeMap> {
    let mask = SubsampleMask::full(signal.height(), signal.width(), dict.num_filters());
    let op = CodeLinearOp::new(dict, &mask, None)?;
    let factor = resolve_factor(&op, params, 1)?;
    let sol = solve_codes_system(&op, factor.as_ref(), signal, lambda, params, None)?;
    mask.upsample(&sol.reduced)
}

/// sum_k d_k * z_k.
pub fn reconstruct(dict: &Dictionary, codes: &CodeMap) -> Result<Signal> {
    DictOperator::new(dict, codes.height(), codes.width())?.apply(codes)
}

#[derive(Debug, Clone, Copy)]
pub struct InpaintOptions {
    pub lambda: f64,
    pub admm_iters: usize,
    /// Copy observed pixels over the reconstruction. Off by default so the
    /// reported quality measures the dictionary, not the measurements.
    pub paste_observed: bool,
    pub quad_mode: QuadMode,
}

impl Default for InpaintOptions {
    fn default() -> Self {
        // the standard inpainting protocol: lambda 0.4, 50 ADMM iterations
        Self {
            lambda: 0.4,
            admm_iters: 50,
            paste_observed: false,
            quad_mode: QuadMode::default(),
        }
    }
}

/// Reconstruct a full image from partially observed pixels by solving the
/// masked-data sparse coding problem
/// min 1/2 ||W (x - D z)||^2 + lambda ||z||_1 and returning D z.
pub fn inpaint(
    observed: &Signal,
    omask: &ObservationMask,
    dict: &Dictionary,
    opts: &InpaintOptions,
) -> Result<Signal> {
    if omask.height() != observed.height() || omask.width() != observed.width() {
        return Err(Error::shape(format!(
            "observation mask {}x{} vs image {}x{}",
            omask.height(),
            omask.width(),
            observed.height(),
            observed.width()
        )));
    }
    if omask.observed_count() == 0 {
        return Err(Error::param("observation mask", "no pixels observed"));
    }
    let mask = SubsampleMask::full(observed.height(), observed.width(), dict.num_filters());
    let op = CodeLinearOp::new(dict, &mask, Some(omask))?;
    let mut params = AdmmParams::for_lambda(opts.lambda);
    params.iterations = opts.admm_iters;
    params.quad_mode = opts.quad_mode;
    let factor = resolve_factor(&op, &params, 1)?;
    let sol = solve_codes_system(&op, factor.as_ref(), observed, opts.lambda, &params, None)?;
    let codes = mask.upsample(&sol.reduced)?;
    let mut recon = reconstruct(dict, &codes)?.into_pixels();
    if opts.paste_observed {
        ndarray::Zip::from(&mut recon)
            .and(observed.pixels())
            .and(omask.grid())
            .for_each(|r, &x, &seen| {
                if seen {
                    *r = x;
                }
            });
    }
    Ok(Signal::from_array_unchecked(recon))
}
