//! The two outer training loops: SBCSC (batch) and SOCSC (online with
//! mini-batching and surrogate statistics).
//!
//! Both are deterministic in (config seed, inputs) regardless of worker
//! count: masks and stream draws derive from the seed, per-image solves are
//! independent, and reductions run in ascending image order. Trace wall time
//! bills training work only (mask sampling, code solves, surrogate and
//! filter updates), never metric evaluation.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::codes::CodeMap;
use crate::config::TrainConfig;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::filter_update::{update_filters_batch, update_filters_online, SurrogateState};
use crate::lasso::{resolve_factor, solve_codes_system, CodeLinearOp};
use crate::mask::{sample_mask, SubsampleMask};
use crate::metrics::{nonzero_fraction, objective, psnr_rescaled};
use crate::operators::DictOperator;
use crate::rng::{derive_rng, StreamDomain};
use crate::signal::{contrast_normalize, NormalizeWindow, Signal};
use crate::trace::{TraceRow, TrainTrace};

/// Per-iteration observer payload (used by the bench harness and tests).
#[derive(Debug, Clone)]
pub struct IterationStats {
    pub iteration: u64,
    pub code_update_s: f64,
    pub filter_update_s: f64,
    pub objective: f64,
    pub nnz_frac: f64,
    pub test_objective: Option<f64>,
    pub test_psnr_db: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SbcscOutcome {
    pub dictionary: Dictionary,
    pub codes: Vec<CodeMap>,
    pub trace: TrainTrace,
}

/// Batch-mode training: every iteration samples one shared mask, solves the
/// masked code problem for every image (in parallel), projects the codes
/// back to full support, and runs one warm-started filter update. Stops on
/// relative objective change below `cfg.tol` or after `cfg.max_outer`
/// iterations.
pub fn train_sbcsc(signals: &[Signal], cfg: &TrainConfig) -> Result<SbcscOutcome> {
    train_sbcsc_observed(signals, cfg, |_| {})
}

pub fn train_sbcsc_observed(
    signals: &[Signal],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&IterationStats),
) -> Result<SbcscOutcome> {
    cfg.validate()?;
    let (h, w) = check_geometry(signals, cfg.filter_side)?;
    let k = cfg.num_filters;
    let admm = cfg.admm_params();
    let mut dict = Dictionary::random_init(k, cfg.filter_side, cfg.seed)?;
    let mut codes: Vec<CodeMap> = vec![CodeMap::zeros(k, h, w); signals.len()];
    let mut trace = TrainTrace::new();
    let mut billed = 0.0f64;
    let mut prev_obj: Option<f64> = None;

    for iter in 1..=cfg.max_outer as u64 {
        let t_code = Instant::now();
        let mask = sample_mask(h, w, k, cfg.subsample_rate, cfg.seed, iter)?;
        let op = CodeLinearOp::new(&dict, &mask, None)?;
        let factor = resolve_factor(&op, &admm, signals.len())?;
        let solved: Vec<Vec<f64>> = signals
            .par_iter()
            .zip(codes.par_iter())
            .map(|(x, prev)| {
                let warm = mask.subsample(prev)?;
                let sol =
                    solve_codes_system(&op, factor.as_ref(), x, cfg.lambda, &admm, Some(&warm))?;
                Ok(sol.reduced)
            })
            .collect::<Result<_>>()?;
        for (dst, reduced) in codes.iter_mut().zip(&solved) {
            *dst = mask.upsample(reduced)?;
        }
        let code_update_s = t_code.elapsed().as_secs_f64();

        let t_filter = Instant::now();
        let upd = update_filters_batch(signals, &codes, &dict, cfg.sweeps)?;
        dict = upd.dictionary;
        let filter_update_s = t_filter.elapsed().as_secs_f64();
        billed += code_update_s + filter_update_s;

        let obj = objective(signals, &dict, &codes, cfg.lambda)?;
        let nnz = mean_nnz(&codes, cfg.nnz_threshold);
        trace.push(TraceRow {
            iter,
            wall_s: billed,
            objective: obj,
            test_objective: None,
            test_psnr_db: None,
            nnz_frac: nnz,
        });
        observer(&IterationStats {
            iteration: iter,
            code_update_s,
            filter_update_s,
            objective: obj,
            nnz_frac: nnz,
            test_objective: None,
            test_psnr_db: None,
        });
        if let Some(prev) = prev_obj {
            if (prev - obj).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_obj = Some(obj);
    }
    Ok(SbcscOutcome { dictionary: dict, codes, trace })
}

/// How a stream source picks the next signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawPolicy {
    /// Cycle through the items in order.
    Sequential,
    /// Uniform with replacement, seeded per training step.
    UniformRandom,
}

enum Backing {
    Memory(Vec<Signal>),
    Files { paths: Vec<PathBuf>, normalize: Option<NormalizeWindow> },
    Synthetic { count: usize, generate: Box<dyn Fn(u64) -> Signal + Send + Sync> },
}

/// An ordered supplier of training signals. File-backed sources load (and
/// optionally contrast-normalize) images on demand, so a training run's
/// resident state stays independent of the corpus size.
pub struct StreamSource {
    backing: Backing,
    policy: DrawPolicy,
}

impl StreamSource {
    pub fn from_signals(signals: Vec<Signal>, policy: DrawPolicy) -> Result<Self> {
        if signals.is_empty() {
            return Err(Error::EmptyInput("stream has no signals".into()));
        }
        Ok(Self { backing: Backing::Memory(signals), policy })
    }

    pub fn from_files(
        paths: Vec<PathBuf>,
        policy: DrawPolicy,
        normalize: Option<NormalizeWindow>,
    ) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyInput("stream has no files".into()));
        }
        Ok(Self { backing: Backing::Files { paths, normalize }, policy })
    }

    pub fn synthetic(
        count: usize,
        policy: DrawPolicy,
        generate: Box<dyn Fn(u64) -> Signal + Send + Sync>,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyInput("stream has no items".into()));
        }
        Ok(Self { backing: Backing::Synthetic { count, generate }, policy })
    }

    pub fn len(&self) -> usize {
        match &self.backing {
            Backing::Memory(v) => v.len(),
            Backing::Files { paths, .. } => paths.len(),
            Backing::Synthetic { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn item(&self, index: usize) -> Result<Signal> {
        match &self.backing {
            Backing::Memory(v) => Ok(v[index].clone()),
            Backing::Files { paths, normalize } => {
                let img = Signal::load(&paths[index])?;
                match normalize {
                    Some(win) => contrast_normalize(&img, win),
                    None => Ok(img),
                }
            }
            Backing::Synthetic { generate, .. } => Ok(generate(index as u64)),
        }
    }

    /// The step's mini-batch: `eta` signals drawn per the policy.
    /// Deterministic in (seed, step).
    pub fn draw_batch(&self, seed: u64, step: u64, eta: usize) -> Result<Vec<Signal>> {
        let n = self.len();
        match self.policy {
            DrawPolicy::Sequential => (0..eta)
                .map(|j| self.item(((step - 1) as usize * eta + j) % n))
                .collect(),
            DrawPolicy::UniformRandom => {
                use rand::Rng;
                let mut rng = derive_rng(seed, StreamDomain::Draw, step);
                (0..eta).map(|_| self.item(rng.random_range(0..n))).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SocscOutcome {
    pub dictionary: Dictionary,
    pub surrogate: SurrogateState,
    pub trace: TrainTrace,
}

/// Online training: each step draws an eta-sized mini-batch, samples one
/// shared mask, solves every member's masked code problem (sharing the
/// cached factorization when enabled), absorbs each member into the
/// surrogate averages in ascending order, then runs a single warm-started
/// filter update for the whole step.
///
/// With a test set, the dictionary is evaluated at full support (p = 1) at
/// steps 1, 2, 4, 8, ... and at the final step; convergence is declared when
/// consecutive test objectives change by less than `cfg.tol` relatively.
/// Without one, the driver runs exactly `cfg.max_outer` steps.
pub fn train_socsc(
    stream: &StreamSource,
    cfg: &TrainConfig,
    test_set: Option<&[Signal]>,
) -> Result<SocscOutcome> {
    train_socsc_observed(stream, cfg, test_set, |_| {})
}

pub fn train_socsc_observed(
    stream: &StreamSource,
    cfg: &TrainConfig,
    test_set: Option<&[Signal]>,
    mut observer: impl FnMut(&IterationStats),
) -> Result<SocscOutcome> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::EmptyInput("stream has no items".into()));
    }
    if let Some(tests) = test_set {
        check_geometry(tests, cfg.filter_side)?;
    }
    let k = cfg.num_filters;
    let admm = cfg.admm_params();
    let mut dict = Dictionary::random_init(k, cfg.filter_side, cfg.seed)?;
    let mut state = SurrogateState::new(k, cfg.filter_side);
    let mut trace = TrainTrace::new();
    let mut billed = 0.0f64;
    let mut geometry: Option<(usize, usize)> = None;
    let mut prev_test_obj: Option<f64> = None;
    let mut converged = false;

    let mut step = 0u64;
    while step < cfg.max_outer as u64 && !converged {
        step += 1;
        let t_code = Instant::now();
        let batch = stream.draw_batch(cfg.seed, step, cfg.minibatch)?;
        let (h, w) = check_geometry(&batch, cfg.filter_side)?;
        match geometry {
            None => geometry = Some((h, w)),
            Some(g) if g != (h, w) => {
                return Err(Error::shape(format!(
                    "stream geometry changed from {}x{} to {h}x{w}",
                    g.0, g.1
                )))
            }
            _ => {}
        }
        let mask = sample_mask(h, w, k, cfg.subsample_rate, cfg.seed, step)?;
        let op = CodeLinearOp::new(&dict, &mask, None)?;
        let factor = resolve_factor(&op, &admm, cfg.minibatch)?;
        let batch_codes: Vec<CodeMap> = batch
            .par_iter()
            .map(|x| {
                let sol = solve_codes_system(&op, factor.as_ref(), x, cfg.lambda, &admm, None)?;
                mask.upsample(&sol.reduced)
            })
            .collect::<Result<_>>()?;
        // the surrogate counter advances once per member, in batch order
        for (z, x) in batch_codes.iter().zip(&batch) {
            state.update(z, x)?;
        }
        let code_update_s = t_code.elapsed().as_secs_f64();

        let t_filter = Instant::now();
        let upd = update_filters_online(&state, &dict, cfg.sweeps)?;
        dict = upd.dictionary;
        let filter_update_s = t_filter.elapsed().as_secs_f64();
        billed += code_update_s + filter_update_s;

        let obj =
            objective(&batch, &dict, &batch_codes, cfg.lambda)? / batch.len() as f64;
        let nnz = mean_nnz(&batch_codes, cfg.nnz_threshold);

        let evaluate = test_set.is_some()
            && (step.is_power_of_two() || step == cfg.max_outer as u64);
        let (test_objective, test_psnr_db) = if evaluate {
            let (o, p) = evaluate_dictionary(&dict, test_set.unwrap(), cfg)?;
            if let Some(prev) = prev_test_obj {
                if (prev - o).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                    converged = true;
                }
            }
            prev_test_obj = Some(o);
            (Some(o), Some(p))
        } else {
            (None, None)
        };

        trace.push(TraceRow {
            iter: step,
            wall_s: billed,
            objective: obj,
            test_objective,
            test_psnr_db,
            nnz_frac: nnz,
        });
        observer(&IterationStats {
            iteration: step,
            code_update_s,
            filter_update_s,
            objective: obj,
            nnz_frac: nnz,
            test_objective,
            test_psnr_db,
        });
    }
    Ok(SocscOutcome { dictionary: dict, surrogate: state, trace })
}

/// Mean Eq.-1 objective and mean rescaled reconstruction PSNR over a test
/// set, using full-support code inference (evaluation is never subsampled).
pub fn evaluate_dictionary(
    dict: &Dictionary,
    test_set: &[Signal],
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    if test_set.is_empty() {
        return Err(Error::EmptyInput("test set is empty".into()));
    }
    let mut admm = cfg.admm_params();
    // evaluation solves full-support systems (D*K columns); always matrix-free
    admm.quad_mode = crate::config::QuadMode::Iterative;
    let scores: Vec<(f64, f64)> = test_set
        .par_iter()
        .map(|x| {
            let mask = SubsampleMask::full(x.height(), x.width(), dict.num_filters());
            let op = CodeLinearOp::new(dict, &mask, None)?;
            let factor = resolve_factor(&op, &admm, 1)?;
            let sol = solve_codes_system(&op, factor.as_ref(), x, cfg.lambda, &admm, None)?;
            let codes = mask.upsample(&sol.reduced)?;
            let obj = objective(std::slice::from_ref(x), dict, std::slice::from_ref(&codes), cfg.lambda)?;
            let recon = DictOperator::new(dict, x.height(), x.width())?.apply(&codes)?;
            let p = psnr_rescaled(x, &recon)?;
            Ok((obj, p))
        })
        .collect::<Result<_>>()?;
    let n = scores.len() as f64;
    let mean_obj = scores.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_psnr = scores.iter().map(|s| s.1).sum::<f64>() / n;
    Ok((mean_obj, mean_psnr))
}

fn mean_nnz(codes: &[CodeMap], threshold: f64) -> f64 {
    codes.iter().map(|z| nonzero_fraction(z, threshold)).sum::<f64>() / codes.len() as f64
}

fn check_geometry(signals: &[Signal], filter_side: usize) -> Result<(usize, usize)> {
    let Some(first) = signals.first() else {
        return Err(Error::EmptyInput("no signals".into()));
    };
    let (h, w) = (first.height(), first.width());
    if h < filter_side || w < filter_side {
        return Err(Error::shape(format!(
            "signal {h}x{w} smaller than filter side {filter_side}"
        )));
    }
    for (i, s) in signals.iter().enumerate() {
        if s.height() != h || s.width() != w {
            return Err(Error::shape(format!(
                "signal {i} is {}x{}, expected {h}x{w}",
                s.height(),
                s.width()
            )));
        }
    }
    Ok((h, w))
}
