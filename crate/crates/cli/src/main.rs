//! `scsc` — train convolutional sparse coding dictionaries with stochastic
//! code subsampling, and use them for reconstruction and inpainting.

mod commands;
mod io;
mod manifest;
mod mosaic;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scsc::config::{QuadMode, AUTO_FACTOR_CAP, FACTOR_CACHE_CAP};
use scsc::TrainConfig;

/// Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<scsc::Error> for CliError {
    fn from(e: scsc::Error) -> Self {
        use scsc::Error::*;
        match e {
            InvalidParameter { .. } | ShapeMismatch { .. } | EmptyInput(_)
            | FactorCapExceeded { .. } => CliError::Usage(e.to_string()),
            Io(_) | Image(_) | UnsupportedImage(_) | DictionaryFormat(_) | Csv(_) => {
                CliError::Io(e.to_string())
            }
            NonFinite { .. } | Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "scsc",
    version,
    about = "Stochastic spatial-domain convolutional sparse coding",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for per-image parallelism (default: all cores).
    #[arg(long, global = true, env = "SCSC_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum QuadModeArg {
    /// Factor-cache small systems, CG otherwise.
    Auto,
    /// Matrix-free conjugate gradient.
    Cg,
    /// Cached Cholesky of the normal equations.
    Factor,
}

impl QuadModeArg {
    fn resolve(self) -> QuadMode {
        match self {
            QuadModeArg::Auto => QuadMode::Auto { cap: AUTO_FACTOR_CAP },
            QuadModeArg::Cg => QuadMode::Iterative,
            QuadModeArg::Factor => QuadMode::FactorCache { cap: FACTOR_CACHE_CAP },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DrawArg {
    /// Uniform random draws, seeded per step.
    Random,
    /// Cycle through the corpus in order.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalScheduleArg {
    /// Evaluate at steps 1, 2, 4, 8, ... and at the last step.
    Pow2,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Number of dictionary filters K.
    #[arg(long, env = "SCSC_FILTERS", default_value_t = 100)]
    filters: usize,

    /// Filter side length m (odd).
    #[arg(long = "filter-size", env = "SCSC_FILTER_SIZE", default_value_t = 11)]
    filter_size: usize,

    /// Sparsity weight lambda.
    #[arg(long, env = "SCSC_LAMBDA", default_value_t = 1.0)]
    lambda: f64,

    /// Code subsampling rate p in (0, 1]; 1 is the classical solver.
    #[arg(long = "subsample", env = "SCSC_SUBSAMPLE", default_value_t = 1.0)]
    subsample: f64,

    /// ADMM iterations per code solve.
    #[arg(long = "admm-iters", env = "SCSC_ADMM_ITERS", default_value_t = 10)]
    admm_iters: usize,

    /// Augmented Lagrangian penalty (default 10*lambda).
    #[arg(long, env = "SCSC_RHO")]
    rho: Option<f64>,

    /// ADMM over-relaxation factor in (0, 2).
    #[arg(long, env = "SCSC_ALPHA", default_value_t = 1.8)]
    alpha: f64,

    /// Relative objective-change convergence tolerance.
    #[arg(long, env = "SCSC_TOL", default_value_t = 1e-3)]
    tol: f64,

    #[arg(long, env = "SCSC_SEED", default_value_t = 0)]
    seed: u64,

    /// Block-coordinate sweeps per filter update.
    #[arg(long, env = "SCSC_SWEEPS", default_value_t = 1)]
    sweeps: usize,

    /// Quadratic ADMM substep: auto, cg, or factor.
    #[arg(long = "quad-mode", env = "SCSC_QUAD_MODE", value_enum, default_value_t = QuadModeArg::Auto)]
    quad_mode: QuadModeArg,

    /// Relative residual tolerance for the CG substep.
    #[arg(long = "cg-tol", env = "SCSC_CG_TOL", default_value_t = 1e-4)]
    cg_tol: f64,

    /// CG iteration cap per substep.
    #[arg(long = "cg-max-iters", env = "SCSC_CG_MAX_ITERS", default_value_t = 100)]
    cg_max_iters: usize,

    /// |coefficient| threshold for the trace's nonzero fraction.
    #[arg(long = "nnz-threshold", env = "SCSC_NNZ_THRESHOLD", default_value_t = 0.1)]
    nnz_threshold: f64,
}

impl TrainFlags {
    fn to_config(&self, minibatch: usize, max_outer: usize) -> TrainConfig {
        TrainConfig {
            num_filters: self.filters,
            filter_side: self.filter_size,
            lambda: self.lambda,
            subsample_rate: self.subsample,
            admm_iters: self.admm_iters,
            rho: self.rho,
            alpha: self.alpha,
            minibatch,
            max_outer,
            tol: self.tol,
            seed: self.seed,
            quad_mode: self.quad_mode.resolve(),
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
            sweeps: self.sweeps,
            nnz_threshold: self.nnz_threshold,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a dictionary in batch mode (SBCSC) over a fixed image set.
    TrainBatch {
        /// Input images or directories (8-bit grayscale PNG or binary PGM).
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,

        #[command(flatten)]
        train: TrainFlags,

        /// Maximum outer iterations.
        #[arg(long = "max-outer", env = "SCSC_MAX_OUTER", default_value_t = 20)]
        max_outer: usize,

        /// Skip contrast normalization of the inputs.
        #[arg(long = "no-normalize", env = "SCSC_NO_NORMALIZE")]
        no_normalize: bool,

        /// Also write a filter mosaic PNG.
        #[arg(long, env = "SCSC_MOSAIC")]
        mosaic: bool,

        /// Output directory.
        #[arg(long, env = "SCSC_OUT")]
        out: PathBuf,
    },

    /// Train a dictionary online (SOCSC) over a stream of images.
    TrainOnline {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,

        #[command(flatten)]
        train: TrainFlags,

        /// Training steps (each consumes one mini-batch).
        #[arg(long, env = "SCSC_STEPS", default_value_t = 100)]
        steps: usize,

        /// Mini-batch size eta.
        #[arg(long, env = "SCSC_MINIBATCH", default_value_t = 1)]
        minibatch: usize,

        /// Held-out images for test-objective / test-PSNR columns.
        #[arg(long = "test-dir", env = "SCSC_TEST_DIR")]
        test_dir: Option<PathBuf>,

        /// When to evaluate on the test set.
        #[arg(long = "eval-schedule", env = "SCSC_EVAL_SCHEDULE", value_enum, default_value_t = EvalScheduleArg::Pow2)]
        eval_schedule: EvalScheduleArg,

        /// Draw policy for the stream.
        #[arg(long, env = "SCSC_DRAW", value_enum, default_value_t = DrawArg::Random)]
        draw: DrawArg,

        #[arg(long = "no-normalize", env = "SCSC_NO_NORMALIZE")]
        no_normalize: bool,

        #[arg(long, env = "SCSC_MOSAIC")]
        mosaic: bool,

        #[arg(long, env = "SCSC_OUT")]
        out: PathBuf,
    },

    /// Sparse-code images with a trained dictionary and report PSNR.
    Reconstruct {
        /// Trained dictionary (.cscd).
        #[arg(long, env = "SCSC_DICT")]
        dict: PathBuf,

        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,

        #[arg(long, env = "SCSC_LAMBDA", default_value_t = 1.0)]
        lambda: f64,

        #[arg(long = "admm-iters", env = "SCSC_ADMM_ITERS", default_value_t = 10)]
        admm_iters: usize,

        #[arg(long = "no-normalize", env = "SCSC_NO_NORMALIZE")]
        no_normalize: bool,

        #[arg(long, env = "SCSC_OUT")]
        out: PathBuf,
    },

    /// Reconstruct images from partial pixel observations.
    Inpaint {
        #[arg(long, env = "SCSC_DICT")]
        dict: PathBuf,

        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,

        /// Observation rate q in (0, 1].
        #[arg(long, env = "SCSC_OBSERVE", default_value_t = 0.5)]
        observe: f64,

        #[arg(long, env = "SCSC_LAMBDA", default_value_t = 0.4)]
        lambda: f64,

        #[arg(long = "admm-iters", env = "SCSC_ADMM_ITERS", default_value_t = 50)]
        admm_iters: usize,

        /// Random observation masks per image (PSNR is averaged).
        #[arg(long, env = "SCSC_TRIALS", default_value_t = 5)]
        trials: u64,

        #[arg(long, env = "SCSC_SEED", default_value_t = 0)]
        seed: u64,

        /// Copy observed pixels over the reconstruction.
        #[arg(long = "paste-observed", env = "SCSC_PASTE_OBSERVED")]
        paste_observed: bool,

        #[arg(long = "no-normalize", env = "SCSC_NO_NORMALIZE")]
        no_normalize: bool,

        #[arg(long, env = "SCSC_OUT")]
        out: PathBuf,
    },

    /// Sweep subsampling rates and record per-iteration phase timings.
    Bench {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,

        #[command(flatten)]
        train: TrainFlags,

        /// Comma-separated subsampling rates to sweep.
        #[arg(long, env = "SCSC_RATES", default_value = "1,0.5,0.2,0.1,0.05", value_delimiter = ',')]
        rates: Vec<f64>,

        /// Outer iterations per rate.
        #[arg(long, env = "SCSC_ITERS", default_value_t = 5)]
        iters: usize,

        #[arg(long = "no-normalize", env = "SCSC_NO_NORMALIZE")]
        no_normalize: bool,

        #[arg(long, env = "SCSC_OUT")]
        out: PathBuf,
    },

    /// Re-run a recorded manifest (reproduces traces bit-exactly).
    Rerun {
        #[arg(long, env = "SCSC_MANIFEST")]
        manifest: PathBuf,

        #[arg(long, env = "SCSC_OUT")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::TrainBatch { input, train, max_outer, no_normalize, mosaic, out } => {
            let params = commands::BatchParams {
                config: train.to_config(1, max_outer),
                normalize: !no_normalize,
                mosaic,
            };
            let inputs = io::list_inputs(&input)?;
            commands::run_train_batch(&params, &inputs, &out)
        }
        Command::TrainOnline {
            input,
            train,
            steps,
            minibatch,
            test_dir,
            eval_schedule: EvalScheduleArg::Pow2,
            draw,
            no_normalize,
            mosaic,
            out,
        } => {
            let test_inputs = match &test_dir {
                Some(dir) => io::list_inputs(std::slice::from_ref(dir))?,
                None => Vec::new(),
            };
            let params = commands::OnlineParams {
                config: train.to_config(minibatch, steps),
                normalize: !no_normalize,
                mosaic,
                sequential_draw: draw == DrawArg::Sequential,
                eval_schedule: "pow2".to_string(),
                test_inputs,
            };
            let inputs = io::list_inputs(&input)?;
            commands::run_train_online(&params, &inputs, &out)
        }
        Command::Reconstruct { dict, input, lambda, admm_iters, no_normalize, out } => {
            let params = commands::ReconstructParams {
                dict,
                lambda,
                admm_iters,
                normalize: !no_normalize,
            };
            let inputs = io::list_inputs(&input)?;
            commands::run_reconstruct(&params, &inputs, &out)
        }
        Command::Inpaint {
            dict,
            input,
            observe,
            lambda,
            admm_iters,
            trials,
            seed,
            paste_observed,
            no_normalize,
            out,
        } => {
            let params = commands::InpaintParams {
                dict,
                observe,
                lambda,
                admm_iters,
                trials,
                seed,
                paste_observed,
                normalize: !no_normalize,
            };
            let inputs = io::list_inputs(&input)?;
            commands::run_inpaint(&params, &inputs, &out)
        }
        Command::Bench { input, train, rates, iters, no_normalize, out } => {
            let params = commands::BenchParams {
                config: train.to_config(1, iters),
                rates,
                normalize: !no_normalize,
            };
            let inputs = io::list_inputs(&input)?;
            commands::run_bench(&params, &inputs, &out)
        }
        Command::Rerun { manifest, out } => commands::run_rerun(&manifest, &out),
    }
}
