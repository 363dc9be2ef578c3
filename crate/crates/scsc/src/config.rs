//! Training configuration and ADMM solver parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the quadratic ADMM substep solves (A^T A + rho I) u = b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum QuadMode {
    /// Matrix-free conjugate gradient.
    Iterative,
    /// Assemble the normal equations and cache a Cholesky factorization
    /// (reusable across right-hand sides that share the mask). Errors if the
    /// system exceeds `cap` columns.
    FactorCache { cap: usize },
    /// Factor-cache when the system is at most `cap` columns, CG otherwise.
    Auto { cap: usize },
}

/// Columns above which `Auto` falls back to CG. Dense normal equations grow
/// quadratically in memory and cubically in factorization time.
pub const AUTO_FACTOR_CAP: usize = 2_500;

/// `Auto` only factors when the factorization will be reused across at
/// least this many solves (all images of a batch iteration, all members of
/// a mini-batch); a one-shot solve is cheaper by CG.
pub const AUTO_FACTOR_REUSE: usize = 8;

/// Hard cap for explicitly requested factor-caching.
pub const FACTOR_CACHE_CAP: usize = 20_000;

impl Default for QuadMode {
    fn default() -> Self {
        QuadMode::Auto { cap: AUTO_FACTOR_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    /// Number of ADMM iterations (the paper's fixed budget is 10).
    pub iterations: usize,
    /// Augmented Lagrangian penalty rho.
    pub rho: f64,
    /// Over-relaxation factor alpha in (0, 2).
    pub alpha: f64,
    pub quad_mode: QuadMode,
    /// Relative residual tolerance for the CG substep.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl AdmmParams {
    /// Paper defaults for sparsity weight `lambda`: 10 iterations,
    /// rho = 10 lambda, alpha = 1.8.
    pub fn for_lambda(lambda: f64) -> Self {
        Self {
            iterations: 10,
            rho: 10.0 * lambda,
            alpha: 1.8,
            quad_mode: QuadMode::default(),
            cg_tol: 1e-4,
            cg_max_iters: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::param("admm.iterations", "must be >= 1"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::param("admm.rho", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::param("admm.alpha", "must be in (0, 2)"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::param("admm.cg_tol", "must be > 0"));
        }
        if self.cg_max_iters < 1 {
            return Err(Error::param("admm.cg_max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Full training configuration for the SBCSC / SOCSC drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of dictionary filters K.
    pub num_filters: usize,
    /// Filter side length m (odd).
    pub filter_side: usize,
    /// Sparsity weight lambda.
    pub lambda: f64,
    /// Code subsampling rate p in (0, 1].
    pub subsample_rate: f64,
    /// ADMM iterations per code solve.
    pub admm_iters: usize,
    /// Penalty rho; `None` means the paper default 10*lambda.
    pub rho: Option<f64>,
    /// Over-relaxation alpha.
    pub alpha: f64,
    /// Mini-batch size eta (online driver only).
    pub minibatch: usize,
    /// Maximum outer iterations (batch) or training steps (online).
    pub max_outer: usize,
    /// Relative objective-change convergence tolerance.
    pub tol: f64,
    pub seed: u64,
    pub quad_mode: QuadMode,
    /// Relative residual tolerance of the CG substep.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Block-coordinate sweeps per filter update.
    pub sweeps: usize,
    /// |coefficient| threshold used for the trace's nonzero fraction.
    pub nnz_threshold: f64,
}

impl TrainConfig {
    pub fn new(num_filters: usize, filter_side: usize) -> Self {
        Self {
            num_filters,
            filter_side,
            lambda: 1.0,
            subsample_rate: 1.0,
            admm_iters: 10,
            rho: None,
            alpha: 1.8,
            minibatch: 1,
            max_outer: 20,
            tol: 1e-3,
            seed: 0,
            quad_mode: QuadMode::default(),
            cg_tol: 1e-4,
            cg_max_iters: 100,
            sweeps: 1,
            nnz_threshold: 0.1,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or(10.0 * self.lambda)
    }

    pub fn admm_params(&self) -> AdmmParams {
        AdmmParams {
            iterations: self.admm_iters,
            rho: self.rho(),
            alpha: self.alpha,
            quad_mode: self.quad_mode,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_filters < 1 {
            return Err(Error::param("num_filters", "must be >= 1"));
        }
        if self.filter_side % 2 == 0 || self.filter_side == 0 {
            return Err(Error::param("filter_side", "must be odd and >= 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::param("lambda", "must be > 0"));
        }
        if !(self.subsample_rate > 0.0 && self.subsample_rate <= 1.0) {
            return Err(Error::param("subsample_rate", "must be in (0, 1]"));
        }
        if !(self.rho() > 0.0) {
            return Err(Error::param("rho", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::param("alpha", "must be in (0, 2)"));
        }
        if self.minibatch < 1 {
            return Err(Error::param("minibatch", "must be >= 1"));
        }
        if self.max_outer < 1 {
            return Err(Error::param("max_outer", "must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tol", "must be >= 0"));
        }
        if self.sweeps < 1 {
            return Err(Error::param("sweeps", "must be >= 1"));
        }
        if !(self.nnz_threshold >= 0.0) {
            return Err(Error::param("nnz_threshold", "must be >= 0"));
        }
        self.admm_params().validate()
    }
}
