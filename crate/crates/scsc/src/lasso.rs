//! The masked code-update subproblem: an ADMM solver for
//! min 1/2 ||x - D M^T u||^2 + lambda ||u||_1 over the selected code subset,
//! with over-relaxation and a choice of quadratic substep (matrix-free CG or
//! a cached Cholesky factorization of the normal equations).

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::config::{AdmmParams, QuadMode};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::mask::{ObservationMask, SubsampleMask};
use crate::operators::DictOperator;
use crate::signal::Signal;

/// Elementwise soft thresholding, the proximal map of kappa*||.||_1.
pub fn shrinkage(v: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if !(kappa >= 0.0) {
        return Err(Error::param("kappa", "must be >= 0"));
    }
    Ok(v.iter().map(|&x| shrink_scalar(x, kappa)).collect())
}

#[inline]
fn shrink_scalar(x: f64, kappa: f64) -> f64 {
    if x > kappa {
        x - kappa
    } else if x < -kappa {
        x + kappa
    } else {
        0.0
    }
}

/// The linear operator A = W D M^T of a masked code solve: the stacked
/// convolution restricted to the mask's columns, optionally composed with a
/// pixel observation selector W (inpainting).
#[derive(Debug, Clone, Copy)]
pub struct CodeLinearOp<'a> {
    op: DictOperator<'a>,
    mask: &'a SubsampleMask,
    observed: Option<&'a ObservationMask>,
}

impl<'a> CodeLinearOp<'a> {
    pub fn new(
        dict: &'a Dictionary,
        mask: &'a SubsampleMask,
        observed: Option<&'a ObservationMask>,
    ) -> Result<Self> {
        let op = DictOperator::new(dict, mask.height(), mask.width())?;
        if mask.num_filters() != dict.num_filters() {
            return Err(Error::shape(format!(
                "mask has {} filters, dictionary {}",
                mask.num_filters(),
                dict.num_filters()
            )));
        }
        if let Some(w) = observed {
            if w.height() != mask.height() || w.width() != mask.width() {
                return Err(Error::shape("observation mask vs signal geometry"));
            }
        }
        Ok(Self { op, mask, observed })
    }

    pub fn columns(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &SubsampleMask {
        self.mask
    }

    pub fn dict(&self) -> &Dictionary {
        self.op.dict()
    }

    /// grid = A u.
    pub fn apply_into(&self, u: &[f64], grid: &mut Array2<f64>) {
        self.op.apply_masked_into(self.mask, u, grid);
        if let Some(w) = self.observed {
            w.project(grid);
        }
    }

    /// out = A^T grid, assuming `grid` is already in the range of W (callers
    /// pass residuals of W-projected quantities).
    pub fn adjoint_into(&self, grid: &Array2<f64>, out: &mut [f64]) {
        self.op.adjoint_masked_into(self.mask, grid, out);
    }

    /// A^T (W x) for the data term.
    pub fn adjoint_signal(&self, signal: &Signal) -> Result<Vec<f64>> {
        if signal.height() != self.mask.height() || signal.width() != self.mask.width() {
            return Err(Error::shape("signal vs mask geometry"));
        }
        let mut grid = signal.pixels().clone();
        if let Some(w) = self.observed {
            w.project(&mut grid);
        }
        let mut out = vec![0.0; self.columns()];
        self.adjoint_into(&grid, &mut out);
        Ok(out)
    }

    /// out = (A^T A + rho I) u.
    fn normal_apply_into(&self, rho: f64, u: &[f64], grid: &mut Array2<f64>, out: &mut [f64]) {
        self.apply_into(u, grid);
        self.adjoint_into(grid, out);
        for (o, &ui) in out.iter_mut().zip(u) {
            *o += rho * ui;
        }
    }

    /// Assemble A^T A + rho I explicitly (dense, |mask| x |mask|).
    fn assemble_normal(&self, rho: f64) -> DMatrix<f64> {
        let n = self.columns();
        let (h, w) = (self.mask.height(), self.mask.width());
        let dict = self.op.dict();
        let (m, c) = (dict.side(), dict.center());
        // Per-pixel lists of (column, filter weight) covering that pixel.
        let mut pixel_rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); h * w];
        for (t, e) in self.mask.entries().iter().enumerate() {
            let filter = dict.filter(e.filter);
            let u_lo = c.saturating_sub(e.row);
            let u_hi = (h + c - e.row).min(m);
            let v_lo = c.saturating_sub(e.col);
            let v_hi = (w + c - e.col).min(m);
            for u in u_lo..u_hi {
                let y = e.row + u - c;
                for v in v_lo..v_hi {
                    let x = e.col + v - c;
                    if let Some(om) = self.observed {
                        if !om.grid()[[y, x]] {
                            continue;
                        }
                    }
                    let fv = filter[[u, v]];
                    if fv != 0.0 {
                        pixel_rows[y * w + x].push((t as u32, fv));
                    }
                }
            }
        }
        let mut ata = DMatrix::zeros(n, n);
        for row in &pixel_rows {
            for (i, &(a, fa)) in row.iter().enumerate() {
                for &(b, fb) in &row[i..] {
                    ata[(a as usize, b as usize)] += fa * fb;
                }
            }
        }
        for i in 0..n {
            ata[(i, i)] += rho;
            for j in (i + 1)..n {
                ata[(j, i)] = ata[(i, j)];
            }
        }
        ata
    }
}

/// Cached Cholesky factorization of (A^T A + rho I), reusable across every
/// right-hand side that shares the same dictionary and mask (all members of
/// a mini-batch, all images of a batch iteration).
pub struct FactorCache {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    columns: usize,
    rho: f64,
}

impl FactorCache {
    pub fn build(op: &CodeLinearOp<'_>, rho: f64, cap: usize) -> Result<Self> {
        let n = op.columns();
        if n > cap {
            return Err(Error::FactorCapExceeded { columns: n, cap });
        }
        if !(rho > 0.0) {
            return Err(Error::param("rho", "must be > 0"));
        }
        let normal = op.assemble_normal(rho);
        let chol = nalgebra::Cholesky::new(normal)
            .ok_or_else(|| Error::Numerical("normal equations not positive definite".into()))?;
        Ok(Self { chol, columns: n, rho })
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.chol.solve(&b).as_slice().to_vec()
    }
}

/// Pick the quadratic substep for this operator per the configured mode.
/// `FactorCache` and `Auto` fall back to CG when the system exceeds the
/// cap; `Auto` additionally requires the factorization to be shared across
/// at least [`crate::config::AUTO_FACTOR_REUSE`] solves (`reuse` is how many
/// right-hand sides the caller will solve with the same dictionary + mask).
pub fn resolve_factor(
    op: &CodeLinearOp<'_>,
    params: &AdmmParams,
    reuse: usize,
) -> Result<Option<FactorCache>> {
    let cap = match params.quad_mode {
        QuadMode::Iterative => return Ok(None),
        QuadMode::Auto { .. } if reuse < crate::config::AUTO_FACTOR_REUSE => return Ok(None),
        QuadMode::FactorCache { cap } | QuadMode::Auto { cap } => cap,
    };
    match FactorCache::build(op, params.rho, cap) {
        Ok(f) => Ok(Some(f)),
        Err(Error::FactorCapExceeded { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Result of one masked code solve.
#[derive(Debug, Clone)]
pub struct CodeSolution {
    /// The reduced solution z-tilde (length |mask|), the shrinkage iterate.
    pub reduced: Vec<f64>,
    /// Total CG iterations across all ADMM steps (0 with a factor cache).
    pub cg_iterations: usize,
    /// False if any CG substep hit its iteration cap before its tolerance.
    /// ADMM tolerates inexact substeps, so this is advisory.
    pub cg_converged: bool,
    pub used_factor_cache: bool,
}

/// Solve the masked LASSO for one signal, building the operator internally.
pub fn solve_codes(
    signal: &Signal,
    dict: &Dictionary,
    mask: &SubsampleMask,
    lambda: f64,
    params: &AdmmParams,
    warm: Option<&[f64]>,
) -> Result<CodeSolution> {
    let op = CodeLinearOp::new(dict, mask, None)?;
    let factor = resolve_factor(&op, params, 1)?;
    solve_codes_system(&op, factor.as_ref(), signal, lambda, params, warm)
}

/// Solve with a caller-provided operator and optional shared factorization.
pub fn solve_codes_system(
    op: &CodeLinearOp<'_>,
    factor: Option<&FactorCache>,
    signal: &Signal,
    lambda: f64,
    params: &AdmmParams,
    warm: Option<&[f64]>,
) -> Result<CodeSolution> {
    params.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::param("lambda", "must be >= 0"));
    }
    let n = op.columns();
    if let Some(w) = warm {
        if w.len() != n {
            return Err(Error::shape(format!("warm start {} vs {} columns", w.len(), n)));
        }
    }
    if let Some(f) = factor {
        if f.columns() != n {
            return Err(Error::shape("factor cache built for a different mask"));
        }
        if f.rho() != params.rho {
            return Err(Error::param("rho", "factor cache was built with a different rho"));
        }
    }

    let rho = params.rho;
    let alpha = params.alpha;
    let kappa = lambda / rho;
    let atx = op.adjoint_signal(signal)?;

    let mut grid = Array2::zeros((signal.height(), signal.width()));
    let mut primal = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut split = vec![0.0; n];
    let mut dual = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut cg = CgWorkspace::new(n);

    let mut cg_iterations = 0;
    let mut cg_converged = true;
    for _ in 0..params.iterations {
        for i in 0..n {
            rhs[i] = atx[i] + rho * (split[i] - dual[i]);
        }
        match factor {
            Some(f) => primal = f.solve(&rhs),
            None => {
                let (iters, ok) =
                    cg.solve(op, rho, &rhs, &mut primal, params.cg_tol, params.cg_max_iters, &mut grid);
                cg_iterations += iters;
                cg_converged &= ok;
            }
        }
        // over-relax, shrink, dual ascent
        for i in 0..n {
            let relaxed = alpha * primal[i] + (1.0 - alpha) * split[i];
            let t = relaxed + dual[i];
            let s = shrink_scalar(t, kappa);
            dual[i] = t - s;
            split[i] = s;
        }
    }

    Ok(CodeSolution {
        reduced: split,
        cg_iterations,
        cg_converged,
        used_factor_cache: factor.is_some(),
    })
}

/// LASSO optimality gaps for a candidate solution: the max violation of
/// |[A^T(Au - Wx)]_i + lambda*sign(u_i)| over the support, and the max
/// |[A^T(Au - Wx)]_i| over zero coordinates. At an exact optimum the first
/// is 0 and the second is at most lambda.
pub fn kkt_gaps(
    op: &CodeLinearOp<'_>,
    signal: &Signal,
    solution: &[f64],
    lambda: f64,
) -> Result<(f64, f64)> {
    if solution.len() != op.columns() {
        return Err(Error::shape("solution length vs columns"));
    }
    let mut grid = Array2::zeros((signal.height(), signal.width()));
    op.apply_into(solution, &mut grid);
    let mut wx = signal.pixels().clone();
    if let Some(w) = op.observed {
        w.project(&mut wx);
    }
    grid -= &wx;
    let mut grad = vec![0.0; solution.len()];
    op.adjoint_into(&grid, &mut grad);
    let mut support_gap = 0.0f64;
    let mut zero_max = 0.0f64;
    for (&u, &g) in solution.iter().zip(&grad) {
        if u != 0.0 {
            support_gap = support_gap.max((g + lambda * u.signum()).abs());
        } else {
            zero_max = zero_max.max(g.abs());
        }
    }
    Ok((support_gap, zero_max))
}

/// Conjugate gradient on the normal equations, warm-started from `x`.
struct CgWorkspace {
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl CgWorkspace {
    fn new(n: usize) -> Self {
        Self { r: vec![0.0; n], p: vec![0.0; n], ap: vec![0.0; n] }
    }

    fn solve(
        &mut self,
        op: &CodeLinearOp<'_>,
        rho: f64,
        rhs: &[f64],
        x: &mut [f64],
        tol: f64,
        max_iters: usize,
        grid: &mut Array2<f64>,
    ) -> (usize, bool) {
        let n = rhs.len();
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rhs_norm == 0.0 {
            x.fill(0.0);
            return (0, true);
        }
        op.normal_apply_into(rho, x, grid, &mut self.ap);
        for i in 0..n {
            self.r[i] = rhs[i] - self.ap[i];
            self.p[i] = self.r[i];
        }
        let mut rs: f64 = self.r.iter().map(|v| v * v).sum();
        let target = tol * rhs_norm;
        let mut iters = 0;
        while rs.sqrt() > target {
            if iters >= max_iters {
                return (iters, false);
            }
            op.normal_apply_into(rho, &self.p, grid, &mut self.ap);
            let pap: f64 = self.p.iter().zip(&self.ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                // numerically exhausted search direction
                return (iters, rs.sqrt() <= target);
            }
            let step = rs / pap;
            for i in 0..n {
                x[i] += step * self.p[i];
                self.r[i] -= step * self.ap[i];
            }
            let rs_new: f64 = self.r.iter().map(|v| v * v).sum();
            let beta = rs_new / rs;
            for i in 0..n {
                self.p[i] = self.r[i] + beta * self.p[i];
            }
            rs = rs_new;
            iters += 1;
        }
        (iters, true)
    }
}
