//! Dense brute-force references for testing the matrix-free solvers.
//!
//! Everything here materializes small problems explicitly (index arithmetic
//! only, no shared numerical kernels with the main crate) and solves them by
//! slow-but-certain first-order methods. Instances are capped at oracle
//! scale; these are test fixtures, not production paths.
//!
//! Conventions match the main crate: code index g = k*D + y*W + x, flat
//! filter index = k*M + u*m + v with M = m*m and center c = (m-1)/2.

use nalgebra::{DMatrix, DVector};
use scsc::codes::CodeMap;
use scsc::dictionary::Dictionary;
use scsc::error::{Error, Result};
use scsc::mask::SubsampleMask;
use scsc::signal::Signal;

pub const MAX_PIXELS: usize = 256;
pub const MAX_FILTERS: usize = 4;
pub const MAX_SIDE: usize = 5;

fn check_caps(pixels: usize, filters: usize, side: usize) -> Result<()> {
    if pixels > MAX_PIXELS || filters > MAX_FILTERS || side > MAX_SIDE {
        return Err(Error::InvalidParameter {
            name: "oracle caps",
            reason: format!(
                "D={pixels} (<= {MAX_PIXELS}), K={filters} (<= {MAX_FILTERS}), m={side} (<= {MAX_SIDE})"
            ),
        });
    }
    Ok(())
}

/// The D x DK stacked convolution matrix: column (k, i, j) holds filter k
/// placed at (i, j), truncated at the border.
pub fn materialize_dict_matrix(
    dict: &Dictionary,
    height: usize,
    width: usize,
) -> Result<DMatrix<f64>> {
    let d = height * width;
    let k = dict.num_filters();
    let m = dict.side();
    check_caps(d, k, m)?;
    let c = (m - 1) as isize / 2;
    let mut out = DMatrix::zeros(d, d * k);
    for kk in 0..k {
        let f = dict.filter(kk);
        for i in 0..height as isize {
            for j in 0..width as isize {
                let col = kk * d + (i as usize) * width + j as usize;
                for u in 0..m as isize {
                    for v in 0..m as isize {
                        let y = i + u - c;
                        let x = j + v - c;
                        if y >= 0 && y < height as isize && x >= 0 && x < width as isize {
                            out[((y as usize) * width + x as usize, col)] =
                                f[[u as usize, v as usize]];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The D x MK code matrix: column (k, u, v) holds code map k shifted by
/// (u - c, v - c), truncated at the border.
pub fn materialize_code_matrix(codes: &CodeMap, side: usize) -> Result<DMatrix<f64>> {
    let (h, w) = (codes.height(), codes.width());
    let d = h * w;
    let k = codes.num_maps();
    check_caps(d, k, side)?;
    let m = side;
    let cm = m * m;
    let c = (m - 1) as isize / 2;
    let mut out = DMatrix::zeros(d, cm * k);
    for kk in 0..k {
        let z = codes.map(kk);
        for u in 0..m as isize {
            for v in 0..m as isize {
                let col = kk * cm + (u as usize) * m + v as usize;
                for i in 0..h as isize {
                    for j in 0..w as isize {
                        let y = i + u - c;
                        let x = j + v - c;
                        if y >= 0 && y < h as isize && x >= 0 && x < w as isize {
                            out[((y as usize) * w + x as usize, col)] =
                                z[[i as usize, j as usize]];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The |mask| x DK selection matrix with exactly one 1 per row.
pub fn materialize_mask_matrix(mask: &SubsampleMask) -> Result<DMatrix<f64>> {
    check_caps(mask.signal_len(), mask.num_filters(), 1)?;
    let mut out = DMatrix::zeros(mask.len(), mask.code_len());
    for (row, &g) in mask.indices().iter().enumerate() {
        out[(row, g)] = 1.0;
    }
    Ok(out)
}

pub fn signal_vector(signal: &Signal) -> DVector<f64> {
    DVector::from_iterator(signal.len(), signal.pixels().iter().copied())
}

pub fn codes_vector(codes: &CodeMap) -> DVector<f64> {
    DVector::from_iterator(
        codes.total_len(),
        codes.maps().iter().flat_map(|m| m.iter().copied()),
    )
}

/// An explicitly materialized masked instance.
pub struct DenseProblem {
    pub dict_matrix: DMatrix<f64>,
    pub code_matrix: DMatrix<f64>,
    pub mask_matrix: DMatrix<f64>,
    pub signal: DVector<f64>,
}

impl DenseProblem {
    pub fn build(
        dict: &Dictionary,
        codes: &CodeMap,
        mask: &SubsampleMask,
        signal: &Signal,
    ) -> Result<Self> {
        Ok(Self {
            dict_matrix: materialize_dict_matrix(dict, signal.height(), signal.width())?,
            code_matrix: materialize_code_matrix(codes, dict.side())?,
            mask_matrix: materialize_mask_matrix(mask)?,
            signal: signal_vector(signal),
        })
    }

    /// A = D M^T, the masked design matrix.
    pub fn masked_design(&self) -> DMatrix<f64> {
        &self.dict_matrix * self.mask_matrix.transpose()
    }
}

pub fn lasso_objective(a: &DMatrix<f64>, x: &DVector<f64>, lambda: f64, u: &DVector<f64>) -> f64 {
    let r = a * u - x;
    0.5 * r.norm_squared() + lambda * u.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

fn spectral_bound(g: &DMatrix<f64>) -> f64 {
    // power iteration from a fixed deterministic start
    let n = g.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lam = 1.0f64;
    for _ in 0..200 {
        let gv = g * &v;
        let norm = gv.norm();
        if norm == 0.0 {
            return 1.0;
        }
        lam = norm;
        v = gv / norm;
    }
    lam * 1.05
}

/// FISTA on min 1/2||A u - x||^2 + lambda ||u||_1, run until the subgradient
/// optimality conditions hold to absolute tolerance `tol`:
/// |g_i + lambda sign(u_i)| <= tol on the support and |g_i| <= lambda + tol
/// off it, where g = A^T (A u - x). Errors after 100_000 iterations.
pub fn lasso_reference(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    lambda: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter { name: "lambda", reason: "must be >= 0".into() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be > 0".into() });
    }
    let n = a.ncols();
    let gram = a.transpose() * a;
    let atx = a.transpose() * x;
    let step = 1.0 / spectral_bound(&gram);

    let certified = |u: &DVector<f64>| -> bool {
        let g = &gram * u - &atx;
        u.iter().zip(g.iter()).all(|(&ui, &gi)| {
            if ui != 0.0 {
                (gi + lambda * ui.signum()).abs() <= tol
            } else {
                gi.abs() <= lambda + tol
            }
        })
    };

    let mut u = DVector::zeros(n);
    let mut y = u.clone();
    let mut theta = 1.0f64;
    let mut prev_obj = lasso_objective(a, x, lambda, &u);
    for it in 0..100_000usize {
        let grad = &gram * &y - &atx;
        let mut next = &y - step * grad;
        for v in next.iter_mut() {
            *v = soft(*v, step * lambda);
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        y = &next + momentum * (&next - &u);
        u = next;
        theta = theta_next;
        if it % 10 == 9 {
            let obj = lasso_objective(a, x, lambda, &u);
            if obj > prev_obj {
                // restart momentum when acceleration overshoots
                y = u.clone();
                theta = 1.0;
            }
            prev_obj = obj;
            if certified(&u) {
                return Ok(u);
            }
        }
    }
    if certified(&u) {
        return Ok(u);
    }
    Err(Error::Numerical("lasso_reference did not certify within 100000 iterations".into()))
}

pub fn qcqp_objective(c: &DMatrix<f64>, b: &DVector<f64>, f: &DVector<f64>) -> f64 {
    0.5 * f.dot(&(c * f)) - f.dot(b)
}

const QCQP_TOL: f64 = 1e-8;

/// Projected gradient on min 1/2 f^T C f - f^T B over a product of unit
/// balls of length `block_len`, run to projected-gradient stationarity 1e-8.
pub fn qcqp_reference(
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    block_len: usize,
) -> Result<DVector<f64>> {
    let n = b.len();
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::ShapeMismatch { context: format!("C is {}x{}, B has {n}", c.nrows(), c.ncols()) });
    }
    if block_len == 0 || n % block_len != 0 {
        return Err(Error::InvalidParameter {
            name: "block_len",
            reason: format!("{block_len} does not divide {n}"),
        });
    }
    let step = 1.0 / spectral_bound(c);
    let project = |f: &mut DVector<f64>| {
        for blk in 0..n / block_len {
            let mut view = f.rows_mut(blk * block_len, block_len);
            let norm = view.norm();
            if norm > 1.0 {
                view /= norm;
            }
        }
    };
    let mut f = DVector::zeros(n);
    for _ in 0..200_000usize {
        let grad = c * &f - b;
        let mut next = &f - step * &grad;
        project(&mut next);
        let advance = (&next - &f).norm();
        f = next;
        if advance <= QCQP_TOL * (1.0 + f.norm()) {
            return Ok(f);
        }
    }
    Err(Error::Numerical("qcqp_reference did not reach stationarity".into()))
}
