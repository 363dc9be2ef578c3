//! Dictionary updates: block coordinate descent over per-filter unit balls,
//! for the batch quadratic (residual form) and the online surrogate
//! quadratic, plus the surrogate running averages.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::codes::CodeMap;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::operators::{CodeOperator, DictOperator};
use crate::signal::Signal;

/// Running averages C = (1/t) sum_i Z_i^T Z_i and B = (1/t) sum_i Z_i^T x_i,
/// carrying everything the online filter update needs in O((KM)^2) memory,
/// independent of how many images have been seen.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateState {
    c: DMatrix<f64>,
    b: DVector<f64>,
    count: u64,
    num_filters: usize,
    side: usize,
}

impl SurrogateState {
    pub fn new(num_filters: usize, side: usize) -> Self {
        let km = num_filters * side * side;
        Self {
            c: DMatrix::zeros(km, km),
            b: DVector::zeros(km),
            count: 0,
            num_filters,
            side,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Absorb one (codes, signal) observation:
    /// C_t = ((t-1)/t) C_{t-1} + (1/t) Z^T Z, likewise for B with Z^T x.
    pub fn update(&mut self, codes: &CodeMap, signal: &Signal) -> Result<()> {
        if codes.num_maps() != self.num_filters {
            return Err(Error::shape(format!(
                "codes have {} maps, surrogate tracks {}",
                codes.num_maps(),
                self.num_filters
            )));
        }
        if codes.height() != signal.height() || codes.width() != signal.width() {
            return Err(Error::shape("codes vs signal geometry"));
        }
        let zop = CodeOperator::new(codes, self.side)?;
        let t = self.count + 1;
        let keep = (t - 1) as f64 / t as f64;
        let fresh = 1.0 / t as f64;
        self.c *= keep;
        self.b *= keep;
        zop.add_scaled_gram(fresh, &mut self.c)?;
        let ztx = zop.adjoint(signal.pixels())?;
        for (bi, &zi) in self.b.iter_mut().zip(&ztx) {
            *bi += fresh * zi;
        }
        self.count = t;
        Ok(())
    }
}

/// 1/2 f^T C f - f^T B at the dictionary's flat filter vector.
pub fn surrogate_objective(state: &SurrogateState, dict: &Dictionary) -> Result<f64> {
    if dict.num_filters() != state.num_filters || dict.side() != state.side {
        return Err(Error::shape("dictionary vs surrogate geometry"));
    }
    let f = DVector::from_vec(dict.to_flat());
    Ok(0.5 * f.dot(&(&state.c * &f)) - f.dot(&state.b))
}

/// A filter update's result. `degenerate_blocks` lists filters whose
/// quadratic had zero curvature (no nonzero codes touch them); those filters
/// are left unchanged rather than renormalized noise.
#[derive(Debug, Clone)]
pub struct FilterUpdate {
    pub dictionary: Dictionary,
    pub degenerate_blocks: Vec<usize>,
}

/// Batch dictionary update: block coordinate descent on
/// 1/2 sum_i ||x_i - Z_i f||^2 subject to per-filter unit balls, warm-started
/// from `init`. Blocks are visited in ascending filter order; each block is
/// minimized exactly over its ball, so a sweep never increases the objective.
pub fn update_filters_batch(
    signals: &[Signal],
    codes: &[CodeMap],
    init: &Dictionary,
    sweeps: usize,
) -> Result<FilterUpdate> {
    if signals.is_empty() || signals.len() != codes.len() {
        return Err(Error::shape(format!(
            "{} signals vs {} code maps",
            signals.len(),
            codes.len()
        )));
    }
    if sweeps < 1 {
        return Err(Error::param("sweeps", "must be >= 1"));
    }
    let k = init.num_filters();
    let m = init.side();
    let coeffs = init.coeffs_per_filter();
    for (i, (x, z)) in signals.iter().zip(codes).enumerate() {
        if z.num_maps() != k || z.height() != x.height() || z.width() != x.width() {
            return Err(Error::shape(format!("signal/code pair {i} geometry")));
        }
    }

    // Residuals r_i = x_i - Z_i f under the warm-start dictionary.
    let mut residuals: Vec<Array2<f64>> = Vec::with_capacity(signals.len());
    for (x, z) in signals.iter().zip(codes) {
        let op = DictOperator::new(init, x.height(), x.width())?;
        let recon = op.apply(z)?;
        residuals.push(x.pixels() - recon.pixels());
    }

    // Per-filter Gram blocks are constant across sweeps.
    let mut grams: Vec<DMatrix<f64>> = vec![DMatrix::zeros(coeffs, coeffs); k];
    for z in codes {
        let zop = CodeOperator::new(z, m)?;
        for (kk, g) in grams.iter_mut().enumerate() {
            *g += zop.gram_block(kk);
        }
    }

    let mut filters: Vec<Array2<f64>> = init.filters().to_vec();
    let mut degenerate = Vec::new();
    for sweep in 0..sweeps {
        for kk in 0..k {
            if grams[kk].trace() == 0.0 {
                if sweep == 0 {
                    degenerate.push(kk);
                }
                continue;
            }
            // partial residuals: add the block's current contribution back
            let mut rhs = DVector::zeros(coeffs);
            for (z, r) in codes.iter().zip(residuals.iter_mut()) {
                let zop = CodeOperator::new(z, m)?;
                zop.accumulate_response(kk, &filters[kk], 1.0, r);
                let ztr = zop.adjoint_single(kk, r);
                for (a, &b) in rhs.iter_mut().zip(&ztr) {
                    *a += b;
                }
            }
            let solved = solve_ball_block(&grams[kk], &rhs);
            let new_filter =
                Array2::from_shape_vec((m, m), solved.as_slice().to_vec()).expect("M = m*m");
            for (z, r) in codes.iter().zip(residuals.iter_mut()) {
                let zop = CodeOperator::new(z, m)?;
                zop.accumulate_response(kk, &new_filter, -1.0, r);
            }
            filters[kk] = new_filter;
        }
    }
    Ok(FilterUpdate {
        dictionary: Dictionary::from_filters_unchecked(filters, m),
        degenerate_blocks: degenerate,
    })
}

/// Online dictionary update: block coordinate descent on
/// 1/2 f^T C f - f^T B subject to per-filter unit balls, warm-started from
/// `init`. Requires at least one absorbed observation.
pub fn update_filters_online(
    state: &SurrogateState,
    init: &Dictionary,
    sweeps: usize,
) -> Result<FilterUpdate> {
    if state.count() == 0 {
        return Err(Error::param("state", "no observations absorbed yet"));
    }
    if init.num_filters() != state.num_filters || init.side() != state.side {
        return Err(Error::shape("dictionary vs surrogate geometry"));
    }
    if sweeps < 1 {
        return Err(Error::param("sweeps", "must be >= 1"));
    }
    let k = state.num_filters;
    let coeffs = state.side * state.side;
    let mut f = DVector::from_vec(init.to_flat());
    let mut degenerate = Vec::new();
    for sweep in 0..sweeps {
        for kk in 0..k {
            let g = state.c.view((kk * coeffs, kk * coeffs), (coeffs, coeffs)).into_owned();
            if g.trace() == 0.0 {
                if sweep == 0 {
                    degenerate.push(kk);
                }
                continue;
            }
            // b_k minus the coupling of every other block at current f
            let row_block = state.c.rows(kk * coeffs, coeffs);
            let coupled = &row_block * &f;
            let fk = f.rows(kk * coeffs, coeffs).into_owned();
            let mut rhs = state.b.rows(kk * coeffs, coeffs) - coupled;
            rhs += &g * &fk;
            let solved = solve_ball_block(&g, &rhs);
            f.rows_mut(kk * coeffs, coeffs).copy_from(&solved);
        }
    }
    let dictionary = Dictionary::from_flat(f.as_slice(), k, state.side)?;
    Ok(FilterUpdate { dictionary, degenerate_blocks: degenerate })
}

/// Exact minimizer of 1/2 d^T G d - d^T b over the unit ball, for PSD G with
/// trace(G) > 0. When the unconstrained solution is feasible it is returned
/// directly; otherwise the boundary solution (G + mu I)^-1 b with the unique
/// mu > 0 giving unit norm is found by a safeguarded Newton iteration.
fn solve_ball_block(g: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = g.nrows();
    if let Some(chol) = nalgebra::Cholesky::new(g.clone_owned()) {
        let d = chol.solve(b);
        if d.norm() <= 1.0 {
            return d;
        }
    } else if b.norm() == 0.0 {
        // singular G, zero b: 0 minimizes 1/2 d^T G d over the ball
        return DVector::zeros(n);
    }

    // Boundary case: h(mu) = ||(G + mu I)^-1 b|| - 1 is strictly decreasing
    // in mu > 0 with h -> -1 as mu -> inf; ||(G+mu I)^-1 b|| <= ||b||/mu
    // makes mu = ||b|| an upper bracket.
    let mut lo = 0.0f64;
    let mut hi = b.norm().max(1e-300);
    let mut mu = hi * 0.5;
    let mut d = DVector::zeros(n);
    for _ in 0..200 {
        let mut shifted = g.clone_owned();
        for i in 0..n {
            shifted[(i, i)] += mu;
        }
        let Some(chol) = nalgebra::Cholesky::new(shifted) else {
            // mu too small to regularize; move up within the bracket
            lo = mu;
            mu = 0.5 * (mu + hi);
            continue;
        };
        d = chol.solve(b);
        let norm = d.norm();
        if (norm - 1.0).abs() <= 1e-13 {
            break;
        }
        if norm > 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        // More-Sorensen update: mu += (||d||/||q||)^2 (||d|| - 1), q = L^-1 d
        let q = chol
            .l()
            .solve_lower_triangular(&d)
            .expect("triangular solve with positive diagonal");
        let qn2 = q.norm_squared();
        let next = if qn2 > 0.0 { mu + (norm * norm / qn2) * (norm - 1.0) } else { mu };
        mu = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let norm = d.norm();
    if norm > 1.0 {
        d /= norm;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::NORM_TOLERANCE;

    #[test]
    fn ball_block_interior_and_boundary() {
        // G = I, b inside the ball -> d = b
        let g = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![0.2, -0.3, 0.1]);
        let d = solve_ball_block(&g, &b);
        assert!((d - &b).norm() < 1e-12);
        // G = I, b outside -> projection b/||b||
        let b = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let d = solve_ball_block(&g, &b);
        assert!((d[0] - 0.6).abs() < 1e-10 && (d[1] - 0.8).abs() < 1e-10);
        // anisotropic boundary solution beats naive scaling
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let b = DVector::from_vec(vec![4.0, 4.0]);
        let d = solve_ball_block(&g, &b);
        assert!((d.norm() - 1.0).abs() < 1e-10);
        let obj = |v: &DVector<f64>| 0.5 * v.dot(&(&g * v)) - v.dot(&b);
        let naive = DVector::from_vec(vec![4.0, 1.0]) / (17.0f64).sqrt();
        assert!(obj(&d) < obj(&naive) - 1e-6);
    }

    #[test]
    fn ball_block_singular_cases() {
        let g = DMatrix::zeros(2, 2);
        let z = solve_ball_block(&g, &DVector::zeros(2));
        assert_eq!(z, DVector::zeros(2));
        // singular G, b in the null direction -> boundary solution of norm 1
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let b = DVector::from_vec(vec![0.0, 2.0]);
        let d = solve_ball_block(&g, &b);
        assert!((d.norm() - 1.0).abs() < 1e-10);
        assert!((d[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn all_zero_codes_leave_dictionary_unchanged_and_flagged() {
        let init = Dictionary::random_init(3, 3, 9).unwrap();
        let x = Signal::zeros(6, 6);
        let z = CodeMap::zeros(3, 6, 6);
        let upd = update_filters_batch(&[x], &[z], &init, 2).unwrap();
        assert_eq!(upd.dictionary, init);
        assert_eq!(upd.degenerate_blocks, vec![0, 1, 2]);
    }

    #[test]
    fn centered_impulse_recovers_projected_crop() {
        // one unit impulse at the image center embeds the filter exactly, so
        // the optimal filter is the central m x m crop of the signal
        // projected onto the unit ball
        let m = 3;
        let init = Dictionary::random_init(1, m, 4).unwrap();
        let mut z = CodeMap::zeros(1, 9, 9);
        z.map_mut(0)[[4, 4]] = 1.0;
        let mut s = 0.3f64;
        let px = Array2::from_shape_fn((9, 9), |_| {
            s = (s * 2.1 + 0.31).fract();
            (s - 0.5) * 3.0
        });
        let x = Signal::new(px.clone()).unwrap();
        let upd = update_filters_batch(&[x], &[z], &init, 1).unwrap();
        let mut crop = Array2::zeros((m, m));
        for u in 0..m {
            for v in 0..m {
                crop[[u, v]] = px[[3 + u, 3 + v]];
            }
        }
        let norm = crop.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            crop.mapv_inplace(|v| v / norm);
        }
        for u in 0..m {
            for v in 0..m {
                assert!((upd.dictionary.filter(0)[[u, v]] - crop[[u, v]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn surrogate_first_update_is_plain_gram() {
        let mut z = CodeMap::zeros(2, 5, 5);
        z.map_mut(0)[[2, 2]] = 1.5;
        z.map_mut(1)[[1, 3]] = -0.7;
        let mut s = 0.9f64;
        let x = Signal::new(Array2::from_shape_fn((5, 5), |_| {
            s = (s * 1.3 + 0.7).fract();
            s
        }))
        .unwrap();
        let mut state = SurrogateState::new(2, 3);
        state.update(&z, &x).unwrap();
        assert_eq!(state.count(), 1);
        let zop = CodeOperator::new(&z, 3).unwrap();
        let mut direct = DMatrix::zeros(18, 18);
        zop.add_scaled_gram(1.0, &mut direct).unwrap();
        assert_eq!(state.c(), &direct);
        let ztx = zop.adjoint(x.pixels()).unwrap();
        for (a, b) in state.b().iter().zip(&ztx) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_observation_just_rescales_surrogates() {
        let mut z = CodeMap::zeros(1, 5, 5);
        z.map_mut(0)[[2, 2]] = 2.0;
        let x = Signal::new(Array2::from_elem((5, 5), 0.5)).unwrap();
        let mut state = SurrogateState::new(1, 3);
        state.update(&z, &x).unwrap();
        let c1 = state.c().clone();
        let b1 = state.b().clone();
        state.update(&CodeMap::zeros(1, 5, 5), &x).unwrap();
        assert_eq!(state.count(), 2);
        assert!((state.c() - &c1 * 0.5).norm() < 1e-15);
        assert!((state.b() - &b1 * 0.5).norm() < 1e-15);
    }

    #[test]
    fn online_update_with_identity_surrogate() {
        let m = 3;
        let coeffs = m * m;
        let init = Dictionary::random_init(2, m, 17).unwrap();
        let mut state = SurrogateState::new(2, m);
        state.c = DMatrix::identity(2 * coeffs, 2 * coeffs);
        state.count = 1;
        // B = 0 -> all-zero filters
        let upd = update_filters_online(&state, &init, 1).unwrap();
        assert!(upd.dictionary.max_norm() < 1e-12);
        // B = b with feasible blocks -> filters equal b
        let mut s = 0.2f64;
        let b = DVector::from_fn(2 * coeffs, |_, _| {
            s = (s * 3.3 + 0.05).fract();
            (s - 0.5) * 0.5
        });
        state.b = b.clone();
        let upd = update_filters_online(&state, &init, 1).unwrap();
        for (got, want) in upd.dictionary.to_flat().iter().zip(b.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(upd.dictionary.max_norm() <= 1.0 + NORM_TOLERANCE);
    }

    #[test]
    fn online_update_requires_observations() {
        let init = Dictionary::random_init(2, 3, 1).unwrap();
        let state = SurrogateState::new(2, 3);
        assert!(update_filters_online(&state, &init, 1).is_err());
    }
}
