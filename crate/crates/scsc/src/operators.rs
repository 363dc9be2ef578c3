//! Matrix-free spatial-domain operators.
//!
//! `DictOperator` acts as the stacked convolution matrix D (filters applied
//! to codes); `CodeOperator` acts as the code-built matrix Z (codes applied
//! to filters). Both use zero-padded "same"-mode linear convolution: an
//! impulse in a code map reproduces the filter centered at that position,
//! truncated at the image border (never wrapped). Neither matrix is ever
//! materialized; the dense forms exist only in the test oracle.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::codes::CodeMap;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::mask::SubsampleMask;
use crate::signal::Signal;

/// Valid filter-coordinate ranges for a filter centered at (row, col):
/// u in [u_lo, u_hi) and v in [v_lo, v_hi) keep row + u - c and col + v - c
/// inside the H x W grid.
#[inline]
fn filter_ranges(
    row: usize,
    col: usize,
    center: usize,
    side: usize,
    height: usize,
    width: usize,
) -> (usize, usize, usize, usize) {
    let u_lo = center.saturating_sub(row);
    let u_hi = (height + center - row).min(side);
    let v_lo = center.saturating_sub(col);
    let v_hi = (width + center - col).min(side);
    (u_lo, u_hi, v_lo, v_hi)
}

/// out += weight * filter placed at (row, col), border-truncated.
#[inline]
fn scatter_filter(
    out: &mut [f64],
    height: usize,
    width: usize,
    filter: &[f64],
    side: usize,
    center: usize,
    row: usize,
    col: usize,
    weight: f64,
) {
    let (u_lo, u_hi, v_lo, v_hi) = filter_ranges(row, col, center, side, height, width);
    for u in u_lo..u_hi {
        let y = row + u - center;
        let out_base = y * width + (col + v_lo - center);
        let f_base = u * side + v_lo;
        let len = v_hi - v_lo;
        let out_row = &mut out[out_base..out_base + len];
        let f_row = &filter[f_base..f_base + len];
        for (o, &f) in out_row.iter_mut().zip(f_row) {
            *o += weight * f;
        }
    }
}

/// Correlation of the grid with the filter placed at (row, col).
#[inline]
fn gather_filter(
    grid: &[f64],
    height: usize,
    width: usize,
    filter: &[f64],
    side: usize,
    center: usize,
    row: usize,
    col: usize,
) -> f64 {
    let (u_lo, u_hi, v_lo, v_hi) = filter_ranges(row, col, center, side, height, width);
    let mut acc = 0.0;
    for u in u_lo..u_hi {
        let y = row + u - center;
        let g_base = y * width + (col + v_lo - center);
        let f_base = u * side + v_lo;
        let len = v_hi - v_lo;
        let g_row = &grid[g_base..g_base + len];
        let f_row = &filter[f_base..f_base + len];
        for (&g, &f) in g_row.iter().zip(f_row) {
            acc += g * f;
        }
    }
    acc
}

fn grid_slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("grids are standard layout")
}

fn grid_slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("grids are standard layout")
}

/// The stacked convolution D = [D_1, ..., D_K] over a fixed signal geometry.
#[derive(Debug, Clone, Copy)]
pub struct DictOperator<'a> {
    dict: &'a Dictionary,
    height: usize,
    width: usize,
}

impl<'a> DictOperator<'a> {
    pub fn new(dict: &'a Dictionary, height: usize, width: usize) -> Result<Self> {
        if height < dict.side() || width < dict.side() {
            return Err(Error::shape(format!(
                "signal {height}x{width} smaller than filter side {}",
                dict.side()
            )));
        }
        Ok(Self { dict, height, width })
    }

    pub fn dict(&self) -> &Dictionary {
        self.dict
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check_codes(&self, codes: &CodeMap) -> Result<()> {
        if codes.num_maps() != self.dict.num_filters()
            || codes.height() != self.height
            || codes.width() != self.width
        {
            return Err(Error::shape(format!(
                "codes {}x{}x{} vs operator {}x{}x{}",
                codes.num_maps(),
                codes.height(),
                codes.width(),
                self.dict.num_filters(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    fn check_signal(&self, signal: &Signal) -> Result<()> {
        if signal.height() != self.height || signal.width() != self.width {
            return Err(Error::shape(format!(
                "signal {}x{} vs operator {}x{}",
                signal.height(),
                signal.width(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    /// D z = sum_k d_k * z_k. Only nonzero coefficients contribute work.
    pub fn apply(&self, codes: &CodeMap) -> Result<Signal> {
        self.check_codes(codes)?;
        let mut out = Array2::zeros((self.height, self.width));
        self.apply_into(codes, &mut out);
        Ok(Signal::from_array_unchecked(out))
    }

    pub(crate) fn apply_into(&self, codes: &CodeMap, out: &mut Array2<f64>) {
        out.fill(0.0);
        let (m, c) = (self.dict.side(), self.dict.center());
        let (h, w) = (self.height, self.width);
        let out = grid_slice_mut(out);
        for k in 0..self.dict.num_filters() {
            let filter = grid_slice(self.dict.filter(k));
            let map = grid_slice(codes.map(k));
            for (idx, &v) in map.iter().enumerate() {
                if v != 0.0 {
                    scatter_filter(out, h, w, filter, m, c, idx / w, idx % w, v);
                }
            }
        }
    }

    /// D^T r: per-filter correlation of the residual with the filter.
    pub fn adjoint(&self, residual: &Signal) -> Result<CodeMap> {
        self.check_signal(residual)?;
        let (m, c) = (self.dict.side(), self.dict.center());
        let (h, w) = (self.height, self.width);
        let grid = grid_slice(residual.pixels());
        let maps = (0..self.dict.num_filters())
            .map(|k| {
                let filter = grid_slice(self.dict.filter(k));
                Array2::from_shape_fn((h, w), |(y, x)| {
                    gather_filter(grid, h, w, filter, m, c, y, x)
                })
            })
            .collect();
        Ok(CodeMap::from_maps_unchecked(maps))
    }

    /// D M^T applied to a reduced vector: scatter the selected coefficients'
    /// filter responses. Cost O(|mask| * M).
    pub fn apply_masked(&self, mask: &SubsampleMask, reduced: &[f64]) -> Result<Array2<f64>> {
        self.check_mask(mask)?;
        if reduced.len() != mask.len() {
            return Err(Error::shape(format!(
                "reduced vector {} vs mask {}",
                reduced.len(),
                mask.len()
            )));
        }
        let mut out = Array2::zeros((self.height, self.width));
        self.apply_masked_into(mask, reduced, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_masked_into(
        &self,
        mask: &SubsampleMask,
        reduced: &[f64],
        out: &mut Array2<f64>,
    ) {
        out.fill(0.0);
        let (m, c) = (self.dict.side(), self.dict.center());
        let (h, w) = (self.height, self.width);
        let out = grid_slice_mut(out);
        for (e, &v) in mask.entries().iter().zip(reduced) {
            if v != 0.0 {
                let filter = grid_slice(self.dict.filter(e.filter));
                scatter_filter(out, h, w, filter, m, c, e.row, e.col, v);
            }
        }
    }

    /// M D^T applied to a grid: the adjoint evaluated only at mask positions.
    /// Cost O(|mask| * M).
    pub fn adjoint_masked(&self, mask: &SubsampleMask, grid: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        if grid.nrows() != self.height || grid.ncols() != self.width {
            return Err(Error::shape("adjoint_masked grid geometry"));
        }
        let mut out = vec![0.0; mask.len()];
        self.adjoint_masked_into(mask, grid, &mut out);
        Ok(out)
    }

    pub(crate) fn adjoint_masked_into(
        &self,
        mask: &SubsampleMask,
        grid: &Array2<f64>,
        out: &mut [f64],
    ) {
        let (m, c) = (self.dict.side(), self.dict.center());
        let (h, w) = (self.height, self.width);
        let grid = grid_slice(grid);
        for (o, e) in out.iter_mut().zip(mask.entries()) {
            let filter = grid_slice(self.dict.filter(e.filter));
            *o = gather_filter(grid, h, w, filter, m, c, e.row, e.col);
        }
    }

    fn check_mask(&self, mask: &SubsampleMask) -> Result<()> {
        if mask.height() != self.height
            || mask.width() != self.width
            || mask.num_filters() != self.dict.num_filters()
        {
            return Err(Error::shape("mask geometry vs operator"));
        }
        Ok(())
    }
}

/// The code-built matrix Z = [Z_1, ..., Z_K] mapping a flat filter vector
/// (filter-major, length K*M) to a signal. Work scales with the nonzero
/// count of the codes.
#[derive(Debug, Clone, Copy)]
pub struct CodeOperator<'a> {
    codes: &'a CodeMap,
    side: usize,
}

impl<'a> CodeOperator<'a> {
    pub fn new(codes: &'a CodeMap, side: usize) -> Result<Self> {
        if side % 2 == 0 || side == 0 {
            return Err(Error::param("side", "must be odd and >= 1"));
        }
        if codes.height() < side || codes.width() < side {
            return Err(Error::shape(format!(
                "codes {}x{} smaller than filter side {side}",
                codes.height(),
                codes.width()
            )));
        }
        Ok(Self { codes, side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn coeffs(&self) -> usize {
        self.side * self.side
    }

    fn center(&self) -> usize {
        (self.side - 1) / 2
    }

    fn check_flat(&self, flat: &[f64]) -> Result<()> {
        let want = self.codes.num_maps() * self.coeffs();
        if flat.len() != want {
            return Err(Error::shape(format!(
                "flat filters {} vs expected {want}",
                flat.len()
            )));
        }
        Ok(())
    }

    /// Z f = sum_k d_k * z_k. Identical arithmetic to `DictOperator::apply`
    /// on the same (d, z), so the two agree bit-for-bit.
    pub fn apply(&self, flat_filters: &[f64]) -> Result<Signal> {
        self.check_flat(flat_filters)?;
        let (h, w) = (self.codes.height(), self.codes.width());
        let (m, c, cm) = (self.side, self.center(), self.coeffs());
        let mut out = Array2::zeros((h, w));
        {
            let out = grid_slice_mut(&mut out);
            for k in 0..self.codes.num_maps() {
                let filter = &flat_filters[k * cm..(k + 1) * cm];
                let map = grid_slice(self.codes.map(k));
                for (idx, &v) in map.iter().enumerate() {
                    if v != 0.0 {
                        scatter_filter(out, h, w, filter, m, c, idx / w, idx % w, v);
                    }
                }
            }
        }
        Ok(Signal::from_array_unchecked(out))
    }

    /// Z^T r as a flat filter-major vector of length K*M.
    pub fn adjoint(&self, grid: &Array2<f64>) -> Result<Vec<f64>> {
        let (h, w) = (self.codes.height(), self.codes.width());
        if grid.nrows() != h || grid.ncols() != w {
            return Err(Error::shape("code adjoint grid geometry"));
        }
        let cm = self.coeffs();
        let mut out = vec![0.0; self.codes.num_maps() * cm];
        for k in 0..self.codes.num_maps() {
            self.adjoint_single_into(k, grid, &mut out[k * cm..(k + 1) * cm]);
        }
        Ok(out)
    }

    /// The k-th M-length block of Z^T r.
    pub fn adjoint_single(&self, k: usize, grid: &Array2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs()];
        self.adjoint_single_into(k, grid, &mut out);
        out
    }

    fn adjoint_single_into(&self, k: usize, grid: &Array2<f64>, out: &mut [f64]) {
        let (h, w) = (self.codes.height(), self.codes.width());
        let (m, c) = (self.side, self.center());
        let grid = grid_slice(grid);
        let map = grid_slice(self.codes.map(k));
        for (idx, &v) in map.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (row, col) = (idx / w, idx % w);
            let (u_lo, u_hi, v_lo, v_hi) = filter_ranges(row, col, c, m, h, w);
            for u in u_lo..u_hi {
                let y = row + u - c;
                let g_base = y * w + (col + v_lo - c);
                let o_base = u * m + v_lo;
                let len = v_hi - v_lo;
                let g_row = &grid[g_base..g_base + len];
                let o_row = &mut out[o_base..o_base + len];
                for (o, &g) in o_row.iter_mut().zip(g_row) {
                    *o += v * g;
                }
            }
        }
    }

    /// out += sign * (z_k convolved with the given filter). Used to move a
    /// single filter's contribution in and out of residuals.
    pub fn accumulate_response(
        &self,
        k: usize,
        filter: &Array2<f64>,
        sign: f64,
        out: &mut Array2<f64>,
    ) {
        let (h, w) = (self.codes.height(), self.codes.width());
        let (m, c) = (self.side, self.center());
        let filter = grid_slice(filter);
        let map = grid_slice(self.codes.map(k));
        let out = grid_slice_mut(out);
        for (idx, &v) in map.iter().enumerate() {
            if v != 0.0 {
                scatter_filter(out, h, w, filter, m, c, idx / w, idx % w, sign * v);
            }
        }
    }

    /// Z_k^T Z_k, the M x M Gram block for one filter.
    pub fn gram_block(&self, k: usize) -> DMatrix<f64> {
        let cm = self.coeffs();
        let mut g = DMatrix::zeros(cm, cm);
        let rows = self.nonzero_rows(k);
        self.accumulate_gram_pair(&rows, &rows, 0, 0, 1.0, &mut |i, j, v| {
            g[(i, j)] += v;
        });
        g
    }

    /// target += scale * Z^T Z over the full K*M x K*M layout. Exploits code
    /// sparsity: only nonzero coefficient pairs within filter reach of each
    /// other contribute.
    pub fn add_scaled_gram(&self, scale: f64, target: &mut DMatrix<f64>) -> Result<()> {
        let km = self.codes.num_maps() * self.coeffs();
        if target.nrows() != km || target.ncols() != km {
            return Err(Error::shape(format!(
                "gram target {}x{} vs K*M {km}",
                target.nrows(),
                target.ncols()
            )));
        }
        let cm = self.coeffs();
        let all_rows: Vec<_> = (0..self.codes.num_maps()).map(|k| self.nonzero_rows(k)).collect();
        for (k1, rows1) in all_rows.iter().enumerate() {
            for (k2, rows2) in all_rows.iter().enumerate() {
                self.accumulate_gram_pair(rows1, rows2, k1 * cm, k2 * cm, scale, &mut |i, j, v| {
                    target[(i, j)] += v;
                });
            }
        }
        Ok(())
    }

    /// Per-row nonzero lists (col, value) for map k.
    fn nonzero_rows(&self, k: usize) -> Vec<Vec<(usize, f64)>> {
        let (h, w) = (self.codes.height(), self.codes.width());
        let map = grid_slice(self.codes.map(k));
        let mut rows = vec![Vec::new(); h];
        for (idx, &v) in map.iter().enumerate() {
            if v != 0.0 {
                rows[idx / w].push((idx % w, v));
            }
        }
        rows
    }

    /// Accumulate the Gram contributions of every nonzero pair between two
    /// maps into `sink(row_index, col_index, value)`, using offsets for the
    /// maps' blocks in the flat filter-major layout.
    fn accumulate_gram_pair(
        &self,
        rows1: &[Vec<(usize, f64)>],
        rows2: &[Vec<(usize, f64)>],
        off1: usize,
        off2: usize,
        scale: f64,
        sink: &mut impl FnMut(usize, usize, f64),
    ) {
        let (h, w) = (self.codes.height(), self.codes.width());
        let m = self.side as isize;
        let c = self.center() as isize;
        let ms = self.side;
        for (i1, row1) in rows1.iter().enumerate() {
            if row1.is_empty() {
                continue;
            }
            let i1i = i1 as isize;
            let lo_row = (i1i - (m - 1)).max(0) as usize;
            let hi_row = ((i1i + m - 1) as usize).min(h - 1);
            for &(j1, v1) in row1 {
                let j1i = j1 as isize;
                for (i2, row2) in rows2.iter().enumerate().take(hi_row + 1).skip(lo_row) {
                    if row2.is_empty() {
                        continue;
                    }
                    let di = i2 as isize - i1i;
                    // u1 range: in [0,m), u1-di in [0,m), i1+u1-c in [0,h)
                    let u_lo = 0isize.max(di).max(c - i1i);
                    let u_hi = m.min(m + di).min(h as isize + c - i1i);
                    if u_lo >= u_hi {
                        continue;
                    }
                    let start = row2.partition_point(|&(j2, _)| (j2 as isize) < j1i - (m - 1));
                    for &(j2, v2) in &row2[start..] {
                        let dj = j2 as isize - j1i;
                        if dj > m - 1 {
                            break;
                        }
                        let w_lo = 0isize.max(dj).max(c - j1i);
                        let w_hi = m.min(m + dj).min(w as isize + c - j1i);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let contrib = scale * v1 * v2;
                        for u1 in u_lo..u_hi {
                            let u2 = (u1 - di) as usize;
                            let base1 = off1 + u1 as usize * ms;
                            let base2 = off2 + u2 * ms;
                            for w1 in w_lo..w_hi {
                                let w2 = (w1 - dj) as usize;
                                sink(base1 + w1 as usize, base2 + w2, contrib);
                            }
                        }
                    }
                }
            }
        }
    }
}
