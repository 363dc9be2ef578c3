//! Code subsampling: the per-iteration random index subset and its
//! gather/scatter actions.
//!
//! Global code indices are filter-major: index g refers to filter k = g / D
//! at pixel (g % D) / W, (g % D) % W where D = H*W.

use ndarray::Array2;

use crate::codes::CodeMap;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, StreamDomain};

/// Decoded coordinates of one selected code position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskEntry {
    pub filter: usize,
    pub row: usize,
    pub col: usize,
}

/// The iteration's random subset of the D*K code positions, with its seed
/// provenance. Indices are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleMask {
    height: usize,
    width: usize,
    num_filters: usize,
    rate: f64,
    seed: u64,
    iteration: u64,
    indices: Vec<usize>,
    entries: Vec<MaskEntry>,
}

/// Draw ceil(p*D*K) distinct positions uniformly without replacement.
/// Deterministic in (seed, iteration); p = 1 selects every position.
pub fn sample_mask(
    height: usize,
    width: usize,
    num_filters: usize,
    rate: f64,
    seed: u64,
    iteration: u64,
) -> Result<SubsampleMask> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::param("rate", format!("{rate} not in (0, 1]")));
    }
    let d = height * width;
    let dk = d * num_filters;
    if dk == 0 {
        return Err(Error::param("geometry", "empty code space"));
    }
    let count = ((rate * dk as f64).ceil() as usize).min(dk);
    let indices: Vec<usize> = if count == dk {
        (0..dk).collect()
    } else {
        let mut rng = derive_rng(seed, StreamDomain::Mask, iteration);
        let mut picked = rand::seq::index::sample(&mut rng, dk, count).into_vec();
        picked.sort_unstable();
        picked
    };
    Ok(SubsampleMask::from_indices(height, width, num_filters, rate, seed, iteration, indices))
}

impl SubsampleMask {
    fn from_indices(
        height: usize,
        width: usize,
        num_filters: usize,
        rate: f64,
        seed: u64,
        iteration: u64,
        indices: Vec<usize>,
    ) -> Self {
        let d = height * width;
        let entries = indices
            .iter()
            .map(|&g| {
                let pixel = g % d;
                MaskEntry { filter: g / d, row: pixel / width, col: pixel % width }
            })
            .collect();
        Self { height, width, num_filters, rate, seed, iteration, indices, entries }
    }

    /// The identity mask (p = 1) over the given geometry.
    pub fn full(height: usize, width: usize, num_filters: usize) -> Self {
        let dk = height * width * num_filters;
        Self::from_indices(height, width, num_filters, 1.0, 0, 0, (0..dk).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// True when every code position is selected.
    pub fn is_full(&self) -> bool {
        self.indices.len() == self.code_len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    /// Pixels per map, D.
    pub fn signal_len(&self) -> usize {
        self.height * self.width
    }

    /// Total code positions, D*K.
    pub fn code_len(&self) -> usize {
        self.signal_len() * self.num_filters
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn entries(&self) -> &[MaskEntry] {
        &self.entries
    }

    fn check_codes(&self, codes: &CodeMap) -> Result<()> {
        if codes.num_maps() != self.num_filters
            || codes.height() != self.height
            || codes.width() != self.width
        {
            return Err(Error::shape(format!(
                "mask geometry {}x{}x{} vs codes {}x{}x{}",
                self.num_filters,
                self.height,
                self.width,
                codes.num_maps(),
                codes.height(),
                codes.width()
            )));
        }
        Ok(())
    }

    /// Gather the selected coefficients (z-tilde = M z).
    pub fn subsample(&self, codes: &CodeMap) -> Result<Vec<f64>> {
        self.check_codes(codes)?;
        Ok(self
            .entries
            .iter()
            .map(|e| codes.map(e.filter)[[e.row, e.col]])
            .collect())
    }

    /// Scatter a reduced vector back onto the full support, zero elsewhere
    /// (z = M^T z-tilde).
    pub fn upsample(&self, reduced: &[f64]) -> Result<CodeMap> {
        if reduced.len() != self.len() {
            return Err(Error::shape(format!(
                "reduced vector has {} entries, mask selects {}",
                reduced.len(),
                self.len()
            )));
        }
        let mut maps = vec![Array2::zeros((self.height, self.width)); self.num_filters];
        for (e, &v) in self.entries.iter().zip(reduced) {
            maps[e.filter][[e.row, e.col]] = v;
        }
        Ok(CodeMap::from_maps_unchecked(maps))
    }
}

/// A binary pixel observation mask (which pixels of an image are measured).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    observed: Array2<bool>,
    rate: f64,
    seed: u64,
}

impl ObservationMask {
    /// Observe exactly ceil(q*D) pixels chosen uniformly without replacement.
    pub fn random(height: usize, width: usize, rate: f64, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::param("rate", format!("{rate} not in (0, 1]")));
        }
        let d = height * width;
        if d == 0 {
            return Err(Error::param("geometry", "empty image"));
        }
        let count = ((rate * d as f64).ceil() as usize).min(d);
        let mut grid = Array2::from_elem((height, width), false);
        if count == d {
            grid.fill(true);
        } else {
            let mut rng = derive_rng(seed, StreamDomain::Observation, 0);
            for idx in rand::seq::index::sample(&mut rng, d, count) {
                grid[[idx / width, idx % width]] = true;
            }
        }
        Ok(Self { observed: grid, rate, seed })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { observed: Array2::from_elem((height, width), true), rate: 1.0, seed: 0 }
    }

    /// Wrap an explicit measurement grid (e.g. loaded from a file).
    pub fn from_grid(observed: Array2<bool>) -> Self {
        let rate = observed.iter().filter(|&&b| b).count() as f64 / observed.len().max(1) as f64;
        Self { observed, rate, seed: 0 }
    }

    pub fn height(&self) -> usize {
        self.observed.nrows()
    }

    pub fn width(&self) -> usize {
        self.observed.ncols()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &Array2<bool> {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    pub fn fraction_observed(&self) -> f64 {
        self.observed_count() as f64 / self.observed.len() as f64
    }

    /// Zero out unobserved pixels in place (the action of the diagonal
    /// selector W).
    pub fn project(&self, grid: &mut Array2<f64>) {
        ndarray::Zip::from(grid).and(&self.observed).for_each(|g, &seen| {
            if !seen {
                *g = 0.0;
            }
        });
    }

    /// The observed image with unobserved pixels set to zero.
    pub fn zero_filled(&self, signal: &crate::signal::Signal) -> crate::signal::Signal {
        let mut px = signal.pixels().clone();
        self.project(&mut px);
        crate::signal::Signal::from_array_unchecked(px)
    }
}
