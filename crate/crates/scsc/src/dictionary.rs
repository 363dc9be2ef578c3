//! The filter dictionary: K square kernels constrained to the unit L2 ball.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_rng, StreamDomain};

/// Filters are kept at or inside the unit ball up to this slack.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    filters: Vec<Array2<f64>>,
    side: usize,
}

impl Dictionary {
    pub fn new(filters: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = filters.first() else {
            return Err(Error::param("filters", "need at least one filter"));
        };
        let side = first.nrows();
        if side % 2 == 0 {
            return Err(Error::param("filters", format!("side {side} must be odd")));
        }
        for (k, f) in filters.iter().enumerate() {
            if f.nrows() != side || f.ncols() != side {
                return Err(Error::shape(format!(
                    "filter {k} is {}x{}, expected {side}x{side}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            if !f.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { context: format!("filter {k}") });
            }
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 + NORM_TOLERANCE {
                return Err(Error::param(
                    "filters",
                    format!("filter {k} has norm {norm} outside the unit ball"),
                ));
            }
        }
        Ok(Self { filters, side })
    }

    pub(crate) fn from_filters_unchecked(filters: Vec<Array2<f64>>, side: usize) -> Self {
        debug_assert!(filters.iter().all(|f| {
            f.nrows() == side
                && f.ncols() == side
                && f.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + NORM_TOLERANCE
        }));
        Self { filters, side }
    }

    /// I.i.d. standard normal entries, each filter projected onto the unit
    /// ball. Deterministic for a given seed.
    pub fn random_init(num_filters: usize, side: usize, seed: u64) -> Result<Self> {
        if num_filters == 0 {
            return Err(Error::param("num_filters", "must be >= 1"));
        }
        if side % 2 == 0 || side == 0 {
            return Err(Error::param("side", "must be odd and >= 1"));
        }
        let mut rng = derive_rng(seed, StreamDomain::DictInit, 0);
        let filters = (0..num_filters)
            .map(|_| {
                let mut f = Array2::from_shape_fn((side, side), |_| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1.0 {
                    f.mapv_inplace(|v| v / norm);
                }
                f
            })
            .collect();
        Ok(Self { filters, side })
    }

    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    /// Filter side length m.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Coefficients per filter, M = m*m.
    pub fn coeffs_per_filter(&self) -> usize {
        self.side * self.side
    }

    /// Index of the filter center, (m-1)/2.
    pub fn center(&self) -> usize {
        (self.side - 1) / 2
    }

    pub fn filter(&self, k: usize) -> &Array2<f64> {
        &self.filters[k]
    }

    pub fn filters(&self) -> &[Array2<f64>] {
        &self.filters
    }

    pub fn max_norm(&self) -> f64 {
        self.filters
            .iter()
            .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Flatten to a filter-major vector of length K*M (row-major within each
    /// filter), the layout used by the filter-update solvers.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_filters() * self.coeffs_per_filter());
        for f in &self.filters {
            flat.extend(f.iter().copied());
        }
        flat
    }

    pub fn from_flat(flat: &[f64], num_filters: usize, side: usize) -> Result<Self> {
        let m = side * side;
        if flat.len() != num_filters * m {
            return Err(Error::shape(format!(
                "flat dictionary has {} entries, expected {}",
                flat.len(),
                num_filters * m
            )));
        }
        let filters = (0..num_filters)
            .map(|k| {
                Array2::from_shape_vec((side, side), flat[k * m..(k + 1) * m].to_vec())
                    .expect("chunk length matches shape")
            })
            .collect();
        Self::new(filters)
    }
}
