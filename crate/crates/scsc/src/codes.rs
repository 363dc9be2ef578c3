//! Sparse coefficient maps: one H x W grid per dictionary filter.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CodeMap {
    maps: Vec<Array2<f64>>,
}

impl CodeMap {
    pub fn new(maps: Vec<Array2<f64>>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::param("maps", "need at least one map"));
        };
        let (h, w) = (first.nrows(), first.ncols());
        for (k, m) in maps.iter().enumerate() {
            if m.nrows() != h || m.ncols() != w {
                return Err(Error::shape(format!(
                    "code map {k} is {}x{}, expected {h}x{w}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { context: format!("code map {k}") });
            }
        }
        Ok(Self { maps })
    }

    pub(crate) fn from_maps_unchecked(maps: Vec<Array2<f64>>) -> Self {
        debug_assert!(maps.iter().all(|m| m.iter().all(|v| v.is_finite())));
        Self { maps }
    }

    pub fn zeros(num_maps: usize, height: usize, width: usize) -> Self {
        Self { maps: vec![Array2::zeros((height, width)); num_maps] }
    }

    pub fn num_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn height(&self) -> usize {
        self.maps[0].nrows()
    }

    pub fn width(&self) -> usize {
        self.maps[0].ncols()
    }

    /// Total coefficient count D*K.
    pub fn total_len(&self) -> usize {
        self.maps.len() * self.maps[0].len()
    }

    pub fn map(&self, k: usize) -> &Array2<f64> {
        &self.maps[k]
    }

    pub fn map_mut(&mut self, k: usize) -> &mut Array2<f64> {
        &mut self.maps[k]
    }

    pub fn maps(&self) -> &[Array2<f64>] {
        &self.maps
    }

    pub fn l1_norm(&self) -> f64 {
        self.maps.iter().map(|m| m.iter().map(|v| v.abs()).sum::<f64>()).sum()
    }
}
