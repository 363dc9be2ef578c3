//! Signals (2-D grayscale images), file ingestion, and contrast normalization.

use std::path::Path;

use image::DynamicImage;
use ndarray::Array2;

use crate::error::{Error, Result};

/// A real-valued H x W image. All entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pixels: Array2<f64>,
}

impl Signal {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if !pixels.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "signal pixels".into() });
        }
        Ok(Self { pixels })
    }

    /// Internal constructor for values produced by our own finite arithmetic.
    pub(crate) fn from_array_unchecked(pixels: Array2<f64>) -> Self {
        debug_assert!(pixels.iter().all(|v| v.is_finite()));
        Self { pixels }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { pixels: Array2::zeros((height, width)) }
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.pixels.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn norm_sq(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }

    /// Load an 8-bit grayscale PNG or binary PGM (P5), rescaled to [0, 1].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)?;
        let gray = match img {
            DynamicImage::ImageLuma8(g) => g,
            other => {
                return Err(Error::UnsupportedImage(format!(
                    "{}: expected 8-bit grayscale, got {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        let (w, h) = gray.dimensions();
        let mut pixels = Array2::zeros((h as usize, w as usize));
        for (x, y, p) in gray.enumerate_pixels() {
            pixels[[y as usize, x as usize]] = f64::from(p.0[0]) / 255.0;
        }
        Ok(Self { pixels })
    }

    /// Write as 8-bit grayscale PNG. Values are clamped to [0, 1] first; use
    /// [`Signal::to_unit_range`] to rescale arbitrary-range images for export.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let mut buf = Vec::with_capacity(h * w);
        for &v in self.pixels.iter() {
            buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        let img = image::GrayImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer sized from dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Affinely map this image's [min, max] onto [0, 1]. Flat images map to 0.
    pub fn to_unit_range(&self) -> Self {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        if span <= 0.0 {
            return Self::zeros(self.height(), self.width());
        }
        Self::from_array_unchecked(self.pixels.mapv(|v| (v - lo) / span))
    }
}

/// Gaussian window used by [`contrast_normalize`].
#[derive(Debug, Clone, Copy)]
pub struct NormalizeWindow {
    pub std_dev: f64,
    pub radius: usize,
}

impl Default for NormalizeWindow {
    fn default() -> Self {
        Self { std_dev: 2.0, radius: 6 }
    }
}

impl NormalizeWindow {
    fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::param("window.radius", "must be >= 1"));
        }
        if !(self.std_dev > 0.0) {
            return Err(Error::param("window.std_dev", "must be > 0"));
        }
        Ok(())
    }

    fn kernel(&self) -> Vec<f64> {
        let r = self.radius as isize;
        let s2 = 2.0 * self.std_dev * self.std_dev;
        let mut k: Vec<f64> = (-r..=r).map(|t| (-((t * t) as f64) / s2).exp()).collect();
        let sum: f64 = k.iter().sum();
        for v in &mut k {
            *v /= sum;
        }
        k
    }
}

/// Separable Gaussian smoothing with boundary mass correction: each output
/// pixel is the average of in-bounds neighbors under the window, so constants
/// are preserved up to rounding even at the borders.
pub fn gaussian_blur(image: &Array2<f64>, std_dev: f64, radius: usize) -> Array2<f64> {
    let window = NormalizeWindow { std_dev, radius };
    let kernel = window.kernel();
    blur_with_kernel(image, &kernel)
}

fn blur_with_kernel(image: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (h, w) = (image.nrows(), image.ncols());
    let r = (kernel.len() - 1) / 2;
    let axis_mass = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut sum = 0.0;
                for (t, &kv) in kernel.iter().enumerate() {
                    let j = i as isize + t as isize - r as isize;
                    if j >= 0 && (j as usize) < n {
                        sum += kv;
                    }
                }
                sum
            })
            .collect()
    };
    let row_mass = axis_mass(w);
    let col_mass = axis_mass(h);

    // Horizontal pass.
    let mut tmp = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let j = x as isize + t as isize - r as isize;
                if j >= 0 && (j as usize) < w {
                    sum += kv * image[[y, j as usize]];
                }
            }
            tmp[[y, x]] = sum;
        }
    }
    // Vertical pass plus mass normalization.
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let j = y as isize + t as isize - r as isize;
                if j >= 0 && (j as usize) < h {
                    sum += kv * tmp[[j as usize, x]];
                }
            }
            out[[y, x]] = sum / (row_mass[x] * col_mass[y]);
        }
    }
    out
}

/// Local contrast normalization: subtract the Gaussian-weighted local mean,
/// then divide by the Gaussian-weighted local standard deviation floored at
/// its image-wide mean (the floor keeps flat regions from blowing up).
///
/// A constant image normalizes to exactly zero.
pub fn contrast_normalize(image: &Signal, window: &NormalizeWindow) -> Result<Signal> {
    window.validate()?;
    let (lo, hi) = image.min_max();
    if lo == hi {
        return Ok(Signal::zeros(image.height(), image.width()));
    }
    let kernel = window.kernel();
    let local_mean = blur_with_kernel(image.pixels(), &kernel);
    let centered = image.pixels() - &local_mean;
    let local_var = blur_with_kernel(&centered.mapv(|v| v * v), &kernel);
    let local_std = local_var.mapv(|v| v.max(0.0).sqrt());
    let floor = local_std.iter().sum::<f64>() / local_std.len() as f64;
    if floor <= f64::MIN_POSITIVE {
        return Ok(Signal::from_array_unchecked(centered));
    }
    let mut out = centered;
    ndarray::Zip::from(&mut out).and(&local_std).for_each(|o, &s| {
        *o /= s.max(floor);
    });
    Ok(Signal::from_array_unchecked(out))
}
