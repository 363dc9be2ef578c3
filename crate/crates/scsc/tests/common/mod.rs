//! Shared fixtures for the integration and acceptance suites.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scsc::signal::{contrast_normalize, gaussian_blur, NormalizeWindow, Signal};
use scsc::{CodeMap, Dictionary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| rng.random_range(-1.0..1.0))
}

pub fn random_signal(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Signal {
    Signal::new(random_grid(rng, h, w)).unwrap()
}

pub fn random_codes(rng: &mut ChaCha8Rng, k: usize, h: usize, w: usize, density: f64) -> CodeMap {
    let mut z = CodeMap::zeros(k, h, w);
    for kk in 0..k {
        for y in 0..h {
            for x in 0..w {
                if rng.random_range(0.0..1.0) < density {
                    z.map_mut(kk)[[y, x]] = rng.random_range(-2.0..2.0);
                }
            }
        }
    }
    z
}

/// Natural-ish training images: band-limited noise, contrast normalized.
/// Larger sigma gives smoother (more compressible) images.
pub fn smooth_corpus(
    n: usize,
    h: usize,
    w: usize,
    seed: u64,
    sigma: f64,
    radius: usize,
) -> Vec<Signal> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let noise = Array2::from_shape_fn((h, w), |_| r.random_range(0.0..1.0));
            let smooth = gaussian_blur(&noise, sigma, radius);
            let img = Signal::new(smooth).unwrap();
            contrast_normalize(&img, &NormalizeWindow::default()).unwrap()
        })
        .collect()
}

/// Oriented textures: white noise filtered by a randomly oriented
/// anisotropic Gaussian (one orientation per image), contrast normalized.
/// Orientation diversity is what over-complete dictionaries exploit.
pub fn oriented_corpus(n: usize, h: usize, w: usize, seed: u64) -> Vec<Signal> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let theta: f64 = r.random_range(0.0..std::f64::consts::PI);
            let (s_long, s_short) = (3.0f64, 0.7f64);
            let rad = 6i64;
            let (c, s) = (theta.cos(), theta.sin());
            let mut kernel = Vec::new();
            for dy in -rad..=rad {
                for dx in -rad..=rad {
                    let lx = c * dx as f64 + s * dy as f64;
                    let ly = -s * dx as f64 + c * dy as f64;
                    let v = (-(lx * lx) / (2.0 * s_long * s_long)
                        - (ly * ly) / (2.0 * s_short * s_short))
                        .exp();
                    kernel.push(((dy, dx), v));
                }
            }
            let noise = Array2::from_shape_fn((h, w), |_| r.random_range(-1.0..1.0));
            let mut px = Array2::zeros((h, w));
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let mut acc = 0.0;
                    for &((dy, dx), kv) in &kernel {
                        let yy = y + dy;
                        let xx = x + dx;
                        if yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 {
                            acc += kv * noise[[yy as usize, xx as usize]];
                        }
                    }
                    px[[y as usize, x as usize]] = acc;
                }
            }
            let img = Signal::new(px).unwrap();
            contrast_normalize(&img, &NormalizeWindow::default()).unwrap()
        })
        .collect()
}

/// A generator dictionary of smoothed random unit-norm filters.
pub fn smooth_generator_dict(k: usize, m: usize, seed: u64) -> Dictionary {
    let raw = Dictionary::random_init(k, m, seed).unwrap();
    let filters: Vec<Array2<f64>> = raw
        .filters()
        .iter()
        .map(|f| {
            let b = gaussian_blur(f, 0.8, 1);
            let n = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            b.mapv(|v| v / n.max(1e-12))
        })
        .collect();
    Dictionary::new(filters).unwrap()
}

/// Sparse spike codes with amplitudes in [lo, hi] and random signs.
pub fn spike_codes(
    rng: &mut ChaCha8Rng,
    k: usize,
    h: usize,
    w: usize,
    spikes: usize,
    lo: f64,
    hi: f64,
) -> CodeMap {
    let mut z = CodeMap::zeros(k, h, w);
    for _ in 0..spikes {
        let kk = rng.random_range(0..k);
        let y = rng.random_range(0..h);
        let x = rng.random_range(0..w);
        let v: f64 = rng.random_range(lo..hi);
        let sign = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
        z.map_mut(kk)[[y, x]] = sign * v;
    }
    z
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Serializes tests whose assertions involve wall-clock measurements.
pub fn timing_lock() -> std::sync::MutexGuard<'static, ()> {
    use std::sync::{Mutex, OnceLock};
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(std::sync::PoisonError::into_inner)
}
