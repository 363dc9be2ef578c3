//! Filter mosaic rendering (display only; never fed back into computation).

use std::path::Path;

use scsc::Dictionary;

use crate::CliError;

/// Tile the filters in a ceil(sqrt(K)) grid with 1-px separators, each
/// filter min-max normalized independently.
pub fn save_mosaic(dict: &Dictionary, path: &Path) -> Result<(), CliError> {
    let k = dict.num_filters();
    let m = dict.side();
    let grid = (k as f64).sqrt().ceil() as usize;
    let cell = m + 1;
    let size = grid * cell + 1;
    let mut img = image::GrayImage::new(size as u32, size as u32);
    for kk in 0..k {
        let f = dict.filter(kk);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in f.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (gy, gx) = (kk / grid, kk % grid);
        for u in 0..m {
            for v in 0..m {
                let val = ((f[[u, v]] - lo) / span * 255.0).round() as u8;
                img.put_pixel((gx * cell + 1 + v) as u32, (gy * cell + 1 + u) as u32, image::Luma([val]));
            }
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(())
}
