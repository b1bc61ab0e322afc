//! Depth post-processing: range trimming, median smoothing, scanline hole
//! filling.

use crate::depth::DepthMap;
use crate::sensor::SensorModel;
use crate::{Error, Grid, Result};

/// Invalidates depths outside the sensor's operating range.
pub fn trim(depth: &DepthMap, sensor: &SensorModel) -> DepthMap {
    let [near, far] = sensor.depth_range_m;
    DepthMap::from_grid(
        depth
            .grid()
            .map(|v| v.filter(|z| (near..=far).contains(z))),
    )
}

/// Median over the valid pixels of a `kernel_px` square around each valid
/// pixel. Even-sized neighbour sets take the lower median, so outputs stay
/// on the input's set of values. Holes stay holes.
pub fn smooth(depth: &DepthMap, kernel_px: usize) -> Result<DepthMap> {
    if kernel_px == 0 || kernel_px % 2 == 0 {
        return Err(Error::invalid("smoothing kernel", "must be odd and >= 1"));
    }
    if kernel_px == 1 {
        return Ok(depth.clone());
    }
    let r = kernel_px / 2;
    let (w, h) = depth.dims();
    let src = depth.grid();
    let out = Grid::par_from_rows(w, h, |y, row| {
        let mut window = Vec::with_capacity(kernel_px * kernel_px);
        for (x, out) in row.iter_mut().enumerate() {
            if src.get(x, y).is_none() {
                continue;
            }
            window.clear();
            for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                    if let Some(z) = *src.get(xx, yy) {
                        window.push(z);
                    }
                }
            }
            let mid = (window.len() - 1) / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
            *out = Some(*m);
        }
    });
    Ok(DepthMap::from_grid(out))
}

/// Fills horizontal runs of holes shorter than `max_gap_px` by linear
/// interpolation between the valid pixels bounding them. Runs touching the
/// image border are left alone.
pub fn fill_holes(depth: &DepthMap, max_gap_px: usize) -> DepthMap {
    let mut out = depth.clone();
    if max_gap_px == 0 {
        return out;
    }
    let w = depth.width();
    for y in 0..depth.height() {
        let mut x = 0;
        while x < w {
            if depth.get(x, y).is_some() {
                x += 1;
                continue;
            }
            let start = x;
            while x < w && depth.get(x, y).is_none() {
                x += 1;
            }
            let len = x - start;
            if start == 0 || x == w || len >= max_gap_px {
                continue;
            }
            let a = depth.get(start - 1, y).expect("bounded by a valid pixel");
            let b = depth.get(x, y).expect("bounded by a valid pixel");
            for i in 0..len {
                let t = (i + 1) as f64 / (len + 1) as f64;
                out.set(start + i, y, Some(a + (b - a) * t));
            }
        }
    }
    out
}
