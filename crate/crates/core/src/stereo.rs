//! SAD block matching of a capture against the reference image, subpixel
//! refinement and disparity-to-depth conversion.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::render::IrCapture;
use crate::sensor::{render_reference_extended, Orientation, SensorModel};
use crate::{Error, Grid, Result};

/// Default uniqueness ratio: best cost must be below this fraction of the
/// best cost further than one pixel away.
pub const DEFAULT_UNIQUENESS_RATIO: f64 = 0.8;
/// Default minimum window intensity range, in quantization levels.
pub const DEFAULT_MIN_TEXTURE: u32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubpixelMethod {
    /// Three-point parabola through the costs around the integer minimum.
    #[default]
    Parabolic,
    /// Integer disparities only.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    /// Odd window side.
    pub window: usize,
    pub subpixel_denominator: u32,
    pub uniqueness_ratio: f64,
    /// Windows whose intensity range is below this are rejected.
    pub min_texture: u32,
    pub subpixel: SubpixelMethod,
}

impl MatchParams {
    pub fn for_sensor(sensor: &SensorModel) -> MatchParams {
        MatchParams {
            window: sensor.window_size_px,
            subpixel_denominator: sensor.subpixel_denominator,
            uniqueness_ratio: DEFAULT_UNIQUENESS_RATIO,
            min_texture: DEFAULT_MIN_TEXTURE,
            subpixel: SubpixelMethod::Parabolic,
        }
    }

    fn radius(&self) -> usize {
        self.window / 2
    }
}

/// Outcome of matching one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockMatch {
    /// Integer argmin offset along the epipolar axis.
    pub shift: i32,
    /// Refined offset in 1/denominator pixel steps.
    pub steps: i64,
    /// SAD at the integer argmin.
    pub cost: u32,
}

/// Sum of absolute differences between the window centered at `(x, y)` in
/// `is` and the window centered at `(x + u, y + v)` in `it`.
///
/// Both windows must lie inside their images.
pub fn sad_cost<T: Copy + Into<f64>>(
    is: &Grid<T>,
    it: &Grid<T>,
    x: usize,
    y: usize,
    u: i32,
    v: i32,
    w: usize,
) -> f64 {
    let r = (w / 2) as i64;
    let mut acc = 0.0;
    for j in -r..=r {
        for i in -r..=r {
            let a: f64 = is.at((x as i64 + i) as usize, (y as i64 + j) as usize).into();
            let b: f64 = it
                .at(
                    (x as i64 + u as i64 + i) as usize,
                    (y as i64 + v as i64 + j) as usize,
                )
                .into();
            acc += (a - b).abs();
        }
    }
    acc
}

/// Integer argmin (smallest shift on ties), uniqueness test and subpixel
/// refinement over `costs[i]` = cost of shift `first + i`.
pub fn decide(costs: &[u32], first: i32, params: &MatchParams) -> Option<BlockMatch> {
    let (best_i, &best) = costs
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &u32)>, (i, c)| match acc {
            Some((_, b)) if c >= b => acc,
            _ => Some((i, c)),
        })?;
    let second = costs
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(best_i) > 1)
        .map(|(_, &c)| c)
        .min();
    if let Some(second) = second {
        if second == 0 || best as f64 > params.uniqueness_ratio * second as f64 {
            return None;
        }
    }
    let den = params.subpixel_denominator as i64;
    let shift = first + best_i as i32;
    let mut steps = shift as i64 * den;
    // a zero cost is already the exact minimum of a non-negative cost
    if params.subpixel == SubpixelMethod::Parabolic
        && best > 0
        && best_i > 0
        && best_i + 1 < costs.len()
    {
        let (cm, c0, cp) = (
            costs[best_i - 1] as f64,
            best as f64,
            costs[best_i + 1] as f64,
        );
        let curvature = cm - 2.0 * c0 + cp;
        if curvature > 0.0 {
            let offset = (cm - cp) / (2.0 * curvature);
            steps += (offset * den as f64).round() as i64;
        }
    }
    Some(BlockMatch {
        shift,
        steps,
        cost: best,
    })
}

fn window_range(img: &Grid<u8>, x: usize, y: usize, r: usize) -> u32 {
    let (mut lo, mut hi) = (u8::MAX, u8::MIN);
    for yy in y - r..=y + r {
        for &v in &img.row(yy)[x - r..=x + r] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (hi - lo) as u32
}

/// Shift range usable at capture position `x` when capture position 0
/// corresponds to reference position `origin` and the reference has extent
/// `n` along the epipolar axis.
#[inline]
fn clipped_search(x: usize, origin: usize, n: usize, r: usize, search: (i32, i32)) -> (i32, i32) {
    let p = (x + origin) as i32;
    let lo = search.0.max(r as i32 - p);
    let hi = search.1.min(n as i32 - 1 - r as i32 - p);
    (lo, hi)
}

/// Matches the block around `(x, y)` by scanning every shift in `search`
/// along the epipolar axis. Shifts whose target window would leave `it` are
/// skipped.
pub fn match_block(
    is: &Grid<u8>,
    it: &Grid<u8>,
    x: usize,
    y: usize,
    search: (i32, i32),
    orientation: Orientation,
    params: &MatchParams,
) -> Option<BlockMatch> {
    match_block_offset(is, it, 0, x, y, search, orientation, params)
}

/// [`match_block`] against a reference that extends `origin` pixels before
/// the capture along the epipolar axis (and possibly beyond its end).
#[allow(clippy::too_many_arguments)]
pub fn match_block_offset(
    is: &Grid<u8>,
    it: &Grid<u8>,
    origin: usize,
    x: usize,
    y: usize,
    search: (i32, i32),
    orientation: Orientation,
    params: &MatchParams,
) -> Option<BlockMatch> {
    let r = params.radius();
    if window_range(is, x, y, r) < params.min_texture {
        return None;
    }
    let (pos, extent) = match orientation {
        Orientation::Horizontal => (x, it.width()),
        Orientation::Vertical => (y, it.height()),
    };
    let (lo, hi) = clipped_search(pos, origin, extent, r, search);
    if lo > hi {
        return None;
    }
    let costs: Vec<u32> = (lo..=hi)
        .map(|s| {
            let (xt, yt) = match orientation {
                Orientation::Horizontal => ((x + origin) as i64 + s as i64, y as i64),
                Orientation::Vertical => (x as i64, (y + origin) as i64 + s as i64),
            };
            let mut acc = 0u32;
            for j in -(r as i64)..=r as i64 {
                for i in -(r as i64)..=r as i64 {
                    let a = is.at((x as i64 + i) as usize, (y as i64 + j) as usize);
                    let b = it.at((xt + i) as usize, (yt + j) as usize);
                    acc += a.abs_diff(b) as u32;
                }
            }
            acc
        })
        .collect();
    decide(&costs, lo, params)
}

/// Matches every interior pixel. Equivalent to calling [`match_block`] at
/// each pixel with border pixels (closer than half a window to the edge)
/// left unmatched, but shares column sums across shifts and rows.
pub fn match_image(
    is: &Grid<u8>,
    it: &Grid<u8>,
    search: (i32, i32),
    orientation: Orientation,
    params: &MatchParams,
) -> Grid<Option<BlockMatch>> {
    assert_eq!(is.dims(), it.dims(), "capture and reference must match");
    match_image_offset(is, it, 0, search, orientation, params)
}

/// [`match_image`] against an extended reference, see
/// [`match_block_offset`]. The reference must have the capture's extent
/// across the epipolar axis.
pub fn match_image_offset(
    is: &Grid<u8>,
    it: &Grid<u8>,
    origin: usize,
    search: (i32, i32),
    orientation: Orientation,
    params: &MatchParams,
) -> Grid<Option<BlockMatch>> {
    match orientation {
        Orientation::Horizontal => {
            assert_eq!(is.height(), it.height(), "reference rows must match the capture");
            match_rows(is, it, origin, search, params)
        }
        Orientation::Vertical => {
            assert_eq!(is.width(), it.width(), "reference columns must match the capture");
            match_rows(&is.transpose(), &it.transpose(), origin, search, params).transpose()
        }
    }
}

const BAND_ROWS: usize = 32;

fn match_rows(
    is: &Grid<u8>,
    it: &Grid<u8>,
    origin: usize,
    search: (i32, i32),
    params: &MatchParams,
) -> Grid<Option<BlockMatch>> {
    let (w, h) = is.dims();
    let r = params.radius();
    let mut out = Grid::new(w, h, None);
    if w < params.window || h < params.window || search.0 > search.1 {
        return out;
    }
    let interior = r..h - r;
    let bands: Vec<(usize, usize)> = interior
        .clone()
        .step_by(BAND_ROWS)
        .map(|start| (start, (start + BAND_ROWS).min(interior.end)))
        .collect();
    let results: Vec<Vec<Option<BlockMatch>>> = bands
        .par_iter()
        .map(|&(y0, y1)| match_band(is, it, origin, search, params, y0, y1))
        .collect();
    for ((y0, _), rows) in bands.iter().zip(results) {
        let start = y0 * w;
        out.data_mut()[start..start + rows.len()].copy_from_slice(&rows);
    }
    out
}

/// Rows `y0..y1` (window centers), returned row-major.
fn match_band(
    is: &Grid<u8>,
    it: &Grid<u8>,
    origin: usize,
    search: (i32, i32),
    params: &MatchParams,
    y0: usize,
    y1: usize,
) -> Vec<Option<BlockMatch>> {
    let w = is.width();
    let wt = it.width() as i32;
    let r = params.radius();
    let n_shift = (search.1 - search.0 + 1) as usize;
    // col[si * w + c] = vertical window sum of |is(c, .) - it(c + origin + s, .)|,
    // defined for columns c whose partner lies inside the reference
    let mut col = vec![0u32; n_shift * w];
    let column_range = |s: i32| -> (usize, usize) {
        let off = origin as i32 + s;
        let c0 = (-off).clamp(0, w as i32) as usize;
        let c1 = (wt - off).clamp(0, w as i32) as usize;
        (c0, c1.max(c0))
    };
    let absdiff = |c: usize, s: i32, y: usize| -> u32 {
        is.at(c, y).abs_diff(it.at((c as i32 + origin as i32 + s) as usize, y)) as u32
    };
    for si in 0..n_shift {
        let s = search.0 + si as i32;
        let (c0, c1) = column_range(s);
        for c in c0..c1 {
            let mut acc = 0;
            for y in y0 - r..=y0 + r {
                acc += absdiff(c, s, y);
            }
            col[si * w + c] = acc;
        }
    }

    let mut out = vec![None; (y1 - y0) * w];
    // costs[x * n_shift + si]
    let mut costs = vec![0u32; w * n_shift];
    for y in y0..y1 {
        if y > y0 {
            for si in 0..n_shift {
                let s = search.0 + si as i32;
                let (c0, c1) = column_range(s);
                for c in c0..c1 {
                    let v = &mut col[si * w + c];
                    *v = *v + absdiff(c, s, y + r) - absdiff(c, s, y - r - 1);
                }
            }
        }
        for si in 0..n_shift {
            let s = search.0 + si as i32;
            let line = &col[si * w..(si + 1) * w];
            // window centers with both windows inside their images
            let off = origin as i32 + s;
            let x_lo = (r as i32).max(r as i32 - off);
            let x_hi = (w as i32 - 1 - r as i32).min(wt - 1 - r as i32 - off);
            if x_lo > x_hi {
                continue;
            }
            let (x_lo, x_hi) = (x_lo as usize, x_hi as usize);
            let mut acc: u32 = line[x_lo - r..=x_lo + r].iter().sum();
            costs[x_lo * n_shift + si] = acc;
            for x in x_lo + 1..=x_hi {
                acc = acc + line[x + r] - line[x - r - 1];
                costs[x * n_shift + si] = acc;
            }
        }
        let row_out = &mut out[(y - y0) * w..(y - y0 + 1) * w];
        for x in r..w - r {
            if window_range(is, x, y, r) < params.min_texture {
                continue;
            }
            let (lo, hi) = clipped_search(x, origin, wt as usize, r, search);
            if lo > hi {
                continue;
            }
            let a = x * n_shift + (lo - search.0) as usize;
            let b = x * n_shift + (hi - search.0) as usize;
            row_out[x] = decide(&costs[a..=b], lo, params);
        }
    }
    out
}

/// Integer intensity levels of an image in [0, 1].
pub fn quantize_levels(image: &Grid<f32>, bit_depth: u32) -> Grid<u16> {
    let max = ((1u32 << bit_depth) - 1) as f32;
    image.map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16)
}

/// Local contrast normalization: each pixel mapped to
/// `128 + 32 (I - mean) / max(sd, 1)` over the surrounding window (clipped
/// at the borders), saturated to a byte.
pub fn normalize_local(levels: &Grid<u16>, window: usize) -> Grid<u8> {
    let (w, h) = levels.dims();
    let r = window / 2;
    // integral images with a zero first row/column
    let stride = w + 1;
    let mut sum = vec![0i64; stride * (h + 1)];
    let mut sq = vec![0i64; stride * (h + 1)];
    for y in 0..h {
        let (mut rs, mut rq) = (0i64, 0i64);
        for x in 0..w {
            let v = levels.at(x, y) as i64;
            rs += v;
            rq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
        }
    }
    let rect = |t: &[i64], x0: usize, y0: usize, x1: usize, y1: usize| {
        t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0]
    };
    Grid::par_from_rows(w, h, |y, row| {
        let ya = y.saturating_sub(r);
        let yb = (y + r + 1).min(h);
        for (x, out) in row.iter_mut().enumerate() {
            let xa = x.saturating_sub(r);
            let xb = (x + r + 1).min(w);
            let n = ((xb - xa) * (yb - ya)) as f64;
            let s = rect(&sum, xa, ya, xb, yb) as f64;
            let q = rect(&sq, xa, ya, xb, yb) as f64;
            let mean = s / n;
            let sd = (q / n - mean * mean).max(0.0).sqrt().max(1.0);
            let v = 128.0 + 32.0 * (levels.at(x, y) as f64 - mean) / sd;
            *out = v.round().clamp(0.0, 255.0) as u8;
        }
    })
}

/// Pixels whose window range of raw levels reaches `min_texture`.
pub fn texture_mask(levels: &Grid<u16>, window: usize, min_texture: u32) -> Grid<bool> {
    let (w, h) = levels.dims();
    let r = window / 2;
    // separable min/max: horizontal pass, then vertical
    let mut hmin = Grid::new(w, h, 0u16);
    let mut hmax = Grid::new(w, h, 0u16);
    for y in 0..h {
        let row = levels.row(y);
        for x in 0..w {
            let span = &row[x.saturating_sub(r)..(x + r + 1).min(w)];
            hmin.set(x, y, *span.iter().min().unwrap());
            hmax.set(x, y, *span.iter().max().unwrap());
        }
    }
    Grid::from_fn(w, h, |x, y| {
        let ys = y.saturating_sub(r)..(y + r + 1).min(h);
        let lo = ys.clone().map(|yy| hmin.at(x, yy)).min().unwrap();
        let hi = ys.map(|yy| hmax.at(x, yy)).max().unwrap();
        (hi - lo) as u32 >= min_texture
    })
}

/// Reference image prepared once per sensor configuration: quantized,
/// normalized, and possibly extended beyond the camera frame along the
/// epipolar axis.
#[derive(Clone, Debug)]
pub struct PreparedReference {
    filtered: Grid<u8>,
    /// Reference position of capture position 0 along the epipolar axis.
    origin: usize,
}

impl PreparedReference {
    /// From a camera-sized reference image.
    pub fn new(reference: &Grid<f32>, sensor: &SensorModel) -> PreparedReference {
        PreparedReference::with_origin(reference, 0, sensor)
    }

    /// From a reference extending `origin` pixels before the camera frame.
    pub fn with_origin(reference: &Grid<f32>, origin: usize, sensor: &SensorModel) -> PreparedReference {
        PreparedReference {
            filtered: normalize_local(
                &quantize_levels(reference, sensor.ir_bit_depth),
                sensor.window_size_px,
            ),
            origin,
        }
    }

    /// Renders a reference wide enough that every interior capture pixel
    /// can be searched over the full disparity range.
    pub fn for_sensor(sensor: &SensorModel) -> PreparedReference {
        let r = sensor.window_size_px / 2;
        let (lo, hi) = sensor.search_range();
        let before = (-lo).max(0) as usize + r;
        let after = hi.max(0) as usize + r;
        let reference = render_reference_extended(sensor, before, after);
        PreparedReference::with_origin(&reference, before, sensor)
    }

    pub fn filtered(&self) -> &Grid<u8> {
        &self.filtered
    }

    pub fn origin(&self) -> usize {
        self.origin
    }
}

/// Disparities stored as integer multiples of `1 / denominator` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    steps: Grid<Option<i64>>,
    denominator: u32,
}

impl DisparityMap {
    pub fn new(steps: Grid<Option<i64>>, denominator: u32) -> DisparityMap {
        DisparityMap { steps, denominator }
    }

    pub fn steps(&self) -> &Grid<Option<i64>> {
        &self.steps
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    pub fn dims(&self) -> (usize, usize) {
        self.steps.dims()
    }

    /// Disparity in pixels.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.steps.get(x, y).map(|k| k as f64 / self.denominator as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.steps.data().iter().filter(|v| v.is_some()).count()
    }

    /// Little-endian PFM, NaN marks invalid pixels.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let (w, h) = self.dims();
        let mut buf = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
        for y in (0..h).rev() {
            for x in 0..w {
                let v = self.get(x, y).map(|d| d as f32).unwrap_or(f32::NAN);
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Full matching stage for one capture.
pub fn compute_disparity(
    capture: &IrCapture,
    reference: &Grid<f32>,
    sensor: &SensorModel,
) -> Result<DisparityMap> {
    compute_disparity_prepared(capture, &PreparedReference::new(reference, sensor), sensor)
}

pub fn compute_disparity_prepared(
    capture: &IrCapture,
    reference: &PreparedReference,
    sensor: &SensorModel,
) -> Result<DisparityMap> {
    compute_disparity_with(capture, reference, sensor, &MatchParams::for_sensor(sensor))
}

pub fn compute_disparity_with(
    capture: &IrCapture,
    reference: &PreparedReference,
    sensor: &SensorModel,
    params: &MatchParams,
) -> Result<DisparityMap> {
    let (w, h) = capture.intensities.dims();
    let (rw, rh) = reference.filtered.dims();
    let fits = match sensor.orientation {
        Orientation::Horizontal => rh == h && rw >= w + reference.origin,
        Orientation::Vertical => rw == w && rh >= h + reference.origin,
    };
    if !fits {
        return Err(Error::DimensionMismatch(format!(
            "capture {:?} vs reference {:?} (origin {})",
            (w, h),
            (rw, rh),
            reference.origin
        )));
    }
    let levels = quantize_levels(&capture.intensities, sensor.ir_bit_depth);
    let textured = texture_mask(&levels, params.window, params.min_texture);
    let filtered = normalize_local(&levels, params.window);
    let matches = match_image_offset(
        &filtered,
        &reference.filtered,
        reference.origin,
        sensor.search_range(),
        sensor.orientation,
        params,
    );
    let ref_steps = sensor.reference_steps();
    let (k_min, k_max) = sensor.disparity_steps_bounds();
    let steps = Grid::from_fn(w, h, |x, y| {
        if !textured.at(x, y) {
            return None;
        }
        let m = matches.get(x, y).as_ref()?;
        let k = ref_steps + m.steps;
        (k_min..=k_max).contains(&k).then_some(k)
    });
    Ok(DisparityMap::new(steps, sensor.subpixel_denominator))
}

/// `z = f b / d` per valid pixel; non-positive disparities and depths outside
/// the sensor range become holes.
pub fn disparity_to_depth(disp: &DisparityMap, sensor: &SensorModel) -> DepthMap {
    let [z_min, z_max] = sensor.depth_range_m;
    let fb = sensor.focal_baseline();
    let den = disp.denominator() as f64;
    DepthMap::from_grid(disp.steps().map(|k| {
        let k = (*k)?;
        if k <= 0 {
            return None;
        }
        let z = fb / (k as f64 / den);
        (z_min..=z_max).contains(&z).then_some(z)
    }))
}
