//! Device description: camera and projector intrinsics, baseline, projected
//! pattern, operating range and matching parameters.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Grid, Result};

/// Brown–Conrady radial (k1..k3) and tangential (p1, p2) coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    pub fn is_finite(&self) -> bool {
        [self.k1, self.k2, self.k3, self.p1, self.p2]
            .iter()
            .all(|c| c.is_finite())
    }

    /// Forward model on normalized image coordinates.
    #[inline]
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Inverse of [`Distortion::distort`] by fixed-point iteration.
    pub fn undistort(&self, xd: f64, yd: f64) -> (f64, f64) {
        let (mut x, mut y) = (xd, yd);
        for _ in 0..50 {
            let (fx, fy) = self.distort(x, y);
            let (ex, ey) = (fx - xd, fy - yd);
            x -= ex;
            y -= ey;
            if ex.abs().max(ey.abs()) < 1e-14 {
                break;
            }
        }
        (x, y)
    }
}

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub distortion: Distortion,
}

impl Intrinsics {
    pub fn new(f: f64, width: usize, height: usize) -> Intrinsics {
        Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            distortion: Distortion::default(),
        }
    }

    pub fn validate(&self, what: &'static str) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(what, "focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(what, "resolution must be non-zero"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::invalid(what, "principal point outside the image"));
        }
        if !self.distortion.is_finite() {
            return Err(Error::invalid(what, "non-finite distortion coefficient"));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_to_normalized(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    #[inline]
    pub fn normalized_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.fx + self.cx, y * self.fy + self.cy)
    }

    /// Same field of view at `factor` times the resolution.
    pub fn scaled(&self, factor: f64) -> Intrinsics {
        let w = (self.width as f64 * factor).round() as usize;
        let h = (self.height as f64 * factor).round() as usize;
        Intrinsics {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: (self.cx + 0.5) * factor - 0.5,
            cy: (self.cy + 0.5) * factor - 0.5,
            width: w,
            height: h,
            distortion: self.distortion,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Projector displaced along the camera x axis; matching along rows.
    #[default]
    Horizontal,
    /// Projector displaced along the camera y axis; matching along columns.
    Vertical,
}

/// Square projector image with intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    image: Grid<f32>,
}

impl Pattern {
    pub fn new(image: Grid<f32>) -> Result<Pattern> {
        if image.width() != image.height() || image.is_empty() {
            return Err(Error::invalid("pattern", "pattern must be square and non-empty"));
        }
        if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pattern", "intensities must lie in [0,1]"));
        }
        Ok(Pattern { image })
    }

    pub fn side_px(&self) -> usize {
        self.image.width()
    }

    pub fn image(&self) -> &Grid<f32> {
        &self.image
    }

    pub fn lit_fraction(&self) -> f64 {
        self.image.data().iter().filter(|&&v| v > 0.5).count() as f64 / self.image.len() as f64
    }
}

/// Centers `raw` on a zero-filled square of side `max(width, height)`.
pub fn pad_pattern_square(raw: &Grid<f32>) -> Result<Pattern> {
    if raw.is_empty() {
        return Err(Error::invalid("pattern", "empty input"));
    }
    let side = raw.width().max(raw.height());
    let ox = (side - raw.width()) / 2;
    let oy = (side - raw.height()) / 2;
    let mut out = Grid::new(side, side, 0.0f32);
    for y in 0..raw.height() {
        for x in 0..raw.width() {
            out.set(x + ox, y + oy, raw.at(x, y));
        }
    }
    Pattern::new(out)
}

/// Loads an 8- or 16-bit grayscale image as a (square-padded) pattern.
pub fn load_pattern_image(path: &Path) -> Result<Pattern> {
    if !path.exists() {
        return Err(Error::MissingAsset(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma16();
    let (w, h) = gray.dimensions();
    let grid = Grid::from_vec(
        w as usize,
        h as usize,
        gray.as_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
    );
    pad_pattern_square(&grid)
}

/// Window size the dot pattern is made locally unique for by default.
pub const DEFAULT_UNIQUENESS_WINDOW: usize = 9;

/// Pseudo-random binary dot pattern with exactly `round(density·side²)`
/// dots, then patched so that no two window-sized blocks in the same
/// horizontal strip are identical.
pub fn generate_dot_pattern(side_px: usize, dot_density: f64, seed: u64) -> Result<Pattern> {
    generate_dot_pattern_with_window(side_px, dot_density, seed, DEFAULT_UNIQUENESS_WINDOW)
}

pub fn generate_dot_pattern_with_window(
    side_px: usize,
    dot_density: f64,
    seed: u64,
    window: usize,
) -> Result<Pattern> {
    if side_px < 64 {
        return Err(Error::invalid("dot pattern", "side must be at least 64 px"));
    }
    if !(dot_density > 0.0 && dot_density < 0.5) {
        return Err(Error::invalid("dot pattern", "density must lie in (0, 0.5)"));
    }
    if window == 0 || window > 14 || window > side_px {
        return Err(Error::invalid("dot pattern", "uniqueness window must be in 1..=14"));
    }
    let n = side_px * side_px;
    let lit = (dot_density * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![false; n];
    for i in sample(&mut rng, n, lit) {
        bits[i] = true;
    }

    for _pass in 0..8 {
        if !enforce_strip_uniqueness(&mut bits, side_px, window, &mut rng) {
            break;
        }
    }
    let image = Grid::from_vec(
        side_px,
        side_px,
        bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    );
    Pattern::new(image)
}

/// One sweep over every strip; lights an extra dot in each duplicated block.
/// Returns whether anything changed.
fn enforce_strip_uniqueness(bits: &mut [bool], side: usize, w: usize, rng: &mut ChaCha8Rng) -> bool {
    let mut changed = false;
    let mask: u128 = if w * w >= 128 { u128::MAX } else { (1u128 << (w * w)) - 1 };
    let mut seen: HashMap<u128, usize> = HashMap::with_capacity(side);
    for top in 0..=side - w {
        seen.clear();
        let column = |bits: &[bool], c: usize| -> u128 {
            let mut v = 0u128;
            for r in 0..w {
                v = (v << 1) | bits[(top + r) * side + c] as u128;
            }
            v
        };
        let mut key = 0u128;
        for c in 0..w - 1 {
            key = (key << w) | column(bits, c);
        }
        let mut c = w - 1;
        while c < side {
            key = ((key << w) | column(bits, c)) & mask;
            let left = c + 1 - w;
            if seen.insert(key, left).is_some() {
                // flip an unlit pixel inside this block and recompute its key
                let r = rng.random_range(0..w);
                let k = rng.random_range(0..w);
                let idx = (top + r) * side + left + k;
                bits[idx] = !bits[idx];
                changed = true;
                key = 0;
                for cc in left..=c {
                    key = (key << w) | column(bits, cc);
                }
                key &= mask;
                seen.insert(key, left);
            }
            c += 1;
        }
    }
    changed
}

/// Complete device description.
#[derive(Clone, Debug)]
pub struct SensorModel {
    pub camera: Intrinsics,
    pub projector: Intrinsics,
    pub baseline_m: f64,
    pub orientation: Orientation,
    pub pattern: Arc<Pattern>,
    /// `[z_min, z_max]` in meters.
    pub depth_range_m: [f64; 2],
    pub window_size_px: usize,
    pub subpixel_denominator: u32,
    pub ir_bit_depth: u32,
    /// Requested distance of the reference plane; the effective distance is
    /// snapped so that its disparity is on the subpixel lattice.
    pub reference_distance_m: f64,
    /// Intensity of a lit pattern pixel on a white diffuse surface 1 m away,
    /// facing the projector.
    pub projector_power: f64,
}

impl SensorModel {
    /// Kinect-class preset: 640×480 camera, f = 580 px, 7.5 cm baseline,
    /// 0.4–8 m range, 9×9 windows, 1/8 px disparity steps, 10-bit IR. The
    /// projector focal length differs from the camera's (560 px) so pattern
    /// pixels do not line up with camera pixels.
    pub fn kinect_like(pattern: Arc<Pattern>) -> SensorModel {
        let mut camera = Intrinsics::new(580.0, 640, 480);
        camera.distortion.k1 = -0.006;
        SensorModel {
            camera,
            projector: Intrinsics::new(560.0, pattern.side_px(), pattern.side_px()),
            baseline_m: 0.075,
            orientation: Orientation::Horizontal,
            pattern,
            depth_range_m: [0.4, 8.0],
            window_size_px: 9,
            subpixel_denominator: 8,
            ir_bit_depth: 10,
            reference_distance_m: 0.8,
            projector_power: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate("camera intrinsics")?;
        self.projector.validate("projector intrinsics")?;
        if !(self.baseline_m > 0.0) {
            return Err(Error::invalid("sensor", "baseline must be positive"));
        }
        let [near, far] = self.depth_range_m;
        if !(near > 0.0 && near < far && far.is_finite()) {
            return Err(Error::invalid("sensor", "depth range must satisfy 0 < z_min < z_max"));
        }
        if self.window_size_px < 3 || self.window_size_px % 2 == 0 {
            return Err(Error::invalid("sensor", "window size must be odd and >= 3"));
        }
        if self.subpixel_denominator < 1 {
            return Err(Error::invalid("sensor", "subpixel denominator must be >= 1"));
        }
        if !(1..=16).contains(&self.ir_bit_depth) {
            return Err(Error::invalid("sensor", "ir bit depth must be in 1..=16"));
        }
        if !(self.reference_distance_m > 0.0) {
            return Err(Error::invalid("sensor", "reference distance must be positive"));
        }
        if !(self.projector_power >= 0.0 && self.projector_power.is_finite()) {
            return Err(Error::invalid("sensor", "projector power must be finite and >= 0"));
        }
        if self.projector.width != self.pattern.side_px()
            || self.projector.height != self.pattern.side_px()
        {
            return Err(Error::invalid(
                "sensor",
                "projector resolution must equal the pattern side",
            ));
        }
        let (lo, hi) = self.search_range();
        if lo > hi {
            return Err(Error::invalid("sensor", "empty disparity search range"));
        }
        Ok(())
    }

    /// Focal length (px) along the epipolar axis.
    pub fn focal_px(&self) -> f64 {
        match self.orientation {
            Orientation::Horizontal => self.camera.fx,
            Orientation::Vertical => self.camera.fy,
        }
    }

    /// `f · b` in pixel-meters.
    pub fn focal_baseline(&self) -> f64 {
        self.focal_px() * self.baseline_m
    }

    /// `(d_min, d_max)` in pixels, from the far and near range limits.
    pub fn disparity_bounds(&self) -> (f64, f64) {
        let fb = self.focal_baseline();
        (fb / self.depth_range_m[1], fb / self.depth_range_m[0])
    }

    /// Inclusive range of representable disparity numerators `k`
    /// (disparity `k / subpixel_denominator`) inside the operating range.
    pub fn disparity_steps_bounds(&self) -> (i64, i64) {
        let (lo, hi) = self.disparity_bounds();
        let den = self.subpixel_denominator as f64;
        ((lo * den).ceil() as i64, (hi * den).floor() as i64)
    }

    /// Reference-plane disparity in subpixel steps.
    pub fn reference_steps(&self) -> i64 {
        let d = self.focal_baseline() / self.reference_distance_m;
        (d * self.subpixel_denominator as f64).round() as i64
    }

    pub fn reference_disparity(&self) -> f64 {
        self.reference_steps() as f64 / self.subpixel_denominator as f64
    }

    /// Effective reference-plane distance after snapping.
    pub fn reference_distance(&self) -> f64 {
        self.focal_baseline() / self.reference_disparity()
    }

    /// Integer shift range searched between capture and reference: a pixel
    /// at column x is compared with reference column x + s.
    pub fn search_range(&self) -> (i32, i32) {
        let (lo, hi) = self.disparity_bounds();
        let r = self.reference_disparity();
        ((lo - r).ceil() as i32, (hi - r).floor() as i32)
    }

    /// Metric depth of the representable disparity `k / denominator`.
    #[inline]
    pub fn depth_for_steps(&self, steps: i64) -> f64 {
        self.focal_baseline() / (steps as f64 / self.subpixel_denominator as f64)
    }

    /// Maximum quantized intensity level.
    pub fn max_level(&self) -> u32 {
        (1u32 << self.ir_bit_depth) - 1
    }

    /// Projector center in the camera frame.
    pub fn projector_offset(&self) -> Vector3<f64> {
        match self.orientation {
            Orientation::Horizontal => Vector3::new(-self.baseline_m, 0.0, 0.0),
            Orientation::Vertical => Vector3::new(0.0, -self.baseline_m, 0.0),
        }
    }

    /// Pattern intensity cast on a camera-frame point, ignoring occlusion.
    #[inline]
    pub fn pattern_at(&self, p_cam: &Point3<f64>) -> f32 {
        pattern_through(&self.projector, &self.pattern, p_cam - self.projector_offset())
    }
}

/// Projects a projector-frame point through the projector and samples the
/// pattern bilinearly.
#[inline]
pub(crate) fn pattern_through(proj: &Intrinsics, pattern: &Pattern, q: Point3<f64>) -> f32 {
    if q.z <= 0.0 {
        return 0.0;
    }
    let (mut x, mut y) = (q.x / q.z, q.y / q.z);
    if !proj.distortion.is_zero() {
        (x, y) = proj.distortion.distort(x, y);
    }
    let (u, v) = proj.normalized_to_pixel(x, y);
    pattern.image.sample_bilinear(u, v)
}

/// Sub-pixel sample grid side used to filter the pattern over a pixel.
pub const FOOTPRINT_SAMPLES: usize = 4;

/// Mean pattern intensity over the footprint of camera pixel `(u, v)` on the
/// plane through `point` (camera frame) with normal `normal`. Sub-pixel rays
/// that miss the plane fall back to `point`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pattern_over_pixel(
    cam: &Intrinsics,
    proj: &Intrinsics,
    pattern: &Pattern,
    projector_offset: &Vector3<f64>,
    u: f64,
    v: f64,
    point: &Point3<f64>,
    normal: &Vector3<f64>,
) -> f32 {
    let n = FOOTPRINT_SAMPLES;
    let plane = normal.dot(&point.coords);
    let mut acc = 0.0f32;
    for j in 0..n {
        let dv = (j as f64 + 0.5) / n as f64 - 0.5;
        for i in 0..n {
            let du = (i as f64 + 0.5) / n as f64 - 0.5;
            let (x, y) = cam.pixel_to_normalized(u + du, v + dv);
            let dir = Vector3::new(x, y, 1.0);
            let denom = normal.dot(&dir);
            let t = plane / denom;
            let p = if denom.abs() > 1e-12 && t > 0.0 {
                Point3::from(dir * t)
            } else {
                *point
            };
            acc += pattern_through(proj, pattern, p - projector_offset);
        }
    }
    acc / (n * n) as f32
}

/// The pattern as the camera would see it on a fronto-parallel plane at the
/// reference distance: the matching target for every capture.
pub fn render_reference_image(sensor: &SensorModel) -> Grid<f32> {
    render_reference_extended(sensor, 0, 0)
}

/// [`render_reference_image`] widened by `before` and `after` pixels along
/// the epipolar axis (columns for horizontal stereo, rows for vertical).
pub fn render_reference_extended(sensor: &SensorModel, before: usize, after: usize) -> Grid<f32> {
    let cam = &sensor.camera;
    let z = sensor.reference_distance();
    let offset = sensor.projector_offset();
    let normal = Vector3::z();
    let (w, h, dx, dy) = match sensor.orientation {
        Orientation::Horizontal => (cam.width + before + after, cam.height, before as f64, 0.0),
        Orientation::Vertical => (cam.width, cam.height + before + after, 0.0, before as f64),
    };
    Grid::par_from_rows(w, h, |v, row| {
        for (u, out) in row.iter_mut().enumerate() {
            let (uc, vc) = (u as f64 - dx, v as f64 - dy);
            let (x, y) = cam.pixel_to_normalized(uc, vc);
            let point = Point3::new(x * z, y * z, z);
            *out = pattern_over_pixel(
                cam,
                &sensor.projector,
                &sensor.pattern,
                &offset,
                uc,
                vc,
                &point,
                &normal,
            );
        }
    })
}
