//! Flat-wall error characterization: depth error against the analytic wall
//! plane as a function of distance, tilt and radial image position.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::noise::NoiseConfig;
use crate::pipeline::{Pipeline, PostConfig};
use crate::render::MotionSpec;
use crate::scene::{primitives, AcceleratedScene, Instance, Material, Role, Scene};
use crate::sensor::SensorModel;
use crate::{Error, Pose, Result};

pub const RADIAL_BINS: usize = 10;
/// Side of the square wall, meters.
pub const WALL_SIZE_M: f64 = 20.0;

/// One benchmark cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub distance_m: f64,
    pub tilt_deg: f64,
    pub seed: u64,
    /// Fraction of non-border pixels with a depth.
    pub valid_fraction: f64,
    /// Population standard deviation of depth residuals; `None` without
    /// valid pixels.
    pub std_error_mm: Option<f64>,
    /// Same statistic per radial annulus about the principal point.
    pub radial_std_mm: [Option<f64>; RADIAL_BINS],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub records: Vec<BenchmarkRecord>,
    /// Outer radius of the last annulus, pixels.
    pub max_radius_px: f64,
}

/// Polynomial error model `sigma_mm(z) = sum c_i z^i`, `z` in meters, drawn
/// as a reference curve on the distance plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelCurve {
    pub name: String,
    pub coefficients: Vec<f64>,
}

impl ErrorModelCurve {
    pub fn eval(&self, z: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSettings {
    pub distances: Vec<f64>,
    pub tilts: Vec<f64>,
    /// Seeds per cell; seed values are `base_seed..base_seed + seeds`.
    pub seeds: u32,
    pub base_seed: u64,
    pub noise: NoiseConfig,
    pub wall_albedo: f64,
    pub ambient_light: f64,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings {
            distances: vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            tilts: (0..9).map(|i| i as f64 * 10.0).collect(),
            seeds: 5,
            base_seed: 0,
            noise: NoiseConfig::default(),
            wall_albedo: 0.8,
            ambient_light: 0.0,
            jobs: 0,
        }
    }
}

impl BenchmarkSettings {
    pub fn validate(&self, sensor: &SensorModel) -> Result<()> {
        let [near, far] = sensor.depth_range_m;
        for &d in &self.distances {
            if !(d >= near && d <= far) {
                return Err(Error::invalid(
                    "benchmark",
                    format!("distance {d} m outside sensor range [{near}, {far}]"),
                ));
            }
        }
        for &t in &self.tilts {
            if !(0.0..90.0).contains(&t) {
                return Err(Error::invalid(
                    "benchmark",
                    format!("tilt {t} deg outside [0, 90)"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.wall_albedo) {
            return Err(Error::invalid("benchmark", "wall albedo must lie in [0, 1]"));
        }
        self.noise.validate()
    }
}

/// Wall pose: rotated about the camera y axis by `tilt_deg`, centered on the
/// optical axis at `distance_m`.
pub fn wall_pose(distance_m: f64, tilt_deg: f64) -> Pose {
    Pose::from_parts(
        Translation3::new(0.0, 0.0, distance_m),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), tilt_deg.to_radians()),
    )
}

pub fn wall_scene(distance_m: f64, tilt_deg: f64, albedo: f64, ambient: f64) -> Scene {
    let mut scene = Scene::new().with_instance(Instance::new(
        Arc::new(primitives::quad(WALL_SIZE_M, WALL_SIZE_M)),
        wall_pose(distance_m, tilt_deg),
        Material::diffuse(albedo),
        Role::Target,
    ));
    scene.ambient_light = ambient;
    scene
}

/// Depth of the wall plane along the nominal pinhole ray of pixel `(u, v)`
/// (camera at the origin looking down +z); `None` if the ray misses it.
pub fn wall_depth(sensor: &SensorModel, distance_m: f64, tilt_deg: f64, u: f64, v: f64) -> Option<f64> {
    let (x, y) = sensor.camera.pixel_to_normalized(u, v);
    let n = wall_pose(distance_m, tilt_deg).rotation * Vector3::z();
    let dir = Vector3::new(x, y, 1.0);
    let denom = n.dot(&dir);
    if denom.abs() < 1e-12 {
        return None;
    }
    let z = n.z * distance_m / denom;
    // the quad is finite: check the hit lies within it
    let hit = dir * z - Vector3::new(0.0, 0.0, distance_m);
    let local = wall_pose(distance_m, tilt_deg).rotation.inverse() * hit;
    let half = WALL_SIZE_M / 2.0;
    (z > 0.0 && local.x.abs() <= half && local.y.abs() <= half).then_some(z)
}

fn population_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Outer radius of the radial annuli: principal point to farthest corner.
pub fn max_radius(sensor: &SensorModel) -> f64 {
    let c = &sensor.camera;
    let (w, h) = ((c.width - 1) as f64, (c.height - 1) as f64);
    [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
        .iter()
        .map(|(x, y)| ((x - c.cx).powi(2) + (y - c.cy).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// Error statistics of one reconstructed depth map of the wall.
pub fn evaluate_wall(
    sensor: &SensorModel,
    depth: &DepthMap,
    distance_m: f64,
    tilt_deg: f64,
    seed: u64,
) -> BenchmarkRecord {
    let (w, h) = depth.dims();
    let r = sensor.window_size_px / 2;
    let cam = &sensor.camera;
    let r_max = max_radius(sensor);
    let mut residuals = Vec::new();
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); RADIAL_BINS];
    let mut valid = 0usize;
    let mut total = 0usize;
    for y in r..h.saturating_sub(r) {
        for x in r..w.saturating_sub(r) {
            total += 1;
            let Some(z) = depth.get(x, y) else { continue };
            valid += 1;
            let Some(gt) = wall_depth(sensor, distance_m, tilt_deg, x as f64, y as f64) else {
                continue;
            };
            let e = (z - gt) * 1000.0;
            residuals.push(e);
            let radius = ((x as f64 - cam.cx).powi(2) + (y as f64 - cam.cy).powi(2)).sqrt();
            let b = ((radius / r_max * RADIAL_BINS as f64) as usize).min(RADIAL_BINS - 1);
            bins[b].push(e);
        }
    }
    let mut radial_std_mm = [None; RADIAL_BINS];
    for (slot, values) in radial_std_mm.iter_mut().zip(&bins) {
        *slot = population_std(values);
    }
    BenchmarkRecord {
        distance_m,
        tilt_deg,
        seed,
        valid_fraction: if total == 0 { 0.0 } else { valid as f64 / total as f64 },
        std_error_mm: population_std(&residuals),
        radial_std_mm,
    }
}

/// Default-settings benchmark over the given grid.
pub fn run_flat_wall(
    sensor: &SensorModel,
    distances: &[f64],
    tilts: &[f64],
    seeds: u32,
) -> Result<BenchmarkReport> {
    run_flat_wall_with(
        sensor,
        &BenchmarkSettings {
            distances: distances.to_vec(),
            tilts: tilts.to_vec(),
            seeds,
            ..Default::default()
        },
    )
}

/// Renders, reconstructs (no smoothing, no hole filling) and evaluates every
/// (distance, tilt, seed) cell. Settings are validated before any rendering.
pub fn run_flat_wall_with(sensor: &SensorModel, settings: &BenchmarkSettings) -> Result<BenchmarkReport> {
    settings.validate(sensor)?;
    let pipeline = Pipeline::new(sensor.clone(), settings.noise, PostConfig::none())?;
    let mut cells = Vec::new();
    for &d in &settings.distances {
        for &t in &settings.tilts {
            for s in 0..settings.seeds as u64 {
                cells.push((d, t, settings.base_seed + s));
            }
        }
    }
    let run = || -> Result<Vec<BenchmarkRecord>> {
        cells
            .par_iter()
            .map(|&(d, t, seed)| {
                let scene = wall_scene(d, t, settings.wall_albedo, settings.ambient_light);
                let accel = AcceleratedScene::build(&scene);
                let frame = pipeline.run(&accel, &Pose::identity(), &MotionSpec::default(), seed)?;
                log::debug!("wall {d} m, {t} deg, seed {seed} done");
                Ok(evaluate_wall(sensor, &frame.raw_depth, d, t, seed))
            })
            .collect()
    };
    let records = if settings.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(settings.jobs)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };
    Ok(BenchmarkReport {
        records,
        max_radius_px: max_radius(sensor),
    })
}

impl BenchmarkReport {
    fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
        let v: Vec<f64> = values.collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn distances(&self) -> Vec<f64> {
        Self::sorted_unique(self.records.iter().map(|r| r.distance_m).collect())
    }

    pub fn tilts(&self) -> Vec<f64> {
        Self::sorted_unique(self.records.iter().map(|r| r.tilt_deg).collect())
    }

    fn cell(&self, distance: f64, tilt: f64) -> impl Iterator<Item = &BenchmarkRecord> {
        self.records
            .iter()
            .filter(move |r| r.distance_m == distance && r.tilt_deg == tilt)
    }

    /// Seed-averaged std error of one cell.
    pub fn mean_std_mm(&self, distance: f64, tilt: f64) -> Option<f64> {
        Self::mean_of(self.cell(distance, tilt).filter_map(|r| r.std_error_mm))
    }

    pub fn mean_valid_fraction(&self, distance: f64, tilt: f64) -> Option<f64> {
        Self::mean_of(self.cell(distance, tilt).map(|r| r.valid_fraction))
    }

    /// Seed-averaged radial profile of one cell.
    pub fn mean_radial_mm(&self, distance: f64, tilt: f64) -> [Option<f64>; RADIAL_BINS] {
        let mut out = [None; RADIAL_BINS];
        for (b, slot) in out.iter_mut().enumerate() {
            *slot = Self::mean_of(self.cell(distance, tilt).filter_map(|r| r.radial_std_mm[b]));
        }
        out
    }
}

pub const CSV_HEADER: &str =
    "distance_m,tilt_deg,seed,valid_fraction,std_error_mm,bin0,bin1,bin2,bin3,bin4,bin5,bin6,bin7,bin8,bin9";

pub fn report_csv(report: &BenchmarkReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.distance_m,
            r.tilt_deg,
            r.seed,
            r.valid_fraction,
            opt(r.std_error_mm)
        );
        for b in r.radial_std_mm {
            let _ = write!(out, ",{}", opt(b));
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV written by [`export_report`].
pub fn parse_report_csv(text: &str) -> Result<Vec<BenchmarkRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("unexpected benchmark CSV header".into()));
    }
    let bad = |i: usize| Error::Config(format!("malformed benchmark CSV row {}", i + 2));
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 + RADIAL_BINS {
                return Err(bad(i));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            let mut radial = [None; RADIAL_BINS];
            for (b, slot) in radial.iter_mut().enumerate() {
                *slot = opt(f[5 + b])?;
            }
            Ok(BenchmarkRecord {
                distance_m: num(f[0])?,
                tilt_deg: num(f[1])?,
                seed: f[2].parse().map_err(|_| bad(i))?,
                valid_fraction: num(f[3])?,
                std_error_mm: opt(f[4])?,
                radial_std_mm: radial,
            })
        })
        .collect()
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (l, r, t, b) = (70.0, 170.0, 40.0, 55.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    y1 *= 1.05;
    let sx = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let sy = |y: f64| h - b - y / y1 * (h - t - b);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, (l + w - r) / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{l}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{l}" y1="{t}" x2="{l}" y2="{0}" stroke="black"/>"#,
        h - b,
        w - r
    );
    for i in 0..=5 {
        let xv = x0 + (x1 - x0) * i as f64 / 5.0;
        let yv = y1 * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(xv),
            h - b + 18.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            l - 6.0,
            sy(yv) + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        (l + w - r) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{y_label}</text>"#,
        (t + h - b) / 2.0
    );
    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
            path.join(" ")
        );
        let ly = t + 16.0 * i as f64 + 8.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{2}" y="{3}">{4}</text>"#,
            w - r + 10.0,
            w - r + 30.0,
            w - r + 35.0,
            ly + 4.0,
            series.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `benchmark.csv` and three SVG panels (error vs distance, vs tilt,
/// vs radial distance). Returns the written paths.
pub fn export_report(report: &BenchmarkReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    export_report_with_overlays(report, out_dir, &[])
}

pub fn export_report_with_overlays(
    report: &BenchmarkReport,
    out_dir: &Path,
    overlays: &[ErrorModelCurve],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = vec![write_file(out_dir.join("benchmark.csv"), &report_csv(report))?];

    let distances = report.distances();
    let tilts = report.tilts();

    // A: error vs distance, one line per tilt
    let mut a: Vec<Series> = tilts
        .iter()
        .map(|&t| Series {
            label: format!("tilt {t} deg"),
            points: distances
                .iter()
                .filter_map(|&d| report.mean_std_mm(d, t).map(|e| (d * 1000.0, e)))
                .collect(),
            dashed: false,
        })
        .collect();
    if let (Some(lo), Some(hi)) = (distances.first(), distances.last()) {
        for curve in overlays {
            a.push(Series {
                label: curve.name.clone(),
                points: (0..=20)
                    .map(|i| lo + (hi - lo) * i as f64 / 20.0)
                    .map(|z| (z * 1000.0, curve.eval(z)))
                    .collect(),
                dashed: true,
            });
        }
    }
    written.push(write_file(
        out_dir.join("error_vs_distance.svg"),
        &svg_plot("(A) error vs distance", "distance (mm)", "std error (mm)", &a),
    )?);

    // B: error vs tilt, one line per distance
    let b: Vec<Series> = distances
        .iter()
        .map(|&d| Series {
            label: format!("{d} m"),
            points: tilts
                .iter()
                .filter_map(|&t| report.mean_std_mm(d, t).map(|e| (t, e)))
                .collect(),
            dashed: false,
        })
        .collect();
    written.push(write_file(
        out_dir.join("error_vs_tilt.svg"),
        &svg_plot("(B) error vs tilt", "tilt angle (deg)", "std error (mm)", &b),
    )?);

    // C: error vs radial distance at the smallest tilt
    let bin_width = report.max_radius_px / RADIAL_BINS as f64;
    let c: Vec<Series> = match tilts.first() {
        None => Vec::new(),
        Some(&t0) => distances
            .iter()
            .map(|&d| Series {
                label: format!("{d} m"),
                points: report
                    .mean_radial_mm(d, t0)
                    .iter()
                    .enumerate()
                    .filter_map(|(i, e)| e.map(|e| ((i as f64 + 0.5) * bin_width, e)))
                    .collect(),
                dashed: false,
            })
            .collect(),
    };
    written.push(write_file(
        out_dir.join("error_vs_radius.svg"),
        &svg_plot(
            "(C) error vs distance to focal center",
            "radial distance (px)",
            "std error (mm)",
            &c,
        ),
    )?);
    Ok(written)
}
