//! Imaging-sensor degradation of an ideal capture: lens distortion, grain,
//! scratches, i.i.d. noise and ADC quantization.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::render::IrCapture;
use crate::sensor::Intrinsics;
use crate::{Error, Grid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Warp the capture with the camera's distortion coefficients.
    pub lens_distortion: bool,
    pub gaussian_sigma: f64,
    pub grain_sigma: f64,
    pub scratch_count: u32,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            lens_distortion: true,
            gaussian_sigma: 0.002,
            grain_sigma: 0.01,
            scratch_count: 0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// Quantization only.
    pub fn disabled() -> NoiseConfig {
        NoiseConfig {
            lens_distortion: false,
            gaussian_sigma: 0.0,
            grain_sigma: 0.0,
            scratch_count: 0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> NoiseConfig {
        NoiseConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::invalid("noise", "gaussian_sigma must be >= 0"));
        }
        if !(self.grain_sigma >= 0.0 && self.grain_sigma.is_finite()) {
            return Err(Error::invalid("noise", "grain_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Distorted pixel position of an ideal pixel position.
pub fn distort_point(intr: &Intrinsics, u: f64, v: f64) -> (f64, f64) {
    let (x, y) = intr.pixel_to_normalized(u, v);
    let (xd, yd) = intr.distortion.distort(x, y);
    intr.normalized_to_pixel(xd, yd)
}

/// Ideal pixel position of a distorted pixel position.
pub fn undistort_point(intr: &Intrinsics, u: f64, v: f64) -> (f64, f64) {
    let (xd, yd) = intr.pixel_to_normalized(u, v);
    let (x, y) = intr.distortion.undistort(xd, yd);
    intr.normalized_to_pixel(x, y)
}

/// Warps the ideal image through the lens: the output pixel at `p` shows
/// what the ideal image has at `undistort(p)`. Pixels whose source falls
/// outside the image are 0.
pub fn apply_lens_distortion(capture: &IrCapture, intr: &Intrinsics) -> IrCapture {
    if intr.distortion.is_zero() {
        return capture.clone();
    }
    let src = &capture.intensities;
    let (w, h) = src.dims();
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    let intensities = Grid::par_from_rows(w, h, |v, row| {
        for (u, out) in row.iter_mut().enumerate() {
            let (x, y) = undistort_point(intr, u as f64, v as f64);
            *out = if (0.0..=max_x).contains(&x) && (0.0..=max_y).contains(&y) {
                src.sample_bilinear(x, y)
            } else {
                0.0
            };
        }
    });
    IrCapture {
        intensities,
        ..capture.clone()
    }
}

/// Quantizes to `bit_depth` bits, returned as normalized levels.
pub fn quantize_intensities(image: &Grid<f32>, bit_depth: u32) -> Grid<f32> {
    let max = ((1u32 << bit_depth) - 1) as f32;
    image.map(|&v| (v.clamp(0.0, 1.0) * max).round() / max)
}

// independent random streams derived from one seed
const GRAIN_STREAM: u64 = 0;
const GAUSS_STREAM: u64 = 1;
const SCRATCH_STREAM: u64 = 2;

fn row_rng(seed: u64, kind: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind << 32 | row as u64);
    rng
}

#[derive(Clone, Copy, Debug)]
struct Scratch {
    a: Vector2<f64>,
    b: Vector2<f64>,
    width: f64,
    depth: f64,
}

impl Scratch {
    fn random(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Scratch {
        let point = |rng: &mut ChaCha8Rng| {
            Vector2::new(rng.random::<f64>() * w as f64, rng.random::<f64>() * h as f64)
        };
        let a = point(rng);
        let mut b = point(rng);
        if (b - a).norm() < 1.0 {
            b = a + Vector2::new(1.0, 0.0);
        }
        Scratch {
            a,
            b,
            width: rng.random_range(1.0..=2.0),
            depth: rng.random_range(0.3..=0.8),
        }
    }

    /// Multiplicative transmission at pixel `p`.
    fn transmission(&self, p: Vector2<f64>) -> f64 {
        let ab = self.b - self.a;
        let t = ((p - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let d = (p - (self.a + ab * t)).norm();
        let s = self.width / 2.0;
        1.0 - self.depth * (-(d * d) / (2.0 * s * s)).exp()
    }
}

/// Grain, scratches and Gaussian noise, then clamping and quantization.
/// Deterministic per `cfg.seed`.
pub fn apply_sensor_noise(capture: &IrCapture, cfg: &NoiseConfig, bit_depth: u32) -> IrCapture {
    let src = &capture.intensities;
    let (w, h) = src.dims();
    let scratches: Vec<Scratch> = {
        let mut rng = row_rng(cfg.seed, SCRATCH_STREAM, 0);
        (0..cfg.scratch_count).map(|_| Scratch::random(&mut rng, w, h)).collect()
    };
    let max = ((1u32 << bit_depth) - 1) as f64;
    let intensities = Grid::par_from_rows(w, h, |y, row| {
        let mut grain = row_rng(cfg.seed, GRAIN_STREAM, y);
        let mut gauss = row_rng(cfg.seed, GAUSS_STREAM, y);
        for (x, out) in row.iter_mut().enumerate() {
            let mut v = src.at(x, y) as f64;
            if cfg.grain_sigma > 0.0 {
                let g: f64 = grain.sample(StandardNormal);
                v *= 1.0 + cfg.grain_sigma * g;
            }
            for s in &scratches {
                v *= s.transmission(Vector2::new(x as f64, y as f64));
            }
            if cfg.gaussian_sigma > 0.0 {
                let n: f64 = gauss.sample(StandardNormal);
                v += cfg.gaussian_sigma * n;
            }
            *out = ((v.clamp(0.0, 1.0) * max).round() / max) as f32;
        }
    });
    IrCapture {
        intensities,
        ..capture.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::Distortion;
    use std::collections::HashSet;

    fn constant(v: f32) -> IrCapture {
        IrCapture::from_intensities(Grid::new(640, 480, v))
    }

    fn ramp() -> IrCapture {
        IrCapture::from_intensities(Grid::from_fn(64, 48, |x, y| {
            ((x * 7 + y * 13) % 50) as f32 / 50.0
        }))
    }

    #[test]
    fn zero_distortion_is_identity() {
        let c = ramp();
        let intr = Intrinsics::new(60.0, 64, 48);
        assert_eq!(apply_lens_distortion(&c, &intr), c);
    }

    #[test]
    fn principal_point_is_fixed() {
        let c = IrCapture::from_intensities(Grid::from_fn(65, 49, |x, y| (x * 3 + y) as f32 / 300.0));
        let mut intr = Intrinsics::new(60.0, 65, 49);
        assert_eq!((intr.cx, intr.cy), (32.0, 24.0));
        for k1 in [-0.15, 0.05, 0.15] {
            intr.distortion.k1 = k1;
            intr.distortion.k2 = 0.01;
            let out = apply_lens_distortion(&c, &intr);
            assert_eq!(out.intensities.at(32, 24), c.intensities.at(32, 24));
        }
    }

    #[test]
    fn distortion_map_is_monotone_at_vga() {
        for k1 in [-0.19, -0.1, 0.1, 0.19] {
            let mut intr = Intrinsics::new(580.0, 640, 480);
            intr.distortion = Distortion {
                k1,
                ..Default::default()
            };
            for v in (0..480).step_by(17) {
                let mut last = f64::NEG_INFINITY;
                for u in 0..640 {
                    let (x, _) = undistort_point(&intr, u as f64, v as f64);
                    assert!(x > last, "k1 {k1} row {v} col {u}");
                    last = x;
                }
            }
            for u in (0..640).step_by(23) {
                let mut last = f64::NEG_INFINITY;
                for v in 0..480 {
                    let (_, y) = undistort_point(&intr, u as f64, v as f64);
                    assert!(y > last);
                    last = y;
                }
            }
        }
    }

    #[test]
    fn noiseless_is_quantization_only() {
        let c = ramp();
        let out = apply_sensor_noise(&c, &NoiseConfig::disabled(), 10);
        assert_eq!(out.intensities, quantize_intensities(&c.intensities, 10));
    }

    #[test]
    fn gaussian_sigma_statistics() {
        let cfg = NoiseConfig {
            gaussian_sigma: 0.02,
            ..NoiseConfig::disabled()
        }
        .with_seed(42);
        let out = apply_sensor_noise(&constant(0.5), &cfg, 10);
        let n = out.intensities.len() as f64;
        let mean = out.intensities.mean();
        let var = out
            .intensities
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let sd = var.sqrt();
        assert!((0.018..=0.022).contains(&sd), "sd {sd}");
        // noise dithers the quantizer, so the mean tracks the input
        assert!((mean - 0.5).abs() < 3.0 * 0.02 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn output_is_quantized_and_deterministic() {
        let cfg = NoiseConfig {
            scratch_count: 3,
            gaussian_sigma: 0.05,
            grain_sigma: 0.05,
            ..NoiseConfig::default()
        };
        let a = apply_sensor_noise(&ramp(), &cfg, 4);
        let b = apply_sensor_noise(&ramp(), &cfg, 4);
        assert_eq!(a, b);
        let distinct: HashSet<u32> = a.intensities.data().iter().map(|v| v.to_bits()).collect();
        assert!(distinct.len() <= 16);
        let c = apply_sensor_noise(&ramp(), &cfg.with_seed(1), 4);
        assert_ne!(a, c);
    }

    #[test]
    fn scratches_only_darken() {
        let cfg = NoiseConfig {
            scratch_count: 5,
            ..NoiseConfig::disabled()
        };
        let c = constant(0.8);
        let out = apply_sensor_noise(&c, &cfg, 16);
        let q = quantize_intensities(&c.intensities, 16);
        let darker = out
            .intensities
            .data()
            .iter()
            .zip(q.data())
            .filter(|(o, i)| o < i)
            .count();
        assert!(out.intensities.data().iter().zip(q.data()).all(|(o, i)| o <= i));
        assert!(darker > 100);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = NoiseConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.gaussian_sigma = -0.1;
        assert!(cfg.validate().is_err());
    }
}
