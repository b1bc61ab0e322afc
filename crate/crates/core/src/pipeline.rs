//! The full acquisition chain for one frame.

use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::noise::{apply_lens_distortion, apply_sensor_noise, NoiseConfig};
use crate::render::{render_capture, IrCapture, MotionSpec};
use crate::scene::AcceleratedScene;
use crate::sensor::{render_reference_image, SensorModel};
use crate::stereo::{compute_disparity_with, disparity_to_depth, DisparityMap, MatchParams, PreparedReference, SubpixelMethod};
use crate::{post, Grid, Pose, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostConfig {
    /// Median kernel side; 1 disables smoothing.
    pub smooth_kernel: usize,
    pub fill_holes: bool,
    pub max_gap_px: usize,
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig {
            smooth_kernel: 3,
            fill_holes: false,
            max_gap_px: 6,
        }
    }
}

impl PostConfig {
    /// Trimming only.
    pub fn none() -> PostConfig {
        PostConfig {
            smooth_kernel: 1,
            fill_holes: false,
            max_gap_px: 0,
        }
    }
}

/// Every intermediate stage of one frame.
#[derive(Clone, Debug)]
pub struct Frame {
    pub ideal: IrCapture,
    pub noisy: IrCapture,
    pub disparity: DisparityMap,
    /// Depth straight from the matcher, trimmed to range.
    pub raw_depth: DepthMap,
    /// After smoothing and optional hole filling.
    pub depth: DepthMap,
}

/// Sensor plus cached reference image and stage settings.
#[derive(Clone, Debug)]
pub struct Pipeline {
    sensor: SensorModel,
    reference: Grid<f32>,
    prepared: PreparedReference,
    pub noise: NoiseConfig,
    pub post: PostConfig,
    pub match_params: MatchParams,
}

impl Pipeline {
    pub fn new(sensor: SensorModel, noise: NoiseConfig, post: PostConfig) -> Result<Pipeline> {
        sensor.validate()?;
        noise.validate()?;
        if post.smooth_kernel == 0 || post.smooth_kernel % 2 == 0 {
            return Err(crate::Error::invalid("post-processing", "smooth_kernel must be odd"));
        }
        let reference = render_reference_image(&sensor);
        let prepared = PreparedReference::for_sensor(&sensor);
        let match_params = MatchParams::for_sensor(&sensor);
        Ok(Pipeline {
            sensor,
            reference,
            prepared,
            noise,
            post,
            match_params,
        })
    }

    pub fn with_subpixel(mut self, method: SubpixelMethod) -> Pipeline {
        self.match_params.subpixel = method;
        self
    }

    pub fn with_uniqueness_ratio(mut self, ratio: f64) -> Pipeline {
        self.match_params.uniqueness_ratio = ratio;
        self
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    pub fn reference(&self) -> &Grid<f32> {
        &self.reference
    }

    /// Renders and reconstructs one frame; `seed` drives the sensor noise.
    pub fn run(&self, accel: &AcceleratedScene, pose: &Pose, motion: &MotionSpec, seed: u64) -> Result<Frame> {
        motion.validate()?;
        let ideal = render_capture(accel, &self.sensor, pose, motion);
        self.reconstruct(ideal, seed)
    }

    /// Everything after rendering.
    pub fn reconstruct(&self, ideal: IrCapture, seed: u64) -> Result<Frame> {
        let cfg = self.noise.with_seed(seed);
        let distorted = if cfg.lens_distortion {
            apply_lens_distortion(&ideal, &self.sensor.camera)
        } else {
            ideal.clone()
        };
        let noisy = apply_sensor_noise(&distorted, &cfg, self.sensor.ir_bit_depth);
        let disparity = compute_disparity_with(&noisy, &self.prepared, &self.sensor, &self.match_params)?;
        let raw_depth = post::trim(&disparity_to_depth(&disparity, &self.sensor), &self.sensor);
        let mut depth = post::smooth(&raw_depth, self.post.smooth_kernel)?;
        if self.post.fill_holes {
            depth = post::fill_holes(&depth, self.post.max_gap_px);
        }
        Ok(Frame {
            ideal,
            noisy,
            disparity,
            raw_depth,
            depth,
        })
    }
}
