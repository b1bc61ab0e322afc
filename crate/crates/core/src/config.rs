//! TOML run configuration.
//!
//! [`Config::default`] serializes every setting, so `slsim default-config`
//! yields a file that reproduces a run without relying on built-in values.
//! Relative asset paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{BenchmarkSettings, ErrorModelCurve};
use crate::compositor::add_primitive_clutter;
use crate::noise::NoiseConfig;
use crate::pipeline::{Pipeline, PostConfig};
use crate::render::MotionSpec;
use crate::scene::primitives::{cube, quad, uv_sphere};
use crate::scene::{load_mesh, Aabb, Instance, Light, Material, MeshFormat, Role, Scene};
use crate::sensor::{
    generate_dot_pattern_with_window, load_pattern_image, Intrinsics, Orientation, Pattern, SensorModel,
    DEFAULT_UNIQUENESS_WINDOW,
};
use crate::stereo::{SubpixelMethod, DEFAULT_MIN_TEXTURE, DEFAULT_UNIQUENESS_RATIO};
use crate::viewpoints::ViewpointSpec;
use crate::{Error, Grid, Pose, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Base seed; frame `i` uses `seed + i` for its noise.
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    pub sensor: SensorConfig,
    pub pattern: PatternConfig,
    pub scene: SceneConfig,
    pub noise: NoiseSection,
    pub motion: MotionSpec,
    pub post: PostConfig,
    pub matching: MatchingConfig,
    pub background: BackgroundConfig,
    pub viewpoints: ViewpointSpec,
    pub output: OutputConfig,
    pub benchmark: BenchmarkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub camera: Intrinsics,
    /// The projector resolution always equals the pattern side and its
    /// principal point is centered.
    pub projector_focal_px: f64,
    pub baseline_m: f64,
    pub orientation: Orientation,
    pub depth_range_m: [f64; 2],
    pub window_size_px: usize,
    pub subpixel_denominator: u32,
    pub ir_bit_depth: u32,
    pub reference_distance_m: f64,
    pub projector_power: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let placeholder = Arc::new(Pattern::new(Grid::new(1, 1, 0.0)).expect("1x1 pattern"));
        let m = SensorModel::kinect_like(placeholder);
        SensorConfig {
            camera: m.camera,
            projector_focal_px: m.projector.fx,
            baseline_m: m.baseline_m,
            orientation: m.orientation,
            depth_range_m: m.depth_range_m,
            window_size_px: m.window_size_px,
            subpixel_denominator: m.subpixel_denominator,
            ir_bit_depth: m.ir_bit_depth,
            reference_distance_m: m.reference_distance_m,
            projector_power: m.projector_power,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSource {
    Generated,
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub source: PatternSource,
    /// Used when `source = "image"`; non-square images are zero-padded.
    pub image_path: String,
    pub side_px: usize,
    pub dot_density: f64,
    pub seed: u64,
    pub uniqueness_window_px: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            source: PatternSource::Generated,
            image_path: String::new(),
            side_px: 1024,
            dot_density: 0.1,
            seed: 0,
            uniqueness_window_px: DEFAULT_UNIQUENESS_WINDOW,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Cube,
    Sphere,
    Mesh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub albedo: f64,
    pub reflectance_ratio: f64,
    pub roughness: f64,
}

impl MaterialConfig {
    pub fn material(&self) -> Material {
        Material::glossy(self.albedo, self.reflectance_ratio, self.roughness)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub target: TargetKind,
    /// Mesh file for `target = "mesh"`; format from the extension.
    pub mesh_path: String,
    /// Multiplier taking mesh units to meters.
    pub mesh_scale: f64,
    /// Edge length (cube) or diameter (sphere) of built-in targets.
    pub target_size_m: f64,
    pub material: MaterialConfig,
    pub ambient_light: f64,
    /// Adds a floor quad under the target.
    pub floor: bool,
    pub floor_size_m: f64,
    pub floor_albedo: f64,
    pub lights: Vec<Light>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            target: TargetKind::Cube,
            mesh_path: String::new(),
            mesh_scale: 1.0,
            target_size_m: 0.3,
            material: MaterialConfig {
                albedo: 0.8,
                reflectance_ratio: 0.0,
                roughness: 1.0,
            },
            ambient_light: 0.0,
            floor: false,
            floor_size_m: 4.0,
            floor_albedo: 0.5,
            lights: Vec::new(),
        }
    }
}

/// Noise settings without the seed, which comes from the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub lens_distortion: bool,
    pub gaussian_sigma: f64,
    pub grain_sigma: f64,
    pub scratch_count: u32,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection::from(NoiseConfig::default())
    }
}

impl From<NoiseConfig> for NoiseSection {
    fn from(n: NoiseConfig) -> Self {
        NoiseSection {
            lens_distortion: n.lens_distortion,
            gaussian_sigma: n.gaussian_sigma,
            grain_sigma: n.grain_sigma,
            scratch_count: n.scratch_count,
        }
    }
}

impl NoiseSection {
    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            lens_distortion: self.lens_distortion,
            gaussian_sigma: self.gaussian_sigma,
            grain_sigma: self.grain_sigma,
            scratch_count: self.scratch_count,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchingConfig {
    pub subpixel: SubpixelMethod,
    pub uniqueness_ratio: f64,
    pub min_texture: u32,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            subpixel: SubpixelMethod::Parabolic,
            uniqueness_ratio: DEFAULT_UNIQUENESS_RATIO,
            min_texture: DEFAULT_MIN_TEXTURE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    /// Random primitives added around the target before rendering.
    pub clutter_count: usize,
    /// Clutter box half extents, centered on the target centroid.
    pub clutter_half_extent_m: [f64; 3],
    /// Translation applied to background instances per frame index.
    pub motion_per_frame_m: [f64; 3],
    /// Real depth scan merged after reconstruction (16-bit PNG,
    /// millimeters, 0 = invalid); empty disables it.
    pub real_scan_path: String,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            clutter_count: 0,
            clutter_half_extent_m: [1.0, 1.0, 1.0],
            motion_per_frame_m: [0.0; 3],
            real_scan_path: String::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write the ideal IR capture of each frame.
    pub write_ir: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { write_ir: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub distances_m: Vec<f64>,
    pub tilts_deg: Vec<f64>,
    pub seeds: u32,
    pub wall_albedo: f64,
    pub ambient_light: f64,
    /// Reference error curves drawn on the distance plot.
    pub overlays: Vec<ErrorModelCurve>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let s = BenchmarkSettings::default();
        BenchmarkConfig {
            distances_m: s.distances,
            tilts_deg: s.tilts,
            seeds: s.seeds,
            wall_albedo: s.wall_albedo,
            ambient_light: s.ambient_light,
            overlays: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        if !path.exists() {
            return Err(Error::MissingAsset(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical serialization. The worker count does not
    /// affect outputs and is left out.
    pub fn hash(&self) -> Result<String> {
        let canonical = Config { jobs: 0, ..self.clone() };
        Ok(hex::encode(Sha256::digest(canonical.to_toml_string()?.as_bytes())))
    }

    pub fn build_pattern(&self, base_dir: &Path) -> Result<Pattern> {
        let p = &self.pattern;
        match p.source {
            PatternSource::Generated => {
                generate_dot_pattern_with_window(p.side_px, p.dot_density, p.seed, p.uniqueness_window_px)
            }
            PatternSource::Image => {
                if p.image_path.is_empty() {
                    return Err(Error::Config("pattern.image_path is empty".into()));
                }
                load_pattern_image(&resolve(base_dir, &p.image_path))
            }
        }
    }

    pub fn build_sensor(&self, base_dir: &Path) -> Result<SensorModel> {
        let s = &self.sensor;
        let pattern = Arc::new(self.build_pattern(base_dir)?);
        let side = pattern.side_px();
        let model = SensorModel {
            camera: s.camera,
            projector: Intrinsics::new(s.projector_focal_px, side, side),
            baseline_m: s.baseline_m,
            orientation: s.orientation,
            pattern,
            depth_range_m: s.depth_range_m,
            window_size_px: s.window_size_px,
            subpixel_denominator: s.subpixel_denominator,
            ir_bit_depth: s.ir_bit_depth,
            reference_distance_m: s.reference_distance_m,
            projector_power: s.projector_power,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn build_pipeline(&self, sensor: SensorModel) -> Result<Pipeline> {
        let m = &self.matching;
        if !(m.uniqueness_ratio > 0.0 && m.uniqueness_ratio <= 1.0) {
            return Err(Error::invalid("matching", "uniqueness_ratio must lie in (0, 1]"));
        }
        let mut pipeline = Pipeline::new(sensor, self.noise.noise_config(), self.post)?
            .with_subpixel(m.subpixel)
            .with_uniqueness_ratio(m.uniqueness_ratio);
        pipeline.match_params.min_texture = m.min_texture;
        Ok(pipeline)
    }

    /// Target, optional floor and clutter. The target sits at the world
    /// origin.
    pub fn build_scene(&self, base_dir: &Path) -> Result<Scene> {
        let sc = &self.scene;
        let mesh = match sc.target {
            TargetKind::Cube => cube(sc.target_size_m / 2.0),
            TargetKind::Sphere => uv_sphere(sc.target_size_m / 2.0, 48, 24),
            TargetKind::Mesh => {
                if sc.mesh_path.is_empty() {
                    return Err(Error::Config("scene.mesh_path is empty".into()));
                }
                let path = resolve(base_dir, &sc.mesh_path);
                let format = MeshFormat::from_path(&path).ok_or_else(|| {
                    Error::Config(format!("{}: unknown mesh extension", path.display()))
                })?;
                load_mesh(&path, format, sc.mesh_scale)?.mesh
            }
        };
        let mut scene = Scene::new().with_instance(Instance::new(
            Arc::new(mesh),
            Pose::identity(),
            sc.material.material(),
            Role::Target,
        ));
        scene.ambient_light = sc.ambient_light;
        scene.lights = sc.lights.clone();
        let target = scene.target_bounds().expect("target present");
        let centroid = target.center();

        if sc.floor {
            // quad normal is -z; tilt it to face -y (image up)
            let pose = Isometry3::from_parts(
                Translation3::new(centroid.x, target.max.y, centroid.z),
                UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -std::f64::consts::FRAC_PI_2),
            );
            scene.push(Instance::new(
                Arc::new(quad(sc.floor_size_m, sc.floor_size_m)),
                pose,
                Material::diffuse(sc.floor_albedo),
                Role::Background,
            ));
        }

        let bg = &self.background;
        if bg.clutter_count > 0 {
            let h = Vector3::from(bg.clutter_half_extent_m);
            let bounds = Aabb::new(centroid - h, centroid + h);
            scene = add_primitive_clutter(scene, bg.clutter_count, bounds, self.seed)?;
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn real_scan_path(&self, base_dir: &Path) -> Option<PathBuf> {
        let p = &self.background.real_scan_path;
        (!p.is_empty()).then(|| resolve(base_dir, p))
    }

    pub fn benchmark_settings(&self) -> BenchmarkSettings {
        let b = &self.benchmark;
        BenchmarkSettings {
            distances: b.distances_m.clone(),
            tilts: b.tilts_deg.clone(),
            seeds: b.seeds,
            base_seed: self.seed,
            noise: self.noise.noise_config(),
            wall_albedo: b.wall_albedo,
            ambient_light: b.ambient_light,
            jobs: self.jobs,
        }
    }
}

/// Moves background instances by `frame * motion_per_frame_m`.
pub fn scene_at_frame(scene: &Scene, motion_per_frame_m: [f64; 3], frame: usize) -> Scene {
    let step = Vector3::from(motion_per_frame_m) * frame as f64;
    let mut out = scene.clone();
    if step != Vector3::zeros() {
        for inst in out.instances.iter_mut().filter(|i| i.role == Role::Background) {
            inst.pose.translation.vector += step;
        }
    }
    out
}

/// SHA-256 over everything that determines a sensor's output, pattern
/// pixels included.
pub fn sensor_hash(sensor: &SensorModel) -> String {
    let mut h = Sha256::new();
    let params = serde_json::json!({
        "camera": sensor.camera,
        "projector": sensor.projector,
        "baseline_m": sensor.baseline_m,
        "orientation": sensor.orientation,
        "depth_range_m": sensor.depth_range_m,
        "window_size_px": sensor.window_size_px,
        "subpixel_denominator": sensor.subpixel_denominator,
        "ir_bit_depth": sensor.ir_bit_depth,
        "reference_distance_m": sensor.reference_distance_m,
        "projector_power": sensor.projector_power,
    });
    h.update(params.to_string().as_bytes());
    for v in sensor.pattern.image().data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn resolve(base_dir: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Centroid used as the look-at point for viewpoints.
pub fn target_centroid(scene: &Scene) -> Point3<f64> {
    crate::compositor::target_centroid(scene)
}
