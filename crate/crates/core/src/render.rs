//! Ray-traced IR capture of the projected pattern.

use nalgebra::{Point3, Translation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::scene::{AcceleratedScene, Hit, Light, Ray};
use crate::sensor::{pattern_over_pixel, SensorModel};
use crate::{Error, Grid, Pose, Result};

/// Default exposure period used by the motion modes (seconds).
pub const DEFAULT_FRAME_TIME: f64 = 1.0 / 30.0;

/// Fresnel reflectance at normal incidence for the specular lobe.
const SPECULAR_F0: f64 = 0.5;

/// Ideal (pre-ADC) infrared image, intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct IrCapture {
    pub intensities: Grid<f32>,
    /// Camera pose of each exposure (one per row for rolling shutter).
    pub poses: Vec<Pose>,
    /// Exposure start times in seconds, parallel to `poses`.
    pub timestamps: Vec<f64>,
}

impl IrCapture {
    pub fn from_intensities(intensities: Grid<f32>) -> IrCapture {
        IrCapture {
            intensities,
            poses: Vec::new(),
            timestamps: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.intensities.width()
    }

    pub fn height(&self) -> usize {
        self.intensities.height()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    #[default]
    Static,
    LinearVelocity,
    Vibration,
    RollingShutter,
}

/// Camera motion during one frame. Velocity is expressed in the camera
/// frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionSpec {
    pub mode: MotionMode,
    pub velocity: [f64; 3],
    pub amplitude: f64,
    pub exposures: u32,
    pub frame_time: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec {
            mode: MotionMode::Static,
            velocity: [0.0; 3],
            amplitude: 0.0,
            exposures: 1,
            frame_time: DEFAULT_FRAME_TIME,
        }
    }
}

impl MotionSpec {
    pub fn linear(velocity: [f64; 3], exposures: u32) -> MotionSpec {
        MotionSpec {
            mode: MotionMode::LinearVelocity,
            velocity,
            exposures,
            ..Default::default()
        }
    }

    pub fn vibration(amplitude: f64, exposures: u32) -> MotionSpec {
        MotionSpec {
            mode: MotionMode::Vibration,
            amplitude,
            exposures,
            ..Default::default()
        }
    }

    pub fn rolling_shutter(velocity: [f64; 3]) -> MotionSpec {
        MotionSpec {
            mode: MotionMode::RollingShutter,
            velocity,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exposures < 1 {
            return Err(Error::invalid("motion", "exposures must be >= 1"));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::invalid("motion", "amplitude must be >= 0"));
        }
        if !(self.frame_time > 0.0 && self.frame_time.is_finite()) {
            return Err(Error::invalid("motion", "frame time must be positive"));
        }
        if self.velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("motion", "velocity must be finite"));
        }
        Ok(())
    }

    /// Camera-frame displacement and start time of each exposure for the
    /// multi-exposure modes.
    pub fn exposure_offsets(&self) -> Vec<(Vector3<f64>, f64)> {
        let n = self.exposures.max(1);
        let v = Vector3::from(self.velocity);
        (0..n)
            .map(|k| {
                let t = k as f64 / n as f64 * self.frame_time;
                let offset = match self.mode {
                    MotionMode::Static | MotionMode::RollingShutter => Vector3::zeros(),
                    MotionMode::LinearVelocity => v * t,
                    MotionMode::Vibration => {
                        let axis = v.try_normalize(1e-12).unwrap_or_else(Vector3::x);
                        let phase = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
                        axis * (self.amplitude * phase.sin())
                    }
                };
                (offset, t)
            })
            .collect()
    }
}

/// Moves a camera pose by a displacement expressed in the camera frame.
pub fn displaced(pose: &Pose, camera_offset: &Vector3<f64>) -> Pose {
    let world = pose.rotation * camera_offset;
    Pose::from_parts(
        Translation3::from(pose.translation.vector + world),
        pose.rotation,
    )
}

/// Renders one capture. `Static` mode is a single exposure; other modes are
/// forwarded to [`render_with_motion`].
pub fn render_capture(
    accel: &AcceleratedScene,
    sensor: &SensorModel,
    camera_pose: &Pose,
    motion: &MotionSpec,
) -> IrCapture {
    if motion.mode != MotionMode::Static {
        return render_with_motion(accel, sensor, camera_pose, motion);
    }
    let intensities = render_rows(accel, sensor, &sensor.projector_offset(), |_| *camera_pose);
    IrCapture {
        intensities,
        poses: vec![*camera_pose],
        timestamps: vec![0.0],
    }
}

/// Motion blur (mean of several exposures along the path) or rolling
/// shutter (row r exposed at `r / rows · frame_time`).
pub fn render_with_motion(
    accel: &AcceleratedScene,
    sensor: &SensorModel,
    pose: &Pose,
    motion: &MotionSpec,
) -> IrCapture {
    let offset = sensor.projector_offset();
    match motion.mode {
        MotionMode::Static => render_capture(accel, sensor, pose, motion),
        MotionMode::RollingShutter => {
            let rows = sensor.camera.height;
            let v = Vector3::from(motion.velocity);
            let row_time = |r: usize| r as f64 / rows as f64 * motion.frame_time;
            let row_pose = |r: usize| displaced(pose, &(v * row_time(r)));
            let intensities = render_rows(accel, sensor, &offset, row_pose);
            IrCapture {
                intensities,
                poses: (0..rows).map(row_pose).collect(),
                timestamps: (0..rows).map(row_time).collect(),
            }
        }
        MotionMode::LinearVelocity | MotionMode::Vibration => {
            let exposures = motion.exposure_offsets();
            let n = exposures.len() as f32;
            let mut sum: Option<Grid<f32>> = None;
            let mut poses = Vec::with_capacity(exposures.len());
            let mut timestamps = Vec::with_capacity(exposures.len());
            for (d, t) in &exposures {
                let p = displaced(pose, d);
                let img = render_rows(accel, sensor, &offset, |_| p);
                match sum.as_mut() {
                    None => sum = Some(img),
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(img.data()) {
                            *a += *b;
                        }
                    }
                }
                poses.push(p);
                timestamps.push(*t);
            }
            let mut intensities = sum.expect("at least one exposure");
            for v in intensities.data_mut() {
                *v /= n;
            }
            IrCapture {
                intensities,
                poses,
                timestamps,
            }
        }
    }
}

/// Core renderer: every row may use its own camera pose. The projector sits
/// at `projector_offset` in the camera frame.
pub(crate) fn render_rows(
    accel: &AcceleratedScene,
    sensor: &SensorModel,
    projector_offset: &Vector3<f64>,
    pose_for_row: impl Fn(usize) -> Pose + Sync + Send,
) -> Grid<f32> {
    let cam = &sensor.camera;
    Grid::par_from_rows(cam.width, cam.height, |v, row| {
        let pose = pose_for_row(v);
        let inverse = pose.inverse();
        let projector_world = pose * Point3::from(*projector_offset);
        for (u, out) in row.iter_mut().enumerate() {
            let (x, y) = cam.pixel_to_normalized(u as f64, v as f64);
            let dir = pose.rotation * Vector3::new(x, y, 1.0);
            let ray = Ray::new(Point3::from(pose.translation.vector), dir);
            *out = match accel.intersect(&ray) {
                None => accel.ambient_light() as f32,
                Some(hit) => {
                    let px = (u as f64, v as f64);
                    shade(accel, sensor, &hit, &ray, px, &projector_world, &inverse, projector_offset)
                }
            };
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn shade(
    accel: &AcceleratedScene,
    sensor: &SensorModel,
    hit: &Hit<'_>,
    ray: &Ray,
    pixel: (f64, f64),
    projector_world: &Point3<f64>,
    world_to_camera: &Pose,
    projector_offset: &Vector3<f64>,
) -> f32 {
    let albedo = hit.albedo();
    let material = hit.material;
    let n = hit.normal;
    let to_eye = -ray.dir;
    let origin = hit.point + hit.geometric_normal * 1e-6;
    let mut total = accel.ambient_light() * albedo;

    let brdf = |l: &Vector3<f64>, cos_i: f64| -> f64 {
        let r = material.reflectance_ratio;
        let mut lobe = 1.0 - r;
        if r > 0.0 {
            let h = (l + to_eye).normalize();
            let rough = material.roughness.max(1e-3);
            let exponent = 2.0 / (rough * rough) - 2.0;
            let n_dot_h = n.dot(&h).max(0.0);
            let v_dot_h = to_eye.dot(&h).clamp(0.0, 1.0);
            let fresnel = SPECULAR_F0 + (1.0 - SPECULAR_F0) * (1.0 - v_dot_h).powi(5);
            lobe += r * fresnel * (exponent + 2.0) / 2.0 * n_dot_h.powf(exponent);
        }
        albedo * cos_i * lobe
    };

    // projector
    if sensor.projector_power > 0.0 {
        let to_light = projector_world - hit.point;
        let dist = to_light.norm();
        let l = to_light / dist;
        let cos_i = n.dot(&l);
        if cos_i > 0.0 && hit.geometric_normal.dot(&l) > 0.0 {
            let pattern = pattern_over_pixel(
                &sensor.camera,
                &sensor.projector,
                &sensor.pattern,
                projector_offset,
                pixel.0,
                pixel.1,
                &(world_to_camera * hit.point),
                &(world_to_camera.rotation * hit.geometric_normal),
            ) as f64;
            if pattern > 0.0 && !accel.occluded(&Ray { origin, dir: l }, dist) {
                total += sensor.projector_power * pattern / (dist * dist) * brdf(&l, cos_i);
            }
        }
    }

    for light in accel.lights() {
        let (l, dist, scale) = match *light {
            Light::Point { position, intensity } => {
                let d = Point3::from(position) - hit.point;
                let dist = d.norm();
                (d / dist, dist, intensity / (dist * dist))
            }
            Light::Directional {
                direction,
                irradiance,
            } => (-Vector3::from(direction).normalize(), f64::INFINITY, irradiance),
        };
        let cos_i = n.dot(&l);
        if cos_i <= 0.0 || hit.geometric_normal.dot(&l) <= 0.0 {
            continue;
        }
        if accel.occluded(&Ray { origin, dir: l }, dist) {
            continue;
        }
        total += scale * brdf(&l, cos_i);
    }
    total.clamp(0.0, 1.0) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{primitives, Instance, Material, Mesh, Role, Scene};
    use crate::sensor::{generate_dot_pattern, Intrinsics, Pattern};
    use nalgebra::UnitQuaternion;
    use std::sync::Arc;

    fn small_sensor() -> SensorModel {
        let pattern = Arc::new(generate_dot_pattern(128, 0.1, 5).unwrap());
        let mut s = SensorModel::kinect_like(pattern);
        s.camera = Intrinsics::new(60.0, 64, 48);
        s.projector = Intrinsics::new(100.0, 128, 128);
        s
    }

    fn wall_scene(z: f64, material: Material) -> Scene {
        Scene::new().with_instance(Instance::new(
            Arc::new(primitives::quad(20.0, 20.0)),
            Pose::translation(0.0, 0.0, z),
            material,
            Role::Target,
        ))
    }

    fn uniform_sensor() -> SensorModel {
        let mut s = small_sensor();
        s.pattern = Arc::new(Pattern::new(Grid::new(128, 128, 1.0)).unwrap());
        s
    }

    #[test]
    fn inverse_square_falloff() {
        let s = uniform_sensor();
        let (u, v) = (32usize, 24usize);
        let at = |z: f64| {
            let accel = AcceleratedScene::build(&wall_scene(z, Material::diffuse(1.0)));
            let img = render_capture(&accel, &s, &Pose::identity(), &MotionSpec::default());
            img.intensities.at(u, v) as f64
        };
        // analytic point-source irradiance on the plane z
        let expected = |z: f64| {
            let (x, y) = s.camera.pixel_to_normalized(u as f64, v as f64);
            let p = Vector3::new(x * z, y * z, z);
            let to_light = s.projector_offset() - p;
            let d = to_light.norm();
            s.projector_power * (-to_light.z / d) / (d * d)
        };
        let (near, far) = (at(1.0), at(2.0));
        assert!((near - expected(1.0)).abs() < 1e-5, "{near}");
        assert!((far - expected(2.0)).abs() < 1e-5, "{far}");
        assert!((far / near - 0.25).abs() < 0.01, "{near} {far}");
    }

    #[test]
    fn zero_albedo_and_ambient_is_black() {
        let s = small_sensor();
        let mut scene = wall_scene(1.0, Material::glossy(0.0, 0.5, 0.2));
        scene.lights.push(Light::Point {
            position: [0.0, 0.5, 0.0],
            intensity: 1.0,
        });
        let accel = AcceleratedScene::build(&scene);
        let img = render_capture(&accel, &s, &Pose::identity(), &MotionSpec::default());
        assert!(img.intensities.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn values_are_bounded() {
        let mut s = uniform_sensor();
        s.projector_power = 50.0;
        let mut scene = wall_scene(0.5, Material::glossy(1.0, 0.9, 0.05));
        scene.ambient_light = 0.3;
        let accel = AcceleratedScene::build(&scene);
        let img = render_capture(&accel, &s, &Pose::identity(), &MotionSpec::default());
        assert!(img.intensities.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(img.intensities.data().contains(&1.0));
    }

    #[test]
    fn miss_gets_ambient_only() {
        let s = small_sensor();
        let mut scene = Scene::new();
        scene.ambient_light = 0.2;
        let accel = AcceleratedScene::build(&scene);
        let img = render_capture(&accel, &s, &Pose::identity(), &MotionSpec::default());
        assert!(img.intensities.data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn shadowed_patch_is_ambient_only() {
        let s = uniform_sensor();
        // thin occluder between projector (x = -0.075) and the wall, out of
        // the camera's direct view of the checked pixel
        let mut scene = wall_scene(2.0, Material::diffuse(1.0));
        scene.ambient_light = 0.05;
        scene.push(Instance::new(
            Arc::new(primitives::quad(0.05, 0.05)),
            Pose::translation(-0.075, 0.0, 0.5),
            Material::diffuse(1.0),
            Role::Background,
        ));
        let accel = AcceleratedScene::build(&scene);
        let img = render_capture(&accel, &s, &Pose::identity(), &MotionSpec::default());
        // occluder spans x in [-0.1, -0.05] at z = 0.5; the projector ray to
        // wall point (x_w, 0, 2) crosses z = 0.5 at -0.075 + (x_w + 0.075) / 4
        let x_w: f64 = 0.0; // maps to -0.05625, inside [-0.1, -0.05]
        let u = (s.camera.fx * x_w / 2.0 + s.camera.cx).round() as usize;
        let v = s.camera.cy.round() as usize;
        // camera ray to (0,0,2) at z = 0.5 sits at x = 0, clear of the occluder
        assert!((img.intensities.at(u, v) - 0.05).abs() < 1e-6);
        // far from the shadow the wall is lit
        assert!(img.intensities.at(2, v) > 0.1);
    }

    #[test]
    fn strong_ambient_flattens_contrast() {
        let s = small_sensor();
        let mut scene = wall_scene(2.0, Material::diffuse(1.0));
        let peak = s.projector_power / 4.0;
        scene.ambient_light = peak;
        let accel = AcceleratedScene::build(&scene);
        let img = render_capture(&accel, &s, &Pose::identity(), &MotionSpec::default());
        let max = img.intensities.data().iter().cloned().fold(0.0f32, f32::max);
        let min = img.intensities.data().iter().cloned().fold(1.0f32, f32::min);
        assert!(max / min <= 2.0 + 1e-4, "{max} {min}");
    }

    #[test]
    fn render_is_deterministic() {
        let s = small_sensor();
        let accel = AcceleratedScene::build(&wall_scene(1.0, Material::glossy(0.7, 0.3, 0.3)));
        let pose = Pose::from_parts(
            Translation3::new(0.01, 0.02, 0.0),
            UnitQuaternion::from_euler_angles(0.01, -0.02, 0.03),
        );
        let a = render_capture(&accel, &s, &pose, &MotionSpec::default());
        let b = render_capture(&accel, &s, &pose, &MotionSpec::default());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_motion_equals_static() {
        let s = small_sensor();
        let accel = AcceleratedScene::build(&wall_scene(1.0, Material::diffuse(0.8)));
        let pose = Pose::translation(0.0, 0.0, 0.1);
        let stat = render_capture(&accel, &s, &pose, &MotionSpec::default());
        let lin = render_with_motion(&accel, &s, &pose, &MotionSpec::linear([0.0; 3], 4));
        let rs = render_with_motion(&accel, &s, &pose, &MotionSpec::rolling_shutter([0.0; 3]));
        assert_eq!(stat.intensities, lin.intensities);
        assert_eq!(stat.intensities, rs.intensities);
        assert_eq!(rs.poses.len(), 48);
    }

    #[test]
    fn linear_motion_is_mean_of_static_renders() {
        let s = small_sensor();
        let accel = AcceleratedScene::build(&wall_scene(1.0, Material::diffuse(0.8)));
        let pose = Pose::identity();
        let motion = MotionSpec::linear([0.1, 0.0, 0.0], 5);
        let blurred = render_with_motion(&accel, &s, &pose, &motion);
        let statics: Vec<Grid<f32>> = (0..5)
            .map(|k| {
                let x = 0.1 * (k as f64 / 5.0) * DEFAULT_FRAME_TIME;
                render_capture(&accel, &s, &Pose::translation(x, 0.0, 0.0), &MotionSpec::default())
                    .intensities
            })
            .collect();
        for i in 0..blurred.intensities.len() {
            let mean: f32 = statics.iter().map(|g| g.data()[i]).sum::<f32>() / 5.0;
            assert!((blurred.intensities.data()[i] - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn rolling_shutter_rows_come_from_displaced_poses() {
        let s = small_sensor();
        let accel = AcceleratedScene::build(&wall_scene(1.0, Material::diffuse(0.8)));
        let motion = MotionSpec::rolling_shutter([0.5, 0.0, 0.0]);
        let rs = render_with_motion(&accel, &s, &Pose::identity(), &motion);
        for r in [0usize, 20, 47] {
            let x = 0.5 * (r as f64 / 48.0) * DEFAULT_FRAME_TIME;
            let full = render_capture(&accel, &s, &Pose::translation(x, 0.0, 0.0), &MotionSpec::default());
            assert_eq!(rs.intensities.row(r), full.intensities.row(r));
        }
    }

    #[test]
    fn vibration_offsets_follow_sine() {
        let m = MotionSpec::vibration(0.02, 4);
        let offs = m.exposure_offsets();
        assert_eq!(offs.len(), 4);
        let s = std::f64::consts::FRAC_1_SQRT_2 * 0.02;
        for (k, expected) in [s, s, -s, -s].iter().enumerate() {
            assert!((offs[k].0.x - expected).abs() < 1e-12);
        }
        assert!(MotionSpec { exposures: 0, ..m }.validate().is_err());
        assert!(MotionSpec::vibration(-1.0, 2).validate().is_err());
    }

    fn mirrored(mesh: &Mesh) -> Mesh {
        let pos = mesh.positions().iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let tris = mesh.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
        Mesh::new(pos, tris).unwrap().0
    }

    #[test]
    fn mirror_symmetry() {
        let s = small_sensor();
        let sphere = primitives::uv_sphere(0.15, 24, 12);
        let cube = primitives::cube(0.1);
        let scene_of = |sphere: Mesh, cube: Mesh, sign: f64| {
            let mut scene = wall_scene(1.5, Material::diffuse(0.9));
            scene.push(Instance::new(
                Arc::new(sphere),
                Pose::translation(sign * 0.12, 0.05, 1.0),
                Material::glossy(0.8, 0.3, 0.3),
                Role::Target,
            ));
            scene.push(Instance::new(
                Arc::new(cube),
                Pose::translation(sign * -0.2, -0.1, 1.1),
                Material::diffuse(0.6),
                Role::Background,
            ));
            scene
        };
        let a = AcceleratedScene::build(&scene_of(sphere.clone(), cube.clone(), 1.0));
        let b = AcceleratedScene::build(&scene_of(mirrored(&sphere), mirrored(&cube), -1.0));
        let img_a = render_rows(&a, &s, &s.projector_offset(), |_| Pose::identity());
        let mut mirror_sensor = s.clone();
        mirror_sensor.pattern = Arc::new(Pattern::new(s.pattern.image().flip_horizontal()).unwrap());
        let img_b = render_rows(&b, &mirror_sensor, &-s.projector_offset(), |_| Pose::identity());
        let flipped = img_b.flip_horizontal();
        let diff: f64 = img_a
            .data()
            .iter()
            .zip(flipped.data())
            .map(|(x, y)| (x - y).abs() as f64)
            .sum::<f64>()
            / img_a.len() as f64;
        assert!(diff < 1e-3, "mean abs diff {diff}");
    }
}
