//! Camera viewpoint sampling around a target.
//!
//! Poses are camera-to-world with the camera looking along its +z axis
//! (x right, y down), matching the rest of the crate.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Pose, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewpointMode {
    /// Vertices of a subdivided icosahedron.
    Icosphere,
    /// Uniform directions over a spherical cap.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewpointSpec {
    pub mode: ViewpointMode,
    /// Icosphere subdivision level (icosphere mode).
    pub subdivision: u32,
    /// Number of poses (random mode).
    pub count: usize,
    /// Camera distance to the target centroid is drawn uniformly from this
    /// interval in both modes.
    pub radius_min_m: f64,
    pub radius_max_m: f64,
    /// Cap axis, pointing from the centroid towards the cameras (random mode).
    pub cap_axis: [f64; 3],
    pub cap_half_angle_deg: f64,
    /// World direction that should appear downwards in the image.
    pub down: [f64; 3],
}

impl Default for ViewpointSpec {
    fn default() -> Self {
        ViewpointSpec {
            mode: ViewpointMode::Icosphere,
            subdivision: 0,
            count: 12,
            radius_min_m: 1.0,
            radius_max_m: 1.5,
            cap_axis: [0.0, 0.0, -1.0],
            cap_half_angle_deg: 60.0,
            down: [0.0, 1.0, 0.0],
        }
    }
}

impl ViewpointSpec {
    pub fn validate(&self, depth_range_m: (f64, f64)) -> Result<()> {
        let (lo, hi) = (self.radius_min_m, self.radius_max_m);
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::invalid("viewpoints", format!("empty radius range [{lo}, {hi}]")));
        }
        if lo < depth_range_m.0 || hi > depth_range_m.1 {
            return Err(Error::invalid(
                "viewpoints",
                format!(
                    "radius range [{lo}, {hi}] m outside sensor range [{}, {}] m",
                    depth_range_m.0, depth_range_m.1
                ),
            ));
        }
        if Vector3::from(self.down).norm() == 0.0 || Vector3::from(self.cap_axis).norm() == 0.0 {
            return Err(Error::invalid("viewpoints", "axis vectors must be nonzero"));
        }
        if !(self.cap_half_angle_deg > 0.0 && self.cap_half_angle_deg <= 180.0) {
            return Err(Error::invalid("viewpoints", "cap half angle must be in (0, 180]"));
        }
        match self.mode {
            ViewpointMode::Icosphere if self.subdivision > 6 => {
                Err(Error::invalid("viewpoints", "subdivision above 6 is not supported"))
            }
            ViewpointMode::Random if self.count == 0 => Err(Error::invalid("viewpoints", "count must be > 0")),
            _ => Ok(()),
        }
    }

    /// Number of poses [`sample_viewpoints`] will return.
    pub fn pose_count(&self) -> usize {
        match self.mode {
            ViewpointMode::Icosphere => 10 * 4usize.pow(self.subdivision) + 2,
            ViewpointMode::Random => self.count,
        }
    }
}

/// Camera poses looking at `centroid`.
pub fn sample_viewpoints(
    spec: &ViewpointSpec,
    centroid: Point3<f64>,
    depth_range_m: (f64, f64),
    seed: u64,
) -> Result<Vec<Pose>> {
    spec.validate(depth_range_m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = match spec.mode {
        ViewpointMode::Icosphere => icosphere_vertices(spec.subdivision),
        ViewpointMode::Random => {
            let axis = Vector3::from(spec.cap_axis).normalize();
            let to_axis = Rotation3::rotation_between(&Vector3::z(), &axis)
                .unwrap_or_else(|| Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
            let cos_max = spec.cap_half_angle_deg.to_radians().cos();
            (0..spec.count)
                .map(|_| {
                    let c: f64 = rng.random_range(cos_max..=1.0);
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    to_axis * Vector3::new(s * phi.cos(), s * phi.sin(), c)
                })
                .collect()
        }
    };
    let down = Vector3::from(spec.down).normalize();
    Ok(dirs
        .into_iter()
        .map(|d| {
            let r = if spec.radius_max_m > spec.radius_min_m {
                rng.random_range(spec.radius_min_m..=spec.radius_max_m)
            } else {
                spec.radius_min_m
            };
            look_at(centroid + d * r, centroid, down)
        })
        .collect())
}

/// Camera-to-world pose at `eye` with +z towards `target`.
pub fn look_at(eye: Point3<f64>, target: Point3<f64>, down: Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let mut x = down.cross(&z);
    if x.norm() < 1e-6 {
        // looking along the down hint; any perpendicular will do
        let alt = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        x = alt.cross(&z);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Pose::from_parts(Translation3::from(eye.coords), UnitQuaternion::from_rotation_matrix(&rot))
}

/// Unit vertices of an icosahedron subdivided `level` times.
pub fn icosphere_vertices(level: u32) -> Vec<Vector3<f64>> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}
