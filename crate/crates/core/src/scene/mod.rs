//! Triangle meshes, materials and posed scene assembly.
//!
//! Everything is expressed in meters. [`AcceleratedScene`] flattens a
//! [`Scene`] into world-space triangles behind a BVH for ray queries.

mod bvh;
mod io;
pub mod primitives;

use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bvh::{AcceleratedScene, Aabb, Hit, Ray, WorldTriangle, HIT_EPSILON};
pub use io::{load_mesh, load_mesh_bytes, LoadedMesh, MeshFormat};

use crate::{Error, Grid, Pose, Result};

/// Vertex normals are kept unit-length to within this tolerance.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum Normals {
    /// One normal per vertex, interpolated across each triangle.
    PerVertex(Vec<Vector3<f64>>),
    /// One flat normal per triangle.
    PerFace(Vec<Vector3<f64>>),
}

/// Indexed triangle mesh.
///
/// Construction validates indices and coordinates and drops zero-area
/// triangles, so every `Mesh` value satisfies its invariants.
#[derive(Clone, Debug)]
pub struct Mesh {
    positions: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Normals,
    uvs: Option<Vec<[f64; 2]>>,
    normal_map: Option<Arc<NormalMap>>,
}

impl Mesh {
    /// Builds a mesh with flat per-face normals. Returns the mesh and the
    /// number of degenerate triangles that were dropped.
    pub fn new(positions: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<(Mesh, usize)> {
        if positions.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh", "non-finite vertex coordinate"));
        }
        let n = positions.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::invalid(
                "mesh",
                format!("triangle {t:?} references a vertex beyond {n}"),
            ));
        }
        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| !is_degenerate(&positions, t))
            .collect();
        let dropped = before - triangles.len();
        let normals = Normals::PerFace(
            triangles
                .iter()
                .map(|t| face_normal(&positions, t))
                .collect(),
        );
        Ok((
            Mesh {
                positions,
                triangles,
                normals,
                uvs: None,
                normal_map: None,
            },
            dropped,
        ))
    }

    /// Replaces the flat normals by per-vertex shading normals. Normals are
    /// re-normalized; zero-length entries fall back to the area-weighted
    /// average of the adjacent face normals.
    pub fn with_vertex_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Mesh> {
        if normals.len() != self.positions.len() {
            return Err(Error::invalid(
                "mesh",
                format!(
                    "{} vertex normals for {} vertices",
                    normals.len(),
                    self.positions.len()
                ),
            ));
        }
        let fallback = self.area_weighted_vertex_normals();
        let normals = normals
            .into_iter()
            .zip(fallback)
            .map(|(n, f)| {
                let len = n.norm();
                if len.is_finite() && len > 1e-12 {
                    n / len
                } else {
                    f
                }
            })
            .collect();
        self.normals = Normals::PerVertex(normals);
        Ok(self)
    }

    /// Switches to smooth shading with area-weighted vertex normals.
    pub fn with_smooth_normals(mut self) -> Mesh {
        self.normals = Normals::PerVertex(self.area_weighted_vertex_normals());
        self
    }

    pub fn with_uvs(mut self, uvs: Vec<[f64; 2]>) -> Result<Mesh> {
        if uvs.len() != self.positions.len() {
            return Err(Error::invalid("mesh", "one uv per vertex required"));
        }
        self.uvs = Some(uvs);
        Ok(self)
    }

    /// Attaches a tangent-space normal map. It only takes effect on meshes
    /// with texture coordinates.
    pub fn with_normal_map(mut self, map: Arc<NormalMap>) -> Mesh {
        self.normal_map = Some(map);
        self
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &Normals {
        &self.normals
    }

    pub fn uvs(&self) -> Option<&[[f64; 2]]> {
        self.uvs.as_deref()
    }

    pub fn normal_map(&self) -> Option<&Arc<NormalMap>> {
        self.normal_map.as_ref()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Uniform scale about the origin, e.g. to convert millimeter CAD exports.
    pub fn scaled(mut self, factor: f64) -> Mesh {
        for p in &mut self.positions {
            p.coords *= factor;
        }
        if factor < 0.0 {
            // mirror flips orientation; keep normals consistent with winding
            match &mut self.normals {
                Normals::PerVertex(ns) | Normals::PerFace(ns) => ns.iter_mut().for_each(|n| *n = -*n),
            }
        }
        self
    }

    /// Axis-aligned bounds of the mesh under `pose`.
    pub fn bounds(&self, pose: &Pose) -> Aabb {
        Aabb::from_points(self.positions.iter().map(|p| pose * p))
    }

    fn area_weighted_vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.positions.len()];
        for t in &self.triangles {
            let a = self.positions[t[0] as usize];
            let b = self.positions[t[1] as usize];
            let c = self.positions[t[2] as usize];
            let n = (b - a).cross(&(c - a));
            for &i in t {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vector3::z()
                }
            })
            .collect()
    }
}

fn is_degenerate(positions: &[Point3<f64>], t: &[u32; 3]) -> bool {
    let a = positions[t[0] as usize];
    let b = positions[t[1] as usize];
    let c = positions[t[2] as usize];
    let e1 = b - a;
    let e2 = c - a;
    let scale = e1.norm_squared().max(e2.norm_squared()).max((c - b).norm_squared());
    let area2 = e1.cross(&e2).norm();
    !(area2 > 1e-12 * scale) || scale == 0.0
}

fn face_normal(positions: &[Point3<f64>], t: &[u32; 3]) -> Vector3<f64> {
    let a = positions[t[0] as usize];
    let b = positions[t[1] as usize];
    let c = positions[t[2] as usize];
    (b - a).cross(&(c - a)).normalize()
}

/// Tangent-space normal texture (x = tangent, y = bitangent, z = normal).
#[derive(Clone, Debug)]
pub struct NormalMap {
    texels: Grid<[f32; 3]>,
}

impl NormalMap {
    pub fn new(texels: Grid<[f32; 3]>) -> Result<NormalMap> {
        if texels.is_empty() {
            return Err(Error::invalid("normal map", "empty texture"));
        }
        let texels = texels.map(|n| {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if len > 0.0 {
                [n[0] / len, n[1] / len, n[2] / len]
            } else {
                [0.0, 0.0, 1.0]
            }
        });
        Ok(NormalMap { texels })
    }

    /// Decodes a standard RGB normal map (`n = 2·rgb − 1`).
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<NormalMap> {
        if rgb.len() != width * height * 3 {
            return Err(Error::invalid("normal map", "rgb buffer size mismatch"));
        }
        let texels = Grid::from_fn(width, height, |x, y| {
            let i = (y * width + x) * 3;
            [
                rgb[i] as f32 / 127.5 - 1.0,
                rgb[i + 1] as f32 / 127.5 - 1.0,
                rgb[i + 2] as f32 / 127.5 - 1.0,
            ]
        });
        NormalMap::new(texels)
    }

    /// Random bumpy surface: normals from the gradient of a smoothed noise
    /// height field. `strength` scales the slopes.
    pub fn bumps(size: usize, strength: f64, seed: u64) -> NormalMap {
        let size = size.max(4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Grid::from_fn(size, size, |_, _| rng.random::<f32>());
        // 3x3 wrap-around box blur to get a continuous height field
        let height = Grid::from_fn(size, size, |x, y| {
            let mut s = 0.0;
            for dy in [size - 1, 0, 1] {
                for dx in [size - 1, 0, 1] {
                    s += raw.at((x + dx) % size, (y + dy) % size);
                }
            }
            s / 9.0
        });
        let texels = Grid::from_fn(size, size, |x, y| {
            let gx = height.at((x + 1) % size, y) - height.at((x + size - 1) % size, y);
            let gy = height.at(x, (y + 1) % size) - height.at(x, (y + size - 1) % size);
            [
                -gx * strength as f32,
                -gy * strength as f32,
                1.0,
            ]
        });
        NormalMap::new(texels).expect("non-empty")
    }

    /// Bilinear lookup with wrap-around addressing.
    pub fn sample(&self, uv: [f64; 2]) -> Vector3<f64> {
        let (w, h) = self.texels.dims();
        let x = uv[0].rem_euclid(1.0) * w as f64 - 0.5;
        let y = uv[1].rem_euclid(1.0) * h as f64 - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = (x0 as i64).rem_euclid(w as i64) as usize;
        let yi = (y0 as i64).rem_euclid(h as i64) as usize;
        let xj = (xi + 1) % w;
        let yj = (yi + 1) % h;
        let t = |x: usize, y: usize| {
            let n = self.texels.at(x, y);
            Vector3::new(n[0] as f64, n[1] as f64, n[2] as f64)
        };
        let top = t(xi, yi) * (1.0 - fx) + t(xj, yi) * fx;
        let bottom = t(xi, yj) * (1.0 - fx) + t(xj, yj) * fx;
        let n = top * (1.0 - fy) + bottom * fy;
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::z()
        }
    }
}

#[derive(Clone, Debug)]
pub enum Albedo {
    Constant(f64),
    /// Texture sampled through the mesh uvs (constant 1.0 without uvs).
    Texture(Arc<Grid<f32>>),
}

/// Surface response in the IR band: Lambert diffuse plus a Schlick
/// specular lobe, mixed by `reflectance_ratio`.
#[derive(Clone, Debug)]
pub struct Material {
    pub albedo: Albedo,
    pub reflectance_ratio: f64,
    pub roughness: f64,
}

impl Material {
    pub fn diffuse(albedo: f64) -> Material {
        Material {
            albedo: Albedo::Constant(albedo),
            reflectance_ratio: 0.0,
            roughness: 1.0,
        }
    }

    pub fn glossy(albedo: f64, reflectance_ratio: f64, roughness: f64) -> Material {
        Material {
            albedo: Albedo::Constant(albedo),
            reflectance_ratio,
            roughness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        match &self.albedo {
            Albedo::Constant(a) if !in_unit(*a) => {
                return Err(Error::invalid("material", format!("albedo {a} outside [0,1]")))
            }
            Albedo::Texture(t) if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) => {
                return Err(Error::invalid("material", "albedo texture outside [0,1]"))
            }
            _ => {}
        }
        if !in_unit(self.reflectance_ratio) {
            return Err(Error::invalid(
                "material",
                format!("reflectance ratio {} outside [0,1]", self.reflectance_ratio),
            ));
        }
        if !(self.roughness > 0.0 && self.roughness <= 1.0) {
            return Err(Error::invalid(
                "material",
                format!("roughness {} outside (0,1]", self.roughness),
            ));
        }
        Ok(())
    }

    pub fn albedo_at(&self, uv: Option<[f64; 2]>) -> f64 {
        match (&self.albedo, uv) {
            (Albedo::Constant(a), _) => *a,
            (Albedo::Texture(tex), Some(uv)) => {
                let x = uv[0].rem_euclid(1.0) * tex.width() as f64 - 0.5;
                let y = uv[1].rem_euclid(1.0) * tex.height() as f64 - 0.5;
                tex.sample_bilinear(x, y) as f64
            }
            (Albedo::Texture(_), None) => 1.0,
        }
    }
}

impl Default for Material {
    fn default() -> Self {
        Material::diffuse(0.8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The object the scans are generated for.
    Target,
    /// Floors, occluders, clutter.
    Background,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub mesh: Arc<Mesh>,
    pub pose: Pose,
    pub material: Material,
    pub role: Role,
}

impl Instance {
    pub fn new(mesh: Arc<Mesh>, pose: Pose, material: Material, role: Role) -> Instance {
        Instance {
            mesh,
            pose,
            material,
            role,
        }
    }

    pub fn bounds(&self) -> Aabb {
        self.mesh.bounds(&self.pose)
    }
}

/// Environmental light sources (non-pattern illumination).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Light {
    /// Radiant intensity normalized so a surface at 1 m facing the light
    /// receives `intensity`.
    Point { position: [f64; 3], intensity: f64 },
    /// `direction` is the direction light travels in.
    Directional { direction: [f64; 3], irradiance: f64 },
}

#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub instances: Vec<Instance>,
    pub ambient_light: f64,
    pub lights: Vec<Light>,
}

impl Scene {
    pub fn new() -> Scene {
        Scene::default()
    }

    pub fn with_instance(mut self, instance: Instance) -> Scene {
        self.instances.push(instance);
        self
    }

    pub fn push(&mut self, instance: Instance) {
        self.instances.push(instance);
    }

    pub fn triangle_count(&self) -> usize {
        self.instances.iter().map(|i| i.mesh.triangle_count()).sum()
    }

    /// Union of the world bounds of all target instances.
    pub fn target_bounds(&self) -> Option<Aabb> {
        self.instances
            .iter()
            .filter(|i| i.role == Role::Target)
            .map(Instance::bounds)
            .reduce(|a, b| a.union(&b))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ambient_light >= 0.0) {
            return Err(Error::invalid("scene", "ambient light must be >= 0"));
        }
        for inst in &self.instances {
            inst.material.validate()?;
            let r = inst.pose.rotation.to_rotation_matrix();
            let m = r.matrix();
            let ortho = (m.transpose() * m - nalgebra::Matrix3::identity()).norm();
            if ortho > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("scene", "instance pose is not a rigid transform"));
            }
        }
        Ok(())
    }
}

/// Uniformly random unit quaternion rotation.
pub(crate) fn random_rotation(rng: &mut impl Rng) -> nalgebra::UnitQuaternion<f64> {
    // Shoemake's method
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        b * u3.cos(),
        a * u2.sin(),
        a * u2.cos(),
        b * u3.sin(),
    ))
}
