//! Median-split bounding volume hierarchy over world-space triangles.

use std::sync::Arc;

use nalgebra::{Point3, Vector3};

use super::{Light, Material, NormalMap, Normals, Scene};

/// Hits closer than this along a ray are ignored (self-intersection guard).
pub const HIT_EPSILON: f64 = 1e-6;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Point3<f64>,
    /// Unit direction.
    pub dir: Vector3<f64>,
}

impl Ray {
    /// Normalizes `dir`.
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Ray {
        Ray {
            origin,
            dir: dir.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Aabb {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Aabb {
        Aabb { min, max }
    }

    pub fn from_points(points: impl IntoIterator<Item = Point3<f64>>) -> Aabb {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(&p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] && other.max[i] <= self.max[i])
    }

    /// Overlap test; boxes that merely touch count as intersecting.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    fn padded(&self) -> Aabb {
        let pad = 1e-9 * (1.0 + self.extent().amax() + self.min.coords.amax().abs().max(self.max.coords.amax().abs()));
        Aabb {
            min: self.min - Vector3::repeat(pad),
            max: self.max + Vector3::repeat(pad),
        }
    }

    #[inline]
    fn slab(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let a = (self.min[i] - origin[i]) * inv_dir[i];
            let b = (self.max[i] - origin[i]) * inv_dir[i];
            // f64::min/max drop NaN (origin on a slab plane with a zero direction)
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        t0 <= t1
    }
}

#[derive(Clone, Debug)]
pub struct WorldTriangle {
    pub v0: Point3<f64>,
    pub v1: Point3<f64>,
    pub v2: Point3<f64>,
    /// Index of the scene instance the triangle came from.
    pub instance: u32,
}

impl WorldTriangle {
    /// Möller–Trumbore; returns (t, u, v) for hits with t > HIT_EPSILON.
    #[inline]
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64, f64)> {
        let e1 = self.v1 - self.v0;
        let e2 = self.v2 - self.v0;
        let p = ray.dir.cross(&e2);
        let det = e1.dot(&p);
        if det == 0.0 {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - self.v0;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = ray.dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&q) * inv;
        (t > HIT_EPSILON).then_some((t, u, v))
    }

    fn bounds(&self) -> Aabb {
        Aabb::from_points([self.v0, self.v1, self.v2])
    }

    fn centroid(&self) -> Point3<f64> {
        Point3::from((self.v0.coords + self.v1.coords + self.v2.coords) / 3.0)
    }
}

#[derive(Clone, Debug)]
struct Shading {
    normals: [Vector3<f64>; 3],
    uv: Option<[[f64; 2]; 3]>,
    tangent: Vector3<f64>,
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle. Interior: index of the second child (the first
    /// child immediately follows the node).
    index: u32,
    /// Leaf triangle count; zero for interior nodes.
    count: u32,
    axis: u8,
}

/// Nearest intersection along a ray.
#[derive(Clone, Debug)]
pub struct Hit<'a> {
    pub point: Point3<f64>,
    pub distance: f64,
    /// Shading normal (interpolated / normal-mapped), facing the ray origin.
    pub normal: Vector3<f64>,
    /// Flat triangle normal, facing the ray origin.
    pub geometric_normal: Vector3<f64>,
    pub uv: Option<[f64; 2]>,
    pub material: &'a Material,
    pub triangle: usize,
}

impl Hit<'_> {
    pub fn albedo(&self) -> f64 {
        self.material.albedo_at(self.uv)
    }
}

/// Immutable, thread-safe intersection structure built from a [`Scene`].
#[derive(Clone, Debug)]
pub struct AcceleratedScene {
    triangles: Vec<WorldTriangle>,
    shading: Vec<Shading>,
    nodes: Vec<Node>,
    materials: Vec<Material>,
    normal_maps: Vec<Option<Arc<NormalMap>>>,
    ambient_light: f64,
    lights: Vec<Light>,
}

impl AcceleratedScene {
    pub fn build(scene: &Scene) -> AcceleratedScene {
        let mut tris = Vec::with_capacity(scene.triangle_count());
        let mut shading = Vec::with_capacity(scene.triangle_count());
        for (inst_idx, inst) in scene.instances.iter().enumerate() {
            let mesh = &inst.mesh;
            let pos = mesh.positions();
            let rot = inst.pose.rotation;
            for (ti, t) in mesh.triangles().iter().enumerate() {
                let [a, b, c] = t.map(|i| inst.pose * pos[i as usize]);
                let normals = match mesh.normals() {
                    Normals::PerVertex(ns) => t.map(|i| rot * ns[i as usize]),
                    Normals::PerFace(ns) => [rot * ns[ti]; 3],
                };
                let uv = mesh.uvs().map(|uvs| t.map(|i| uvs[i as usize]));
                let tangent = uv
                    .map(|uv| {
                        let (dp1, dp2) = (b - a, c - a);
                        let (du1, dv1) = (uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]);
                        let (du2, dv2) = (uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
                        let det = du1 * dv2 - du2 * dv1;
                        if det.abs() > 1e-18 {
                            (dp1 * dv2 - dp2 * dv1) / det
                        } else {
                            dp1
                        }
                    })
                    .unwrap_or_else(|| b - a);
                tris.push(WorldTriangle {
                    v0: a,
                    v1: b,
                    v2: c,
                    instance: inst_idx as u32,
                });
                shading.push(Shading {
                    normals,
                    uv,
                    tangent,
                });
            }
        }

        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let centroids: Vec<Point3<f64>> = tris.iter().map(WorldTriangle::centroid).collect();
        let bounds: Vec<Aabb> = tris.iter().map(WorldTriangle::bounds).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            build_node(&mut nodes, &mut order, 0, &centroids, &bounds);
        }
        let triangles = order.iter().map(|&i| tris[i as usize].clone()).collect();
        let shading = order.iter().map(|&i| shading[i as usize].clone()).collect();

        AcceleratedScene {
            triangles,
            shading,
            nodes,
            materials: scene.instances.iter().map(|i| i.material.clone()).collect(),
            normal_maps: scene
                .instances
                .iter()
                .map(|i| i.mesh.normal_map().cloned())
                .collect(),
            ambient_light: scene.ambient_light,
            lights: scene.lights.clone(),
        }
    }

    /// World-space triangles in BVH order.
    pub fn triangles(&self) -> &[WorldTriangle] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn ambient_light(&self) -> f64 {
        self.ambient_light
    }

    pub fn lights(&self) -> &[Light] {
        &self.lights
    }

    /// Index, distance and barycentrics of the nearest triangle hit.
    pub fn nearest(&self, ray: &Ray) -> Option<(usize, f64, f64, f64)> {
        self.traverse(ray, f64::INFINITY, false)
    }

    /// True if anything lies along the ray strictly before `max_distance`.
    pub fn occluded(&self, ray: &Ray, max_distance: f64) -> bool {
        self.traverse(ray, max_distance, true).is_some()
    }

    pub fn intersect(&self, ray: &Ray) -> Option<Hit<'_>> {
        let (idx, t, u, v) = self.nearest(ray)?;
        let tri = &self.triangles[idx];
        let sh = &self.shading[idx];
        let w = 1.0 - u - v;
        let point = ray.at(t);
        let mut geometric = (tri.v1 - tri.v0).cross(&(tri.v2 - tri.v0)).normalize();
        if geometric.dot(&ray.dir) > 0.0 {
            geometric = -geometric;
        }
        let mut normal = sh.normals[0] * w + sh.normals[1] * u + sh.normals[2] * v;
        let len = normal.norm();
        normal = if len > 1e-12 { normal / len } else { geometric };
        if normal.dot(&geometric) < 0.0 {
            normal = -normal;
        }
        let uv = sh.uv.map(|uv| {
            [
                uv[0][0] * w + uv[1][0] * u + uv[2][0] * v,
                uv[0][1] * w + uv[1][1] * u + uv[2][1] * v,
            ]
        });
        if let (Some(map), Some(uv)) = (&self.normal_maps[tri.instance as usize], uv) {
            let t = (sh.tangent - normal * normal.dot(&sh.tangent)).try_normalize(1e-12);
            if let Some(t) = t {
                let b = normal.cross(&t);
                let ts = map.sample(uv);
                let perturbed = (t * ts.x + b * ts.y + normal * ts.z).normalize();
                if perturbed.dot(&geometric) > 0.0 {
                    normal = perturbed;
                }
            }
        }
        Some(Hit {
            point,
            distance: t,
            normal,
            geometric_normal: geometric,
            uv,
            material: &self.materials[tri.instance as usize],
            triangle: idx,
        })
    }

    fn traverse(&self, ray: &Ray, t_limit: f64, any: bool) -> Option<(usize, f64, f64, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vector3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<(usize, f64, f64, f64)> = None;
        let mut best_t = t_limit;
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.slab(&ray.origin, &inv, best_t) {
                continue;
            }
            if node.count > 0 {
                let start = node.index as usize;
                for i in start..start + node.count as usize {
                    if let Some((t, u, v)) = self.triangles[i].intersect(ray) {
                        if t < best_t {
                            best_t = t;
                            best = Some((i, t, u, v));
                            if any {
                                return best;
                            }
                        }
                    }
                }
            } else {
                let first = stack[sp] + 1;
                let second = node.index;
                // visit the child on the ray's near side first
                let (near, far) = if ray.dir[node.axis as usize] < 0.0 {
                    (second, first)
                } else {
                    (first, second)
                };
                stack[sp] = far;
                stack[sp + 1] = near;
                sp += 2;
            }
        }
        best
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    offset: usize,
    centroids: &[Point3<f64>],
    bounds: &[Aabb],
) -> usize {
    let node_bounds = order
        .iter()
        .map(|&i| bounds[i as usize])
        .reduce(|a, b| a.union(&b))
        .expect("non-empty")
        .padded();
    let me = nodes.len();
    nodes.push(Node {
        bounds: node_bounds,
        index: offset as u32,
        count: order.len() as u32,
        axis: 0,
    });
    if order.len() <= LEAF_SIZE {
        return me;
    }
    let cb = Aabb::from_points(order.iter().map(|&i| centroids[i as usize]));
    let ext = cb.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_node(nodes, left, offset, centroids, bounds);
    let second = build_node(nodes, right, offset + mid, centroids, bounds);
    nodes[me].index = second as u32;
    nodes[me].count = 0;
    nodes[me].axis = axis as u8;
    me
}
