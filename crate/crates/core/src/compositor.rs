//! Background composition.
//!
//! Geometric backgrounds (clutter, floors, occluders) are added to the scene
//! before rendering so they cast and receive pattern shadows. Real captured
//! scans have no pattern to interact with and are merged after
//! reconstruction by z-compositing.

use std::sync::Arc;

use nalgebra::{Isometry3, Point3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::depth::DepthMap;
use crate::scene::primitives::{box_mesh, cylinder, uv_sphere};
use crate::scene::{random_rotation, Aabb, Instance, Material, Mesh, Role, Scene};
use crate::{Error, Result};

/// Attempts per primitive before giving up on placement.
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Appends `count` random boxes, spheres and cylinders to `scene`.
///
/// Every primitive's world bounding box lies inside `bounds` and does not
/// touch the bounding box of the target instances. Primitive size is drawn
/// relative to the smallest side of `bounds`.
pub fn add_primitive_clutter(mut scene: Scene, count: usize, bounds: Aabb, seed: u64) -> Result<Scene> {
    let ext = bounds.extent();
    if bounds.is_empty() || !(ext.min() > 0.0) || !ext.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("clutter bounds", "box must have positive finite extent"));
    }
    let target = scene.target_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_size = 0.25 * ext.min();

    for n in 0..count {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let mesh = random_primitive(&mut rng, max_size);
            let rotation = random_rotation(&mut rng);
            let local = mesh.bounds(&Isometry3::from_parts(Translation3::identity(), rotation));
            // translations that keep the rotated box inside `bounds`
            let lo = bounds.min - local.min;
            let hi = bounds.max - local.max;
            if (0..3).any(|i| lo[i] > hi[i]) {
                continue;
            }
            let t = Vector3::from_fn(|i, _| rng.random_range(lo[i]..=hi[i]));
            let world = Aabb::new(local.min + t, local.max + t);
            if target.is_some_and(|tb| tb.intersects(&world)) {
                continue;
            }
            let material = random_material(&mut rng);
            placed = Some(Instance::new(
                Arc::new(mesh),
                Isometry3::from_parts(Translation3::from(t), rotation),
                material,
                Role::Background,
            ));
            break;
        }
        match placed {
            Some(inst) => scene.push(inst),
            None => {
                return Err(Error::invalid(
                    "clutter bounds",
                    format!("no free space for primitive {n}: bounds are covered by the target"),
                ))
            }
        }
    }
    Ok(scene)
}

fn random_primitive(rng: &mut ChaCha8Rng, max_size: f64) -> Mesh {
    let size = |rng: &mut ChaCha8Rng| rng.random_range(0.2 * max_size..=max_size) / 2.0;
    match rng.random_range(0..3) {
        0 => box_mesh([size(rng), size(rng), size(rng)]),
        1 => uv_sphere(size(rng), 16, 8),
        _ => cylinder(size(rng), size(rng), 16),
    }
}

fn random_material(rng: &mut ChaCha8Rng) -> Material {
    let albedo = rng.random_range(0.2..0.9);
    if rng.random_bool(0.3) {
        Material::glossy(albedo, rng.random_range(0.1..0.5), rng.random_range(0.2..0.8))
    } else {
        Material::diffuse(albedo)
    }
}

/// Merges a reconstructed scan with a real background scan of the same
/// resolution. Where both are valid the nearer depth wins; otherwise the
/// valid one is kept. The background is assumed to be expressed in the
/// virtual camera's frame already.
pub fn blend_real_background(depth: &DepthMap, background: &DepthMap) -> Result<DepthMap> {
    if depth.dims() != background.dims() {
        return Err(Error::DimensionMismatch(format!(
            "scan is {}x{}, background is {}x{}",
            depth.width(),
            depth.height(),
            background.width(),
            background.height()
        )));
    }
    let mut out = depth.clone();
    for (o, b) in out.grid_mut().data_mut().iter_mut().zip(background.grid().data()) {
        *o = match (*o, *b) {
            (Some(f), Some(b)) => Some(f.min(b)),
            (f, b) => f.or(b),
        };
    }
    Ok(out)
}

/// Loads a background scan written in the crate's depth PNG format.
pub fn load_real_background(path: &std::path::Path) -> Result<DepthMap> {
    DepthMap::read_png(path)
}

/// Centroid of the target instances, or the origin when there are none.
pub fn target_centroid(scene: &Scene) -> Point3<f64> {
    scene.target_bounds().map(|b| b.center()).unwrap_or_else(Point3::origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::primitives::cube;
    use crate::Pose;

    fn target_scene() -> Scene {
        Scene::new().with_instance(Instance::new(
            Arc::new(cube(0.2)),
            Pose::identity(),
            Material::default(),
            Role::Target,
        ))
    }

    fn bounds() -> Aabb {
        Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn zero_count_leaves_scene_unchanged() {
        let s = add_primitive_clutter(target_scene(), 0, bounds(), 1).unwrap();
        assert_eq!(s.instances.len(), 1);
    }

    #[test]
    fn clutter_is_deterministic() {
        let a = add_primitive_clutter(target_scene(), 50, bounds(), 9).unwrap();
        let b = add_primitive_clutter(target_scene(), 50, bounds(), 9).unwrap();
        assert_eq!(a.instances.len(), 51);
        for (x, y) in a.instances.iter().zip(&b.instances) {
            assert_eq!(x.pose, y.pose);
            assert_eq!(x.mesh.positions(), y.mesh.positions());
            assert_eq!(x.material.albedo_at(None), y.material.albedo_at(None));
        }
        let c = add_primitive_clutter(target_scene(), 50, bounds(), 10).unwrap();
        assert_ne!(a.instances[1].pose, c.instances[1].pose);
    }

    #[test]
    fn clutter_stays_inside_bounds_and_off_target() {
        let scene = add_primitive_clutter(target_scene(), 50, bounds(), 3).unwrap();
        let target = scene.target_bounds().unwrap();
        for inst in scene.instances.iter().filter(|i| i.role == Role::Background) {
            // recompute from vertices rather than trusting Instance::bounds
            let world = Aabb::from_points(inst.mesh.positions().iter().map(|p| inst.pose * p));
            assert!(bounds().contains(&Aabb::new(
                world.min + Vector3::repeat(1e-12),
                world.max - Vector3::repeat(1e-12)
            )));
            assert!(!target.intersects(&world));
        }
        scene.validate().unwrap();
    }

    #[test]
    fn degenerate_bounds_are_rejected() {
        let flat = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 1.0));
        assert!(add_primitive_clutter(target_scene(), 1, flat, 0).is_err());
        let covered = Aabb::new(Point3::new(-0.1, -0.1, -0.1), Point3::new(0.1, 0.1, 0.1));
        assert!(add_primitive_clutter(target_scene(), 1, covered, 0).is_err());
    }

    fn map(values: &[Option<f64>]) -> DepthMap {
        DepthMap::from_grid(crate::Grid::from_vec(values.len(), 1, values.to_vec()))
    }

    #[test]
    fn blending_follows_z_order() {
        let bg = map(&[Some(1.0), Some(3.0), None, Some(2.0)]);
        let empty = map(&[None; 4]);
        assert_eq!(blend_real_background(&empty, &bg).unwrap(), bg);

        let fg = map(&[Some(2.0), Some(1.5), Some(4.0), None]);
        let out = blend_real_background(&fg, &bg).unwrap();
        assert_eq!(out, map(&[Some(1.0), Some(1.5), Some(4.0), Some(2.0)]));
    }

    #[test]
    fn blending_rejects_size_mismatch() {
        let a = DepthMap::empty(4, 3);
        let b = DepthMap::empty(3, 4);
        assert!(matches!(blend_real_background(&a, &b), Err(Error::DimensionMismatch(_))));
    }
}
