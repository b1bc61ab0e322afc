//! BVH traversal against brute force over every triangle, using a
//! plane-intersection plus edge-function test that shares no code with the
//! library's intersector.

use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use slsim::scene::{AcceleratedScene, Instance, Material, Mesh, Ray, Role, Scene, HIT_EPSILON};
use slsim::Pose;

/// Distance along the ray and the smallest signed edge margin (relative to
/// the edge length); negative margins are outside.
fn oracle_hit(ray: &Ray, a: Point3<f64>, b: Point3<f64>, c: Point3<f64>) -> Option<(f64, f64)> {
    let n = (b - a).cross(&(c - a));
    let denom = n.dot(&ray.dir);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = n.dot(&(a - ray.origin)) / denom;
    if t <= HIT_EPSILON {
        return None;
    }
    let p = ray.at(t);
    let nn = n.normalize();
    let margin = [(a, b), (b, c), (c, a)]
        .iter()
        .map(|(s, e)| {
            let edge = e - s;
            edge.cross(&(p - s)).dot(&nn) / edge.norm()
        })
        .fold(f64::INFINITY, f64::min);
    Some((t, margin))
}

fn coord() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [coord(), coord(), coord()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nearest_hit_matches_brute_force(
        tris in prop::collection::vec([point(), point(), point()], 1..120),
        rays in prop::collection::vec((point(), point()), 50),
    ) {
        let mut positions = Vec::new();
        let mut indices = Vec::new();
        for t in &tris {
            let base = positions.len() as u32;
            positions.extend(t.iter().map(|p| Point3::from(*p)));
            indices.push([base, base + 1, base + 2]);
        }
        let (mesh, _) = Mesh::new(positions, indices).unwrap();
        let scene = Scene::new().with_instance(Instance::new(
            Arc::new(mesh),
            Pose::identity(),
            Material::default(),
            Role::Target,
        ));
        let accel = AcceleratedScene::build(&scene);
        let world = accel.triangles();

        for (o, d) in &rays {
            let dir = Vector3::from(*d);
            if dir.norm() < 1e-3 {
                continue;
            }
            let ray = Ray::new(Point3::from(*o).map(|v| v * 2.0), dir);
            let hits: Vec<(f64, f64)> = world
                .iter()
                .filter_map(|t| oracle_hit(&ray, t.v0, t.v1, t.v2))
                .collect();
            // rays grazing an edge may legitimately go either way
            let ambiguous = hits.iter().any(|(_, m)| m.abs() < 1e-9);
            let best = hits
                .iter()
                .filter(|(_, m)| *m >= 0.0)
                .map(|(t, _)| *t)
                .fold(f64::INFINITY, f64::min);
            match accel.nearest(&ray) {
                Some((_, t, _, _)) => {
                    if !ambiguous {
                        prop_assert!((t - best).abs() <= 1e-9 * (1.0 + best), "bvh {t} oracle {best}");
                    }
                    prop_assert!(accel.occluded(&ray, t + 1e-6));
                    prop_assert!(!accel.occluded(&ray, t * (1.0 - 1e-9)) || ambiguous);
                }
                None => prop_assert!(ambiguous || best.is_infinite(), "bvh missed a hit at {best}"),
            }
        }
    }
}
