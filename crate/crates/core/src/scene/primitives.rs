//! Procedural meshes: boxes, spheres, cylinders and quads, all centered on
//! the origin with outward-facing winding and texture coordinates.

use nalgebra::{Point3, Vector3};

use super::Mesh;

fn finish(positions: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>, uvs: Vec<[f64; 2]>) -> Mesh {
    let (mesh, _) = Mesh::new(positions, triangles).expect("procedural mesh is valid");
    mesh.with_uvs(uvs).expect("one uv per vertex")
}

/// Axis-aligned box with the given half extents (24 vertices, 12 triangles).
pub fn box_mesh(half: [f64; 3]) -> Mesh {
    let h = Vector3::new(half[0], half[1], half[2]);
    let faces: [(Vector3<f64>, Vector3<f64>, Vector3<f64>); 6] = [
        (Vector3::x(), Vector3::y(), Vector3::z()),
        (-Vector3::x(), Vector3::z(), Vector3::y()),
        (Vector3::y(), Vector3::z(), Vector3::x()),
        (-Vector3::y(), Vector3::x(), Vector3::z()),
        (Vector3::z(), Vector3::x(), Vector3::y()),
        (-Vector3::z(), Vector3::y(), Vector3::x()),
    ];
    let mut positions = Vec::with_capacity(24);
    let mut uvs = Vec::with_capacity(24);
    let mut triangles = Vec::with_capacity(12);
    for (n, u, v) in faces {
        debug_assert!((u.cross(&v) - n).norm() < 1e-12);
        let c = n.component_mul(&h);
        let u = u.component_mul(&h);
        let v = v.component_mul(&h);
        let base = positions.len() as u32;
        for (su, sv) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            positions.push(Point3::from(c + u * su + v * sv));
            uvs.push([(su + 1.0) / 2.0, (sv + 1.0) / 2.0]);
        }
        triangles.push([base, base + 1, base + 2]);
        triangles.push([base, base + 2, base + 3]);
    }
    finish(positions, triangles, uvs)
}

/// Cube of the given half side.
pub fn cube(half_side: f64) -> Mesh {
    box_mesh([half_side; 3])
}

/// Latitude/longitude sphere with smooth normals.
pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> Mesh {
    let segments = segments.max(3);
    let rings = rings.max(2);
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut normals = Vec::new();
    for r in 0..=rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..=segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            let n = Vector3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
            positions.push(Point3::from(n * radius));
            normals.push(n);
            uvs.push([s as f64 / segments as f64, r as f64 / rings as f64]);
        }
    }
    let stride = segments as u32 + 1;
    let mut triangles = Vec::new();
    for r in 0..rings as u32 {
        for s in 0..segments as u32 {
            let a = r * stride + s;
            let b = a + stride;
            // winding chosen so face normals point outwards
            triangles.push([a, a + 1, b]);
            triangles.push([a + 1, b + 1, b]);
        }
    }
    let mesh = finish(positions, triangles, uvs);
    mesh.with_vertex_normals(normals).expect("normal count matches")
}

/// Closed cylinder along the y axis.
pub fn cylinder(radius: f64, half_height: f64, segments: usize) -> Mesh {
    let segments = segments.max(3);
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();
    // side
    for s in 0..=segments {
        let phi = std::f64::consts::TAU * s as f64 / segments as f64;
        let (x, z) = (radius * phi.cos(), radius * phi.sin());
        positions.push(Point3::new(x, -half_height, z));
        positions.push(Point3::new(x, half_height, z));
        let u = s as f64 / segments as f64;
        uvs.push([u, 0.0]);
        uvs.push([u, 1.0]);
    }
    for s in 0..segments as u32 {
        let a = 2 * s;
        triangles.push([a, a + 1, a + 2]);
        triangles.push([a + 1, a + 3, a + 2]);
    }
    // caps
    for (y, up) in [(-half_height, false), (half_height, true)] {
        let center = positions.len() as u32;
        positions.push(Point3::new(0.0, y, 0.0));
        uvs.push([0.5, 0.5]);
        let ring = positions.len() as u32;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            positions.push(Point3::new(radius * phi.cos(), y, radius * phi.sin()));
            uvs.push([0.5 + 0.5 * phi.cos(), 0.5 + 0.5 * phi.sin()]);
        }
        for s in 0..segments as u32 {
            let a = ring + s;
            let b = ring + (s + 1) % segments as u32;
            if up {
                triangles.push([center, b, a]);
            } else {
                triangles.push([center, a, b]);
            }
        }
    }
    finish(positions, triangles, uvs)
}

/// Rectangle in the z = 0 plane facing -z (towards a camera looking down +z).
pub fn quad(width: f64, height: f64) -> Mesh {
    let (hw, hh) = (width / 2.0, height / 2.0);
    let positions = vec![
        Point3::new(-hw, -hh, 0.0),
        Point3::new(hw, -hh, 0.0),
        Point3::new(hw, hh, 0.0),
        Point3::new(-hw, hh, 0.0),
    ];
    let uvs = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    finish(positions, vec![[0, 2, 1], [0, 3, 2]], uvs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Normals;

    fn outward(mesh: &Mesh) -> bool {
        let p = mesh.positions();
        mesh.triangles().iter().all(|t| {
            let a = p[t[0] as usize];
            let b = p[t[1] as usize];
            let c = p[t[2] as usize];
            let n = (b - a).cross(&(c - a));
            let centroid = (a.coords + b.coords + c.coords) / 3.0;
            n.dot(&centroid) > 0.0
        })
    }

    #[test]
    fn closed_primitives_wind_outwards() {
        assert!(outward(&cube(0.5)));
        assert!(outward(&uv_sphere(1.0, 16, 8)));
        assert!(outward(&cylinder(0.5, 1.0, 12)));
    }

    #[test]
    fn cube_has_twelve_axis_aligned_faces() {
        let m = cube(0.5);
        assert_eq!(m.triangle_count(), 12);
        match m.normals() {
            Normals::PerFace(ns) => {
                for n in ns {
                    let max = n.iter().map(|c| c.abs()).fold(0.0, f64::max);
                    assert!((max - 1.0).abs() < 1e-12);
                }
            }
            _ => panic!("flat normals expected"),
        }
    }

    #[test]
    fn quad_faces_negative_z() {
        let m = quad(2.0, 1.0);
        match m.normals() {
            Normals::PerFace(ns) => assert!(ns.iter().all(|n| (n + Vector3::z()).norm() < 1e-12)),
            _ => panic!(),
        }
    }
}
