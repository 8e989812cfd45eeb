//! Procedural test and phantom meshes. All are closed and outward-oriented.

use super::{DeformableMesh, Vec3};
use crate::numfmt::round_sig9;

fn build(positions: Vec<Vec3>, mut triangles: Vec<[u32; 3]>) -> DeformableMesh {
    // Convex generators: flip any face whose normal points at the centroid.
    let centre = positions.iter().fold(Vec3::zeros(), |a, p| a + p) / positions.len() as f64;
    for tri in &mut triangles {
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&((a + b + c) / 3.0 - centre)) < 0.0 {
            tri.swap(1, 2);
        }
    }
    DeformableMesh::new(positions, triangles).expect("procedural mesh is valid")
}

pub fn tetrahedron() -> DeformableMesh {
    let positions = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    build(positions, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// Axis-aligned cube spanning `[0, 1]^3`, two triangles per face.
pub fn unit_cube() -> DeformableMesh {
    let positions = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    build(positions, triangles)
}

pub fn icosahedron(radius: f64) -> DeformableMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let positions = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize() * radius)
        .collect();
    let triangles = vec![
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
    build(positions, triangles)
}

/// Latitude/longitude tessellated ellipsoid centred at the origin with
/// `2 * slices * (stacks - 1)` triangles.
pub fn uv_ellipsoid(semi_axes: Vec3, slices: u32, stacks: u32) -> DeformableMesh {
    assert!(slices >= 3 && stacks >= 2);
    let mut positions = vec![Vec3::new(0.0, 0.0, semi_axes.z)];
    for i in 1..stacks {
        let theta = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = std::f64::consts::TAU * j as f64 / slices as f64;
            positions.push(Vec3::new(
                semi_axes.x * theta.sin() * phi.cos(),
                semi_axes.y * theta.sin() * phi.sin(),
                semi_axes.z * theta.cos(),
            ));
        }
    }
    let bottom = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, -semi_axes.z));

    let ring = |i: u32, j: u32| 1 + (i - 1) * slices + (j % slices);
    let mut triangles = Vec::with_capacity((2 * slices * (stacks - 1)) as usize);
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for j in 0..slices {
        triangles.push([bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    DeformableMesh::new(positions, triangles).expect("ellipsoid tessellation is valid")
}

/// Span of the phantom along the anteroposterior (y) axis, mm.
pub const PHANTOM_AP_SPAN_MM: f64 = 150.0;

/// A 3,000-triangle liver-like phantom: a 200 x 150 x 100 mm ellipsoid whose
/// thickness tapers from the right lobe (-x) toward the left lobe (+x).
///
/// Axes: x left-right, y anteroposterior, z cranio-caudal. Coordinates are
/// rounded to 9 significant digits so the mesh survives an OBJ round trip
/// unchanged.
pub fn liver_phantom() -> DeformableMesh {
    let base = uv_ellipsoid(Vec3::new(100.0, PHANTOM_AP_SPAN_MM / 2.0, 50.0), 60, 26);
    let positions = base
        .rest_positions()
        .iter()
        .map(|p| {
            let taper = 1.0 - 0.3 * (p.x + 100.0) / 200.0;
            Vec3::new(p.x, p.y, p.z * taper).map(round_sig9)
        })
        .collect();
    base.with_rest_positions(positions)
        .expect("phantom keeps ellipsoid topology")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_closed_and_outward() {
        for mesh in [
            tetrahedron(),
            unit_cube(),
            icosahedron(1.0),
            uv_ellipsoid(Vec3::new(3.0, 2.0, 1.0), 12, 7),
            liver_phantom(),
        ] {
            mesh.check_watertight().unwrap();
            assert!(mesh.signed_volume() > 0.0);
        }
    }

    #[test]
    fn counts() {
        assert_eq!(tetrahedron().triangle_count(), 4);
        assert_eq!(unit_cube().triangle_count(), 12);
        let ico = icosahedron(1.0);
        assert_eq!((ico.vertex_count(), ico.triangle_count()), (12, 20));
        assert_eq!(uv_ellipsoid(Vec3::repeat(1.0), 200, 101).triangle_count(), 40_000);
        assert_eq!(liver_phantom().triangle_count(), 3000);
    }

    #[test]
    fn cube_volume() {
        assert!((unit_cube().signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phantom_ap_span() {
        let (lo, hi) = liver_phantom().bounds();
        assert!((hi.y - lo.y - PHANTOM_AP_SPAN_MM).abs() < 1e-6);
    }
}
