use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{GeometryError, Vec3};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Opaque handle distinguishing mesh instances at runtime. Not persisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshId(u64);

impl MeshId {
    fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Vertices whose normal could not be derived from incident faces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalReport {
    pub isolated_vertices: Vec<usize>,
}

impl NormalReport {
    pub fn is_clean(&self) -> bool {
        self.isolated_vertices.is_empty()
    }
}

/// The organ surface. `rest_positions` is the undeformed geometry that haptic
/// queries run against; `current_positions` carries the visual deformation.
#[derive(Debug, Clone)]
pub struct DeformableMesh {
    id: MeshId,
    rest_positions: Vec<Vec3>,
    current_positions: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    vertex_normals: Vec<Vec3>,
}

impl DeformableMesh {
    /// Builds a mesh with `current == rest`, rejecting out-of-range indices and
    /// zero-area triangles.
    pub fn new(positions: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if triangles.is_empty() {
            return Err(GeometryError::Empty);
        }
        let vertex_count = positions.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i as usize >= vertex_count {
                    return Err(GeometryError::IndexOutOfRange {
                        triangle: t,
                        index: i as usize,
                        vertex_count,
                    });
                }
            }
            if is_degenerate(&positions, tri) {
                return Err(GeometryError::DegenerateTriangle { triangle: t });
            }
        }
        let mut mesh = DeformableMesh {
            id: MeshId::fresh(),
            current_positions: positions.clone(),
            rest_positions: positions,
            triangles,
            vertex_normals: Vec::new(),
        };
        mesh.recompute_normals();
        Ok(mesh)
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest_positions
    }

    pub fn current_positions(&self) -> &[Vec3] {
        &self.current_positions
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn positions(&self, use_rest: bool) -> &[Vec3] {
        if use_rest {
            &self.rest_positions
        } else {
            &self.current_positions
        }
    }

    pub(crate) fn rest_and_current_mut(&mut self) -> (&[Vec3], &mut [Vec3]) {
        (&self.rest_positions, &mut self.current_positions)
    }

    pub fn reset_to_rest(&mut self) {
        self.current_positions.clone_from(&self.rest_positions);
    }

    /// Recomputes vertex normals from the current positions as the
    /// angle-weighted average of incident face normals. Isolated vertices get
    /// `+z` and are listed in the returned report.
    pub fn recompute_normals(&mut self) -> NormalReport {
        let (normals, isolated) = angle_weighted_normals(&self.current_positions, &self.triangles);
        self.vertex_normals = normals;
        NormalReport {
            isolated_vertices: isolated,
        }
    }

    /// Every undirected edge must be shared by exactly two triangles.
    pub fn check_watertight(&self) -> Result<(), GeometryError> {
        let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *counts.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        match counts.into_iter().find(|&(_, c)| c != 2) {
            Some(((a, b), count)) => Err(GeometryError::NotWatertight { a, b, count }),
            None => Ok(()),
        }
    }

    pub fn is_watertight(&self) -> bool {
        self.check_watertight().is_ok()
    }

    /// Mean of the rest vertex positions.
    pub fn centroid(&self) -> Vec3 {
        let sum = self
            .rest_positions
            .iter()
            .fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.rest_positions.len().max(1) as f64
    }

    /// Axis-aligned bounds of the rest positions as `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.rest_positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Radius of the sphere about the bounding-box centre enclosing all rest
    /// vertices.
    pub fn bounding_radius(&self) -> f64 {
        let (lo, hi) = self.bounds();
        let c = (lo + hi) * 0.5;
        self.rest_positions
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t, true);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.triangle_area(t)).sum()
    }

    /// Volume enclosed by a closed, outward-oriented surface (negative when
    /// the orientation is inward).
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangle_count())
            .map(|t| {
                let [a, b, c] = self.corners(t, true);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn corners(&self, t: usize, use_rest: bool) -> [Vec3; 3] {
        let pos = self.positions(use_rest);
        let [i, j, k] = self.triangles[t];
        [pos[i as usize], pos[j as usize], pos[k as usize]]
    }

    /// Replaces the rest geometry, keeping topology. Current positions are
    /// reset to the new rest state.
    pub fn with_rest_positions(&self, positions: Vec<Vec3>) -> Result<Self, GeometryError> {
        assert_eq!(positions.len(), self.vertex_count(), "topology must be preserved");
        DeformableMesh::new(positions, self.triangles.clone())
    }

    /// Uniformly scales the rest geometry about the vertex centroid.
    pub fn scaled_about_centroid(&self, scale: f64) -> Result<Self, GeometryError> {
        let c = self.centroid();
        let positions = self
            .rest_positions
            .iter()
            .map(|p| c + (p - c) * scale)
            .collect();
        self.with_rest_positions(positions)
    }

    /// One-ring vertex neighbourhoods, sorted and deduplicated.
    pub fn vertex_neighbours(&self) -> Vec<Vec<u32>> {
        let mut rings = vec![Vec::new(); self.vertex_count()];
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                rings[a as usize].push(b);
                rings[b as usize].push(a);
            }
        }
        for ring in &mut rings {
            ring.sort_unstable();
            ring.dedup();
        }
        rings
    }
}

pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn is_degenerate(positions: &[Vec3], tri: &[u32; 3]) -> bool {
    let a = positions[tri[0] as usize];
    let b = positions[tri[1] as usize];
    let c = positions[tri[2] as usize];
    if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
        return true;
    }
    let longest = (b - a)
        .norm_squared()
        .max((c - b).norm_squared())
        .max((a - c).norm_squared());
    let twice_area = (b - a).cross(&(c - a)).norm();
    !(twice_area > f64::EPSILON * longest) || !twice_area.is_finite()
}

/// Unit face normal, counter-clockwise winding.
pub(crate) fn face_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a)).normalize()
}

fn corner_angle(apex: &Vec3, p: &Vec3, q: &Vec3) -> f64 {
    let u = p - apex;
    let v = q - apex;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Angle-weighted vertex normals. Returns the normals and the indices of
/// vertices with no incident face (assigned `+z`).
pub(crate) fn angle_weighted_normals(
    positions: &[Vec3],
    triangles: &[[u32; 3]],
) -> (Vec<Vec3>, Vec<usize>) {
    let mut acc = vec![Vec3::zeros(); positions.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        let n = face_normal(&a, &b, &c);
        if !n.iter().all(|x| x.is_finite()) {
            continue;
        }
        acc[tri[0] as usize] += n * corner_angle(&a, &b, &c);
        acc[tri[1] as usize] += n * corner_angle(&b, &c, &a);
        acc[tri[2] as usize] += n * corner_angle(&c, &a, &b);
    }
    let mut isolated = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                isolated.push(i);
                Vec3::z()
            }
        })
        .collect();
    (normals, isolated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn flat_fan_shares_face_normal() {
        let mut positions = vec![Vec3::zeros()];
        let mut triangles = Vec::new();
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            positions.push(Vec3::new(a.cos(), a.sin(), 0.0));
        }
        for k in 0..6u32 {
            triangles.push([0, 1 + k, 1 + (k + 1) % 6]);
        }
        let mesh = DeformableMesh::new(positions, triangles).unwrap();
        for n in mesh.vertex_normals() {
            assert!((n - Vec3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn cube_corner_normal_points_along_octant_diagonal() {
        let mesh = primitives::unit_cube();
        let c = Vec3::repeat(0.5);
        for (p, n) in mesh.rest_positions().iter().zip(mesh.vertex_normals()) {
            let expected = (p - c).normalize();
            assert!((n - expected).norm() < 1e-12, "{n:?} vs {expected:?}");
        }
    }

    #[test]
    fn isolated_vertex_is_flagged_and_gets_plus_z() {
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(5.0, 5.0, 5.0),
        ];
        let mut mesh = DeformableMesh::new(positions, vec![[0, 1, 2]]).unwrap();
        let report = mesh.recompute_normals();
        assert_eq!(report.isolated_vertices, vec![3]);
        assert_eq!(mesh.vertex_normals()[3], Vec3::z());
    }

    #[test]
    fn normals_are_unit_length() {
        let mesh = primitives::icosahedron(1.0);
        for n in mesh.vertex_normals() {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_normals_track_radial_direction() {
        let mesh = primitives::uv_ellipsoid(Vec3::repeat(50.0), 60, 26);
        assert_eq!(mesh.triangle_count(), 3000);
        let worst = mesh
            .rest_positions()
            .iter()
            .zip(mesh.vertex_normals())
            .map(|(p, n)| n.dot(&p.normalize()).clamp(-1.0, 1.0).acos().to_degrees())
            .fold(0.0, f64::max);
        assert!(worst < 2.0, "worst deviation {worst} deg");
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        assert_eq!(
            DeformableMesh::new(positions, vec![[0, 1, 2]]).unwrap_err(),
            GeometryError::DegenerateTriangle { triangle: 0 }
        );
    }

    #[test]
    fn watertight_detection() {
        assert!(primitives::unit_cube().is_watertight());
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let open = DeformableMesh::new(positions, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            open.check_watertight(),
            Err(GeometryError::NotWatertight { count: 1, .. })
        ));
    }

    #[test]
    fn scaling_keeps_topology_and_centroid() {
        let mesh = primitives::icosahedron(10.0);
        let scaled = mesh.scaled_about_centroid(1.5).unwrap();
        assert_eq!(scaled.triangles(), mesh.triangles());
        assert!((scaled.centroid() - mesh.centroid()).norm() < 1e-12);
        assert!((scaled.bounding_radius() - 1.5 * mesh.bounding_radius()).abs() < 1e-9);
    }
}
