//! Mesh decimation by iterative edge collapse under quadric error metrics.
//!
//! Each vertex carries the sum of the plane quadrics of its original incident
//! faces. Edges are collapsed cheapest-first to the position minimizing the
//! combined quadric. Collapses that would break the two-manifold link
//! condition, fold a face over, duplicate a face or produce a zero-area
//! triangle are skipped. Edges that are not shared by exactly two faces are
//! frozen, and so are their endpoints.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{Matrix3, Matrix4, Vector4};

use super::mesh::{edge_key, is_degenerate};
use super::{DeformableMesh, GeometryError, Vec3};

/// Minimum cosine between a face normal before and after a collapse.
const MAX_FOLD_COS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecimateOptions {
    pub target_triangles: usize,
    /// Largest allowed per-collapse quadric error, as a distance (mm).
    /// Collapses above it are never performed.
    pub max_error: Option<f64>,
}

impl DecimateOptions {
    pub fn with_target(target_triangles: usize) -> Self {
        DecimateOptions {
            target_triangles,
            max_error: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decimation {
    pub mesh: DeformableMesh,
    /// False when no further valid collapse existed before reaching the target.
    pub reached_target: bool,
    pub collapses: usize,
    /// Largest quadric error (as a distance, mm) of any performed collapse.
    pub max_collapse_error: f64,
}

pub fn decimate(mesh: &DeformableMesh, target_triangles: usize) -> Result<Decimation, GeometryError> {
    decimate_with(mesh, &DecimateOptions::with_target(target_triangles))
}

pub fn decimate_with(mesh: &DeformableMesh, options: &DecimateOptions) -> Result<Decimation, GeometryError> {
    if options.target_triangles < 4 {
        return Err(GeometryError::InvalidTarget {
            target: options.target_triangles,
        });
    }
    if mesh.triangle_count() <= options.target_triangles {
        return Ok(Decimation {
            mesh: DeformableMesh::new(mesh.rest_positions().to_vec(), mesh.triangles().to_vec())?,
            reached_target: true,
            collapses: 0,
            max_collapse_error: 0.0,
        });
    }

    let mut state = Collapser::new(mesh);
    let max_cost = options.max_error.map(|e| e * e).unwrap_or(f64::INFINITY);
    loop {
        let before = state.collapses;
        state.seed_heap();
        while state.alive_faces > options.target_triangles {
            let Some(candidate) = state.heap.pop() else {
                break;
            };
            if candidate.cost > max_cost {
                state.heap.clear();
                break;
            }
            state.try_collapse(&candidate);
        }
        if state.alive_faces <= options.target_triangles || state.collapses == before {
            break;
        }
    }

    let reached_target = state.alive_faces <= options.target_triangles;
    let collapses = state.collapses;
    let max_collapse_error = state.max_cost.max(0.0).sqrt();
    Ok(Decimation {
        mesh: state.into_mesh()?,
        reached_target,
        collapses,
        max_collapse_error,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    keep: u32,
    remove: u32,
    stamps: (u32, u32),
    position: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // reversed: BinaryHeap is a max-heap and we want the cheapest edge
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.keep, other.remove).cmp(&(self.keep, self.remove)))
    }
}

struct Collapser {
    positions: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<u32>>,
    quadrics: Vec<Matrix4<f64>>,
    stamps: Vec<u32>,
    removed: Vec<bool>,
    locked: Vec<bool>,
    heap: BinaryHeap<Candidate>,
    alive_faces: usize,
    collapses: usize,
    max_cost: f64,
}

impl Collapser {
    fn new(mesh: &DeformableMesh) -> Self {
        let positions = mesh.rest_positions().to_vec();
        let faces = mesh.triangles().to_vec();
        let n = positions.len();

        let mut vertex_faces = vec![Vec::new(); n];
        let mut quadrics = vec![Matrix4::zeros(); n];
        let mut edge_faces: HashMap<(u32, u32), usize> = HashMap::new();
        for (f, tri) in faces.iter().enumerate() {
            let [a, b, c] = tri.map(|i| positions[i as usize]);
            let normal = (b - a).cross(&(c - a)).normalize();
            let plane = Vector4::new(normal.x, normal.y, normal.z, -normal.dot(&a));
            let q = plane * plane.transpose();
            for k in 0..3 {
                vertex_faces[tri[k] as usize].push(f as u32);
                quadrics[tri[k] as usize] += q;
                *edge_faces.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut locked = vec![false; n];
        for (&(a, b), &count) in &edge_faces {
            if count != 2 {
                locked[a as usize] = true;
                locked[b as usize] = true;
            }
        }

        Collapser {
            positions,
            face_alive: vec![true; faces.len()],
            alive_faces: faces.len(),
            faces,
            vertex_faces,
            quadrics,
            stamps: vec![0; n],
            removed: vec![false; n],
            locked,
            heap: BinaryHeap::new(),
            collapses: 0,
            max_cost: 0.0,
        }
    }

    fn seed_heap(&mut self) {
        self.heap.clear();
        let mut edges = Vec::new();
        for (f, tri) in self.faces.iter().enumerate() {
            if self.face_alive[f] {
                for k in 0..3 {
                    edges.push(edge_key(tri[k], tri[(k + 1) % 3]));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        for (a, b) in edges {
            self.push_edge(a, b);
        }
    }

    fn cost_at(q: &Matrix4<f64>, p: &Vec3) -> f64 {
        let v = Vector4::new(p.x, p.y, p.z, 1.0);
        (v.transpose() * q * v)[(0, 0)].max(0.0)
    }

    fn push_edge(&mut self, a: u32, b: u32) {
        let (la, lb) = (self.locked[a as usize], self.locked[b as usize]);
        if la && lb {
            return;
        }
        // a locked endpoint stays put and absorbs the other
        let (keep, remove) = if lb { (b, a) } else { (a, b) };
        let q = self.quadrics[a as usize] + self.quadrics[b as usize];
        let pa = self.positions[keep as usize];
        let pb = self.positions[remove as usize];

        let position = if la || lb {
            pa
        } else {
            let mid = (pa + pb) * 0.5;
            let reach = (pa - pb).norm();
            let a3: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into();
            let rhs = -Vec3::new(q[(0, 3)], q[(1, 3)], q[(2, 3)]);
            let scale = a3.norm();
            let optimum = a3
                .try_inverse()
                .filter(|_| a3.determinant().abs() > 1e-12 * scale * scale * scale)
                .map(|inv| inv * rhs)
                .filter(|x| (x - mid).norm() <= reach);
            optimum.unwrap_or_else(|| {
                [pa, pb, mid]
                    .into_iter()
                    .min_by(|x, y| Self::cost_at(&q, x).total_cmp(&Self::cost_at(&q, y)))
                    .expect("three candidates")
            })
        };

        self.heap.push(Candidate {
            cost: Self::cost_at(&q, &position),
            keep,
            remove,
            stamps: (self.stamps[keep as usize], self.stamps[remove as usize]),
            position,
        });
    }

    fn try_collapse(&mut self, c: &Candidate) -> bool {
        let (keep, remove) = (c.keep as usize, c.remove as usize);
        if self.removed[keep]
            || self.removed[remove]
            || self.stamps[keep] != c.stamps.0
            || self.stamps[remove] != c.stamps.1
        {
            return false;
        }

        let shared: Vec<u32> = self.vertex_faces[remove]
            .iter()
            .copied()
            .filter(|&f| self.faces[f as usize].contains(&c.keep))
            .collect();
        if shared.len() != 2 {
            return false;
        }

        // link condition: the only common neighbours are the two apexes
        let ring_keep = self.ring(keep);
        let common = self
            .ring(remove)
            .into_iter()
            .filter(|u| *u != c.keep && ring_keep.binary_search(u).is_ok())
            .count();
        if common != 2 {
            return false;
        }

        // faces that survive and move: check for folds, slivers and duplicates
        let moved_position = |u: u32| {
            if u as usize == keep || u as usize == remove {
                c.position
            } else {
                self.positions[u as usize]
            }
        };
        let keep_sets: Vec<[u32; 3]> = self.vertex_faces[keep]
            .iter()
            .filter(|f| !shared.contains(f))
            .map(|&f| sorted(self.faces[f as usize]))
            .collect();
        for v in [keep, remove] {
            for &f in &self.vertex_faces[v] {
                if shared.contains(&f) {
                    continue;
                }
                let old = self.faces[f as usize];
                let new = old.map(|u| if u as usize == remove { c.keep } else { u });
                let tri_positions = new.map(moved_position);
                let [a, b, cc] = tri_positions;
                if is_degenerate(&tri_positions, &[0, 1, 2]) {
                    return false;
                }
                let [oa, ob, oc] = old.map(|u| self.positions[u as usize]);
                let n_old = (ob - oa).cross(&(oc - oa)).normalize();
                let n_new = (b - a).cross(&(cc - a)).normalize();
                if n_old.dot(&n_new) < MAX_FOLD_COS {
                    return false;
                }
                if v == remove && keep_sets.contains(&sorted(new)) {
                    return false;
                }
            }
        }

        // apply
        for &f in &shared {
            self.face_alive[f as usize] = false;
            self.alive_faces -= 1;
            for u in self.faces[f as usize] {
                self.vertex_faces[u as usize].retain(|&g| g != f);
            }
        }
        let moved = std::mem::take(&mut self.vertex_faces[remove]);
        for &f in &moved {
            for u in &mut self.faces[f as usize] {
                if *u as usize == remove {
                    *u = c.keep;
                }
            }
        }
        self.vertex_faces[keep].extend(moved);
        self.vertex_faces[keep].sort_unstable();
        self.positions[keep] = c.position;
        let q_remove = self.quadrics[remove];
        self.quadrics[keep] += q_remove;
        self.removed[remove] = true;
        self.stamps[keep] = self.stamps[keep].wrapping_add(1);
        self.collapses += 1;
        self.max_cost = self.max_cost.max(c.cost);

        for u in self.ring(keep) {
            self.push_edge(c.keep, u);
        }
        true
    }

    fn ring(&self, v: usize) -> Vec<u32> {
        let mut r: Vec<u32> = self.vertex_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f as usize])
            .filter(|&u| u as usize != v)
            .collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    fn into_mesh(self) -> Result<DeformableMesh, GeometryError> {
        let mut remap = vec![u32::MAX; self.positions.len()];
        let mut positions = Vec::new();
        let mut triangles = Vec::with_capacity(self.alive_faces);
        for (f, tri) in self.faces.iter().enumerate() {
            if !self.face_alive[f] {
                continue;
            }
            triangles.push(tri.map(|u| {
                let slot = &mut remap[u as usize];
                if *slot == u32::MAX {
                    *slot = positions.len() as u32;
                    positions.push(self.positions[u as usize]);
                }
                *slot
            }));
        }
        DeformableMesh::new(positions, triangles)
    }
}

fn sorted(mut t: [u32; 3]) -> [u32; 3] {
    t.sort_unstable();
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn already_at_target_is_unchanged() {
        let mesh = primitives::liver_phantom();
        let out = decimate(&mesh, 3000).unwrap();
        assert_eq!(out.mesh.triangle_count(), 3000);
        assert_eq!(out.collapses, 0);
        assert!(out.reached_target);
    }

    #[test]
    fn target_below_four_is_rejected() {
        let mesh = primitives::icosahedron(1.0);
        assert!(matches!(
            decimate(&mesh, 3),
            Err(GeometryError::InvalidTarget { target: 3 })
        ));
    }

    #[test]
    fn icosahedron_reduces_and_stays_closed() {
        let mesh = primitives::icosahedron(10.0);
        let out = decimate(&mesh, 10).unwrap();
        assert!(out.mesh.triangle_count() <= 10);
        out.mesh.check_watertight().unwrap();
        assert!(out.mesh.signed_volume() > 0.0);
        assert_eq!(out.mesh.rest_positions(), out.mesh.current_positions());
    }

    #[test]
    fn tetrahedron_cannot_go_lower() {
        let mesh = primitives::tetrahedron();
        let out = decimate(&mesh, 4).unwrap();
        assert_eq!(out.mesh.triangle_count(), 4);
        let out = decimate(&primitives::icosahedron(1.0), 4).unwrap();
        assert!(out.mesh.triangle_count() >= 4);
        out.mesh.check_watertight().unwrap();
    }

    #[test]
    fn error_budget_limits_collapses() {
        let mesh = primitives::uv_ellipsoid(Vec3::new(100.0, 70.0, 50.0), 60, 31);
        let tight = decimate_with(
            &mesh,
            &DecimateOptions {
                target_triangles: 100,
                max_error: Some(0.05),
            },
        )
        .unwrap();
        assert!(!tight.reached_target);
        assert!(tight.max_collapse_error <= 0.05);
        assert!(tight.mesh.triangle_count() > 100);
    }
}
