use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::edge_key;
use super::{Bvh, BvhNode, DeformableMesh, Vec3};

/// A point on the mesh surface with the pseudo-normal of the closest feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub triangle_id: u32,
    pub barycentric: [f64; 3],
    pub pseudo_normal: Vec3,
}

/// Which part of a triangle a closest point landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFeature {
    Face,
    Edge(u32, u32),
    Vertex(u32),
}

impl SurfacePoint {
    pub fn feature(&self, mesh: &DeformableMesh) -> SurfaceFeature {
        feature_of(mesh.triangles()[self.triangle_id as usize], &self.barycentric)
    }
}

fn feature_of(tri: [u32; 3], bary: &[f64; 3]) -> SurfaceFeature {
    let nonzero: Vec<usize> = (0..3).filter(|&k| bary[k] > 0.0).collect();
    match nonzero.as_slice() {
        [k] => SurfaceFeature::Vertex(tri[*k]),
        [i, j] => SurfaceFeature::Edge(tri[*i], tri[*j]),
        _ => SurfaceFeature::Face,
    }
}

/// Closest point on triangle `abc` to `p` and its barycentric weights
/// `(wa, wb, wc)`. Vertex and edge regions yield exact zeros in the weights
/// of the excluded corners.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [(1.0 - v - w).max(0.0), v, w])
}

fn pseudo_normal(bvh: &Bvh, tri_id: u32, tri: [u32; 3], bary: &[f64; 3]) -> Vec3 {
    match feature_of(tri, bary) {
        SurfaceFeature::Face => bvh.face_normals[tri_id as usize],
        SurfaceFeature::Edge(a, b) => bvh.edge_normals[&edge_key(a, b)],
        SurfaceFeature::Vertex(v) => bvh.vertex_normals[v as usize],
    }
}

/// Nearest surface point to `p` and its distance. Among equidistant
/// candidates the lowest triangle id wins.
pub fn closest_point(bvh: &Bvh, mesh: &DeformableMesh, p: &Vec3) -> (SurfacePoint, f64) {
    debug_assert_eq!(bvh.mesh_id(), mesh.id(), "Bvh was built for a different mesh");
    let positions = mesh.positions(bvh.uses_rest());
    let triangles = mesh.triangles();

    let mut best_d2 = f64::INFINITY;
    let mut best: Option<(u32, Vec3, [f64; 3])> = None;
    let mut stack: Vec<u32> = Vec::with_capacity(64);
    stack.push(0);

    while let Some(index) = stack.pop() {
        let node = &bvh.nodes()[index as usize];
        if node.bounds().distance_squared(p) > best_d2 {
            continue;
        }
        match *node {
            BvhNode::Leaf { start, count, .. } => {
                for &t in bvh.leaf_triangles(start, count) {
                    let [i, j, k] = triangles[t as usize];
                    let (q, bary) = closest_point_on_triangle(
                        p,
                        &positions[i as usize],
                        &positions[j as usize],
                        &positions[k as usize],
                    );
                    let d2 = (p - q).norm_squared();
                    let better = match best {
                        None => true,
                        Some((bt, _, _)) => d2 < best_d2 || (d2 == best_d2 && t < bt),
                    };
                    if better {
                        best_d2 = d2;
                        best = Some((t, q, bary));
                    }
                }
            }
            BvhNode::Inner { left, right, .. } => {
                let dl = bvh.nodes()[left as usize].bounds().distance_squared(p);
                let dr = bvh.nodes()[right as usize].bounds().distance_squared(p);
                // nearer child is popped first
                if dl <= dr {
                    stack.push(right);
                    stack.push(left);
                } else {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
    }

    let (t, q, bary) = best.expect("mesh has at least one triangle");
    let point = SurfacePoint {
        position: q,
        triangle_id: t,
        barycentric: bary,
        pseudo_normal: pseudo_normal(bvh, t, triangles[t as usize], &bary),
    };
    (point, best_d2.sqrt())
}

/// Inside test for a closed, outward-oriented surface: the sign of
/// `p - closest` against the angle-weighted pseudo-normal of the closest
/// feature. Points exactly on the surface are outside.
pub fn is_inside(bvh: &Bvh, mesh: &DeformableMesh, p: &Vec3) -> bool {
    let (sp, dist) = closest_point(bvh, mesh, p);
    dist > 0.0 && (p - sp.position).dot(&sp.pseudo_normal) < 0.0
}

/// Area-weighted uniform samples on the rest surface, as `(triangle, point)`.
pub fn sample_surface<R: Rng>(mesh: &DeformableMesh, count: usize, rng: &mut R) -> Vec<(u32, Vec3)> {
    let mut cumulative = Vec::with_capacity(mesh.triangle_count());
    let mut total = 0.0;
    for t in 0..mesh.triangle_count() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    (0..count)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            let t = cumulative.partition_point(|&c| c < r).min(cumulative.len() - 1);
            let [a, b, c] = mesh.corners(t, true);
            let s = rng.gen::<f64>().sqrt();
            let u = rng.gen::<f64>();
            (t as u32, a * (1.0 - s) + b * (s * (1.0 - u)) + c * (s * u))
        })
        .collect()
}

/// Symmetric Hausdorff distance estimated from the vertices plus `samples`
/// random surface points of each mesh (rest geometry).
pub fn sampled_hausdorff(a: &DeformableMesh, b: &DeformableMesh, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one_way = |from: &DeformableMesh, to: &DeformableMesh, rng: &mut ChaCha8Rng| {
        let bvh = Bvh::build(to, true);
        from.rest_positions()
            .iter()
            .copied()
            .chain(sample_surface(from, samples, rng).into_iter().map(|(_, p)| p))
            .map(|p| closest_point(&bvh, to, &p).1)
            .fold(0.0, f64::max)
    };
    let ab = one_way(a, b, &mut rng);
    let ba = one_way(b, a, &mut rng);
    ab.max(ba)
}
