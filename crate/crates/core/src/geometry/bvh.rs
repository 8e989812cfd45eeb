use std::collections::HashMap;

use super::mesh::{angle_weighted_normals, edge_key, face_normal};
use super::{DeformableMesh, MeshId, Vec3};

pub const DEFAULT_LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, other: &Aabb, slack: f64) -> bool {
        (0..3).all(|k| {
            other.min[k] >= self.min[k] - slack && other.max[k] <= self.max[k] + slack
        })
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        (0..3)
            .map(|k| {
                let d = (self.min[k] - p[k]).max(0.0).max(p[k] - self.max[k]);
                d * d
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BvhNode {
    /// Triangles `order[start..start + count]`.
    Leaf { bounds: Aabb, start: u32, count: u32 },
    Inner { bounds: Aabb, left: u32, right: u32 },
}

impl BvhNode {
    pub fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bounds, .. } | BvhNode::Inner { bounds, .. } => bounds,
        }
    }
}

/// Axis-aligned box tree over a mesh's triangles, plus the per-face,
/// per-edge and per-vertex pseudo-normals of the same position set.
///
/// A `Bvh` is tied to the geometry it was built from: rest positions when
/// `use_rest` is set, otherwise the current positions at build time.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
    leaf_size: usize,
    use_rest: bool,
    mesh_id: MeshId,
    pub(crate) face_normals: Vec<Vec3>,
    pub(crate) vertex_normals: Vec<Vec3>,
    pub(crate) edge_normals: HashMap<(u32, u32), Vec3>,
}

impl Bvh {
    pub fn build(mesh: &DeformableMesh, use_rest: bool) -> Self {
        Self::build_with_leaf_size(mesh, use_rest, DEFAULT_LEAF_SIZE)
    }

    pub fn build_with_leaf_size(mesh: &DeformableMesh, use_rest: bool, leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let positions = mesh.positions(use_rest);
        let triangles = mesh.triangles();

        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                for &i in t {
                    b.grow(&positions[i as usize]);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();

        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * triangles.len() / leaf_size + 1),
            order: (0..triangles.len() as u32).collect(),
            leaf_size,
            use_rest,
            mesh_id: mesh.id(),
            face_normals: Vec::new(),
            vertex_normals: Vec::new(),
            edge_normals: HashMap::new(),
        };
        let mut order = std::mem::take(&mut bvh.order);
        bvh.build_node(&mut order, 0, &boxes, &centroids);
        bvh.order = order;

        bvh.face_normals = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| positions[i as usize]);
                face_normal(&a, &b, &c)
            })
            .collect();
        bvh.vertex_normals = angle_weighted_normals(positions, triangles).0;
        for (f, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                *bvh.edge_normals
                    .entry(edge_key(t[k], t[(k + 1) % 3]))
                    .or_insert_with(Vec3::zeros) += bvh.face_normals[f];
            }
        }
        for n in bvh.edge_normals.values_mut() {
            *n = n.normalize();
        }
        bvh
    }

    /// Builds the subtree for `order[offset..offset + slice.len()]` and
    /// returns its node index.
    fn build_node(
        &mut self,
        slice: &mut [u32],
        offset: usize,
        boxes: &[Aabb],
        centroids: &[Vec3],
    ) -> u32 {
        let bounds = slice
            .iter()
            .fold(Aabb::empty(), |acc, &t| acc.union(&boxes[t as usize]));
        let index = self.nodes.len() as u32;
        if slice.len() <= self.leaf_size {
            self.nodes.push(BvhNode::Leaf {
                bounds,
                start: offset as u32,
                count: slice.len() as u32,
            });
            return index;
        }

        let mut cbox = Aabb::empty();
        for &t in slice.iter() {
            cbox.grow(&centroids[t as usize]);
        }
        let extent = cbox.max - cbox.min;
        let axis = extent.imax();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });

        // placeholder, patched once both children exist
        self.nodes.push(BvhNode::Leaf {
            bounds,
            start: 0,
            count: 0,
        });
        let (lo, hi) = slice.split_at_mut(mid);
        let left = self.build_node(lo, offset, boxes, centroids);
        let right = self.build_node(hi, offset + mid, boxes, centroids);
        self.nodes[index as usize] = BvhNode::Inner {
            bounds,
            left,
            right,
        };
        index
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn uses_rest(&self) -> bool {
        self.use_rest
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    /// Triangle ids of each leaf, in node order.
    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.nodes.iter().filter_map(move |n| match *n {
            BvhNode::Leaf { start, count, .. } => {
                Some(&self.order[start as usize..(start + count) as usize])
            }
            BvhNode::Inner { .. } => None,
        })
    }

    pub(crate) fn leaf_triangles(&self, start: u32, count: u32) -> &[u32] {
        &self.order[start as usize..(start + count) as usize]
    }
}
