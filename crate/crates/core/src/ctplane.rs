//! CT stack bookkeeping and the section overlay: slice index to registered
//! plane, and plane/mesh intersection contours.

use std::collections::HashMap;

use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DeformableMesh, Vec3};

/// Endpoints closer than this are the same contour vertex, mm.
pub const WELD_TOLERANCE_MM: f64 = 1e-6;
const REGISTRATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtError {
    #[error("slice index {index} is out of range (valid: 0..={last})", last = .count - 1)]
    OutOfRange { index: usize, count: usize },
    #[error("invalid CT manifest: {0}")]
    Manifest(String),
}

/// On-disk description of a CT series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtManifest {
    pub spacing_mm: f64,
    pub axis: Vec3,
    /// 4x4 row-major, stack coordinates to mesh coordinates.
    pub registration: [f64; 16],
    pub slices: Vec<String>,
    #[serde(default)]
    pub origin: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtStack {
    pub slice_count: usize,
    /// mm
    pub slice_spacing: f64,
    /// Stack-space unit normal of the slices.
    pub axis: Vec3,
    /// Stack-space position of slice 0.
    pub origin: Vec3,
    pub registration: Matrix4<f64>,
    pub images: Vec<String>,
}

impl CtStack {
    pub fn from_manifest(m: &CtManifest) -> Result<Self, CtError> {
        let bad = |s: String| Err(CtError::Manifest(s));
        if m.slices.is_empty() {
            return bad("no slices".into());
        }
        if !(m.spacing_mm > 0.0 && m.spacing_mm.is_finite()) {
            return bad(format!("spacing_mm must be positive, got {}", m.spacing_mm));
        }
        let axis_len = m.axis.norm();
        if !(axis_len > 0.0 && axis_len.is_finite()) {
            return bad("axis must be a non-zero vector".into());
        }
        let registration = Matrix4::from_row_slice(&m.registration);
        check_similarity(&registration).map_err(CtError::Manifest)?;
        Ok(CtStack {
            slice_count: m.slices.len(),
            slice_spacing: m.spacing_mm,
            axis: m.axis / axis_len,
            origin: m.origin,
            registration,
            images: m.slices.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CtError> {
        let manifest: CtManifest =
            serde_json::from_str(text).map_err(|e| CtError::Manifest(e.to_string()))?;
        CtStack::from_manifest(&manifest)
    }

    fn linear(&self) -> Matrix3<f64> {
        self.registration.fixed_view::<3, 3>(0, 0).into_owned()
    }

    fn transform_point(&self, p: &Vec3) -> Vec3 {
        let h = self.registration * Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(h.x, h.y, h.z)
    }
}

/// Accepts only rotation times positive uniform scale plus translation.
fn check_similarity(m: &Matrix4<f64>) -> Result<(), String> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err("registration has non-finite entries".into());
    }
    let last = m.row(3);
    if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
        return Err("registration bottom row must be [0, 0, 0, 1]".into());
    }
    let a = m.fixed_view::<3, 3>(0, 0).into_owned();
    let det = a.determinant();
    if !(det > 0.0) {
        return Err("registration must preserve orientation and be invertible".into());
    }
    let s2 = det.cbrt().powi(2);
    let gram = a.transpose() * a / s2;
    if (gram - Matrix3::identity()).abs().max() > REGISTRATION_TOLERANCE {
        return Err("registration must be rigid with a uniform scale".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPlane {
    pub origin: Vec3,
    pub normal: Vec3,
    pub basis_u: Vec3,
    pub basis_v: Vec3,
}

impl SectionPlane {
    /// Plane through `origin` with the given normal and a right-handed
    /// in-plane basis (`normal = u x v`).
    pub fn new(origin: Vec3, normal: Vec3) -> Self {
        let n = normal.normalize();
        let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
            Vec3::x()
        } else if n.y.abs() <= n.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let u = helper.cross(&n).normalize();
        let v = n.cross(&u);
        SectionPlane {
            origin,
            normal: n,
            basis_u: u,
            basis_v: v,
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.origin).dot(&self.normal)
    }
}

/// Mesh-space plane of slice `index`.
pub fn slice_plane(stack: &CtStack, index: usize) -> Result<SectionPlane, CtError> {
    if index >= stack.slice_count {
        return Err(CtError::OutOfRange {
            index,
            count: stack.slice_count,
        });
    }
    let local = stack.origin + stack.axis * (index as f64 * stack.slice_spacing);
    let origin = stack.transform_point(&local);
    let normal = stack.linear() * stack.axis;
    Ok(SectionPlane::new(origin, normal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec3>,
    /// The last point joins back to the first.
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + (a - b).norm(),
            _ => open,
        }
    }
}

/// Where a contour vertex came from, so both triangles sharing an edge
/// produce the same point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Edge(u32, u32),
    Vertex(u32),
}

/// Intersection of the plane with the rest surface, chained into
/// polylines. Vertices exactly on the plane count as being on its positive
/// side; triangles lying in the plane contribute the boundary of their
/// coplanar patch.
pub fn plane_mesh_contour(mesh: &DeformableMesh, plane: &SectionPlane) -> Vec<Polyline> {
    let positions = mesh.rest_positions();
    let s: Vec<f64> = positions.iter().map(|p| plane.signed_distance(p)).collect();
    let coplanar: Vec<bool> = mesh
        .triangles()
        .iter()
        .map(|t| t.iter().all(|&v| s[v as usize] == 0.0))
        .collect();

    let mut segments: Vec<(Node, Node)> = Vec::new();
    let mut edge_faces: HashMap<(u32, u32), (usize, usize)> = HashMap::new();
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k].min(tri[(k + 1) % 3]), tri[k].max(tri[(k + 1) % 3]));
            let e = edge_faces.entry((a, b)).or_insert((0, 0));
            e.0 += 1;
            e.1 += coplanar[ti] as usize;
        }
        if coplanar[ti] {
            continue;
        }
        let crossings: Vec<Node> = (0..3)
            .filter_map(|k| {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let (pa, pb) = (s[a as usize] >= 0.0, s[b as usize] >= 0.0);
                (pa != pb).then(|| Node::Edge(a.min(b), a.max(b)))
            })
            .collect();
        if let [x, y] = crossings[..] {
            segments.push((x, y));
        }
    }
    // edges of the coplanar patch that border a non-coplanar face
    let mut boundary: Vec<(u32, u32)> = edge_faces
        .iter()
        .filter(|(_, &(total, flat))| flat > 0 && flat < total.max(2))
        .map(|(&e, _)| e)
        .collect();
    boundary.sort_unstable();
    segments.extend(boundary.into_iter().map(|(a, b)| (Node::Vertex(a), Node::Vertex(b))));

    let point = |node: &Node| -> Vec3 {
        match *node {
            Node::Vertex(v) => positions[v as usize],
            Node::Edge(a, b) => {
                let (sa, sb) = (s[a as usize], s[b as usize]);
                let (xa, xb) = (positions[a as usize], positions[b as usize]);
                let q = xa + (xb - xa) * (sa / (sa - sb));
                // remove the interpolation residue along the normal
                q - plane.normal * plane.signed_distance(&q)
            }
        }
    };
    chain(&segments, point)
}

fn chain(segments: &[(Node, Node)], point: impl Fn(&Node) -> Vec3) -> Vec<Polyline> {
    // distinct nodes in first-seen order
    let mut index: HashMap<Node, usize> = HashMap::new();
    let mut points: Vec<Vec3> = Vec::new();
    let mut id = |n: &Node, points: &mut Vec<Vec3>| {
        *index.entry(*n).or_insert_with(|| {
            points.push(point(n));
            points.len() - 1
        })
    };
    let raw: Vec<(usize, usize)> = segments
        .iter()
        .map(|(a, b)| (id(a, &mut points), id(b, &mut points)))
        .collect();

    let rep = weld(&points);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (a, b) in raw {
        let (a, b) = (rep[a], rep[b]);
        if a != b && !edges.iter().rev().take(8).any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            edges.push((a, b));
        }
    }
    edges.sort_unstable_by_key(|&(a, b)| (a.min(b), a.max(b)));
    edges.dedup_by_key(|&mut (a, b)| (a.min(b), a.max(b)));

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adjacency[a].push(e);
        adjacency[b].push(e);
    }
    let mut used = vec![false; edges.len()];
    let mut out = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| -> Polyline {
        let mut path = vec![start];
        let mut at = start;
        while let Some(&e) = adjacency[at].iter().find(|&&e| !used[e]) {
            used[e] = true;
            let (a, b) = edges[e];
            at = if a == at { b } else { a };
            path.push(at);
        }
        let closed = path.len() > 2 && path.first() == path.last();
        if closed {
            path.pop();
        }
        Polyline {
            points: path.into_iter().map(|i| points[i]).collect(),
            closed,
        }
    };
    // open chains start at odd-degree nodes
    for v in 0..points.len() {
        if adjacency[v].len() % 2 == 1 && adjacency[v].iter().any(|&e| !used[e]) {
            out.push(walk(v, &mut used));
        }
    }
    for v in 0..points.len() {
        if adjacency[v].iter().any(|&e| !used[e]) {
            out.push(walk(v, &mut used));
        }
    }
    out
}

/// Representative index for every point, merging points within
/// [`WELD_TOLERANCE_MM`] into the earliest one.
fn weld(points: &[Vec3]) -> Vec<usize> {
    let cell = |p: &Vec3| -> [i64; 3] {
        [0, 1, 2].map(|k| (p[k] / WELD_TOLERANCE_MM).floor() as i64)
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut rep: Vec<usize> = (0..points.len()).collect();
    for (i, p) in points.iter().enumerate() {
        let c = cell(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if let Some(&j) = list.iter().find(|&&j| (points[j] - p).norm() <= WELD_TOLERANCE_MM) {
                            found = Some(rep[j]);
                            break 'search;
                        }
                    }
                }
            }
        }
        match found {
            Some(r) => rep[i] = r,
            None => grid.entry(c).or_default().push(i),
        }
    }
    rep
}
