use serde::{Deserialize, Serialize};

use super::ContactResult;
use crate::geometry::{DeformableMesh, Vec3};

/// Per-vertex visual displacement relaxing toward a Gaussian dent under the
/// proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    /// mm, indexed like the mesh vertices
    pub displacements: Vec<Vec3>,
    /// mm
    pub falloff_rho: f64,
    /// s
    pub relaxation_tau: f64,
    /// mm
    pub depth_cap: f64,
}

impl DeformationField {
    pub fn at_rest(vertex_count: usize, falloff_rho: f64, relaxation_tau: f64, depth_cap: f64) -> Self {
        DeformationField {
            displacements: vec![Vec3::zeros(); vertex_count],
            falloff_rho,
            relaxation_tau,
            depth_cap,
        }
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacements.iter().fold(0.0, |m, u| m.max(u.norm()))
    }

    /// Target displacement of a vertex at rest position `x`, zero beyond
    /// four falloff radii.
    pub fn target(&self, x: &Vec3, contact: &ContactResult) -> Vec3 {
        field_target(x, contact, self.falloff_rho, self.depth_cap)
    }
}

/// Advances `field` by `dt` toward the dent of `contact` (or toward rest when
/// there is none) and writes `rest + displacement` into the mesh's current
/// positions.
pub fn apply_deformation(mesh: &mut DeformableMesh, contact: Option<&ContactResult>, dt: f64, field: &mut DeformationField) {
    debug_assert!(dt > 0.0);
    debug_assert_eq!(field.displacements.len(), mesh.vertex_count());
    let alpha = (dt / field.relaxation_tau).min(1.0);
    let (rest, current) = mesh.rest_and_current_mut();
    for (v, u) in field.displacements.iter_mut().enumerate() {
        let target = match contact {
            Some(c) => field_target(&rest[v], c, field.falloff_rho, field.depth_cap),
            None => Vec3::zeros(),
        };
        if *u == target {
            if target == Vec3::zeros() {
                current[v] = rest[v];
            }
            continue;
        }
        *u += (target - *u) * alpha;
        current[v] = rest[v] + *u;
    }
}

fn field_target(x: &Vec3, contact: &ContactResult, rho: f64, cap: f64) -> Vec3 {
    if !contact.in_contact {
        return Vec3::zeros();
    }
    let r2 = (x - contact.proxy.position).norm_squared();
    let rho2 = rho * rho;
    if r2 > 16.0 * rho2 {
        return Vec3::zeros();
    }
    -contact.direction * (contact.depth.min(cap) * (-r2 / rho2).exp())
}
