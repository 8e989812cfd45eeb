//! Spring-damper material fields over the organ.
//!
//! A [`TissueModel`] is a base material plus analytic lesion volumes. The
//! effective material at a point blends the base toward the single dominant
//! lesion with a Gaussian falloff of the distance to that lesion's volume.

mod scenario;

pub use scenario::{make_scenario, make_scenario_with, Scenario, ScenarioKind, ScenarioOverrides};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, SurfacePoint, Vec3};

/// Default base stiffness, N/mm.
pub const DEFAULT_BASE_K: f64 = 0.5;
/// Default base damping, N·s/mm.
pub const DEFAULT_BASE_B: f64 = 0.02;

/// Beyond this many falloff widths a lesion's weight is exactly zero.
const CUTOFF_SIGMAS: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TissueError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid lesion {id}: {reason}")]
    InvalidLesion { id: u32, reason: String },
    #[error("duplicate lesion id {0}")]
    DuplicateLesionId(u32),
    #[error("mesh scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("scenario mesh rejected: {0}")]
    Mesh(#[from] GeometryError),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// N/mm
    pub stiffness_k: f64,
    /// N·s/mm
    pub damping_b: f64,
    /// Scales the fail threshold down; 1 halves it.
    pub tenderness: f64,
}

impl Material {
    pub fn new(stiffness_k: f64, damping_b: f64, tenderness: f64) -> Result<Self, TissueError> {
        let m = Material {
            stiffness_k,
            damping_b,
            tenderness,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TissueError> {
        if !(self.stiffness_k > 0.0 && self.stiffness_k.is_finite()) {
            return Err(TissueError::InvalidMaterial(format!(
                "stiffness must be positive, got {}",
                self.stiffness_k
            )));
        }
        if !(self.damping_b >= 0.0 && self.damping_b.is_finite()) {
            return Err(TissueError::InvalidMaterial(format!(
                "damping must be non-negative, got {}",
                self.damping_b
            )));
        }
        if !(0.0..=1.0).contains(&self.tenderness) {
            return Err(TissueError::InvalidMaterial(format!(
                "tenderness must lie in [0, 1], got {}",
                self.tenderness
            )));
        }
        Ok(())
    }

    fn blend(&self, other: &Material, w: f64) -> Material {
        Material {
            stiffness_k: self.stiffness_k + w * (other.stiffness_k - self.stiffness_k),
            damping_b: self.damping_b + w * (other.damping_b - self.damping_b),
            tenderness: self.tenderness + w * (other.tenderness - self.tenderness),
        }
    }
}

impl Default for Material {
    fn default() -> Self {
        Material {
            stiffness_k: DEFAULT_BASE_K,
            damping_b: DEFAULT_BASE_B,
            tenderness: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LesionShape {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned.
    Ellipsoid { center: Vec3, semi_axes: Vec3 },
    /// A sphere centred on a surface point, half buried in the tissue.
    SurfaceNodule { attach: SurfacePoint, radius: f64 },
}

impl LesionShape {
    /// Euclidean distance from `p` to the lesion volume; zero inside.
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            LesionShape::Sphere { center, radius } => ((p - center).norm() - radius).max(0.0),
            LesionShape::SurfaceNodule { attach, radius } => {
                ((p - attach.position).norm() - radius).max(0.0)
            }
            LesionShape::Ellipsoid { center, semi_axes } => {
                distance_to_ellipsoid(&(p - center), semi_axes)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match self {
            LesionShape::Sphere { radius, .. } | LesionShape::SurfaceNodule { radius, .. } => {
                *radius > 0.0
            }
            LesionShape::Ellipsoid { semi_axes, .. } => semi_axes.iter().all(|&a| a > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err("radius and semi-axes must be positive".into())
        }
    }
}

/// Distance from a centre-relative point to an axis-aligned ellipsoid
/// surface when outside, zero when inside. The closest point
/// `x_i = a_i^2 y_i / (t + a_i^2)` is found by bisection on the Lagrange
/// multiplier `t`.
fn distance_to_ellipsoid(y: &Vec3, a: &Vec3) -> f64 {
    let y = y.abs();
    let level: f64 = (0..3).map(|i| (y[i] / a[i]).powi(2)).sum();
    if level <= 1.0 {
        return 0.0;
    }
    let g = |t: f64| -> f64 {
        (0..3)
            .map(|i| (a[i] * y[i] / (t + a[i] * a[i])).powi(2))
            .sum::<f64>()
            - 1.0
    };
    let (mut lo, mut hi) = (0.0, a.max() * y.norm());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let x = Vec3::from_fn(|i, _| a[i] * a[i] * y[i] / (t + a[i] * a[i]));
    (y - x).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub id: u32,
    pub shape: LesionShape,
    pub material: Material,
    /// mm
    pub falloff_sigma: f64,
}

impl Lesion {
    /// Blend weight `exp(-(d / sigma)^2)`, exactly zero beyond six sigma.
    pub fn weight(&self, p: &Vec3) -> f64 {
        let ratio = self.shape.distance(p) / self.falloff_sigma;
        if ratio > CUTOFF_SIGMAS {
            0.0
        } else {
            (-ratio * ratio).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueModel {
    pub base: Material,
    pub lesions: Vec<Lesion>,
    pub mesh_scale: f64,
    /// mm
    pub surface_noise_amplitude: f64,
}

impl TissueModel {
    pub fn homogeneous(base: Material) -> Self {
        TissueModel {
            base,
            lesions: Vec::new(),
            mesh_scale: 1.0,
            surface_noise_amplitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TissueError> {
        self.base.validate()?;
        if !(self.mesh_scale > 0.0 && self.mesh_scale.is_finite()) {
            return Err(TissueError::InvalidScale(self.mesh_scale));
        }
        let mut ids: Vec<u32> = Vec::with_capacity(self.lesions.len());
        for lesion in &self.lesions {
            if ids.contains(&lesion.id) {
                return Err(TissueError::DuplicateLesionId(lesion.id));
            }
            ids.push(lesion.id);
            let invalid = |reason: String| TissueError::InvalidLesion {
                id: lesion.id,
                reason,
            };
            lesion.shape.validate().map_err(invalid)?;
            lesion
                .material
                .validate()
                .map_err(|e| invalid(e.to_string()))?;
            if !(lesion.falloff_sigma > 0.0) {
                return Err(invalid("falloff sigma must be positive".into()));
            }
        }
        Ok(())
    }

    /// Stiffness range spanned by the base and every lesion.
    pub fn stiffness_bounds(&self) -> (f64, f64) {
        self.lesions.iter().fold(
            (self.base.stiffness_k, self.base.stiffness_k),
            |(lo, hi), l| (lo.min(l.material.stiffness_k), hi.max(l.material.stiffness_k)),
        )
    }
}

/// Effective spring-damper material at `p`: the base blended toward the
/// lesion of largest weight (lowest id on ties).
pub fn stiffness_at(tissue: &TissueModel, p: &Vec3) -> Material {
    let mut dominant: Option<(f64, &Lesion)> = None;
    for lesion in &tissue.lesions {
        let w = lesion.weight(p);
        if w <= 0.0 {
            continue;
        }
        match dominant {
            Some((best, current)) if w < best || (w == best && lesion.id > current.id) => {}
            _ => dominant = Some((w, lesion)),
        }
    }
    match dominant {
        Some((w, lesion)) => tissue.base.blend(&lesion.material, w),
        None => tissue.base,
    }
}

/// Fits the base stiffness to static `(depth mm, force N)` force-meter
/// readings by least squares through the origin. Damping is taken from
/// `damping_b` since static readings carry no rate information.
pub fn calibrate_base_material(measurements: &[(f64, f64)], damping_b: f64) -> Result<Material, TissueError> {
    if measurements.len() < 2 {
        return Err(TissueError::Calibration(format!(
            "need at least 2 measurements, got {}",
            measurements.len()
        )));
    }
    for (i, &(d, f)) in measurements.iter().enumerate() {
        if !d.is_finite() || !f.is_finite() || f < 0.0 {
            return Err(TissueError::Calibration(format!(
                "measurement {i} ({d} mm, {f} N) is invalid"
            )));
        }
        if measurements[..i].iter().any(|&(other, _)| other == d) {
            return Err(TissueError::Calibration(format!("duplicate depth {d} mm")));
        }
    }
    let sum_df: f64 = measurements.iter().map(|(d, f)| d * f).sum();
    let sum_dd: f64 = measurements.iter().map(|(d, _)| d * d).sum();
    let k = sum_df / sum_dd;
    if !(k > 0.0) {
        return Err(TissueError::Calibration(format!(
            "fitted stiffness {k} N/mm is not positive"
        )));
    }
    Material::new(k, damping_b, 0.0)
}
