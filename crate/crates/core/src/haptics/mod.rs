//! Point-probe contact against the rest surface, spring-damper force,
//! damage thresholds, and the visual deformation field.

mod deform;
mod sim;

pub use deform::{apply_deformation, DeformationField};
pub use sim::{ForceTrace, ProbeInput, SimError, SimFrame, Simulation, TraceSample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{closest_point, Bvh, DeformableMesh, SurfacePoint, Vec3};
use crate::tissue::{stiffness_at, Material, TissueModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    #[default]
    Babcock,
    Maryland,
}

impl Tool {
    /// Deformation falloff radius, mm.
    pub fn falloff_rho(&self) -> f64 {
        match self {
            Tool::Babcock => 8.0,
            Tool::Maryland => 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    /// mm
    pub position: Vec3,
    /// mm/s
    pub velocity: Vec3,
    pub tool: Tool,
    /// virtual seconds
    pub t: f64,
}

impl ProbeState {
    pub fn at_rest(position: Vec3, tool: Tool) -> Self {
        ProbeState {
            position,
            velocity: Vec3::zeros(),
            tool,
            t: 0.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid haptics configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticsConfig {
    /// N
    pub force_clamp_n: f64,
    /// N, before tenderness scaling
    pub fail_threshold_n: f64,
    pub warn_fraction: f64,
    /// Visual displacement cap, mm.
    pub d_cap_mm: f64,
    /// s
    pub relaxation_tau_s: f64,
    /// s
    pub dt_s: f64,
}

impl Default for HapticsConfig {
    fn default() -> Self {
        HapticsConfig {
            force_clamp_n: 3.3,
            fail_threshold_n: 2.5,
            warn_fraction: 0.8,
            d_cap_mm: 10.0,
            relaxation_tau_s: 0.1,
            dt_s: 0.001,
        }
    }
}

impl HapticsConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("force_clamp_n", self.force_clamp_n),
            ("fail_threshold_n", self.fail_threshold_n),
            ("d_cap_mm", self.d_cap_mm),
            ("relaxation_tau_s", self.relaxation_tau_s),
            ("dt_s", self.dt_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.warn_fraction > 0.0 && self.warn_fraction < 1.0) {
            return Err(ConfigError(format!(
                "warn_fraction must lie in (0, 1), got {}",
                self.warn_fraction
            )));
        }
        Ok(())
    }

    /// Fail threshold after tenderness scaling, N.
    pub fn fail_threshold(&self, tenderness: f64) -> f64 {
        self.fail_threshold_n * (1.0 - 0.5 * tenderness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactResult {
    pub in_contact: bool,
    /// Closest rest-surface point; meaningful for the direction even when
    /// not in contact.
    pub proxy: SurfacePoint,
    /// mm, zero when not in contact
    pub depth: f64,
    /// Outward unit normal at the proxy.
    pub direction: Vec3,
    pub material: Material,
    /// N
    pub force: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceClassification {
    Ok,
    Warn,
    Fail,
}

/// Contact of the probe point with the rest surface. The force field is left
/// at zero; see [`compute_force`].
pub fn resolve_contact(bvh: &Bvh, mesh: &DeformableMesh, tissue: &TissueModel, probe: &ProbeState) -> ContactResult {
    let (proxy, dist) = closest_point(bvh, mesh, &probe.position);
    let direction = proxy.pseudo_normal;
    let inside = dist > 0.0 && (probe.position - proxy.position).dot(&direction) < 0.0;
    ContactResult {
        in_contact: inside,
        proxy,
        depth: if inside { dist } else { 0.0 },
        direction,
        material: stiffness_at(tissue, &proxy.position),
        force: Vec3::zeros(),
    }
}

/// `F = (k d + b d') n` with `d' = -v.n`, never pulling and never above the
/// clamp.
pub fn compute_force(contact: &ContactResult, probe: &ProbeState, config: &HapticsConfig) -> Vec3 {
    if !contact.in_contact {
        return Vec3::zeros();
    }
    let n = contact.direction;
    let rate = -probe.velocity.dot(&n);
    let magnitude = contact.material.stiffness_k * contact.depth + contact.material.damping_b * rate;
    n * magnitude.clamp(0.0, config.force_clamp_n)
}

/// Bands on `|F|` against the tenderness-scaled threshold `T`: below
/// `warn_fraction * T` is ok, `|F| >= T` is fail.
pub fn classify_force(force: &Vec3, material: &Material, config: &HapticsConfig) -> ForceClassification {
    let threshold = config.fail_threshold(material.tenderness);
    let magnitude = force.norm();
    if magnitude >= threshold {
        ForceClassification::Fail
    } else if magnitude >= config.warn_fraction * threshold {
        ForceClassification::Warn
    } else {
        ForceClassification::Ok
    }
}
