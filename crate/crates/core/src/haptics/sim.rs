use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    apply_deformation, classify_force, compute_force, resolve_contact, ConfigError, ContactResult,
    DeformationField, ForceClassification, HapticsConfig, ProbeState, Tool,
};
use crate::geometry::{Bvh, DeformableMesh, GeometryError, Vec3};
use crate::tissue::TissueModel;

/// One probe sample as read from an input tape or the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeInput {
    /// virtual seconds
    pub t: f64,
    /// mm
    pub pos: Vec3,
    #[serde(default)]
    pub tool: Tool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("probe input at t = {t} s is not after the previous step at t = {last} s")]
    OutOfOrder { t: f64, last: f64 },
    #[error("probe input time {0} is not a finite non-negative number")]
    InvalidTime(f64),
    #[error("simulation halted after a fail-class force; input at t = {0} s rejected")]
    Halted(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    /// s
    pub t: f64,
    /// |F|, N
    pub force: f64,
    /// mm
    pub position: Vec3,
}

/// Force magnitude recorded at every simulation step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceTrace {
    pub samples: Vec<TraceSample>,
}

impl ForceTrace {
    pub fn push(&mut self, sample: TraceSample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.force).collect()
    }
}

/// Snapshot emitted by every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFrame {
    pub step: u64,
    /// Grid time `step * dt`, s.
    pub t: f64,
    pub probe: ProbeState,
    pub contact: ContactResult,
    /// N
    pub force: Vec3,
    /// N
    pub magnitude: f64,
    pub classification: ForceClassification,
    /// True on the first warn-class step after a non-warn step.
    pub warning_onset: bool,
    /// mm
    pub max_displacement: f64,
}

/// The fixed-step haptic loop for one scenario: resolve, force, classify,
/// deform, record.
#[derive(Debug, Clone)]
pub struct Simulation {
    mesh: DeformableMesh,
    bvh: Bvh,
    tissue: TissueModel,
    config: HapticsConfig,
    field: DeformationField,
    history: Vec<(u64, Vec3)>,
    last_class: ForceClassification,
    halted: bool,
    trace: ForceTrace,
}

impl Simulation {
    pub fn new(mesh: DeformableMesh, tissue: TissueModel, config: HapticsConfig) -> Result<Self, SimError> {
        config.validate()?;
        mesh.check_watertight()?;
        let mut mesh = mesh;
        mesh.reset_to_rest();
        let bvh = Bvh::build(&mesh, true);
        let field = DeformationField::at_rest(
            mesh.vertex_count(),
            Tool::default().falloff_rho(),
            config.relaxation_tau_s,
            config.d_cap_mm,
        );
        Ok(Simulation {
            mesh,
            bvh,
            tissue,
            config,
            field,
            history: Vec::with_capacity(2),
            last_class: ForceClassification::Ok,
            halted: false,
            trace: ForceTrace::default(),
        })
    }

    pub fn mesh(&self) -> &DeformableMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn tissue(&self) -> &TissueModel {
        &self.tissue
    }

    pub fn config(&self) -> &HapticsConfig {
        &self.config
    }

    pub fn field(&self) -> &DeformationField {
        &self.field
    }

    pub fn trace(&self) -> &ForceTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ForceTrace {
        self.trace
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Grid time of the last accepted step.
    pub fn last_time(&self) -> Option<f64> {
        self.history.last().map(|&(k, _)| k as f64 * self.config.dt_s)
    }

    /// Grid index a timestamp falls on.
    pub fn step_index(&self, t: f64) -> Result<u64, SimError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(SimError::InvalidTime(t));
        }
        Ok((t / self.config.dt_s).round() as u64)
    }

    /// Advances to the grid step nearest `input.t`. Inputs that do not move
    /// the clock forward are rejected and leave the state untouched.
    pub fn step(&mut self, input: &ProbeInput) -> Result<SimFrame, SimError> {
        if self.halted {
            return Err(SimError::Halted(input.t));
        }
        let k = self.step_index(input.t)?;
        let dt = self.config.dt_s;
        let previous = self.history.last().copied();
        if let Some((last, _)) = previous {
            if k <= last {
                return Err(SimError::OutOfOrder {
                    t: input.t,
                    last: last as f64 * dt,
                });
            }
        }

        let velocity = self.velocity(k, &input.pos);
        let t = k as f64 * dt;
        let probe = ProbeState {
            position: input.pos,
            velocity,
            tool: input.tool,
            t,
        };

        let mut contact = resolve_contact(&self.bvh, &self.mesh, &self.tissue, &probe);
        let force = compute_force(&contact, &probe, &self.config);
        contact.force = force;
        let classification = classify_force(&force, &contact.material, &self.config);

        self.field.falloff_rho = input.tool.falloff_rho();
        let elapsed = match previous {
            Some((last, _)) => (k - last) as f64 * dt,
            None => dt,
        };
        let dent = contact.in_contact.then_some(&contact);
        apply_deformation(&mut self.mesh, dent, elapsed, &mut self.field);

        let magnitude = force.norm();
        self.trace.push(TraceSample {
            t,
            force: magnitude,
            position: input.pos,
        });
        if self.history.len() == 2 {
            self.history.remove(0);
        }
        self.history.push((k, input.pos));
        let warning_onset =
            classification == ForceClassification::Warn && self.last_class != ForceClassification::Warn;
        self.last_class = classification;
        if classification == ForceClassification::Fail {
            self.halted = true;
        }

        Ok(SimFrame {
            step: k,
            t,
            probe,
            contact,
            force,
            magnitude,
            classification,
            warning_onset,
            max_displacement: self.field.max_displacement(),
        })
    }

    /// Mean of the last two finite differences of device position.
    fn velocity(&self, k: u64, pos: &Vec3) -> Vec3 {
        let dt = self.config.dt_s;
        let diff = |(k0, p0): (u64, Vec3), (k1, p1): (u64, Vec3)| (p1 - p0) / ((k1 - k0) as f64 * dt);
        match self.history.as_slice() {
            [] => Vec3::zeros(),
            [a] => diff(*a, (k, *pos)),
            [a, b] => (diff(*a, *b) + diff(*b, (k, *pos))) * 0.5,
            _ => unreachable!("history holds at most two samples"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use crate::tissue::Material;

    fn sim() -> Simulation {
        let mesh = primitives::liver_phantom();
        Simulation::new(mesh, TissueModel::homogeneous(Material::default()), HapticsConfig::default()).unwrap()
    }

    fn press(depth_at: impl Fn(f64) -> f64, steps: usize) -> Vec<ProbeInput> {
        // the phantom's +y pole is a vertex with normal +y
        let top = Vec3::new(0.0, 75.0, 0.0);
        (0..steps)
            .map(|i| {
                let t = i as f64 * 0.001;
                ProbeInput {
                    t,
                    pos: top - Vec3::y() * depth_at(t),
                    tool: Tool::Babcock,
                }
            })
            .collect()
    }

    #[test]
    fn rejects_stale_and_duplicate_inputs() {
        let mut s = sim();
        let p = ProbeInput {
            t: 0.010,
            pos: Vec3::new(0.0, 200.0, 0.0),
            tool: Tool::Babcock,
        };
        s.step(&p).unwrap();
        let before = s.trace().len();
        assert!(matches!(s.step(&p), Err(SimError::OutOfOrder { .. })));
        assert!(matches!(
            s.step(&ProbeInput { t: 0.005, ..p }),
            Err(SimError::OutOfOrder { .. })
        ));
        assert!(matches!(
            s.step(&ProbeInput { t: f64::NAN, ..p }),
            Err(SimError::InvalidTime(_))
        ));
        assert_eq!(s.trace().len(), before);
        assert!(s.step(&ProbeInput { t: 0.011, ..p }).is_ok());
    }

    #[test]
    fn velocity_averages_two_differences() {
        let mut s = sim();
        let far = Vec3::new(0.0, 300.0, 0.0);
        let inputs = [0.0, 1.0, 3.0].map(|x| far + Vec3::x() * x);
        let mut frames = Vec::new();
        for (i, pos) in inputs.iter().enumerate() {
            frames.push(
                s.step(&ProbeInput {
                    t: i as f64 * 0.001,
                    pos: *pos,
                    tool: Tool::Maryland,
                })
                .unwrap(),
            );
        }
        assert_eq!(frames[0].probe.velocity, Vec3::zeros());
        assert!((frames[1].probe.velocity.x - 1000.0).abs() < 1e-9);
        assert!((frames[2].probe.velocity.x - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn slow_press_warns_then_fails_and_halts() {
        let mut s = sim();
        // 2 mm/s so damping contributes 0.04 N at most
        let inputs = press(|t| 2.0 * t - 0.5, 4000);
        let mut warned_at = None;
        let mut failed_at = None;
        for input in &inputs {
            match s.step(input) {
                Ok(frame) => {
                    if frame.warning_onset && warned_at.is_none() {
                        warned_at = Some(frame.step);
                    }
                    if frame.classification == ForceClassification::Fail {
                        failed_at = Some(frame.step);
                    }
                }
                Err(SimError::Halted(_)) => break,
                Err(e) => panic!("{e}"),
            }
        }
        let (w, f) = (warned_at.unwrap(), failed_at.unwrap());
        assert!(w < f);
        assert!(s.is_halted());
        assert_eq!(s.trace().samples.last().unwrap().t, f as f64 * 0.001);
        let last = s.trace().samples.last().unwrap().force;
        assert!(last >= 2.5);
    }

    #[test]
    fn replay_is_deterministic() {
        let inputs = press(|t| 3.0 * (t * 6.0).sin().max(0.0), 1500);
        let run = |inputs: &[ProbeInput]| {
            let mut s = sim();
            let frames: Vec<SimFrame> = inputs.iter().map(|i| s.step(i).unwrap()).collect();
            serde_json::to_string(&frames).unwrap()
        };
        assert_eq!(run(&inputs), run(&inputs));
    }
}
