use serde::{Deserialize, Serialize};

use crate::geometry::SurfacePoint;
use crate::haptics::{ForceTrace, HapticsConfig};

/// Pass criteria of the warm-up task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// mm
    pub visit_radius_mm: f64,
    /// Fractions of the fail threshold bounding the target RMS force.
    pub band_low_fraction: f64,
    pub band_high_fraction: f64,
    /// Largest tolerated distance of the RMS force from the band, N.
    pub band_epsilon_n: f64,
    /// Number of surface targets drawn for the task.
    pub target_count: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            visit_radius_mm: 3.0,
            band_low_fraction: 0.2,
            band_high_fraction: 0.8,
            band_epsilon_n: 0.01,
            target_count: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationResult {
    pub passed: bool,
    /// Indices of targets never approached within the visit radius.
    pub missed_targets: Vec<usize>,
    /// Samples at or above the fail threshold.
    pub fail_samples: usize,
    /// RMS of |F| over in-contact samples, N.
    pub rms_force_n: f64,
    /// [low, high], N
    pub band_n: [f64; 2],
    /// Distance of the RMS force outside the band, N.
    pub band_error_n: f64,
    pub contact_samples: usize,
}

/// Grades a calibration trace: every target visited, no fail-class force,
/// and in-contact RMS force within the band.
pub fn evaluate_calibration(
    trace: &ForceTrace,
    targets: &[SurfacePoint],
    thresholds: &HapticsConfig,
    config: &CalibrationConfig,
) -> CalibrationResult {
    let threshold = thresholds.fail_threshold(0.0);
    let missed_targets = targets
        .iter()
        .enumerate()
        .filter(|(_, target)| {
            !trace
                .samples
                .iter()
                .any(|s| (s.position - target.position).norm() <= config.visit_radius_mm)
        })
        .map(|(i, _)| i)
        .collect::<Vec<_>>();
    let fail_samples = trace.samples.iter().filter(|s| s.force >= threshold).count();

    let in_contact: Vec<f64> = trace.samples.iter().map(|s| s.force).filter(|&f| f > 0.0).collect();
    let rms = if in_contact.is_empty() {
        0.0
    } else {
        (in_contact.iter().map(|f| f * f).sum::<f64>() / in_contact.len() as f64).sqrt()
    };
    let band = [config.band_low_fraction * threshold, config.band_high_fraction * threshold];
    let band_error = (band[0] - rms).max(rms - band[1]).max(0.0);

    CalibrationResult {
        passed: missed_targets.is_empty()
            && fail_samples == 0
            && !in_contact.is_empty()
            && band_error <= config.band_epsilon_n,
        missed_targets,
        fail_samples,
        rms_force_n: rms,
        band_n: band,
        band_error_n: band_error,
        contact_samples: in_contact.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::haptics::TraceSample;

    fn target(x: f64) -> SurfacePoint {
        SurfacePoint {
            position: Vec3::new(x, 0.0, 0.0),
            triangle_id: 0,
            barycentric: [1.0, 0.0, 0.0],
            pseudo_normal: Vec3::z(),
        }
    }

    fn sweep(force: impl Fn(usize) -> f64) -> ForceTrace {
        let mut trace = ForceTrace::default();
        for i in 0..=300 {
            trace.push(TraceSample {
                t: i as f64 * 0.001,
                force: force(i),
                position: Vec3::new(i as f64 * 0.1, 0.0, -1.0),
            });
        }
        trace
    }

    #[test]
    fn mid_band_sweep_passes() {
        let r = evaluate_calibration(
            &sweep(|_| 1.25),
            &[target(0.0), target(15.0), target(30.0)],
            &HapticsConfig::default(),
            &CalibrationConfig::default(),
        );
        assert!(r.passed, "{r:?}");
        assert_eq!(r.band_n, [0.5, 2.0]);
        assert!((r.rms_force_n - 1.25).abs() < 1e-12);
    }

    #[test]
    fn missing_a_target_fails_and_names_it() {
        let r = evaluate_calibration(
            &sweep(|_| 1.25),
            &[target(0.0), target(50.0), target(30.0)],
            &HapticsConfig::default(),
            &CalibrationConfig::default(),
        );
        assert!(!r.passed);
        assert_eq!(r.missed_targets, vec![1]);
    }

    #[test]
    fn one_fail_spike_fails() {
        let r = evaluate_calibration(
            &sweep(|i| if i == 150 { 2.6 } else { 1.25 }),
            &[target(0.0)],
            &HapticsConfig::default(),
            &CalibrationConfig::default(),
        );
        assert!(!r.passed);
        assert_eq!(r.fail_samples, 1);
    }

    #[test]
    fn too_light_fails_on_band() {
        let r = evaluate_calibration(
            &sweep(|_| 0.2),
            &[target(0.0)],
            &HapticsConfig::default(),
            &CalibrationConfig::default(),
        );
        assert!(!r.passed);
        assert!((r.band_error_n - 0.3).abs() < 1e-12);
    }
}
