use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{CalibrationResult, Peak, SessionConfig};
use crate::haptics::{ForceTrace, Tool};
use crate::numfmt::round_sig9;
use crate::tissue::ScenarioKind;

pub const REPORT_SCHEMA: &str = "palpsim-report/1";
/// Rate of the force trace stored in reports.
pub const TRACE_RATE_HZ: u32 = 50;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is not valid JSON for {REPORT_SCHEMA}: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("report violates {REPORT_SCHEMA}: {0}")]
    Invalid(String),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

/// Force trace thinned to [`TRACE_RATE_HZ`], as `[t, |F|]` pairs. The final
/// sample is always kept so a fail crossing stays visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSummary {
    pub rate_hz: u32,
    pub samples: Vec<[f64; 2]>,
}

impl TraceSummary {
    pub fn downsample(trace: &ForceTrace, dt: f64) -> Self {
        let period = 1.0 / TRACE_RATE_HZ as f64;
        let mut samples: Vec<[f64; 2]> = Vec::new();
        let mut next = f64::NEG_INFINITY;
        for s in &trace.samples {
            if s.t >= next - 0.5 * dt {
                samples.push([s.t, s.force]);
                next = s.t + period;
            }
        }
        if let Some(last) = trace.samples.last() {
            if samples.last().map(|s| s[0]) != Some(last.t) {
                samples.push([last.t, last.force]);
            }
        }
        TraceSummary {
            rate_hz: TRACE_RATE_HZ,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub kind: ScenarioKind,
    pub order_index: usize,
    pub tool: Tool,
    pub peaks: Vec<Peak>,
    pub warning_count: u32,
    pub failed: bool,
    pub fail_time_s: Option<f64>,
    pub diagnosis: Option<String>,
    pub correct: bool,
    pub palpation_s: f64,
    pub answer_elapsed_s: Option<f64>,
    pub elapsed_s: f64,
    pub score: f64,
    pub trace: TraceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationOutcome {
    Pending,
    Skipped,
    Passed { attempts: u32, result: CalibrationResult },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentReport {
    pub schema: String,
    pub session_id: String,
    pub seed: u64,
    pub calibration: CalibrationOutcome,
    pub scenarios: Vec<ScenarioRecord>,
    pub total_score: f64,
    pub virtual_time_s: f64,
    pub config: SessionConfig,
}

impl AssessmentReport {
    /// Canonical text: sorted keys, every float rounded to 9 significant
    /// digits, trailing newline.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut value);
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn write_to(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked f64");
            // -0 and 0 print differently; canonical text uses 0
            let r = round_sig9(x);
            let r = if r == 0.0 { 0.0 } else { r };
            *n = serde_json::Number::from_f64(r).expect("finite");
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Parses report text and checks the invariants the schema cannot express.
pub fn validate_report(text: &str) -> Result<AssessmentReport, ReportError> {
    let report: AssessmentReport = serde_json::from_str(text)?;
    let invalid = |m: String| Err(ReportError::Invalid(m));
    if report.schema != REPORT_SCHEMA {
        return invalid(format!("schema is `{}`", report.schema));
    }
    if report.scenarios.len() != report.config.scenario_set.len() {
        return invalid("one record per configured scenario expected".into());
    }
    let mut kinds: Vec<ScenarioKind> = report.scenarios.iter().map(|r| r.kind).collect();
    let mut expected = report.config.scenario_set.clone();
    kinds.sort();
    expected.sort();
    if kinds != expected {
        return invalid("scenario records are not a permutation of the scenario set".into());
    }
    for (i, r) in report.scenarios.iter().enumerate() {
        if r.order_index != i {
            return invalid(format!("record {i} has order_index {}", r.order_index));
        }
        if !(0.0..=10.0).contains(&r.score) {
            return invalid(format!("record {i} score {} outside [0, 10]", r.score));
        }
        if r.failed && (r.score != 0.0 || r.diagnosis.is_some() || r.correct) {
            return invalid(format!("failed record {i} carries a diagnosis or score"));
        }
        if r.failed != r.fail_time_s.is_some() {
            return invalid(format!("record {i} fail flag and fail time disagree"));
        }
        if r.correct && r.diagnosis.is_none() {
            return invalid(format!("record {i} is correct without a diagnosis"));
        }
        if r.peaks.windows(2).any(|w| w[0].t >= w[1].t) {
            return invalid(format!("record {i} peaks are not in time order"));
        }
    }
    let total: f64 = report.scenarios.iter().map(|r| r.score).sum();
    if (total - report.total_score).abs() > 1e-6 {
        return invalid(format!("total_score {} differs from the sum {total}", report.total_score));
    }
    let elapsed: f64 = report.scenarios.iter().map(|r| r.elapsed_s).sum();
    if elapsed > report.virtual_time_s * (1.0 + 1e-8) + 1e-8 {
        return invalid("per-scenario elapsed times exceed the session time".into());
    }
    Ok(report)
}
