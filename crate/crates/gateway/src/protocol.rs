//! The `palpsim/1` wire protocol: one JSON document per WebSocket text
//! frame, `{"seq": n, "type": "...", ...payload}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use palpsim_core::ctplane::{Polyline, SectionPlane};
use palpsim_core::geometry::Vec3;
use palpsim_core::haptics::{ForceClassification, Tool};
use palpsim_core::session::{AssessmentReport, CalibrationResult, Phase, SessionConfig};

pub const PROTOCOL_VERSION: &str = "palpsim/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        version: String,
    },
    Start {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<SessionConfig>,
        /// Run the calibration task first.
        #[serde(default = "default_true")]
        calibrate: bool,
    },
    Probe {
        t: f64,
        pos: Vec3,
        #[serde(default)]
        tool: Tool,
    },
    Answer {
        choice: String,
        elapsed: f64,
    },
    /// Ends the current task: calibration, palpation, or (as a timeout) the
    /// questionnaire.
    Advance,
    CtSelect {
        index: usize,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub step: u64,
    pub t: f64,
    pub force: Vec3,
    pub magnitude: f64,
    pub class: ForceClassification,
    pub in_contact: bool,
    pub proxy: Vec3,
    /// Current vertex positions, present when the deformation changed
    /// noticeably since the last block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec3>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        version: String,
        session_id: String,
    },
    Busy {
        reason: String,
    },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offending_seq: Option<u64>,
    },
    State {
        phase: Phase,
        scenario_count: usize,
    },
    Frame(FrameMessage),
    Warning {
        scenario: usize,
        t: f64,
        force: f64,
    },
    Failed {
        scenario: usize,
        t: f64,
        force: f64,
    },
    Calibration {
        result: CalibrationResult,
    },
    Questionnaire {
        scenario: usize,
        prompt: String,
        choices: Vec<String>,
    },
    Answered {
        scenario: usize,
        score: f64,
    },
    CtPlane {
        index: usize,
        plane: SectionPlane,
        contour: Vec<Polyline>,
    },
    Report {
        report: Box<AssessmentReport>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<M> {
    pub seq: u64,
    #[serde(flatten)]
    pub message: M,
}

impl<M: Serialize> Envelope<M> {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    /// Sequence number, when the document carried a readable one.
    pub seq: Option<u64>,
    pub message: String,
}

/// Parses one text frame. Unknown `type` tags and missing or malformed
/// fields are errors.
pub fn decode<M: for<'de> Deserialize<'de>>(text: &str) -> Result<Envelope<M>, DecodeError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DecodeError {
        seq: None,
        message: format!("not a JSON document: {e}"),
    })?;
    let seq = value.get("seq").and_then(Value::as_u64);
    if seq.is_none() {
        return Err(DecodeError {
            seq: None,
            message: "missing or invalid `seq`".into(),
        });
    }
    serde_json::from_value(value).map_err(|e| DecodeError {
        seq,
        message: e.to_string(),
    })
}
