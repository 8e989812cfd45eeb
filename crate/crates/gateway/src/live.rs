//! The live session engine behind `serve`: one trainee's session driven by
//! decoded client messages, producing server messages. Pure and
//! single-threaded; the socket layer feeds it through a queue.

use std::path::PathBuf;

use palpsim_core::ctplane::{plane_mesh_contour, slice_plane, CtStack};
use palpsim_core::geometry::DeformableMesh;
use palpsim_core::haptics::{ForceClassification, ProbeInput, SimFrame};
use palpsim_core::session::{Phase, SessionConfig, SessionEvent, SessionState};

use crate::protocol::{ClientMessage, Envelope, FrameMessage, ServerMessage, PROTOCOL_VERSION};

/// A vertex block is attached once the largest displacement moved this far
/// from the value at the previous block, mm.
pub const VERTEX_BLOCK_DELTA_MM: f64 = 1e-3;
/// Longest gap between consecutive probe messages that is filled in by
/// interpolation, in steps. Longer gaps jump straight to the new input.
pub const MAX_INTERPOLATED_STEPS: u64 = 250;
pub const DEFAULT_FRAME_RATE_HZ: u32 = 25;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mesh: DeformableMesh,
    pub ct: Option<CtStack>,
    /// Template for `start`; its seed is replaced by the requested one.
    pub session: Option<SessionConfig>,
    pub frame_rate_hz: u32,
    pub report_dir: Option<PathBuf>,
}

impl EngineConfig {
    pub fn new(mesh: DeformableMesh) -> Self {
        EngineConfig {
            mesh,
            ct: None,
            session: None,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
            report_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let r = self.frame_rate_hz;
        if r == 0 || r > 1000 || 1000 % r != 0 {
            return Err(format!("frame rate {r} Hz must divide 1000"));
        }
        Ok(())
    }
}

/// What the socket layer should do after a message was handled.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub messages: Vec<Envelope<ServerMessage>>,
    /// Close the connection after sending.
    pub close: bool,
}

pub struct LiveEngine {
    config: EngineConfig,
    out_seq: u64,
    last_client_seq: Option<u64>,
    greeted: bool,
    state: Option<SessionState>,
    /// Latest input for the step that has not run yet.
    pending: Option<(u64, ProbeInput)>,
    /// Last input actually stepped in the current task.
    applied: Option<(u64, ProbeInput)>,
    /// Last step run in the session, across tasks.
    last_step: Option<u64>,
    last_block_displacement: f64,
    events_seen: usize,
    phase_seen: Option<Phase>,
}

impl LiveEngine {
    pub fn new(config: EngineConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(LiveEngine {
            config,
            out_seq: 0,
            last_client_seq: None,
            greeted: false,
            state: None,
            pending: None,
            applied: None,
            last_step: None,
            last_block_displacement: 0.0,
            events_seen: 0,
            phase_seen: None,
        })
    }

    pub fn phase(&self) -> Option<Phase> {
        self.state.as_ref().map(|s| s.phase())
    }

    pub fn session(&self) -> Option<&SessionState> {
        self.state.as_ref()
    }

    fn steps_per_frame(&self) -> u64 {
        (1000 / self.config.frame_rate_hz) as u64
    }

    fn envelope(&mut self, message: ServerMessage) -> Envelope<ServerMessage> {
        self.out_seq += 1;
        Envelope {
            seq: self.out_seq,
            message,
        }
    }

    fn error(&mut self, message: impl Into<String>, offending_seq: Option<u64>) -> Reply {
        let m = ServerMessage::Error {
            message: message.into(),
            offending_seq,
        };
        Reply {
            messages: vec![self.envelope(m)],
            close: false,
        }
    }

    /// Handles one raw text frame.
    pub fn handle_text(&mut self, text: &str) -> Reply {
        match crate::protocol::decode::<ClientMessage>(text) {
            Ok(env) => self.handle(env),
            Err(e) => {
                let message = match e.seq {
                    Some(seq) => format!("message {seq} rejected: {}", e.message),
                    None => format!("message rejected: {}", e.message),
                };
                self.error(message, e.seq)
            }
        }
    }

    pub fn handle(&mut self, env: Envelope<ClientMessage>) -> Reply {
        let seq = env.seq;
        if let Some(last) = self.last_client_seq {
            if seq <= last {
                return self.error(format!("message {seq} rejected: sequence number must exceed {last}"), Some(seq));
            }
        }
        self.last_client_seq = Some(seq);
        let mut out = Vec::new();
        let result = self.dispatch(env.message, &mut out);
        let mut close = false;
        match result {
            Ok(c) => close = c,
            Err(message) => {
                let m = ServerMessage::Error {
                    message: format!("message {seq} rejected: {message}"),
                    offending_seq: Some(seq),
                };
                out.push(m);
            }
        }
        Reply {
            messages: out.into_iter().map(|m| self.envelope(m)).collect(),
            close,
        }
    }

    fn dispatch(&mut self, message: ClientMessage, out: &mut Vec<ServerMessage>) -> Result<bool, String> {
        if let ClientMessage::Hello { version } = &message {
            if version != PROTOCOL_VERSION {
                out.push(ServerMessage::Error {
                    message: format!("protocol `{version}` is not supported; this server speaks {PROTOCOL_VERSION}"),
                    offending_seq: self.last_client_seq,
                });
                return Ok(true);
            }
            self.greeted = true;
            out.push(ServerMessage::Hello {
                version: PROTOCOL_VERSION.into(),
                session_id: self.state.as_ref().map(|s| s.session_id()).unwrap_or_default(),
            });
            return Ok(false);
        }
        if !self.greeted {
            return Err("hello expected first".into());
        }
        match message {
            ClientMessage::Hello { .. } => unreachable!("handled above"),
            ClientMessage::Start { seed, config, calibrate } => {
                if self.state.as_ref().is_some_and(|s| s.phase() != Phase::Finished) {
                    return Err("a session is already running".into());
                }
                let mut session = config
                    .or_else(|| self.config.session.clone())
                    .unwrap_or_else(|| SessionConfig::new(seed, palpsim_core::tissue::ScenarioKind::ALL.to_vec()));
                session.seed = seed;
                let mut state = SessionState::new(session, self.config.mesh.clone()).map_err(|e| e.to_string())?;
                if !calibrate {
                    state.skip_calibration().map_err(|e| e.to_string())?;
                }
                self.state = Some(state);
                self.pending = None;
                self.applied = None;
                self.last_step = None;
                self.events_seen = 0;
                self.phase_seen = None;
                self.last_block_displacement = 0.0;
                self.sync(out);
            }
            ClientMessage::Probe { t, pos, tool } => {
                let input = ProbeInput { t, pos, tool };
                self.queue_probe(input, out)?;
            }
            ClientMessage::Answer { choice, elapsed } => {
                self.flush_same_task(out)?;
                let state = self.running()?;
                state.submit_answer(&choice, elapsed).map_err(|e| e.to_string())?;
                self.sync(out);
            }
            ClientMessage::Advance => {
                self.flush_same_task(out)?;
                let state = self.running()?;
                match state.phase() {
                    Phase::Calibration => {
                        let result = state.finish_calibration().map_err(|e| e.to_string())?;
                        out.push(ServerMessage::Calibration { result });
                    }
                    Phase::Scenario { .. } => state.end_palpation().map_err(|e| e.to_string())?,
                    Phase::Questionnaire { .. } => {
                        state.skip_question().map_err(|e| e.to_string())?;
                    }
                    Phase::Finished => return Err("the session has finished".into()),
                }
                self.sync(out);
            }
            ClientMessage::CtSelect { index } => {
                let Some(stack) = &self.config.ct else {
                    return Err("no CT series is loaded".into());
                };
                let plane = slice_plane(stack, index).map_err(|e| e.to_string())?;
                let mesh = self
                    .state
                    .as_ref()
                    .and_then(|s| s.simulation())
                    .map(|sim| sim.mesh())
                    .unwrap_or(&self.config.mesh);
                let contour = plane_mesh_contour(mesh, &plane);
                out.push(ServerMessage::CtPlane { index, plane, contour });
            }
        }
        Ok(false)
    }

    fn running(&mut self) -> Result<&mut SessionState, String> {
        self.state.as_mut().ok_or_else(|| "no session; send start first".to_string())
    }

    /// Coalesces inputs per step: a later message for the same step replaces
    /// the queued one; a message for a later step runs the queued one.
    fn queue_probe(&mut self, input: ProbeInput, out: &mut Vec<ServerMessage>) -> Result<(), String> {
        let state = self.state.as_ref().ok_or("no session; send start first")?;
        let sim = state
            .simulation()
            .ok_or_else(|| format!("probe input is not accepted during {}", state.phase()))?;
        let k = sim.step_index(input.t).map_err(|e| e.to_string())?;
        let floor = match self.pending {
            Some((p, _)) => Some((p, true)),
            None => self.last_step.map(|l| (l, false)),
        };
        match floor {
            Some((p, true)) if k == p => {
                self.pending = Some((k, input));
                return Ok(());
            }
            Some((p, _)) if k <= p => {
                return Err(format!(
                    "stale probe at t = {} s; the simulation is at t = {} s",
                    input.t,
                    p as f64 * sim.config().dt_s
                ));
            }
            _ => {}
        }
        self.flush_same_task(out)?;
        self.pending = Some((k, input));
        Ok(())
    }

    /// Flushes, then refuses the message being handled if the queued input
    /// ended the task it was meant for.
    fn flush_same_task(&mut self, out: &mut Vec<ServerMessage>) -> Result<(), String> {
        let before = self.phase();
        self.flush(out)?;
        if self.phase() != before {
            return Err(format!(
                "the task ended before this message arrived; now in {}",
                self.phase().map(|p| p.to_string()).unwrap_or_default()
            ));
        }
        Ok(())
    }

    /// Timer hook for real-time mode: runs whatever input is queued.
    pub fn tick(&mut self) -> Reply {
        let mut out = Vec::new();
        if let Err(message) = self.flush(&mut out) {
            out.push(ServerMessage::Error {
                message,
                offending_seq: None,
            });
        }
        Reply {
            messages: out.into_iter().map(|m| self.envelope(m)).collect(),
            close: false,
        }
    }

    /// Runs the queued input, filling the steps since the previous input
    /// with linearly interpolated positions.
    pub fn flush(&mut self, out: &mut Vec<ServerMessage>) -> Result<(), String> {
        let Some((k, input)) = self.pending.take() else {
            return Ok(());
        };
        let Some(state) = self.state.as_ref() else {
            return Ok(());
        };
        let dt = state.config().thresholds.dt_s;
        let mut inputs = Vec::new();
        if let Some((a, prev)) = self.applied {
            if k > a + 1 && k - a <= MAX_INTERPOLATED_STEPS {
                for j in a + 1..k {
                    let w = (j - a) as f64 / (k - a) as f64;
                    inputs.push(ProbeInput {
                        t: j as f64 * dt,
                        pos: prev.pos + (input.pos - prev.pos) * w,
                        tool: input.tool,
                    });
                }
            }
        }
        inputs.push(input);
        let phase = state.phase();
        for i in inputs {
            let state = self.state.as_mut().expect("checked above");
            let frame = state.probe(&i).map_err(|e| e.to_string())?;
            self.applied = Some((frame.step, i));
            self.last_step = Some(frame.step);
            self.emit_frame(&frame, out);
            if self.state.as_ref().map(|s| s.phase()) != Some(phase) {
                break;
            }
        }
        self.sync(out);
        Ok(())
    }

    fn emit_frame(&mut self, frame: &SimFrame, out: &mut Vec<ServerMessage>) {
        let on_grid = frame.step.is_multiple_of(self.steps_per_frame());
        let notable = frame.warning_onset || frame.classification == ForceClassification::Fail;
        if !(on_grid || notable) {
            return;
        }
        let vertices = if (frame.max_displacement - self.last_block_displacement).abs() > VERTEX_BLOCK_DELTA_MM {
            self.last_block_displacement = frame.max_displacement;
            self.state
                .as_ref()
                .and_then(|s| s.simulation())
                .map(|sim| sim.mesh().current_positions().to_vec())
        } else {
            None
        };
        out.push(ServerMessage::Frame(FrameMessage {
            step: frame.step,
            t: frame.t,
            force: frame.force,
            magnitude: frame.magnitude,
            class: frame.classification,
            in_contact: frame.contact.in_contact,
            proxy: frame.contact.proxy.position,
            vertices,
        }));
    }

    /// Pushes new session events and, on a phase change, the new state.
    fn sync(&mut self, out: &mut Vec<ServerMessage>) {
        let Some(state) = self.state.as_ref() else {
            return;
        };
        for event in &state.events()[self.events_seen..] {
            match *event {
                SessionEvent::Warning { scenario, t, force } => out.push(ServerMessage::Warning { scenario, t, force }),
                SessionEvent::Failed { scenario, t, force } => out.push(ServerMessage::Failed { scenario, t, force }),
                SessionEvent::Answered { scenario, score } => out.push(ServerMessage::Answered { scenario, score }),
                SessionEvent::Calibration { .. } => {}
            }
        }
        self.events_seen = state.events().len();
        let phase = state.phase();
        if self.phase_seen == Some(phase) {
            return;
        }
        self.phase_seen = Some(phase);
        self.applied = None;
        self.last_block_displacement = 0.0;
        out.push(ServerMessage::State {
            phase,
            scenario_count: state.order().len(),
        });
        match phase {
            Phase::Questionnaire { index } => {
                if let Some(q) = state.current_question() {
                    out.push(ServerMessage::Questionnaire {
                        scenario: index,
                        prompt: q.prompt.clone(),
                        choices: q.choices.clone(),
                    });
                }
            }
            Phase::Finished => {
                if let Ok(report) = state.finalize_report() {
                    let path = self.config.report_dir.as_ref().and_then(|dir| {
                        let path = dir.join(format!("{}.json", report.session_id));
                        report.write_to(&path).ok().map(|_| path.display().to_string())
                    });
                    out.push(ServerMessage::Report {
                        report: Box::new(report),
                        path,
                    });
                }
            }
            _ => {}
        }
    }
}
