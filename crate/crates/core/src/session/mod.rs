//! The training flow: calibration gate, seeded scenario order, per-scenario
//! force recording with warn/fail handling, timed questionnaires, and the
//! assessment report.

mod calibration;
mod peaks;
mod report;
mod tape;

pub use calibration::{evaluate_calibration, CalibrationConfig, CalibrationResult};
pub use peaks::{detect_peaks, peak_indices, Peak, DEFAULT_MIN_PROMINENCE_N, DEFAULT_MIN_SEPARATION_S};
pub use report::{
    validate_report, AssessmentReport, CalibrationOutcome, ReportError, ScenarioRecord,
    TraceSummary, REPORT_SCHEMA, TRACE_RATE_HZ,
};
pub use tape::{parse_tape, write_tape, TapeError};

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{closest_point, sample_surface, Bvh, DeformableMesh, GeometryError, SurfacePoint};
use crate::haptics::{
    ForceClassification, HapticsConfig, ProbeInput, SimError, SimFrame, Simulation, Tool,
};
use crate::tissue::{make_scenario_with, Material, ScenarioKind, ScenarioOverrides, TissueError, TissueModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("{action} is not allowed during {phase}")]
    Sequencing { action: &'static str, phase: Phase },
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tissue(#[from] TissueError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub scenario: ScenarioKind,
    pub prompt: String,
    pub choices: Vec<String>,
    pub correct: String,
}

/// One diagnosis question per scenario, each offering every scenario label.
pub fn default_questionnaire_bank() -> Vec<Question> {
    let choices: Vec<String> = ScenarioKind::ALL.iter().map(|k| k.label().to_string()).collect();
    ScenarioKind::ALL
        .iter()
        .map(|k| Question {
            scenario: *k,
            prompt: "Which condition does this liver present?".into(),
            choices: choices.clone(),
            correct: k.label().into(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakConfig {
    pub min_prominence_n: f64,
    pub min_separation_s: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            min_prominence_n: DEFAULT_MIN_PROMINENCE_N,
            min_separation_s: DEFAULT_MIN_SEPARATION_S,
        }
    }
}

fn default_time_full() -> f64 {
    30.0
}

fn default_time_limit() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    pub scenario_set: Vec<ScenarioKind>,
    #[serde(default)]
    pub thresholds: HapticsConfig,
    #[serde(default = "default_questionnaire_bank")]
    pub questionnaire_bank: Vec<Question>,
    /// s
    #[serde(default = "default_time_full")]
    pub time_full: f64,
    /// s
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub peaks: PeakConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scenario_overrides: BTreeMap<ScenarioKind, ScenarioOverrides>,
}

impl SessionConfig {
    pub fn new(seed: u64, scenario_set: Vec<ScenarioKind>) -> Self {
        SessionConfig {
            seed,
            scenario_set,
            thresholds: HapticsConfig::default(),
            questionnaire_bank: default_questionnaire_bank(),
            time_full: default_time_full(),
            time_limit: default_time_limit(),
            calibration: CalibrationConfig::default(),
            peaks: PeakConfig::default(),
            scenario_overrides: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Config(m));
        if self.scenario_set.is_empty() {
            return bad("scenario_set is empty".into());
        }
        for (i, k) in self.scenario_set.iter().enumerate() {
            if self.scenario_set[..i].contains(k) {
                return bad(format!("scenario {k} is listed twice"));
            }
            let Some(q) = self.question_for(*k) else {
                return bad(format!("questionnaire_bank has no question for {k}"));
            };
            if !q.choices.contains(&q.correct) {
                return bad(format!("the correct answer for {k} is not among its choices"));
            }
        }
        if !(self.time_full >= 0.0 && self.time_full < self.time_limit && self.time_limit.is_finite()) {
            return bad(format!(
                "need 0 <= time_full < time_limit, got {} and {}",
                self.time_full, self.time_limit
            ));
        }
        self.thresholds
            .validate()
            .map_err(|e| SessionError::Config(e.to_string()))?;
        if !(self.peaks.min_prominence_n >= 0.0 && self.peaks.min_separation_s >= 0.0) {
            return bad("peak detection parameters must be non-negative".into());
        }
        Ok(())
    }

    pub fn question_for(&self, kind: ScenarioKind) -> Option<&Question> {
        self.questionnaire_bank.iter().find(|q| q.scenario == kind)
    }
}

/// Seeded Fisher-Yates permutation of `0..n`.
pub fn shuffled_order(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Questionnaire score: 10 up to `time_full`, falling linearly to 5 at
/// `time_limit`, 0 after that or for a wrong answer.
pub fn timed_score(correct: bool, elapsed: f64, time_full: f64, time_limit: f64) -> f64 {
    if !correct || elapsed > time_limit {
        0.0
    } else if elapsed <= time_full {
        10.0
    } else {
        10.0 - 5.0 * (elapsed - time_full) / (time_limit - time_full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Calibration,
    Scenario { index: usize },
    Questionnaire { index: usize },
    Finished,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Calibration => f.write_str("calibration"),
            Phase::Scenario { index } => write!(f, "scenario {index}"),
            Phase::Questionnaire { index } => write!(f, "questionnaire {index}"),
            Phase::Finished => f.write_str("finished"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    Warning { scenario: usize, t: f64, force: f64 },
    Failed { scenario: usize, t: f64, force: f64 },
    Calibration { passed: bool, attempt: u32 },
    Answered { scenario: usize, score: f64 },
}

struct Palpation {
    sim: Simulation,
    warnings: u32,
    first_step: Option<u64>,
    last_step: Option<u64>,
    tool: Tool,
    failed_at: Option<f64>,
}

impl Palpation {
    fn new(sim: Simulation) -> Self {
        Palpation {
            sim,
            warnings: 0,
            first_step: None,
            last_step: None,
            tool: Tool::default(),
            failed_at: None,
        }
    }

    fn duration(&self, dt: f64) -> f64 {
        match (self.first_step, self.last_step) {
            (Some(a), Some(b)) => (b - a + 1) as f64 * dt,
            _ => 0.0,
        }
    }
}

/// Single-owner session state machine.
pub struct SessionState {
    config: SessionConfig,
    mesh: DeformableMesh,
    order: Vec<ScenarioKind>,
    scenario_seeds: Vec<u64>,
    phase: Phase,
    records: Vec<ScenarioRecord>,
    palpation: Option<Palpation>,
    pending: Option<ScenarioRecord>,
    calibration_targets: Vec<SurfacePoint>,
    calibration: CalibrationOutcome,
    calibration_attempts: u32,
    clock: f64,
    last_step: Option<u64>,
    events: Vec<SessionEvent>,
}

pub fn start_session(config: SessionConfig, mesh: DeformableMesh) -> Result<SessionState, SessionError> {
    SessionState::new(config, mesh)
}

impl SessionState {
    pub fn new(config: SessionConfig, mesh: DeformableMesh) -> Result<Self, SessionError> {
        config.validate()?;
        mesh.check_watertight()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let order: Vec<ScenarioKind> = shuffled_order(&mut rng, config.scenario_set.len())
            .into_iter()
            .map(|i| config.scenario_set[i])
            .collect();
        let scenario_seeds = order.iter().map(|_| rng.gen::<u64>()).collect();

        let bvh = Bvh::build(&mesh, true);
        let calibration_targets = sample_surface(&mesh, config.calibration.target_count, &mut rng)
            .into_iter()
            .map(|(_, p)| closest_point(&bvh, &mesh, &p).0)
            .collect();

        let mut state = SessionState {
            config,
            mesh,
            order,
            scenario_seeds,
            phase: Phase::Calibration,
            records: Vec::new(),
            palpation: None,
            pending: None,
            calibration_targets,
            calibration: CalibrationOutcome::Pending,
            calibration_attempts: 0,
            clock: 0.0,
            last_step: None,
            events: Vec::new(),
        };
        state.palpation = Some(Palpation::new(state.calibration_sim()?));
        Ok(state)
    }

    pub fn session_id(&self) -> String {
        format!("session-{:016x}", self.config.seed)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn order(&self) -> &[ScenarioKind] {
        &self.order
    }

    pub fn records(&self) -> &[ScenarioRecord] {
        &self.records
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Virtual time spent so far, s.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn calibration_targets(&self) -> &[SurfacePoint] {
        &self.calibration_targets
    }

    /// The simulation accepting probe input in the current phase.
    pub fn simulation(&self) -> Option<&Simulation> {
        self.palpation.as_ref().map(|p| &p.sim)
    }

    pub fn current_question(&self) -> Option<&Question> {
        match self.phase {
            Phase::Questionnaire { index } => self.config.question_for(self.order[index]),
            _ => None,
        }
    }

    fn sequencing(&self, action: &'static str) -> SessionError {
        SessionError::Sequencing {
            action,
            phase: self.phase,
        }
    }

    fn calibration_sim(&self) -> Result<Simulation, SessionError> {
        let tissue = TissueModel::homogeneous(Material::default());
        Ok(Simulation::new(self.mesh.clone(), tissue, self.config.thresholds)?)
    }

    /// Steps the active simulation. A fail-class frame ends the scenario
    /// before this returns.
    pub fn probe(&mut self, input: &ProbeInput) -> Result<SimFrame, SessionError> {
        if !matches!(self.phase, Phase::Calibration | Phase::Scenario { .. }) {
            return Err(self.sequencing("probe input"));
        }
        let dt = self.config.thresholds.dt_s;
        let palpation = self.palpation.as_mut().expect("palpation phases own a simulation");
        let k = palpation.sim.step_index(input.t)?;
        if let Some(last) = self.last_step {
            if k <= last {
                return Err(SimError::OutOfOrder {
                    t: input.t,
                    last: last as f64 * dt,
                }
                .into());
            }
        }
        let frame = palpation.sim.step(input)?;
        self.clock += match palpation.last_step {
            Some(prev) => (k - prev) as f64 * dt,
            None => dt,
        };
        palpation.first_step.get_or_insert(k);
        palpation.last_step = Some(k);
        palpation.tool = input.tool;
        self.last_step = Some(k);

        if let Phase::Scenario { index } = self.phase {
            if frame.warning_onset {
                palpation.warnings += 1;
                self.events.push(SessionEvent::Warning {
                    scenario: index,
                    t: frame.t,
                    force: frame.magnitude,
                });
            }
            if frame.classification == ForceClassification::Fail {
                palpation.failed_at = Some(frame.t);
                self.events.push(SessionEvent::Failed {
                    scenario: index,
                    t: frame.t,
                    force: frame.magnitude,
                });
                self.on_fail()?;
            }
        }
        Ok(frame)
    }

    /// Grades the calibration trace. Passing unlocks the first scenario;
    /// failing restarts the task.
    pub fn finish_calibration(&mut self) -> Result<CalibrationResult, SessionError> {
        if self.phase != Phase::Calibration {
            return Err(self.sequencing("finishing calibration"));
        }
        let palpation = self.palpation.take().expect("calibration owns a simulation");
        let result = evaluate_calibration(
            palpation.sim.trace(),
            &self.calibration_targets,
            &self.config.thresholds,
            &self.config.calibration,
        );
        self.calibration_attempts += 1;
        self.events.push(SessionEvent::Calibration {
            passed: result.passed,
            attempt: self.calibration_attempts,
        });
        if result.passed {
            self.calibration = CalibrationOutcome::Passed {
                attempts: self.calibration_attempts,
                result: result.clone(),
            };
            self.enter_scenario(0)?;
        } else {
            self.palpation = Some(Palpation::new(self.calibration_sim()?));
        }
        Ok(result)
    }

    /// Bypasses the calibration gate, as headless replays do.
    pub fn skip_calibration(&mut self) -> Result<(), SessionError> {
        if self.phase != Phase::Calibration {
            return Err(self.sequencing("skipping calibration"));
        }
        self.calibration = CalibrationOutcome::Skipped;
        self.enter_scenario(0)
    }

    fn enter_scenario(&mut self, index: usize) -> Result<(), SessionError> {
        if index >= self.order.len() {
            self.phase = Phase::Finished;
            self.palpation = None;
            return Ok(());
        }
        let kind = self.order[index];
        let overrides = self
            .config
            .scenario_overrides
            .get(&kind)
            .cloned()
            .unwrap_or_default();
        let scenario = make_scenario_with(kind, &self.mesh, self.scenario_seeds[index], &overrides)?;
        let sim = Simulation::new(scenario.mesh, scenario.tissue, self.config.thresholds)?;
        self.palpation = Some(Palpation::new(sim));
        self.phase = Phase::Scenario { index };
        Ok(())
    }

    fn close_palpation(&mut self, index: usize) -> ScenarioRecord {
        let palpation = self.palpation.take().expect("scenario owns a simulation");
        let dt = self.config.thresholds.dt_s;
        let trace = palpation.sim.trace();
        let peaks = detect_peaks(trace, self.config.peaks.min_prominence_n, self.config.peaks.min_separation_s);
        let palpation_s = palpation.duration(dt);
        ScenarioRecord {
            kind: self.order[index],
            order_index: index,
            tool: palpation.tool,
            peaks,
            warning_count: palpation.warnings,
            failed: palpation.failed_at.is_some(),
            fail_time_s: palpation.failed_at,
            diagnosis: None,
            correct: false,
            palpation_s,
            answer_elapsed_s: None,
            elapsed_s: palpation_s,
            score: 0.0,
            trace: TraceSummary::downsample(trace, dt),
        }
    }

    /// Ends palpation of the current scenario and opens its questionnaire.
    pub fn end_palpation(&mut self) -> Result<(), SessionError> {
        let Phase::Scenario { index } = self.phase else {
            return Err(self.sequencing("ending palpation"));
        };
        self.pending = Some(self.close_palpation(index));
        self.phase = Phase::Questionnaire { index };
        Ok(())
    }

    /// Marks the current scenario failed with score 0, skips its
    /// questionnaire and moves on.
    pub fn on_fail(&mut self) -> Result<(), SessionError> {
        let Phase::Scenario { index } = self.phase else {
            return Err(self.sequencing("failing a scenario"));
        };
        let mut record = self.close_palpation(index);
        record.failed = true;
        if record.fail_time_s.is_none() {
            record.fail_time_s = self.last_step.map(|k| k as f64 * self.config.thresholds.dt_s);
        }
        self.records.push(record);
        self.enter_scenario(index + 1)
    }

    /// Scores a diagnosis given `elapsed` seconds after the questionnaire
    /// opened and advances to the next scenario.
    pub fn submit_answer(&mut self, choice: &str, elapsed: f64) -> Result<f64, SessionError> {
        let Phase::Questionnaire { index } = self.phase else {
            return Err(self.sequencing("answering"));
        };
        if !(elapsed.is_finite() && elapsed >= 0.0) {
            return Err(SessionError::InvalidAnswer(format!("elapsed time {elapsed} s")));
        }
        let question = self.current_question().expect("validated bank");
        if !question.choices.iter().any(|c| c == choice) {
            return Err(SessionError::InvalidAnswer(format!(
                "`{choice}` is not one of the offered choices"
            )));
        }
        let correct = choice == question.correct;
        let score = timed_score(correct, elapsed, self.config.time_full, self.config.time_limit);
        self.complete_question(index, Some(choice.to_string()), correct, elapsed, score)
    }

    /// Records an unanswered questionnaire as a timeout.
    pub fn skip_question(&mut self) -> Result<f64, SessionError> {
        let Phase::Questionnaire { index } = self.phase else {
            return Err(self.sequencing("skipping a question"));
        };
        self.complete_question(index, None, false, self.config.time_limit, 0.0)
    }

    fn complete_question(
        &mut self,
        index: usize,
        diagnosis: Option<String>,
        correct: bool,
        elapsed: f64,
        score: f64,
    ) -> Result<f64, SessionError> {
        let mut record = self.pending.take().expect("questionnaire follows palpation");
        record.diagnosis = diagnosis;
        record.correct = correct;
        record.answer_elapsed_s = Some(elapsed);
        record.elapsed_s = record.palpation_s + elapsed;
        record.score = score;
        self.records.push(record);
        self.clock += elapsed;
        self.events.push(SessionEvent::Answered { scenario: index, score });
        self.enter_scenario(index + 1)?;
        Ok(score)
    }

    pub fn finalize_report(&self) -> Result<AssessmentReport, SessionError> {
        if self.phase != Phase::Finished {
            return Err(self.sequencing("finalizing the report"));
        }
        Ok(AssessmentReport {
            schema: REPORT_SCHEMA.to_string(),
            session_id: self.session_id(),
            seed: self.config.seed,
            calibration: self.calibration.clone(),
            total_score: self.records.iter().map(|r| r.score).sum(),
            virtual_time_s: self.clock,
            scenarios: self.records.clone(),
            config: self.config.clone(),
        })
    }
}

/// Runs a whole session without a calibration task: the tape is played
/// against each scenario in turn (restarting its clock after the previous
/// scenario's last step), then `answers[i]` is submitted after
/// `answer_elapsed` seconds, or the question times out when absent.
pub fn replay_session(
    config: SessionConfig,
    mesh: DeformableMesh,
    tape: &[ProbeInput],
    answers: &[Option<String>],
    answer_elapsed: f64,
) -> Result<(AssessmentReport, Vec<SimFrame>), SessionError> {
    let mut state = SessionState::new(config, mesh)?;
    state.skip_calibration()?;
    let mut frames = Vec::new();
    let mut offset = 0.0;
    while let Phase::Scenario { index } = state.phase() {
        let mut end = offset;
        for input in tape {
            let shifted = ProbeInput {
                t: input.t + offset,
                ..*input
            };
            end = shifted.t;
            frames.push(state.probe(&shifted)?);
            if state.phase() != (Phase::Scenario { index }) {
                break;
            }
        }
        if state.phase() == (Phase::Scenario { index }) {
            state.end_palpation()?;
            match answers.get(index).cloned().flatten() {
                Some(choice) => state.submit_answer(&choice, answer_elapsed)?,
                None => state.skip_question()?,
            };
        }
        offset = end + 1.0;
    }
    Ok((state.finalize_report()?, frames))
}
