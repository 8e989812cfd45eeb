use thiserror::Error;

use crate::haptics::ProbeInput;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("tape line {line}: {message}")]
pub struct TapeError {
    pub line: usize,
    pub message: String,
}

/// Parses a JSON-lines probe tape, one `{t, pos: [x, y, z], tool}` record
/// per line. Blank lines are skipped; times must strictly increase.
pub fn parse_tape(text: &str) -> Result<Vec<ProbeInput>, TapeError> {
    let mut out: Vec<ProbeInput> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let input: ProbeInput = serde_json::from_str(raw).map_err(|e| TapeError {
            line,
            message: e.to_string(),
        })?;
        if !(input.t.is_finite() && input.t >= 0.0) || !input.pos.iter().all(|x| x.is_finite()) {
            return Err(TapeError {
                line,
                message: "time and position must be finite, time non-negative".into(),
            });
        }
        if let Some(prev) = out.last() {
            if input.t <= prev.t {
                return Err(TapeError {
                    line,
                    message: format!("time {} does not follow {}", input.t, prev.t),
                });
            }
        }
        out.push(input);
    }
    Ok(out)
}

/// Inverse of [`parse_tape`].
pub fn write_tape(inputs: &[ProbeInput]) -> String {
    let mut out = String::new();
    for input in inputs {
        out.push_str(&serde_json::to_string(input).expect("probe input serializes"));
        out.push('\n');
    }
    out
}
