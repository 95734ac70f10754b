//! Per-round log lines:
//! `timestamp_s connection route qber key_bits_out leaked_bits action auth_mode`.

use std::fmt;
use std::str::FromStr;

use crate::topology::ConnectionId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoundAction {
    Keep,
    Discard,
    Calibrate,
    AuthFailed,
    ReconcileFailed,
    PoolExhausted,
}

impl RoundAction {
    pub const ALL: [RoundAction; 6] = [
        RoundAction::Keep,
        RoundAction::Discard,
        RoundAction::Calibrate,
        RoundAction::AuthFailed,
        RoundAction::ReconcileFailed,
        RoundAction::PoolExhausted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoundAction::Keep => "keep",
            RoundAction::Discard => "discard",
            RoundAction::Calibrate => "calibrate",
            RoundAction::AuthFailed => "auth-failed",
            RoundAction::ReconcileFailed => "reconcile-failed",
            RoundAction::PoolExhausted => "pool-exhausted",
        }
    }

    /// Whether the QBER in the record is a real measurement.
    pub fn measured_qber(self) -> bool {
        matches!(
            self,
            RoundAction::Keep | RoundAction::Discard | RoundAction::Calibrate
        )
    }
}

impl fmt::Display for RoundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoundAction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

#[derive(
    Clone,
    Copy,
    Debug,
    Default,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    serde::Serialize,
    serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum AuthMode {
    #[default]
    Pqc,
    Preshared,
}

impl fmt::Display for AuthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuthMode::Pqc => "pqc",
            AuthMode::Preshared => "preshared",
        })
    }
}

impl FromStr for AuthMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pqc" => Ok(AuthMode::Pqc),
            "preshared" => Ok(AuthMode::Preshared),
            _ => Err(format!("unknown auth mode `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    /// Start of the round, simulated seconds.
    pub timestamp_s: f64,
    pub connection: ConnectionId,
    /// Hop list joined with `->`.
    pub route: String,
    pub qber: f64,
    pub key_bits_out: u64,
    pub leaked_bits: u64,
    pub action: RoundAction,
    pub auth_mode: AuthMode,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.3} {} {} {:.6} {} {} {} {}",
            self.timestamp_s,
            self.connection,
            self.route,
            self.qber,
            self.key_bits_out,
            self.leaked_bits,
            self.action,
            self.auth_mode
        )
    }
}

impl FromStr for LogRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(format!("expected 8 fields, found {}", f.len()));
        }
        let num = |i: usize, name: &str| -> Result<f64, String> {
            let v: f64 = f[i].parse().map_err(|_| format!("bad {name} `{}`", f[i]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite {name}"))
            }
        };
        let int = |i: usize, name: &str| -> Result<u64, String> {
            f[i].parse().map_err(|_| format!("bad {name} `{}`", f[i]))
        };
        Ok(LogRecord {
            timestamp_s: num(0, "timestamp")?,
            connection: f[1].parse().map_err(|e| format!("{e}"))?,
            route: f[2].to_string(),
            qber: num(3, "qber")?,
            key_bits_out: int(4, "key_bits_out")?,
            leaked_bits: int(5, "leaked_bits")?,
            action: f[6].parse()?,
            auth_mode: f[7].parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

/// Parses a whole log; blank lines and `#` comments are skipped.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, LogParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.parse().map_err(|message| LogParseError {
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

pub fn render_log(records: &[LogRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let line = "12.000 U4-U3 U4->X1->U3 0.010234 2710 1180 keep pqc";
        let r: LogRecord = line.parse().unwrap();
        assert_eq!(r.to_string(), line);
        assert_eq!(r.action, RoundAction::Keep);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text =
            "1.000 U4-U3 U4->X1->U3 0.01 1 1 keep pqc\n\n3.000 U4-U3 r 0.01 1 1 explode pqc\n";
        let e = parse_log(text).unwrap_err();
        assert_eq!(e.line, 3);
    }
}
