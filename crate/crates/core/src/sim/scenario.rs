use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("key generation failed: {0}")]
    Keys(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Attack {
    #[default]
    None,
    /// Replays the first accepted message of every kind, in-window and in
    /// the next window.
    Replay,
    /// An outsider copies the first participant's credit tokens and deposits
    /// them under its own identity.
    Theft,
    /// Forged deposits: random signatures, real signatures on random
    /// preimages, reflected signatures and borrowed identity signatures.
    Forgery,
    /// Replays random past messages at random later ticks and deposits
    /// random stolen tokens.
    RandomReplay,
}

/// Simulation parameters. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Tasks per window.
    #[serde(rename = "M", alias = "m")]
    pub m: u32,
    pub c_min: u32,
    pub c_max: u32,
    /// Credits the constant policy grants per report.
    pub policy_c: u32,
    pub n_participants: u32,
    pub key_bits: u64,
    /// Seed of the provisioned server keys, independent of the run seed.
    pub key_seed: u64,
    pub gap_min: u64,
    pub gap_max: u64,
    /// Window lifetime in ticks.
    pub horizon: u64,
    pub windows: u32,
    pub attack: Attack,
    /// Run seed used when none is given on the command line.
    pub seed: Option<u64>,
    /// Start the next task before the previous task's deposits finish.
    pub interleave: bool,
    pub ts_tolerance: u64,
    /// Ticks between the last report for a task and its completion.
    pub complete_delay: u64,
    /// Trials per forgery strategy.
    pub forgery_trials: u32,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            m: 1,
            c_min: 1,
            c_max: 10,
            policy_c: 5,
            n_participants: 1,
            key_bits: 512,
            key_seed: 0x5eed,
            gap_min: 1,
            gap_max: 20,
            horizon: 10_000,
            windows: 1,
            attack: Attack::None,
            seed: None,
            interleave: false,
            ts_tolerance: 4,
            complete_delay: 5,
            forgery_trials: 1000,
        }
    }
}

impl Scenario {
    /// Parses either a JSON object or flat `key = value` lines. `#` starts a
    /// comment in the flat form.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str::<Value>(text).map_err(|e| ScenarioError::Syntax {
                line: e.line(),
                msg: e.to_string(),
            })?
        } else {
            Value::Object(parse_flat(text)?)
        };
        let sc: Scenario =
            serde_json::from_value(value).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::Invalid(msg.to_string()));
        if self.m == 0 {
            return bad("M must be at least 1");
        }
        if self.c_min == 0 || self.c_min > self.c_max {
            return bad("need 1 <= c_min <= c_max");
        }
        if self.gap_min == 0 || self.gap_min > self.gap_max {
            return bad("need 1 <= gap_min <= gap_max");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.key_bits < 48 {
            return bad("key_bits must be at least 48");
        }
        if matches!(self.attack, Attack::RandomReplay) && self.n_participants < 2 {
            return bad("random-replay needs at least two participants");
        }
        Ok(())
    }

    /// The scenario as flat `key = value` text, which [`Scenario::parse`] reads
    /// back unchanged.
    pub fn to_flat(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("scenario serializes") else {
            unreachable!()
        };
        let mut out = String::new();
        for (k, v) in map {
            let v = match v {
                Value::Null => continue,
                Value::String(s) => s,
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn parse_flat(text: &str) -> Result<Map<String, Value>, ScenarioError> {
    let mut map = Map::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ScenarioError::Syntax {
            line: n + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ScenarioError::Syntax {
                line: n + 1,
                msg: "empty key".into(),
            });
        }
        let value = if let Ok(u) = v.parse::<u64>() {
            Value::from(u)
        } else if let Ok(b) = v.parse::<bool>() {
            Value::Bool(b)
        } else {
            Value::String(v.to_string())
        };
        if map.insert(k.to_string(), value).is_some() {
            return Err(ScenarioError::Syntax {
                line: n + 1,
                msg: format!("duplicate key {k}"),
            });
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_agree() {
        let flat = "M = 3\nc_max = 5 # comment\npolicy_c = 2\nattack = theft\ninterleave = true\n";
        let json = r#"{"M": 3, "c_max": 5, "policy_c": 2, "attack": "theft", "interleave": true}"#;
        let a = Scenario::parse(flat).unwrap();
        assert_eq!(a, Scenario::parse(json).unwrap());
        assert_eq!(a.m, 3);
        assert_eq!(a.attack, Attack::Theft);
        assert_eq!(a.gap_max, Scenario::default().gap_max);
    }

    #[test]
    fn flat_round_trip() {
        let sc = Scenario {
            seed: Some(9),
            attack: Attack::RandomReplay,
            n_participants: 3,
            ..Scenario::default()
        };
        assert_eq!(Scenario::parse(&sc.to_flat()).unwrap(), sc);
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(
            Scenario::parse("M 3"),
            Err(ScenarioError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            Scenario::parse("bogus = 1"),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(matches!(
            Scenario::parse("M = 0"),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(matches!(
            Scenario::parse("c_min = 4\nc_max = 3"),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(matches!(
            Scenario::parse("M = 1\nM = 2"),
            Err(ScenarioError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            Scenario::parse("{"),
            Err(ScenarioError::Syntax { .. })
        ));
    }
}
