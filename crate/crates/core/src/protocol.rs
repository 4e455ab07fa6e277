//! Control sequences: bang-bang (coupling off/on per slice) or continuous
//! amplitudes in `[0, γ_max]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-slice bang-bang decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    Off = 0,
    On = 1,
}

impl Action {
    pub fn is_on(self) -> bool {
        self == Action::On
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Self::try_from(v as usize)
    }
}

impl TryFrom<usize> for Action {
    type Error = Error;
    fn try_from(v: usize) -> Result<Self> {
        match v {
            0 => Ok(Action::Off),
            1 => Ok(Action::On),
            _ => Err(Error::Domain(format!("action must be 0 or 1, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Entries are exactly 0 or γ_max.
    Binary,
    /// Entries anywhere in `[0, γ_max]`.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol<T> {
    pub mode: ProtocolMode,
    pub amplitudes: Vec<T>,
}

impl<T: Real> Protocol<T> {
    pub fn bang_bang(actions: &[Action], gamma_max: T) -> Self {
        Self {
            mode: ProtocolMode::Binary,
            amplitudes: actions
                .iter()
                .map(|a| if a.is_on() { gamma_max } else { T::zero() })
                .collect(),
        }
    }

    pub fn continuous(amplitudes: Vec<T>) -> Self {
        Self {
            mode: ProtocolMode::Continuous,
            amplitudes,
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Actions of a binary protocol; `None` for continuous ones.
    pub fn actions(&self) -> Option<Vec<Action>> {
        match self.mode {
            ProtocolMode::Binary => Some(
                self.amplitudes
                    .iter()
                    .map(|&a| if a > T::zero() { Action::On } else { Action::Off })
                    .collect(),
            ),
            ProtocolMode::Continuous => None,
        }
    }

    /// Checks length and that each amplitude is admissible for `gamma_max`.
    pub fn validate(&self, steps: usize, gamma_max: T) -> Result<()> {
        if self.len() != steps {
            return Err(Error::DimensionMismatch {
                expected: steps,
                actual: self.len(),
            });
        }
        for (i, &a) in self.amplitudes.iter().enumerate() {
            let ok = match self.mode {
                ProtocolMode::Binary => a == T::zero() || a == gamma_max,
                ProtocolMode::Continuous => a.is_finite() && a >= T::zero() && a <= gamma_max,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "amplitude {a} at slice {i} not admissible in {:?} mode with γ_max = {gamma_max}",
                    self.mode
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bang_bang_roundtrip_and_validation() {
        let acts = [Action::On, Action::Off, Action::On];
        let p = Protocol::bang_bang(&acts, 0.8);
        assert_eq!(p.amplitudes, vec![0.8, 0.0, 0.8]);
        assert_eq!(p.actions().unwrap(), acts);
        assert!(p.validate(3, 0.8).is_ok());
        assert!(p.validate(4, 0.8).is_err());
        let bad = Protocol {
            mode: ProtocolMode::Binary,
            amplitudes: vec![0.4],
        };
        assert!(bad.validate(1, 0.8).is_err());
        let cont = Protocol::continuous(vec![0.4, 0.0, 0.8]);
        assert!(cont.validate(3, 0.8).is_ok());
        assert!(cont.actions().is_none());
        assert!(Protocol::continuous(vec![0.9]).validate(1, 0.8).is_err());
    }

    #[test]
    fn json_shape() {
        let p = Protocol::bang_bang(&[Action::Off, Action::On], 1.5);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"mode":"binary","amplitudes":[0.0,1.5]}"#);
        let back: Protocol<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(Action::try_from(2usize).is_err());
    }
}
