use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transfer function of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// Identity.
    PureLin,
    /// Logistic sigmoid, range (0, 1).
    LogSig,
    /// Hyperbolic tangent, range (-1, 1).
    TanSig,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [Self::PureLin, Self::LogSig, Self::TanSig];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::PureLin => x,
            Self::LogSig => 1.0 / (1.0 + (-x).exp()),
            Self::TanSig => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        self.derivative_given_output(self.apply(x))
    }

    /// Derivative expressed through the already-computed output `a = f(x)`.
    pub(crate) fn derivative_given_output(self, a: f64) -> f64 {
        match self {
            Self::PureLin => 1.0,
            Self::LogSig => a * (1.0 - a),
            Self::TanSig => 1.0 - a * a,
        }
    }

    /// Open output interval, `None` when unbounded.
    pub fn output_range(self) -> Option<(f64, f64)> {
        match self {
            Self::PureLin => None,
            Self::LogSig => Some((0.0, 1.0)),
            Self::TanSig => Some((-1.0, 1.0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PureLin => "purelin",
            Self::LogSig => "logsig",
            Self::TanSig => "tansig",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse {
                field: "activation",
                value: s.to_string(),
            })
    }
}

pub fn activate(kind: ActivationKind, x: f64) -> f64 {
    kind.apply(x)
}

pub fn activate_derivative(kind: ActivationKind, x: f64) -> f64 {
    kind.derivative(x)
}
