//! Stability attributes and the readings measured for them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quality attributes that carry a weight and an SLA objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    ResponseTime,
    Energy,
    Cost,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::ResponseTime, Attribute::Energy, Attribute::Cost];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::ResponseTime => "response_time",
            Attribute::Energy => "energy",
            Attribute::Cost => "cost",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Attribute::ResponseTime => "ms",
            Attribute::Energy => "kWh",
            Attribute::Cost => "$",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown stability attribute `{0}`")]
pub struct UnknownAttribute(pub String);

impl FromStr for Attribute {
    type Err = UnknownAttribute;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response_time" => Ok(Attribute::ResponseTime),
            "energy" => Ok(Attribute::Energy),
            "cost" => Ok(Attribute::Cost),
            other => Err(UnknownAttribute(other.to_string())),
        }
    }
}

/// A measured metric value. `Saturated` marks an unstable queue (arrivals at or
/// above the service rate) and ranks worse than any finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    Finite(f64),
    Saturated,
}

impl Reading {
    pub fn finite(self) -> Option<f64> {
        match self {
            Reading::Finite(v) => Some(v),
            Reading::Saturated => None,
        }
    }

    pub fn is_saturated(self) -> bool {
        matches!(self, Reading::Saturated)
    }

    /// Numeric value, substituting `saturated` for the marker.
    pub fn value_or(self, saturated: f64) -> f64 {
        self.finite().unwrap_or(saturated)
    }

    /// Total order where `Saturated` is the maximum.
    pub fn total_cmp(&self, other: &Reading) -> Ordering {
        match (self, other) {
            (Reading::Finite(a), Reading::Finite(b)) => a.total_cmp(b),
            (Reading::Finite(_), Reading::Saturated) => Ordering::Less,
            (Reading::Saturated, Reading::Finite(_)) => Ordering::Greater,
            (Reading::Saturated, Reading::Saturated) => Ordering::Equal,
        }
    }

    pub fn exceeds(self, threshold: f64) -> bool {
        match self {
            Reading::Finite(v) => v > threshold,
            Reading::Saturated => true,
        }
    }
}

impl From<f64> for Reading {
    fn from(v: f64) -> Self {
        Reading::Finite(v)
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reading::Finite(v) => write!(f, "{v}"),
            Reading::Saturated => f.write_str("saturated"),
        }
    }
}

/// Per-instance measurements of the three weighted attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub response_time_ms: Reading,
    pub energy_kwh: f64,
    pub cost_usd: f64,
}

impl Measurements {
    pub fn get(&self, attribute: Attribute) -> Reading {
        match attribute {
            Attribute::ResponseTime => self.response_time_ms,
            Attribute::Energy => Reading::Finite(self.energy_kwh),
            Attribute::Cost => Reading::Finite(self.cost_usd),
        }
    }
}
