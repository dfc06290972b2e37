//! Common output record of the functionals.

use serde::{Deserialize, Serialize};

use crate::surface::PhasePoint;

pub const SCHEMA_VERSION: u32 = 1;

/// Which side of the true value a finite estimate lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    UpperBound,
    LowerBound,
    TwoSided,
}

/// The object realizing a reported value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    None,
    PhasePoint { point: PhasePoint, grid_index: Option<usize> },
    Eigenvector { lambda: f64, coefficients: Vec<f64> },
    Measure { index: usize, description: String },
    Region { descriptor: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub schema_version: u32,
    pub functional: String,
    pub model: String,
    pub observable: String,
    pub value: f64,
    pub certificate: Certificate,
    pub direction: Direction,
    /// Final horizon for time averages.
    pub horizon: Option<f64>,
    /// Spectral cutoff for eigenfunction functionals.
    pub truncation: Option<f64>,
    /// (parameter, value) pairs in evaluation order.
    pub trace: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl FunctionalReport {
    pub fn new(functional: &str, model: &str, observable: &str, value: f64, direction: Direction) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            functional: functional.into(),
            model: model.into(),
            observable: observable.into(),
            value,
            certificate: Certificate::None,
            direction,
            horizon: None,
            truncation: None,
            trace: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Largest drop between consecutive trace values (0 for a nondecreasing trace).
    pub fn max_decrease(&self) -> f64 {
        self.trace.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max)
    }
}
