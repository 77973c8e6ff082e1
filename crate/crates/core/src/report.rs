//! Report records shared by the validators, the property suites and the harness.

use serde::{Deserialize, Serialize};

/// One sampled structural check.
///
/// `worst` is the extreme statistic over the sample cloud: the most negative
/// margin for inequality checks, or the largest ratio for Lipschitz checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub threshold: f64,
    pub violations: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub name: String,
    pub n_samples: usize,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A measured quantity inside a [`PropertyReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    /// 95% normal confidence radius; `+∞` when only one path was used, `0`
    /// for deterministic quantities.
    pub ci95: f64,
    pub threshold: Option<f64>,
    pub pass: Option<bool>,
}

impl Quantity {
    pub fn info(name: impl Into<String>, value: f64, ci95: f64) -> Self {
        Quantity {
            name: name.into(),
            value,
            ci95,
            threshold: None,
            pass: None,
        }
    }

    /// Upper-bound check: passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, ci95: f64, threshold: f64) -> Self {
        Quantity {
            name: name.into(),
            value,
            ci95,
            threshold: Some(threshold),
            pass: Some(value <= threshold),
        }
    }

    /// Lower-bound check: passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, ci95: f64, threshold: f64) -> Self {
        Quantity {
            name: name.into(),
            value,
            ci95,
            threshold: Some(threshold),
            pass: Some(value >= threshold),
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Quantity {
            name: name.into(),
            value: if pass { 1.0 } else { 0.0 },
            ci95: 0.0,
            threshold: Some(1.0),
            pass: Some(pass),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub samples: usize,
    pub quantities: Vec<Quantity>,
    /// Per-path audit values (meaning documented by each suite).
    pub raw: Vec<f64>,
    pub error: Option<String>,
}

impl PropertyReport {
    pub fn new(name: impl Into<String>, samples: usize) -> Self {
        PropertyReport {
            name: name.into(),
            samples,
            quantities: Vec::new(),
            raw: Vec::new(),
            error: None,
        }
    }

    pub fn failed(name: impl Into<String>, samples: usize, error: String) -> Self {
        PropertyReport {
            error: Some(error),
            ..PropertyReport::new(name, samples)
        }
    }

    pub fn push(&mut self, q: Quantity) {
        self.quantities.push(q);
    }

    /// All gated quantities pass and no solver error was recorded.
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.quantities.iter().all(|q| q.pass.unwrap_or(true))
    }

    pub fn quantity(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.quantity(name).map(|q| q.value)
    }
}
