use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Equally spaced disparity hypotheses covering `[min, max]`.
///
/// The count is `round((max - min) / interval) + 1`; the spacing actually used
/// is `(max - min) / (count - 1)`, so the endpoints are always hit exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    values: Vec<f64>,
    min: f64,
    max: f64,
}

/// Range and target spacing, as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRange {
    pub min: f64,
    pub max: f64,
    pub interval: f64,
}

impl SampleRange {
    pub fn new(min: f64, max: f64, interval: f64) -> Self {
        Self { min, max, interval }
    }

    pub fn build(&self) -> Result<SampleVector> {
        SampleVector::new(self.min, self.max, self.interval)
    }
}

impl SampleVector {
    pub fn new(min: f64, max: f64, interval: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && interval.is_finite()) {
            return Err(invalid("samples", "non-finite range"));
        }
        if max <= min || interval <= 0.0 {
            return Err(invalid("samples", format!("need min < max and interval > 0, got [{min}, {max}] / {interval}")));
        }
        let count = ((max - min) / interval).round() as usize + 1;
        if count < 2 {
            return Err(invalid("samples", format!("interval {interval} too coarse for [{min}, {max}]")));
        }
        let step = (max - min) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|i| min + step * i as f64).collect();
        values[count - 1] = max;
        Ok(Self { values, min, max })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Effective spacing.
    pub fn interval(&self) -> f64 {
        (self.max - self.min) / (self.len() - 1) as f64
    }
}
