//! Numeric agreement thresholds.

use serde::{Deserialize, Serialize};

/// Relative tolerance with an absolute floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-6,
            abs: 1e-9,
        }
    }
}

impl Tolerance {
    pub const fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs }
    }

    /// `|a - b| / max(|a|, |b|, abs / rel)`.
    ///
    /// Comparing the result against `rel` is the same as asking for
    /// `|a - b| <= max(rel * max(|a|, |b|), abs)`.
    pub fn rel_error(&self, a: f64, b: f64) -> f64 {
        let floor = if self.rel > 0.0 {
            self.abs / self.rel
        } else {
            f64::MIN_POSITIVE
        };
        let denom = a.abs().max(b.abs()).max(floor);
        if denom == 0.0 {
            0.0
        } else {
            (a - b).abs() / denom
        }
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        self.rel_error(a, b) <= self.rel
    }
}

/// Relative error used for pass/fail claims that compare against a
/// reference value: `|a - b| / max(|b|, 1)`.
pub fn rel_to_unit(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_applies_near_zero() {
        let t = Tolerance::default();
        assert!(t.close(1e-10, 0.0));
        assert!(!t.close(1e-8, 0.0));
        assert!(t.close(1.0, 1.0 + 5e-7));
        assert!(!t.close(1.0, 1.0 + 5e-6));
    }
}
