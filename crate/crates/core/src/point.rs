//! Points of the slit tangent bundle in induced coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point `(x, y)` of TM with `y != 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentPoint {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointError {
    #[error("x has {x} coordinates but y has {y}")]
    DimensionMismatch { x: usize, y: usize },
    #[error("the fiber coordinate y must be nonzero")]
    ZeroVector,
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("empty point")]
    Empty,
    #[error("{msg} at byte {offset}")]
    Syntax { offset: usize, msg: String },
}

impl TangentPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, PointError> {
        if x.len() != y.len() {
            return Err(PointError::DimensionMismatch {
                x: x.len(),
                y: y.len(),
            });
        }
        if x.is_empty() {
            return Err(PointError::Empty);
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(PointError::NonFinite);
        }
        if y.iter().all(|v| *v == 0.0) {
            return Err(PointError::ZeroVector);
        }
        Ok(TangentPoint { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// The point `(x, t y)`.
    pub fn scale_fiber(&self, t: f64) -> Result<Self, PointError> {
        TangentPoint::new(self.x.clone(), self.y.iter().map(|v| v * t).collect())
    }
}

impl fmt::Display for TangentPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| {
            v.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "x={};y={}", join(&self.x), join(&self.y))
    }
}

/// Parses `x=a,b,...;y=c,d,...`.
impl FromStr for TangentPoint {
    type Err = PointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut x = None;
        let mut y = None;
        let mut offset = 0;
        for part in s.split(';') {
            let trimmed = part.trim_start();
            let lead = part.len() - trimmed.len();
            let Some((key, values)) = trimmed.split_once('=') else {
                return Err(PointError::Syntax {
                    offset: offset + lead,
                    msg: "expected `x=...` or `y=...`".into(),
                });
            };
            let mut coords = Vec::new();
            let mut field_offset = offset + lead + key.len() + 1;
            for v in values.split(',') {
                let parsed = v.trim().parse::<f64>().map_err(|_| PointError::Syntax {
                    offset: field_offset,
                    msg: format!("invalid number {:?}", v.trim()),
                })?;
                coords.push(parsed);
                field_offset += v.len() + 1;
            }
            match key.trim() {
                "x" if x.is_none() => x = Some(coords),
                "y" if y.is_none() => y = Some(coords),
                other => {
                    return Err(PointError::Syntax {
                        offset: offset + lead,
                        msg: format!("unexpected key {other:?}"),
                    })
                }
            }
            offset += part.len() + 1;
        }
        match (x, y) {
            (Some(x), Some(y)) => TangentPoint::new(x, y),
            _ => Err(PointError::Syntax {
                offset: s.len(),
                msg: "both x and y must be given".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_fiber() {
        assert_eq!(
            TangentPoint::new(vec![0.0, 0.0], vec![0.0, 0.0]),
            Err(PointError::ZeroVector)
        );
    }

    #[test]
    fn parses_point_syntax() {
        let p: TangentPoint = "x=0.3,0;y=1,0".parse().unwrap();
        assert_eq!(p.x(), &[0.3, 0.0]);
        assert_eq!(p.y(), &[1.0, 0.0]);
        assert_eq!(p.to_string().parse::<TangentPoint>().unwrap(), p);
    }

    #[test]
    fn malformed_point_carries_offset() {
        match "x=0.3,zz;y=1,0".parse::<TangentPoint>() {
            Err(PointError::Syntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            "x=1,2;y=1".parse::<TangentPoint>(),
            Err(PointError::DimensionMismatch { .. })
        ));
    }
}
