//! Line-oriented metric definitions:
//!
//! ```text
//! # Klein metric of the unit disk
//! name = klein
//! dim = 2
//! F = sqrt(((1 - dot(x,x))*dot(y,y) + dot(x,y)^2)/(1 - dot(x,x))^2)
//! domain = 1 - dot(x,x)
//! factor = F
//! ```

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricFile {
    pub name: String,
    pub dim: usize,
    pub f: String,
    pub domain: Option<String>,
    pub factor: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricFileError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: dim must be a positive integer")]
    BadDim { line: usize },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

impl MetricFile {
    pub fn parse(text: &str) -> Result<Self, MetricFileError> {
        let mut name = None;
        let mut dim = None;
        let mut f = None;
        let mut domain = None;
        let mut factor = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(MetricFileError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim().to_owned());
            if value.is_empty() {
                return Err(MetricFileError::Syntax { line });
            }
            let slot = match key {
                "name" => &mut name,
                "F" => &mut f,
                "domain" => &mut domain,
                "factor" => &mut factor,
                "dim" => {
                    if dim.is_some() {
                        return Err(MetricFileError::Duplicate {
                            line,
                            key: key.into(),
                        });
                    }
                    let d: usize = value
                        .parse()
                        .map_err(|_| MetricFileError::BadDim { line })?;
                    if d == 0 {
                        return Err(MetricFileError::BadDim { line });
                    }
                    dim = Some(d);
                    continue;
                }
                other => {
                    return Err(MetricFileError::UnknownKey {
                        line,
                        key: other.into(),
                    })
                }
            };
            if slot.is_some() {
                return Err(MetricFileError::Duplicate {
                    line,
                    key: key.into(),
                });
            }
            *slot = Some(value);
        }
        Ok(MetricFile {
            name: name.unwrap_or_else(|| "unnamed".into()),
            dim: dim.ok_or(MetricFileError::Missing("dim"))?,
            f: f.ok_or(MetricFileError::Missing("F"))?,
            domain,
            factor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let m = MetricFile::parse("# header\nname = e2\ndim = 2 # plane\nF = sqrt(dot(y,y))\n\n")
            .unwrap();
        assert_eq!(m.name, "e2");
        assert_eq!(m.dim, 2);
        assert_eq!(m.f, "sqrt(dot(y,y))");
        assert_eq!(m.domain, None);
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(
            MetricFile::parse("dim = 2\nF sqrt(dot(y,y))").unwrap_err(),
            MetricFileError::Syntax { line: 2 }
        );
        assert_eq!(
            MetricFile::parse("dim = 2\ng = 1").unwrap_err(),
            MetricFileError::UnknownKey {
                line: 2,
                key: "g".into()
            }
        );
        assert_eq!(
            MetricFile::parse("dim = 2").unwrap_err(),
            MetricFileError::Missing("F")
        );
        assert_eq!(
            MetricFile::parse("dim = 0\nF = 1").unwrap_err(),
            MetricFileError::BadDim { line: 1 }
        );
    }
}
