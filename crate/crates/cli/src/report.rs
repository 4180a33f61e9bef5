//! Report assembly and JSON output.

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use finsler_deform::TangentPoint;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// `None` when the measured value is not finite.
    pub measured: Option<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical input description.
    pub input_digest: String,
    pub seed: u64,
    pub probes: Vec<TangentPoint>,
    pub sections: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    /// Seconds spent per section.
    pub timings: BTreeMap<String, f64>,
    pub pass: bool,
}

pub struct ReportBuilder {
    report: AnalysisReport,
}

impl ReportBuilder {
    pub fn new(command: &str, input_digest: String, seed: u64) -> Self {
        ReportBuilder {
            report: AnalysisReport {
                tool: "finsler".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                input_digest,
                seed,
                probes: Vec::new(),
                sections: BTreeMap::new(),
                checks: Vec::new(),
                timings: BTreeMap::new(),
                pass: true,
            },
        }
    }

    pub fn probes(&mut self, probes: &[TangentPoint]) {
        self.report.probes = probes.to_vec();
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn time<T, E>(&mut self, name: &str, f: impl FnOnce() -> Result<T, E>) -> Result<T, E> {
        let start = Instant::now();
        let out = f();
        *self.report.timings.entry(name.into()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    /// [`Self::time`], then stores the result as a section of the same name.
    pub fn timed<T: Serialize, E>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<T, E>,
    ) -> Result<T, E> {
        let out = self.time(name, f)?;
        self.section(name, &out);
        Ok(out)
    }

    pub fn section(&mut self, name: &str, value: &impl Serialize) {
        let v = serde_json::to_value(value).expect("report sections serialize");
        self.report.sections.insert(name.into(), v);
    }

    /// Records `measured <= tolerance`.
    pub fn check_below(&mut self, name: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured <= tolerance;
        self.check(name, pass, measured, tolerance)
    }

    pub fn check(&mut self, name: &str, pass: bool, measured: f64, tolerance: f64) -> bool {
        self.report.checks.push(Check {
            name: name.into(),
            pass,
            measured: measured.is_finite().then_some(measured),
            tolerance,
        });
        self.report.pass &= pass;
        pass
    }

    pub fn finish(self) -> AnalysisReport {
        self.report
    }
}

/// Writes every float with 17 significant digits.
struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json(report: &AnalysisReport) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    report.serialize(&mut ser).expect("report serializes");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Human-readable summary of a report.
pub fn summary(report: &AnalysisReport, highlights: &[String]) -> String {
    let mut out = format!(
        "{} {} ({}), input {}\n",
        report.tool,
        report.command,
        report.version,
        &report.input_digest[..16]
    );
    for h in highlights {
        out.push_str(h);
        out.push('\n');
    }
    for c in &report.checks {
        let measured = c
            .measured
            .map_or("non-finite".to_owned(), |m| format!("{m:.3e}"));
        out.push_str(&format!(
            "  [{}] {}: {} (tolerance {:.1e})\n",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            measured,
            c.tolerance
        ));
    }
    out.push_str(if report.pass {
        "result: pass\n"
    } else {
        "result: FAIL\n"
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AnalysisReport {
        let mut b = ReportBuilder::new("analyze", "ab".repeat(32), 42);
        b.section("values", &vec![0.1, 1.0 / 3.0, -2.5e-300, 1e300]);
        b.check_below("residual", 1.25e-12, 1e-8);
        b.check_below("nan", f64::NAN, 1e-8);
        b.finish()
    }

    #[test]
    fn floats_carry_seventeen_digits() {
        let json = to_json(&sample());
        assert!(json.contains("3.3333333333333331e-1"), "{json}");
        assert!(json.contains("\"measured\":null"));
    }

    #[test]
    fn json_round_trips() {
        let r = sample();
        let back: AnalysisReport = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(back, r);
        assert!(!back.pass);
    }
}
