//! Report rows and the CSV writer.
//!
//! Columns: `experiment,param_json,quantity,value,tolerance,pass`. Floats are
//! printed with 17 significant digits, lines end in LF. `param_json` is a
//! JSON object with sorted keys, so output bytes depend only on the values.

use std::io::Write;

use serde_json::{Map, Value};

pub const HEADER: &str = "experiment,param_json,quantity,value,tolerance,pass";

/// How a row is judged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Check {
    /// `value <= bound`.
    AtMost(f64),
    /// `value >= bound`, used for observed orders.
    AtLeast(f64),
    /// `|value - target| <= tol`.
    Near { target: f64, tol: f64 },
    /// Recorded, not judged.
    Info,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub params: Map<String, Value>,
    pub quantity: String,
    pub value: f64,
    pub check: Check,
}

impl ReportRow {
    pub fn new(experiment: &str, params: Map<String, Value>, quantity: &str, value: f64, check: Check) -> Self {
        ReportRow {
            experiment: experiment.into(),
            params,
            quantity: quantity.into(),
            value,
            check,
        }
    }

    /// `None` for informational rows. NaN never passes.
    pub fn pass(&self) -> Option<bool> {
        let v = self.value;
        match self.check {
            Check::AtMost(b) => Some(v <= b),
            Check::AtLeast(b) => Some(v >= b),
            Check::Near { target, tol } => Some((v - target).abs() <= tol),
            Check::Info => None,
        }
    }

    fn tolerance(&self) -> Option<f64> {
        match self.check {
            Check::AtMost(b) | Check::AtLeast(b) => Some(b),
            Check::Near { tol, .. } => Some(tol),
            Check::Info => None,
        }
    }

    pub fn to_csv_line(&self) -> String {
        let params = Value::Object(self.params.clone()).to_string();
        format!(
            "{},{},{},{},{},{}\n",
            self.experiment,
            quote(&params),
            self.quantity,
            float(self.value),
            self.tolerance().map(float).unwrap_or_default(),
            match self.pass() {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            }
        )
    }
}

/// 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn write_csv(out: &mut dyn Write, rows: &[ReportRow]) -> std::io::Result<()> {
    out.write_all(HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for r in rows {
        out.write_all(r.to_csv_line().as_bytes())?;
    }
    out.flush()
}

/// True when no judged row fails.
pub fn all_pass(rows: &[ReportRow]) -> bool {
    rows.iter().all(|r| r.pass() != Some(false))
}

/// Builds a parameter object from key/value pairs.
#[macro_export]
macro_rules! params {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = serde_json::Map::new();
        $( m.insert($k.to_string(), serde_json::json!($v)); )*
        m
    }};
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_line_format() {
        let r = ReportRow::new("ratio", crate::params! {"shape" => "ball", "seed" => 0}, "ratio", 1.0, Check::Near { target: 1.0, tol: 1e-12 });
        assert_eq!(
            r.to_csv_line(),
            "ratio,\"{\"\"seed\"\":0,\"\"shape\"\":\"\"ball\"\"}\",ratio,1.0000000000000000e0,9.9999999999999998e-13,true\n"
        );
        let info = ReportRow::new("x", Map::new(), "q", 0.5, Check::Info);
        assert!(info.to_csv_line().ends_with(",,\n"));
        assert!(all_pass(&[info]));
    }

    #[test]
    fn nan_fails() {
        let r = ReportRow::new("x", Map::new(), "q", f64::NAN, Check::AtMost(1.0));
        assert_eq!(r.pass(), Some(false));
        let r = ReportRow::new("x", Map::new(), "q", f64::NAN, Check::AtLeast(1.0));
        assert_eq!(r.pass(), Some(false));
    }
}
