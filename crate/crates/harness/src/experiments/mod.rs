//! One function per subcommand; each returns its report rows in a fixed order.

mod bogovskii;
mod helmholtz;
mod ratio;
mod stokes;
mod sweep;
mod transform;

pub use bogovskii::bogovskii_verify;
pub use helmholtz::helmholtz_verify;
pub use ratio::ratio;
pub use stokes::stokes_run;
pub use sweep::estimate_sweep;
pub use transform::transform_verify;

use serde_json::{json, Map, Value};

/// Parameters every numeric row records. `dt` is null for static checks.
pub(crate) fn base(resolution: impl Into<Value>, dt: Option<f64>, seed: u64) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("resolution".into(), resolution.into());
    m.insert("dt".into(), dt.map_or(Value::Null, |v| json!(v)));
    m.insert("seed".into(), json!(seed));
    m
}

pub(crate) fn with(mut m: Map<String, Value>, key: &str, v: impl Into<Value>) -> Map<String, Value> {
    m.insert(key.into(), v.into());
    m
}

/// Observed order between two levels with spacings in ratio `n1 / n0`.
pub(crate) fn observed_order(e0: f64, e1: f64, n0: usize, n1: usize) -> f64 {
    (e0 / e1).ln() / (n1 as f64 / n0 as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_of_exact_power_law() {
        let e = |n: usize| 3.0 / (n * n) as f64;
        assert!((observed_order(e(16), e(24), 16, 24) - 2.0).abs() < 1e-12);
    }
}
