use stokes_regularity::geometry::{self, Shape};

use crate::config::Config;
use crate::error::Result;
use crate::report::{Check, ReportRow};

use super::{base, with};

/// `R_a / R_i` from the shape parameters alone.
fn closed_form(shape: &Shape, dim: usize) -> f64 {
    match shape {
        Shape::Ball => 1.0,
        Shape::Cube => (dim as f64).sqrt(),
        Shape::Cuboid { half_extents } => {
            half_extents.iter().map(|a| a * a).sum::<f64>().sqrt() / half_extents.iter().cloned().fold(f64::INFINITY, f64::min)
        }
        Shape::Ellipsoid { semi_axes } => {
            semi_axes.iter().cloned().fold(0.0, f64::max) / semi_axes.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn ratio(cfg: &Config) -> Result<Vec<ReportRow>> {
    let dom = cfg.domain.star_domain("ball")?;
    let value = geometry::ratio(&dom)?;
    let target = closed_form(dom.shape(), dom.dim());
    let params = with(base(serde_json::Value::Null, None, cfg.seed()), "dim", dom.dim());
    let params = with(params, "shape", cfg.domain.shape.clone().unwrap_or_else(|| "ball".into()));
    Ok(vec![ReportRow::new("ratio", params, "ratio", value, Check::Near { target, tol: 1e-12 })])
}
