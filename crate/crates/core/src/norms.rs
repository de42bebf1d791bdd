//! Discrete Sobolev norms, mixed space-time (Bochner) norms, mean values and
//! the pressure estimate ratio.
//!
//! Derivatives use fourth-order centred differences. A derivative sample whose
//! stencil reaches an invalid or missing sample is dropped, so norms are taken
//! over the shrunk interior of the data. The [`Region`] argument selects which
//! of the remaining samples are integrated.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridField, Region, SpaceTimeField, VectorField};

/// Exponents of `L^s(0, T; W^{k,q})`. `s` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    pub s: f64,
    pub q: f64,
    pub k: usize,
}

impl NormSpec {
    pub fn new(s: f64, q: f64, k: usize) -> Result<Self> {
        if !(s > 1.0) {
            return Err(Error::InvalidArgument(format!("time exponent s = {s} must exceed 1")));
        }
        if !(q > 1.0) || q.is_infinite() {
            return Err(Error::InvalidArgument(format!("space exponent q = {q} must be finite and exceed 1")));
        }
        Ok(NormSpec { s, q, k })
    }
}

/// Anything made of scalar grid components.
pub trait Components {
    fn components(&self) -> &[GridField];
}

impl Components for GridField {
    fn components(&self) -> &[GridField] {
        std::slice::from_ref(self)
    }
}

impl Components for VectorField {
    fn components(&self) -> &[GridField] {
        &self.components
    }
}

impl Components for Vec<GridField> {
    fn components(&self) -> &[GridField] {
        self
    }
}

/// `sum |v|^q dV` (or the max for infinite `q`) and the number of samples used.
fn power_sum(field: &GridField, q: f64, region: &Region) -> (f64, usize) {
    let g = field.grid();
    let d = g.dim();
    let vol = g.cell_volume();
    let mut acc = 0.0f64;
    let mut count = 0;
    for (i, v) in field.values().iter().enumerate() {
        if !field.is_valid(i) || !region.contains(&g.point(i)[..d]) {
            continue;
        }
        count += 1;
        if q.is_infinite() {
            acc = acc.max(v.abs());
        } else {
            acc += v.abs().powf(q) * vol;
        }
    }
    (acc, count)
}

/// All sorted multi-indices of order `k` in `dim` variables, as per-axis
/// counts, with the number of ordered index tuples each one represents.
fn multi_indices(dim: usize, k: usize) -> Vec<([usize; 3], f64)> {
    let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
    let mut out = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            let c = k - a - b;
            let counts = [a, b, c];
            if counts[dim..].iter().any(|&v| v != 0) {
                continue;
            }
            let mult = fact(k) / (fact(a) * fact(b) * fact(c));
            out.push((counts, mult));
        }
    }
    out
}

fn apply_derivatives(field: &GridField, counts: &[usize; 3]) -> Result<GridField> {
    let mut d = field.clone();
    for (axis, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            d = d.derivative_centered4(axis)?;
        }
    }
    Ok(d)
}

/// `(sum over components and ordered k-tuples of ||D f||_q^q)^{1/q}` as a
/// raw power sum, plus the sample count of the sparsest term.
fn seminorm_power(components: &[GridField], q: f64, k: usize, region: &Region) -> Result<(f64, usize)> {
    let mut total = 0.0f64;
    let mut min_count = usize::MAX;
    for comp in components {
        for (counts, mult) in multi_indices(comp.grid().dim(), k) {
            let d = apply_derivatives(comp, &counts)?;
            let (s, c) = power_sum(&d, q, region);
            min_count = min_count.min(c);
            if q.is_infinite() {
                total = total.max(s);
            } else {
                total += mult * s;
            }
        }
    }
    Ok((total, min_count))
}

fn finish(power: f64, q: f64) -> f64 {
    if q.is_infinite() {
        power
    } else {
        power.powf(1.0 / q)
    }
}

fn check_exponent(q: f64) -> Result<()> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("exponent q = {q} must be at least 1")));
    }
    Ok(())
}

/// `||grad^k f||_q`, summed over components and the full ordered tensor.
pub fn seminorm(components: &[GridField], q: f64, k: usize, region: &Region) -> Result<f64> {
    check_exponent(q)?;
    if components.is_empty() {
        return Err(Error::InvalidArgument("no components".into()));
    }
    let (p, count) = seminorm_power(components, q, k, region)?;
    if count == 0 {
        return Err(Error::EmptyRegion(format!(
            "no samples left for derivatives of order {k} inside the region"
        )));
    }
    Ok(finish(p, q))
}

/// `(sum_{j <= k} ||grad^j f||_q^q)^{1/q}` over all components.
pub fn sobolev_norm_components(components: &[GridField], q: f64, k: usize, region: &Region) -> Result<f64> {
    check_exponent(q)?;
    if components.is_empty() {
        return Err(Error::InvalidArgument("no components".into()));
    }
    let mut total = 0.0f64;
    for j in 0..=k {
        let (p, count) = seminorm_power(components, q, j, region)?;
        if count == 0 {
            return Err(Error::EmptyRegion(format!(
                "no samples left for derivatives of order {j} inside the region"
            )));
        }
        total = if q.is_infinite() { total.max(p) } else { total + p };
    }
    Ok(finish(total, q))
}

pub fn sobolev_norm(field: &GridField, q: f64, k: usize, region: &Region) -> Result<f64> {
    sobolev_norm_components(field.components(), q, k, region)
}

/// `(dt sum_m x_m^s)^{1/s}`, or `max_m x_m` when `s` is infinite.
pub fn time_norm(dt: f64, values: &[f64], s: f64) -> f64 {
    if s.is_infinite() {
        values.iter().cloned().fold(0.0, f64::max)
    } else {
        (dt * values.iter().map(|v| v.powf(s)).sum::<f64>()).powf(1.0 / s)
    }
}

/// `||f||_{L^s(0,T; W^{k,q})}` over the time slices `t_m = m dt`.
pub fn bochner_norm<T: Components + Sync>(field: &SpaceTimeField<T>, spec: &NormSpec, region: &Region) -> Result<f64> {
    let slices = field
        .slices
        .par_iter()
        .map(|f| sobolev_norm_components(f.components(), spec.q, spec.k, region))
        .collect::<Result<Vec<_>>>()?;
    Ok(time_norm(field.dt, &slices, spec.s))
}

/// `||grad^k f||_{L^s(0,T; L^q)}`.
pub fn bochner_seminorm<T: Components + Sync>(
    field: &SpaceTimeField<T>,
    s: f64,
    q: f64,
    k: usize,
    region: &Region,
) -> Result<f64> {
    let slices = field
        .slices
        .par_iter()
        .map(|f| seminorm(f.components(), q, k, region))
        .collect::<Result<Vec<_>>>()?;
    Ok(time_norm(field.dt, &slices, s))
}

/// Average of the valid samples of `field` inside `region`.
pub fn mean_value(field: &GridField, region: &Region) -> Result<f64> {
    let g = field.grid();
    let d = g.dim();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, v) in field.values().iter().enumerate() {
        if field.is_valid(i) && region.contains(&g.point(i)[..d]) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyRegion("mean over an empty region".into()));
    }
    Ok(sum / count as f64)
}

/// `||grad^{k+1} p||_{L^s L^q} / ||f||_{L^s W^{k,q}}`.
pub fn estimate_ratio<P, F>(p: &SpaceTimeField<P>, f: &SpaceTimeField<F>, spec: &NormSpec, region: &Region) -> Result<f64>
where
    P: Components + Sync,
    F: Components + Sync,
{
    if p.len() != f.len() || (p.dt - f.dt).abs() > 1e-14 * p.dt {
        return Err(Error::InvalidArgument("pressure and forcing time grids differ".into()));
    }
    let den = bochner_norm(f, spec, region)?;
    if den == 0.0 {
        return Err(Error::UndefinedRatio("forcing norm is zero".into()));
    }
    let num = bochner_seminorm(p, spec.s, spec.q, spec.k + 1, region)?;
    Ok(num / den)
}
