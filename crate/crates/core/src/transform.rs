//! Boundary flattening: pulled-back fields, residual checks of the
//! transformation identities for derivatives, divergence, Laplacian and
//! gradient, the localized corrected field `V` with its pressure `Pi`, and
//! recovery of the normal second derivative of a harmonic pressure.
//!
//! Grid derivatives are second order: centred inside, one-sided three- and
//! four-point closures at the ends of every line, so the flattened boundary
//! `y_n = 0` keeps full order. Where an identity compares a physical
//! derivative with a flattened one, the physical side is evaluated with the
//! same stencil pattern placed at `Phi(y)`. On a flat chart both sides then
//! coincide up to rounding.

use crate::bogovskii::{BogovskiiConfig, ScaledBogovskii};
use crate::error::{Error, Result};
use crate::geometry::{sup_grad_h, BoundaryChart, Cutoff, Shape, StarDomain};
use crate::grid::{first_taps, second_taps, Grid, GridField, Point, SpaceTimeField, VectorField};

/// A scalar field on the physical side.
pub type ScalarFn<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Samples of `field o Phi` on a grid in the flattened half space, with the
/// chart that defines `Phi`.
#[derive(Clone, Debug)]
pub struct FlattenedField {
    chart: BoundaryChart,
    components: Vec<GridField>,
}

impl FlattenedField {
    pub fn new(chart: &BoundaryChart, components: Vec<GridField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("a flattened field needs at least one component".into()))?;
        let g = first.grid();
        if g.dim() != chart.dim() {
            return Err(Error::InvalidArgument(format!(
                "grid is {}-dimensional, chart is {}-dimensional",
                g.dim(),
                chart.dim()
            )));
        }
        if components.iter().any(|c| c.grid() != g) {
            return Err(Error::InvalidArgument("components must share one grid".into()));
        }
        let n = g.dim();
        for i in [0, g.len() - 1] {
            let y = g.point(i);
            if y[n - 1] < -1e-12 || !chart.in_patch(&y[..n]) {
                return Err(Error::OutsideDomain {
                    point: y[..n].to_vec(),
                    region: format!("U_R^+ with R = {}", chart.radius()),
                });
            }
        }
        Ok(FlattenedField {
            chart: chart.clone(),
            components,
        })
    }

    pub fn chart(&self) -> &BoundaryChart {
        &self.chart
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[GridField] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &GridField {
        &self.components[i]
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Same samples, attributed to another chart. Useful for corrupted-input
    /// controls.
    pub fn with_chart(&self, chart: &BoundaryChart) -> Result<Self> {
        FlattenedField::new(chart, self.components.clone())
    }

    fn scalar(&self) -> Result<&GridField> {
        if self.components.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "expected a scalar field, got {} components",
                self.components.len()
            )));
        }
        Ok(&self.components[0])
    }

    fn vector(&self) -> Result<&[GridField]> {
        if self.components.len() != self.grid().dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} components, got {}",
                self.grid().dim(),
                self.components.len()
            )));
        }
        Ok(&self.components)
    }
}

/// Node grid on the box `[-a, a]^{n-1} x [0, R]` with `a = R / sqrt(n-1)`,
/// the largest such box inside `U_R^+`; `cells` intervals per axis.
pub fn flat_grid(chart: &BoundaryChart, cells: usize) -> Result<Grid> {
    if cells < 4 {
        return Err(Error::GridTooCoarse(format!("need at least 4 cells per axis, got {cells}")));
    }
    let n = chart.dim();
    let r = chart.radius();
    let a = r / ((n - 1) as f64).sqrt();
    let mut lower = vec![-a; n];
    let mut upper = vec![a; n];
    lower[n - 1] = 0.0;
    upper[n - 1] = r;
    Grid::nodes(&lower, &upper, &vec![cells + 1; n])
}

/// `field o Phi` by multilinear interpolation of physical grid data.
pub fn pullback(field: &[GridField], chart: &BoundaryChart, grid: &Grid) -> Result<FlattenedField> {
    let n = grid.dim();
    let mut comps = Vec::with_capacity(field.len());
    for c in field {
        let mut vals = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x = chart.flatten(&grid.point(i)[..n])?;
            vals.push(c.interpolate(&x[..n])?);
        }
        comps.push(GridField::from_values(grid, vals)?);
    }
    FlattenedField::new(chart, comps)
}

/// `f o Phi` by direct composition with a closed form.
pub fn pullback_fn(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    components: usize,
    chart: &BoundaryChart,
    grid: &Grid,
) -> Result<FlattenedField> {
    let n = grid.dim();
    let mut vals = vec![Vec::with_capacity(grid.len()); components];
    for i in 0..grid.len() {
        let x = chart.flatten(&grid.point(i)[..n])?;
        let v = f(&x[..n]);
        if v.len() != components {
            return Err(Error::InvalidArgument(format!(
                "closed form returned {} components, expected {components}",
                v.len()
            )));
        }
        for (c, val) in v.into_iter().enumerate() {
            vals[c].push(val);
        }
    }
    let comps = vals
        .into_iter()
        .map(|v| GridField::from_values(grid, v))
        .collect::<Result<Vec<_>>>()?;
    FlattenedField::new(chart, comps)
}

/// `sqrt(num2 / den2)`, zero when the numerator vanishes.
fn relative(num2: f64, den2: f64) -> f64 {
    if num2 == 0.0 {
        0.0
    } else if den2 > 0.0 {
        (num2 / den2).sqrt()
    } else {
        num2.sqrt()
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// The grid derivative stencil along `axis`, applied to the physical field
/// around `x` with the grid spacing.
fn physical_stencil(f: ScalarFn, x: &Point, n: usize, axis: usize, h: f64, taps: &[(isize, f64)], power: i32) -> f64 {
    let mut acc = 0.0;
    for &(o, w) in taps {
        let mut p = *x;
        p[axis] += o as f64 * h;
        acc += w * f(&p[..n]);
    }
    acc / h.powi(power)
}

struct ChartData {
    grad: Vec<[f64; 2]>,
    lap: Vec<f64>,
}

fn chart_data(chart: &BoundaryChart, grid: &Grid) -> ChartData {
    let n = grid.dim();
    let mut grad = Vec::with_capacity(grid.len());
    let mut lap = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let y = grid.point(i);
        grad.push(chart.grad_h(&y[..n]));
        lap.push(chart.laplacian_h(&y[..n]));
    }
    ChartData { grad, lap }
}

/// `(d_{x_i} f) o Phi` by the physical stencil, for every grid point.
fn physical_first(f: ScalarFn, chart: &BoundaryChart, grid: &Grid, axis: usize) -> Result<Vec<f64>> {
    let n = grid.dim();
    let h = grid.spacing()[axis];
    let len = grid.shape()[axis];
    (0..grid.len())
        .map(|i| {
            let x = chart.flatten(&grid.point(i)[..n])?;
            let pos = grid.multi_index(i)[axis];
            Ok(physical_stencil(f, &x, n, axis, h, first_taps(pos, len), 1))
        })
        .collect()
}

fn physical_second(f: ScalarFn, chart: &BoundaryChart, grid: &Grid, axis: usize) -> Result<Vec<f64>> {
    let n = grid.dim();
    let h = grid.spacing()[axis];
    let len = grid.shape()[axis];
    (0..grid.len())
        .map(|i| {
            let x = chart.flatten(&grid.point(i)[..n])?;
            let pos = grid.multi_index(i)[axis];
            Ok(physical_stencil(f, &x, n, axis, h, second_taps(pos, len), 2))
        })
        .collect()
}

fn check_axis(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidArgument(format!("axis {i} out of range for dimension {n}")));
    }
    Ok(())
}

/// `(d_{y_i} - d_i h d_{y_n}) U`, or `d_{y_n} U` for the normal axis.
fn transformed_first(u: &GridField, data: &ChartData, i: usize) -> Result<Vec<f64>> {
    let n = u.grid().dim();
    let di = u.derivative(i)?;
    if i == n - 1 {
        return Ok(di.values().to_vec());
    }
    let dn = u.derivative(n - 1)?;
    Ok((0..di.values().len())
        .map(|p| di.values()[p] - data.grad[p][i] * dn.values()[p])
        .collect())
}

/// Relative residual of `(d_{x_i} f) o Phi = (d_{y_i} - (d_i h) d_{y_n}) (f o Phi)`.
pub fn derivative_identity_residual(f: ScalarFn, flat: &FlattenedField, i: usize) -> Result<f64> {
    let u = flat.scalar()?;
    let g = u.grid();
    check_axis(i, g.dim())?;
    let data = chart_data(&flat.chart, g);
    let lhs = physical_first(f, &flat.chart, g, i)?;
    let rhs = transformed_first(u, &data, i)?;
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(relative(sum_sq(&diff), sum_sq(&lhs)))
}

/// Relative residual of `(grad_x p) o Phi = grad_y P - (grad h) d_{y_n} P`
/// over all components.
pub fn gradient_identity_residual(p: ScalarFn, flat: &FlattenedField) -> Result<f64> {
    let u = flat.scalar()?;
    let g = u.grid();
    let data = chart_data(&flat.chart, g);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..g.dim() {
        let lhs = physical_first(p, &flat.chart, g, i)?;
        let rhs = transformed_first(u, &data, i)?;
        num += lhs.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        den += sum_sq(&lhs);
    }
    Ok(relative(num, den))
}

/// `Delta_y U - 2 grad h . grad' d_n U + |grad h|^2 d_nn U - (Delta h) d_n U`.
fn transformed_laplacian(u: &GridField, data: &ChartData) -> Result<Vec<f64>> {
    let n = u.grid().dim();
    let dn = u.derivative(n - 1)?;
    let dnn = u.second_derivative(n - 1)?;
    let mut out = dnn.values().to_vec();
    for i in 0..n - 1 {
        let dii = u.second_derivative(i)?;
        let din = dn.derivative(i)?;
        for (p, o) in out.iter_mut().enumerate() {
            let gi = data.grad[p][i];
            *o += dii.values()[p] - 2.0 * gi * din.values()[p] + gi * gi * dnn.values()[p];
        }
    }
    for (p, o) in out.iter_mut().enumerate() {
        *o -= data.lap[p] * dn.values()[p];
    }
    Ok(out)
}

/// Relative residual of the transformed Laplacian, scaled by the size of the
/// pure second derivatives (harmonic fields have `Delta u = 0`).
pub fn laplace_identity_residual(u: ScalarFn, flat: &FlattenedField) -> Result<f64> {
    let field = flat.scalar()?;
    let g = field.grid();
    let data = chart_data(&flat.chart, g);
    let rhs = transformed_laplacian(field, &data)?;
    let mut lhs = vec![0.0; g.len()];
    let mut scale = 0.0;
    for a in 0..g.dim() {
        let d = physical_second(u, &flat.chart, g, a)?;
        scale += sum_sq(&d);
        for (l, v) in lhs.iter_mut().zip(&d) {
            *l += v;
        }
    }
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(relative(sum_sq(&diff), scale))
}

/// Relative residual of `div_y U - grad h . d_{y_n} U' = 0` (tangential
/// components `U'`), scaled by the full gradient of `U`.
pub fn div_identity_residual(flat: &FlattenedField) -> Result<f64> {
    let comps = flat.vector()?;
    let g = comps[0].grid();
    let n = g.dim();
    let data = chart_data(&flat.chart, g);
    let mut res = vec![0.0; g.len()];
    let mut scale = 0.0;
    for (c, comp) in comps.iter().enumerate() {
        for a in 0..n {
            let d = comp.derivative(a)?;
            scale += sum_sq(d.values());
            if a == c {
                for (r, v) in res.iter_mut().zip(d.values()) {
                    *r += v;
                }
            }
            if a == n - 1 && c < n - 1 {
                for (p, r) in res.iter_mut().enumerate() {
                    *r -= data.grad[p][c] * d.values()[p];
                }
            }
        }
    }
    Ok(relative(sum_sq(&res), scale))
}

/// `d_{y_n} d_{y_n} P` of a harmonic pressure from tangential second
/// derivatives and first normal derivatives only:
///
/// ```text
/// (1 + |grad h|^2) d_nn P = -Delta' P + 2 grad h . grad' d_n P + (Delta h) d_n P.
/// ```
pub fn normal_hessian_recover(p: &FlattenedField) -> Result<GridField> {
    let u = p.scalar()?;
    let g = u.grid();
    let data = chart_data(&p.chart, g);
    let out = recover_with(u, &data)?;
    GridField::from_values(g, out)
}

fn recover_with(u: &GridField, data: &ChartData) -> Result<Vec<f64>> {
    let g = u.grid();
    let n = g.dim();
    let dn = u.derivative(n - 1)?;
    let mut rhs: Vec<f64> = (0..g.len()).map(|p| data.lap[p] * dn.values()[p]).collect();
    for i in 0..n - 1 {
        let dii = u.second_derivative(i)?;
        let din = dn.derivative(i)?;
        for (p, r) in rhs.iter_mut().enumerate() {
            *r += -dii.values()[p] + 2.0 * data.grad[p][i] * din.values()[p];
        }
    }
    Ok(rhs
        .iter()
        .enumerate()
        .map(|(p, r)| {
            let gr = data.grad[p];
            r / (1.0 + gr[0] * gr[0] + gr[1] * gr[1])
        })
        .collect())
}

/// `d_k d_nn P` from the tangentially differentiated recovery identity: the
/// recovery applied to `Q = d_k P` plus the terms from differentiating the
/// chart coefficients.
///
/// The two outermost layers along each tangential axis are masked out: there
/// a second difference of a one-sided first difference loses two orders.
/// The flattened boundary `y_n = 0` stays in.
pub fn normal_hessian_recover_tangential(p: &FlattenedField, k: usize) -> Result<GridField> {
    let u = p.scalar()?;
    let g = u.grid();
    let n = g.dim();
    if k + 1 >= n {
        return Err(Error::InvalidArgument(format!("k = {k} is not a tangential axis")));
    }
    let chart = &p.chart;
    let data = chart_data(chart, g);
    let q = u.derivative(k)?;
    let base = recover_with(&q, &data)?;
    let pnn = recover_with(u, &data)?;
    let dn = u.derivative(n - 1)?;
    let mut out = Vec::with_capacity(g.len());
    let mixed: Vec<GridField> = (0..n - 1).map(|i| dn.derivative(i)).collect::<Result<_>>()?;
    for idx in 0..g.len() {
        let y = g.point(idx);
        let gr = data.grad[idx];
        let a = 1.0 + gr[0] * gr[0] + gr[1] * gr[1];
        let mut extra = 0.0;
        let mut a_k = 0.0;
        let mut lap_k = 0.0;
        for (i, mix) in mixed.iter().enumerate() {
            let hik = chart.hessian_h(&y[..n], i, k);
            extra += 2.0 * hik * mix.values()[idx];
            a_k += 2.0 * gr[i] * hik;
            let mut alpha = [0u32; 2];
            alpha[i] += 2;
            alpha[k] += 1;
            lap_k += chart.derivative(&y[..n], &alpha);
        }
        extra += lap_k * dn.values()[idx] - a_k * pnn[idx];
        out.push(base[idx] + extra / a);
    }
    let mask = (0..g.len())
        .map(|idx| {
            let m = g.multi_index(idx);
            (0..n - 1).all(|i| m[i] >= 2 && m[i] + 2 < g.shape()[i])
        })
        .collect();
    GridField::from_values(g, out)?.with_mask(mask)
}

/// Settings for the localized construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedConfig {
    pub bogovskii: BogovskiiConfig,
    /// Bound on `|∫ g| / ∫ |g|` for the Bogovskii input `g`.
    pub zero_mean_tolerance: f64,
    /// If set, `sup |grad h| <= delta` on `U_{2 rho}` is re-checked.
    pub delta: Option<f64>,
}

impl Default for LocalizedConfig {
    fn default() -> Self {
        LocalizedConfig {
            bogovskii: BogovskiiConfig::default(),
            zero_mean_tolerance: 1e-3,
            delta: None,
        }
    }
}

/// Cell grid on `(-2 rho, 2 rho)^{n-1} x (0, 2 rho)` with `cells` cells
/// across the normal direction and twice as many along each tangential axis.
pub fn localized_grid(dim: usize, rho: f64, cells: usize) -> Result<Grid> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if cells < 4 {
        return Err(Error::GridTooCoarse(format!("need at least 4 cells, got {cells}")));
    }
    let mut lower = vec![-2.0 * rho; dim];
    let upper = vec![2.0 * rho; dim];
    lower[dim - 1] = 0.0;
    let mut shape = vec![2 * cells; dim];
    shape[dim - 1] = cells;
    Grid::cells(&lower, &upper, &shape)
}

/// The box `(-2 rho, 2 rho)^{n-1} x (0, 2 rho)` holding `U_{2 rho}^+`.
pub fn localized_domain(dim: usize, rho: f64) -> Result<StarDomain> {
    let mut half = vec![2.0; dim];
    half[dim - 1] = 1.0;
    let mut center = vec![0.0; dim];
    center[dim - 1] = rho;
    StarDomain::new(dim, Shape::Cuboid { half_extents: half }, &center, rho)
}

/// One time level of the localized system.
#[derive(Clone, Debug)]
pub struct LocalizedSlice {
    /// `zeta U`.
    pub u_tilde: VectorField,
    /// Bogovskii inputs `zeta grad h . d_n U'` and `grad zeta . U`.
    pub g1: GridField,
    pub g2: GridField,
    pub z1: VectorField,
    pub z2: VectorField,
    /// `d_k (u_tilde - z1 - z2)`.
    pub v: VectorField,
    /// `d_k (zeta (P - mean P))`.
    pub pi: GridField,
    /// Mean of `P` over the annulus `rho <= |y| <= 2 rho`.
    pub p_mean: f64,
    /// `|∫ (g1 + g2)| / (∫ |g1| + ∫ |g2|)`.
    pub zero_mean_defect: f64,
}

/// `V`, `Pi` and their ingredients on the grid of [`localized_grid`].
#[derive(Clone, Debug)]
pub struct LocalizedSystem {
    pub chart: BoundaryChart,
    pub cutoff: Cutoff,
    pub k: usize,
    pub dt: f64,
    pub u: Vec<FlattenedField>,
    pub p: Vec<FlattenedField>,
    pub slices: Vec<LocalizedSlice>,
}

struct CutoffData {
    value: Vec<f64>,
    grad: Vec<Vec<f64>>,
    lap: Vec<f64>,
}

fn cutoff_data(cutoff: &Cutoff, grid: &Grid) -> CutoffData {
    let n = grid.dim();
    let mut d = CutoffData {
        value: Vec::with_capacity(grid.len()),
        grad: Vec::with_capacity(grid.len()),
        lap: Vec::with_capacity(grid.len()),
    };
    for i in 0..grid.len() {
        let y = grid.point(i);
        d.value.push(cutoff.value(&y[..n]));
        d.grad.push(cutoff.gradient(&y[..n]));
        d.lap.push(cutoff.laplacian(&y[..n]));
    }
    d
}

fn scalar(grid: &Grid, v: Vec<f64>) -> Result<GridField> {
    GridField::from_values(grid, v)
}

fn dk_vector(v: &VectorField, k: usize) -> Result<VectorField> {
    Ok(VectorField::new(
        v.components.iter().map(|c| c.derivative(k)).collect::<Result<Vec<_>>>()?,
    ))
}

/// Builds `V` and `Pi` for a single time level.
pub fn build_localized(
    u: &FlattenedField,
    p: &FlattenedField,
    cutoff: &Cutoff,
    k: usize,
    cfg: &LocalizedConfig,
) -> Result<LocalizedSystem> {
    let us = SpaceTimeField::new(1.0, vec![u.clone()])?;
    let ps = SpaceTimeField::new(1.0, vec![p.clone()])?;
    build_localized_series(&us, &ps, cutoff, k, cfg)
}

/// Builds `V` and `Pi` at every time level of `u`, `p`.
///
/// In 2D the angular order of the near-field quadrature is raised to at
/// least twice the number of normal cells.
pub fn build_localized_series(
    u: &SpaceTimeField<FlattenedField>,
    p: &SpaceTimeField<FlattenedField>,
    cutoff: &Cutoff,
    k: usize,
    cfg: &LocalizedConfig,
) -> Result<LocalizedSystem> {
    let first = u
        .slices
        .first()
        .ok_or_else(|| Error::InvalidArgument("no time levels".into()))?;
    if u.len() != p.len() {
        return Err(Error::InvalidArgument("velocity and pressure have different time levels".into()));
    }
    let chart = first.chart.clone();
    let grid = first.grid().clone();
    let n = grid.dim();
    if k + 1 >= n {
        return Err(Error::InvalidArgument(format!("k = {k} is not a tangential index")));
    }
    let rho = cutoff.inner_radius();
    if cutoff.value(&vec![0.0; n]) != 1.0 {
        return Err(Error::InvalidArgument("the cutoff must be centred at the origin".into()));
    }
    let expected = localized_grid(n, rho, grid.shape()[n - 1])?;
    if grid != expected {
        return Err(Error::InvalidArgument(
            "fields must be sampled on localized_grid(dim, rho, cells)".into(),
        ));
    }
    if let Some(delta) = cfg.delta {
        let sup = sup_grad_h(&chart, 2.0 * rho, 256, 64);
        if sup > delta {
            return Err(Error::InvalidArgument(format!(
                "sup |grad h| = {sup} on U_2rho exceeds delta = {delta}"
            )));
        }
    }
    let domain = localized_domain(n, rho)?;
    let mut bcfg = cfg.bogovskii.clone();
    if n == 2 {
        // Rays cut by the box give kinks in the angular integrand; keep the
        // angular step proportional to the grid spacing.
        bcfg.angular_order = bcfg.angular_order.max(2 * grid.shape()[1]);
    }
    let op = ScaledBogovskii::new(&domain, &bcfg)?;
    let data = chart_data(&chart, &grid);
    let zeta = cutoff_data(cutoff, &grid);
    let annulus: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let y = grid.point(i);
            let r = y[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            r >= rho && r <= 2.0 * rho
        })
        .collect();
    if annulus.is_empty() {
        return Err(Error::EmptyRegion("no grid points in the cutoff annulus".into()));
    }

    let mut slices = Vec::with_capacity(u.len());
    for (uf, pf) in u.slices.iter().zip(&p.slices) {
        if uf.grid() != &grid || pf.grid() != &grid {
            return Err(Error::InvalidArgument("all time levels must share one grid".into()));
        }
        let comps = uf.vector()?;
        let pres = pf.scalar()?;
        let len = grid.len();

        let u_tilde = VectorField::new(
            comps
                .iter()
                .map(|c| scalar(&grid, (0..len).map(|i| zeta.value[i] * c.values()[i]).collect()))
                .collect::<Result<Vec<_>>>()?,
        );
        let mut g1 = vec![0.0; len];
        for (c, comp) in comps.iter().enumerate().take(n - 1) {
            let dn = comp.derivative(n - 1)?;
            for (i, g) in g1.iter_mut().enumerate() {
                *g += zeta.value[i] * data.grad[i][c] * dn.values()[i];
            }
        }
        let g2: Vec<f64> = (0..len)
            .map(|i| (0..n).map(|a| zeta.grad[i][a] * comps[a].values()[i]).sum())
            .collect();
        let total: f64 = g1.iter().zip(&g2).map(|(a, b)| a + b).sum();
        let mass: f64 = g1.iter().chain(&g2).map(|v| v.abs()).sum();
        let defect = if total == 0.0 { 0.0 } else { total.abs() / mass };
        if defect > cfg.zero_mean_tolerance {
            return Err(Error::ZeroMeanViolated {
                integral: total * grid.cell_volume(),
                tolerance: cfg.zero_mean_tolerance,
            });
        }
        let g1 = scalar(&grid, g1)?;
        let g2 = scalar(&grid, g2)?;
        let z1 = if g1.max_abs() == 0.0 {
            VectorField::zeros(&grid, n)
        } else {
            op.apply(&g1)?
        };
        let z2 = if g2.max_abs() == 0.0 {
            VectorField::zeros(&grid, n)
        } else {
            op.apply(&g2)?
        };
        let w = u_tilde.combine(1.0, &z1, -1.0)?.combine(1.0, &z2, -1.0)?;
        let v = dk_vector(&w, k)?;
        let p_mean = annulus.iter().map(|&i| pres.values()[i]).sum::<f64>() / annulus.len() as f64;
        let zp = scalar(&grid, (0..len).map(|i| zeta.value[i] * (pres.values()[i] - p_mean)).collect())?;
        let pi = zp.derivative(k)?;
        slices.push(LocalizedSlice {
            u_tilde,
            g1,
            g2,
            z1,
            z2,
            v,
            pi,
            p_mean,
            zero_mean_defect: defect,
        });
    }
    Ok(LocalizedSystem {
        chart,
        cutoff: *cutoff,
        k,
        dt: u.dt,
        u: u.slices.clone(),
        p: p.slices.clone(),
        slices,
    })
}

fn divergence(v: &VectorField) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.components[0].values().len()];
    for (a, c) in v.components.iter().enumerate() {
        let d = c.derivative(a)?;
        for (o, x) in out.iter_mut().zip(d.values()) {
            *o += x;
        }
    }
    Ok(out)
}

fn gradient_scale(v: &VectorField) -> Result<f64> {
    let n = v.len();
    let mut s = 0.0;
    for c in &v.components {
        for a in 0..n {
            s += sum_sq(c.derivative(a)?.values());
        }
    }
    Ok(s)
}

/// `||div_h V|| / ||grad_h V||`, the largest over the time levels.
pub fn localized_div_residual(sys: &LocalizedSystem) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in &sys.slices {
        let div = divergence(&s.v)?;
        worst = worst.max(relative(sum_sq(&div), gradient_scale(&s.v)?));
    }
    Ok(worst)
}

/// The six forcing terms of the localized momentum equation at one time level.
#[derive(Clone, Debug)]
pub struct GTerms {
    /// `d_k ((P - mean P) grad zeta)`.
    pub g1: VectorField,
    /// `-d_k (2 grad zeta . grad U + (Delta zeta) U)`.
    pub g2: VectorField,
    /// `-d_k (d_t z1 - Delta z1)`.
    pub g3: VectorField,
    /// `-d_k (d_t z2 - Delta z2)`.
    pub g4: VectorField,
    /// `d_k (zeta (d_n P) grad h - 2 zeta grad h . grad' d_n U + zeta |grad h|^2 d_nn U)`.
    pub g5: VectorField,
    /// `d_k (-zeta (Delta h) d_n U + zeta F)`.
    pub g6: VectorField,
}

impl GTerms {
    pub fn sum(&self) -> Result<VectorField> {
        self.g1
            .combine(1.0, &self.g2, 1.0)?
            .combine(1.0, &self.g3, 1.0)?
            .combine(1.0, &self.g4, 1.0)?
            .combine(1.0, &self.g5, 1.0)?
            .combine(1.0, &self.g6, 1.0)
    }
}

fn laplacian(c: &GridField) -> Result<GridField> {
    let mut acc = c.second_derivative(0)?;
    for a in 1..c.grid().dim() {
        acc = acc.add(&c.second_derivative(a)?)?;
    }
    Ok(acc)
}

fn time_derivative(prev: &VectorField, next: &VectorField, dt: f64) -> Result<VectorField> {
    next.combine(0.5 / dt, prev, -0.5 / dt)
}

fn heat_part(prev: &VectorField, cur: &VectorField, next: &VectorField, dt: f64) -> Result<VectorField> {
    let dtz = time_derivative(prev, next, dt)?;
    let lap = VectorField::new(cur.components.iter().map(laplacian).collect::<Result<Vec<_>>>()?);
    dtz.combine(1.0, &lap, -1.0)
}

/// The terms `G_1 .. G_6` at interior time level `m` (centred time
/// differences need `m - 1` and `m + 1`). `f` is the pulled-back forcing.
pub fn g_terms(sys: &LocalizedSystem, f: &FlattenedField, m: usize) -> Result<GTerms> {
    if m == 0 || m + 1 >= sys.slices.len() {
        return Err(Error::InvalidArgument(format!(
            "time level {m} has no neighbours among {} levels",
            sys.slices.len()
        )));
    }
    let grid = sys.u[m].grid().clone();
    let n = grid.dim();
    let len = grid.len();
    let k = sys.k;
    let dt = sys.dt;
    let data = chart_data(&sys.chart, &grid);
    let zeta = cutoff_data(&sys.cutoff, &grid);
    let u = sys.u[m].vector()?;
    let p = sys.p[m].scalar()?;
    let fc = f.vector()?;
    let s = &sys.slices[m];
    let build = |rows: Vec<Vec<f64>>| -> Result<VectorField> {
        let v = VectorField::new(rows.into_iter().map(|r| scalar(&grid, r)).collect::<Result<Vec<_>>>()?);
        dk_vector(&v, k)
    };

    let g1 = build(
        (0..n)
            .map(|a| (0..len).map(|i| (p.values()[i] - s.p_mean) * zeta.grad[i][a]).collect())
            .collect(),
    )?;

    let mut rows2 = Vec::with_capacity(n);
    let mut rows5 = Vec::with_capacity(n);
    let mut rows6 = Vec::with_capacity(n);
    let dnp = p.derivative(n - 1)?;
    for (c, comp) in u.iter().enumerate() {
        let grads: Vec<GridField> = (0..n).map(|a| comp.derivative(a)).collect::<Result<_>>()?;
        let dnn = comp.second_derivative(n - 1)?;
        let mixed: Vec<GridField> = (0..n - 1).map(|i| grads[n - 1].derivative(i)).collect::<Result<_>>()?;
        let mut r2 = vec![0.0; len];
        let mut r5 = vec![0.0; len];
        let mut r6 = vec![0.0; len];
        for i in 0..len {
            let mut dot = 0.0;
            for (a, gr) in grads.iter().enumerate() {
                dot += zeta.grad[i][a] * gr.values()[i];
            }
            r2[i] = -(2.0 * dot + zeta.lap[i] * comp.values()[i]);
            let gh = data.grad[i];
            let mut t = 0.0;
            if c < n - 1 {
                t += dnp.values()[i] * gh[c];
            }
            for (j, mx) in mixed.iter().enumerate() {
                t -= 2.0 * gh[j] * mx.values()[i];
            }
            t += (gh[0] * gh[0] + gh[1] * gh[1]) * dnn.values()[i];
            r5[i] = zeta.value[i] * t;
            r6[i] = zeta.value[i] * (-data.lap[i] * grads[n - 1].values()[i] + fc[c].values()[i]);
        }
        rows2.push(r2);
        rows5.push(r5);
        rows6.push(r6);
    }
    let g2 = build(rows2)?;
    let g5 = build(rows5)?;
    let g6 = build(rows6)?;
    let (prev, next) = (&sys.slices[m - 1], &sys.slices[m + 1]);
    let g3 = dk_vector(&heat_part(&prev.z1, &s.z1, &next.z1, dt)?, k)?.scaled(-1.0);
    let g4 = dk_vector(&heat_part(&prev.z2, &s.z2, &next.z2, dt)?, k)?.scaled(-1.0);
    Ok(GTerms { g1, g2, g3, g4, g5, g6 })
}

/// Relative residual of `d_t V - Delta_h V + grad_h Pi - sum G_i`, the
/// largest over interior time levels; `f` holds the pulled-back forcing at
/// every level.
pub fn momentum_residual(sys: &LocalizedSystem, f: &[FlattenedField]) -> Result<f64> {
    if f.len() != sys.slices.len() {
        return Err(Error::InvalidArgument("forcing needs one level per time level".into()));
    }
    if sys.slices.len() < 3 {
        return Err(Error::InvalidArgument("momentum check needs at least 3 time levels".into()));
    }
    let dt = sys.dt;
    let mut worst = 0.0f64;
    for m in 1..sys.slices.len() - 1 {
        let s = &sys.slices[m];
        let heat = heat_part(&sys.slices[m - 1].v, &s.v, &sys.slices[m + 1].v, dt)?;
        let n = s.v.len();
        let grad_pi = VectorField::new((0..n).map(|a| s.pi.derivative(a)).collect::<Result<Vec<_>>>()?);
        let g = g_terms(sys, &f[m], m)?.sum()?;
        let res = heat.combine(1.0, &grad_pi, 1.0)?.combine(1.0, &g, -1.0)?;
        let scale = heat.norm_l2() + grad_pi.norm_l2();
        worst = worst.max(relative(res.norm_l2().powi(2), scale * scale));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_grid_covers_the_half_patch() {
        let chart = BoundaryChart::flat(2, 1.0).unwrap();
        let g = flat_grid(&chart, 8).unwrap();
        assert_eq!(g.shape(), &[9, 9]);
        assert_eq!(g.lower()[1], 0.0);
        assert!((g.upper()[0] - 1.0).abs() < 1e-15);
        assert!(flat_grid(&chart, 2).is_err());
    }

    #[test]
    fn pullback_rejects_points_outside_the_data() {
        let chart = BoundaryChart::quadratic(2, 1.0, 0.5).unwrap();
        let g = flat_grid(&chart, 8).unwrap();
        let phys = Grid::nodes(&[-1.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap();
        let f = GridField::from_fn(&phys, |x| x[0]);
        assert!(matches!(pullback(&[f], &chart, &g), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn flat_identities_hold_to_rounding() {
        let chart = BoundaryChart::flat(2, 1.0).unwrap();
        let g = flat_grid(&chart, 16).unwrap();
        let f = |x: &[f64]| (x[0] * 1.3).sin() * (x[1] + 0.2).exp();
        let flat = pullback_fn(&|x| vec![f(x)], 1, &chart, &g).unwrap();
        for i in 0..2 {
            assert!(derivative_identity_residual(&f, &flat, i).unwrap() < 1e-12);
        }
        assert!(gradient_identity_residual(&f, &flat).unwrap() < 1e-12);
        assert!(laplace_identity_residual(&f, &flat).unwrap() < 1e-12);
    }

    #[test]
    fn localized_rejects_normal_k_and_wrong_grid() {
        let chart = BoundaryChart::flat(2, 1.0).unwrap();
        let cut = Cutoff::centered(0.2, &[]).unwrap();
        let g = localized_grid(2, 0.2, 8).unwrap();
        let u = pullback_fn(&|_| vec![0.0, 0.0], 2, &chart, &g).unwrap();
        let p = pullback_fn(&|_| vec![0.0], 1, &chart, &g).unwrap();
        let cfg = LocalizedConfig::default();
        assert!(build_localized(&u, &p, &cut, 1, &cfg).is_err());
        let other = Cutoff::centered(0.25, &[]).unwrap();
        assert!(build_localized(&u, &p, &other, 0, &cfg).is_err());
        let sys = build_localized(&u, &p, &cut, 0, &cfg).unwrap();
        assert_eq!(localized_div_residual(&sys).unwrap(), 0.0);
        assert_eq!(sys.slices[0].v.max_abs(), 0.0);
    }
}
