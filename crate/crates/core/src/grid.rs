//! Uniform grids and the sampled fields that live on them.
//!
//! A [`Grid`] is a tensor-product lattice in one to three dimensions; unused
//! trailing axes have extent one. Staggered (MAC) layouts are expressed by
//! giving each velocity component its own grid with a shifted origin, so no
//! separate "centering" tag is needed.

use std::sync::Arc;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A point in up to three dimensions; coordinates beyond `dim` are zero.
pub type Point = [f64; MAX_DIM];

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    shape: [usize; MAX_DIM],
    origin: Point,
    spacing: Point,
}

impl Grid {
    pub fn new(shape: &[usize], origin: &[f64], spacing: &[f64]) -> Result<Self> {
        let dim = shape.len();
        if !(1..=MAX_DIM).contains(&dim) || origin.len() != dim || spacing.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "grid needs 1..=3 axes with matching origin/spacing, got {} / {} / {}",
                shape.len(),
                origin.len(),
                spacing.len()
            )));
        }
        let mut g = Grid {
            dim,
            shape: [1; MAX_DIM],
            origin: [0.0; MAX_DIM],
            spacing: [1.0; MAX_DIM],
        };
        for a in 0..dim {
            if shape[a] == 0 {
                return Err(Error::InvalidArgument("grid axis with zero points".into()));
            }
            if !(spacing[a] > 0.0 && spacing[a].is_finite()) {
                return Err(Error::InvalidArgument(format!("non-positive spacing {}", spacing[a])));
            }
            g.shape[a] = shape[a];
            g.origin[a] = origin[a];
            g.spacing[a] = spacing[a];
        }
        Ok(g)
    }

    /// Node-centred grid: `n[a]` points from `lower[a]` to `upper[a]` inclusive.
    pub fn nodes(lower: &[f64], upper: &[f64], n: &[usize]) -> Result<Self> {
        let spacing: Vec<f64> = (0..n.len())
            .map(|a| {
                if n[a] < 2 {
                    f64::NAN
                } else {
                    (upper[a] - lower[a]) / (n[a] - 1) as f64
                }
            })
            .collect();
        Grid::new(n, lower, &spacing)
    }

    /// Cell-centred grid: `n[a]` cells tiling `[lower[a], upper[a]]`.
    pub fn cells(lower: &[f64], upper: &[f64], n: &[usize]) -> Result<Self> {
        let spacing: Vec<f64> = (0..n.len()).map(|a| (upper[a] - lower[a]) / n[a] as f64).collect();
        let origin: Vec<f64> = (0..n.len()).map(|a| lower[a] + 0.5 * spacing[a]).collect();
        Grid::new(n, &origin, &spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        [1, self.shape[0], self.shape[0] * self.shape[1]]
    }

    #[inline]
    pub fn linear_index(&self, m: [usize; MAX_DIM]) -> usize {
        m[0] + self.shape[0] * (m[1] + self.shape[1] * m[2])
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let i0 = idx % self.shape[0];
        let rest = idx / self.shape[0];
        [i0, rest % self.shape[1], rest / self.shape[1]]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = self.origin[a] + m[a] as f64 * self.spacing[a];
        }
        p
    }

    pub fn lower(&self) -> Point {
        let mut p = [0.0; MAX_DIM];
        p[..self.dim].copy_from_slice(&self.origin[..self.dim]);
        p
    }

    pub fn upper(&self) -> Point {
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = self.origin[a] + (self.shape[a] - 1) as f64 * self.spacing[a];
        }
        p
    }

    /// Image of the grid under `x -> (x - center) / factor`.
    pub fn mapped(&self, center: &[f64], factor: f64) -> Grid {
        let mut g = self.clone();
        for a in 0..self.dim {
            g.origin[a] = (self.origin[a] - center[a]) / factor;
            g.spacing[a] = self.spacing[a] / factor;
        }
        g
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Integration or selection region, evaluated pointwise so it applies to any
/// staggering.
#[derive(Clone)]
pub enum Region {
    All,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Predicate(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl std::fmt::Debug for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::All => write!(f, "All"),
            Region::Box { lower, upper } => write!(f, "Box({lower:?}, {upper:?})"),
            Region::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Region::Predicate(_) => write!(f, "Predicate"),
        }
    }
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        match self {
            Region::All => true,
            Region::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .zip(x)
                .all(|((l, u), v)| *v >= l - SLACK && *v <= u + SLACK),
            Region::Ball { center, radius } => {
                let r2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                r2 <= radius * radius * (1.0 + SLACK)
            }
            Region::Predicate(p) => p(x),
        }
    }
}

/// Scalar samples on a grid with an optional validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl GridField {
    pub fn zeros(grid: &Grid) -> Self {
        GridField {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
            mask: None,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(GridField {
            grid: grid.clone(),
            values,
            mask: None,
        })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        GridField {
            grid: grid.clone(),
            values,
            mask: None,
        }
    }

    /// Marks samples valid where `pred` holds; invalid samples are zeroed.
    pub fn with_mask_fn(mut self, pred: impl Fn(&[f64]) -> bool) -> Self {
        let d = self.grid.dim();
        let mask: Vec<bool> = (0..self.grid.len()).map(|i| pred(&self.grid.point(i)[..d])).collect();
        for (v, m) in self.values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        self
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::InvalidArgument("mask length mismatch".into()));
        }
        for (v, m) in self.values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[idx])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("fields live on different grids".into()));
        }
        Ok(())
    }

    fn merged_mask(&self, other: &GridField) -> Option<Vec<bool>> {
        match (&self.mask, &other.mask) {
            (None, None) => None,
            (Some(m), None) | (None, Some(m)) => Some(m.clone()),
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| *x && *y).collect()),
        }
    }

    /// `a * self + b * other`
    pub fn combine(&self, a: f64, other: &GridField, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(GridField {
            grid: self.grid.clone(),
            values,
            mask: self.merged_mask(other),
        })
    }

    pub fn add(&self, other: &GridField) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GridField) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn mul(&self, other: &GridField) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect();
        Ok(GridField {
            grid: self.grid.clone(),
            values,
            mask: self.merged_mask(other),
        })
    }

    /// Discrete L2 norm over valid samples (cell volume times sample).
    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_valid(*i))
            .map(|(_, v)| v * v)
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_valid(*i))
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_valid(*i))
            .map(|(_, v)| *v)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn dot(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(i, _)| self.is_valid(*i) && other.is_valid(*i))
            .map(|(_, (a, b))| a * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    fn axis_check(&self, axis: usize, min_points: usize) -> Result<()> {
        if axis >= self.grid.dim() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        if self.grid.shape[axis] < min_points {
            return Err(Error::GridTooCoarse(format!(
                "axis {axis} has {} points, stencil needs {min_points}",
                self.grid.shape[axis]
            )));
        }
        Ok(())
    }

    /// Applies a per-line stencil along `axis`. `stencil(pos, len)` returns
    /// the offsets and weights used at line position `pos`.
    fn line_stencil(
        &self,
        axis: usize,
        scale: f64,
        stencil: impl Fn(usize, usize) -> Option<&'static [(isize, f64)]>,
    ) -> GridField {
        let stride = self.grid.strides()[axis] as isize;
        let len = self.grid.shape[axis];
        let mut values = vec![0.0; self.values.len()];
        let mut mask = vec![true; self.values.len()];
        let any_mask = self.mask.is_some();
        let mut all_valid = true;
        for (idx, out) in values.iter_mut().enumerate() {
            let pos = self.grid.multi_index(idx)[axis];
            match stencil(pos, len) {
                Some(taps) => {
                    let mut acc = 0.0;
                    let mut ok = true;
                    for &(off, w) in taps {
                        let j = (idx as isize + off * stride) as usize;
                        ok &= self.is_valid(j);
                        acc += w * self.values[j];
                    }
                    if ok {
                        *out = acc * scale;
                    } else {
                        mask[idx] = false;
                        all_valid = false;
                    }
                }
                None => {
                    mask[idx] = false;
                    all_valid = false;
                }
            }
        }
        GridField {
            grid: self.grid.clone(),
            values,
            mask: if any_mask || !all_valid { Some(mask) } else { None },
        }
    }

    /// Second-order first derivative: centred in the interior, one-sided
    /// three-point at the ends of each line.
    pub fn derivative(&self, axis: usize) -> Result<GridField> {
        self.axis_check(axis, 3)?;
        let h = self.grid.spacing[axis];
        Ok(self.line_stencil(axis, 1.0 / h, |pos, len| Some(first_taps(pos, len))))
    }

    /// Second-order second derivative: centred three-point in the interior,
    /// one-sided four-point at the ends.
    pub fn second_derivative(&self, axis: usize) -> Result<GridField> {
        self.axis_check(axis, 4)?;
        let h = self.grid.spacing[axis];
        Ok(self.line_stencil(axis, 1.0 / (h * h), |pos, len| Some(second_taps(pos, len))))
    }

    /// Fourth-order centred first derivative; samples within two points of a
    /// line end are marked invalid.
    pub fn derivative_centered4(&self, axis: usize) -> Result<GridField> {
        self.axis_check(axis, 5)?;
        const CENTER: [(isize, f64); 4] = [
            (-2, 1.0 / 12.0),
            (-1, -8.0 / 12.0),
            (1, 8.0 / 12.0),
            (2, -1.0 / 12.0),
        ];
        let h = self.grid.spacing[axis];
        Ok(self.line_stencil(axis, 1.0 / h, |pos, len| {
            if pos < 2 || pos + 2 >= len {
                None
            } else {
                Some(&CENTER[..])
            }
        }))
    }

    /// Second-order centred first derivative without boundary closures.
    pub fn derivative_centered(&self, axis: usize) -> Result<GridField> {
        self.axis_check(axis, 3)?;
        const CENTER: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
        let h = self.grid.spacing[axis];
        Ok(self.line_stencil(axis, 1.0 / h, |pos, len| {
            if pos == 0 || pos + 1 == len {
                None
            } else {
                Some(&CENTER[..])
            }
        }))
    }

    /// Multilinear interpolation at `x`.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let d = g.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..d {
            let t = (x[a] - g.origin[a]) / g.spacing[a];
            let n = g.shape[a];
            let tol = 1e-9;
            if t < -tol || t > (n - 1) as f64 + tol || n < 2 {
                return Err(Error::OutsideDomain {
                    point: x[..d].to_vec(),
                    region: "grid bounding box".into(),
                });
            }
            let t = t.clamp(0.0, (n - 1) as f64);
            let i0 = (t.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = t - i0 as f64;
        }
        let strides = g.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx += (base[a] + bit) * strides[a];
            }
            if w == 0.0 {
                continue;
            }
            if !self.is_valid(idx) {
                return Err(Error::OutsideDomain {
                    point: x[..d].to_vec(),
                    region: "valid samples of the field".into(),
                });
            }
            acc += w * self.values[idx];
        }
        Ok(acc)
    }
}

/// Offsets and weights (per unit spacing) of the second-order first
/// derivative at position `pos` of a line with `len >= 3` points.
pub(crate) fn first_taps(pos: usize, len: usize) -> &'static [(isize, f64)] {
    const LEFT: [(isize, f64); 3] = [(0, -1.5), (1, 2.0), (2, -0.5)];
    const CENTER: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
    const RIGHT: [(isize, f64); 3] = [(0, 1.5), (-1, -2.0), (-2, 0.5)];
    if pos == 0 {
        &LEFT
    } else if pos + 1 == len {
        &RIGHT
    } else {
        &CENTER
    }
}

/// Same for the second derivative, `len >= 4`.
pub(crate) fn second_taps(pos: usize, len: usize) -> &'static [(isize, f64)] {
    const LEFT: [(isize, f64); 4] = [(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)];
    const CENTER: [(isize, f64); 3] = [(-1, 1.0), (0, -2.0), (1, 1.0)];
    const RIGHT: [(isize, f64); 4] = [(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)];
    if pos == 0 {
        &LEFT
    } else if pos + 1 == len {
        &RIGHT
    } else {
        &CENTER
    }
}

/// A vector field as a list of scalar components, each possibly staggered.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub components: Vec<GridField>,
}

impl VectorField {
    pub fn new(components: Vec<GridField>) -> Self {
        VectorField { components }
    }

    pub fn zeros(grid: &Grid, n: usize) -> Self {
        VectorField {
            components: vec![GridField::zeros(grid); n],
        }
    }

    pub fn from_fn(grid: &Grid, n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let d = grid.dim();
        let samples: Vec<Vec<f64>> = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        let components = (0..n)
            .map(|c| GridField {
                grid: grid.clone(),
                values: samples.iter().map(|s| s[c]).collect(),
                mask: None,
            })
            .collect();
        VectorField { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn norm_l2(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.norm_l2().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        VectorField {
            components: self.components.iter().map(|c| c.scaled(a)).collect(),
        }
    }

    pub fn combine(&self, a: f64, other: &VectorField, b: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::InvalidArgument("component count mismatch".into()));
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.combine(a, y, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { components })
    }

    pub fn dot(&self, other: &VectorField) -> Result<f64> {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    /// Divergence with [`GridField::derivative`]; all components must share a grid.
    pub fn divergence(&self) -> Result<GridField> {
        let mut acc: Option<GridField> = None;
        for (a, c) in self.components.iter().enumerate() {
            let d = c.derivative(a)?;
            acc = Some(match acc {
                None => d,
                Some(s) => s.add(&d)?,
            });
        }
        acc.ok_or_else(|| Error::InvalidArgument("empty vector field".into()))
    }
}

/// Time-indexed samples `slices[m]` at `t = (m + 1) * dt`, `m = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField<T> {
    pub dt: f64,
    pub slices: Vec<T>,
}

impl<T> SpaceTimeField<T> {
    pub fn new(dt: f64, slices: Vec<T>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(SpaceTimeField { dt, slices })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.slices.len() as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.slices.len()).map(move |m| m as f64 * self.dt)
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SpaceTimeField<U> {
        SpaceTimeField {
            dt: self.dt,
            slices: self.slices.iter().map(f).collect(),
        }
    }

    pub fn try_map<U>(&self, f: impl Fn(&T) -> Result<U>) -> Result<SpaceTimeField<U>> {
        Ok(SpaceTimeField {
            dt: self.dt,
            slices: self.slices.iter().map(f).collect::<Result<Vec<_>>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> Grid {
        Grid::nodes(&[0.0, 0.0], &[1.0, 1.0], &[n, n]).unwrap()
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::nodes(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], &[4, 5, 6]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.linear_index(g.multi_index(i)), i);
        }
        assert_eq!(g.upper(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn cell_grid_centres() {
        let g = Grid::cells(&[0.0], &[1.0], &[4]).unwrap();
        assert_eq!(g.point(0)[0], 0.125);
        assert_eq!(g.point(3)[0], 0.875);
    }

    #[test]
    fn derivatives_exact_on_quadratics() {
        let g = grid2(7);
        let f = GridField::from_fn(&g, |x| 3.0 * x[0] * x[0] - x[0] * x[1] + 2.0 * x[1]);
        let fx = f.derivative(0).unwrap();
        let fxx = f.second_derivative(0).unwrap();
        for i in 0..g.len() {
            let p = g.point(i);
            assert!((fx.values()[i] - (6.0 * p[0] - p[1])).abs() < 1e-11);
            assert!((fxx.values()[i] - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn centered4_exact_on_quartics() {
        let g = grid2(9);
        let f = GridField::from_fn(&g, |x| x[0].powi(4));
        let d = f.derivative_centered4(0).unwrap();
        let mask = d.mask().unwrap();
        for i in 0..g.len() {
            if mask[i] {
                let x = g.point(i)[0];
                assert!((d.values()[i] - 4.0 * x.powi(3)).abs() < 1e-11);
            }
        }
        assert_eq!(mask.iter().filter(|m| **m).count(), 5 * 9);
    }

    #[test]
    fn interpolation_exact_on_bilinear() {
        let g = grid2(5);
        let f = GridField::from_fn(&g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]);
        let v = f.interpolate(&[0.33, 0.71]).unwrap();
        assert!((v - (1.0 + 0.66 - 0.71 + 0.5 * 0.33 * 0.71)).abs() < 1e-14);
        assert!(f.interpolate(&[1.2, 0.5]).is_err());
    }

    #[test]
    fn masked_interpolation_rejects_invalid_corners() {
        let g = grid2(5);
        let f = GridField::from_fn(&g, |_| 1.0).with_mask_fn(|x| x[0] < 0.5);
        assert!(f.interpolate(&[0.1, 0.1]).is_ok());
        assert!(f.interpolate(&[0.6, 0.1]).is_err());
    }

    #[test]
    fn region_membership() {
        let b = Region::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        assert!(b.contains(&[0.6, 0.8]));
        assert!(!b.contains(&[0.8, 0.8]));
        let r = Region::Box {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 2.0],
        };
        assert!(r.contains(&[1.0, 2.0]));
        assert!(!r.contains(&[1.1, 0.0]));
    }
}
