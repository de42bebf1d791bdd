//! Extension to a large periodic box and the spectral Helmholtz–Leray
//! projection `P v = F^{-1} (I - xi xi^T / |xi|^2) F v`.
//!
//! The whole space is stood in for by a periodic box several times larger
//! than the region carrying data. The zero Fourier mode is left alone by `P`.
//! Wavenumber components at the Nyquist index are taken as zero in every
//! spectral operator here, which keeps real fields real and makes the
//! discrete identities (`P` idempotent, symmetric, annihilating spectral
//! gradients) hold to rounding.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::smooth_step;
use crate::grid::{Grid, GridField, SpaceTimeField, VectorField, MAX_DIM};

/// Shape of a periodic box: `resolution[a]` nodes of spacing
/// `length / resolution[a]` per axis starting at `origin`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicBox {
    dim: usize,
    resolution: [usize; MAX_DIM],
    length: [f64; MAX_DIM],
    origin: [f64; MAX_DIM],
}

impl PeriodicBox {
    pub fn new(resolution: &[usize], length: &[f64], origin: &[f64]) -> Result<Self> {
        let dim = resolution.len();
        if !(2..=3).contains(&dim) || length.len() != dim || origin.len() != dim {
            return Err(Error::InvalidArgument("periodic box needs 2 or 3 matching axes".into()));
        }
        let mut b = PeriodicBox {
            dim,
            resolution: [1; MAX_DIM],
            length: [1.0; MAX_DIM],
            origin: [0.0; MAX_DIM],
        };
        for a in 0..dim {
            if resolution[a] < 4 {
                return Err(Error::GridTooCoarse(format!(
                    "periodic axis {a} has {} points, need at least 4",
                    resolution[a]
                )));
            }
            if !(length[a] > 0.0) {
                return Err(Error::InvalidArgument("box length must be positive".into()));
            }
            b.resolution[a] = resolution[a];
            b.length[a] = length[a];
            b.origin[a] = origin[a];
        }
        Ok(b)
    }

    /// Box of edge at least `factor` times the diagonal of `grid`, sharing its
    /// spacing and lattice so samples transfer without interpolation. The grid
    /// sits in the middle of the box.
    pub fn enclosing(grid: &Grid, factor: f64) -> Result<Self> {
        if !(factor > 1.0) {
            return Err(Error::InvalidArgument("box factor must exceed 1".into()));
        }
        let d = grid.dim();
        let h = grid.spacing();
        let lo = grid.lower();
        let hi = grid.upper();
        let diag = (0..d).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        let mut res = Vec::with_capacity(d);
        let mut len = Vec::with_capacity(d);
        let mut origin = Vec::with_capacity(d);
        for a in 0..d {
            let mut n = (factor * diag / h[a]).ceil() as usize;
            n += n % 2;
            let extra = n - grid.shape()[a];
            res.push(n);
            len.push(n as f64 * h[a]);
            origin.push(lo[a] - (extra / 2) as f64 * h[a]);
        }
        PeriodicBox::new(&res, &len, &origin)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution[..self.dim]
    }

    pub fn length(&self) -> &[f64] {
        &self.length[..self.dim]
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.length[a] / self.resolution[a] as f64).collect()
    }

    /// The node lattice of the box as an ordinary grid.
    pub fn grid(&self) -> Grid {
        Grid::new(self.resolution(), &self.origin[..self.dim], &self.spacing())
            .expect("validated box")
    }

    pub fn len(&self) -> usize {
        self.resolution[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Angular wavenumber along `axis` for FFT index `j`, zero at Nyquist.
    fn wavenumber(&self, axis: usize, j: usize) -> f64 {
        let n = self.resolution[axis];
        if 2 * j == n {
            return 0.0;
        }
        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        2.0 * std::f64::consts::PI * k / self.length[axis]
    }

    fn xi(&self, idx: usize) -> [f64; MAX_DIM] {
        let g = self.grid();
        let m = g.multi_index(idx);
        let mut xi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            xi[a] = self.wavenumber(a, m[a]);
        }
        xi
    }
}

/// Vector samples on a periodic box.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    pbox: PeriodicBox,
    components: Vec<Vec<f64>>,
}

impl PeriodicField {
    pub fn new(pbox: &PeriodicBox, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("periodic field needs a component".into()));
        }
        for c in &components {
            if c.len() != pbox.len() {
                return Err(Error::InvalidArgument(format!(
                    "component has {} samples, box has {}",
                    c.len(),
                    pbox.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("periodic field has non-finite samples".into()));
            }
        }
        Ok(PeriodicField {
            pbox: pbox.clone(),
            components,
        })
    }

    pub fn zeros(pbox: &PeriodicBox, count: usize) -> Self {
        PeriodicField {
            pbox: pbox.clone(),
            components: vec![vec![0.0; pbox.len()]; count],
        }
    }

    pub fn from_fn(pbox: &PeriodicBox, count: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let g = pbox.grid();
        let d = g.dim();
        let mut comps = vec![vec![0.0; g.len()]; count];
        for i in 0..g.len() {
            let v = f(&g.point(i)[..d]);
            if v.len() != count {
                return Err(Error::InvalidArgument("closure returned the wrong number of components".into()));
            }
            for (c, x) in comps.iter_mut().zip(v) {
                c[i] = x;
            }
        }
        PeriodicField::new(pbox, comps)
    }

    pub fn periodic_box(&self) -> &PeriodicBox {
        &self.pbox
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.pbox.spacing().iter().product()
    }

    pub fn dot(&self, other: &PeriodicField) -> Result<f64> {
        if self.pbox != other.pbox || self.components.len() != other.components.len() {
            return Err(Error::InvalidArgument("periodic fields do not match".into()));
        }
        let s: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        Ok(s * self.cell_volume())
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).expect("same field").sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn combine(&self, a: f64, other: &PeriodicField, b: f64) -> Result<Self> {
        if self.pbox != other.pbox || self.components.len() != other.components.len() {
            return Err(Error::InvalidArgument("periodic fields do not match".into()));
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        Ok(PeriodicField {
            pbox: self.pbox.clone(),
            components,
        })
    }

    pub fn to_vector_field(&self) -> VectorField {
        let g = self.pbox.grid();
        VectorField::new(
            self.components
                .iter()
                .map(|c| GridField::from_values(&g, c.clone()).expect("sizes match"))
                .collect(),
        )
    }

    /// Samples at the nodes of `grid`, which must lie on the box lattice.
    pub fn restrict(&self, grid: &Grid) -> Result<VectorField> {
        let map = lattice_map(&self.pbox, grid)?;
        Ok(VectorField::new(
            self.components
                .iter()
                .map(|c| GridField::from_values(grid, map.iter().map(|&j| c[j]).collect()).expect("sizes match"))
                .collect(),
        ))
    }
}

/// Index in the box of every node of `grid`; errors unless `grid` lies on the
/// box lattice.
fn lattice_map(pbox: &PeriodicBox, grid: &Grid) -> Result<Vec<usize>> {
    let d = pbox.dim;
    if grid.dim() != d {
        return Err(Error::InvalidArgument("grid and box dimensions differ".into()));
    }
    let h = pbox.spacing();
    let mut offset = [0usize; MAX_DIM];
    for a in 0..d {
        if (grid.spacing()[a] - h[a]).abs() > 1e-9 * h[a] {
            return Err(Error::InvalidArgument("grid spacing differs from the box lattice".into()));
        }
        let t = (grid.origin()[a] - pbox.origin[a]) / h[a];
        let k = t.round();
        if (t - k).abs() > 1e-6 || k < 0.0 || k as usize + grid.shape()[a] > pbox.resolution[a] {
            return Err(Error::OutsideDomain {
                point: grid.origin().to_vec(),
                region: "periodic box lattice".into(),
            });
        }
        offset[a] = k as usize;
    }
    let bg = pbox.grid();
    Ok((0..grid.len())
        .map(|i| {
            let m = grid.multi_index(i);
            let mut mb = [0usize; MAX_DIM];
            for a in 0..d {
                mb[a] = m[a] + offset[a];
            }
            bg.linear_index(mb)
        })
        .collect())
}

/// Extension by nearest-point values blended to zero across a collar:
/// `E v(x) = chi(d(x)) v(pi(x))`, where `pi(x)` is the nearest valid sample,
/// `d` the distance to it and `chi` falls smoothly from 1 at `d = 0` to 0 at
/// `d = collar`. Valid samples are copied unchanged.
pub fn extend(v: &VectorField, pbox: &PeriodicBox, collar: f64) -> Result<PeriodicField> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("nothing to extend".into()));
    }
    if !(collar > 0.0) {
        return Err(Error::InvalidArgument("collar width must be positive".into()));
    }
    let grid = v.components[0].grid().clone();
    for c in &v.components {
        if c.grid() != &grid || c.mask() != v.components[0].mask() {
            return Err(Error::InvalidArgument("components must share grid and mask".into()));
        }
    }
    let d = grid.dim();
    let map = lattice_map(pbox, &grid)?;
    let valid: Vec<bool> = (0..grid.len()).map(|i| v.components[0].is_valid(i)).collect();
    if !valid.iter().any(|&b| b) {
        return Err(Error::EmptyRegion("mask has no valid samples".into()));
    }

    // valid samples on the edge of the mask: a missing or invalid neighbour
    let shape = grid.shape();
    let strides = grid.strides();
    let boundary: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            if !valid[i] {
                return false;
            }
            let m = grid.multi_index(i);
            (0..d).any(|a| {
                m[a] == 0 || m[a] + 1 == shape[a] || !valid[i - strides[a]] || !valid[i + strides[a]]
            })
        })
        .collect();

    // the collar must stay clear of the box faces
    let h = pbox.spacing();
    let bg = pbox.grid();
    let mut lo = [f64::INFINITY; MAX_DIM];
    let mut hi = [f64::NEG_INFINITY; MAX_DIM];
    for &i in &boundary {
        let p = grid.point(i);
        for a in 0..d {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    for a in 0..d {
        let box_lo = pbox.origin[a];
        let box_hi = pbox.origin[a] + (pbox.resolution[a] - 1) as f64 * h[a];
        if lo[a] - collar <= box_lo + 0.5 * h[a] || hi[a] + collar >= box_hi - 0.5 * h[a] {
            return Err(Error::InvalidArgument(format!(
                "mask plus collar reaches the periodic box boundary on axis {a}"
            )));
        }
    }

    let mut inside = vec![usize::MAX; pbox.len()];
    for (i, &j) in map.iter().enumerate() {
        if valid[i] {
            inside[j] = i;
        }
    }
    let boundary_pts: Vec<[f64; MAX_DIM]> = boundary.iter().map(|&i| grid.point(i)).collect();
    let collar2 = collar * collar;
    let blend: Vec<Option<(usize, f64)>> = (0..pbox.len())
        .into_par_iter()
        .map(|j| {
            if inside[j] != usize::MAX {
                return Some((inside[j], 1.0));
            }
            let x = bg.point(j);
            for a in 0..d {
                if x[a] < lo[a] - collar || x[a] > hi[a] + collar {
                    return None;
                }
            }
            let mut best = (usize::MAX, f64::INFINITY);
            for (k, p) in boundary_pts.iter().enumerate() {
                let r2: f64 = (0..d).map(|a| (x[a] - p[a]).powi(2)).sum();
                if r2 < best.1 {
                    best = (k, r2);
                }
            }
            if best.1 >= collar2 {
                return None;
            }
            let chi = smooth_step(1.0 - best.1.sqrt() / collar).0;
            Some((boundary[best.0], chi))
        })
        .collect();

    let components = v
        .components
        .iter()
        .map(|c| {
            blend
                .iter()
                .map(|b| match b {
                    Some((i, w)) => w * c.values()[*i],
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    PeriodicField::new(pbox, components)
}

struct Spectral {
    pbox: PeriodicBox,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl Spectral {
    fn new(pbox: &PeriodicBox) -> Self {
        let mut planner = FftPlanner::new();
        let d = pbox.dim;
        Spectral {
            pbox: pbox.clone(),
            forward: (0..d).map(|a| planner.plan_fft_forward(pbox.resolution[a])).collect(),
            inverse: (0..d).map(|a| planner.plan_fft_inverse(pbox.resolution[a])).collect(),
        }
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let g = self.pbox.grid();
        let strides = g.strides();
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.pbox.resolution[axis];
            let stride = strides[axis];
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for start in 0..data.len() {
                if g.multi_index(start)[axis] != 0 {
                    continue;
                }
                for (k, l) in line.iter_mut().enumerate() {
                    *l = data[start + k * stride];
                }
                plan.process(&mut line);
                for (k, l) in line.iter().enumerate() {
                    data[start + k * stride] = *l;
                }
            }
        }
    }

    fn forward(&self, v: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    fn inverse(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter().map(|c| c.re * scale).collect()
    }
}

fn check_vector(v: &PeriodicField) -> Result<()> {
    if v.components.len() != v.pbox.dim {
        return Err(Error::InvalidArgument(format!(
            "expected {} components, got {}",
            v.pbox.dim,
            v.components.len()
        )));
    }
    Ok(())
}

/// Applies `v^ -> (a I + b xi xi^T / |xi|^2) v^` away from the zero mode,
/// which is kept (`keep_zero`) or cleared.
fn spectral_split(v: &PeriodicField, a: f64, b: f64, keep_zero: bool) -> Result<PeriodicField> {
    check_vector(v)?;
    let sp = Spectral::new(&v.pbox);
    let d = v.pbox.dim;
    let mut hats: Vec<Vec<Complex64>> = v.components.iter().map(|c| sp.forward(c)).collect();
    for idx in 0..v.pbox.len() {
        let xi = v.pbox.xi(idx);
        let k2: f64 = xi[..d].iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            if !keep_zero {
                for h in hats.iter_mut() {
                    h[idx] = Complex64::new(0.0, 0.0);
                }
            }
            continue;
        }
        let mut dotp = Complex64::new(0.0, 0.0);
        for c in 0..d {
            dotp += hats[c][idx] * xi[c];
        }
        for c in 0..d {
            hats[c][idx] = hats[c][idx] * a + dotp * (b * xi[c] / k2);
        }
    }
    let components = hats.into_iter().map(|h| sp.inverse(h)).collect();
    Ok(PeriodicField {
        pbox: v.pbox.clone(),
        components,
    })
}

/// The Leray projection onto spectrally divergence-free fields.
pub fn leray_project(v: &PeriodicField) -> Result<PeriodicField> {
    spectral_split(v, 1.0, -1.0, true)
}

/// `(I - P) v`, the gradient part; no zero mode.
pub fn gradient_part(v: &PeriodicField) -> Result<PeriodicField> {
    spectral_split(v, 0.0, 1.0, false)
}

/// Largest `|xi . v^(xi)|` relative to the largest `|xi| |v^|`.
pub fn spectral_divergence(v: &PeriodicField) -> Result<f64> {
    check_vector(v)?;
    let sp = Spectral::new(&v.pbox);
    let d = v.pbox.dim;
    let hats: Vec<Vec<Complex64>> = v.components.iter().map(|c| sp.forward(c)).collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..v.pbox.len() {
        let xi = v.pbox.xi(idx);
        let mut dotp = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        for c in 0..d {
            dotp += hats[c][idx] * xi[c];
            mag += hats[c][idx].norm_sqr();
        }
        let k = xi[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(dotp.norm());
        scale = scale.max(k * mag.sqrt());
    }
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

/// Largest `|xi_a v^_b - xi_b v^_a|` relative to the largest `|xi| |v^|`.
pub fn spectral_curl(v: &PeriodicField) -> Result<f64> {
    check_vector(v)?;
    let sp = Spectral::new(&v.pbox);
    let d = v.pbox.dim;
    let hats: Vec<Vec<Complex64>> = v.components.iter().map(|c| sp.forward(c)).collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..v.pbox.len() {
        let xi = v.pbox.xi(idx);
        let mut mag = 0.0;
        for c in 0..d {
            mag += hats[c][idx].norm_sqr();
        }
        for a in 0..d {
            for b in (a + 1)..d {
                let w = hats[b][idx] * xi[a] - hats[a][idx] * xi[b];
                worst = worst.max(w.norm());
            }
        }
        let k = xi[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
        scale = scale.max(k * mag.sqrt());
    }
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

/// Spectral gradient of the scalar `psi`.
pub fn spectral_gradient(psi: &PeriodicField) -> Result<PeriodicField> {
    if psi.components.len() != 1 {
        return Err(Error::InvalidArgument("gradient needs a scalar field".into()));
    }
    let sp = Spectral::new(&psi.pbox);
    let d = psi.pbox.dim;
    let hat = sp.forward(&psi.components[0]);
    let i = Complex64::new(0.0, 1.0);
    let components = (0..d)
        .map(|a| {
            let h: Vec<Complex64> = hat
                .iter()
                .enumerate()
                .map(|(idx, z)| z * i * psi.pbox.xi(idx)[a])
                .collect();
            sp.inverse(h)
        })
        .collect();
    Ok(PeriodicField {
        pbox: psi.pbox.clone(),
        components,
    })
}

/// Spectral curl of a potential: `(d_2 s, -d_1 s)` for a scalar `s` in 2D,
/// `curl A` for a vector `A` in 3D.
pub fn spectral_curl_field(potential: &PeriodicField) -> Result<PeriodicField> {
    let d = potential.pbox.dim;
    let sp = Spectral::new(&potential.pbox);
    let i = Complex64::new(0.0, 1.0);
    let deriv = |c: usize, a: usize| -> Vec<Complex64> {
        let hat = sp.forward(&potential.components[c]);
        hat.iter()
            .enumerate()
            .map(|(idx, z)| z * i * potential.pbox.xi(idx)[a])
            .collect()
    };
    let components = match (d, potential.components.len()) {
        (2, 1) => {
            let d1 = sp.inverse(deriv(0, 1));
            let d0 = sp.inverse(deriv(0, 0));
            vec![d1, d0.into_iter().map(|x| -x).collect()]
        }
        (3, 3) => {
            let sub = |a: Vec<Complex64>, b: Vec<Complex64>| -> Vec<f64> {
                sp.inverse(a.into_iter().zip(b).map(|(x, y)| x - y).collect())
            };
            vec![
                sub(deriv(2, 1), deriv(1, 2)),
                sub(deriv(0, 2), deriv(2, 0)),
                sub(deriv(1, 0), deriv(0, 1)),
            ]
        }
        _ => {
            return Err(Error::InvalidArgument(
                "potential must be scalar in 2D or a vector in 3D".into(),
            ))
        }
    };
    Ok(PeriodicField {
        pbox: potential.pbox.clone(),
        components,
    })
}

/// `-Delta^{-1} div v` with zero mean.
pub fn pressure_shift(v: &PeriodicField) -> Result<PeriodicField> {
    check_vector(v)?;
    let sp = Spectral::new(&v.pbox);
    let d = v.pbox.dim;
    let hats: Vec<Vec<Complex64>> = v.components.iter().map(|c| sp.forward(c)).collect();
    let i = Complex64::new(0.0, 1.0);
    let out: Vec<Complex64> = (0..v.pbox.len())
        .map(|idx| {
            let xi = v.pbox.xi(idx);
            let k2: f64 = xi[..d].iter().map(|x| x * x).sum();
            if k2 == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let mut div = Complex64::new(0.0, 0.0);
            for c in 0..d {
                div += hats[c][idx] * i * xi[c];
            }
            div / k2
        })
        .collect();
    Ok(PeriodicField {
        pbox: v.pbox.clone(),
        components: vec![sp.inverse(out)],
    })
}

/// Parameters of the whole-space stand-in.
#[derive(Clone, Debug, PartialEq)]
pub struct HelmholtzConfig {
    /// Box edge over the diagonal of the data grid.
    pub box_factor: f64,
    /// Collar width over the diagonal of the data grid.
    pub collar_fraction: f64,
}

impl Default for HelmholtzConfig {
    fn default() -> Self {
        HelmholtzConfig {
            box_factor: 4.0,
            collar_fraction: 0.25,
        }
    }
}

impl HelmholtzConfig {
    pub fn periodic_box(&self, grid: &Grid) -> Result<PeriodicBox> {
        PeriodicBox::enclosing(grid, self.box_factor)
    }

    pub fn collar(&self, grid: &Grid) -> f64 {
        let lo = grid.lower();
        let hi = grid.upper();
        let diag = (0..grid.dim()).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        self.collar_fraction * diag
    }
}

/// Splits each slice of `f` into `P E f` and `-Delta^{-1} div E f`, both
/// restricted to the grid of `f`, so that `f = f_sol - grad(shift)` there.
pub fn reduce_problem(
    f: &SpaceTimeField<VectorField>,
    cfg: &HelmholtzConfig,
) -> Result<(SpaceTimeField<VectorField>, SpaceTimeField<GridField>)> {
    let first = f
        .slices
        .first()
        .ok_or_else(|| Error::InvalidArgument("forcing has no time slices".into()))?;
    let grid = first
        .components
        .first()
        .ok_or_else(|| Error::InvalidArgument("forcing has no components".into()))?
        .grid()
        .clone();
    let pbox = cfg.periodic_box(&grid)?;
    let collar = cfg.collar(&grid);
    let parts = f
        .slices
        .par_iter()
        .map(|slice| {
            let ef = extend(slice, &pbox, collar)?;
            let sol = leray_project(&ef)?.restrict(&grid)?;
            let shift = pressure_shift(&ef)?.restrict(&grid)?;
            let mask = slice.components[0].mask().map(|m| m.to_vec());
            let apply_mask = |g: GridField| -> Result<GridField> {
                match &mask {
                    Some(m) => g.with_mask(m.clone()),
                    None => Ok(g),
                }
            };
            let sol = VectorField::new(
                sol.components
                    .into_iter()
                    .map(apply_mask)
                    .collect::<Result<Vec<_>>>()?,
            );
            let shift = apply_mask(shift.components.into_iter().next().expect("scalar"))?;
            Ok((sol, shift))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sol, shift): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok((SpaceTimeField::new(f.dt, sol)?, SpaceTimeField::new(f.dt, shift)?))
}
