//! Analytic domains, boundary charts and smooth cutoffs.
//!
//! Every shape here has closed-form circumscribed and star-centre radii, so
//! the shape constant `R_a / R_i` is exact and scale free.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Point, MAX_DIM};

/// Reference shapes, all centred at the origin before the
/// scale/translation wrapper of [`StarDomain`] is applied.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Unit ball.
    Ball,
    /// Cube of side one, `[-1/2, 1/2]^n`.
    Cube,
    /// Axis-aligned box with the given half extents.
    Cuboid { half_extents: Vec<f64> },
    /// Axis-aligned ellipsoid with the given semi-axes.
    Ellipsoid { semi_axes: Vec<f64> },
}

/// A bounded domain that is star-shaped with respect to a ball about its
/// centre: `center + scale * reference_shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct StarDomain {
    dim: usize,
    shape: Shape,
    center: Point,
    scale: f64,
}

impl StarDomain {
    pub fn new(dim: usize, shape: Shape, center: &[f64], scale: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedShape(format!("dimension {dim} (only 2 and 3)")));
        }
        if center.len() != dim {
            return Err(Error::UnsupportedShape(format!(
                "centre has {} coordinates for dimension {dim}",
                center.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::UnsupportedShape(format!("scale must be positive, got {scale}")));
        }
        let check_axes = |axes: &[f64], what: &str| -> Result<()> {
            if axes.len() != dim || axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(Error::UnsupportedShape(format!(
                    "{what} needs {dim} positive values, got {axes:?}"
                )));
            }
            Ok(())
        };
        match &shape {
            Shape::Cuboid { half_extents } => check_axes(half_extents, "cuboid")?,
            Shape::Ellipsoid { semi_axes } => check_axes(semi_axes, "ellipsoid")?,
            Shape::Ball | Shape::Cube => {}
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(center);
        Ok(StarDomain {
            dim,
            shape,
            center: c,
            scale,
        })
    }

    pub fn ball(dim: usize, center: &[f64], radius: f64) -> Result<Self> {
        StarDomain::new(dim, Shape::Ball, center, radius)
    }

    /// Cube of the given side length.
    pub fn cube(dim: usize, center: &[f64], side: f64) -> Result<Self> {
        StarDomain::new(dim, Shape::Cube, center, side)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `lambda * G` (scaling about the origin).
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let c: Vec<f64> = self.center().iter().map(|x| x * lambda).collect();
        StarDomain::new(self.dim, self.shape.clone(), &c, self.scale * lambda)
    }

    /// `G + shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        let c: Vec<f64> = self.center().iter().zip(shift).map(|(x, s)| x + s).collect();
        StarDomain::new(self.dim, self.shape.clone(), &c, self.scale)
    }

    /// Image under `x -> (x - center) / factor`.
    pub fn mapped(&self, center: &[f64], factor: f64) -> Result<Self> {
        let c: Vec<f64> = self
            .center()
            .iter()
            .zip(center)
            .map(|(x, c)| (x - c) / factor)
            .collect();
        StarDomain::new(self.dim, self.shape.clone(), &c, self.scale / factor)
    }

    fn reference_radii(&self) -> (f64, f64) {
        let n = self.dim as f64;
        match &self.shape {
            Shape::Ball => (1.0, 1.0),
            Shape::Cube => (0.5 * n.sqrt(), 0.5),
            Shape::Cuboid { half_extents } => (
                half_extents.iter().map(|a| a * a).sum::<f64>().sqrt(),
                half_extents.iter().cloned().fold(f64::INFINITY, f64::min),
            ),
            Shape::Ellipsoid { semi_axes } => (
                semi_axes.iter().cloned().fold(0.0, f64::max),
                semi_axes.iter().cloned().fold(f64::INFINITY, f64::min),
            ),
        }
    }

    /// Radius of the smallest circumscribed ball.
    pub fn circumradius(&self) -> f64 {
        self.scale * self.reference_radii().0
    }

    /// Radius of the largest ball the domain is star-shaped with respect to.
    /// All supported shapes are convex, so this is the inradius.
    pub fn star_radius(&self) -> f64 {
        self.scale * self.reference_radii().1
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.circumradius()
    }

    fn reference_coords(&self, x: &[f64]) -> Point {
        let mut z = [0.0; MAX_DIM];
        for a in 0..self.dim {
            z[a] = (x[a] - self.center[a]) / self.scale;
        }
        z
    }

    /// Level-set value in reference coordinates: `< 1` inside, `= 1` on the
    /// boundary.
    fn gauge(&self, x: &[f64]) -> f64 {
        let z = self.reference_coords(x);
        let d = self.dim;
        match &self.shape {
            Shape::Ball => z[..d].iter().map(|v| v * v).sum::<f64>().sqrt(),
            Shape::Cube => z[..d].iter().fold(0.0, |m, v| m.max(2.0 * v.abs())),
            Shape::Cuboid { half_extents } => z[..d]
                .iter()
                .zip(half_extents)
                .fold(0.0, |m, (v, a)| m.max(v.abs() / a)),
            Shape::Ellipsoid { semi_axes } => z[..d]
                .iter()
                .zip(semi_axes)
                .map(|(v, a)| (v / a) * (v / a))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Open-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.gauge(x) < 1.0
    }

    /// Parameter range `[t0, t1]` with `x + t d` in the closed domain, or
    /// `None` if the line misses it. All shapes are convex.
    pub fn segment(&self, x: &[f64], d: &[f64]) -> Option<(f64, f64)> {
        let z = self.reference_coords(x);
        let n = self.dim;
        let e: Vec<f64> = d[..n].iter().map(|v| v / self.scale).collect();
        let quadric = |axes: &dyn Fn(usize) -> f64| -> Option<(f64, f64)> {
            let (mut a, mut b, mut c) = (0.0, 0.0, -1.0);
            for k in 0..n {
                let s = axes(k);
                a += (e[k] / s).powi(2);
                b += 2.0 * z[k] * e[k] / (s * s);
                c += (z[k] / s).powi(2);
            }
            if a == 0.0 {
                return if c <= 0.0 { Some((f64::NEG_INFINITY, f64::INFINITY)) } else { None };
            }
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let r = disc.sqrt();
            Some(((-b - r) / (2.0 * a), (-b + r) / (2.0 * a)))
        };
        let slab = |half: &dyn Fn(usize) -> f64| -> Option<(f64, f64)> {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..n {
                let h = half(k);
                if e[k] == 0.0 {
                    if z[k].abs() > h {
                        return None;
                    }
                    continue;
                }
                let (a, b) = ((-h - z[k]) / e[k], (h - z[k]) / e[k]);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
            (t0 <= t1).then_some((t0, t1))
        };
        match &self.shape {
            Shape::Ball => quadric(&|_| 1.0),
            Shape::Ellipsoid { semi_axes } => quadric(&|k| semi_axes[k]),
            Shape::Cube => slab(&|_| 0.5),
            Shape::Cuboid { half_extents } => slab(&|k| half_extents[k]),
        }
    }

    /// Closed-set membership with a relative slack.
    pub fn contains_closed(&self, x: &[f64], slack: f64) -> bool {
        self.gauge(x) <= 1.0 + slack
    }
}

/// `R_a(G) / R_i(G)` from closed-form radii; invariant under the
/// scale/translation wrapper because only the reference shape enters.
pub fn ratio(dom: &StarDomain) -> Result<f64> {
    let n = dom.dim as f64;
    let r = match &dom.shape {
        Shape::Ball => 1.0,
        Shape::Cube => n.sqrt(),
        Shape::Cuboid { .. } | Shape::Ellipsoid { .. } => {
            let (ra, ri) = dom.reference_radii();
            ra / ri
        }
    };
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::UnsupportedShape(format!("degenerate radii for {:?}", dom.shape)));
    }
    Ok(r)
}

/// A height function `h(y')` together with its partial derivatives.
pub trait HeightFunction: Send + Sync {
    /// `d^alpha h (y')`; `alpha` has one entry per tangential coordinate.
    fn derivative(&self, y: &[f64], alpha: &[u32]) -> f64;
    /// Highest derivative order available.
    fn max_order(&self) -> u32 {
        u32::MAX
    }
}

/// `sum_i c_i * y'^{p_i}` with exact derivatives of every order.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    terms: Vec<(f64, [u32; 2])>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, [u32; 2])>) -> Self {
        Polynomial { terms }
    }
}

impl HeightFunction for Polynomial {
    fn derivative(&self, y: &[f64], alpha: &[u32]) -> f64 {
        let mut total = 0.0;
        for (c, p) in &self.terms {
            let mut v = *c;
            for a in 0..alpha.len().min(2) {
                if alpha[a] > p[a] {
                    v = 0.0;
                    break;
                }
                for j in 0..alpha[a] {
                    v *= (p[a] - j) as f64;
                }
                v *= y[a].powi((p[a] - alpha[a]) as i32);
            }
            for a in alpha.len()..2 {
                if p[a] > 0 {
                    // powers in absent tangential directions contribute y^p with y = 0
                    v = 0.0;
                }
            }
            total += v;
        }
        total
    }
}

/// Boundary patch `{x_n = h(x')}` over `B'_R`, with the flattening map
/// `Phi(y) = (y', h(y') + y_n)` on `U_R = B'_R x (-R, R)`.
#[derive(Clone)]
pub struct BoundaryChart {
    dim: usize,
    radius: f64,
    order: u32,
    height: Arc<dyn HeightFunction>,
    normalized: bool,
}

impl fmt::Debug for BoundaryChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryChart")
            .field("dim", &self.dim)
            .field("radius", &self.radius)
            .field("order", &self.order)
            .field("normalized", &self.normalized)
            .finish()
    }
}

impl BoundaryChart {
    pub fn new(dim: usize, radius: f64, order: u32, height: Arc<dyn HeightFunction>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedShape(format!("chart dimension {dim}")));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("chart radius must be positive, got {radius}")));
        }
        if height.max_order() < order + 2 {
            return Err(Error::InvalidArgument(format!(
                "height function provides derivatives up to {} but order {} needs {}",
                height.max_order(),
                order,
                order + 2
            )));
        }
        let zero = [0.0; 2];
        let m = dim - 1;
        let mut normalized = height.derivative(&zero[..m], &[0; 2][..m]).abs() < 1e-14;
        for i in 0..m {
            let mut alpha = [0u32; 2];
            alpha[i] = 1;
            normalized &= height.derivative(&zero[..m], &alpha[..m]).abs() < 1e-14;
        }
        Ok(BoundaryChart {
            dim,
            radius,
            order,
            height,
            normalized,
        })
    }

    pub fn flat(dim: usize, radius: f64) -> Result<Self> {
        BoundaryChart::new(dim, radius, 2, Arc::new(Polynomial::new(vec![])))
    }

    /// `h(y') = c |y'|^2`.
    pub fn quadratic(dim: usize, radius: f64, c: f64) -> Result<Self> {
        let terms = if dim == 2 {
            vec![(c, [2, 0])]
        } else {
            vec![(c, [2, 0]), (c, [0, 2])]
        };
        BoundaryChart::new(dim, radius, 2, Arc::new(Polynomial::new(terms)))
    }

    /// `h(y') = a . y'`.
    pub fn linear(dim: usize, radius: f64, slope: &[f64]) -> Result<Self> {
        let mut terms = vec![(slope[0], [1, 0])];
        if dim == 3 {
            terms.push((slope[1], [0, 1]));
        }
        BoundaryChart::new(dim, radius, 2, Arc::new(Polynomial::new(terms)))
    }

    pub fn polynomial(dim: usize, radius: f64, order: u32, terms: Vec<(f64, [u32; 2])>) -> Result<Self> {
        BoundaryChart::new(dim, radius, order, Arc::new(Polynomial::new(terms)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn tangential(&self) -> usize {
        self.dim - 1
    }

    pub fn derivative(&self, yt: &[f64], alpha: &[u32]) -> f64 {
        self.height.derivative(&yt[..self.tangential()], &alpha[..self.tangential()])
    }

    pub fn h(&self, yt: &[f64]) -> f64 {
        self.derivative(yt, &[0, 0])
    }

    /// `(d_1 h, ..., d_{n-1} h)` padded with zero to length 2.
    pub fn grad_h(&self, yt: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate().take(self.tangential()) {
            let mut alpha = [0u32; 2];
            alpha[i] = 1;
            *gi = self.derivative(yt, &alpha);
        }
        g
    }

    /// Tangential Hessian entry `d_i d_j h`.
    pub fn hessian_h(&self, yt: &[f64], i: usize, j: usize) -> f64 {
        let mut alpha = [0u32; 2];
        alpha[i] += 1;
        alpha[j] += 1;
        self.derivative(yt, &alpha)
    }

    pub fn laplacian_h(&self, yt: &[f64]) -> f64 {
        (0..self.tangential()).map(|i| self.hessian_h(yt, i, i)).sum()
    }

    /// Membership in `U_R = B'_R x (-R, R)` (closed, with a tiny slack).
    pub fn in_patch(&self, y: &[f64]) -> bool {
        let m = self.tangential();
        let r2: f64 = y[..m].iter().map(|v| v * v).sum();
        let slack = 1e-12 * self.radius;
        r2.sqrt() <= self.radius + slack && y[m].abs() <= self.radius + slack
    }

    fn check_patch(&self, y: &[f64]) -> Result<()> {
        if y.len() < self.dim || !self.in_patch(y) {
            return Err(Error::OutsideDomain {
                point: y.to_vec(),
                region: format!("U_R with R = {}", self.radius),
            });
        }
        Ok(())
    }

    /// `Phi(y) = (y', h(y') + y_n)`.
    pub fn flatten(&self, y: &[f64]) -> Result<Point> {
        self.check_patch(y)?;
        let m = self.tangential();
        let mut x = [0.0; MAX_DIM];
        x[..m].copy_from_slice(&y[..m]);
        x[m] = self.h(y) + y[m];
        Ok(x)
    }

    /// `Phi^{-1}(x) = (x', x_n - h(x'))`.
    pub fn unflatten(&self, x: &[f64]) -> Point {
        let m = self.tangential();
        let mut y = [0.0; MAX_DIM];
        y[..m].copy_from_slice(&x[..m]);
        y[m] = x[m] - self.h(x);
        y
    }

    /// `D Phi(y)`: identity with last row `(d_1 h, ..., d_{n-1} h, 1)`.
    pub fn jacobian(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_patch(y)?;
        Ok(self.triangular(y, 1.0))
    }

    /// `(D Phi(y))^{-1}`: identity with last row `(-d_1 h, ..., -d_{n-1} h, 1)`.
    pub fn inverse_jacobian(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_patch(y)?;
        Ok(self.triangular(y, -1.0))
    }

    fn triangular(&self, y: &[f64], sign: f64) -> Vec<Vec<f64>> {
        let n = self.dim;
        let g = self.grad_h(y);
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for j in 0..n - 1 {
            m[n - 1][j] = sign * g[j];
        }
        m
    }

    /// Outward unit normal `(grad h, -1) / sqrt(1 + |grad h|^2)` at `(y', h(y'))`.
    pub fn outward_normal(&self, yt: &[f64]) -> Vec<f64> {
        let m = self.tangential();
        let g = self.grad_h(yt);
        let s = (1.0 + g[..m].iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut v: Vec<f64> = g[..m].iter().map(|gi| gi / s).collect();
        v.push(-1.0 / s);
        v
    }
}

/// Number of candidate radii on the geometric search lattice.
pub const RHO_LATTICE_SIZE: usize = 64;
/// Ratio between consecutive lattice radii.
pub const RHO_LATTICE_RATIO: f64 = 0.917_004_043_204_671_2; // 2^(-1/8)

/// Samples of `B'_{r}` used to bound `sup |grad h|`: `directions` rays with
/// `radial` points each, plus the centre.
pub fn sup_grad_h(chart: &BoundaryChart, r: f64, directions: usize, radial: usize) -> f64 {
    let mut sup = {
        let g = chart.grad_h(&[0.0, 0.0]);
        (g[0] * g[0] + g[1] * g[1]).sqrt()
    };
    let dirs: Vec<[f64; 2]> = if chart.dim() == 2 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..directions)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
                [th.cos(), th.sin()]
            })
            .collect()
    };
    for d in &dirs {
        for m in 1..=radial {
            let s = r * m as f64 / radial as f64;
            let y = [s * d[0], s * d[1]];
            let g = chart.grad_h(&y);
            sup = sup.max((g[0] * g[0] + g[1] * g[1]).sqrt());
        }
    }
    sup
}

/// Largest lattice radius `rho < R/2` with `|grad h| <= delta` on `U_{2 rho}`.
pub fn find_rho(chart: &BoundaryChart, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !chart.is_normalized() {
        return Err(Error::InvalidArgument("find_rho needs a normalized chart (h(0) = 0, grad h(0) = 0)".into()));
    }
    let cap = 0.5 * chart.radius();
    let mut rho = cap;
    for _ in 0..RHO_LATTICE_SIZE {
        rho *= RHO_LATTICE_RATIO;
        if sup_grad_h(chart, 2.0 * rho, 256, 64) <= delta {
            return Ok(rho);
        }
    }
    Err(Error::NoAdmissibleRadius { delta })
}

/// Monotone `C^infinity` ramp: 0 for `t <= 0`, 1 for `t >= 1`, built from
/// `e^{-1/t}`. Returns the value and first two derivatives.
pub fn smooth_step(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let g = |s: f64| (-1.0 / s).exp();
    let a = g(t);
    let b = g(1.0 - t);
    let a1 = a / (t * t);
    let a2 = a * (1.0 / t.powi(4) - 2.0 / t.powi(3));
    let u = 1.0 - t;
    let b1 = -b / (u * u);
    let b2 = b * (1.0 / u.powi(4) - 2.0 / u.powi(3));
    let s = a + b;
    let v = a / s;
    let num1 = a1 * b - a * b1;
    let d1 = num1 / (s * s);
    let d2 = ((a2 * b - a * b2) * s - 2.0 * num1 * (a1 + b1)) / (s * s * s);
    (v, d1, d2)
}

/// Radial plateau function: `zeta = 1` for `|y| <= rho`, `0` for `|y| >= 2 rho`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    rho: f64,
    center: [f64; MAX_DIM],
}

pub fn make_cutoff(rho: f64) -> Result<Cutoff> {
    Cutoff::centered(rho, &[])
}

impl Cutoff {
    pub fn centered(rho: f64, center: &[f64]) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("cutoff radius must be positive, got {rho}")));
        }
        let mut c = [0.0; MAX_DIM];
        c[..center.len()].copy_from_slice(center);
        Ok(Cutoff { rho, center: c })
    }

    pub fn inner_radius(&self) -> f64 {
        self.rho
    }

    pub fn outer_radius(&self) -> f64 {
        2.0 * self.rho
    }

    fn radial(&self, y: &[f64]) -> (f64, [f64; MAX_DIM]) {
        let mut d = [0.0; MAX_DIM];
        let mut r2 = 0.0;
        for (a, v) in y.iter().enumerate() {
            d[a] = v - self.center[a];
            r2 += d[a] * d[a];
        }
        (r2.sqrt(), d)
    }

    /// Profile as a function of the distance to the centre.
    pub fn profile(&self, r: f64) -> (f64, f64, f64) {
        let (s, s1, s2) = smooth_step((2.0 * self.rho - r) / self.rho);
        (s, -s1 / self.rho, s2 / (self.rho * self.rho))
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.profile(self.radial(y).0).0
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let (r, d) = self.radial(y);
        let (_, p1, _) = self.profile(r);
        if p1 == 0.0 {
            return vec![0.0; y.len()];
        }
        d[..y.len()].iter().map(|v| p1 * v / r).collect()
    }

    /// `d_i d_j zeta`.
    pub fn hessian(&self, y: &[f64], i: usize, j: usize) -> f64 {
        let (r, d) = self.radial(y);
        let (_, p1, p2) = self.profile(r);
        if p1 == 0.0 && p2 == 0.0 {
            return 0.0;
        }
        let delta = if i == j { 1.0 } else { 0.0 };
        p2 * d[i] * d[j] / (r * r) + p1 * (delta / r - d[i] * d[j] / (r * r * r))
    }

    pub fn laplacian(&self, y: &[f64]) -> f64 {
        (0..y.len()).map(|i| self.hessian(y, i, i)).sum()
    }
}
