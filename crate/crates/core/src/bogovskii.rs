//! The Bogovskii operator
//!
//! ```text
//! B_phi f(x) = ∫ f(x - y) K_phi(x, y) dy,
//! K_phi(x, y) = y / |y|^n ∫_0^∞ phi(x + r y/|y|) (|y| + r)^{n-1} dr,
//! ```
//!
//! realised by quadrature on the grid that carries `f`. For `∫ phi = 1` it is
//! a right inverse of the divergence on zero-mean data:
//! `div B_phi f = f ∫ phi - phi ∫ f`.
//!
//! The radial integral is restricted to the chord where the ray meets the
//! support ball of `phi` and evaluated by Gauss–Legendre. The `y` integral is
//! the grid sum over source cells; cells within `epsilon` of the target are
//! split into `subdivision^n` subcells with multilinearly interpolated `f`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::StarDomain;
use crate::grid::{Grid, GridField, Point, VectorField, MAX_DIM};
use crate::norms;
use crate::quadrature::GaussLegendre;

/// `phi(x) = c exp(-1 / (1 - |x|^2 / a^2))` on the ball of radius `a` about
/// the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpFunction {
    dim: usize,
    support_radius: f64,
    scale: f64,
}

/// Which function of the bump enters the kernel: `phi` itself or `d_i phi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Value,
    Partial(usize),
}

impl BumpFunction {
    /// Unit-amplitude bump (`c = 1`).
    pub fn new(dim: usize, support_radius: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("bump dimension {dim}")));
        }
        if !(support_radius > 0.0) {
            return Err(Error::InvalidArgument("bump support radius must be positive".into()));
        }
        Ok(BumpFunction {
            dim,
            support_radius,
            scale: 1.0,
        })
    }

    /// Bump with `∫ phi = 1`.
    pub fn normalized(dim: usize, support_radius: f64) -> Result<Self> {
        let mut b = BumpFunction::new(dim, support_radius)?;
        b.scale = 1.0 / b.integral();
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn is_normalized(&self) -> bool {
        (self.integral() - 1.0).abs() < 1e-12
    }

    /// `∫ phi` from the radial profile, by composite Gauss–Legendre.
    pub fn integral(&self) -> f64 {
        let gl = GaussLegendre::new(32);
        let panels = 16;
        let n = self.dim as i32;
        let mut radial = 0.0;
        for p in 0..panels {
            let a = p as f64 / panels as f64;
            let b = (p + 1) as f64 / panels as f64;
            radial += gl.integrate(a, b, |s| {
                if s >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - s * s)).exp() * s.powi(n - 1)
                }
            });
        }
        let sphere = if self.dim == 2 {
            2.0 * std::f64::consts::PI
        } else {
            4.0 * std::f64::consts::PI
        };
        self.scale * sphere * self.support_radius.powi(n) * radial
    }

    #[inline]
    fn eval_weight(&self, p: &[f64; MAX_DIM], weight: Weight) -> f64 {
        let a2 = self.support_radius * self.support_radius;
        let s = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / a2;
        if s >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s;
        let v = self.scale * (-1.0 / q).exp();
        match weight {
            Weight::Value => v,
            Weight::Partial(i) => v * (-2.0 * p[i] / a2) / (q * q),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval_weight(&pad(x), Weight::Value)
    }

    pub fn partial(&self, x: &[f64], i: usize) -> f64 {
        self.eval_weight(&pad(x), Weight::Partial(i))
    }

    pub fn weight(&self, x: &[f64], weight: Weight) -> f64 {
        self.eval_weight(&pad(x), weight)
    }
}

fn pad(x: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..x.len()].copy_from_slice(x);
    p
}

/// How the singularity of the kernel at `y = 0` is handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Grid sum; source cells within `epsilon` of the target are split into
    /// `subdivision^n` subcells with multilinearly interpolated data.
    Subdivision,
    /// Smooth partition of the kernel: the part beyond `epsilon` is summed on
    /// the grid, the part near the target is integrated in polar coordinates
    /// about it, where the `|y|^{1-n}` singularity cancels against the
    /// Jacobian. Data is sampled by cubic interpolation.
    Partition,
}

/// Discretisation parameters of the two integrals in `B_phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct BogovskiiConfig {
    pub scheme: Scheme,
    /// Gauss–Legendre order of the radial integral inside the kernel.
    pub radial_order: usize,
    /// Subcells per axis near the singularity (subdivision scheme).
    pub subdivision: usize,
    /// Near-field radius. Defaults to one grid spacing for the subdivision
    /// scheme and half the bump radius for the partition scheme.
    pub epsilon: Option<f64>,
    /// Directions on the circle in 2D; polar nodes (with twice as many
    /// azimuths) in 3D. Partition scheme only.
    pub angular_order: usize,
    /// Gauss–Legendre nodes along each ray of the near field.
    pub near_radial_order: usize,
    /// Resolution of the tabulated radial integral used for the grid sum;
    /// `None` integrates every ray directly.
    pub kernel_table: Option<usize>,
}

impl Default for BogovskiiConfig {
    fn default() -> Self {
        BogovskiiConfig {
            scheme: Scheme::Partition,
            radial_order: 32,
            subdivision: 4,
            epsilon: None,
            angular_order: 32,
            near_radial_order: 16,
            kernel_table: Some(256),
        }
    }
}

impl BogovskiiConfig {
    /// The grid-sum scheme with one-level subdivision of the near cells.
    pub fn subdivision() -> Self {
        BogovskiiConfig {
            scheme: Scheme::Subdivision,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.radial_order == 0
            || self.subdivision == 0
            || self.angular_order == 0
            || self.near_radial_order == 0
            || self.kernel_table.is_some_and(|r| r < 8)
        {
            return Err(Error::InvalidArgument("quadrature orders must be positive".into()));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::InvalidArgument("epsilon must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Chord `[lo, hi]` (with `lo >= 0`) of the ray `x + r omega` inside the
/// support ball, if any.
#[inline]
fn chord(bump: &BumpFunction, x: &Point, omega: &Point) -> Option<(f64, f64)> {
    let a = bump.support_radius;
    let xo = x[0] * omega[0] + x[1] * omega[1] + x[2] * omega[2];
    let xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let disc = xo * xo - (xx - a * a);
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let hi = -xo + sq;
    if hi <= 0.0 {
        return None;
    }
    Some(((-xo - sq).max(0.0), hi))
}

/// `∫_0^∞ w(x + r omega) (rho + r)^{n-1} dr` over the chord of the support
/// ball; zero when the ray misses it.
#[inline]
fn ray_integral(
    bump: &BumpFunction,
    weight: Weight,
    x: &Point,
    omega: &Point,
    rho: f64,
    gl: &GaussLegendre,
) -> f64 {
    let Some((lo, hi)) = chord(bump, x, omega) else {
        return 0.0;
    };
    let n = bump.dim;
    let mut acc = 0.0;
    for (r, w) in gl.on_interval(lo, hi) {
        let p = [x[0] + r * omega[0], x[1] + r * omega[1], x[2] + r * omega[2]];
        let radial = if n == 2 { rho + r } else { (rho + r) * (rho + r) };
        acc += w * bump.eval_weight(&p, weight) * radial;
    }
    acc
}

/// Moments `M_k = ∫_0^∞ w(x + r omega) r^k dr`, `k < n`, so that the radial
/// integral is `sum_k C(n-1, k) rho^{n-1-k} M_k`.
#[inline]
fn ray_moments(
    bump: &BumpFunction,
    weight: Weight,
    x: &Point,
    omega: &Point,
    gl: &GaussLegendre,
) -> Option<[f64; MAX_DIM]> {
    let (lo, hi) = chord(bump, x, omega)?;
    let mut m = [0.0; MAX_DIM];
    for (r, w) in gl.on_interval(lo, hi) {
        let p = [x[0] + r * omega[0], x[1] + r * omega[1], x[2] + r * omega[2]];
        let v = w * bump.eval_weight(&p, weight);
        m[0] += v;
        m[1] += v * r;
        m[2] += v * r * r;
    }
    Some(m)
}

/// Tabulated line integrals of the bump. Writing the ray as `x + r omega`
/// with `b = x . omega`, `c = |x|^2 - b^2` and `t = b + r`, every radial
/// integral is a combination of
///
/// ```text
/// T_j(c, b) = ∫_b^∞ g(c + t^2) t^j dt,
/// ```
///
/// with `g = phi` for the value weight and `phi = g(c + t^2) p_i` for a
/// partial derivative. The table samples `T_j` on a uniform `(c, b)` grid and
/// is read back by tensor cubic interpolation.
#[derive(Clone, Debug)]
struct RadialTable {
    dim: usize,
    weight: Weight,
    a: f64,
    nc: usize,
    nb: usize,
    hc: f64,
    hb: f64,
    terms: usize,
    data: Vec<f64>,
}

const GHOST: usize = 2;

impl RadialTable {
    fn new(bump: &BumpFunction, weight: Weight, resolution: usize) -> Self {
        let a = bump.support_radius;
        let a2 = a * a;
        let n = bump.dim;
        let terms = match weight {
            Weight::Value => n,
            Weight::Partial(_) => n + 1,
        };
        let nc = resolution + 1 + 2 * GHOST;
        let nb = 2 * resolution + 1 + 2 * GHOST;
        let hc = a2 / resolution as f64;
        let hb = a / resolution as f64;
        let scale = bump.scale;
        let g = move |u: f64| -> f64 {
            let q = 1.0 - u / a2;
            if q <= 0.0 {
                return 0.0;
            }
            let v = scale * (-1.0 / q).exp();
            match weight {
                Weight::Value => v,
                Weight::Partial(_) => v * (-2.0 / a2) / (q * q),
            }
        };
        let gl = GaussLegendre::new(8);
        let mut data = vec![0.0; terms * nc * nb];
        for ic in 0..nc {
            let c = (ic as f64 - GHOST as f64) * hc;
            let mut acc = [0.0; MAX_DIM + 1];
            // integrate downwards from the last b node; above it g vanishes
            for ib in (0..nb).rev() {
                let b = (ib as f64 - GHOST as f64) * hb - a;
                if ib + 1 < nb {
                    let b1 = b + hb;
                    for (t, w) in gl.on_interval(b, b1) {
                        let v = w * g(c + t * t);
                        let mut tp = 1.0;
                        for acc_j in acc.iter_mut().take(terms) {
                            *acc_j += v * tp;
                            tp *= t;
                        }
                    }
                }
                for j in 0..terms {
                    data[(j * nc + ic) * nb + ib] = acc[j];
                }
            }
        }
        RadialTable {
            dim: n,
            weight,
            a,
            nc,
            nb,
            hc,
            hb,
            terms,
            data,
        }
    }

    #[inline]
    fn lagrange(s: f64) -> [f64; 4] {
        [
            -s * (s - 1.0) * (s - 2.0) / 6.0,
            (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
            -(s + 1.0) * s * (s - 2.0) / 2.0,
            (s + 1.0) * s * (s - 1.0) / 6.0,
        ]
    }

    /// `T_j(c, b)` for all `j`; `None` when the ray misses the support.
    #[inline]
    fn lookup(&self, c: f64, b: f64) -> Option<[f64; MAX_DIM + 1]> {
        let a = self.a;
        if c >= a * a || b >= a {
            return None;
        }
        let b = b.max(-a);
        let uc = c / self.hc + GHOST as f64;
        let ub = (b + a) / self.hb + GHOST as f64;
        let ic = (uc.floor() as usize).clamp(1, self.nc - 3);
        let ib = (ub.floor() as usize).clamp(1, self.nb - 3);
        let wc = Self::lagrange(uc - ic as f64);
        let wb = Self::lagrange(ub - ib as f64);
        let mut out = [0.0; MAX_DIM + 1];
        for (j, o) in out.iter_mut().enumerate().take(self.terms) {
            let mut acc = 0.0;
            for (p, wcp) in wc.iter().enumerate() {
                let row = (j * self.nc + ic + p - 1) * self.nb + ib - 1;
                let d = &self.data[row..row + 4];
                acc += wcp * (wb[0] * d[0] + wb[1] * d[1] + wb[2] * d[2] + wb[3] * d[3]);
            }
            *o = acc;
        }
        Some(out)
    }

    /// `∫_0^∞ w(x + r omega) (rho + r)^{n-1} dr`.
    #[inline]
    fn radial_integral(&self, x: &Point, omega: &Point, rho: f64) -> f64 {
        let b = x[0] * omega[0] + x[1] * omega[1] + x[2] * omega[2];
        let c = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - b * b).max(0.0);
        let Some(t) = self.lookup(c, b) else {
            return 0.0;
        };
        // (rho + r) = beta + t
        let beta = rho - b;
        match self.weight {
            Weight::Value => {
                if self.dim == 2 {
                    beta * t[0] + t[1]
                } else {
                    beta * beta * t[0] + 2.0 * beta * t[1] + t[2]
                }
            }
            Weight::Partial(i) => {
                // p_i = alpha + omega_i t
                let alpha = x[i] - b * omega[i];
                let wi = omega[i];
                if self.dim == 2 {
                    beta * (alpha * t[0] + wi * t[1]) + (alpha * t[1] + wi * t[2])
                } else {
                    beta * beta * (alpha * t[0] + wi * t[1])
                        + 2.0 * beta * (alpha * t[1] + wi * t[2])
                        + (alpha * t[2] + wi * t[3])
                }
            }
        }
    }
}

/// Radial integrals either by Gauss–Legendre on each ray or from a table.
enum Radial {
    Direct(GaussLegendre),
    Table(RadialTable),
}

impl Radial {
    fn new(bump: &BumpFunction, weight: Weight, cfg: &BogovskiiConfig) -> Self {
        match cfg.kernel_table {
            Some(res) => Radial::Table(RadialTable::new(bump, weight, res)),
            None => Radial::Direct(GaussLegendre::new(cfg.radial_order)),
        }
    }

    #[inline]
    fn eval(&self, bump: &BumpFunction, weight: Weight, x: &Point, omega: &Point, rho: f64) -> f64 {
        match self {
            Radial::Direct(gl) => ray_integral(bump, weight, x, omega, rho, gl),
            Radial::Table(t) => t.radial_integral(x, omega, rho),
        }
    }
}

/// `K_w(x, y)` for the chosen bump weight.
pub fn eval_kernel(
    bump: &BumpFunction,
    weight: Weight,
    x: &[f64],
    y: &[f64],
    cfg: &BogovskiiConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = bump.dim;
    if x.len() != n || y.len() != n {
        return Err(Error::InvalidArgument("kernel arguments must match the bump dimension".into()));
    }
    let rho = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rho == 0.0 {
        return Err(Error::Singular);
    }
    let gl = GaussLegendre::new(cfg.radial_order);
    let omega = pad(&y.iter().map(|v| v / rho).collect::<Vec<_>>());
    let w = ray_integral(bump, weight, &pad(x), &omega, rho, &gl);
    let scale = w / rho.powi(n as i32);
    Ok(y.iter().map(|v| v * scale).collect())
}

/// Largest `|f|` at grid points outside the closure of `dom`.
fn max_outside(f: &GridField, dom: &StarDomain) -> f64 {
    let g = f.grid();
    let d = g.dim();
    (0..g.len())
        .filter(|&i| !dom.contains_closed(&g.point(i)[..d], 1e-9))
        .fold(0.0, |m, i| m.max(f.values()[i].abs()))
}

fn check_support(f: &GridField, dom: &StarDomain) -> Result<()> {
    let outside = max_outside(f, dom);
    let scale = f.max_abs();
    if outside > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotCompactlySupported { max_outside: outside });
    }
    Ok(())
}

/// Samples grid data off the nodes. Linear interpolation treats everything
/// beyond the grid as zero; cubic interpolation shifts its stencil inwards
/// within half a cell of the outer nodes and is zero further out.
struct Sampler<'a> {
    grid: &'a Grid,
    values: &'a [f64],
}

impl Sampler<'_> {
    fn new(f: &GridField) -> Sampler<'_> {
        Sampler {
            grid: f.grid(),
            values: f.values(),
        }
    }

    #[inline]
    fn at(&self, m: [isize; MAX_DIM]) -> f64 {
        let g = self.grid;
        let shape = g.shape();
        let mut idx = 0usize;
        let strides = g.strides();
        for a in 0..g.dim() {
            if m[a] < 0 || m[a] as usize >= shape[a] {
                return 0.0;
            }
            idx += m[a] as usize * strides[a];
        }
        self.values[idx]
    }

    #[inline]
    fn linear(&self, x: &Point) -> f64 {
        let g = self.grid;
        let d = g.dim();
        let mut base = [0isize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..d {
            let t = (x[a] - g.origin()[a]) / g.spacing()[a];
            let f = t.floor();
            base[a] = f as isize;
            frac[a] = t - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut m = base;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                m[a] += bit as isize;
            }
            if w != 0.0 {
                acc += w * self.at(m);
            }
        }
        acc
    }

    /// Tensor four-point Lagrange interpolation.
    #[inline]
    fn cubic(&self, x: &Point) -> f64 {
        let g = self.grid;
        let d = g.dim();
        let shape = g.shape();
        let mut base = [0isize; MAX_DIM];
        let mut w = [[0.0; 4]; MAX_DIM];
        for a in 0..d {
            let t = (x[a] - g.origin()[a]) / g.spacing()[a];
            let len = shape[a] as isize;
            let b = if len >= 4 {
                if t < -0.5 - 1e-9 || t > (len - 1) as f64 + 0.5 + 1e-9 {
                    return 0.0;
                }
                (t.floor() as isize - 1).clamp(0, len - 4)
            } else {
                t.floor() as isize - 1
            };
            base[a] = b;
            let s = t - b as f64;
            w[a] = [
                -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
                s * (s - 2.0) * (s - 3.0) / 2.0,
                -s * (s - 1.0) * (s - 3.0) / 2.0,
                s * (s - 1.0) * (s - 2.0) / 6.0,
            ];
        }
        let mut acc = 0.0;
        let count = 4usize.pow(d as u32);
        for c in 0..count {
            let mut wt = 1.0;
            let mut m = base;
            let mut rem = c;
            for a in 0..d {
                let j = rem % 4;
                rem /= 4;
                wt *= w[a][j];
                m[a] += j as isize;
            }
            acc += wt * self.at(m);
        }
        acc
    }
}

/// Quadrature on the unit sphere: directions and weights summing to its area.
fn sphere_rule(dim: usize, order: usize) -> Vec<(Point, f64)> {
    use std::f64::consts::PI;
    if dim == 2 {
        let w = 2.0 * PI / order as f64;
        (0..order)
            .map(|j| {
                let th = 2.0 * PI * (j as f64 + 0.5) / order as f64;
                ([th.cos(), th.sin(), 0.0], w)
            })
            .collect()
    } else {
        let gl = GaussLegendre::new(order);
        let az = 2 * order;
        let mut out = Vec::with_capacity(order * az);
        for (&mu, &wm) in gl.nodes().iter().zip(gl.weights()) {
            let s = (1.0 - mu * mu).sqrt();
            for j in 0..az {
                let th = 2.0 * PI * (j as f64 + 0.5) / az as f64;
                out.push(([s * th.cos(), s * th.sin(), mu], wm * 2.0 * PI / az as f64));
            }
        }
        out
    }
}

fn check_inputs(bump: &BumpFunction, weight: Weight, f: &GridField, dom: &StarDomain) -> Result<()> {
    let n = f.grid().dim();
    if n != bump.dim || n != dom.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: field {n}, bump {}, domain {}",
            bump.dim,
            dom.dim()
        )));
    }
    if let Weight::Partial(i) = weight {
        if i >= n {
            return Err(Error::InvalidArgument(format!("derivative index {i} out of range")));
        }
    }
    check_support(f, dom)
}

/// `B_w f` on the grid of `f`, for `f` supported in the closure of `dom`.
pub fn apply_bogovskii(
    bump: &BumpFunction,
    weight: Weight,
    f: &GridField,
    dom: &StarDomain,
    cfg: &BogovskiiConfig,
) -> Result<VectorField> {
    cfg.validate()?;
    check_inputs(bump, weight, f, dom)?;
    let out = match cfg.scheme {
        Scheme::Subdivision => subdivision_sum(bump, weight, f, cfg),
        Scheme::Partition => partition_sum(bump, weight, f, dom, cfg),
    };
    let grid = f.grid();
    let components = (0..grid.dim())
        .map(|a| GridField::from_values(grid, out.iter().map(|v| v[a]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(VectorField::new(components))
}

fn weighted_sources(f: &GridField) -> Vec<(Point, f64)> {
    let grid = f.grid();
    let cell = grid.cell_volume();
    (0..grid.len())
        .filter(|&i| f.values()[i] != 0.0)
        .map(|i| (grid.point(i), f.values()[i] * cell))
        .collect()
}

fn subdivision_sum(bump: &BumpFunction, weight: Weight, f: &GridField, cfg: &BogovskiiConfig) -> Vec<Point> {
    let grid = f.grid();
    let n = grid.dim();
    let spacing = grid.spacing();
    let hmin = spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps = cfg.epsilon.unwrap_or(hmin);
    let eps2 = eps * eps * (1.0 + 1e-12);
    let radial = Radial::new(bump, weight, cfg);
    let sources = weighted_sources(f);
    let sampler = Sampler::new(f);

    // Integer offsets of cells whose centres lie within eps.
    let reach: Vec<isize> = (0..MAX_DIM)
        .map(|a| if a < n { (eps / spacing[a]).floor() as isize } else { 0 })
        .collect();
    let mut near_offsets = Vec::new();
    for o2 in -reach[2]..=reach[2] {
        for o1 in -reach[1]..=reach[1] {
            for o0 in -reach[0]..=reach[0] {
                let o = [o0, o1, o2];
                let r2: f64 = (0..n).map(|a| (o[a] as f64 * spacing[a]).powi(2)).sum();
                if r2 <= eps2 {
                    near_offsets.push(o);
                }
            }
        }
    }
    let sub = cfg.subdivision;
    let sub_count = sub.pow(n as u32);
    let sub_offsets: Vec<Point> = (0..sub_count)
        .map(|k| {
            let mut p = [0.0; MAX_DIM];
            let mut rem = k;
            for a in 0..n {
                let j = rem % sub;
                rem /= sub;
                p[a] = ((j as f64 + 0.5) / sub as f64 - 0.5) * spacing[a];
            }
            p
        })
        .collect();
    let sub_weight = grid.cell_volume() / sub_count as f64;

    (0..grid.len())
        .into_par_iter()
        .map(|ti| {
            let x = grid.point(ti);
            let mut acc = [0.0; MAX_DIM];
            let mut add = |y: &Point, r: f64, fw: f64| {
                let omega = [y[0] / r, y[1] / r, y[2] / r];
                let w = radial.eval(bump, weight, &x, &omega, r);
                if w != 0.0 {
                    let s = fw * w / r.powi(n as i32);
                    for a in 0..n {
                        acc[a] += s * y[a];
                    }
                }
            };
            for (z, fw) in &sources {
                let y = [x[0] - z[0], x[1] - z[1], x[2] - z[2]];
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                if r2 <= eps2 {
                    continue;
                }
                add(&y, r2.sqrt(), *fw);
            }
            let m = grid.multi_index(ti);
            for o in &near_offsets {
                let mut inside = true;
                for a in 0..n {
                    let j = m[a] as isize + o[a];
                    inside &= j >= 0 && (j as usize) < grid.shape()[a];
                }
                if !inside {
                    continue;
                }
                for so in &sub_offsets {
                    let mut zs = [0.0; MAX_DIM];
                    for a in 0..n {
                        zs[a] = x[a] + o[a] as f64 * spacing[a] + so[a];
                    }
                    let fv = sampler.linear(&zs);
                    if fv == 0.0 {
                        continue;
                    }
                    let y = [x[0] - zs[0], x[1] - zs[1], x[2] - zs[2]];
                    let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
                    add(&y, r, fv * sub_weight);
                }
            }
            acc
        })
        .collect()
}

/// Near-field weight `chi(r)`: 1 for `r <= eps / 2`, 0 for `r >= eps`.
#[inline]
fn near_weight(r: f64, eps: f64) -> f64 {
    crate::geometry::smooth_step(2.0 * (eps - r) / eps).0
}

fn partition_sum(
    bump: &BumpFunction,
    weight: Weight,
    f: &GridField,
    dom: &StarDomain,
    cfg: &BogovskiiConfig,
) -> Vec<Point> {
    let grid = f.grid();
    let n = grid.dim();
    let eps = cfg.epsilon.unwrap_or(0.5 * bump.support_radius);
    let eps2 = eps * eps;
    let inner2 = 0.25 * eps2 * (1.0 - 1e-12);
    let gl = GaussLegendre::new(cfg.radial_order);
    let radial = Radial::new(bump, weight, cfg);
    let near_gl = GaussLegendre::new(cfg.near_radial_order);
    let near_nodes: Vec<(f64, f64, f64)> = near_gl
        .on_interval(0.0, eps)
        .map(|(r, w)| (r, w, near_weight(r, eps)))
        .collect();
    let near_gl = &near_gl;
    let dirs = sphere_rule(n, cfg.angular_order);
    let sources = weighted_sources(f);
    let sampler = Sampler::new(f);

    (0..grid.len())
        .into_par_iter()
        .map(|ti| {
            let x = grid.point(ti);
            let mut acc = [0.0; MAX_DIM];
            // far part: K (1 - chi) on the grid
            for (z, fw) in &sources {
                let y = [x[0] - z[0], x[1] - z[1], x[2] - z[2]];
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                if r2 <= inner2 {
                    continue;
                }
                let r = r2.sqrt();
                let far = if r2 >= eps2 { 1.0 } else { 1.0 - near_weight(r, eps) };
                let omega = [y[0] / r, y[1] / r, y[2] / r];
                let w = radial.eval(bump, weight, &x, &omega, r);
                if w != 0.0 {
                    let s = far * fw * w / r.powi(n as i32);
                    for a in 0..n {
                        acc[a] += s * y[a];
                    }
                }
            }
            // near part: K chi in polar coordinates about x, restricted to
            // the piece of each ray inside the domain so that data jumping
            // to zero at the boundary is integrated without crossing it
            for (omega, wd) in &dirs {
                let back = [-omega[0], -omega[1], -omega[2]];
                let Some((t0, t1)) = dom.segment(&x[..n], &back[..n]) else {
                    continue;
                };
                let (lo, hi) = (t0.max(0.0), t1.min(eps));
                if hi <= lo {
                    continue;
                }
                let Some(m) = ray_moments(bump, weight, &x, omega, &gl) else {
                    continue;
                };
                let split = lo > 0.0 || hi < eps;
                let mut s = 0.0;
                let mut add = |r: f64, wr: f64, chi: f64| {
                    let p = [x[0] - r * omega[0], x[1] - r * omega[1], x[2] - r * omega[2]];
                    let fv = sampler.cubic(&p);
                    if fv == 0.0 {
                        return;
                    }
                    let radial = if n == 2 {
                        r * m[0] + m[1]
                    } else {
                        r * r * m[0] + 2.0 * r * m[1] + m[2]
                    };
                    s += wr * chi * fv * radial;
                };
                if split {
                    for (r, wr) in near_gl.on_interval(lo, hi) {
                        add(r, wr, near_weight(r, eps));
                    }
                } else {
                    for &(r, wr, chi) in &near_nodes {
                        add(r, wr, chi);
                    }
                }
                for a in 0..n {
                    acc[a] += wd * s * omega[a];
                }
            }
            acc
        })
        .collect()
}

/// The rescaled operator `B f(x) = R B_phi(f~)((x - x0) / R)` with
/// `f~(y) = f(x0 + R y)`, `R = R_i(G) / 2` and `phi` normalized on `B_1`.
#[derive(Clone, Debug)]
pub struct ScaledBogovskii {
    domain: StarDomain,
    bump: BumpFunction,
    radius: f64,
    cfg: BogovskiiConfig,
}

impl ScaledBogovskii {
    pub fn new(domain: &StarDomain, cfg: &BogovskiiConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ScaledBogovskii {
            bump: BumpFunction::normalized(domain.dim(), 1.0)?,
            radius: 0.5 * domain.star_radius(),
            domain: domain.clone(),
            cfg: cfg.clone(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn bump(&self) -> &BumpFunction {
        &self.bump
    }

    pub fn domain(&self) -> &StarDomain {
        &self.domain
    }

    /// `phi((x - x0) / R) R^{-n}`, the correction profile in the divergence identity.
    pub fn correction_profile(&self, x: &[f64]) -> f64 {
        let c = self.domain.center();
        let y: Vec<f64> = x.iter().zip(c).map(|(v, c)| (v - c) / self.radius).collect();
        self.bump.value(&y) / self.radius.powi(self.domain.dim() as i32)
    }

    pub fn apply(&self, f: &GridField) -> Result<VectorField> {
        let c = self.domain.center().to_vec();
        let r = self.radius;
        let reference = f.grid().mapped(&c, r);
        let f_ref = GridField::from_values(&reference, f.values().to_vec())?;
        let dom_ref = self.domain.mapped(&c, r)?;
        let mut cfg = self.cfg.clone();
        cfg.epsilon = cfg.epsilon.map(|e| e / r);
        let v = apply_bogovskii(&self.bump, Weight::Value, &f_ref, &dom_ref, &cfg)?;
        let components = v
            .components
            .iter()
            .map(|comp| GridField::from_values(f.grid(), comp.values().iter().map(|x| x * r).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField::new(components))
    }
}

pub fn apply_scaled(dom: &StarDomain, f: &GridField, cfg: &BogovskiiConfig) -> Result<VectorField> {
    ScaledBogovskii::new(dom, cfg)?.apply(f)
}

fn require_fine_grid(grid: &Grid) -> Result<()> {
    if grid.shape().iter().any(|&s| s < 4) {
        return Err(Error::GridTooCoarse(format!(
            "centred differences need at least 4 points per axis, grid has {:?}",
            grid.shape()
        )));
    }
    Ok(())
}

/// Relative L2 mismatch between `div_h v` and `expected` over the points
/// where the centred divergence is defined.
fn relative_divergence_mismatch(v: &VectorField, expected: &GridField, reference: f64) -> Result<f64> {
    let grid = expected.grid();
    require_fine_grid(grid)?;
    let mut div: Option<GridField> = None;
    for (a, comp) in v.components.iter().enumerate() {
        let d = comp.derivative_centered(a)?;
        div = Some(match div {
            None => d,
            Some(s) => s.add(&d)?,
        });
    }
    let div = div.ok_or_else(|| Error::InvalidArgument("empty vector field".into()))?;
    let diff = div.sub(expected)?;
    let num = diff.norm_l2();
    let den = match diff.mask() {
        Some(m) => expected.clone().with_mask(m.to_vec())?.norm_l2(),
        None => expected.norm_l2(),
    };
    let den = den.max(reference);
    Ok(if den > 0.0 { num / den } else { num })
}

/// Residual of `div B(f) = f - phi((x - x0)/R) R^{-n} ∫_G f` for `v = B(f)`,
/// relative to `||f||`.
pub fn divergence_residual(v: &VectorField, f: &GridField, op: &ScaledBogovskii) -> Result<f64> {
    let total = f.integral();
    let expected = {
        let g = f.grid();
        let d = g.dim();
        let vals = (0..g.len())
            .map(|i| f.values()[i] - op.correction_profile(&g.point(i)[..d]) * total)
            .collect();
        GridField::from_values(g, vals)?
    };
    relative_divergence_mismatch(v, &expected, 0.0)
}

/// Residual of `div B_phi f = f ∫phi - phi ∫f` for the unscaled operator.
pub fn unscaled_divergence_residual(v: &VectorField, f: &GridField, bump: &BumpFunction) -> Result<f64> {
    let total = f.integral();
    let mass = bump.integral();
    let g = f.grid();
    let d = g.dim();
    let vals = (0..g.len())
        .map(|i| f.values()[i] * mass - bump.value(&g.point(i)[..d]) * total)
        .collect();
    relative_divergence_mismatch(v, &GridField::from_values(g, vals)?, 0.0)
}

/// `d_i B_phi f = B_phi(d_i f) + B_{d_i phi} f`, the building block of the
/// commutator identity.
fn derivative_of_bogovskii(
    bump: &BumpFunction,
    f: &GridField,
    i: usize,
    dom: &StarDomain,
    cfg: &BogovskiiConfig,
) -> Result<VectorField> {
    let fi = f.derivative(i)?;
    let a = apply_bogovskii(bump, Weight::Value, &fi, dom, cfg)?;
    let b = apply_bogovskii(bump, Weight::Partial(i), f, dom, cfg)?;
    a.combine(1.0, &b, 1.0)
}

/// Relative residual of
/// `d_j B_phi(d_i f) = d_i B_phi(d_j f) + d_i B_{d_j phi}(f) - d_j B_{d_i phi}(f)`,
/// each operator application computed independently.
pub fn commutator_residual(
    bump: &BumpFunction,
    f: &GridField,
    i: usize,
    j: usize,
    dom: &StarDomain,
    cfg: &BogovskiiConfig,
) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidArgument("commutator identity needs i != j".into()));
    }
    let n = f.grid().dim();
    if i >= n || j >= n {
        return Err(Error::InvalidArgument("axis index out of range".into()));
    }
    require_fine_grid(f.grid())?;
    let qi = derivative_of_bogovskii(bump, f, i, dom, cfg)?;
    let qj = derivative_of_bogovskii(bump, f, j, dom, cfg)?;
    let mut num = 0.0;
    let mut den_a = 0.0;
    let mut den_b = 0.0;
    for c in 0..n {
        let lhs = qi.components[c].derivative_centered(j)?;
        let rhs = qj.components[c].derivative_centered(i)?;
        let diff = lhs.sub(&rhs)?;
        num += diff.norm_l2().powi(2);
        den_a += lhs.norm_l2().powi(2);
        den_b += rhs.norm_l2().powi(2);
    }
    let den = (den_a + den_b).sqrt();
    Ok(if den > 0.0 { num.sqrt() / den } else { 0.0 })
}

/// `max_f ||grad^k B f||_q / ||grad^{k-1} f||_q` over the nonzero members of
/// `family`: an empirical lower witness for the operator bound.
pub fn norm_bound_probe(
    dom: &StarDomain,
    family: &[GridField],
    k: usize,
    q: f64,
    cfg: &BogovskiiConfig,
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("probe family is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("probe order k must be at least 1".into()));
    }
    let op = ScaledBogovskii::new(dom, cfg)?;
    let mut best: Option<f64> = None;
    for f in family {
        if f.max_abs() == 0.0 {
            continue;
        }
        let v = op.apply(f)?;
        let num = norms::seminorm(&v.components, q, k, &crate::grid::Region::All)?;
        let den = norms::seminorm(std::slice::from_ref(f), q, k - 1, &crate::grid::Region::All)?;
        if den > 0.0 {
            let r = num / den;
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or_else(|| Error::UndefinedRatio("every probe field is zero".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_bump_has_unit_mass() {
        for dim in [2, 3] {
            for a in [1.0, 2.0] {
                let b = BumpFunction::normalized(dim, a).unwrap();
                assert!((b.integral() - 1.0).abs() < 1e-13);
                assert!(b.is_normalized());
            }
        }
    }

    #[test]
    fn bump_mass_matches_grid_quadrature() {
        let b = BumpFunction::new(2, 1.0).unwrap();
        let g = Grid::cells(&[-1.0, -1.0], &[1.0, 1.0], &[400, 400]).unwrap();
        let f = GridField::from_fn(&g, |x| b.value(x));
        assert!((f.integral() - b.integral()).abs() < 1e-8);
    }

    #[test]
    fn bump_partial_matches_difference() {
        let b = BumpFunction::new(3, 2.0).unwrap();
        let x = [0.3, -0.7, 0.5];
        let h = 1e-6;
        for i in 0..3 {
            let mut p = x;
            let mut m = x;
            p[i] += h;
            m[i] -= h;
            let fd = (b.value(&p) - b.value(&m)) / (2.0 * h);
            assert!((fd - b.partial(&x, i)).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_rejects_zero_direction() {
        let b = BumpFunction::new(2, 1.0).unwrap();
        let cfg = BogovskiiConfig::default();
        assert_eq!(eval_kernel(&b, Weight::Value, &[0.0, 0.0], &[0.0, 0.0], &cfg), Err(Error::Singular));
    }

    #[test]
    fn kernel_is_parallel_to_y() {
        let b = BumpFunction::normalized(3, 2.0).unwrap();
        let cfg = BogovskiiConfig::default();
        let y = [0.3, -1.1, 0.4];
        let k = eval_kernel(&b, Weight::Value, &[0.2, 0.1, -0.3], &y, &cfg).unwrap();
        let s = k[0] / y[0];
        assert!(s > 0.0);
        for a in 0..3 {
            assert_eq!(k[a], y[a] * s);
        }
    }

    #[test]
    fn kernel_vanishes_when_ray_misses_support() {
        let b = BumpFunction::new(2, 1.0).unwrap();
        let k = eval_kernel(&b, Weight::Value, &[3.0, 0.0], &[1.0, 0.0], &BogovskiiConfig::default()).unwrap();
        assert_eq!(k, vec![0.0, 0.0]);
    }

    #[test]
    fn kernel_matches_dense_reference_on_axis() {
        // x = 0, y = e1: e1 * ∫_0^a phi(r e1)(1 + r)^{n-1} dr, reference by
        // a 10^4-node composite Simpson rule.
        for dim in [2, 3] {
            let b = BumpFunction::normalized(dim, 1.0).unwrap();
            let mut y = vec![0.0; dim];
            y[0] = 1.0;
            let fine = BogovskiiConfig {
                radial_order: 128,
                ..BogovskiiConfig::default()
            };
            let k = eval_kernel(&b, Weight::Value, &vec![0.0; dim], &y, &BogovskiiConfig::default()).unwrap();
            let kf = eval_kernel(&b, Weight::Value, &vec![0.0; dim], &y, &fine).unwrap();
            let m = 10_000;
            let h = 1.0 / m as f64;
            let g = |r: f64| {
                let mut p = vec![0.0; dim];
                p[0] = r;
                b.value(&p) * (1.0 + r).powi(dim as i32 - 1)
            };
            let mut s = g(0.0) + g(1.0);
            for i in 1..m {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
            }
            let reference = s * h / 3.0;
            assert!((k[0] - reference).abs() < 1e-8 * reference, "{} vs {}", k[0], reference);
            assert!((kf[0] - reference).abs() < 1e-12 * reference, "{} vs {}", kf[0], reference);
        }
    }

    #[test]
    fn tabulated_radial_integral_matches_direct_rays() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let gl = GaussLegendre::new(128);
        for dim in [2, 3] {
            let bump = BumpFunction::normalized(dim, 2.0).unwrap();
            for weight in [Weight::Value, Weight::Partial(0), Weight::Partial(dim - 1)] {
                let table = RadialTable::new(&bump, weight, 256);
                let mut worst = 0.0f64;
                let mut scale = 0.0f64;
                for _ in 0..2000 {
                    let mut x = [0.0; MAX_DIM];
                    let mut o = [0.0; MAX_DIM];
                    for a in 0..dim {
                        x[a] = rng.random_range(-3.0..3.0);
                        o[a] = rng.random_range(-1.0..1.0);
                    }
                    let norm = o.iter().map(|v| v * v).sum::<f64>().sqrt();
                    o.iter_mut().for_each(|v| *v /= norm);
                    let rho = rng.random_range(0.05..5.0);
                    let direct = ray_integral(&bump, weight, &x, &o, rho, &gl);
                    let tab = table.radial_integral(&x, &o, rho);
                    worst = worst.max((direct - tab).abs());
                    scale = scale.max(direct.abs());
                }
                assert!(worst < 1e-7 * scale, "dim {dim} {weight:?}: {worst:e} vs {scale:e}");
            }
        }
    }

    fn two_bump(g: &Grid) -> GridField {
        GridField::from_fn(g, |x| {
            let bump = |cx: f64, cy: f64| {
                let r2 = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / 0.49;
                if r2 < 1.0 {
                    (-1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            };
            bump(0.8, 0.3) - bump(-0.6, -0.5)
        })
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 2.5).unwrap();
        let g = Grid::nodes(&[-2.5, -2.5], &[2.5, 2.5], &[17, 17]).unwrap();
        let b = BumpFunction::normalized(2, 2.0).unwrap();
        let v = apply_bogovskii(&b, Weight::Value, &GridField::zeros(&g), &dom, &BogovskiiConfig::default()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn rejects_data_outside_domain() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let g = Grid::nodes(&[-2.0, -2.0], &[2.0, 2.0], &[9, 9]).unwrap();
        let f = GridField::from_fn(&g, |_| 1.0);
        let b = BumpFunction::normalized(2, 0.5).unwrap();
        assert!(matches!(
            apply_bogovskii(&b, Weight::Value, &f, &dom, &BogovskiiConfig::default()),
            Err(Error::NotCompactlySupported { .. })
        ));
    }

    #[test]
    fn linearity() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 2.5).unwrap();
        let g = Grid::nodes(&[-2.5, -2.5], &[2.5, 2.5], &[21, 21]).unwrap();
        let b = BumpFunction::normalized(2, 2.0).unwrap();
        let cfg = BogovskiiConfig::default();
        let f1 = two_bump(&g);
        let f2 = GridField::from_fn(&g, |x| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / 2.25;
            if r2 < 1.0 {
                x[0] * (-1.0 / (1.0 - r2)).exp()
            } else {
                0.0
            }
        });
        let (alpha, beta) = (1.7, -0.4);
        let mix = f1.combine(alpha, &f2, beta).unwrap();
        let lhs = apply_bogovskii(&b, Weight::Value, &mix, &dom, &cfg).unwrap();
        let r1 = apply_bogovskii(&b, Weight::Value, &f1, &dom, &cfg).unwrap();
        let r2 = apply_bogovskii(&b, Weight::Value, &f2, &dom, &cfg).unwrap();
        let rhs = r1.combine(alpha, &r2, beta).unwrap();
        let diff = lhs.combine(1.0, &rhs, -1.0).unwrap().norm_l2();
        assert!(diff <= 1e-10 * rhs.norm_l2());
    }

    #[test]
    fn output_vanishes_outside_domain() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 2.5).unwrap();
        let g = Grid::nodes(&[-3.0, -3.0], &[3.0, 3.0], &[25, 25]).unwrap();
        let b = BumpFunction::normalized(2, 2.0).unwrap();
        let v = apply_bogovskii(&b, Weight::Value, &two_bump(&g), &dom, &BogovskiiConfig::default()).unwrap();
        let mut inside = 0.0f64;
        let mut outside = 0.0f64;
        for i in 0..g.len() {
            let p = g.point(i);
            let m = v.components[0].values()[i].abs().max(v.components[1].values()[i].abs());
            if dom.contains_closed(&p[..2], 1e-9) {
                inside = inside.max(m);
            } else {
                outside = outside.max(m);
            }
        }
        assert!(inside > 0.0);
        assert!(outside <= 1e-6 * inside, "outside {outside} inside {inside}");
    }

    #[test]
    fn scaled_operator_replays_definition() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 5.0).unwrap();
        let g = Grid::nodes(&[-5.0, -5.0], &[5.0, 5.0], &[21, 21]).unwrap();
        let f = GridField::from_fn(&g, |x| {
            let r2 = ((x[0] - 1.0).powi(2) + x[1] * x[1]) / 4.0;
            if r2 < 1.0 {
                (-1.0 / (1.0 - r2)).exp()
            } else {
                0.0
            }
        });
        let cfg = BogovskiiConfig::default();
        let op = ScaledBogovskii::new(&dom, &cfg).unwrap();
        assert_eq!(op.radius(), 2.5);
        let v = op.apply(&f).unwrap();

        // manual: rescale grid by 1/R, apply B_phi with phi on B_1, multiply by R
        let r = 2.5;
        let g_ref = Grid::nodes(&[-2.0, -2.0], &[2.0, 2.0], &[21, 21]).unwrap();
        let f_ref = GridField::from_values(&g_ref, f.values().to_vec()).unwrap();
        let dom_ref = StarDomain::ball(2, &[0.0, 0.0], 2.0).unwrap();
        let phi = BumpFunction::normalized(2, 1.0).unwrap();
        let w = apply_bogovskii(&phi, Weight::Value, &f_ref, &dom_ref, &cfg).unwrap();
        for c in 0..2 {
            for i in 0..g.len() {
                let a = v.components[c].values()[i];
                let b = r * w.components[c].values()[i];
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn zero_forcing_has_zero_residual() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let g = Grid::nodes(&[-1.0, -1.0], &[1.0, 1.0], &[9, 9]).unwrap();
        let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
        let f = GridField::zeros(&g);
        let v = op.apply(&f).unwrap();
        assert_eq!(divergence_residual(&v, &f, &op).unwrap(), 0.0);
    }

    #[test]
    fn residual_rejects_coarse_grids() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let g = Grid::nodes(&[-1.0, -1.0], &[1.0, 1.0], &[3, 3]).unwrap();
        let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
        let f = GridField::zeros(&g);
        let v = VectorField::zeros(&g, 2);
        assert!(matches!(divergence_residual(&v, &f, &op), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn commutator_rejects_equal_indices() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 2.5).unwrap();
        let g = Grid::nodes(&[-2.5, -2.5], &[2.5, 2.5], &[9, 9]).unwrap();
        let b = BumpFunction::normalized(2, 2.0).unwrap();
        let f = GridField::zeros(&g);
        assert!(commutator_residual(&b, &f, 1, 1, &dom, &BogovskiiConfig::default()).is_err());
        assert_eq!(commutator_residual(&b, &f, 0, 1, &dom, &BogovskiiConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn probe_rejects_empty_and_all_zero_families() {
        let dom = StarDomain::ball(2, &[0.0, 0.0], 1.0).unwrap();
        let g = Grid::nodes(&[-1.0, -1.0], &[1.0, 1.0], &[9, 9]).unwrap();
        let cfg = BogovskiiConfig::default();
        assert!(norm_bound_probe(&dom, &[], 1, 2.0, &cfg).is_err());
        assert!(matches!(
            norm_bound_probe(&dom, &[GridField::zeros(&g)], 1, 2.0, &cfg),
            Err(Error::UndefinedRatio(_))
        ));
    }
}
