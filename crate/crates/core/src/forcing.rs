//! Forcing families for sweeps: seeded band-limited trigonometric sums and a
//! few named closed forms.
//!
//! Every term has the form `(1 + b sin(w t)) v cos(k . x + phi)`. The
//! direction `v` decides the character of the sum: random for general
//! forcing, `v` orthogonal to `k` for solenoidal forcing (curl of a stream
//! function or vector potential), `v` parallel to `k` for gradients.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField, SpaceTimeField, VectorField};
use crate::stokes::Forcing;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Character {
    General,
    Solenoidal,
    Gradient,
}

impl FromStr for Character {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Character::General),
            "solenoidal" => Ok(Character::Solenoidal),
            "gradient" => Ok(Character::Gradient),
            other => Err(Error::InvalidArgument(format!("unknown forcing character `{other}`"))),
        }
    }
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Character::General => "general",
            Character::Solenoidal => "solenoidal",
            Character::Gradient => "gradient",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigTerm {
    pub wave: Vec<f64>,
    pub direction: Vec<f64>,
    pub phase: f64,
    pub time_amplitude: f64,
    pub time_frequency: f64,
}

impl TrigTerm {
    fn value(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let arg: f64 = self.wave.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + self.phase;
        let s = (1.0 + self.time_amplitude * (self.time_frequency * t).sin()) * arg.cos();
        for (o, v) in out.iter_mut().zip(&self.direction) {
            *o += s * v;
        }
    }
}

/// A finite sum of [`TrigTerm`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigSum {
    dim: usize,
    terms: Vec<TrigTerm>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidArgument(format!("forcing dimension must be 2 or 3, got {dim}")));
    }
    Ok(())
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl TrigSum {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        check_dim(dim)?;
        if terms.iter().any(|t| t.wave.len() != dim || t.direction.len() != dim) {
            return Err(Error::InvalidArgument("term vectors must match the dimension".into()));
        }
        Ok(TrigSum { dim, terms })
    }

    /// `modes` terms with integer wave vectors `pi m`, `1 <= |m|_inf <= max_wave`,
    /// coefficients decaying like `|m|^{-2}`, drawn from a ChaCha8 stream
    /// seeded with `seed`.
    pub fn random(dim: usize, character: Character, modes: usize, max_wave: u32, seed: u64) -> Result<Self> {
        check_dim(dim)?;
        if modes == 0 || max_wave == 0 {
            return Err(Error::InvalidArgument("need at least one mode and wave number".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mw = max_wave as i64;
        let mut terms = Vec::with_capacity(modes);
        while terms.len() < modes {
            let m: Vec<i64> = (0..dim).map(|_| rng.random_range(-mw..=mw)).collect();
            if m.iter().all(|&v| v == 0) {
                continue;
            }
            let wave: Vec<f64> = m.iter().map(|&v| std::f64::consts::PI * v as f64).collect();
            let size = m.iter().map(|&v| (v * v) as f64).sum::<f64>();
            let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0) / size).collect();
            let direction = match character {
                Character::General => a,
                Character::Gradient => {
                    let c = a[0] * size.sqrt() / std::f64::consts::PI;
                    wave.iter().map(|k| -c * k).collect()
                }
                Character::Solenoidal if dim == 2 => {
                    let c = a[0] * size.sqrt() / std::f64::consts::PI;
                    vec![c * wave[1], -c * wave[0]]
                }
                Character::Solenoidal => cross(&wave, &a).iter().map(|v| v / std::f64::consts::PI).collect(),
            };
            terms.push(TrigTerm {
                wave,
                direction,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                time_amplitude: rng.random_range(0.0..0.5),
                time_frequency: rng.random_range(1.0..4.0),
            });
        }
        TrigSum::new(dim, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn value(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for term in &self.terms {
            term.value(t, x, &mut out);
        }
        out
    }

    /// Exact divergence at `(t, x)`.
    pub fn divergence(&self, t: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                let arg: f64 = term.wave.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + term.phase;
                let s = 1.0 + term.time_amplitude * (term.time_frequency * t).sin();
                -s * arg.sin() * term.wave.iter().zip(&term.direction).map(|(k, v)| k * v).sum::<f64>()
            })
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            for v in &mut t.direction {
                *v *= c;
            }
        }
        out
    }
}

/// Named closed-form forcings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Named {
    Zero,
    /// `(sin(pi y), 0, ..)`, constant in time.
    Shear,
    /// Curl of `sin^2(pi x) sin^2(pi y)` times `1 + t`.
    Vortex,
    /// `grad(x^2 y)` times `cos t`.
    Potential,
    /// Sum of the three above.
    Mixed,
}

impl FromStr for Named {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Named::Zero),
            "shear" => Ok(Named::Shear),
            "vortex" => Ok(Named::Vortex),
            "potential" => Ok(Named::Potential),
            "mixed" => Ok(Named::Mixed),
            other => Err(Error::InvalidArgument(format!("unknown named forcing `{other}`"))),
        }
    }
}

impl Named {
    pub fn value(self, t: f64, x: &[f64]) -> Vec<f64> {
        use std::f64::consts::PI;
        let mut out = vec![0.0; x.len()];
        match self {
            Named::Zero => {}
            Named::Shear => out[0] = (PI * x[1]).sin(),
            Named::Vortex => {
                let (sx, cx) = (PI * x[0]).sin_cos();
                let (sy, cy) = (PI * x[1]).sin_cos();
                let g = 1.0 + t;
                out[0] = g * 2.0 * PI * sx * sx * sy * cy;
                out[1] = -g * 2.0 * PI * sx * cx * sy * sy;
            }
            Named::Potential => {
                out[0] = t.cos() * 2.0 * x[0] * x[1];
                out[1] = t.cos() * x[0] * x[0];
            }
            Named::Mixed => {
                for n in [Named::Shear, Named::Vortex, Named::Potential] {
                    for (o, v) in out.iter_mut().zip(n.value(t, x)) {
                        *o += v;
                    }
                }
            }
        }
        out
    }
}

/// A forcing `f(t, x)` usable by the solver and the sweeps.
#[derive(Clone, Debug, PartialEq)]
pub enum ForcingSpec {
    Named(Named),
    Trig(TrigSum),
    Scaled(Box<ForcingSpec>, f64),
}

impl ForcingSpec {
    pub fn value(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match self {
            ForcingSpec::Named(n) => n.value(t, x),
            ForcingSpec::Trig(s) => s.value(t, x),
            ForcingSpec::Scaled(f, c) => f.value(t, x).into_iter().map(|v| c * v).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        ForcingSpec::Scaled(Box::new(self.clone()), c)
    }

    /// As a closed-form solver forcing.
    pub fn to_forcing(&self) -> Forcing {
        let f = Arc::new(self.clone());
        Forcing::analytic(move |t, x| f.value(t, x))
    }

    /// Cell samples at `t_m = m dt`, `m = 1..=steps`, restricted to `mask`.
    pub fn sample(&self, grid: &Grid, dt: f64, steps: usize, mask: Option<&[bool]>) -> Result<SpaceTimeField<VectorField>> {
        let d = grid.dim();
        let slices = (1..=steps)
            .map(|m| {
                let t = m as f64 * dt;
                let v = VectorField::from_fn(grid, d, |x| self.value(t, x));
                match mask {
                    Some(mask) => Ok(VectorField::new(
                        v.components
                            .into_iter()
                            .map(|c| c.with_mask(mask.to_vec()))
                            .collect::<Result<Vec<_>>>()?,
                    )),
                    None => Ok(v),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        SpaceTimeField::new(dt, slices)
    }
}

/// `size` seeded random sums with seeds `seed, seed + 1, ..`.
pub fn random_family(
    dim: usize,
    character: Character,
    size: usize,
    modes: usize,
    max_wave: u32,
    seed: u64,
) -> Result<Vec<ForcingSpec>> {
    (0..size as u64)
        .map(|i| TrigSum::random(dim, character, modes, max_wave, seed.wrapping_add(i)).map(ForcingSpec::Trig))
        .collect()
}

fn bump(x: &[f64], c: &[f64], r: f64) -> f64 {
    let r2 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (r * r);
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// `count` smooth compactly supported bumps with random centres, radii and
/// signed weights inside the ball `B(center, radius)`, minus a multiple of a
/// central bump so that the grid integral vanishes.
pub fn zero_mean_bumps(grid: &Grid, center: &[f64], radius: f64, count: usize, seed: u64) -> Result<GridField> {
    let d = grid.dim();
    if center.len() != d {
        return Err(Error::InvalidArgument("centre does not match the grid dimension".into()));
    }
    if !(radius > 0.0) || count == 0 {
        return Err(Error::InvalidArgument("need a positive radius and at least one bump".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bumps = Vec::with_capacity(count);
    for _ in 0..count {
        let r = radius * rng.random_range(0.25..0.45);
        let reach = 0.95 * radius - r;
        let c: Vec<f64> = loop {
            let off: Vec<f64> = (0..d).map(|_| rng.random_range(-reach..reach)).collect();
            if off.iter().map(|v| v * v).sum::<f64>().sqrt() <= reach {
                break off.iter().zip(center).map(|(o, c)| o + c).collect();
            }
        };
        let w = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        bumps.push((c, r, w));
    }
    let raw = GridField::from_fn(grid, |x| bumps.iter().map(|(c, r, w)| w * bump(x, c, *r)).sum());
    let base = GridField::from_fn(grid, |x| bump(x, center, 0.5 * radius));
    let mass = base.integral();
    if mass == 0.0 {
        return Err(Error::GridTooCoarse("grid does not resolve the balancing bump".into()));
    }
    raw.combine(1.0, &base, -raw.integral() / mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sum() {
        let a = TrigSum::random(2, Character::General, 6, 3, 7).unwrap();
        let b = TrigSum::random(2, Character::General, 6, 3, 7).unwrap();
        let c = TrigSum::random(2, Character::General, 6, 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn solenoidal_sums_are_divergence_free() {
        for dim in [2, 3] {
            let s = TrigSum::random(dim, Character::Solenoidal, 8, 3, 1).unwrap();
            let x = [0.3, -0.2, 0.7];
            assert!(s.divergence(0.4, &x[..dim]).abs() < 1e-12);
            let g = TrigSum::random(dim, Character::Gradient, 8, 3, 1).unwrap();
            assert!(g.divergence(0.4, &x[..dim]).abs() > 1e-3);
        }
    }

    #[test]
    fn bumps_have_zero_mean_and_stay_inside() {
        let g = Grid::cells(&[-1.0, -1.0], &[1.0, 1.0], &[32, 32]).unwrap();
        let f = zero_mean_bumps(&g, &[0.0, 0.0], 1.0, 4, 3).unwrap();
        assert!(f.integral().abs() < 1e-14 * f.max_abs());
        for i in 0..g.len() {
            let p = g.point(i);
            if p[0] * p[0] + p[1] * p[1] >= 0.95 * 0.95 {
                assert_eq!(f.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn named_parse() {
        assert_eq!("vortex".parse::<Named>().unwrap(), Named::Vortex);
        assert!("nope".parse::<Named>().is_err());
        assert_eq!(Named::Zero.value(1.0, &[0.1, 0.2]), vec![0.0, 0.0]);
    }
}
