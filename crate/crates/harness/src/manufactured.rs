//! Closed-form fields with known derivatives, used as oracles by the
//! verification suites.

use std::f64::consts::PI;

use num_dual::{third_partial_derivative_vec, DualNum, HyperHyperDual64};
use stokes_regularity::geometry::BoundaryChart;
use stokes_regularity::stokes::Forcing;

type D3 = HyperHyperDual64;

// Unit-square pair for the solver: u = curl(g(t) S(x) S(y)) with
// S = sin^2(pi .), p = g(t) cos(pi x) cos(pi y).
fn s0(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}
fn s1(x: f64) -> f64 {
    PI * (2.0 * PI * x).sin()
}
fn s2(x: f64) -> f64 {
    2.0 * PI * PI * (2.0 * PI * x).cos()
}
fn s3(x: f64) -> f64 {
    -4.0 * PI.powi(3) * (2.0 * PI * x).sin()
}

pub fn mms_velocity(g: f64, x: &[f64]) -> Vec<f64> {
    vec![g * s0(x[0]) * s1(x[1]), -g * s1(x[0]) * s0(x[1])]
}

pub fn mms_pressure(g: f64, x: &[f64]) -> f64 {
    g * (PI * x[0]).cos() * (PI * x[1]).cos()
}

/// `d_t u - Delta u + grad p` for the pair above with amplitude `g`.
pub fn mms_forcing(g: fn(f64) -> f64, dg: fn(f64) -> f64) -> Forcing {
    Forcing::analytic(move |t, x| {
        let (gv, dv) = (g(t), dg(t));
        let (a, b) = (x[0], x[1]);
        let lap_u = s2(a) * s1(b) + s0(a) * s3(b);
        let lap_v = -(s3(a) * s0(b) + s1(a) * s2(b));
        vec![
            dv * s0(a) * s1(b) - gv * lap_u - gv * PI * (PI * a).sin() * (PI * b).cos(),
            -dv * s1(a) * s0(b) - gv * lap_v - gv * PI * (PI * a).cos() * (PI * b).sin(),
        ]
    })
}

/// Solenoidal forcing: curl of `sin(2x) sin(3y) + x^3 y` times `1 + sin(3t)/2`.
pub fn solenoidal_forcing() -> Forcing {
    Forcing::analytic(|t, x| {
        let g = 1.0 + 0.5 * (3.0 * t).sin();
        let (a, b) = (x[0], x[1]);
        vec![
            g * (3.0 * (2.0 * a).sin() * (3.0 * b).cos() + a.powi(3)),
            -g * (2.0 * (2.0 * a).cos() * (3.0 * b).sin() + 3.0 * a * a * b),
        ]
    })
}

/// Chart `h = c y^2 + (2c/3) y^3`; the flat chart when `c = 0`.
pub fn chart(c: f64) -> stokes_regularity::Result<BoundaryChart> {
    if c == 0.0 {
        BoundaryChart::flat(2, 1.0)
    } else {
        BoundaryChart::polynomial(2, 1.0, 3, vec![(c, [2, 0]), (2.0 * c / 3.0, [3, 0])])
    }
}

pub fn smooth(x: &[f64]) -> f64 {
    (1.3 * x[0]).sin() * (0.7 * x[1] + 0.2).exp()
}

pub fn harmonic(x: &[f64]) -> f64 {
    x[0].exp() * x[1].cos()
}

pub fn harmonic_cubic(x: &[f64]) -> f64 {
    x[0].powi(3) - 3.0 * x[0] * x[1] * x[1]
}

/// `s^2 cos(x) e^y` with `s = y - a x^2 - b x^3`: vanishes to second order
/// on the graph of `h`.
fn psi(x: &[D3], a: f64, b: f64) -> D3 {
    let s = x[1] - (x[0] * x[0] * a + x[0] * x[0] * x[0] * b);
    s * s * x[0].cos() * x[1].exp()
}

fn pressure_d(x: &[D3]) -> D3 {
    x[0].sin() * x[1].cosh() + x[0] * x[1]
}

pub fn pressure(x: &[f64]) -> f64 {
    x[0].sin() * x[1].cosh() + x[0] * x[1]
}

fn d1(f: impl Fn(&[D3]) -> D3, x: &[f64], i: usize) -> f64 {
    third_partial_derivative_vec(f, x, i, i, i).1
}

fn d3(f: impl Fn(&[D3]) -> D3, x: &[f64], i: usize, j: usize, k: usize) -> f64 {
    third_partial_derivative_vec(f, x, i, j, k).7
}

/// `curl psi`: solenoidal, zero on the graph of `h = a x^2 + b x^3`.
pub fn velocity(x: &[f64], a: f64, b: f64) -> Vec<f64> {
    let p = |y: &[D3]| psi(y, a, b);
    vec![d1(p, x, 1), -d1(p, x, 0)]
}

/// `d_t u - Delta u + grad p` for `u = g curl psi`, `p = g pressure`.
pub fn momentum_forcing(x: &[f64], a: f64, b: f64, g: f64, dg: f64) -> Vec<f64> {
    let p = |y: &[D3]| psi(y, a, b);
    let u = velocity(x, a, b);
    let lap0 = d3(p, x, 0, 0, 1) + d3(p, x, 1, 1, 1);
    let lap1 = -(d3(p, x, 0, 0, 0) + d3(p, x, 0, 1, 1));
    vec![
        dg * u[0] - g * lap0 + g * d1(pressure_d, x, 0),
        dg * u[1] - g * lap1 + g * d1(pressure_d, x, 1),
    ]
}
