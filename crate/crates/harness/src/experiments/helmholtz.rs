use stokes_regularity::forcing::{Character, TrigSum};
use stokes_regularity::grid::{Grid, GridField, SpaceTimeField, VectorField};
use stokes_regularity::helmholtz::{
    leray_project, reduce_problem, spectral_divergence, HelmholtzConfig, PeriodicBox, PeriodicField,
};

use crate::config::Config;
use crate::error::Result;
use crate::report::{Check, ReportRow};

use super::{base, with};

const EXPERIMENT: &str = "helmholtz-verify";

/// Seeded band-limited fields sampled on a periodic box of edge 2, the
/// period of the trigonometric families.
fn sample(pbox: &PeriodicBox, character: Character, cfg: &Config, seed: u64) -> Result<PeriodicField> {
    let f = &cfg.forcing;
    let sum = TrigSum::random(pbox.dim(), character, f.modes, f.max_wave, seed)?;
    Ok(PeriodicField::from_fn(pbox, pbox.dim(), |x| sum.value(0.0, x))?)
}

/// `exp(-1 / (1 - r^2 / a^2))` and its gradient.
fn bump(x: &[f64], c: [f64; 2], a: f64) -> (f64, [f64; 2]) {
    let d = [x[0] - c[0], x[1] - c[1]];
    let u = 1.0 - (d[0] * d[0] + d[1] * d[1]) / (a * a);
    if u <= 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let b = (-1.0 / u).exp();
    let k = -2.0 * b / (a * a * u * u);
    (b, [k * d[0], k * d[1]])
}

/// Splits `curl s + grad psi` for compact bumps `s`, `psi` on `[-1, 1]^2` and
/// compares the pieces with the constructed ones. Planar only: the whole-space
/// box for a 3D grid at this resolution does not fit in memory.
fn mixed(cfg: &Config, rows: &mut Vec<ReportRow>) -> Result<()> {
    let h = &cfg.helmholtz;
    let n = h.mixed_resolution;
    let (cs, cp, a) = ([0.2, -0.1], [-0.25, 0.2], 0.6);
    let grid = Grid::cells(&[-1.0, -1.0], &[1.0, 1.0], &[n, n])?;
    let curl = VectorField::from_fn(&grid, 2, |x| {
        let g = bump(x, cs, a).1;
        vec![g[1], -g[0]]
    });
    let grad = VectorField::from_fn(&grid, 2, |x| bump(x, cp, a).1.to_vec());
    let psi = GridField::from_fn(&grid, |x| bump(x, cp, a).0);
    let f = SpaceTimeField::new(1.0, vec![curl.combine(1.0, &grad, 1.0)?])?;
    let hcfg = HelmholtzConfig {
        box_factor: h.box_factor,
        collar_fraction: h.collar_fraction,
    };
    let (sol, shift) = reduce_problem(&f, &hcfg)?;
    let sol_err = sol.slices[0].combine(1.0, &curl, -1.0)?.norm_l2() / curl.norm_l2();
    // f = f_sol - grad(shift), so shift + psi is constant
    let s = shift.slices[0].add(&psi)?;
    let mean = s.integral() / 4.0;
    let shift_err = s.map(|v| v - mean).norm_l2() / psi.norm_l2();
    let check = Check::AtMost(h.recovery_tolerance);
    let params = || with(base(n, None, cfg.seed()), "dim", 2);
    rows.push(ReportRow::new(EXPERIMENT, params(), "mixed_solenoidal_error", sol_err, check));
    rows.push(ReportRow::new(EXPERIMENT, params(), "mixed_shift_error", shift_err, check));
    Ok(())
}

/// Projector identities on seeded periodic fields, then the decomposition of
/// a compactly supported mixed field through the extension.
pub fn helmholtz_verify(cfg: &Config) -> Result<Vec<ReportRow>> {
    let h = &cfg.helmholtz;
    let d = cfg.domain.dim;
    let tol = Check::AtMost(h.tolerance);
    let mut rows = Vec::new();
    for n in cfg.resolutions(&[32])? {
        let pbox = PeriodicBox::new(&vec![n; d], &vec![2.0; d], &vec![-1.0; d])?;
        for i in 0..h.fields as u64 {
            let seed = cfg.seed().wrapping_add(i);
            let params = || with(base(n, None, seed), "dim", d);
            let v = sample(&pbox, Character::General, cfg, seed)?;
            let vv = v.dot(&v)?;
            let pv = leray_project(&v)?;
            let ppv = leray_project(&pv)?;
            let idem = ppv.combine(1.0, &pv, -1.0)?.norm_l2() / v.norm_l2();
            let rest = v.combine(1.0, &pv, -1.0)?;
            let orth = pv.dot(&rest)?.abs() / vv;
            rows.push(ReportRow::new(EXPERIMENT, params(), "idempotency", idem, tol));
            rows.push(ReportRow::new(EXPERIMENT, params(), "orthogonality", orth, tol));
            rows.push(ReportRow::new(EXPERIMENT, params(), "spectral_divergence", spectral_divergence(&pv)?, tol));
            let g = sample(&pbox, Character::Gradient, cfg, seed)?;
            let pg = leray_project(&g)?.norm_l2() / g.norm_l2();
            rows.push(ReportRow::new(EXPERIMENT, params(), "gradient_annihilation", pg, tol));
        }
    }
    if d == 2 {
        mixed(cfg, &mut rows)?;
    }
    Ok(rows)
}
