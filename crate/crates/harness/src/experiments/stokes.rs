use stokes_regularity::grid::{GridField, VectorField};
use stokes_regularity::stokes::{harmonicity_residual, solve_transient, MacGrid, StokesProblem};

use crate::config::Config;
use crate::error::Result;
use crate::manufactured::{mms_forcing, mms_pressure, mms_velocity, solenoidal_forcing};
use crate::report::{Check, ReportRow};

use super::{base, observed_order, with};

const EXPERIMENT: &str = "stokes-run";

fn unit_square(n: usize) -> Result<MacGrid> {
    Ok(MacGrid::full_box(&[0.0, 0.0], &[1.0, 1.0], &[n, n])?)
}

fn rel_err(a: &VectorField, b: &VectorField) -> Result<f64> {
    Ok(a.combine(1.0, b, -1.0)?.norm_l2() / b.norm_l2())
}

/// Manufactured convergence in space and time, the discrete divergence and
/// zero start of every run, and discrete harmonicity of the pressure under
/// solenoidal forcing. All on the unit square.
pub fn stokes_run(cfg: &Config) -> Result<Vec<ReportRow>> {
    let s = &cfg.stokes;
    let seed = cfg.seed();
    let levels = cfg.resolutions(&[16, 32, 64])?;
    let mut rows = Vec::new();

    // spatial: one step of size 1/2 to T = 1 with g(t) = t, so the implicit
    // Euler step is exact in time
    let (t_final, dt) = (1.0, 0.5);
    let mut u_errs = Vec::new();
    for &n in &levels {
        let mac = unit_square(n)?;
        let traj = solve_transient(&StokesProblem::new(mac.clone(), t_final, dt, mms_forcing(|t| t, |_| 1.0))?)?;
        let u = traj.u.slices.last().expect("at least one step");
        let e = rel_err(u, &mac.sample_faces(|x| mms_velocity(1.0, x)))?;
        let pe = GridField::from_fn(mac.cell_grid(), |x| mms_pressure(1.0, x));
        let p = traj.p.slices.last().expect("at least one step");
        let ep = p.combine(1.0, &pe, -1.0)?.norm_l2() / pe.norm_l2();
        rows.push(ReportRow::new(EXPERIMENT, base(n, Some(dt), seed), "mms_velocity_error", e, Check::Info));
        rows.push(ReportRow::new(EXPERIMENT, base(n, Some(dt), seed), "mms_pressure_error", ep, Check::Info));
        rows.push(ReportRow::new(
            EXPERIMENT,
            base(n, Some(dt), seed),
            "max_relative_divergence",
            traj.max_divergence,
            Check::AtMost(s.divergence_tolerance),
        ));
        rows.push(ReportRow::new(EXPERIMENT, base(n, Some(dt), seed), "initial_velocity_max", traj.u0.max_abs(), Check::AtMost(0.0)));
        u_errs.push(e);
    }
    for (w, e) in levels.windows(2).zip(u_errs.windows(2)) {
        rows.push(ReportRow::new(
            EXPERIMENT,
            with(base(w[1], Some(dt), seed), "coarse", w[0]),
            "spatial_order",
            observed_order(e[0], e[1], w[0], w[1]),
            Check::AtLeast(s.spatial_order),
        ));
    }

    // temporal: differences of successive step halvings on a fixed grid
    let mac = unit_square(s.temporal_cells)?;
    let forcing = mms_forcing(|t| t * t, |t| 2.0 * t);
    let mut finals = Vec::new();
    for &steps in &s.temporal_steps {
        let dt = 1.0 / steps as f64;
        let traj = solve_transient(&StokesProblem::new(mac.clone(), 1.0, dt, forcing.clone())?)?;
        finals.push((dt, traj.u.slices.last().expect("at least one step").clone()));
    }
    let diffs: Vec<(f64, f64)> = finals
        .windows(2)
        .map(|w| Ok((w[1].0, w[0].1.combine(1.0, &w[1].1, -1.0)?.norm_l2())))
        .collect::<Result<_>>()?;
    for w in diffs.windows(2) {
        let order = (w[0].1 / w[1].1).log2();
        rows.push(ReportRow::new(
            EXPERIMENT,
            base(s.temporal_cells, Some(w[1].0), seed),
            "temporal_order",
            order,
            Check::AtLeast(s.temporal_order),
        ));
    }

    // harmonic pressure
    let (t_final, dt) = (0.2, 0.1);
    let mut harm = Vec::new();
    for &n in &levels {
        let traj = solve_transient(&StokesProblem::new(unit_square(n)?, t_final, dt, solenoidal_forcing())?)?;
        let r = harmonicity_residual(traj.p.slices.last().expect("at least one step"), 2)?;
        rows.push(ReportRow::new(EXPERIMENT, base(n, Some(dt), seed), "pressure_laplacian_residual", r, Check::Info));
        harm.push(r);
    }
    for (w, e) in levels.windows(2).zip(harm.windows(2)) {
        rows.push(ReportRow::new(
            EXPERIMENT,
            with(base(w[1], Some(dt), seed), "coarse", w[0]),
            "harmonicity_order",
            observed_order(e[0], e[1], w[0], w[1]),
            Check::AtLeast(s.harmonic_order),
        ));
    }
    Ok(rows)
}
