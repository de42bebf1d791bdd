use stokes_regularity::geometry::{make_cutoff, BoundaryChart};
use stokes_regularity::grid::SpaceTimeField;
use stokes_regularity::transform::*;

use crate::config::Config;
use crate::error::Result;
use crate::manufactured::{chart, harmonic, harmonic_cubic, momentum_forcing, pressure, smooth, velocity};
use crate::report::{Check, ReportRow};

use super::{base, observed_order, with};

const EXPERIMENT: &str = "transform-verify";

type Scalar = Box<dyn Fn(&[f64]) -> f64 + Sync>;

struct Suite<'a> {
    cfg: &'a Config,
    rows: Vec<ReportRow>,
}

impl Suite<'_> {
    fn push(&mut self, params: serde_json::Map<String, serde_json::Value>, quantity: &str, value: f64, check: Check) {
        self.rows.push(ReportRow::new(EXPERIMENT, params, quantity, value, check));
    }

    fn params(&self, n: usize) -> serde_json::Map<String, serde_json::Value> {
        with(base(n, None, self.cfg.seed()), "curvature", self.cfg.transform.curvature)
    }

    /// One `Info` row per level and one order row per refinement.
    fn refinement(&mut self, quantity: &str, levels: &[usize], errs: &[f64], extra: &[(&str, serde_json::Value)]) {
        let min_order = self.cfg.transform.min_order;
        for (&n, &e) in levels.iter().zip(errs) {
            let mut p = self.params(n);
            for (k, v) in extra {
                p = with(p, k, v.clone());
            }
            self.push(p, quantity, e, Check::Info);
        }
        for (w, e) in levels.windows(2).zip(errs.windows(2)) {
            let mut p = with(self.params(w[1]), "coarse", w[0]);
            for (k, v) in extra {
                p = with(p, k, v.clone());
            }
            self.push(p, &format!("{quantity}_order"), observed_order(e[0], e[1], w[0], w[1]), Check::AtLeast(min_order));
        }
    }
}

fn flat_chart(dim: usize) -> Result<BoundaryChart> {
    Ok(BoundaryChart::flat(dim, 1.0)?)
}

/// With `corrupt`, a closed form whose physical derivatives disagree with
/// the sampled field in every direction.
fn perturbed(f: fn(&[f64]) -> f64, corrupt: bool) -> Scalar {
    if corrupt {
        Box::new(move |x: &[f64]| f(x) + 0.5 * x.iter().map(|v| v * v).sum::<f64>())
    } else {
        Box::new(f)
    }
}

/// Identities for derivatives, gradient, Laplacian and divergence; Hessian
/// recovery; negative controls; the localized divergence and momentum
/// balance. With `transform.corrupt` the inputs are deliberately wrong and
/// every judged row fails except the negative controls and the momentum
/// balance.
pub fn transform_verify(cfg: &Config) -> Result<Vec<ReportRow>> {
    let t = &cfg.transform;
    let corrupt = t.corrupt;
    let levels = cfg.resolutions(&[16, 32, 64])?;
    let c = t.curvature;
    let (a, b) = (c, 2.0 * c / 3.0);
    let curved = c != 0.0;
    let chart = chart(c)?;
    let mut s = Suite { cfg, rows: Vec::new() };
    let flat_tol = Check::AtMost(t.flat_tolerance);

    // flat chart at stencil tolerance
    for dim in [2usize, 3] {
        let fc = flat_chart(dim)?;
        let g = flat_grid(&fc, 12)?;
        let f = move |x: &[f64]| smooth(x) * (1.0 + x[dim - 1] * x[0]);
        let flat = pullback_fn(&|x| vec![f(x)], 1, &fc, &g)?;
        let reference: Scalar = if corrupt {
            Box::new(move |x: &[f64]| f(x) + 0.5 * x.iter().map(|v| v * v).sum::<f64>())
        } else {
            Box::new(f)
        };
        let p = with(s.params(12), "dim", dim);
        for i in 0..dim {
            let r = derivative_identity_residual(&reference, &flat, i)?;
            s.push(with(p.clone(), "axis", i), "flat_derivative_residual", r, flat_tol);
        }
        s.push(p.clone(), "flat_gradient_residual", gradient_identity_residual(&reference, &flat)?, flat_tol);
        s.push(p, "flat_laplace_residual", laplace_identity_residual(&reference, &flat)?, flat_tol);
    }
    let fc = flat_chart(2)?;
    let g = flat_grid(&fc, 12)?;
    let rotation = pullback_fn(&|x| if corrupt { vec![x[0], x[1]] } else { vec![-x[1], x[0]] }, 2, &fc, &g)?;
    s.push(s.params(12), "flat_divergence_residual", div_identity_residual(&rotation)?, flat_tol);

    // curved chart under refinement
    if curved {
        let smooth_ref = perturbed(smooth, corrupt);
        let harmonic_ref = perturbed(harmonic, corrupt);
        let (mut d, mut gr, mut lap, mut div) = (vec![], vec![], vec![], vec![]);
        for &n in &levels {
            let g = flat_grid(&chart, n)?;
            let f = pullback_fn(&|x| vec![smooth(x)], 1, &chart, &g)?;
            let h = pullback_fn(&|x| vec![harmonic(x)], 1, &chart, &g)?;
            let mut u = pullback_fn(&|x| velocity(x, a, b), 2, &chart, &g)?;
            if corrupt {
                u = u.with_chart(&fc)?;
            }
            d.push(derivative_identity_residual(&smooth_ref, &f, 0)?);
            gr.push(gradient_identity_residual(&smooth_ref, &f)?);
            lap.push(laplace_identity_residual(&harmonic_ref, &h)?);
            div.push(div_identity_residual(&u)?);
        }
        s.refinement("derivative_residual", &levels, &d, &[]);
        s.refinement("gradient_residual", &levels, &gr, &[]);
        s.refinement("laplace_residual", &levels, &lap, &[]);
        s.refinement("divergence_residual", &levels, &div, &[]);
    }

    // negative controls: each compares a broken input with the intact one
    let control_n = 32;
    let control = Check::AtLeast(10.0);
    let source = pullback_fn(&|x| vec![x[0], x[1]], 2, &fc, &flat_grid(&fc, 16)?)?;
    s.push(
        s.params(16),
        "control_divergence_of_source_over_tolerance",
        div_identity_residual(&source)? / t.flat_tolerance,
        control,
    );
    let cg = flat_grid(&chart, control_n)?;
    if curved {
        let u = pullback_fn(&|x| velocity(x, a, b), 2, &chart, &cg)?;
        let good = div_identity_residual(&u)?;
        let bad = div_identity_residual(&u.with_chart(&fc)?)?;
        s.push(s.params(control_n), "control_divergence_wrong_chart_ratio", bad / good, control);
    }
    let harm = pullback_fn(&|x| vec![harmonic(x)], 1, &chart, &cg)?;
    let good = laplace_identity_residual(&harmonic, &harm)?;
    let other = |x: &[f64]| harmonic(x) + 0.5 * x[0] * x[0];
    let bad = laplace_identity_residual(&other, &harm)?;
    s.push(s.params(control_n), "control_laplace_non_harmonic_ratio", bad / good.max(f64::MIN_POSITIVE), control);
    let good = recovery_errors(&chart, &harmonic, &[control_n])?[0];
    let bad = recovery_errors(&chart, &|x| harmonic(x) + x[0] * x[0] + x[1] * x[1], &[control_n])?[0];
    s.push(s.params(control_n), "control_recovery_non_harmonic_ratio", bad / good.max(f64::MIN_POSITIVE), control);

    // recovery of the normal second derivative
    let bend = |p: fn(&[f64]) -> f64| -> Scalar {
        if corrupt {
            Box::new(move |x: &[f64]| p(x) + x.iter().map(|v| v * v).sum::<f64>())
        } else {
            Box::new(p)
        }
    };
    let g = flat_grid(&fc, 16)?;
    let quadratics: [(fn(&[f64]) -> f64, f64); 3] = [
        (|x| x[0] * x[0] - x[1] * x[1], -2.0),
        (|x| x[1] * x[1] - x[0] * x[0], 2.0),
        (|x| 3.0 * x[0] * x[1] + x[0] - 2.0, 0.0),
    ];
    for (i, (p, expected)) in quadratics.into_iter().enumerate() {
        let p = bend(p);
        let flat = pullback_fn(&|x| vec![p(x)], 1, &fc, &g)?;
        let rec = normal_hessian_recover(&flat)?;
        let err = rec.values().iter().fold(0.0f64, |m, v| m.max((v - expected).abs()));
        s.push(
            with(s.params(16), "polynomial", i),
            "flat_recovery_error",
            err,
            Check::AtMost(t.recovery_exact_tolerance),
        );
    }
    let pairs: Vec<(&str, BoundaryChart, Scalar, Vec<usize>)> = {
        let mut v = vec![(
            "quadratic",
            BoundaryChart::quadratic(2, 1.0, 0.1)?,
            bend(harmonic),
            levels.clone(),
        )];
        if curved {
            v.push((
                "configured",
                chart.clone(),
                bend(|x| harmonic_cubic(x) + harmonic(x)),
                levels.clone(),
            ));
        }
        v.push((
            "quadratic-3d",
            BoundaryChart::quadratic(3, 1.0, 0.1)?,
            bend(|x| ((3.0 * x[0] + 4.0 * x[1]) / 5.0).exp() * x[2].cos()),
            vec![8, 16, 32],
        ));
        v
    };
    for (name, ch, p, lv) in &pairs {
        let e = recovery_errors(ch, p.as_ref(), lv)?;
        s.refinement("recovery_error", lv, &e, &[("chart", (*name).into())]);
    }
    if curved {
        let lv: Vec<usize> = levels.iter().map(|n| 2 * n).collect();
        let p = bend(harmonic);
        let mut e = vec![];
        for &n in &lv {
            let g = flat_grid(&chart, n)?;
            let flat = pullback_fn(&|x| vec![p(x)], 1, &chart, &g)?;
            let rec = normal_hessian_recover_tangential(&flat, 0)?;
            let direct = flat.component(0).second_derivative(1)?.derivative(0)?;
            let diff = rec.sub(&direct)?;
            let mask = rec.mask().map(|m| m.to_vec()).unwrap_or_else(|| vec![true; g.len()]);
            e.push(diff.norm_l2() / direct.with_mask(mask)?.norm_l2());
        }
        s.refinement("iterated_recovery_error", &lv, &e, &[]);
    }

    localized(&mut s, &chart, a, b)?;
    Ok(s.rows)
}

fn recovery_errors(chart: &BoundaryChart, p: &dyn Fn(&[f64]) -> f64, levels: &[usize]) -> Result<Vec<f64>> {
    levels
        .iter()
        .map(|&n| {
            let g = flat_grid(chart, n)?;
            let flat = pullback_fn(&|x| vec![p(x)], 1, chart, &g)?;
            let rec = normal_hessian_recover(&flat)?;
            let direct = flat.component(0).second_derivative(g.dim() - 1)?;
            Ok(rec.sub(&direct)?.norm_l2() / direct.norm_l2())
        })
        .collect()
}

/// Divergence of the Bogovskii-corrected localized velocity and the
/// momentum balance of the localized system.
///
/// The momentum rows are not corrupted: the balance is dominated by the
/// cutoff and Bogovskii terms, whose truncation error at these grids exceeds
/// the whole forcing contribution, so no physical corruption shows in it.
fn localized(s: &mut Suite, chart: &BoundaryChart, a: f64, b: f64) -> Result<()> {
    let t = &s.cfg.transform;
    let corrupt = t.corrupt;
    let levels = t.localized_resolutions.clone();
    let cut = make_cutoff(t.rho)?;
    let lcfg = LocalizedConfig {
        // corrupted velocities are not solenoidal; let them through
        zero_mean_tolerance: if corrupt { f64::INFINITY } else { LocalizedConfig::default().zero_mean_tolerance },
        ..Default::default()
    };
    // adding (0, s^2), s = y - h(x), gives a nonzero divergence
    let broken = if corrupt { 1.0 } else { 0.0 };
    let sample_u = move |x: &[f64]| {
        let mut v = velocity(x, a, b);
        let dist = x[1] - a * x[0] * x[0] - b * x[0].powi(3);
        v[1] += broken * dist * dist;
        v
    };
    let localized_check = Check::AtMost(t.localized_tolerance);
    let momentum_check = Check::AtMost(t.momentum_tolerance);
    let (mut div, mut mom) = (vec![], vec![]);
    for &n in &levels {
        let g = localized_grid(2, t.rho, n)?;
        let u = pullback_fn(&sample_u, 2, chart, &g)?;
        let p = pullback_fn(&|x| vec![pressure(x)], 1, chart, &g)?;
        let sys = build_localized(&u, &p, &cut, t.k, &lcfg)?;
        let params = with(s.params(n), "rho", t.rho);
        s.push(params.clone(), "localized_zero_mean_defect", sys.slices[0].zero_mean_defect, Check::Info);
        let r = localized_div_residual(&sys)?;
        s.push(params, "localized_divergence_residual", r, localized_check);
        div.push(r);

        // five time levels of u = g(t) curl psi, p = g(t) pressure
        let dt = 0.32 / n as f64;
        let (mut us, mut ps, mut fs) = (vec![], vec![], vec![]);
        for m in 0..5 {
            let time = (m + 1) as f64 * dt;
            let (gt, dgt) = (1.0 + (2.0 * time).sin(), 2.0 * (2.0 * time).cos());
            us.push(pullback_fn(&|x| velocity(x, a, b).iter().map(|v| gt * v).collect(), 2, chart, &g)?);
            ps.push(pullback_fn(&|x| vec![gt * pressure(x)], 1, chart, &g)?);
            fs.push(pullback_fn(&|x| momentum_forcing(x, a, b, gt, dgt), 2, chart, &g)?);
        }
        let sys = build_localized_series(
            &SpaceTimeField::new(dt, us)?,
            &SpaceTimeField::new(dt, ps)?,
            &cut,
            t.k,
            &LocalizedConfig::default(),
        )?;
        let r = momentum_residual(&sys, &fs)?;
        let params = with(with(base(n, Some(dt), s.cfg.seed()), "curvature", t.curvature), "rho", t.rho);
        s.push(params, "localized_momentum_residual", r, momentum_check);
        mom.push(r);
    }
    let min_order = t.localized_order;
    for (w, e) in levels.windows(2).zip(div.windows(2)) {
        let p = with(s.params(w[1]), "coarse", w[0]);
        s.push(p, "localized_divergence_order", observed_order(e[0], e[1], w[0], w[1]), Check::AtLeast(min_order));
    }
    for (w, e) in levels.windows(2).zip(mom.windows(2)) {
        let p = with(s.params(w[1]), "coarse", w[0]);
        s.push(p, "localized_momentum_order", observed_order(e[0], e[1], w[0], w[1]), Check::AtLeast(min_order));
    }
    Ok(())
}
