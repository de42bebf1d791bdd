use stokes_regularity::bogovskii::{
    commutator_residual, BumpFunction, divergence_residual, BogovskiiConfig, ScaledBogovskii,
};
use stokes_regularity::forcing::zero_mean_bumps;
use stokes_regularity::grid::Grid;

use crate::config::Config;
use crate::error::Result;
use crate::report::{Check, ReportRow};

use super::{base, observed_order, with};

const EXPERIMENT: &str = "bogovskii-verify";

fn cell_grid(center: &[f64], r: f64, n: usize) -> Result<Grid> {
    let lo: Vec<f64> = center.iter().map(|c| c - r).collect();
    let hi: Vec<f64> = center.iter().map(|c| c + r).collect();
    Ok(Grid::cells(&lo, &hi, &vec![n; center.len()])?)
}

/// Divergence identity for seeded zero-mean forcings under refinement, then
/// the commutator identity and its swap symmetry.
pub fn bogovskii_verify(cfg: &Config) -> Result<Vec<ReportRow>> {
    let b = &cfg.bogovskii;
    let dom = cfg.domain.star_domain("ball")?;
    let center = dom.center().to_vec();
    let reach = dom.circumradius();
    let inner = dom.star_radius();
    let levels = cfg.resolutions(&[64, 96, 128])?;
    let op_cfg = BogovskiiConfig::default();
    let op = ScaledBogovskii::new(&dom, &op_cfg)?;
    let mut rows = Vec::new();

    for i in 0..b.forcings as u64 {
        let seed = cfg.seed().wrapping_add(i);
        let mut errs = Vec::with_capacity(levels.len());
        for (l, &n) in levels.iter().enumerate() {
            let g = cell_grid(&center, reach, n)?;
            let f = zero_mean_bumps(&g, &center, inner, b.bumps, seed)?;
            let v = op.apply(&f)?;
            let e = divergence_residual(&v, &f, &op)?;
            let check = if l == 0 {
                Check::AtMost(b.baseline_tolerance)
            } else {
                Check::AtMost(errs[l - 1])
            };
            rows.push(ReportRow::new(EXPERIMENT, base(n, None, seed), "divergence_residual", e, check));
            errs.push(e);
        }
        for (w, e) in levels.windows(2).zip(errs.windows(2)) {
            let params = with(base(w[1], None, seed), "coarse", w[0]);
            rows.push(ReportRow::new(
                EXPERIMENT,
                params,
                "divergence_order",
                observed_order(e[0], e[1], w[0], w[1]),
                Check::AtLeast(b.min_order),
            ));
        }
    }

    let bump = BumpFunction::normalized(dom.dim(), op.radius())?;
    let seed = cfg.seed();
    let mut prev: Option<f64> = None;
    for &n in &b.commutator_resolutions {
        let g = cell_grid(&center, reach, n)?;
        let f = zero_mean_bumps(&g, &center, inner, b.bumps, seed)?;
        let r01 = commutator_residual(&bump, &f, 0, 1, &dom, &op_cfg)?;
        let r10 = commutator_residual(&bump, &f, 1, 0, &dom, &op_cfg)?;
        let check = match prev {
            None => Check::AtMost(b.commutator_tolerance),
            Some(p) => Check::AtMost(p),
        };
        rows.push(ReportRow::new(EXPERIMENT, base(n, None, seed), "commutator_residual", r01, check));
        rows.push(ReportRow::new(
            EXPERIMENT,
            base(n, None, seed),
            "commutator_swap_difference",
            (r01 - r10).abs(),
            Check::AtMost(b.symmetry_tolerance),
        ));
        prev = Some(r01);
    }
    Ok(rows)
}
