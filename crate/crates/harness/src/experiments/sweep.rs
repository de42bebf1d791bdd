use rayon::prelude::*;
use stokes_regularity::forcing::{random_family, Character, ForcingSpec, Named};
use stokes_regularity::grid::Region;
use stokes_regularity::helmholtz::{reduce_problem, HelmholtzConfig};
use stokes_regularity::norms::{estimate_ratio, NormSpec};
use stokes_regularity::stokes::{solve_transient, Forcing, StokesProblem};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::report::{Check, ReportRow};

use super::{base, with};

const EXPERIMENT: &str = "estimate-sweep";

fn family(cfg: &Config) -> Result<Vec<ForcingSpec>> {
    let f = &cfg.forcing;
    let members = match f.kind.as_str() {
        "random" => {
            let character: Character = f.character.parse()?;
            random_family(cfg.domain.dim, character, f.family_size, f.modes, f.max_wave, cfg.seed())?
        }
        "named" => f
            .names
            .iter()
            .map(|n| Ok(ForcingSpec::Named(n.parse::<Named>()?)))
            .collect::<Result<Vec<_>>>()?,
        other => return Err(HarnessError::Config(format!("unknown forcing kind `{other}`"))),
    };
    if members.is_empty() {
        return Err(HarnessError::Config("forcing family is empty".into()));
    }
    Ok(members
        .into_iter()
        .map(|m| if f.amplitude == 1.0 { m } else { m.scaled(f.amplitude) })
        .collect())
}

/// `||grad^{k+1} p|| / ||f||` for each spec after reducing `f` to its
/// solenoidal part; `p` is the solver pressure minus the Helmholtz shift.
fn ratios(cfg: &Config, spec: &ForcingSpec, n: usize, norms: &[NormSpec]) -> Result<Vec<f64>> {
    let mac = cfg.domain.mac_grid("cube", n)?;
    let dt = cfg.time.dt();
    let cells = mac.cell_grid().clone();
    let f = spec.sample(&cells, dt, cfg.time.steps, Some(mac.fluid_mask()))?;
    let hcfg = HelmholtzConfig {
        box_factor: cfg.helmholtz.box_factor,
        collar_fraction: cfg.helmholtz.collar_fraction,
    };
    let (sol, shift) = reduce_problem(&f, &hcfg)?;
    let traj = solve_transient(&StokesProblem::new(mac, cfg.time.final_time, dt, Forcing::Cells(sol))?)?;
    let p = traj
        .p
        .slices
        .iter()
        .zip(&shift.slices)
        .map(|(p, s)| p.sub(s))
        .collect::<stokes_regularity::Result<Vec<_>>>()?;
    let p = stokes_regularity::grid::SpaceTimeField::new(dt, p)?;
    norms
        .iter()
        .map(|ns| Ok(estimate_ratio(&p, &f, ns, &Region::All)?))
        .collect()
}

/// Default levels start at 32 cells: at 16 the highest default wave number
/// is not yet resolved and the ratio is still in its pre-asymptotic rise.
pub fn estimate_sweep(cfg: &Config) -> Result<Vec<ReportRow>> {
    let levels = cfg.resolutions(&[32, 64, 128])?;
    let specs: Vec<NormSpec> = cfg
        .norms
        .specs
        .iter()
        .map(|&(s, q, k)| NormSpec::new(s, q, k))
        .collect::<stokes_regularity::Result<_>>()?;
    let members = family(cfg)?;
    let seed = cfg.seed();
    let dt = cfg.time.dt();

    // independent (forcing, resolution) cells; collected in order
    let cells: Vec<(usize, usize)> = (0..members.len())
        .flat_map(|i| (0..levels.len()).map(move |l| (i, l)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(i, l)| ratios(cfg, &members[i], levels[l], &specs))
        .collect::<Result<Vec<_>>>()?;
    let doubled = members
        .par_iter()
        .map(|m| ratios(cfg, &m.scaled(2.0), levels[0], &specs))
        .collect::<Result<Vec<_>>>()?;

    let spec_params = |m: serde_json::Map<String, serde_json::Value>, ns: &NormSpec, i: usize| {
        let m = with(m, "forcing", i);
        let m = with(m, "s", if ns.s.is_infinite() { serde_json::json!("inf") } else { serde_json::json!(ns.s) });
        let m = with(m, "q", ns.q);
        with(m, "k", ns.k)
    };
    let mut rows = Vec::new();
    for i in 0..members.len() {
        for (j, ns) in specs.iter().enumerate() {
            let series: Vec<f64> = (0..levels.len()).map(|l| values[i * levels.len() + l][j]).collect();
            for (l, &n) in levels.iter().enumerate() {
                rows.push(ReportRow::new(EXPERIMENT, spec_params(base(n, Some(dt), seed), ns, i), "ratio", series[l], Check::Info));
            }
            let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
            let spread = if series.iter().all(|v| v.is_finite()) && min > 0.0 { max / min } else { f64::NAN };
            let levels_json = serde_json::json!(levels);
            rows.push(ReportRow::new(
                EXPERIMENT,
                spec_params(base(levels_json, Some(dt), seed), ns, i),
                "ratio_spread",
                spread,
                Check::AtMost(cfg.norms.spread_tolerance),
            ));
            let a = values[i * levels.len()][j];
            let b = doubled[i][j];
            rows.push(ReportRow::new(
                EXPERIMENT,
                spec_params(base(levels[0], Some(dt), seed), ns, i),
                "homogeneity_defect",
                (a - b).abs() / a,
                Check::AtMost(cfg.norms.homogeneity_tolerance),
            ));
        }
    }
    Ok(rows)
}
