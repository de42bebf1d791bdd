use proptest::prelude::*;
use stokes_regularity::bogovskii::*;
use stokes_regularity::forcing::zero_mean_bumps;
use stokes_regularity::geometry::StarDomain;
use stokes_regularity::grid::{Grid, GridField};
use stokes_regularity::Error;

// Relative divergence residuals recorded from a refinement run of the default
// operator (unit ball, three bumps per forcing), four significant digits.
const FROZEN: [(u64, [f64; 3]); 5] = [
    (0, [7.126e-2, 1.979e-2, 5.105e-3]),
    (1, [8.351e-2, 2.353e-2, 6.048e-3]),
    (2, [5.908e-2, 1.667e-2, 4.312e-3]),
    (3, [5.927e-2, 1.604e-2, 4.114e-3]),
    (4, [6.845e-2, 1.953e-2, 5.094e-3]),
];
const LEVELS: [usize; 3] = [32, 64, 128];
const FROZEN_COMMUTATOR: [(usize, f64); 3] = [(32, 3.911e-2), (48, 1.906e-2), (64, 1.153e-2)];

fn unit_ball() -> StarDomain {
    StarDomain::ball(2, &[0.0, 0.0], 1.0).unwrap()
}

fn cells(n: usize, r: f64) -> Grid {
    Grid::cells(&[-r, -r], &[r, r], &[n, n]).unwrap()
}

fn residual(dom: &StarDomain, n: usize, seed: u64) -> f64 {
    let op = ScaledBogovskii::new(dom, &BogovskiiConfig::default()).unwrap();
    let g = cells(n, dom.circumradius());
    let f = zero_mean_bumps(&g, dom.center(), dom.star_radius(), 3, seed).unwrap();
    let v = op.apply(&f).unwrap();
    divergence_residual(&v, &f, &op).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn divergence_residual_matches_frozen_refinement() {
    let dom = unit_ball();
    for (seed, frozen) in FROZEN {
        let errs: Vec<f64> = LEVELS.iter().map(|&n| residual(&dom, n, seed)).collect();
        for (e, f) in errs.iter().zip(frozen) {
            assert!(close(*e, f, 1e-3), "seed {seed}: {errs:?} vs {frozen:?}");
        }
        assert!(errs[1] <= 5e-2, "seed {seed}: {errs:?}");
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.0, "seed {seed}: {errs:?}");
        }
    }
}

#[test]
fn commutator_matches_frozen_refinement() {
    let dom = unit_ball();
    let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
    let bump = BumpFunction::normalized(2, op.radius()).unwrap();
    let cfg = BogovskiiConfig::default();
    let mut prev = f64::INFINITY;
    for (n, frozen) in FROZEN_COMMUTATOR {
        let g = cells(n, dom.circumradius());
        let f = zero_mean_bumps(&g, &[0.0, 0.0], dom.star_radius(), 3, 0).unwrap();
        let r01 = commutator_residual(&bump, &f, 0, 1, &dom, &cfg).unwrap();
        let r10 = commutator_residual(&bump, &f, 1, 0, &dom, &cfg).unwrap();
        assert!(close(r01, frozen, 1e-3), "n = {n}: {r01}");
        assert!(r01 <= 5e-2 && r01 < prev);
        assert!((r01 - r10).abs() <= 1e-12);
        prev = r01;
    }
}

#[test]
fn commutator_of_zero_is_zero() {
    let dom = unit_ball();
    let bump = BumpFunction::normalized(2, 0.5).unwrap();
    let f = GridField::zeros(&cells(16, 1.0));
    assert_eq!(commutator_residual(&bump, &f, 0, 1, &dom, &BogovskiiConfig::default()).unwrap(), 0.0);
}

#[test]
fn residual_is_translation_and_scale_free() {
    // the operator works on the rescaled reference problem, so moving and
    // dilating the ball together with the data leaves the residual unchanged
    let a = residual(&unit_ball(), 32, 0);
    let dom = StarDomain::ball(2, &[3.0, -1.0], 2.5).unwrap();
    let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
    let r = dom.circumradius();
    let g = Grid::cells(&[3.0 - r, -1.0 - r], &[3.0 + r, -1.0 + r], &[32, 32]).unwrap();
    let f = zero_mean_bumps(&g, dom.center(), dom.star_radius(), 3, 0).unwrap();
    let v = op.apply(&f).unwrap();
    let b = divergence_residual(&v, &f, &op).unwrap();
    assert!(close(b, a, 1e-9), "{a} vs {b}");
}

#[test]
fn probe_is_invariant_under_joint_rescaling() {
    let family = |g: &Grid, c: &[f64], r: f64| -> Vec<GridField> {
        (0..3).map(|s| zero_mean_bumps(g, c, r, 2, 10 + s).unwrap()).collect()
    };
    let cfg = BogovskiiConfig::default();
    let small = unit_ball();
    let big = small.scaled(2.0).unwrap();
    let g1 = cells(32, 1.0);
    let g2 = cells(32, 2.0);
    let f1 = family(&g1, &[0.0, 0.0], 1.0);
    // same samples on the dilated grid
    let f2: Vec<GridField> = f1
        .iter()
        .map(|f| GridField::from_values(&g2, f.values().to_vec()).unwrap())
        .collect();
    let p1 = norm_bound_probe(&small, &f1, 1, 2.0, &cfg).unwrap();
    let p2 = norm_bound_probe(&big, &f2, 1, 2.0, &cfg).unwrap();
    assert!(p1.is_finite() && p1 > 0.0);
    assert!(close(p2, p1, 1e-3), "{p1} vs {p2}");
}

#[test]
fn probe_skips_zero_fields() {
    let g = cells(16, 1.0);
    let fam = vec![GridField::zeros(&g)];
    assert!(matches!(
        norm_bound_probe(&unit_ball(), &fam, 1, 2.0, &BogovskiiConfig::default()),
        Err(Error::UndefinedRatio(_))
    ));
}

#[test]
fn commutes_with_time_differencing() {
    let dom = unit_ball();
    let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
    let g = cells(24, 1.0);
    let dt = 0.05;
    let slices: Vec<GridField> = (0..3)
        .map(|m| {
            let t = m as f64 * dt;
            let a = zero_mean_bumps(&g, &[0.0, 0.0], 1.0, 2, 1).unwrap();
            let b = zero_mean_bumps(&g, &[0.0, 0.0], 1.0, 2, 2).unwrap();
            a.combine((3.0 * t).cos(), &b, t * t).unwrap()
        })
        .collect();
    let outs: Vec<_> = slices.iter().map(|f| op.apply(f).unwrap()).collect();
    for m in 1..3 {
        let df = slices[m].combine(1.0 / dt, &slices[m - 1], -1.0 / dt).unwrap();
        let lhs = op.apply(&df).unwrap();
        let rhs = outs[m].combine(1.0 / dt, &outs[m - 1], -1.0 / dt).unwrap();
        let diff = lhs.combine(1.0, &rhs, -1.0).unwrap().norm_l2();
        assert!(diff <= 1e-10 * rhs.norm_l2(), "{diff}");
    }
}

#[test]
fn three_dimensional_identity_improves_under_refinement() {
    let dom = StarDomain::ball(3, &[0.0; 3], 1.0).unwrap();
    let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
    let errs: Vec<f64> = [12usize, 16]
        .iter()
        .map(|&n| {
            let g = Grid::cells(&[-1.0; 3], &[1.0; 3], &[n; 3]).unwrap();
            let f = zero_mean_bumps(&g, &[0.0; 3], 1.0, 2, 0).unwrap();
            let v = op.apply(&f).unwrap();
            divergence_residual(&v, &f, &op).unwrap()
        })
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn scaled_operator_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, s1 in 0u64..1000, s2 in 0u64..1000) {
        let dom = unit_ball();
        let op = ScaledBogovskii::new(&dom, &BogovskiiConfig::default()).unwrap();
        let g = cells(16, 1.0);
        let f1 = zero_mean_bumps(&g, &[0.0, 0.0], 1.0, 2, s1).unwrap();
        let f2 = zero_mean_bumps(&g, &[0.0, 0.0], 1.0, 2, s2).unwrap();
        let lhs = op.apply(&f1.combine(alpha, &f2, beta).unwrap()).unwrap();
        let rhs = op.apply(&f1).unwrap().combine(alpha, &op.apply(&f2).unwrap(), beta).unwrap();
        let diff = lhs.combine(1.0, &rhs, -1.0).unwrap().norm_l2();
        prop_assert!(diff <= 1e-10 * rhs.norm_l2().max(1e-300));
    }

    #[test]
    fn kernel_is_parallel_to_y(x in prop::array::uniform2(-0.5f64..0.5), y in prop::array::uniform2(-1.5f64..1.5)) {
        prop_assume!(y[0].hypot(y[1]) > 1e-3);
        let bump = BumpFunction::normalized(2, 1.0).unwrap();
        let k = eval_kernel(&bump, Weight::Value, &x, &y, &BogovskiiConfig::default()).unwrap();
        let cross = k[0] * y[1] - k[1] * y[0];
        prop_assert!(cross.abs() <= 1e-12 * (k[0].hypot(k[1]) * y[0].hypot(y[1])).max(1e-300));
    }
}
