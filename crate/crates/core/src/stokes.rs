//! Transient Stokes system with no-slip walls and zero initial velocity on a
//! staggered (MAC) grid, advanced by implicit Euler.
//!
//! Velocity component `a` lives on the faces normal to axis `a`, pressure on
//! cell centres. A face is an unknown when both neighbouring cells are fluid
//! and it is not on the outer box. Each step solves
//!
//! ```text
//! u / dt - L u + G p = u_old / dt + f,      G^T u = 0,
//! ```
//!
//! where `G^T = -div`. Tangential no-slip enters `L` through a mirrored ghost
//! value. The saddle-point matrix is factored once (sparse LU) and reused.
//! One pressure value is pinned to remove the constant mode and the mean is
//! subtracted afterwards.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridField, Region, SpaceTimeField, VectorField, MAX_DIM};
use crate::norms::{self, NormSpec};

/// Cells of a box, each fluid or solid.
#[derive(Clone, Debug, PartialEq)]
pub struct MacGrid {
    cells: Grid,
    fluid: Vec<bool>,
}

impl MacGrid {
    /// `n[a]` cells per axis on `[lower, upper]`; a cell is fluid when
    /// `fluid` holds at its centre.
    pub fn new(lower: &[f64], upper: &[f64], n: &[usize], fluid: impl Fn(&[f64]) -> bool) -> Result<Self> {
        let d = n.len();
        if d != 2 && d != 3 {
            return Err(Error::InvalidArgument(format!("Stokes grids are 2D or 3D, got {d} axes")));
        }
        if n.iter().any(|&k| k < 2) {
            return Err(Error::GridTooCoarse("need at least 2 cells per axis".into()));
        }
        let cells = Grid::cells(lower, upper, n)?;
        let fluid: Vec<bool> = (0..cells.len()).map(|i| fluid(&cells.point(i)[..d])).collect();
        if !fluid.iter().any(|&f| f) {
            return Err(Error::EmptyRegion("no fluid cells".into()));
        }
        Ok(MacGrid { cells, fluid })
    }

    pub fn full_box(lower: &[f64], upper: &[f64], n: &[usize]) -> Result<Self> {
        MacGrid::new(lower, upper, n, |_| true)
    }

    /// Cells whose centres lie inside the ball.
    pub fn ball(center: &[f64], radius: f64, n: usize) -> Result<Self> {
        let lower: Vec<f64> = center.iter().map(|c| c - radius).collect();
        let upper: Vec<f64> = center.iter().map(|c| c + radius).collect();
        let c = center.to_vec();
        MacGrid::new(&lower, &upper, &vec![n; center.len()], move |x| {
            x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < radius * radius
        })
    }

    /// A box with a ball-shaped obstacle removed.
    pub fn box_minus_ball(lower: &[f64], upper: &[f64], n: &[usize], center: &[f64], radius: f64) -> Result<Self> {
        let c = center.to_vec();
        MacGrid::new(lower, upper, n, move |x| {
            x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= radius * radius
        })
    }

    pub fn dim(&self) -> usize {
        self.cells.dim()
    }

    /// The cell-centre grid.
    pub fn cell_grid(&self) -> &Grid {
        &self.cells
    }

    pub fn is_fluid(&self, cell: usize) -> bool {
        self.fluid[cell]
    }

    pub fn fluid_mask(&self) -> &[bool] {
        &self.fluid
    }

    pub fn spacing(&self) -> &[f64] {
        self.cells.spacing()
    }

    /// Grid of the faces normal to `axis`.
    pub fn face_grid(&self, axis: usize) -> Grid {
        let mut shape = self.cells.shape().to_vec();
        shape[axis] += 1;
        let mut origin = self.cells.origin().to_vec();
        origin[axis] -= 0.5 * self.spacing()[axis];
        Grid::new(&shape, &origin, self.spacing()).expect("valid face grid")
    }

    fn cell_index(&self, m: [usize; MAX_DIM]) -> usize {
        self.cells.linear_index(m)
    }

    /// Whether face `m` of `axis` is an unknown.
    fn face_active(&self, axis: usize, m: [usize; MAX_DIM]) -> bool {
        let n = self.cells.shape()[axis];
        if m[axis] == 0 || m[axis] >= n {
            return false;
        }
        let mut lo = m;
        lo[axis] -= 1;
        self.fluid[self.cell_index(lo)] && self.fluid[self.cell_index(m)]
    }

    /// Validity masks of the face grids.
    pub fn face_masks(&self) -> Vec<Vec<bool>> {
        (0..self.dim())
            .map(|a| {
                let g = self.face_grid(a);
                (0..g.len()).map(|i| self.face_active(a, g.multi_index(i))).collect()
            })
            .collect()
    }

    /// Samples `f(x)[a]` at the active faces of each axis `a`; zero elsewhere.
    pub fn sample_faces(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> VectorField {
        let d = self.dim();
        VectorField::new(
            (0..d)
                .map(|a| {
                    let g = self.face_grid(a);
                    let vals = (0..g.len())
                        .map(|i| {
                            if self.face_active(a, g.multi_index(i)) {
                                f(&g.point(i)[..d])[a]
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    GridField::from_values(&g, vals).expect("sizes match")
                })
                .collect(),
        )
    }

    /// Averages cell-centred vector data onto the active faces.
    pub fn cells_to_faces(&self, v: &VectorField) -> Result<VectorField> {
        let d = self.dim();
        if v.len() != d || v.components.iter().any(|c| c.grid() != &self.cells) {
            return Err(Error::InvalidArgument("cell data must live on the cell grid".into()));
        }
        Ok(VectorField::new(
            (0..d)
                .map(|a| {
                    let g = self.face_grid(a);
                    let vals = (0..g.len())
                        .map(|i| {
                            let m = g.multi_index(i);
                            if !self.face_active(a, m) {
                                return 0.0;
                            }
                            let mut lo = m;
                            lo[a] -= 1;
                            let c = &v.components[a];
                            0.5 * (c.values()[self.cell_index(lo)] + c.values()[self.cell_index(m)])
                        })
                        .collect();
                    GridField::from_values(&g, vals).expect("sizes match")
                })
                .collect(),
        ))
    }

    /// Face gradient of cell data: `(psi(c+) - psi(c-)) / h` on active faces.
    pub fn face_gradient(&self, psi: &GridField) -> Result<VectorField> {
        if psi.grid() != &self.cells {
            return Err(Error::InvalidArgument("pressure data must live on the cell grid".into()));
        }
        let d = self.dim();
        Ok(VectorField::new(
            (0..d)
                .map(|a| {
                    let g = self.face_grid(a);
                    let h = self.spacing()[a];
                    let vals = (0..g.len())
                        .map(|i| {
                            let m = g.multi_index(i);
                            if !self.face_active(a, m) {
                                return 0.0;
                            }
                            let mut lo = m;
                            lo[a] -= 1;
                            (psi.values()[self.cell_index(m)] - psi.values()[self.cell_index(lo)]) / h
                        })
                        .collect();
                    GridField::from_values(&g, vals).expect("sizes match")
                })
                .collect(),
        ))
    }

    /// Discrete divergence at the fluid cells; solid cells are masked out.
    pub fn divergence(&self, u: &VectorField) -> Result<GridField> {
        self.check_faces(u)?;
        let d = self.dim();
        let vals = (0..self.cells.len())
            .map(|c| {
                if !self.fluid[c] {
                    return 0.0;
                }
                let m = self.cells.multi_index(c);
                let mut s = 0.0;
                for a in 0..d {
                    let g = u.components[a].grid();
                    let mut up = m;
                    up[a] += 1;
                    s += (u.components[a].values()[g.linear_index(up)] - u.components[a].values()[g.linear_index(m)])
                        / self.spacing()[a];
                }
                s
            })
            .collect();
        GridField::from_values(&self.cells, vals)?.with_mask(self.fluid.clone())
    }

    /// Velocity from a stream function sampled at cell corners (2D):
    /// `u = d_y psi`, `v = -d_x psi` by differences. Corners on the outer box
    /// or touching a solid cell are set to zero first, so the result is
    /// discretely divergence free and vanishes on inactive faces.
    pub fn curl_of_stream(&self, psi: impl Fn(&[f64]) -> f64) -> Result<VectorField> {
        if self.dim() != 2 {
            return Err(Error::InvalidArgument("stream functions are two-dimensional".into()));
        }
        let h = self.spacing();
        let n = self.cells.shape();
        let lower = self.cells.lower();
        let lo = [lower[0] - 0.5 * h[0], lower[1] - 0.5 * h[1]];
        let corner = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i == n[0] || j == n[1] {
                return 0.0;
            }
            for (a, b) in [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)] {
                if !self.fluid[self.cell_index([a, b, 0])] {
                    return 0.0;
                }
            }
            psi(&[lo[0] + i as f64 * h[0], lo[1] + j as f64 * h[1]])
        };
        let mut out = self.zero_velocity();
        for a in 0..2 {
            let g = self.face_grid(a);
            let vals = out.components[a].values_mut();
            for (k, v) in vals.iter_mut().enumerate() {
                let m = g.multi_index(k);
                if !self.face_active(a, m) {
                    continue;
                }
                *v = if a == 0 {
                    (corner(m[0], m[1] + 1) - corner(m[0], m[1])) / h[1]
                } else {
                    -(corner(m[0] + 1, m[1]) - corner(m[0], m[1])) / h[0]
                };
            }
        }
        Ok(out)
    }

    fn check_faces(&self, u: &VectorField) -> Result<()> {
        if u.len() != self.dim() || (0..self.dim()).any(|a| u.components[a].grid() != &self.face_grid(a)) {
            return Err(Error::InvalidArgument("velocity must live on the face grids".into()));
        }
        Ok(())
    }

    /// Zero velocity on the face grids.
    pub fn zero_velocity(&self) -> VectorField {
        VectorField::new(
            (0..self.dim())
                .map(|a| GridField::zeros(&self.face_grid(a)))
                .collect(),
        )
    }

    /// Zero pressure on the fluid cells.
    pub fn zero_pressure(&self) -> GridField {
        GridField::zeros(&self.cells)
            .with_mask(self.fluid.clone())
            .expect("sizes match")
    }
}

/// Velocity, zero-mean pressure and time.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesState {
    pub u: VectorField,
    pub p: GridField,
    pub t: f64,
}

impl StokesState {
    pub fn zero(mac: &MacGrid) -> Self {
        StokesState {
            u: mac.zero_velocity(),
            p: mac.zero_pressure(),
            t: 0.0,
        }
    }
}

type ForcingFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Right-hand side `f(t)`.
#[derive(Clone)]
pub enum Forcing {
    /// Closed form `f(t, x)`, sampled at the faces at the new time level.
    Analytic(ForcingFn),
    /// Cell-centred slices at `t_m = m dt`, averaged onto faces.
    Cells(SpaceTimeField<VectorField>),
    /// Face-centred slices at `t_m = m dt`.
    Faces(SpaceTimeField<VectorField>),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Analytic(_) => write!(f, "Analytic"),
            Forcing::Cells(s) => write!(f, "Cells({} slices)", s.len()),
            Forcing::Faces(s) => write!(f, "Faces({} slices)", s.len()),
        }
    }
}

impl Forcing {
    pub fn analytic(f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Forcing::Analytic(Arc::new(f))
    }

    pub fn zero() -> Self {
        Forcing::analytic(|_, x| vec![0.0; x.len()])
    }

    /// `c f`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Forcing::Analytic(f) => {
                let f = f.clone();
                Forcing::analytic(move |t, x| f(t, x).into_iter().map(|v| c * v).collect())
            }
            Forcing::Cells(s) => Forcing::Cells(s.map(|v| v.scaled(c))),
            Forcing::Faces(s) => Forcing::Faces(s.map(|v| v.scaled(c))),
        }
    }

    /// Face values for step `m` (time `m dt`).
    pub fn at_step(&self, mac: &MacGrid, m: usize, dt: f64) -> Result<VectorField> {
        match self {
            Forcing::Analytic(f) => {
                let t = m as f64 * dt;
                Ok(mac.sample_faces(|x| f(t, x)))
            }
            Forcing::Cells(s) => {
                let slice = s
                    .slices
                    .get(m.wrapping_sub(1))
                    .ok_or_else(|| Error::InvalidArgument(format!("forcing has no slice for step {m}")))?;
                mac.cells_to_faces(slice)
            }
            Forcing::Faces(s) => {
                let slice = s
                    .slices
                    .get(m.wrapping_sub(1))
                    .ok_or_else(|| Error::InvalidArgument(format!("forcing has no slice for step {m}")))?;
                mac.check_faces(slice)?;
                Ok(slice.clone())
            }
        }
    }
}

/// Domain, time horizon, step and forcing.
#[derive(Clone, Debug)]
pub struct StokesProblem {
    pub mac: MacGrid,
    pub final_time: f64,
    pub dt: f64,
    pub forcing: Forcing,
}

impl StokesProblem {
    pub fn new(mac: MacGrid, final_time: f64, dt: f64, forcing: Forcing) -> Result<Self> {
        let p = StokesProblem {
            mac,
            final_time,
            dt,
            forcing,
        };
        p.steps()?;
        Ok(p)
    }

    /// Number of steps; `final_time` must be a whole number of steps.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.final_time > 0.0) {
            return Err(Error::InvalidArgument("dt and T must be positive".into()));
        }
        let n = self.final_time / self.dt;
        let k = n.round();
        if k < 1.0 || (n - k).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "T = {} is not a whole number of steps of {}",
                self.final_time, self.dt
            )));
        }
        let k = k as usize;
        match &self.forcing {
            Forcing::Cells(s) | Forcing::Faces(s) if s.len() < k => Err(Error::InvalidArgument(format!(
                "forcing has {} slices, problem needs {k}",
                s.len()
            ))),
            Forcing::Cells(s) | Forcing::Faces(s) if (s.dt - self.dt).abs() > 1e-12 * self.dt => {
                Err(Error::InvalidArgument("forcing time step differs from the solver step".into()))
            }
            _ => Ok(k),
        }
    }
}

/// Factored implicit-Euler operator for one grid and time step.
pub struct StokesSolver {
    mac: MacGrid,
    dt: f64,
    face_unknown: Vec<Vec<usize>>,
    faces: Vec<(usize, usize)>,
    cell_unknown: Vec<usize>,
    cells: Vec<usize>,
    pinned_row: usize,
    rows: Vec<Vec<(usize, f64)>>,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for StokesSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StokesSolver({} unknowns, dt = {})", self.rows.len(), self.dt)
    }
}

const NONE: usize = usize::MAX;

/// Relative residual above which a solve is reported as failed.
pub const SOLVER_TOLERANCE: f64 = 1e-9;

impl StokesSolver {
    pub fn new(mac: &MacGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let d = mac.dim();
        let h = mac.spacing().to_vec();
        let mut faces = Vec::new();
        let mut face_unknown = Vec::with_capacity(d);
        for a in 0..d {
            let g = mac.face_grid(a);
            let mut map = vec![NONE; g.len()];
            for (i, slot) in map.iter_mut().enumerate() {
                if mac.face_active(a, g.multi_index(i)) {
                    *slot = faces.len();
                    faces.push((a, i));
                }
            }
            face_unknown.push(map);
        }
        let nu = faces.len();
        let mut cell_unknown = vec![NONE; mac.cells.len()];
        let mut cells = Vec::new();
        for c in 0..mac.cells.len() {
            if mac.fluid[c] {
                cell_unknown[c] = nu + cells.len();
                cells.push(c);
            }
        }
        let total = nu + cells.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];

        for (r, &(a, i)) in faces.iter().enumerate() {
            let g = mac.face_grid(a);
            let m = g.multi_index(i);
            let mut diag = 1.0 / dt;
            for b in 0..d {
                let coef = 1.0 / (h[b] * h[b]);
                diag += 2.0 * coef;
                for s in [-1isize, 1] {
                    let j = m[b] as isize + s;
                    let in_range = j >= 0 && (j as usize) < g.shape()[b];
                    let mut mn = m;
                    if in_range {
                        mn[b] = j as usize;
                    }
                    let neighbour = if in_range { face_unknown[a][g.linear_index(mn)] } else { NONE };
                    if neighbour != NONE {
                        rows[r].push((neighbour, -coef));
                    } else if b != a {
                        // tangential wall half a cell away: ghost value -u
                        diag += coef;
                    }
                }
            }
            rows[r].push((r, diag));
            let mut lo = m;
            lo[a] -= 1;
            rows[r].push((cell_unknown[mac.cell_index(m)], 1.0 / h[a]));
            rows[r].push((cell_unknown[mac.cell_index(lo)], -1.0 / h[a]));
        }
        // continuity rows G^T u = 0
        for (r, &(a, i)) in faces.iter().enumerate() {
            let g = mac.face_grid(a);
            let m = g.multi_index(i);
            let mut lo = m;
            lo[a] -= 1;
            rows[cell_unknown[mac.cell_index(m)]].push((r, 1.0 / h[a]));
            rows[cell_unknown[mac.cell_index(lo)]].push((r, -1.0 / h[a]));
        }
        let pinned_row = nu;
        rows[pinned_row] = vec![(pinned_row, 1.0)];

        let triplets: Vec<Triplet<usize, usize, f64>> = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| Triplet::new(r, c, v)))
            .collect();
        let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(total, total, &triplets)
            .map_err(|e| Error::Solver {
                reason: format!("assembly failed: {e:?}"),
                residual: f64::NAN,
            })?;
        let lu = matrix.sp_lu().map_err(|e| Error::Solver {
            reason: format!("sparse LU failed: {e:?}"),
            residual: f64::NAN,
        })?;
        Ok(StokesSolver {
            mac: mac.clone(),
            dt,
            face_unknown,
            faces,
            cell_unknown,
            cells,
            pinned_row,
            rows,
            lu,
        })
    }

    pub fn mac(&self) -> &MacGrid {
        &self.mac
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn unknowns(&self) -> usize {
        self.rows.len()
    }

    /// One implicit-Euler step with face forcing `f` at the new time.
    pub fn step(&self, state: &StokesState, f: &VectorField) -> Result<StokesState> {
        self.mac.check_faces(&state.u)?;
        self.mac.check_faces(f)?;
        let total = self.rows.len();
        let mut b = vec![0.0; total];
        for (r, &(a, i)) in self.faces.iter().enumerate() {
            b[r] = state.u.components[a].values()[i] / self.dt + f.components[a].values()[i];
        }
        let mut x = Mat::<f64>::from_fn(total, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        let x: Vec<f64> = (0..total).map(|i| x[(i, 0)]).collect();

        let mut res2 = 0.0;
        let mut b2 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            let kx: f64 = row.iter().map(|&(c, v)| v * x[c]).sum();
            res2 += (kx - b[r]).powi(2);
            b2 += b[r] * b[r];
        }
        let residual = if b2 > 0.0 { (res2 / b2).sqrt() } else { res2.sqrt() };
        if !residual.is_finite() || residual > SOLVER_TOLERANCE {
            return Err(Error::Solver {
                reason: "saddle-point solve did not reach tolerance".into(),
                residual,
            });
        }

        let d = self.mac.dim();
        let mut u = self.mac.zero_velocity();
        for (a, comp) in u.components.iter_mut().enumerate().take(d) {
            let vals = comp.values_mut();
            for (i, &k) in self.face_unknown[a].iter().enumerate() {
                if k != NONE {
                    vals[i] = x[k];
                }
            }
        }
        let mean = self.cells.iter().map(|&c| x[self.cell_unknown[c]]).sum::<f64>() / self.cells.len() as f64;
        let mut p = vec![0.0; self.mac.cells.len()];
        for &c in &self.cells {
            p[c] = x[self.cell_unknown[c]] - mean;
        }
        debug_assert_eq!(self.cell_unknown[self.cells[0]], self.pinned_row);
        Ok(StokesState {
            u,
            p: GridField::from_values(&self.mac.cells, p)?.with_mask(self.mac.fluid.clone())?,
            t: state.t + self.dt,
        })
    }
}

/// One step on a freshly factored operator.
pub fn step(mac: &MacGrid, state: &StokesState, f: &VectorField, dt: f64) -> Result<StokesState> {
    StokesSolver::new(mac, dt)?.step(state, f)
}

/// `||div_h u|| / ||u||` (zero for `u = 0`).
pub fn relative_divergence(mac: &MacGrid, u: &VectorField) -> Result<f64> {
    let div = mac.divergence(u)?;
    let nu = u.norm_l2();
    Ok(if nu > 0.0 { div.norm_l2() / nu } else { div.norm_l2() })
}

/// A solved trajectory: `u(0) = 0` and the slices at `t_m = m dt`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub u0: VectorField,
    pub u: SpaceTimeField<VectorField>,
    pub p: SpaceTimeField<GridField>,
    pub forcing: SpaceTimeField<VectorField>,
    /// Largest relative discrete divergence over all steps.
    pub max_divergence: f64,
}

pub fn solve_transient(problem: &StokesProblem) -> Result<Trajectory> {
    let steps = problem.steps()?;
    let solver = StokesSolver::new(&problem.mac, problem.dt)?;
    let mut state = StokesState::zero(&problem.mac);
    let u0 = state.u.clone();
    let mut us = Vec::with_capacity(steps);
    let mut ps = Vec::with_capacity(steps);
    let mut fs = Vec::with_capacity(steps);
    let mut max_div = 0.0f64;
    for m in 1..=steps {
        let f = problem.forcing.at_step(&problem.mac, m, problem.dt)?;
        state = solver.step(&state, &f)?;
        max_div = max_div.max(relative_divergence(&problem.mac, &state.u)?);
        us.push(state.u.clone());
        ps.push(state.p.clone());
        fs.push(f);
    }
    Ok(Trajectory {
        u0,
        u: SpaceTimeField::new(problem.dt, us)?,
        p: SpaceTimeField::new(problem.dt, ps)?,
        forcing: SpaceTimeField::new(problem.dt, fs)?,
        max_divergence: max_div,
    })
}

/// `||Delta_h p|| / (sum_a ||d_aa p||^2)^{1/2}` over cells at least `margin`
/// cells from the box edge whose stencil stays in valid data. Zero when both
/// vanish.
pub fn harmonicity_residual(p: &GridField, margin: usize) -> Result<f64> {
    if margin < 2 {
        return Err(Error::InvalidArgument("margin must be at least 2 cells".into()));
    }
    let g = p.grid();
    let d = g.dim();
    let shape = g.shape();
    let strides = g.strides();
    let h = g.spacing();
    let mut lap2 = 0.0;
    let mut hess2 = 0.0;
    let mut count = 0usize;
    for i in 0..g.len() {
        let m = g.multi_index(i);
        if (0..d).any(|a| m[a] < margin || m[a] + margin >= shape[a]) {
            continue;
        }
        if !p.is_valid(i) || (0..d).any(|a| !p.is_valid(i - strides[a]) || !p.is_valid(i + strides[a])) {
            continue;
        }
        count += 1;
        let v = p.values();
        let mut lap = 0.0;
        for a in 0..d {
            let dd = (v[i - strides[a]] - 2.0 * v[i] + v[i + strides[a]]) / (h[a] * h[a]);
            lap += dd;
            hess2 += dd * dd;
        }
        lap2 += lap * lap;
    }
    if count == 0 {
        return Err(Error::EmptyRegion(format!("no interior cells left with margin {margin}")));
    }
    if lap2 == 0.0 {
        return Ok(0.0);
    }
    Ok((lap2 / hess2).sqrt())
}

/// `(||d_t u|| + ||grad^2 u|| + ||grad p||) / ||f||`, each in `L^s(0,T; L^q)`.
pub fn maximal_regularity_probe(problem: &StokesProblem, spec: &NormSpec) -> Result<f64> {
    let traj = solve_transient(problem)?;
    maximal_regularity_ratio(&problem.mac, &traj, spec)
}

/// The probe ratio for an already solved trajectory.
pub fn maximal_regularity_ratio(mac: &MacGrid, traj: &Trajectory, spec: &NormSpec) -> Result<f64> {
    if spec.k != 0 {
        return Err(Error::InvalidArgument("the probe uses k = 0".into()));
    }
    let masks = mac.face_masks();
    let masked = |u: &VectorField| -> Result<VectorField> {
        Ok(VectorField::new(
            u.components
                .iter()
                .zip(&masks)
                .map(|(c, m)| c.clone().with_mask(m.clone()))
                .collect::<Result<Vec<_>>>()?,
        ))
    };
    let region = Region::All;
    let forcing = traj.forcing.try_map(masked)?;
    let f_norm = norms::bochner_norm(&forcing, spec, &region)?;
    if f_norm == 0.0 {
        return Err(Error::UndefinedRatio("forcing vanishes".into()));
    }
    let dt = traj.u.dt;
    let mut prev = traj.u0.clone();
    let mut dudt = Vec::with_capacity(traj.u.len());
    for u in &traj.u.slices {
        dudt.push(masked(&u.combine(1.0 / dt, &prev, -1.0 / dt)?)?);
        prev = u.clone();
    }
    let dudt = SpaceTimeField::new(dt, dudt)?;
    let u = traj.u.try_map(masked)?;
    let a = norms::bochner_seminorm(&dudt, spec.s, spec.q, 0, &region)?;
    let b = norms::bochner_seminorm(&u, spec.s, spec.q, 2, &region)?;
    let c = norms::bochner_seminorm(&traj.p, spec.s, spec.q, 1, &region)?;
    Ok((a + b + c) / f_norm)
}

/// Writes cell-centred forcing slices: a little-endian `u64` header
/// (`n`, `n` resolutions, step count) followed by `f64` samples ordered by
/// step, then component, then cell (first axis fastest).
pub fn write_forcing_file(path: &Path, f: &SpaceTimeField<VectorField>) -> Result<()> {
    let first = f
        .slices
        .first()
        .ok_or_else(|| Error::InvalidArgument("no slices to write".into()))?;
    let g = first.components[0].grid();
    let mut buf = Vec::new();
    buf.extend_from_slice(&(g.dim() as u64).to_le_bytes());
    for &s in g.shape() {
        buf.extend_from_slice(&(s as u64).to_le_bytes());
    }
    buf.extend_from_slice(&(f.len() as u64).to_le_bytes());
    for slice in &f.slices {
        if slice.len() != g.dim() || slice.components.iter().any(|c| c.grid().shape() != g.shape()) {
            return Err(Error::InvalidArgument("slices must share one cell grid".into()));
        }
        for c in &slice.components {
            for v in c.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Reads a forcing file written by [`write_forcing_file`] onto `cells`.
pub fn read_forcing_file(path: &Path, cells: &Grid, dt: f64) -> Result<SpaceTimeField<VectorField>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let next_u64 = |pos: &mut usize| -> Result<u64> {
        let chunk = bytes
            .get(*pos..*pos + 8)
            .ok_or_else(|| Error::Io("forcing file header is truncated".into()))?;
        *pos += 8;
        Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
    };
    let n = next_u64(&mut pos)? as usize;
    if n != cells.dim() {
        return Err(Error::InvalidArgument(format!(
            "forcing file is {n}-dimensional, grid is {}-dimensional",
            cells.dim()
        )));
    }
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        shape.push(next_u64(&mut pos)? as usize);
    }
    if shape != cells.shape() {
        return Err(Error::InvalidArgument(format!(
            "forcing file resolution {shape:?} differs from grid {:?}",
            cells.shape()
        )));
    }
    let steps = next_u64(&mut pos)? as usize;
    let per = cells.len();
    let need = pos + steps * n * per * 8;
    if bytes.len() != need {
        return Err(Error::Io(format!(
            "forcing file has {} bytes, header implies {need}",
            bytes.len()
        )));
    }
    let mut slices = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut comps = Vec::with_capacity(n);
        for _ in 0..n {
            let vals: Vec<f64> = bytes[pos..pos + per * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            pos += per * 8;
            comps.push(GridField::from_values(cells, vals)?);
        }
        slices.push(VectorField::new(comps));
    }
    SpaceTimeField::new(dt, slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(n: usize) -> MacGrid {
        MacGrid::full_box(&[0.0, 0.0], &[1.0, 1.0], &[n, n]).unwrap()
    }

    #[test]
    fn face_grids_are_staggered() {
        let mac = unit_square(4);
        let gx = mac.face_grid(0);
        assert_eq!(gx.shape(), &[5, 4]);
        assert_eq!(gx.point(0)[0], 0.0);
        assert!((gx.point(0)[1] - 0.125).abs() < 1e-15);
        let masks = mac.face_masks();
        assert_eq!(masks[0].iter().filter(|&&b| b).count(), 3 * 4);
    }

    #[test]
    fn zero_forcing_keeps_zero_state() {
        let mac = unit_square(8);
        let s = step(&mac, &StokesState::zero(&mac), &mac.zero_velocity(), 0.1).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(s.p.max_abs(), 0.0);
        assert!((s.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn solver_rejects_bad_step() {
        let mac = unit_square(4);
        assert!(StokesSolver::new(&mac, 0.0).is_err());
        assert!(StokesProblem::new(mac, 1.0, 0.3, Forcing::zero()).is_err());
    }

    #[test]
    fn curl_of_stream_is_discretely_solenoidal() {
        let mac = unit_square(12);
        let u = mac
            .curl_of_stream(|x| (std::f64::consts::PI * x[0]).sin().powi(2) * (std::f64::consts::PI * x[1]).sin().powi(2))
            .unwrap();
        assert!(mac.divergence(&u).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn harmonicity_of_polynomials() {
        let g = Grid::cells(&[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let affine = GridField::from_fn(&g, |x| 2.0 * x[0] - 3.0 * x[1] + 1.0);
        assert_eq!(harmonicity_residual(&affine, 2).unwrap(), 0.0);
        let saddle = GridField::from_fn(&g, |x| x[0] * x[0] - x[1] * x[1]);
        assert!(harmonicity_residual(&saddle, 2).unwrap() < 1e-10);
        assert!(harmonicity_residual(&saddle, 1).is_err());
        assert!(matches!(harmonicity_residual(&saddle, 8), Err(Error::EmptyRegion(_))));
    }
}
