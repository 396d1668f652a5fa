//! Newton relaxation for the discrete scheme and mesh continuation over
//! nested grids.
//!
//! Iterations stop when the mean absolute update
//! `sum |dU| / (d (N + 1))` drops to `tol`.

use crate::error::{BvpError, Result};
use crate::grid::{build_grid, scheme_coefficients, GridMap, QuasiUniformGrid};
use crate::linalg::{dense_solve, BandMatrix};
use crate::scheme::{jacobian, residual, BcStructure, BlockJacobian, BvpSystem, DiscreteSolution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed step factor in `(0, 1]`; `None` is a full Newton step.
    pub damping: Option<f64>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-12,
            max_iter: 50,
            damping: None,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(BvpError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(BvpError::Config("max_iter must be at least 1".into()));
        }
        if let Some(w) = self.damping {
            if !(w > 0.0 && w <= 1.0) {
                return Err(BvpError::Config(format!("damping must lie in (0, 1], got {w}")));
            }
        }
        Ok(())
    }

    fn step(&self) -> f64 {
        self.damping.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_update_norm: f64,
    pub converged: bool,
}

/// Mean absolute value of an update.
pub fn update_norm(delta: &[f64]) -> f64 {
    if delta.is_empty() {
        return 0.0;
    }
    delta.iter().map(|v| v.abs()).sum::<f64>() / delta.len() as f64
}

/// Solves `J x = rhs` (rhs in residual row order), choosing the banded or
/// bordered path from the boundary structure.
pub fn solve_linear(jac: &BlockJacobian, rhs: &[f64]) -> Result<Vec<f64>> {
    match jac.structure {
        BcStructure::Separated { .. } => solve_banded(jac, rhs),
        BcStructure::Coupled => solve_bordered(jac, rhs),
    }
}

fn check_rhs(jac: &BlockJacobian, rhs: &[f64]) -> Result<()> {
    if rhs.len() != jac.size() {
        return Err(BvpError::Config(format!(
            "right-hand side has {} entries, the Jacobian {}",
            rhs.len(),
            jac.size()
        )));
    }
    Ok(())
}

/// Band path for separated boundary conditions.
///
/// Rows are reordered as (left conditions, interior blocks, right
/// conditions), which makes the matrix banded with
/// `kl = left + d - 1` and `ku = 2 d - 1 - left`.
pub fn solve_banded(jac: &BlockJacobian, rhs: &[f64]) -> Result<Vec<f64>> {
    check_rhs(jac, rhs)?;
    let d = jac.dim;
    let n_int = jac.n_intervals();
    let left = match jac.structure {
        BcStructure::Separated { left, right } if left + right == d => left,
        BcStructure::Separated { .. } => {
            return Err(BvpError::Config("separated counts do not add up to d".into()))
        }
        BcStructure::Coupled => {
            return Err(BvpError::Config(
                "the band path needs separated boundary conditions".into(),
            ))
        }
    };
    for i in 0..d {
        for j in 0..d {
            let stray = if i < left {
                jac.bc_right[i * d + j]
            } else {
                jac.bc_left[i * d + j]
            };
            if stray != 0.0 {
                return Err(BvpError::Config(format!(
                    "boundary row {i} couples both ends but is declared separated"
                )));
            }
        }
    }
    let size = jac.size();
    let kl = left + d - 1;
    let ku = 2 * d - 1 - left;
    let mut band = BandMatrix::zeros(size, kl, ku);
    let mut b = vec![0.0; size];
    let bc_row0 = d * n_int;
    for i in 0..left {
        for j in 0..d {
            band.set(i, j, jac.bc_left[i * d + j]);
        }
        b[i] = rhs[bc_row0 + i];
    }
    for n in 0..n_int {
        for i in 0..d {
            let row = left + n * d + i;
            for j in 0..d {
                band.set(row, n * d + j, jac.lower[n][i * d + j]);
                band.set(row, (n + 1) * d + j, jac.upper[n][i * d + j]);
            }
            b[row] = rhs[n * d + i];
        }
    }
    for i in left..d {
        let row = left + n_int * d + (i - left);
        for j in 0..d {
            band.set(row, n_int * d + j, jac.bc_right[i * d + j]);
        }
        b[row] = rhs[bc_row0 + i];
    }
    let lu = band.factor()?;
    lu.solve_in_place(&mut b);
    Ok(b)
}

/// Bordered path for boundary conditions that couple both ends.
///
/// One end's unknowns are moved to the border. The interior rows then form a
/// square block bidiagonal band matrix `M` in the remaining unknowns; one band
/// factorisation, `d + 1` band solves and a dense `d x d` Schur complement
/// give the solution. `U_0` is tried as the border first and `U_N` when that
/// leaves `M` singular.
pub fn solve_bordered(jac: &BlockJacobian, rhs: &[f64]) -> Result<Vec<f64>> {
    check_rhs(jac, rhs)?;
    match solve_bordered_at(jac, rhs, Border::Left) {
        Err(BvpError::SingularJacobian { .. }) => solve_bordered_at(jac, rhs, Border::Right),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Border {
    Left,
    Right,
}

fn solve_bordered_at(jac: &BlockJacobian, rhs: &[f64], border: Border) -> Result<Vec<f64>> {
    let d = jac.dim;
    let n_int = jac.n_intervals();
    let m = d * n_int;
    // block column of U_j inside M, and the interior block that multiplies the border
    let (mut band, border_block) = match border {
        Border::Left => (BandMatrix::zeros(m, 2 * d - 1, d - 1), &jac.lower[0]),
        Border::Right => (BandMatrix::zeros(m, d - 1, 2 * d - 1), &jac.upper[n_int - 1]),
    };
    let border_row0 = match border {
        Border::Left => 0,
        Border::Right => m - d,
    };
    for n in 0..n_int {
        for i in 0..d {
            let row = n * d + i;
            for j in 0..d {
                let (lo, up) = (jac.lower[n][i * d + j], jac.upper[n][i * d + j]);
                match border {
                    Border::Left => {
                        if n > 0 {
                            band.set(row, (n - 1) * d + j, lo);
                        }
                        band.set(row, n * d + j, up);
                    }
                    Border::Right => {
                        band.set(row, n * d + j, lo);
                        if n + 1 < n_int {
                            band.set(row, (n + 1) * d + j, up);
                        }
                    }
                }
            }
        }
    }
    let lu = band.factor()?;
    let z_rhs = lu.solve(&rhs[..m]);
    let mut z_cols = Vec::with_capacity(d);
    for j in 0..d {
        let mut col = vec![0.0; m];
        for i in 0..d {
            col[border_row0 + i] = border_block[i * d + j];
        }
        lu.solve_in_place(&mut col);
        z_cols.push(col);
    }
    // the boundary rows read the border directly and the other end through M^{-1}
    let (border_bc, far_bc, far0) = match border {
        Border::Left => (&jac.bc_left, &jac.bc_right, m - d),
        Border::Right => (&jac.bc_right, &jac.bc_left, 0),
    };
    let mut schur = border_bc.clone();
    let mut s_rhs = rhs[m..].to_vec();
    for i in 0..d {
        for k in 0..d {
            let r = far_bc[i * d + k];
            if r == 0.0 {
                continue;
            }
            s_rhs[i] -= r * z_rhs[far0 + k];
            for j in 0..d {
                schur[i * d + j] -= r * z_cols[j][far0 + k];
            }
        }
    }
    let end = dense_solve(schur, s_rhs).map_err(|e| match e {
        BvpError::SingularJacobian { index } => BvpError::SingularJacobian { index: m + index },
        other => other,
    })?;
    let interior = (0..m).map(|r| z_rhs[r] - (0..d).map(|j| z_cols[j][r] * end[j]).sum::<f64>());
    let mut x = Vec::with_capacity(m + d);
    match border {
        Border::Left => {
            x.extend_from_slice(&end);
            x.extend(interior);
        }
        Border::Right => {
            x.extend(interior);
            x.extend_from_slice(&end);
        }
    }
    Ok(x)
}

/// Newton's method on the scheme starting from `init`.
///
/// Non-convergence within `max_iter` is not an error: the iterate that
/// followed the smallest update comes back with `converged = false`.
pub fn newton_solve(
    sys: &BvpSystem,
    init: &DiscreteSolution,
    cfg: &NewtonConfig,
) -> Result<(DiscreteSolution, NewtonReport)> {
    cfg.validate()?;
    let coeffs = scheme_coefficients(init.grid());
    let grid = init.grid().clone();
    let d = init.dim();
    let step = cfg.step();
    let mut values = init.values().to_vec();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_norm = f64::INFINITY;
    for iteration in 1..=cfg.max_iter {
        let current = DiscreteSolution::from_parts_unchecked(grid.clone(), d, values);
        let r = residual(sys, &coeffs, &current)?;
        let jac = jacobian(sys, &coeffs, &current)?;
        let delta = solve_linear(&jac, &r)?;
        values = current.into_values();
        for (u, du) in values.iter_mut().zip(&delta) {
            *u -= step * du;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BvpError::Divergence { iteration });
        }
        last_norm = step * update_norm(&delta);
        if last_norm <= cfg.tol {
            let report = NewtonReport {
                iterations: iteration,
                final_update_norm: last_norm,
                converged: true,
            };
            return Ok((DiscreteSolution::from_parts_unchecked(grid, d, values), report));
        }
        if best.as_ref().map_or(true, |(norm, _)| last_norm < *norm) {
            best = Some((last_norm, values.clone()));
        }
    }
    let (norm, values) = best.unwrap_or((last_norm, values));
    let report = NewtonReport {
        iterations: cfg.max_iter,
        final_update_norm: norm,
        converged: false,
    };
    Ok((DiscreteSolution::from_parts_unchecked(grid, d, values), report))
}

/// Prolongs a solution on `N` intervals to `2N`: even nodes copy, odd nodes
/// take the mean of their neighbours (linear in `xi`). The last odd node sits
/// between `x_{N-1}` and `x_N = inf` and is treated the same way.
pub fn interpolate_to_finer(coarse: &DiscreteSolution) -> Result<DiscreteSolution> {
    let grid = coarse.grid();
    let fine_grid = build_grid(grid.map(), 2 * grid.n_intervals())?;
    let d = coarse.dim();
    let mut values = Vec::with_capacity(fine_grid.n_nodes() * d);
    for n in 0..grid.n_intervals() {
        let (a, b) = (coarse.row(n), coarse.row(n + 1));
        values.extend_from_slice(a);
        values.extend(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)));
    }
    values.extend_from_slice(coarse.row(grid.n_intervals()));
    DiscreteSolution::new(fine_grid, d, values)
}

/// How the coarsest grid of a continuation run got its first iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum StartPath {
    /// Straight from the supplied first guess.
    Direct,
    /// After continuation in a problem parameter through the listed values.
    ParameterContinuation { parameters: Vec<f64>, reports: Vec<NewtonReport> },
}

/// Accepted solutions on a doubling grid sequence.
#[derive(Debug, Clone)]
pub struct ContinuationRun {
    pub grid_sizes: Vec<usize>,
    pub solutions: Vec<DiscreteSolution>,
    pub reports: Vec<NewtonReport>,
    pub start: StartPath,
    /// Grid size and cause of the first failure; grids after it were not tried.
    pub failure: Option<(usize, BvpError)>,
}

impl ContinuationRun {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.solutions.len() == self.grid_sizes.len()
    }

    /// Turns a failed run into [`BvpError::Grid`].
    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some((n, err)) => Err(BvpError::Grid {
                n,
                source: Box::new(err),
            }),
            None => Ok(self),
        }
    }

    pub fn solution_for(&self, n: usize) -> Option<&DiscreteSolution> {
        self.solutions.iter().find(|s| s.n_intervals() == n)
    }
}

pub fn validate_doubling(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(BvpError::Config("grid list is empty".into()));
    }
    if n_list[0] == 0 {
        return Err(BvpError::Config("grid sizes must be positive".into()));
    }
    if let Some(w) = n_list.windows(2).find(|w| w[1] != 2 * w[0]) {
        return Err(BvpError::Config(format!(
            "grid list must double at every step: {} is followed by {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Solves on every grid of `n_list`, warm-starting each grid from the
/// interpolated solution of the previous one. Stops at the first grid that
/// fails and records why.
pub fn continuation_solve<G>(
    sys: &BvpSystem,
    map: GridMap,
    n_list: &[usize],
    first_guess: G,
    cfg: &NewtonConfig,
) -> Result<ContinuationRun>
where
    G: FnOnce(&QuasiUniformGrid) -> Result<DiscreteSolution>,
{
    validate_doubling(n_list)?;
    cfg.validate()?;
    let first_grid = build_grid(map, n_list[0])?;
    let init = first_guess(&first_grid)?;
    if init.grid() != &first_grid || init.dim() != sys.dim() {
        return Err(BvpError::Config(
            "first guess does not live on the coarsest grid".into(),
        ));
    }
    let mut run = ContinuationRun {
        grid_sizes: n_list.to_vec(),
        solutions: Vec::with_capacity(n_list.len()),
        reports: Vec::with_capacity(n_list.len()),
        start: StartPath::Direct,
        failure: None,
    };
    let mut guess = init;
    for (i, &n) in n_list.iter().enumerate() {
        if i > 0 {
            guess = interpolate_to_finer(run.solutions.last().expect("previous grid solved"))?;
        }
        match newton_solve(sys, &guess, cfg) {
            Ok((sol, report)) if report.converged => {
                run.solutions.push(sol);
                run.reports.push(report);
            }
            Ok((_, report)) => {
                run.failure = Some((
                    n,
                    BvpError::NotConverged {
                        iterations: report.iterations,
                        update_norm: report.final_update_norm,
                    },
                ));
                break;
            }
            Err(e) => {
                run.failure = Some((n, e));
                break;
            }
        }
    }
    Ok(run)
}

/// Walks a problem family through `parameters` on a fixed grid, each solve
/// warm-starting the next. Returns the solution for the last parameter.
pub fn parameter_continuation<F>(
    family: F,
    parameters: &[f64],
    init: &DiscreteSolution,
    cfg: &NewtonConfig,
) -> Result<(DiscreteSolution, Vec<NewtonReport>)>
where
    F: Fn(f64) -> Result<BvpSystem>,
{
    if parameters.is_empty() {
        return Err(BvpError::Config("no continuation parameters".into()));
    }
    let mut current = init.clone();
    let mut reports = Vec::with_capacity(parameters.len());
    for &p in parameters {
        let sys = family(p)?;
        let (sol, report) = newton_solve(&sys, &current, cfg)?;
        if !report.converged {
            return Err(BvpError::NotConverged {
                iterations: report.iterations,
                update_norm: report.final_update_norm,
            });
        }
        reports.push(report);
        current = sol;
    }
    Ok((current, reports))
}
