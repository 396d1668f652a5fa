//! Residual and Jacobian of the non-standard finite-difference scheme
//!
//! ```text
//! U_{n+1} - U_n - a_{n+1/2} f(x_{n+1/2}, b_{n+1/2} U_{n+1} + c_{n+1/2} U_n) = 0,   n = 0..N-1
//! g(U_0, U_N) = 0
//! ```
//!
//! for first-order systems `u' = f(x, u)` on `[0, inf)`. `f` is only ever
//! evaluated at the finite midpoints `x_{n+1/2}`.

use crate::error::{BvpError, Result};
use crate::grid::{QuasiUniformGrid, SchemeCoefficients};

/// `f(x, u, out)` writes `du/dx` into `out`.
pub type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// Writes `df/du` row-major into a `d * d` buffer.
pub type RhsJacobianFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// `g(u_0, u_inf, out)`.
pub type BoundaryFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
/// Writes `dg/du_0` and `dg/du_inf`, both row-major `d * d`.
pub type BoundaryJacobianFn = dyn Fn(&[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync;

/// How the boundary function couples the two ends.
///
/// `Separated { left, right }` promises that the first `left` components of
/// `g` depend on `U_0` only and the last `right` components on `U_N` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcStructure {
    Separated { left: usize, right: usize },
    Coupled,
}

/// A first-order boundary value problem `u' = f(x, u)`, `g(u(0), u(inf)) = 0`.
pub struct BvpSystem {
    dim: usize,
    f: Box<RhsFn>,
    f_jac: Option<Box<RhsJacobianFn>>,
    g: Box<BoundaryFn>,
    g_jac: Option<Box<BoundaryJacobianFn>>,
    bc: BcStructure,
}

impl std::fmt::Debug for BvpSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BvpSystem")
            .field("dim", &self.dim)
            .field("f_jac", &self.f_jac.is_some())
            .field("g_jac", &self.g_jac.is_some())
            .field("bc", &self.bc)
            .finish()
    }
}

impl BvpSystem {
    pub fn new<F, G>(dim: usize, f: F, g: G, bc: BcStructure) -> Result<Self>
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(BvpError::Config("system dimension must be positive".into()));
        }
        if let BcStructure::Separated { left, right } = bc {
            if left + right != dim {
                return Err(BvpError::Config(format!(
                    "separated boundary conditions {left} + {right} do not add up to d = {dim}"
                )));
            }
        }
        Ok(BvpSystem {
            dim,
            f: Box::new(f),
            f_jac: None,
            g: Box::new(g),
            g_jac: None,
            bc,
        })
    }

    pub fn with_rhs_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.f_jac = Some(Box::new(jac));
        self
    }

    pub fn with_boundary_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.g_jac = Some(Box::new(jac));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bc_structure(&self) -> BcStructure {
        self.bc
    }

    pub fn has_rhs_jacobian(&self) -> bool {
        self.f_jac.is_some()
    }

    pub fn rhs(&self, x: f64, u: &[f64], out: &mut [f64]) {
        (self.f)(x, u, out)
    }

    pub fn boundary(&self, u0: &[f64], un: &[f64], out: &mut [f64]) {
        (self.g)(u0, un, out)
    }

    /// `df/du` at `(x, u)`, analytic when available.
    pub fn rhs_jacobian(&self, x: f64, u: &[f64]) -> Result<Vec<f64>> {
        match &self.f_jac {
            Some(jac) => {
                let mut out = vec![0.0; self.dim * self.dim];
                jac(x, u, &mut out);
                Ok(out)
            }
            None => fd_jacobian_f(&*self.f, x, u),
        }
    }

    /// `(dg/du_0, dg/du_inf)`, analytic when available.
    pub fn boundary_jacobian(&self, u0: &[f64], un: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim;
        let mut left = vec![0.0; d * d];
        let mut right = vec![0.0; d * d];
        if let Some(jac) = &self.g_jac {
            jac(u0, un, &mut left, &mut right);
            return Ok((left, right));
        }
        let mut base = vec![0.0; d];
        (self.g)(u0, un, &mut base);
        check_finite(&base, "g", 0)?;
        let mut pert = vec![0.0; d];
        let mut shifted = u0.to_vec();
        for j in 0..d {
            let h = fd_step(u0[j]);
            shifted[j] = u0[j] + h;
            let h = shifted[j] - u0[j];
            (self.g)(&shifted, un, &mut pert);
            check_finite(&pert, "g", 0)?;
            for i in 0..d {
                left[i * d + j] = (pert[i] - base[i]) / h;
            }
            shifted[j] = u0[j];
        }
        let mut shifted = un.to_vec();
        for j in 0..d {
            let h = fd_step(un[j]);
            shifted[j] = un[j] + h;
            let h = shifted[j] - un[j];
            (self.g)(u0, &shifted, &mut pert);
            check_finite(&pert, "g", 0)?;
            for i in 0..d {
                right[i * d + j] = (pert[i] - base[i]) / h;
            }
            shifted[j] = un[j];
        }
        Ok((left, right))
    }
}

/// Nodal unknowns `U_0 .. U_N`, row-major `(N + 1) x d`, bound to their grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    grid: QuasiUniformGrid,
    dim: usize,
    values: Vec<f64>,
}

impl DiscreteSolution {
    pub fn new(grid: QuasiUniformGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(BvpError::Config("solution dimension must be positive".into()));
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(BvpError::Config(format!(
                "expected {} values for N = {} and d = {}, got {}",
                grid.n_nodes() * dim,
                grid.n_intervals(),
                dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(BvpError::Domain(format!(
                "non-finite value at node {}",
                pos / dim
            )));
        }
        Ok(DiscreteSolution { grid, dim, values })
    }

    /// Every row equal to `row`.
    pub fn constant(grid: QuasiUniformGrid, row: &[f64]) -> Result<Self> {
        let values = row
            .iter()
            .copied()
            .cycle()
            .take(row.len() * grid.n_nodes())
            .collect();
        Self::new(grid, row.len(), values)
    }

    /// Row `n` from `fill(n, x_n, row)`.
    pub fn from_fn<F>(grid: QuasiUniformGrid, dim: usize, mut fill: F) -> Result<Self>
    where
        F: FnMut(usize, f64, &mut [f64]),
    {
        let mut values = vec![0.0; grid.n_nodes() * dim];
        for (n, row) in values.chunks_mut(dim).enumerate() {
            fill(n, grid.node(n), row);
        }
        Self::new(grid, dim, values)
    }

    pub(crate) fn from_parts_unchecked(grid: QuasiUniformGrid, dim: usize, values: Vec<f64>) -> Self {
        DiscreteSolution { grid, dim, values }
    }

    pub fn grid(&self) -> &QuasiUniformGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_intervals(&self) -> usize {
        self.grid.n_intervals()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn value(&self, n: usize, component: usize) -> f64 {
        self.values[n * self.dim + component]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }
}

fn fd_step(u: f64) -> f64 {
    f64::EPSILON.sqrt() * u.abs().max(1.0)
}

fn check_finite(v: &[f64], what: &'static str, node: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(BvpError::Evaluation { what, node })
    }
}

/// Forward-difference `df/du` with steps `sqrt(eps) max(1, |u_j|)`.
pub fn fd_jacobian_f<F>(f: &F, x: f64, u: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]) + ?Sized,
{
    if !x.is_finite() {
        return Err(BvpError::Domain("f is never evaluated at x = inf".into()));
    }
    let d = u.len();
    let mut base = vec![0.0; d];
    f(x, u, &mut base);
    check_finite(&base, "f", 0)?;
    let mut jac = vec![0.0; d * d];
    let mut pert = vec![0.0; d];
    let mut shifted = u.to_vec();
    for j in 0..d {
        shifted[j] = u[j] + fd_step(u[j]);
        let h = shifted[j] - u[j];
        f(x, &shifted, &mut pert);
        check_finite(&pert, "f", 0)?;
        for i in 0..d {
            jac[i * d + j] = (pert[i] - base[i]) / h;
        }
        shifted[j] = u[j];
    }
    Ok(jac)
}

fn check_shapes(sys: &BvpSystem, coeffs: &SchemeCoefficients, sol: &DiscreteSolution) -> Result<()> {
    if sys.dim() != sol.dim() {
        return Err(BvpError::Config(format!(
            "system has d = {} but the solution has d = {}",
            sys.dim(),
            sol.dim()
        )));
    }
    if coeffs.len() != sol.n_intervals() {
        return Err(BvpError::Config(format!(
            "{} coefficient intervals for a grid with N = {}",
            coeffs.len(),
            sol.n_intervals()
        )));
    }
    Ok(())
}

/// Writes `b U_{n+1} + c U_n` into `out`.
fn blend(b: f64, c: f64, left: &[f64], right: &[f64], out: &mut [f64]) {
    for ((o, &l), &r) in out.iter_mut().zip(left).zip(right) {
        *o = b * r + c * l;
    }
}

/// Scheme residual, `d (N + 1)` entries: interior blocks in increasing `n`,
/// then the `d` boundary equations.
pub fn residual(
    sys: &BvpSystem,
    coeffs: &SchemeCoefficients,
    sol: &DiscreteSolution,
) -> Result<Vec<f64>> {
    check_shapes(sys, coeffs, sol)?;
    let d = sys.dim();
    let n_int = sol.n_intervals();
    let grid = sol.grid();
    let mut out = vec![0.0; d * (n_int + 1)];
    let mut mid = vec![0.0; d];
    let mut rhs = vec![0.0; d];
    for n in 0..n_int {
        let (left, right) = (sol.row(n), sol.row(n + 1));
        blend(coeffs.b[n], coeffs.c[n], left, right, &mut mid);
        sys.rhs(grid.midpoint(n), &mid, &mut rhs);
        check_finite(&rhs, "f", n)?;
        let a = coeffs.a[n];
        for i in 0..d {
            out[n * d + i] = right[i] - left[i] - a * rhs[i];
        }
    }
    let bc = &mut out[n_int * d..];
    sys.boundary(sol.row(0), sol.row(n_int), bc);
    check_finite(bc, "g", n_int)?;
    Ok(out)
}

/// Block form of the scheme Jacobian.
///
/// Row block `n < N` has `lower[n]` in the columns of `U_n` and `upper[n]` in
/// the columns of `U_{n+1}`; the boundary rows carry `bc_left` (columns of
/// `U_0`) and `bc_right` (columns of `U_N`). All blocks are row-major `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    pub dim: usize,
    pub structure: BcStructure,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub bc_left: Vec<f64>,
    pub bc_right: Vec<f64>,
}

impl BlockJacobian {
    pub fn n_intervals(&self) -> usize {
        self.lower.len()
    }

    pub fn size(&self) -> usize {
        self.dim * (self.n_intervals() + 1)
    }

    /// `J x` in residual row order.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let n_int = self.n_intervals();
        let mut y = vec![0.0; self.size()];
        for n in 0..n_int {
            let (lo, up) = (&self.lower[n], &self.upper[n]);
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += lo[i * d + j] * x[n * d + j] + up[i * d + j] * x[(n + 1) * d + j];
                }
                y[n * d + i] = acc;
            }
        }
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.bc_left[i * d + j] * x[j] + self.bc_right[i * d + j] * x[n_int * d + j];
            }
            y[n_int * d + i] = acc;
        }
        y
    }

    /// Dense copy in residual row order; intended for tests and small systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.size();
        let mut dense = vec![vec![0.0; m]; m];
        let mut e = vec![0.0; m];
        for col in 0..m {
            e[col] = 1.0;
            for (row, v) in self.apply(&e).into_iter().enumerate() {
                dense[row][col] = v;
            }
            e[col] = 0.0;
        }
        dense
    }
}

/// Jacobian of [`residual`] with respect to the nodal unknowns.
pub fn jacobian(
    sys: &BvpSystem,
    coeffs: &SchemeCoefficients,
    sol: &DiscreteSolution,
) -> Result<BlockJacobian> {
    check_shapes(sys, coeffs, sol)?;
    let d = sys.dim();
    let n_int = sol.n_intervals();
    let grid = sol.grid();
    let mut lower = Vec::with_capacity(n_int);
    let mut upper = Vec::with_capacity(n_int);
    let mut mid = vec![0.0; d];
    for n in 0..n_int {
        blend(coeffs.b[n], coeffs.c[n], sol.row(n), sol.row(n + 1), &mut mid);
        let jf = sys.rhs_jacobian(grid.midpoint(n), &mid).map_err(|e| match e {
            BvpError::Evaluation { what, .. } => BvpError::Evaluation { what, node: n },
            other => other,
        })?;
        check_finite(&jf, "df/du", n)?;
        let (a, b, c) = (coeffs.a[n], coeffs.b[n], coeffs.c[n]);
        let mut lo: Vec<f64> = jf.iter().map(|v| -a * c * v).collect();
        let mut up: Vec<f64> = jf.iter().map(|v| -a * b * v).collect();
        for i in 0..d {
            lo[i * d + i] -= 1.0;
            up[i * d + i] += 1.0;
        }
        lower.push(lo);
        upper.push(up);
    }
    let (bc_left, bc_right) = sys
        .boundary_jacobian(sol.row(0), sol.row(n_int))
        .map_err(|e| match e {
            BvpError::Evaluation { what, .. } => BvpError::Evaluation { what, node: n_int },
            other => other,
        })?;
    check_finite(&bc_left, "dg/du0", n_int)?;
    check_finite(&bc_right, "dg/duN", n_int)?;
    Ok(BlockJacobian {
        dim: d,
        structure: sys.bc_structure(),
        lower,
        upper,
        bc_left,
        bc_right,
    })
}

/// Midpoint weights of the older two-point formula
/// `u_{n+1/2} ~ (x_{n+1} - x_{n+1/2}) / (x_{n+1} - x_n) u_n + (x_{n+1/2} - x_n) / (x_{n+1} - x_n) u_{n+1}`.
///
/// On the last interval `x_N = inf` and the weights degenerate to `(1, 0)`,
/// so `u_N` (the condition at infinity) drops out of the scheme.
pub fn legacy_midpoint_weights(grid: &QuasiUniformGrid, n: usize) -> (f64, f64) {
    legacy_weights_from_nodes(grid.node(n), grid.midpoint(n), grid.node(n + 1))
}

/// [`legacy_midpoint_weights`] for explicit node positions; `next` may be `+inf`.
pub fn legacy_weights_from_nodes(x: f64, mid: f64, next: f64) -> (f64, f64) {
    if next.is_infinite() {
        return (1.0, 0.0);
    }
    let h = next - x;
    ((next - mid) / h, (mid - x) / h)
}
