//! Richardson extrapolation on nested grids with refinement ratio 2,
//! observed orders of accuracy and the a posteriori error estimate
//! `E = (U_{2N} - U_N) / (2^{p_0} - 1)`.

use crate::error::{BvpError, Result};
use crate::newton::validate_doubling;
use crate::grid::build_grid;
use crate::scheme::DiscreteSolution;

/// One extrapolation step `u_fine + (u_fine - u_coarse) / (2^p - 1)`.
pub fn extrapolate_step(u_coarse: f64, u_fine: f64, order: f64) -> f64 {
    u_fine + (u_fine - u_coarse) / (order.exp2() - 1.0)
}

/// `p_k = p_0 + k * step` for `k = 0 .. levels - 1`.
pub fn true_orders(p0: f64, order_step: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| p0 + k as f64 * order_step).collect()
}

/// Triangular table `U_{g,k}`.
///
/// `entries[g][k]` is defined for `k <= min(g, levels)`; column 0 holds the
/// raw per-grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationTable {
    pub quantity_label: String,
    pub grid_sizes: Vec<usize>,
    pub entries: Vec<Vec<f64>>,
    pub orders: Vec<f64>,
}

impl ExtrapolationTable {
    pub fn get(&self, g: usize, k: usize) -> Option<f64> {
        self.entries.get(g).and_then(|row| row.get(k)).copied()
    }

    pub fn levels(&self) -> usize {
        self.orders.len()
    }

    pub fn row_for(&self, n: usize) -> Option<&[f64]> {
        let g = self.grid_sizes.iter().position(|&x| x == n)?;
        Some(&self.entries[g])
    }
}

fn check_orders(p0: f64, order_step: f64) -> Result<()> {
    if !(p0 > 0.0) || !(order_step >= 0.0) {
        return Err(BvpError::Config(format!(
            "orders need p0 > 0 and a non-negative step, got p0 = {p0}, step = {order_step}"
        )));
    }
    Ok(())
}

pub fn build_table(
    quantity_label: impl Into<String>,
    grid_sizes: &[usize],
    raw: &[f64],
    p0: f64,
    order_step: f64,
    levels: usize,
) -> Result<ExtrapolationTable> {
    check_orders(p0, order_step)?;
    validate_doubling(grid_sizes)?;
    if raw.len() != grid_sizes.len() {
        return Err(BvpError::Config(format!(
            "{} raw values for {} grids",
            raw.len(),
            grid_sizes.len()
        )));
    }
    if raw.len() < levels + 1 {
        return Err(BvpError::Config(format!(
            "{levels} extrapolation levels need at least {} grids, got {}",
            levels + 1,
            raw.len()
        )));
    }
    let orders = true_orders(p0, order_step, levels);
    let mut entries: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
    for (g, &v) in raw.iter().enumerate() {
        let mut row = vec![v];
        for k in 0..g.min(levels) {
            row.push(extrapolate_step(entries[g - 1][k], row[k], orders[k]));
        }
        entries.push(row);
    }
    Ok(ExtrapolationTable {
        quantity_label: quantity_label.into(),
        grid_sizes: grid_sizes.to_vec(),
        entries,
        orders,
    })
}

/// `(log e_coarse - log e_fine) / log 2`.
pub fn observed_order(err_coarse: f64, err_fine: f64) -> Result<f64> {
    if !(err_coarse > 0.0 && err_fine > 0.0) {
        return Err(BvpError::UndefinedOrder);
    }
    Ok((err_coarse.ln() - err_fine.ln()) / std::f64::consts::LN_2)
}

/// Even rows `0, 2, .., 2N` of a solution on `2N` intervals, as a solution on
/// the nested `N`-interval grid.
pub fn restrict_to_coarse(fine: &DiscreteSolution) -> Result<DiscreteSolution> {
    let n_fine = fine.n_intervals();
    if n_fine % 2 != 0 {
        return Err(BvpError::Config(format!(
            "cannot restrict a grid with an odd number of intervals ({n_fine})"
        )));
    }
    let grid = build_grid(fine.grid().map(), n_fine / 2)?;
    let values = fine.rows().step_by(2).flatten().copied().collect();
    DiscreteSolution::new(grid, fine.dim(), values)
}

/// `e_n = u(x_n) - U_n`; `exact` must return the limit value at `x = inf`.
pub fn global_error<F>(solution: &DiscreteSolution, exact: F) -> Vec<f64>
where
    F: Fn(f64) -> Vec<f64>,
{
    let grid = solution.grid();
    solution
        .rows()
        .enumerate()
        .flat_map(|(n, row)| {
            let u = exact(grid.node(n));
            row.iter().zip(u).map(|(v, w)| w - v).collect::<Vec<_>>()
        })
        .collect()
}

/// Per-component maximum of `|values|` for row-major `(rows x dim)` data.
pub fn max_abs_by_component(values: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; dim];
    for row in values.chunks(dim) {
        for (m, v) in out.iter_mut().zip(row) {
            *m = m.max(v.abs());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub coarse_n: usize,
    pub dim: usize,
    /// Row-major `(coarse_n + 1) x dim`, one row per coarse node.
    pub values: Vec<f64>,
    pub order_used: f64,
}

impl ErrorEstimate {
    pub fn max_abs(&self) -> Vec<f64> {
        max_abs_by_component(&self.values, self.dim)
    }
}

/// Estimate of the error of `fine` (on `2N`) at the nodes of `coarse` (on `N`).
pub fn error_estimate(
    coarse: &DiscreteSolution,
    fine: &DiscreteSolution,
    p0: f64,
) -> Result<ErrorEstimate> {
    check_orders(p0, 0.0)?;
    if !fine.grid().is_refinement_of(coarse.grid()) {
        return Err(BvpError::Config(format!(
            "grids are not nested: N = {} and N = {} on {:?} / {:?}",
            coarse.n_intervals(),
            fine.n_intervals(),
            coarse.grid().map(),
            fine.grid().map()
        )));
    }
    if coarse.dim() != fine.dim() {
        return Err(BvpError::Config("solutions have different dimensions".into()));
    }
    let restricted = restrict_to_coarse(fine)?;
    let denom = p0.exp2() - 1.0;
    let values = restricted
        .values()
        .iter()
        .zip(coarse.values())
        .map(|(f, c)| (f - c) / denom)
        .collect();
    Ok(ErrorEstimate {
        coarse_n: coarse.n_intervals(),
        dim: coarse.dim(),
        values,
        order_used: p0,
    })
}

/// Extrapolated solution values on the nodes shared by a whole doubling
/// sequence (the nodes of its coarsest grid).
///
/// `values[g][k]` is row-major `(base_n + 1) x dim` and exists for
/// `k <= min(g, levels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonNodeTable {
    pub base_n: usize,
    pub dim: usize,
    pub grid_sizes: Vec<usize>,
    pub orders: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl CommonNodeTable {
    /// Scalar table for one node (coarsest-grid numbering) and component.
    pub fn scalar_table(&self, node: usize, component: usize, label: impl Into<String>) -> ExtrapolationTable {
        let idx = node * self.dim + component;
        ExtrapolationTable {
            quantity_label: label.into(),
            grid_sizes: self.grid_sizes.clone(),
            entries: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v[idx]).collect())
                .collect(),
            orders: self.orders.clone(),
        }
    }
}

pub fn extrapolate_common_nodes(
    solutions: &[DiscreteSolution],
    p0: f64,
    order_step: f64,
    levels: usize,
) -> Result<CommonNodeTable> {
    check_orders(p0, order_step)?;
    let first = solutions
        .first()
        .ok_or_else(|| BvpError::Config("no solutions to extrapolate".into()))?;
    let grid_sizes: Vec<usize> = solutions.iter().map(|s| s.n_intervals()).collect();
    validate_doubling(&grid_sizes)?;
    if solutions.len() < levels + 1 {
        return Err(BvpError::Config(format!(
            "{levels} extrapolation levels need at least {} grids, got {}",
            levels + 1,
            solutions.len()
        )));
    }
    if solutions
        .windows(2)
        .any(|w| !w[1].grid().is_refinement_of(w[0].grid()) || w[1].dim() != w[0].dim())
    {
        return Err(BvpError::Config("solutions are not on nested grids".into()));
    }
    let base_n = first.n_intervals();
    let dim = first.dim();
    let orders = true_orders(p0, order_step, levels);
    let mut values: Vec<Vec<Vec<f64>>> = Vec::with_capacity(solutions.len());
    for (g, sol) in solutions.iter().enumerate() {
        let stride = 1usize << g;
        let raw: Vec<f64> = sol.rows().step_by(stride).flatten().copied().collect();
        let mut row = vec![raw];
        for k in 0..g.min(levels) {
            let next = values[g - 1][k]
                .iter()
                .zip(&row[k])
                .map(|(&c, &f)| extrapolate_step(c, f, orders[k]))
                .collect();
            row.push(next);
        }
        values.push(row);
    }
    Ok(CommonNodeTable {
        base_n,
        dim,
        grid_sizes,
        orders,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Maximum over the common nodes, per component; zero errors are skipped.
    MaxOverCommonNodes,
    /// A single value: node index in the coarsest grid, zero-based component.
    AtNode { node: usize, component: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    pub level: usize,
    pub coarse_n: usize,
    pub fine_n: usize,
    /// One entry per measured component.
    pub err_coarse: Vec<f64>,
    pub err_fine: Vec<f64>,
    /// `None` where an error is zero.
    pub order: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub norm: NormKind,
    pub rows: Vec<OrderRow>,
}

impl OrderEstimate {
    /// Rows for a given level, ordered from coarse to fine pairs.
    pub fn level(&self, k: usize) -> impl Iterator<Item = &OrderRow> {
        self.rows.iter().filter(move |r| r.level == k)
    }

    pub fn finest(&self, k: usize) -> Option<&OrderRow> {
        self.level(k).last()
    }

    /// Order of `component` from the finest pair at level `k` whose fine-grid
    /// error is still at least `floor`; below that, round-off dominates.
    pub fn finest_resolved(&self, k: usize, component: usize, floor: f64) -> Option<(&OrderRow, f64)> {
        self.level(k)
            .filter(|r| r.err_fine[component] >= floor)
            .filter_map(|r| r.order[component].map(|p| (r, p)))
            .last()
    }
}

/// Smallest error trusted for order estimation, for solutions of size O(1)
/// to O(10^2); roughly 500 ulps of 1.
pub const ROUND_OFF_FLOOR: f64 = 1e-13;

/// Errors of every table entry against `reference` (row-major over the
/// common nodes) under `norm`.
pub fn table_errors(table: &CommonNodeTable, reference: &[f64], norm: NormKind) -> Result<Vec<Vec<Vec<f64>>>> {
    let expected = (table.base_n + 1) * table.dim;
    if reference.len() != expected {
        return Err(BvpError::Config(format!(
            "reference has {} values, the common nodes need {expected}",
            reference.len()
        )));
    }
    if let NormKind::AtNode { node, component } = norm {
        if node > table.base_n || component >= table.dim {
            return Err(BvpError::Config(format!(
                "node {node} / component {component} is outside the coarsest grid"
            )));
        }
    }
    Ok(table
        .values
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| match norm {
                    NormKind::MaxOverCommonNodes => {
                        let diff: Vec<f64> = reference.iter().zip(v).map(|(u, w)| u - w).collect();
                        max_abs_by_component(&diff, table.dim)
                    }
                    NormKind::AtNode { node, component } => {
                        let i = node * table.dim + component;
                        vec![(reference[i] - v[i]).abs()]
                    }
                })
                .collect()
        })
        .collect())
}

/// Observed orders between consecutive grids at every extrapolation level.
pub fn observed_orders(table: &CommonNodeTable, reference: &[f64], norm: NormKind) -> Result<OrderEstimate> {
    let errors = table_errors(table, reference, norm)?;
    let mut rows = Vec::new();
    for k in 0..=table.orders.len() {
        for g in k..errors.len().saturating_sub(1) {
            let (ec, ef) = (&errors[g][k], &errors[g + 1][k]);
            rows.push(OrderRow {
                level: k,
                coarse_n: table.grid_sizes[g],
                fine_n: table.grid_sizes[g + 1],
                err_coarse: ec.clone(),
                err_fine: ef.clone(),
                order: ec
                    .iter()
                    .zip(ef)
                    .map(|(&a, &b)| observed_order(a, b).ok())
                    .collect(),
            });
        }
    }
    Ok(OrderEstimate { norm, rows })
}
