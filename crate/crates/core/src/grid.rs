//! Quasi-uniform grids on `[0, inf]`.
//!
//! A uniform grid `xi_n = n / N` on `[0, 1]` is pushed through a grid
//! generating function `x(xi)` whose value at `xi = 1` is `+inf`:
//!
//! ```text
//! logarithmic:  x = -c ln(1 - xi)
//! algebraic:    x =  c xi / (1 - xi)
//! ```
//!
//! The last node is stored as `f64::INFINITY`. Every scheme formula only
//! touches the quarter nodes `x_{n+1/4}, x_{n+1/2}, x_{n+3/4}`, which are finite
//! on every interval including the last one.

use crate::error::{BvpError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Logarithmic,
    Algebraic,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Logarithmic => write!(f, "log"),
            MapKind::Algebraic => write!(f, "alg"),
        }
    }
}

/// A grid generating function together with its control parameter `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    kind: MapKind,
    c: f64,
}

impl GridMap {
    pub fn new(kind: MapKind, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(BvpError::Config(format!(
                "map control parameter must be positive and finite, got {c}"
            )));
        }
        Ok(GridMap { kind, c })
    }

    pub fn logarithmic(c: f64) -> Result<Self> {
        Self::new(MapKind::Logarithmic, c)
    }

    pub fn algebraic(c: f64) -> Result<Self> {
        Self::new(MapKind::Algebraic, c)
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Evaluates `x(xi)`; returns `+inf` at `xi = 1`.
    pub fn eval(&self, xi: f64) -> Result<f64> {
        map_eval(self, xi)
    }

    fn eval_unchecked(&self, xi: f64) -> f64 {
        match self.kind {
            // ln_1p(-1) = -inf, so xi = 1 maps to +inf
            MapKind::Logarithmic => -self.c * (-xi).ln_1p(),
            MapKind::Algebraic => {
                if xi == 1.0 {
                    f64::INFINITY
                } else {
                    self.c * xi / (1.0 - xi)
                }
            }
        }
    }
}

impl Default for GridMap {
    fn default() -> Self {
        GridMap {
            kind: MapKind::Logarithmic,
            c: 10.0,
        }
    }
}

pub fn map_eval(map: &GridMap, xi: f64) -> Result<f64> {
    if !(map.c > 0.0) {
        return Err(BvpError::Config(format!(
            "map control parameter must be positive, got {}",
            map.c
        )));
    }
    if !(0.0..=1.0).contains(&xi) {
        return Err(BvpError::Domain(format!("xi = {xi} lies outside [0, 1]")));
    }
    Ok(map.eval_unchecked(xi))
}

/// Integer nodes `x_0 .. x_N` (with `x_N = +inf`) and the cached quarter
/// nodes of every interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiUniformGrid {
    map: GridMap,
    n: usize,
    nodes: Vec<f64>,
    quarters: Vec<[f64; 3]>,
}

impl QuasiUniformGrid {
    pub fn new(map: GridMap, n: usize) -> Result<Self> {
        build_grid(map, n)
    }

    pub fn map(&self) -> GridMap {
        self.map
    }

    /// Number of intervals `N`; the grid has `N + 1` nodes.
    pub fn n_intervals(&self) -> usize {
        self.n
    }

    pub fn n_nodes(&self) -> usize {
        self.n + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    /// Reference coordinate `xi_n = n / N`.
    pub fn xi(&self, n: usize) -> f64 {
        n as f64 / self.n as f64
    }

    /// `(x_{n+1/4}, x_{n+1/2}, x_{n+3/4})` for interval `n`.
    pub fn quarter_nodes(&self, n: usize) -> [f64; 3] {
        self.quarters[n]
    }

    pub fn midpoint(&self, n: usize) -> f64 {
        self.quarters[n][1]
    }

    /// True when `other` has twice as many intervals on the same map.
    pub fn is_refinement_of(&self, other: &QuasiUniformGrid) -> bool {
        self.map == other.map && self.n == 2 * other.n
    }
}

pub fn build_grid(map: GridMap, n: usize) -> Result<QuasiUniformGrid> {
    if n == 0 {
        return Err(BvpError::Config("a grid needs at least one interval".into()));
    }
    // validates c
    map_eval(&map, 0.0)?;
    let nf = n as f64;
    let nodes = (0..=n).map(|i| map.eval_unchecked(i as f64 / nf)).collect();
    // (4i + k) / (4N) keeps numerator and denominator exact integers
    let n4 = 4.0 * nf;
    let quarters = (0..n)
        .map(|i| {
            let base = 4.0 * i as f64;
            [
                map.eval_unchecked((base + 1.0) / n4),
                map.eval_unchecked((base + 2.0) / n4),
                map.eval_unchecked((base + 3.0) / n4),
            ]
        })
        .collect();
    Ok(QuasiUniformGrid {
        map,
        n,
        nodes,
        quarters,
    })
}

/// Per-interval weights of the scheme:
///
/// ```text
/// a = 2 (x_{n+3/4} - x_{n+1/4})
/// b = (x_{n+1/2} - x_{n+1/4}) / (x_{n+3/4} - x_{n+1/4})
/// c = (x_{n+3/4} - x_{n+1/2}) / (x_{n+3/4} - x_{n+1/4})
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SchemeCoefficients {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

pub fn scheme_coefficients(grid: &QuasiUniformGrid) -> SchemeCoefficients {
    let n = grid.n_intervals();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for [q1, q2, q3] in grid.quarters.iter().copied() {
        let width = q3 - q1;
        a.push(2.0 * width);
        b.push((q2 - q1) / width);
        c.push((q3 - q2) / width);
    }
    SchemeCoefficients { a, b, c }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_eval_examples() {
        let log10 = GridMap::logarithmic(10.0).unwrap();
        let alg10 = GridMap::algebraic(10.0).unwrap();
        let alg1 = GridMap::algebraic(1.0).unwrap();
        assert_eq!(log10.eval(0.0).unwrap(), 0.0);
        assert_eq!(alg10.eval(1.0).unwrap(), f64::INFINITY);
        assert_eq!(log10.eval(1.0).unwrap(), f64::INFINITY);
        assert_eq!(alg1.eval(0.5).unwrap(), 1.0);
        assert!((log10.eval(0.5).unwrap() - 6.931471805599453).abs() <= 1e-15 * 7.0);
    }

    #[test]
    fn map_eval_rejects_bad_input() {
        let m = GridMap::default();
        assert!(matches!(m.eval(-0.1), Err(BvpError::Domain(_))));
        assert!(matches!(m.eval(1.5), Err(BvpError::Domain(_))));
        assert!(matches!(m.eval(f64::NAN), Err(BvpError::Domain(_))));
        assert!(matches!(GridMap::algebraic(0.0), Err(BvpError::Config(_))));
        assert!(matches!(GridMap::logarithmic(-1.0), Err(BvpError::Config(_))));
        let bogus = GridMap {
            kind: MapKind::Algebraic,
            c: -2.0,
        };
        assert!(matches!(map_eval(&bogus, 0.5), Err(BvpError::Config(_))));
    }

    #[test]
    fn build_grid_examples() {
        let g = build_grid(GridMap::algebraic(1.0).unwrap(), 1).unwrap();
        assert_eq!(g.nodes(), &[0.0, f64::INFINITY]);
        let [q1, q2, q3] = g.quarter_nodes(0);
        assert!((q1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(q2, 1.0);
        assert_eq!(q3, 3.0);

        let g = build_grid(GridMap::logarithmic(10.0).unwrap(), 2).unwrap();
        assert!((g.node(1) - 6.931471805599453).abs() < 1e-14);
        assert_eq!(g.node(2), f64::INFINITY);

        assert!(matches!(
            build_grid(GridMap::default(), 0),
            Err(BvpError::Config(_))
        ));
    }

    #[test]
    fn coefficients_single_interval() {
        let g = build_grid(GridMap::algebraic(1.0).unwrap(), 1).unwrap();
        let k = scheme_coefficients(&g);
        assert!((k.a[0] - 16.0 / 3.0).abs() < 1e-14);
        assert!((k.b[0] - 0.25).abs() < 1e-15);
        assert!((k.c[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn last_node_positions() {
        for &n in &[5usize, 10, 20, 640] {
            let c = 10.0;
            let log = build_grid(GridMap::logarithmic(c).unwrap(), n).unwrap();
            let alg = build_grid(GridMap::algebraic(c).unwrap(), n).unwrap();
            let want_log = c * (n as f64).ln();
            let want_alg = c * (n as f64 - 1.0);
            // 1 - (N-1)/N carries a rounding error of relative size ~N eps
            let tol = 4.0 * f64::EPSILON * n as f64;
            assert!((log.node(n - 1) - want_log).abs() <= tol * want_log);
            assert!((alg.node(n - 1) - want_alg).abs() <= tol * want_alg);
            assert!(log.midpoint(n - 1).is_finite());
            assert!(alg.midpoint(n - 1).is_finite());
        }
    }
}
