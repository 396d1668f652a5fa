//! Benchmark problems with closed-form solutions.
//!
//! The colloid problem `u'' = 2 sinh(u)`, `u(0) = u0`, `u(inf) = 0` is solved
//! as the first-order system `(u, u')`. With `t(x) = tanh(u0 / 4) e^{-sqrt(2) x}`
//! its solution is
//!
//! ```text
//! u(x)  = 4 atanh(t)
//! u'(x) = -4 sqrt(2) t / (1 - t^2)
//! ```
//!
//! which is the usual `2 ln[(A e^{sqrt 2 x} + B) / (A e^{sqrt 2 x} - B)]`,
//! `A = e^{u0/2} + 1`, `B = e^{u0/2} - 1`, rewritten so that nothing cancels
//! or overflows in the tail.

use crate::error::{BvpError, Result};
use crate::grid::{GridMap, QuasiUniformGrid};
use crate::newton::{continuation_solve, parameter_continuation, ContinuationRun, NewtonConfig, StartPath};
use crate::scheme::{BcStructure, BvpSystem, DiscreteSolution};
use std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColloidProblem {
    u0: f64,
}

impl ColloidProblem {
    pub fn new(u0: f64) -> Result<Self> {
        if !(u0 > 0.0 && u0.is_finite()) {
            return Err(BvpError::Config(format!("u0 must be positive, got {u0}")));
        }
        Ok(ColloidProblem { u0 })
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn system(&self) -> BvpSystem {
        let u0 = self.u0;
        BvpSystem::new(
            2,
            |_, u: &[f64], out: &mut [f64]| {
                out[0] = u[1];
                out[1] = 2.0 * u[0].sinh();
            },
            move |left: &[f64], right: &[f64], out: &mut [f64]| {
                out[0] = left[0] - u0;
                out[1] = right[0];
            },
            BcStructure::Separated { left: 1, right: 1 },
        )
        .expect("colloid system is well formed")
        .with_rhs_jacobian(|_, u: &[f64], j: &mut [f64]| {
            j[0] = 0.0;
            j[1] = 1.0;
            j[2] = 2.0 * u[0].cosh();
            j[3] = 0.0;
        })
        .with_boundary_jacobian(|_, _, dl: &mut [f64], dr: &mut [f64]| {
            dl.copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            dr.copy_from_slice(&[0.0, 0.0, 1.0, 0.0]);
        })
    }

    pub fn exact(&self, x: f64) -> Result<[f64; 2]> {
        if !(x >= 0.0) {
            return Err(BvpError::Domain(format!("x = {x} is outside [0, inf]")));
        }
        if x == f64::INFINITY {
            return Ok([0.0, 0.0]);
        }
        let t = (0.25 * self.u0).tanh() * (-SQRT_2 * x).exp();
        Ok([4.0 * t.atanh(), -4.0 * SQRT_2 * t / ((1.0 - t) * (1.0 + t))])
    }

    /// Exact `u(x)` for use as an error reference; `x` must be `>= 0`.
    pub fn exact_vec(&self, x: f64) -> Vec<f64> {
        self.exact(x).expect("grid nodes are non-negative").to_vec()
    }

    /// `u'(0) = -2 sqrt(cosh(u0) - 1)`.
    pub fn dudx0(&self) -> f64 {
        colloid_dudx0(self.u0)
    }

    /// Constant rows `(u0, -1)`.
    pub fn first_guess(&self, grid: &QuasiUniformGrid) -> Result<DiscreteSolution> {
        DiscreteSolution::constant(grid.clone(), &[self.u0, -1.0])
    }
}

pub fn colloid_system(u0: f64) -> Result<BvpSystem> {
    Ok(ColloidProblem::new(u0)?.system())
}

pub fn colloid_exact(u0: f64, x: f64) -> Result<[f64; 2]> {
    ColloidProblem::new(u0)?.exact(x)
}

pub fn colloid_dudx0(u0: f64) -> f64 {
    -2.0 * (u0.cosh() - 1.0).max(0.0).sqrt()
}

/// Parameter values for continuation in `u0`: `1, 2, .., floor(target)`, then `target`.
pub fn unit_steps_to(target: f64) -> Vec<f64> {
    let mut steps: Vec<f64> = (1..).map(|k| k as f64).take_while(|&v| v < target).collect();
    steps.push(target);
    steps
}

/// Mesh continuation for the colloid problem.
///
/// The coarsest grid starts from constant rows `(u0, -1)`. If Newton fails
/// there, the coarsest grid is instead reached by continuation in `u0` with
/// unit steps from `u0 = 1`, and `run.start` records that path.
pub fn colloid_continuation(
    problem: &ColloidProblem,
    map: GridMap,
    n_list: &[usize],
    cfg: &NewtonConfig,
) -> Result<ContinuationRun> {
    let sys = problem.system();
    let run = continuation_solve(&sys, map, n_list, |g| problem.first_guess(g), cfg)?;
    if !run.solutions.is_empty() || run.failure.is_none() {
        return Ok(run);
    }
    let parameters = unit_steps_to(problem.u0());
    let grid = crate::grid::build_grid(map, n_list[0])?;
    let start = ColloidProblem::new(parameters[0])?.first_guess(&grid)?;
    let (guess, reports) = match parameter_continuation(colloid_system, &parameters, &start, cfg) {
        Ok(ok) => ok,
        // parameter continuation did not help either; report the direct failure
        Err(_) => return Ok(run),
    };
    let mut run = continuation_solve(&sys, map, n_list, move |_| Ok(guess), cfg)?;
    run.start = StartPath::ParameterContinuation { parameters, reports };
    Ok(run)
}

/// `u'' = u`, `u(0) = 1`, `u(inf) = 0`, solved by `(e^{-x}, -e^{-x})`.
pub fn linear_fixture() -> BvpSystem {
    BvpSystem::new(
        2,
        |_, u: &[f64], out: &mut [f64]| {
            out[0] = u[1];
            out[1] = u[0];
        },
        |left: &[f64], right: &[f64], out: &mut [f64]| {
            out[0] = left[0] - 1.0;
            out[1] = right[0];
        },
        BcStructure::Separated { left: 1, right: 1 },
    )
    .expect("linear fixture is well formed")
    .with_rhs_jacobian(|_, _, j: &mut [f64]| j.copy_from_slice(&[0.0, 1.0, 1.0, 0.0]))
}

pub fn linear_exact(x: f64) -> [f64; 2] {
    let e = (-x).exp();
    [e, -e]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::fd_jacobian_f;

    #[test]
    fn system_examples() {
        let sys = colloid_system(1.0).unwrap();
        let mut out = [1.0; 2];
        sys.rhs(0.3, &[0.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        assert_eq!(sys.rhs_jacobian(0.3, &[0.0, 0.0]).unwrap(), vec![0.0, 1.0, 2.0, 0.0]);
        let p = ColloidProblem::new(1.0).unwrap();
        let (l, r) = (p.exact(0.0).unwrap(), p.exact(f64::INFINITY).unwrap());
        sys.boundary(&l, &r, &mut out);
        assert!(out[0].abs() < 1e-15 && out[1] == 0.0);
        assert!(matches!(colloid_system(0.0), Err(BvpError::Config(_))));
        assert!(matches!(colloid_system(-2.0), Err(BvpError::Config(_))));
    }

    #[test]
    fn exact_examples() {
        let p = ColloidProblem::new(1.0).unwrap();
        let [u, du] = p.exact(0.0).unwrap();
        assert!((u - 1.0).abs() < 1e-15);
        assert!((du - (-1.473880)).abs() < 1e-6);
        assert_eq!(p.exact(f64::INFINITY).unwrap(), [0.0, 0.0]);
        let far = p.exact(800.0).unwrap();
        assert!(far[0] >= 0.0 && far[0] < 1e-300 && far[1] <= 0.0);
        assert!(matches!(p.exact(-1.0), Err(BvpError::Domain(_))));

        let [_, du7] = colloid_exact(7.0, 0.0).unwrap();
        assert!((du7 - (-46.789615734913319)).abs() <= 1e-12 * 46.8);
    }

    #[test]
    fn missing_condition() {
        assert!((colloid_dudx0(7.0) - (-46.789615734913319)).abs() <= 1e-12 * 46.8);
        assert!(colloid_dudx0(1e-9).abs() < 1e-8);
        for u0 in [1.0, 3.0, 7.0] {
            let [_, du] = colloid_exact(u0, 0.0).unwrap();
            let want = colloid_dudx0(u0);
            assert!((du - want).abs() <= 1e-12 * want.abs(), "u0 = {u0}");
            // closed form -2 sqrt(2) sinh(u0 / 2)
            assert!((want + 2.0 * SQRT_2 * (0.5 * u0).sinh()).abs() <= 1e-12 * want.abs());
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for u0 in [1.0, 7.0] {
            let p = ColloidProblem::new(u0).unwrap();
            for x in [0.05, 0.3, 1.0, 2.5, 6.0] {
                let h = 1e-5;
                let fd = (p.exact(x + h).unwrap()[0] - p.exact(x - h).unwrap()[0]) / (2.0 * h);
                let du = p.exact(x).unwrap()[1];
                assert!((fd - du).abs() <= 1e-7 * du.abs().max(1e-3), "u0={u0} x={x}");
            }
        }
    }

    #[test]
    fn exact_solves_the_ode() {
        for u0 in [1.0, 3.0, 7.0] {
            let p = ColloidProblem::new(u0).unwrap();
            for x in [0.1, 0.5, 1.0, 2.0, 4.0] {
                let h = 1e-4;
                let u = |s: f64| p.exact(s).unwrap()[0];
                let second = (u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
                let want = 2.0 * u(x).sinh();
                assert!((second - want).abs() <= 1e-5 * want.abs(), "u0={u0} x={x}");
            }
        }
    }

    #[test]
    fn exact_is_monotone() {
        let p = ColloidProblem::new(7.0).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let vals: Vec<[f64; 2]> = xs.iter().map(|&x| p.exact(x).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1][0] < w[0][0] && w[1][0] > 0.0);
            assert!(w[1][1] > w[0][1] && w[1][1] < 0.0);
        }
    }

    #[test]
    fn analytic_jacobian_matches_fd() {
        let sys = colloid_system(2.0).unwrap();
        let f = |x: f64, u: &[f64], out: &mut [f64]| sys.rhs(x, u, out);
        for u in [[0.3, -1.0], [2.5, 4.0], [-1.2, 0.0], [6.9, -40.0]] {
            let fd = fd_jacobian_f(&f, 1.0, &u).unwrap();
            let an = sys.rhs_jacobian(1.0, &u).unwrap();
            for (a, b) in an.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn linear_exact_values() {
        assert_eq!(linear_exact(0.0), [1.0, -1.0]);
        let inf = linear_exact(f64::INFINITY);
        assert!(inf[0] == 0.0 && inf[1] == 0.0);
    }

    #[test]
    fn unit_steps() {
        assert_eq!(unit_steps_to(7.0), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(unit_steps_to(2.5), vec![1.0, 2.0, 2.5]);
        assert_eq!(unit_steps_to(0.5), vec![0.5]);
    }
}
