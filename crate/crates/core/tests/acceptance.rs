//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use nsfd_bvp::newton::interpolate_to_finer;
use nsfd_bvp::{
    build_grid, build_table, colloid_continuation, extrapolate_common_nodes, global_error, jacobian,
    linear_fixture, max_abs_by_component, newton_solve, observed_orders, residual,
    restrict_to_coarse, scheme_coefficients, update_norm, ColloidProblem, ContinuationRun, DiscreteSolution,
    GridMap, NewtonConfig, NormKind, ROUND_OFF_FLOOR,
};
use std::time::Instant;

const N_LIST: [usize; 11] = [5, 10, 20, 40, 80, 160, 320, 640, 1280, 2560, 5120];

/// Published extrapolation table for the derivative at the origin, u0 = 7.
const TABLE: [(usize, [Option<f64>; 3]); 6] = [
    (160, [Some(-43.835177171609345), None, None]),
    (320, [Some(-45.864298511341850), Some(-46.540672291252690), None]),
    (640, [Some(-46.537797149336093), Some(-46.762296695334179), Some(-46.777071655606278)]),
    (1280, [Some(-46.725033491934731), Some(-46.787445606134277), Some(-46.789122200187620)]),
    (2560, [Some(-46.773360098843838), Some(-46.789468967813541), Some(-46.789603858592159)]),
    (5120, [Some(-46.785544794016836), Some(-46.789606359074504), Some(-46.789615518491907)]),
];

const EXACT_DUDX0_U0_7: f64 = -46.789615734913319;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, text: String) {
        if !ok {
            self.failures += 1;
        }
        println!("criterion {id}: {} {text}", if ok { "PASS" } else { "FAIL" });
    }
}

fn run(u0: f64) -> ContinuationRun {
    let p = ColloidProblem::new(u0).unwrap();
    colloid_continuation(&p, GridMap::default(), &N_LIST, &NewtonConfig::default())
        .unwrap()
        .into_result()
        .unwrap()
}

fn exact_on(sol: &DiscreteSolution, u0: f64) -> Vec<f64> {
    let p = ColloidProblem::new(u0).unwrap();
    let g = sol.grid();
    (0..g.n_nodes()).flat_map(|n| p.exact_vec(g.node(n))).collect()
}

fn table1(r: &mut Report, run7: &ContinuationRun, elapsed: f64) {
    let from = N_LIST.iter().position(|&n| n == 160).unwrap();
    let raw: Vec<f64> = run7.solutions[from..].iter().map(|s| s.value(0, 1)).collect();
    let t = build_table("2U_0", &N_LIST[from..], &raw, 2.0, 2.0, 2).unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (g, (n, row)) in TABLE.iter().enumerate() {
        assert_eq!(t.grid_sizes[g], *n);
        for (k, want) in row.iter().enumerate() {
            if let Some(want) = want {
                let got = t.get(g, k).expect("entry present");
                worst = worst.max(((got - want) / want).abs());
                count += 1;
            }
        }
    }
    r.line(
        1,
        count == 15 && worst <= 1e-9 && elapsed < 10.0,
        format!(
            "{count} entries, worst relative deviation {worst:.2e} (tol 1e-9), map {} c={}, continuation {elapsed:.3}s",
            GridMap::default().kind(),
            GridMap::default().c()
        ),
    );
    let best = t.get(5, 2).unwrap();
    let gap = (best - EXACT_DUDX0_U0_7).abs();
    r.line(2, gap <= 5e-7, format!("|2U_(5120,2) - exact| = {gap:.3e} (tol 5e-7)"));
}

fn orders(r: &mut Report, id: u32, run: &ContinuationRun, u0: f64, targets: [(f64, f64); 3]) {
    let table = extrapolate_common_nodes(&run.solutions, 2.0, 2.0, 2).unwrap();
    let reference = exact_on(&run.solutions[0], u0);
    let est = observed_orders(&table, &reference, NormKind::MaxOverCommonNodes).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (want, tol)) in targets.iter().enumerate() {
        for comp in 0..2 {
            match est.finest_resolved(k, comp, ROUND_OFF_FLOOR) {
                Some((row, p)) => {
                    ok &= (p - want).abs() <= *tol;
                    parts.push(format!("p{k}[{}]={p:.4} ({},{})", comp + 1, row.coarse_n, row.fine_n));
                }
                None => {
                    ok = false;
                    parts.push(format!("p{k}[{}]=none", comp + 1));
                }
            }
        }
    }
    r.line(id, ok, format!("u0={u0}: {}", parts.join(", ")));
}

fn error_magnitude(r: &mut Report, run1: &ContinuationRun) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [20usize, 40] {
        let fine = restrict_to_coarse(run1.solution_for(2 * n).unwrap()).unwrap();
        let e = max_abs_by_component(&global_error(&fine, |x| ColloidProblem::new(1.0).unwrap().exact_vec(x)), 2);
        ok &= e.iter().all(|&v| (1e-4..=1e-2).contains(&v));
        let own = run1.solution_for(n).unwrap();
        let e_own = max_abs_by_component(&global_error(own, |x| ColloidProblem::new(1.0).unwrap().exact_vec(x)), 2);
        parts.push(format!(
            "pair ({n},{}): max|e(U_2N)| = [{:.3e}, {:.3e}] (U_N itself: [{:.3e}, {:.3e}])",
            2 * n,
            e[0],
            e[1],
            e_own[0],
            e_own[1]
        ));
    }
    r.line(5, ok, format!("{} (range [1e-4, 1e-2])", parts.join("; ")));
}

fn estimator_bound(r: &mut Report, run1: &ContinuationRun, run7: &ContinuationRun) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (u0, run, pairs) in [(1.0, run1, [20usize, 40]), (7.0, run7, [1280, 2560])] {
        for n in pairs {
            let coarse = run.solution_for(n).unwrap();
            let fine = run.solution_for(2 * n).unwrap();
            let est = nsfd_bvp::error_estimate(coarse, fine, 2.0).unwrap().max_abs();
            let p = ColloidProblem::new(u0).unwrap();
            let e = max_abs_by_component(&global_error(&restrict_to_coarse(fine).unwrap(), |x| p.exact_vec(x)), 2);
            for comp in 0..2 {
                let bounded = est[comp] >= e[comp];
                ok &= bounded;
                parts.push(format!(
                    "u0={u0} ({n},{}) comp {}: max|E|={:.6e} {} max|e|={:.6e}",
                    2 * n,
                    comp + 1,
                    est[comp],
                    if bounded { ">=" } else { "<" },
                    e[comp]
                ));
            }
        }
    }
    r.line(6, ok, parts.join("; "));
}

fn iterations(r: &mut Report, run1: &ContinuationRun) {
    let its: Vec<usize> = run1.reports.iter().map(|x| x.iterations).collect();
    let first = its[0];
    let warm_max = its[1..].iter().copied().max().unwrap();
    r.line(
        7,
        first <= 10 && warm_max <= 5,
        format!("u0=1 coarsest grid {first} iterations (reference count 7, bound 10); warm starts {:?} (bound 5)", &its[1..]),
    );
}

fn properties(r: &mut Report) {
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };

    let maps = [GridMap::logarithmic(10.0).unwrap(), GridMap::algebraic(10.0).unwrap(), GridMap::algebraic(1.5).unwrap()];
    for map in maps {
        for n in [5usize, 40, 640] {
            let g = build_grid(map, n).unwrap();
            let g2 = build_grid(map, 2 * n).unwrap();
            check("monotone", g.nodes().windows(2).all(|w| w[0] < w[1]));
            check("nested", (0..=n).all(|i| g.node(i).to_bits() == g2.node(2 * i).to_bits()));
            let co = scheme_coefficients(&g);
            check("b + c = 1", co.b.iter().zip(&co.c).all(|(b, c)| (b + c - 1.0).abs() <= 4.0 * f64::EPSILON));
        }
    }
    for i in 1..1000 {
        let xi = i as f64 / 1000.0;
        let (l, a) = (maps[0].eval(xi).unwrap(), maps[1].eval(xi).unwrap());
        check("log < alg", l < a);
    }

    let p = ColloidProblem::new(2.0).unwrap();
    let sys = p.system();
    let grid = build_grid(GridMap::default(), 12).unwrap();
    let co = scheme_coefficients(&grid);
    let sol = DiscreteSolution::from_fn(grid.clone(), 2, |n, x, row| {
        let e = p.exact(x).unwrap();
        row[0] = e[0] + 0.05 * (n as f64).sin();
        row[1] = e[1] - 0.1;
    })
    .unwrap();
    let dense = jacobian(&sys, &co, &sol).unwrap().to_dense();
    let mut worst = 0.0f64;
    for j in 0..sol.values().len() {
        let h = 1e-6 * sol.values()[j].abs().max(1.0);
        let shifted = |s: f64| {
            let mut v = sol.values().to_vec();
            v[j] += s;
            residual(&sys, &co, &DiscreteSolution::new(grid.clone(), 2, v).unwrap()).unwrap()
        };
        let (rp, rm) = (shifted(h), shifted(-h));
        for i in 0..rp.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max((fd - dense[i][j]).abs() / dense[i][j].abs().max(1.0));
        }
    }
    check("jacobian vs finite differences", worst <= 1e-6);

    let lin = linear_fixture();
    for n in [5usize, 20, 80] {
        let g = build_grid(GridMap::default(), n).unwrap();
        let init = DiscreteSolution::constant(g, &[1.0, -1.0]).unwrap();
        let (_, rep) = newton_solve(&lin, &init, &NewtonConfig::default()).unwrap();
        check("linear fixture iterations", rep.converged && rep.iterations <= 2);
    }

    let sizes = [10usize, 20, 40, 80];
    let limit = -3.25;
    let raw: Vec<f64> = sizes.iter().map(|&n| limit + 7.0 * (n as f64).powi(-2)).collect();
    let t = build_table("q", &sizes, &raw, 2.0, 2.0, 1).unwrap();
    check(
        "single-term sequence",
        (1..sizes.len()).all(|g| ((t.get(g, 1).unwrap() - limit) / limit).abs() <= 1e-12),
    );

    let coarse = DiscreteSolution::from_fn(build_grid(GridMap::default(), 16).unwrap(), 2, |n, x, row| {
        row[0] = (n as f64).cos();
        row[1] = if x.is_finite() { x } else { 0.0 };
    })
    .unwrap();
    let back = restrict_to_coarse(&interpolate_to_finer(&coarse).unwrap()).unwrap();
    check(
        "restrict of interpolate",
        back.values().iter().zip(coarse.values()).all(|(a, b)| a.to_bits() == b.to_bits()),
    );
    check("update norm", update_norm(&[1.0, -3.0]) == 2.0);

    let secs = start.elapsed().as_secs_f64();
    let ok = failed.is_empty() && secs < 60.0;
    r.line(
        8,
        ok,
        format!(
            "property checks {} in {secs:.3}s (jacobian deviation {worst:.1e}){}",
            if failed.is_empty() { "all hold" } else { "broken" },
            if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) }
        ),
    );
}

fn main() {
    let mut r = Report { failures: 0 };
    let t0 = Instant::now();
    let run7 = run(7.0);
    let elapsed = t0.elapsed().as_secs_f64();
    let run1 = run(1.0);

    table1(&mut r, &run7, elapsed);
    orders(&mut r, 3, &run1, 1.0, [(2.0, 0.1), (4.0, 0.3), (6.0, 0.7)]);
    orders(&mut r, 4, &run7, 7.0, [(1.99, 0.1), (3.96, 0.3), (5.77, 0.7)]);
    error_magnitude(&mut r, &run1);
    estimator_bound(&mut r, &run1, &run7);
    iterations(&mut r, &run1);
    properties(&mut r);

    if r.failures > 0 {
        println!("{} criterion(s) failed", r.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
