//! Solver properties: LP optimality certificates against vertex scans,
//! Frank-Wolfe anytime feasibility and monotone descent, and duality-gap
//! validity as a suboptimality bound.

mod common;

use common::random_polytope;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use neurodp::{
    frank_wolfe, solve_lp, FwConfig, LpProblem, QuadraticObjective, StepRule,
};

fn random_quadratic(rng: &mut StdRng, dim: usize) -> QuadraticObjective {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let p = &m * m.transpose() + DMatrix::identity(dim, dim) * 0.1;
    QuadraticObjective {
        p,
        q: DVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0)),
        c: 0.0,
    }
}

#[test]
fn lp_value_matches_vertex_scan() {
    for seed in 0..100u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let extra = rng.gen_range(3..8);
        let poly = random_polytope(&mut rng, 2, extra);
        let verts = poly.enumerate_vertices().unwrap();
        for _ in 0..5 {
            let c = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let (z, value) = solve_lp(&LpProblem::new(c.clone(), poly.clone()).unwrap()).unwrap();
            let scan = verts.vertices().iter().map(|v| c.dot(v)).fold(f64::INFINITY, f64::min);
            assert!((value - scan).abs() <= 1e-9, "seed {seed}: LP {value} vs scan {scan}");
            assert!(poly.contains(&z, 1e-9).unwrap());
        }
    }
}

#[test]
fn frank_wolfe_iterates_feasible_and_monotone() {
    for seed in 0..200u64 {
        let mut rng = StdRng::seed_from_u64(500 + seed);
        let extra = rng.gen_range(3..8);
        let poly = random_polytope(&mut rng, 2, extra);
        let objective = random_quadratic(&mut rng, 2);
        let (start, _) = poly.chebyshev_center().unwrap();
        let cfg = FwConfig {
            max_iters: 30,
            step_rule: if seed % 2 == 0 { StepRule::ExactQuadratic } else { StepRule::armijo_default() },
            gap_tol: 0.0,
            record_trace: true,
        };
        let res = frank_wolfe(&objective, &poly, &start, &cfg).unwrap();
        assert!(res.feasible_throughout, "seed {seed}");
        for row in &res.trace {
            assert!(poly.contains(&row.point, 1e-9).unwrap(), "seed {seed}: infeasible iterate");
        }
        for w in res.trace.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-12,
                "seed {seed}: objective increased {} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
        assert!(poly.contains(&res.u, 1e-9).unwrap());
    }
}

#[test]
fn duality_gap_bounds_suboptimality() {
    // f(u_t) - min over the feasible set <= gap; the vertex scan is an upper
    // bound on the true minimum, so the check is conservative in the right
    // direction.
    for seed in 0..50u64 {
        let mut rng = StdRng::seed_from_u64(900 + seed);
        let extra = rng.gen_range(3..8);
        let poly = random_polytope(&mut rng, 2, extra);
        let objective = random_quadratic(&mut rng, 2);
        let verts = poly.enumerate_vertices().unwrap();
        let (start, _) = poly.chebyshev_center().unwrap();
        for iters in [1usize, 3, 10] {
            let cfg = FwConfig { max_iters: iters, gap_tol: 0.0, ..Default::default() };
            let res = frank_wolfe(&objective, &poly, &start, &cfg).unwrap();
            let vertex_min = verts
                .vertices()
                .iter()
                .map(|v| {
                    let v = v.clone();
                    (v.transpose() * &objective.p * &v)[0] + objective.q.dot(&v)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                res.objective - vertex_min <= res.duality_gap + 1e-9,
                "seed {seed} iters {iters}: f={} scan_min={} gap={}",
                res.objective,
                vertex_min,
                res.duality_gap
            );
        }
    }
}

#[test]
fn exact_step_converges_on_interior_optimum() {
    // Unconstrained minimum inside the polytope: the gap must drop to the
    // tolerance quickly under exact quadratic steps.
    let mut rng = StdRng::seed_from_u64(42);
    let poly = random_polytope(&mut rng, 2, 6);
    let objective = QuadraticObjective {
        p: DMatrix::identity(2, 2),
        q: DVector::from_vec(vec![-0.4, 0.6]), // minimum at (0.2, -0.3)
        c: 0.0,
    };
    let (start, _) = poly.chebyshev_center().unwrap();
    let cfg = FwConfig { max_iters: 500, gap_tol: 1e-10, ..Default::default() };
    let res = frank_wolfe(&objective, &poly, &start, &cfg).unwrap();
    assert!(res.duality_gap <= 1e-10);
    assert!((res.u - DVector::from_vec(vec![0.2, -0.3])).norm() < 1e-5);
}
