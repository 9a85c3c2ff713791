//! Property suites for the polytope layer: vertex/membership round trips,
//! projection soundness against an LP feasibility oracle, redundancy-removal
//! idempotence, and barycentric-coordinate invariants.

mod common;

use common::random_polytope;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use neurodp::{GeometryError, HPolytope, VPolytope};

#[test]
fn vertex_membership_round_trip() {
    // Every enumerated vertex is a member; every interior sample is in the
    // convex hull of the vertices (witnessed by barycentric coordinates).
    for seed in 0..50u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let extra = rng.gen_range(3..8);
        let poly = random_polytope(&mut rng, 2, extra);
        let verts = poly.enumerate_vertices().unwrap();
        for v in verts.vertices() {
            assert!(poly.contains(v, 1e-9).unwrap(), "seed {seed}: vertex escapes polytope");
        }
        let samples = poly.sample_uniform(20, &mut rng).unwrap();
        for x in &samples {
            let coords = verts
                .barycentric_coords(x)
                .unwrap_or_else(|e| panic!("seed {seed}: interior point not in hull: {e}"));
            let rebuilt = verts.combine(coords.lambda()).unwrap();
            assert!((rebuilt - x).norm() <= 1e-8);
        }
    }
}

/// Feasibility of the fiber `{u | (x, u) in joint}` for fixed `x`, decided by
/// LP (independent of the Fourier-Motzkin path).
fn fiber_feasibility_margin(joint: &HPolytope, x: &DVector<f64>, n_x: usize) -> f64 {
    let n_u = joint.dim() - n_x;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    let mut hard_infeasible: f64 = f64::INFINITY;
    for i in 0..joint.num_rows() {
        let row = joint.a().row(i);
        let u_part = row.columns(n_x, n_u).transpose();
        let rhs = joint.b()[i] - row.columns(0, n_x).transpose().dot(x);
        if u_part.amax() <= 1e-11 {
            hard_infeasible = hard_infeasible.min(rhs);
            continue;
        }
        rows.push(u_part.into_owned());
        offs.push(rhs);
    }
    if hard_infeasible < 0.0 {
        return hard_infeasible; // a u-free row already rules x out
    }
    if rows.is_empty() {
        return f64::INFINITY;
    }
    let a = DMatrix::from_fn(rows.len(), n_u, |i, j| rows[i][j]);
    let fiber = HPolytope::new(a, DVector::from_vec(offs)).unwrap();
    let (_, radius) = fiber.chebyshev_center().unwrap();
    radius
}

#[test]
fn projection_soundness_against_lp_oracle() {
    // x in project(P) iff the LP "exists u with (x,u) in P" is feasible.
    // Points within 1e-6 of either boundary are skipped (tolerance band).
    let mut checked = 0usize;
    for seed in 0..200u64 {
        let mut rng = StdRng::seed_from_u64(1000 + seed);
        let extra = rng.gen_range(4..10);
        let joint = random_polytope(&mut rng, 4, extra);
        let projected = joint.project(&[0, 1]).unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-9.0..9.0));
            let proj_violation = projected.violation(&x);
            let margin = fiber_feasibility_margin(&joint, &x, 2);
            if proj_violation.abs() < 1e-6 || margin.abs() < 1e-6 {
                continue;
            }
            let in_projection = proj_violation < 0.0;
            let feasible = margin > 0.0;
            assert_eq!(
                in_projection, feasible,
                "seed {seed}: x={x:?} projection violation {proj_violation:.3e} vs fiber margin {margin:.3e}"
            );
            checked += 1;
        }
    }
    assert!(checked > 10_000, "only {checked} decisive points checked");
}

#[test]
fn remove_redundant_is_idempotent_and_membership_preserving() {
    for seed in 0..20u64 {
        let mut rng = StdRng::seed_from_u64(7000 + seed);
        let extra = rng.gen_range(3..8);
        let base = random_polytope(&mut rng, 2, extra);
        // Append scaled duplicates and a slack row to force redundancy.
        let m = base.num_rows();
        let mut a = DMatrix::zeros(m + 3, 2);
        let mut b = DVector::zeros(m + 3);
        for i in 0..m {
            a.row_mut(i).copy_from(&base.a().row(i));
            b[i] = base.b()[i];
        }
        for (k, &(src, scale)) in [(0usize, 2.0), (1, 3.0)].iter().enumerate() {
            let row = base.a().row(src) * scale;
            a.row_mut(m + k).copy_from(&row);
            b[m + k] = base.b()[src] * scale;
        }
        a[(m + 2, 0)] = 1.0;
        b[m + 2] = 100.0; // far outside the box
        let padded = HPolytope::new(a, b).unwrap();

        let once = padded.remove_redundant().unwrap();
        let twice = once.remove_redundant().unwrap();
        assert_eq!(once, twice, "seed {seed}: not idempotent");
        assert!(once.num_rows() < padded.num_rows());

        for _ in 0..1000 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-10.0..10.0));
            assert_eq!(
                padded.contains(&x, 1e-9).unwrap(),
                once.contains(&x, 1e-9).unwrap(),
                "seed {seed}: membership changed at {x:?}"
            );
        }
    }
}

#[test]
fn chebyshev_radius_certifies_an_inscribed_ball() {
    for seed in 0..25u64 {
        let mut rng = StdRng::seed_from_u64(300 + seed);
        let extra = rng.gen_range(3..8);
        let poly = random_polytope(&mut rng, 2, extra);
        let (center, radius) = poly.chebyshev_center().unwrap();
        assert!(radius > 0.0);
        for k in 0..32 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
            let p = &center
                + (radius - 1e-9) * DVector::from_vec(vec![theta.cos(), theta.sin()]);
            assert!(poly.contains(&p, 1e-9).unwrap(), "seed {seed}: ball point escapes");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Simplex invariants and exact reconstruction for coordinates of interior
    // points of a random convex polygon.
    #[test]
    fn barycentric_simplex_and_reconstruction(seed in 0u64..1_000_000) {
        let mut rng = StdRng::seed_from_u64(seed);
        let nv = rng.gen_range(3..9usize);
        let mut angles: Vec<f64> = (0..nv)
            .map(|_| rng.gen_range(0.0..(2.0 * std::f64::consts::PI)))
            .collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-2);
        prop_assume!(angles.len() >= 3);
        let radius = rng.gen_range(1.0..6.0);
        let vertices: Vec<DVector<f64>> = angles
            .iter()
            .map(|t| DVector::from_vec(vec![radius * t.cos(), radius * t.sin()]))
            .collect();
        let vpoly = VPolytope::new(vertices).unwrap();

        // Random point of the hull via random simplex weights.
        let mut w: Vec<f64> = (0..vpoly.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = w.iter().sum();
        for v in w.iter_mut() {
            *v /= sum;
        }
        let target = vpoly.combine(&DVector::from_vec(w)).unwrap();

        let coords = vpoly.barycentric_coords(&target).unwrap();
        let lambda = coords.lambda();
        prop_assert!(lambda.iter().all(|&l| l >= 0.0));
        prop_assert!((lambda.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let rebuilt = vpoly.combine(lambda).unwrap();
        prop_assert!((rebuilt - target).norm() <= 1e-8);
    }
}

#[test]
fn barycentric_rejects_exterior_points() {
    let verts = common::benchmark_u().enumerate_vertices().unwrap();
    for p in [[6.0, 6.0], [5.1, 2.1], [0.0, 5.3]] {
        let out = verts.barycentric_coords(&DVector::from_vec(p.to_vec()));
        assert!(matches!(out, Err(GeometryError::NotInHull { .. })), "{p:?} accepted");
    }
}

#[test]
fn benchmark_sequence_is_nested() {
    let sets = neurodp::backward_reach_sequence(
        &common::benchmark_system(),
        &common::benchmark_x(),
        &common::benchmark_u(),
        &common::origin_target(),
        6,
    )
    .unwrap();
    for k in 0..sets.horizon() {
        let inner = sets.stage_set(k + 1).enumerate_vertices().unwrap();
        for v in inner.vertices() {
            assert!(
                sets.stage_set(k).contains(v, 1e-8).unwrap(),
                "vertex of X_{} outside X_{}",
                k + 1,
                k
            );
        }
    }
}
