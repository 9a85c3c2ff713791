//! Shared fixtures for the property suites: the benchmark problem data and a
//! seeded random-polytope generator (rows through points of a ball, plus a
//! bounding box to guarantee compactness).
#![allow(dead_code)] // each test binary uses a different subset

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;

use neurodp::{HPolytope, LinearSystem, StageCost};

pub fn benchmark_system() -> LinearSystem {
    LinearSystem::new(dmatrix![1.5, 0.0; 1.0, -1.5], DMatrix::identity(2, 2)).unwrap()
}

pub fn benchmark_cost() -> StageCost {
    StageCost::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap()
}

pub fn benchmark_x() -> HPolytope {
    HPolytope::from_box(&dvector![-10.0, -10.0], &dvector![10.0, 10.0]).unwrap()
}

pub fn benchmark_u() -> HPolytope {
    HPolytope::new(
        dmatrix![
            1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0;
            1.0, 1.0; -1.0, 1.0; -1.0, -1.0; 1.0, -1.0
        ],
        dvector![5.0, 5.0, 5.0, 5.0, 7.0, 7.0, 7.0, 7.0],
    )
    .unwrap()
}

pub fn origin_target() -> HPolytope {
    HPolytope::new(
        dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0],
        dvector![0.0, 0.0, 0.0, 0.0],
    )
    .unwrap()
}

/// Random bounded polytope in `dim` dimensions containing the origin:
/// `extra` rows with unit normals through points at radius 1..4, intersected
/// with the box `|x_i| <= 8`.
pub fn random_polytope(rng: &mut StdRng, dim: usize, extra: usize) -> HPolytope {
    let rows = extra + 2 * dim;
    let mut a = DMatrix::zeros(rows, dim);
    let mut b = DVector::zeros(rows);
    for i in 0..extra {
        let mut n = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        while n.norm() < 1e-3 {
            n = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        }
        n /= n.norm();
        a.row_mut(i).copy_from(&n.transpose());
        b[i] = rng.gen_range(1.0..4.0);
    }
    for j in 0..dim {
        a[(extra + 2 * j, j)] = 1.0;
        b[extra + 2 * j] = 8.0;
        a[(extra + 2 * j + 1, j)] = -1.0;
        b[extra + 2 * j + 1] = 8.0;
    }
    HPolytope::new(a, b).unwrap()
}
