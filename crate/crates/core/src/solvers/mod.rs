//! Optimization back-ends: a dense two-phase simplex LP, a Frank-Wolfe
//! conditional-gradient method over H-polytopes with anytime-feasible
//! iterates, and the condensed-QP exact-MPC baseline built on both.

pub mod frank_wolfe;
pub mod mpc;
pub(crate) mod simplex;

pub use frank_wolfe::{
    frank_wolfe, FwConfig, FwResult, FwTraceRow, Objective, QuadraticObjective, StepRule,
};
pub use mpc::{solve_mpc_qp, solve_mpc_qp_traced, MpcSolution};
pub use simplex::SimplexError;

use nalgebra::DVector;
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded in the objective direction")]
    Unbounded,
    #[error("start point violates the feasible set")]
    InfeasibleStart,
    #[error("numerical failure in the LP subproblem: {0}")]
    Numerical(SimplexError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<SimplexError> for SolverError {
    fn from(e: SimplexError) -> Self {
        match e {
            SimplexError::Infeasible => SolverError::Infeasible,
            SimplexError::Unbounded => SolverError::Unbounded,
            SimplexError::Stalled => SolverError::Numerical(e),
        }
    }
}

/// `min c'z` over an H-polytope.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub constraints: HPolytope,
}

impl LpProblem {
    pub fn new(c: DVector<f64>, constraints: HPolytope) -> Result<Self, SolverError> {
        if c.len() != constraints.dim() {
            return Err(SolverError::Geometry(GeometryError::DimensionMismatch {
                expected: constraints.dim(),
                got: c.len(),
            }));
        }
        Ok(Self { c, constraints })
    }
}

/// Solves the LP to an optimal basic feasible solution (a vertex for
/// full-dimensional polytopes). Bland's rule makes the pivot path, and hence
/// the vertex returned on ties, deterministic.
pub fn solve_lp(p: &LpProblem) -> Result<(DVector<f64>, f64), SolverError> {
    let sol = simplex::solve_dense(&p.c, p.constraints.a(), p.constraints.b())?;
    Ok((sol.point, sol.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn octagon() -> HPolytope {
        HPolytope::new(
            dmatrix![
                1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0;
                1.0, 1.0; -1.0, 1.0; -1.0, -1.0; 1.0, -1.0
            ],
            dvector![5.0, 5.0, 5.0, 5.0, 7.0, 7.0, 7.0, 7.0],
        )
        .unwrap()
    }

    #[test]
    fn lp_over_octagon() {
        let p = LpProblem::new(dvector![-1.0, -1.0], octagon()).unwrap();
        let (z, v) = solve_lp(&p).unwrap();
        assert!((v - (-7.0)).abs() < 1e-9);
        assert!(octagon().contains(&z, 1e-9).unwrap());
    }

    #[test]
    fn lp_infeasible() {
        let set = HPolytope::new(dmatrix![-1.0; 1.0], dvector![-1.0, 0.0]).unwrap();
        let p = LpProblem::new(dvector![1.0], set).unwrap();
        assert!(matches!(solve_lp(&p), Err(SolverError::Infeasible)));
    }

    #[test]
    fn lp_certificate_against_vertex_scan() {
        let u = octagon();
        let verts = u.enumerate_vertices().unwrap();
        for c in [
            dvector![1.0, 0.0],
            dvector![-0.3, 0.8],
            dvector![0.5, 0.5],
            dvector![-1.0, -2.0],
        ] {
            let (_, v) = solve_lp(&LpProblem::new(c.clone(), u.clone()).unwrap()).unwrap();
            let scan = verts
                .vertices()
                .iter()
                .map(|z| c.dot(z))
                .fold(f64::INFINITY, f64::min);
            assert!((v - scan).abs() < 1e-9);
        }
    }
}
