//! Exact-MPC baseline: the open-loop optimal control problem condensed over
//! the stacked input vector `z = (u_0, ..., u_{N-1})`, with states eliminated
//! by forward substitution of the linear dynamics. Solved by Frank-Wolfe with
//! exact quadratic steps; every iterate is feasible, so early stopping still
//! yields admissible inputs.

use nalgebra::{DMatrix, DVector};

use super::frank_wolfe::{frank_wolfe_away, FwConfig, FwTraceRow, QuadraticObjective, StepRule};
use super::SolverError;
use crate::control::{HorizonSets, LinearSystem, StageCost};
use crate::geometry::{GeometryError, HPolytope};

#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// Optimal inputs `u_0 .. u_{N-1}`.
    pub inputs: Vec<DVector<f64>>,
    /// The stacked input vector the solver worked on.
    pub stacked: DVector<f64>,
    /// Objective value including the constant `x_0' Q x_0` stage term.
    pub cost: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Whether the duality gap reached the requested tolerance. When false,
    /// the returned iterate is still feasible but only best-effort optimal.
    pub converged: bool,
    /// Per-iteration rows when tracing was requested.
    pub trace: Vec<FwTraceRow>,
}

/// Iteration cap for the exact baseline.
const MAX_ITERS: usize = 100_000;

/// Solves the condensed QP
/// `min_z z'Pz + q'z + c  s.t.  u_k in U, x_k in X_k (k = 1..N)`
/// for the given initial state.
pub fn solve_mpc_qp(
    sys: &LinearSystem,
    cost: &StageCost,
    sets: &HorizonSets,
    x0: &DVector<f64>,
    gap_tol: f64,
) -> Result<MpcSolution, SolverError> {
    solve_mpc_qp_traced(sys, cost, sets, x0, gap_tol, false)
}

/// Like [`solve_mpc_qp`], optionally recording per-iteration
/// (objective, duality gap) rows for diagnostics.
pub fn solve_mpc_qp_traced(
    sys: &LinearSystem,
    cost: &StageCost,
    sets: &HorizonSets,
    x0: &DVector<f64>,
    gap_tol: f64,
    record_trace: bool,
) -> Result<MpcSolution, SolverError> {
    let n_x = sys.state_dim();
    let n_u = sys.input_dim();
    let horizon = sets.horizon();
    let nz = horizon * n_u;
    if x0.len() != n_x {
        return Err(SolverError::Geometry(GeometryError::DimensionMismatch {
            expected: n_x,
            got: x0.len(),
        }));
    }
    if !sets.stage_set(0).satisfies(x0, 1e-7) {
        return Err(SolverError::Infeasible);
    }

    // Powers of A and the prediction blocks: x_k = pow[k] x0 + sum_j blk[k-1-j] u_j.
    let mut pow = Vec::with_capacity(horizon + 1);
    pow.push(DMatrix::<f64>::identity(n_x, n_x));
    for k in 1..=horizon {
        pow.push(sys.a() * &pow[k - 1]);
    }
    let blk: Vec<DMatrix<f64>> = (0..horizon).map(|k| &pow[k] * sys.b()).collect();

    // x_k = pow[k] x0 + g_k z with g_k assembled from blk.
    let predict = |k: usize| -> DMatrix<f64> {
        let mut g = DMatrix::zeros(n_x, nz);
        for j in 0..k {
            g.view_mut((0, j * n_u), (n_x, n_u)).copy_from(&blk[k - 1 - j]);
        }
        g
    };

    let mut p_mat = DMatrix::zeros(nz, nz);
    for k in 0..horizon {
        p_mat.view_mut((k * n_u, k * n_u), (n_u, n_u)).copy_from(cost.r());
    }
    let mut q_vec = DVector::zeros(nz);
    let mut constant = (x0.transpose() * cost.q() * x0)[0];

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    let u_set = sets.u_set();
    for k in 0..horizon {
        for i in 0..u_set.num_rows() {
            let mut row = DVector::zeros(nz);
            for j in 0..n_u {
                row[k * n_u + j] = u_set.a()[(i, j)];
            }
            rows.push(row);
            offs.push(u_set.b()[i]);
        }
    }

    #[allow(clippy::needless_range_loop)] // k indexes pow, predict, and the stage sets together
    for k in 1..=horizon {
        let g_k = predict(k);
        let f_x0 = &pow[k] * x0;
        let weight = if k < horizon { cost.q() } else { cost.terminal_q() };
        if weight.amax() > 0.0 {
            p_mat += g_k.transpose() * weight * &g_k;
            q_vec += 2.0 * (g_k.transpose() * weight * &f_x0);
            constant += (f_x0.transpose() * weight * &f_x0)[0];
        }

        let x_k = sets.stage_set(k);
        let hg = x_k.a() * &g_k;
        let rhs = x_k.b() - x_k.a() * &f_x0;
        for i in 0..hg.nrows() {
            rows.push(hg.row(i).transpose());
            offs.push(rhs[i]);
        }
    }

    // Symmetrize against accumulation noise.
    p_mat = (&p_mat + p_mat.transpose()) * 0.5;

    let a = DMatrix::from_fn(rows.len(), nz, |i, j| rows[i][j]);
    let feasible = HPolytope::new(a, DVector::from_vec(offs)).map_err(|e| match e {
        // An all-zero row with negative offset means no input sequence can
        // satisfy a state constraint from this x0.
        GeometryError::InvalidPolytope(_) => SolverError::Infeasible,
        other => SolverError::Geometry(other),
    })?;

    let objective = QuadraticObjective { p: p_mat, q: q_vec, c: constant };
    let cfg = FwConfig {
        max_iters: MAX_ITERS,
        step_rule: StepRule::ExactQuadratic,
        gap_tol,
        record_trace,
    };
    // The away-step variant reaches tight gaps even when the optimum sits on
    // a face; plain Frank-Wolfe stalls there with an O(1/t) gap.
    let res = frank_wolfe_away(&objective, &feasible, &cfg)?;

    let inputs = (0..horizon)
        .map(|k| res.u.rows(k * n_u, n_u).into_owned())
        .collect();
    Ok(MpcSolution {
        inputs,
        stacked: res.u.clone(),
        cost: res.objective,
        duality_gap: res.duality_gap,
        iterations: res.iterations,
        converged: res.duality_gap <= gap_tol,
        trace: res.trace,
    })
}
