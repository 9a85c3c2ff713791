//! Problem data (dynamics, stage costs, constraint sequences), state-dependent
//! admissible input sets, the backward reachable set recursion, the two
//! approximate controllers, and closed-loop simulation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope, VPolytope};
use crate::network::{Mlp, NetworkError, OutputUnit};
use crate::solvers::{frank_wolfe, FwConfig, FwResult, Objective, SolverError};

/// Input feasibility tolerance guaranteed by every controller.
pub const INPUT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid problem data: {0}")]
    Invalid(String),
    #[error("admissible input set is empty (state lies outside the stage set)")]
    EmptyAdmissibleSet,
    #[error("initial state lies outside X_0")]
    InitialStateInfeasible,
    #[error("backward recursion produced an empty set at stage {stage}")]
    EmptyStage { stage: usize },
    #[error("MPC solve stopped at gap {gap:.3e} after {iterations} iterations without reaching tolerance")]
    ToleranceNotMet { gap: f64, iterations: usize },
    #[error("controller failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<ControlError>,
    },
    #[error("feasibility postcondition violated: {0}")]
    Postcondition(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Discrete-time linear dynamics `x_{k+1} = A x_k + B u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, ControlError> {
        if a.nrows() != a.ncols() {
            return Err(ControlError::Invalid("A must be square".into()));
        }
        if b.nrows() != a.nrows() {
            return Err(ControlError::Invalid("B must have as many rows as A".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(ControlError::Invalid("non-finite system entry".into()));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Quadratic stage cost `g(x, u) = x'Qx + u'Ru` with terminal cost
/// `g_N(x) = x' Q_f x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    terminal_q: DMatrix<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<(), ControlError> {
    if m.nrows() != m.ncols() {
        return Err(ControlError::Invalid(format!("{name} must be square")));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                return Err(ControlError::Invalid(format!("{name} is not symmetric")));
            }
        }
    }
    Ok(())
}

fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<(), ControlError> {
    let eigs = m.clone().symmetric_eigenvalues();
    let scale = 1.0 + eigs.amax();
    if eigs.iter().any(|&e| e < -1e-10 * scale) {
        return Err(ControlError::Invalid(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

impl StageCost {
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        terminal_q: DMatrix<f64>,
    ) -> Result<Self, ControlError> {
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        check_symmetric(&terminal_q, "terminal Q")?;
        check_psd(&q, "Q")?;
        check_psd(&terminal_q, "terminal Q")?;
        if r.clone().cholesky().is_none() {
            return Err(ControlError::Invalid("R is not positive definite".into()));
        }
        Ok(Self { q, r, terminal_q })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn terminal_q(&self) -> &DMatrix<f64> {
        &self.terminal_q
    }

    pub fn stage(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + (u.transpose() * &self.r * u)[0]
    }

    pub fn terminal(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.terminal_q * x)[0]
    }
}

/// The stage-set sequence `X_0 .. X_N` together with the global state and
/// input sets. Nested by construction: `X_{k+1} ⊆ X_k`.
#[derive(Debug, Clone)]
pub struct HorizonSets {
    stage_sets: Vec<HPolytope>,
    u_set: HPolytope,
    x_set: HPolytope,
}

impl HorizonSets {
    /// Validates dimensions, nonemptiness, and (for state dimensions up to 3)
    /// the nesting invariant by vertex membership at tolerance `1e-8`.
    pub fn new(
        stage_sets: Vec<HPolytope>,
        u_set: HPolytope,
        x_set: HPolytope,
    ) -> Result<Self, ControlError> {
        if stage_sets.len() < 2 {
            return Err(ControlError::Invalid("need at least X_0 and X_N".into()));
        }
        let n_x = x_set.dim();
        if stage_sets.iter().any(|s| s.dim() != n_x) {
            return Err(ControlError::Invalid("stage set dimension mismatch".into()));
        }
        for (k, s) in stage_sets.iter().enumerate() {
            let (_, radius) = s.chebyshev_center()?;
            if radius < -1e-9 {
                return Err(ControlError::EmptyStage { stage: k });
            }
        }
        if n_x <= 3 {
            for k in 0..stage_sets.len() - 1 {
                let inner = stage_sets[k + 1].enumerate_vertices()?;
                for v in inner.vertices() {
                    if !stage_sets[k].satisfies(v, 1e-8) {
                        return Err(ControlError::Invalid(format!(
                            "nesting violated: a vertex of X_{} lies outside X_{}",
                            k + 1,
                            k
                        )));
                    }
                }
            }
            let terminal = stage_sets[stage_sets.len() - 1].enumerate_vertices()?;
            for v in terminal.vertices() {
                if !x_set.satisfies(v, 1e-8) {
                    return Err(ControlError::Invalid("X_N is not contained in X".into()));
                }
            }
        }
        Ok(Self { stage_sets, u_set, x_set })
    }

    pub fn horizon(&self) -> usize {
        self.stage_sets.len() - 1
    }

    pub fn stage_set(&self, k: usize) -> &HPolytope {
        &self.stage_sets[k]
    }

    pub fn stage_sets(&self) -> &[HPolytope] {
        &self.stage_sets
    }

    pub fn u_set(&self) -> &HPolytope {
        &self.u_set
    }

    pub fn x_set(&self) -> &HPolytope {
        &self.x_set
    }
}

/// Backward reachable set recursion: for `k = N-1 .. 0`,
/// `X_k = { x in X | exists u in U with Ax + Bu in X_{k+1} }`,
/// computed by Fourier-Motzkin projection of the joint `(x, u)` polytope with
/// redundancy removal at every stage.
pub fn backward_reach_sequence(
    sys: &LinearSystem,
    x_set: &HPolytope,
    u_set: &HPolytope,
    x_target: &HPolytope,
    horizon: usize,
) -> Result<HorizonSets, ControlError> {
    let n_x = sys.state_dim();
    let n_u = sys.input_dim();
    if x_set.dim() != n_x || x_target.dim() != n_x || u_set.dim() != n_u {
        return Err(ControlError::Invalid("constraint set dimensions do not match the system".into()));
    }
    if horizon == 0 {
        return Err(ControlError::Invalid("horizon must be at least 1".into()));
    }

    let mut reversed = vec![x_target.clone()];
    let mut current = x_target.clone();
    for k in (0..horizon).rev() {
        let joint = joint_state_input_polytope(sys, x_set, u_set, &current)?;
        let keep: Vec<usize> = (0..n_x).collect();
        current = joint.project(&keep).map_err(|e| match e {
            GeometryError::EmptyPolytope => ControlError::EmptyStage { stage: k },
            other => ControlError::Geometry(other),
        })?;
        reversed.push(current.clone());
    }
    reversed.reverse();
    HorizonSets::new(reversed, u_set.clone(), x_set.clone())
}

/// Rows over `(x, u)`: `x in X`, `u in U`, `Ax + Bu in X_next`.
fn joint_state_input_polytope(
    sys: &LinearSystem,
    x_set: &HPolytope,
    u_set: &HPolytope,
    x_next: &HPolytope,
) -> Result<HPolytope, ControlError> {
    let n_x = sys.state_dim();
    let n_u = sys.input_dim();
    let rows = x_set.num_rows() + u_set.num_rows() + x_next.num_rows();
    let mut a = DMatrix::zeros(rows, n_x + n_u);
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for i in 0..x_set.num_rows() {
        for j in 0..n_x {
            a[(r, j)] = x_set.a()[(i, j)];
        }
        b[r] = x_set.b()[i];
        r += 1;
    }
    for i in 0..u_set.num_rows() {
        for j in 0..n_u {
            a[(r, n_x + j)] = u_set.a()[(i, j)];
        }
        b[r] = u_set.b()[i];
        r += 1;
    }
    let ha = x_next.a() * sys.a();
    let hb = x_next.a() * sys.b();
    for i in 0..x_next.num_rows() {
        for j in 0..n_x {
            a[(r, j)] = ha[(i, j)];
        }
        for j in 0..n_u {
            a[(r, n_x + j)] = hb[(i, j)];
        }
        b[r] = x_next.b()[i];
        r += 1;
    }
    Ok(HPolytope::new(a, b)?)
}

/// The state-dependent admissible input set
/// `U_k(x) = { u | H_{X_{k+1}} B u <= h_{X_{k+1}} - H_{X_{k+1}} A x,  H_U u <= h_U }`.
///
/// The stacked rows are kept as constructed (no redundancy removal), so
/// `u` belongs to the result iff `u in U` and `Ax + Bu in X_next`. Emptiness
/// is a legal outcome signaling that `x` lies outside the stage set; detect it
/// via the Chebyshev radius.
pub fn admissible_input_set(
    sys: &LinearSystem,
    x_next: &HPolytope,
    u_set: &HPolytope,
    x: &DVector<f64>,
) -> Result<HPolytope, ControlError> {
    if x.len() != sys.state_dim() {
        return Err(ControlError::Invalid("state dimension mismatch".into()));
    }
    let n_u = sys.input_dim();
    let hb = x_next.a() * sys.b();
    let offset = x_next.b() - x_next.a() * sys.a() * x;

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    for i in 0..hb.nrows() {
        let row = hb.row(i).transpose();
        if row.amax() <= 1e-11 {
            if offset[i] < 0.0 {
                // B cannot influence this row and the state violates it: the
                // set is empty. Encode with a contradictory pair so the
                // polytope type stays valid and the Chebyshev test sees it.
                let mut e = DVector::zeros(n_u);
                e[0] = 1.0;
                rows.push(e.clone());
                offs.push(-1.0);
                rows.push(-e);
                offs.push(-1.0);
            }
            continue;
        }
        rows.push(row);
        offs.push(offset[i]);
    }
    for i in 0..u_set.num_rows() {
        rows.push(u_set.a().row(i).transpose());
        offs.push(u_set.b()[i]);
    }
    let a = DMatrix::from_fn(rows.len(), n_u, |i, j| rows[i][j]);
    Ok(HPolytope::new(a, DVector::from_vec(offs))?)
}

/// Cost-to-go used inside the one-step controller objective: either the exact
/// terminal cost or a trained scalar network.
#[derive(Clone, Copy)]
pub enum CostToGo<'a> {
    Terminal(&'a StageCost),
    Network(&'a Mlp),
}

impl CostToGo<'_> {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            CostToGo::Terminal(g) => g.terminal(x),
            CostToGo::Network(net) => net.scalar_output(x).expect("validated cost-to-go network"),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            CostToGo::Terminal(g) => 2.0 * (g.terminal_q() * x),
            CostToGo::Network(net) => net.scalar_gradient(x).expect("validated cost-to-go network"),
        }
    }

    fn validate(&self, n_x: usize) -> Result<(), ControlError> {
        if let CostToGo::Network(net) = self {
            if net.input_dim() != n_x {
                return Err(ControlError::Invalid(format!(
                    "cost-to-go network expects dimension {}, state has {}",
                    net.input_dim(),
                    n_x
                )));
            }
            if net.output_dim() != 1 || net.output_unit() != OutputUnit::Linear {
                return Err(ControlError::Invalid(
                    "cost-to-go network must have a scalar linear output".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One-step objective `u -> x'Qx + u'Ru + V(Ax + Bu)` with the exact gradient
/// `2Ru + B' ∇V(Ax + Bu)`. Curvature is available only when the cost-to-go is
/// the exact quadratic terminal cost.
struct OneStepObjective<'a> {
    cost: &'a StageCost,
    b_mat: &'a DMatrix<f64>,
    ax: DVector<f64>,
    state_cost: f64,
    ctg: CostToGo<'a>,
}

impl Objective for OneStepObjective<'_> {
    fn value(&self, u: &DVector<f64>) -> f64 {
        let next = &self.ax + self.b_mat * u;
        self.state_cost + (u.transpose() * self.cost.r() * u)[0] + self.ctg.value(&next)
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let next = &self.ax + self.b_mat * u;
        2.0 * (self.cost.r() * u) + self.b_mat.transpose() * self.ctg.gradient(&next)
    }

    fn curvature_along(&self, _u: &DVector<f64>, d: &DVector<f64>) -> Option<f64> {
        match self.ctg {
            CostToGo::Terminal(g) => {
                let bd = self.b_mat * d;
                Some(2.0 * (d.transpose() * self.cost.r() * d)[0]
                    + 2.0 * (bd.transpose() * g.terminal_q() * &bd)[0])
            }
            CostToGo::Network(_) => None,
        }
    }
}

/// One receding-horizon step of the value-approximation controller: runs
/// Frank-Wolfe on the one-step objective over the admissible input set.
///
/// The returned input satisfies `u in U` and `Ax + Bu in X_next` at `1e-8`
/// even when the iteration budget stops the method early, because every
/// Frank-Wolfe iterate is feasible.
#[allow(clippy::too_many_arguments)]
pub fn value_controller_step(
    x: &DVector<f64>,
    cost_to_go: CostToGo<'_>,
    cost: &StageCost,
    sys: &LinearSystem,
    x_next: &HPolytope,
    u_set: &HPolytope,
    cfg: &FwConfig,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>, ControlError> {
    let result = value_controller_solve(x, cost_to_go, cost, sys, x_next, u_set, cfg, warm)?;
    let u = result.u;

    let next = sys.step(x, &u);
    if !u_set.satisfies(&u, INPUT_TOL) {
        return Err(ControlError::Postcondition(format!(
            "input violates U by {:.3e}",
            u_set.violation(&u)
        )));
    }
    if !x_next.satisfies(&next, INPUT_TOL) {
        return Err(ControlError::Postcondition(format!(
            "successor violates X_next by {:.3e}",
            x_next.violation(&next)
        )));
    }
    Ok(u)
}

/// The underlying Frank-Wolfe solve of [`value_controller_step`], exposing
/// the full result (duality gap, iteration count, optional trace).
#[allow(clippy::too_many_arguments)]
pub fn value_controller_solve(
    x: &DVector<f64>,
    cost_to_go: CostToGo<'_>,
    cost: &StageCost,
    sys: &LinearSystem,
    x_next: &HPolytope,
    u_set: &HPolytope,
    cfg: &FwConfig,
    warm: Option<&DVector<f64>>,
) -> Result<FwResult, ControlError> {
    cost_to_go.validate(sys.state_dim())?;
    let admissible = admissible_input_set(sys, x_next, u_set, x)?;

    let start = match warm {
        Some(w) if w.len() == admissible.dim() && admissible.satisfies(w, 1e-9) => w.clone(),
        _ => {
            let (center, radius) = admissible.chebyshev_center()?;
            if radius < -1e-9 {
                return Err(ControlError::EmptyAdmissibleSet);
            }
            center
        }
    };

    let objective = OneStepObjective {
        cost,
        b_mat: sys.b(),
        ax: sys.a() * x,
        state_cost: (x.transpose() * cost.q() * x)[0],
        ctg: cost_to_go,
    };
    Ok(frank_wolfe(&objective, &admissible, &start, cfg)?)
}

/// The vertex-combination policy `u = sum_i Λ_i(x) v_i`. A pure function
/// evaluation; the softmax head puts the coefficients on the probability
/// simplex, so the input lies in `conv(V)` for any parameters and any state.
pub fn policy_controller_step(
    x: &DVector<f64>,
    coeff_net: &Mlp,
    vertices: &VPolytope,
) -> Result<DVector<f64>, ControlError> {
    if coeff_net.output_unit() != OutputUnit::Softmax {
        return Err(ControlError::Invalid("policy network must have a softmax head".into()));
    }
    if coeff_net.output_dim() != vertices.len() {
        return Err(ControlError::Invalid(format!(
            "policy head width {} does not match vertex count {}",
            coeff_net.output_dim(),
            vertices.len()
        )));
    }
    let lambda = coeff_net.output(x)?;
    Ok(vertices.combine(&lambda)?)
}

/// Closed-loop controller selection.
pub enum Controller {
    /// Re-solves the full condensed QP each step and applies the first input.
    ExactMpc { gap_tol: f64 },
    /// One-step lookahead against the trained cost-to-go network `J~_1`.
    ValueFw { value_net: Mlp, cfg: FwConfig },
    /// Softmax vertex-combination policy.
    VertexPolicy { coeff_net: Mlp, vertices: VPolytope },
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::ExactMpc { .. } => "exact",
            Controller::ValueFw { .. } => "value",
            Controller::VertexPolicy { .. } => "policy",
        }
    }
}

/// A simulated closed-loop run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Simulates `x_{k+1} = A x_k + B u_k` for `t_steps` steps under the given
/// controller, re-using the stage-0 problem data at every step (receding
/// horizon with time-invariant costs).
///
/// Inputs are checked against `U` at `1e-8` for every controller; the value
/// controller's successors are additionally checked against `X_1`, which the
/// nesting invariant keeps inside `X_0`.
pub fn simulate_closed_loop(
    ctrl: &Controller,
    sys: &LinearSystem,
    cost: &StageCost,
    sets: &HorizonSets,
    x0: &DVector<f64>,
    t_steps: usize,
) -> Result<Trajectory, ControlError> {
    if t_steps == 0 {
        return Err(ControlError::Invalid("need at least one simulation step".into()));
    }
    if !sets.stage_set(0).satisfies(x0, 1e-9) {
        return Err(ControlError::InitialStateInfeasible);
    }

    let mut states = vec![x0.clone()];
    let mut inputs = Vec::with_capacity(t_steps);
    let mut stage_costs = Vec::with_capacity(t_steps);
    let mut warm: Option<DVector<f64>> = None;

    for step in 0..t_steps {
        let x = states[step].clone();
        let step_err = |source: ControlError| ControlError::StepFailed { step, source: Box::new(source) };

        let u = match ctrl {
            Controller::ExactMpc { gap_tol } => {
                let sol = crate::solvers::solve_mpc_qp(sys, cost, sets, &x, *gap_tol)
                    .map_err(|e| step_err(e.into()))?;
                if !sol.converged {
                    return Err(step_err(ControlError::ToleranceNotMet {
                        gap: sol.duality_gap,
                        iterations: sol.iterations,
                    }));
                }
                sol.inputs[0].clone()
            }
            Controller::ValueFw { value_net, cfg } => value_controller_step(
                &x,
                CostToGo::Network(value_net),
                cost,
                sys,
                sets.stage_set(1),
                sets.u_set(),
                cfg,
                warm.as_ref(),
            )
            .map_err(step_err)?,
            Controller::VertexPolicy { coeff_net, vertices } => {
                policy_controller_step(&x, coeff_net, vertices).map_err(step_err)?
            }
        };

        if !sets.u_set().satisfies(&u, INPUT_TOL) {
            return Err(step_err(ControlError::Postcondition(format!(
                "input violates U by {:.3e}",
                sets.u_set().violation(&u)
            ))));
        }
        let next = sys.step(&x, &u);
        if matches!(ctrl, Controller::ValueFw { .. })
            && !sets.stage_set(1).satisfies(&next, INPUT_TOL)
        {
            return Err(step_err(ControlError::Postcondition(format!(
                "successor violates X_1 by {:.3e}",
                sets.stage_set(1).violation(&next)
            ))));
        }

        stage_costs.push(cost.stage(&x, &u));
        inputs.push(u);
        states.push(next);
        warm = inputs.last().cloned();
    }

    let total_cost = stage_costs.iter().sum::<f64>() + cost.terminal(states.last().unwrap());
    Ok(Trajectory { states, inputs, stage_costs, total_cost })
}
