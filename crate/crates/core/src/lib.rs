//! Neural-network approximate dynamic programming for constrained
//! discrete-time optimal control.
//!
//! The crate provides two input-constraint-respecting controllers around a
//! trained cost-to-go approximation:
//!
//! - a conditional-gradient controller that minimizes the one-step cost
//!   `g(x, u) + J~(Ax + Bu)` over a state-dependent polytopic input set,
//!   driven by the closed-form gradient of the network with respect to its
//!   input — every iterate is feasible, so stopping early is safe;
//! - a softmax vertex-combination policy `u = sum_i Λ_i(x) v_i` over the
//!   vertices of the input polytope, which satisfies the input constraints by
//!   construction and needs only a forward pass at run time.
//!
//! Supporting machinery: dense polytope geometry (projection, vertex
//! enumeration, sampling, barycentric coordinates), a two-phase simplex LP,
//! Frank-Wolfe over H-polytopes, a condensed-QP exact-MPC baseline, backward
//! reachable set recursion, and the sequential-DP training pipeline.

pub mod control;
pub mod geometry;
pub mod network;
pub mod pipeline;
pub mod solvers;

pub use control::{
    admissible_input_set, backward_reach_sequence, policy_controller_step, simulate_closed_loop,
    value_controller_solve, value_controller_step, ControlError, Controller, CostToGo, HorizonSets, LinearSystem,
    StageCost, Trajectory,
};
pub use geometry::{BarycentricCoords, GeometryError, HPolytope, VPolytope};
pub use network::{init_mlp, Activation, InputScaler, Mlp, MlpSpec, NetworkError, OutputUnit};
pub use pipeline::{
    fit_regression, generate_policy_dataset, generate_value_dataset, sequential_dp_train, Dataset,
    FitReport, PipelineError, StageMetrics, TrainConfig, TrainMethod,
};
pub use solvers::{
    frank_wolfe, solve_lp, solve_mpc_qp, solve_mpc_qp_traced, FwConfig, FwResult, FwTraceRow,
    LpProblem, MpcSolution, Objective, QuadraticObjective, SolverError, StepRule,
};
