//! Frank-Wolfe conditional gradient over H-polytopes.
//!
//! Every iterate is a convex combination of feasible points, so the method is
//! anytime feasible: stopping early still returns a usable point. The linear
//! minimization oracle is the dense simplex over the constraint polytope.

use nalgebra::{DMatrix, DVector};

use super::simplex;
use super::SolverError;
use crate::geometry::HPolytope;

/// Objective with first-order information. `curvature_along` returns the
/// second directional derivative `d' H d` when it is available in closed form
/// (quadratics); the exact step rule uses it and falls back to Armijo
/// backtracking otherwise.
pub trait Objective {
    fn value(&self, u: &DVector<f64>) -> f64;
    fn gradient(&self, u: &DVector<f64>) -> DVector<f64>;
    fn curvature_along(&self, u: &DVector<f64>, d: &DVector<f64>) -> Option<f64> {
        let _ = (u, d);
        None
    }
}

/// `f(u) = u' P u + q' u + c` with `P` symmetric.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub c: f64,
}

impl Objective for QuadraticObjective {
    fn value(&self, u: &DVector<f64>) -> f64 {
        (u.transpose() * &self.p * u)[0] + self.q.dot(u) + self.c
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.p * u) + &self.q
    }

    fn curvature_along(&self, _u: &DVector<f64>, d: &DVector<f64>) -> Option<f64> {
        Some(2.0 * (d.transpose() * &self.p * d)[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Closed-form exact line search for quadratic objectives, clipped to
    /// `[0, 1]`; Armijo backtracking when no curvature is available.
    ExactQuadratic,
    /// Backtracking line search with sufficient-decrease constant `c1`.
    Armijo { beta: f64, c1: f64 },
}

impl StepRule {
    pub fn armijo_default() -> Self {
        StepRule::Armijo { beta: 0.5, c1: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct FwConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Early-stop threshold on the duality gap; 0 disables early stopping.
    pub gap_tol: f64,
    /// Record per-iteration objective/gap/iterate rows.
    pub record_trace: bool,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self { max_iters: 10, step_rule: StepRule::ExactQuadratic, gap_tol: 1e-8, record_trace: false }
    }
}

impl FwConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iters == 0 {
            return Err(SolverError::Geometry(crate::geometry::GeometryError::InvalidArgument(
                "max_iters must be at least 1".into(),
            )));
        }
        if let StepRule::Armijo { beta, c1 } = self.step_rule {
            if !(0.0 < beta && beta < 1.0 && 0.0 < c1 && c1 < 1.0) {
                return Err(SolverError::Geometry(
                    crate::geometry::GeometryError::InvalidArgument(
                        "Armijo parameters must lie in (0, 1)".into(),
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FwTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
    pub point: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct FwResult {
    pub u: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Duality gap at the last oracle call: an upper bound on the
    /// suboptimality of `u` for convex objectives.
    pub duality_gap: f64,
    pub feasible_throughout: bool,
    pub trace: Vec<FwTraceRow>,
}

const FEAS_TOL: f64 = 1e-9;

/// Minimizes `objective` over `feasible` starting from the feasible point
/// `u0`. Iterates move along chords toward LP-oracle points with steps in
/// `[0, 1]`, so every iterate stays feasible and the objective never
/// increases under either step rule.
pub fn frank_wolfe(
    objective: &dyn Objective,
    feasible: &HPolytope,
    u0: &DVector<f64>,
    cfg: &FwConfig,
) -> Result<FwResult, SolverError> {
    cfg.validate()?;
    if u0.len() != feasible.dim() {
        return Err(SolverError::Geometry(crate::geometry::GeometryError::DimensionMismatch {
            expected: feasible.dim(),
            got: u0.len(),
        }));
    }
    if !feasible.satisfies(u0, FEAS_TOL) {
        return Err(SolverError::InfeasibleStart);
    }

    let mut u = u0.clone();
    let mut fval = objective.value(&u);
    let mut feasible_throughout = true;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut trace = Vec::new();

    for t in 0..cfg.max_iters {
        let grad = objective.gradient(&u);
        let oracle = simplex::solve_dense(&grad, feasible.a(), feasible.b())?;
        let s = oracle.point;
        gap = grad.dot(&u) - grad.dot(&s);
        if cfg.record_trace {
            trace.push(FwTraceRow { iteration: t, objective: fval, gap, point: u.clone() });
        }
        if cfg.gap_tol > 0.0 && gap <= cfg.gap_tol {
            break;
        }

        let dir = &s - &u;
        let slope = -gap; // grad' dir
        let gamma = match cfg.step_rule {
            StepRule::ExactQuadratic => match objective.curvature_along(&u, &dir) {
                Some(kappa) if kappa > 0.0 => (gap / kappa).clamp(0.0, 1.0),
                Some(_) => 1.0, // flat or concave along the chord: the vertex end is best
                None => armijo(objective, &u, &dir, fval, slope, 0.5, 1e-4),
            },
            StepRule::Armijo { beta, c1 } => armijo(objective, &u, &dir, fval, slope, beta, c1),
        };
        if gamma <= 0.0 {
            iterations = t + 1;
            break;
        }
        u += gamma * dir;
        fval = objective.value(&u);
        feasible_throughout &= feasible.satisfies(&u, FEAS_TOL);
        iterations = t + 1;
    }

    Ok(FwResult { u, objective: fval, iterations, duality_gap: gap, feasible_throughout, trace })
}

/// Backtracking line search; returns 0 when no step achieves sufficient
/// decrease (the caller stalls at the current iterate rather than ascend).
fn armijo(
    objective: &dyn Objective,
    u: &DVector<f64>,
    dir: &DVector<f64>,
    fval: f64,
    slope: f64,
    beta: f64,
    c1: f64,
) -> f64 {
    let mut gamma = 1.0;
    while gamma > 1e-16 {
        if objective.value(&(u + gamma * dir)) <= fval + c1 * gamma * slope {
            return gamma;
        }
        gamma *= beta;
    }
    0.0
}

/// Conditional gradient with away steps, for solves that must reach tight
/// duality gaps. Plain Frank-Wolfe zigzags with an O(1/t) gap when the
/// optimum sits on a face of the feasible set; away steps restore linear
/// convergence for strongly convex quadratics while keeping every iterate a
/// convex combination of feasible vertices (so the anytime-feasibility
/// guarantee is unchanged). Used by the exact-MPC baseline.
pub(crate) fn frank_wolfe_away(
    objective: &dyn Objective,
    feasible: &HPolytope,
    cfg: &FwConfig,
) -> Result<FwResult, SolverError> {
    cfg.validate()?;
    let (center, radius) = feasible.chebyshev_center()?;
    if radius < -1e-9 {
        return Err(SolverError::Infeasible);
    }
    // Start from the vertex the oracle picks at the Chebyshev center.
    let g0 = objective.gradient(&center);
    let v0 = simplex::solve_dense(&g0, feasible.a(), feasible.b())?.point;

    let mut active: Vec<(DVector<f64>, f64)> = vec![(v0.clone(), 1.0)];
    let mut u = v0;
    let mut fval = objective.value(&u);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut feasible_throughout = feasible.satisfies(&u, FEAS_TOL);

    for t in 0..cfg.max_iters {
        let grad = objective.gradient(&u);
        let s = simplex::solve_dense(&grad, feasible.a(), feasible.b())?.point;
        gap = grad.dot(&u) - grad.dot(&s);
        if cfg.record_trace {
            trace.push(FwTraceRow { iteration: t, objective: fval, gap, point: u.clone() });
        }
        if cfg.gap_tol > 0.0 && gap <= cfg.gap_tol {
            break;
        }

        // Worst active vertex in the gradient direction.
        let (away_idx, _) = active
            .iter()
            .enumerate()
            .map(|(i, (v, _))| (i, grad.dot(v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("active set is never empty");
        let gap_away = grad.dot(&active[away_idx].0) - grad.dot(&u);

        let fw_step = gap >= gap_away || active.len() == 1;
        let (dir, gamma_max) = if fw_step {
            (&s - &u, 1.0)
        } else {
            let alpha = active[away_idx].1;
            ((&u - &active[away_idx].0), alpha / (1.0 - alpha).max(1e-15))
        };
        let slope = grad.dot(&dir);
        if slope >= 0.0 {
            iterations = t + 1;
            break;
        }
        let gamma = match objective.curvature_along(&u, &dir) {
            Some(kappa) if kappa > 0.0 => (-slope / kappa).clamp(0.0, gamma_max),
            Some(_) => gamma_max,
            None => armijo(objective, &u, &dir, fval, slope, 0.5, 1e-4).min(gamma_max),
        };
        if gamma <= 0.0 {
            iterations = t + 1;
            break;
        }

        if fw_step {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match active.iter_mut().find(|(v, _)| (v - &s).amax() <= 1e-12) {
                Some((_, w)) => *w += gamma,
                None => active.push((s, gamma)),
            }
        } else {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 + gamma;
            }
            active[away_idx].1 -= gamma;
        }
        active.retain(|(_, w)| *w > 1e-15);
        let total: f64 = active.iter().map(|(_, w)| w).sum();
        let mut combo = DVector::zeros(u.len());
        for (v, w) in active.iter_mut() {
            *w /= total;
            combo += *w * &*v;
        }
        u = combo;
        fval = objective.value(&u);
        feasible_throughout &= feasible.satisfies(&u, FEAS_TOL);
        iterations = t + 1;
    }

    Ok(FwResult { u, objective: fval, iterations, duality_gap: gap, feasible_throughout, trace })
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

    fn norm_sq() -> QuadraticObjective {
        QuadraticObjective { p: DMatrix::identity(2, 2), q: DVector::zeros(2), c: 0.0 }
    }

    #[test]
    fn quadratic_one_step_to_center() {
        // From (5,2) the oracle returns (-5,-2); the exact step is 1/2 and the
        // next iterate is the origin with zero gap.
        let res = frank_wolfe(
            &norm_sq(),
            &octagon(),
            &dvector![5.0, 2.0],
            &FwConfig { max_iters: 10, ..Default::default() },
        )
        .unwrap();
        assert!(res.u.norm() < 1e-12, "expected origin, got {:?}", res.u);
        assert!(res.duality_gap.abs() < 1e-12);
        assert!(res.feasible_throughout);
        assert!(res.iterations <= 2);
    }

    #[test]
    fn linear_objective_lands_on_oracle_vertex() {
        let lin = QuadraticObjective {
            p: DMatrix::zeros(2, 2),
            q: dvector![-1.0, -1.0],
            c: 0.0,
        };
        let res = frank_wolfe(&lin, &octagon(), &dvector![0.0, 0.0], &FwConfig::default()).unwrap();
        assert!((res.objective - (-7.0)).abs() < 1e-9);
        assert!(res.duality_gap < 1e-9);
    }

    #[test]
    fn infeasible_start_rejected() {
        let res = frank_wolfe(&norm_sq(), &octagon(), &dvector![6.0, 6.0], &FwConfig::default());
        assert!(matches!(res, Err(SolverError::InfeasibleStart)));
    }

    #[test]
    fn armijo_matches_exact_on_quadratic() {
        let cfg_exact = FwConfig { max_iters: 30, ..Default::default() };
        let cfg_armijo = FwConfig {
            max_iters: 60,
            step_rule: StepRule::armijo_default(),
            ..Default::default()
        };
        let obj = QuadraticObjective {
            p: dmatrix![2.0, 0.3; 0.3, 1.0],
            q: dvector![1.0, -2.0],
            c: 0.0,
        };
        let a = frank_wolfe(&obj, &octagon(), &dvector![5.0, 2.0], &cfg_exact).unwrap();
        let b = frank_wolfe(&obj, &octagon(), &dvector![5.0, 2.0], &cfg_armijo).unwrap();
        assert!(a.feasible_throughout && b.feasible_throughout);
        assert!((a.objective - b.objective).abs() < 1e-4);
    }

    #[test]
    fn trace_records_monotone_objectives() {
        let cfg = FwConfig { max_iters: 25, record_trace: true, gap_tol: 0.0, ..Default::default() };
        let res = frank_wolfe(&norm_sq(), &octagon(), &dvector![5.0, -2.0], &cfg).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
    }
}
