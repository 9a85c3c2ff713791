//! Dense two-phase simplex for `min c'x  s.t.  Gx <= h` with free variables.
//!
//! Free variables are split as `x = xp - xn`, slacks complete rows with
//! nonnegative right-hand sides, and artificials cover the rest. Pivoting
//! uses Bland's rule throughout, so the method cannot cycle and the pivot
//! path (and hence the returned vertex on ties) is deterministic.

use nalgebra::{DMatrix, DVector};

/// Entering-column threshold on reduced costs.
const EPS_COST: f64 = 1e-9;
/// Minimum magnitude accepted for a pivot element.
const EPS_PIVOT: f64 = 1e-9;
/// Phase-1 objective above this value means the problem is infeasible.
const EPS_FEAS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexError {
    Infeasible,
    Unbounded,
    /// Pivot limit exceeded; indicates numerical trouble, not a model property.
    Stalled,
}

impl std::fmt::Display for SimplexError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimplexError::Infeasible => write!(f, "linear program is infeasible"),
            SimplexError::Unbounded => write!(f, "linear program is unbounded"),
            SimplexError::Stalled => write!(f, "simplex exceeded its pivot budget"),
        }
    }
}

impl std::error::Error for SimplexError {}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub point: DVector<f64>,
    pub value: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    cost_rhs: f64,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        let ncols = self.rows[row].len();
        for j in 0..ncols {
            self.rows[row][j] /= piv;
        }
        self.rhs[row] /= piv;
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..ncols {
                self.rows[i][j] -= factor * self.rows[row][j];
            }
            self.rhs[i] -= factor * self.rhs[row];
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-12 {
                self.rhs[i] = 0.0;
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for j in 0..ncols {
                self.cost[j] -= factor * self.rows[row][j];
            }
            self.cost_rhs -= factor * self.rhs[row];
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations with Bland's rule over columns `0..ncols_active`.
    fn iterate(&mut self, ncols_active: usize, max_pivots: usize) -> Result<(), SimplexError> {
        for _ in 0..max_pivots {
            // Bland: entering column is the lowest index with negative reduced cost.
            let mut enter = None;
            for j in 0..ncols_active {
                if self.cost[j] < -EPS_COST {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };

            // Ratio test; ties broken by smallest basis variable index (Bland).
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > EPS_PIVOT {
                    let ratio = self.rhs[i] / a;
                    let better = ratio < best_ratio - 1e-12
                        || (ratio < best_ratio + 1e-12
                            && leave.is_some_and(|l| self.basis[i] < self.basis[l]));
                    if leave.is_none() || better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(row) = leave else {
                return Err(SimplexError::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(SimplexError::Stalled)
    }
}

/// Solves `min c'x  s.t.  Gx <= h` over free `x`.
pub fn solve_dense(
    c: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
) -> Result<LpSolution, SimplexError> {
    let n = c.len();
    let m = g.nrows();
    assert_eq!(g.ncols(), n, "constraint matrix width must match objective");
    assert_eq!(h.len(), m, "rhs length must match row count");

    let n_split = 2 * n;
    let slack_start = n_split;
    let art_start = slack_start + m;
    let n_art = (0..m).filter(|&i| h[i] < 0.0).count();
    let ncols = art_start + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = art_start;
    for i in 0..m {
        let mut row = vec![0.0; ncols];
        let flip = if h[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = flip * g[(i, j)];
            row[n + j] = -flip * g[(i, j)];
        }
        row[slack_start + i] = flip;
        rhs.push(flip * h[i]);
        if flip < 0.0 {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(slack_start + i);
        }
        rows.push(row);
    }

    let max_pivots = 2000 * (m + n + 8);
    let mut tab = Tableau {
        rows,
        rhs,
        cost: vec![0.0; ncols],
        cost_rhs: 0.0,
        basis,
    };

    // Phase 1: minimize the sum of artificials.
    if n_art > 0 {
        for j in art_start..ncols {
            tab.cost[j] = 1.0;
        }
        for i in 0..m {
            if tab.basis[i] >= art_start {
                for j in 0..ncols {
                    tab.cost[j] -= tab.rows[i][j];
                }
                tab.cost_rhs -= tab.rhs[i];
            }
        }
        tab.iterate(ncols, max_pivots)?;
        let phase1_obj = -tab.cost_rhs;
        if phase1_obj > EPS_FEAS {
            return Err(SimplexError::Infeasible);
        }
        // Drive leftover artificials out of the basis; rows that admit no
        // structural pivot are redundant and can be dropped.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art_start {
                let piv = (0..art_start).find(|&j| tab.rows[i][j].abs() > EPS_PIVOT);
                match piv {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.rows.remove(i);
                        tab.rhs.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    // Phase 2: restore the true objective over the structural columns.
    for row in tab.rows.iter_mut() {
        row.truncate(art_start);
    }
    tab.cost = vec![0.0; art_start];
    tab.cost_rhs = 0.0;
    for j in 0..n {
        tab.cost[j] = c[j];
        tab.cost[n + j] = -c[j];
    }
    for i in 0..tab.rows.len() {
        let cb = tab.cost[tab.basis[i]];
        if cb != 0.0 {
            for j in 0..art_start {
                tab.cost[j] -= cb * tab.rows[i][j];
            }
            tab.cost_rhs -= cb * tab.rhs[i];
        }
    }
    tab.iterate(art_start, max_pivots)?;

    let mut point = DVector::zeros(n);
    for i in 0..tab.rows.len() {
        let b = tab.basis[i];
        if b < n {
            point[b] += tab.rhs[i];
        } else if b < 2 * n {
            point[b - n] -= tab.rhs[i];
        }
    }
    let value = c.dot(&point);
    Ok(LpSolution { point, value })
}
