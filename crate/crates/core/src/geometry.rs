//! Dense polytope computations: membership, vertex enumeration,
//! Fourier-Motzkin projection, redundancy removal, rejection sampling,
//! Chebyshev centers, and barycentric coordinates.
//!
//! Conventions:
//! - H-representation `{ x | A x <= b }`, one inequality per row.
//! - Rows are used as provided (no normalization on construction); Fourier-
//!   Motzkin output is rescaled to unit inf-norm for conditioning.
//! - Membership predicates take an explicit tolerance; 1e-9 is the default
//!   used throughout the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solvers::simplex::{self, SimplexError};

/// Default membership and deduplication tolerance.
pub const MEMBER_TOL: f64 = 1e-9;
/// Reconstruction tolerance for barycentric coordinates.
pub const RECON_TOL: f64 = 1e-8;
/// Coefficients below this are treated as structural zeros.
const ZERO_COEF: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("vertex enumeration supports dimensions 1-3, got {0}")]
    UnsupportedDimension(usize),
    #[error("polytope is degenerate (Chebyshev radius {radius:.3e})")]
    DegeneratePolytope { radius: f64 },
    #[error("rejection sampling stalled: {accepted} accepted out of {drawn} draws")]
    SamplingStalled { accepted: usize, drawn: usize },
    #[error("point is not in the convex hull (best residual {residual:.3e})")]
    NotInHull { residual: f64 },
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("LP failed during a geometry computation: {0}")]
    Numerical(SimplexError),
}

/// Polytope in inequality form `{ x | A x <= b }`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl HPolytope {
    /// Builds a polytope from rows `A x <= b`.
    ///
    /// All-zero rows with nonnegative offset are dropped; an all-zero row with
    /// a negative offset makes the description infeasible and is rejected.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        if a.ncols() == 0 {
            return Err(GeometryError::InvalidPolytope("zero-dimensional polytope".into()));
        }
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolytope("non-finite entry".into()));
        }
        let mut rows = Vec::with_capacity(a.nrows());
        let mut offsets = Vec::with_capacity(a.nrows());
        for i in 0..a.nrows() {
            let row = a.row(i);
            if row.iter().all(|v| v.abs() <= ZERO_COEF) {
                if b[i] < 0.0 {
                    return Err(GeometryError::InvalidPolytope(format!(
                        "row {i} is all-zero with negative offset {}",
                        b[i]
                    )));
                }
                continue;
            }
            rows.push(row.into_owned());
            offsets.push(b[i]);
        }
        if rows.is_empty() {
            return Err(GeometryError::InvalidPolytope("no effective rows".into()));
        }
        let a = DMatrix::from_rows(&rows);
        let b = DVector::from_vec(offsets);
        Ok(Self { a, b })
    }

    /// Axis-aligned box `lower <= x <= upper`.
    pub fn from_box(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        let n = lower.len();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for j in 0..n {
            a[(j, j)] = 1.0;
            b[j] = upper[j];
            a[(n + j, j)] = -1.0;
            b[n + j] = -lower[j];
        }
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Membership test `A x <= b + tol` componentwise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if tol < 0.0 {
            return Err(GeometryError::InvalidArgument("tolerance must be nonnegative".into()));
        }
        Ok(self.satisfies(x, tol))
    }

    /// Worst constraint violation `max_i (A_i x - b_i)`; nonpositive inside.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let slack = &self.a * x - &self.b;
        slack.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
    }

    pub(crate) fn satisfies(&self, x: &DVector<f64>, tol: f64) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        self.violation(x) <= tol
    }

    fn lp_min(&self, c: &DVector<f64>) -> Result<simplex::LpSolution, GeometryError> {
        simplex::solve_dense(c, &self.a, &self.b).map_err(|e| match e {
            SimplexError::Infeasible => GeometryError::EmptyPolytope,
            SimplexError::Unbounded => GeometryError::UnboundedPolytope,
            other => GeometryError::Numerical(other),
        })
    }

    /// Per-dimension support values via `2n` LPs.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let n = self.dim();
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        for j in 0..n {
            let mut c = DVector::zeros(n);
            c[j] = 1.0;
            lower[j] = self.lp_min(&c)?.value;
            c[j] = -1.0;
            upper[j] = -self.lp_min(&c)?.value;
        }
        Ok((lower, upper))
    }

    /// Center and radius of the largest inscribed ball.
    ///
    /// A negative radius certifies emptiness; a radius above `1e-9` certifies
    /// full dimensionality. Rows are normalized internally, so the radius is
    /// measured in the Euclidean metric regardless of the input scaling.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64), GeometryError> {
        let n = self.dim();
        let m = self.num_rows();
        let mut g = DMatrix::zeros(m, n + 1);
        for i in 0..m {
            let norm = self.a.row(i).norm();
            for j in 0..n {
                g[(i, j)] = self.a[(i, j)];
            }
            g[(i, n)] = norm;
        }
        let mut c = DVector::zeros(n + 1);
        c[n] = -1.0; // maximize the radius
        let sol = simplex::solve_dense(&c, &g, &self.b).map_err(|e| match e {
            SimplexError::Unbounded => GeometryError::UnboundedPolytope,
            other => GeometryError::Numerical(other),
        })?;
        let center = sol.point.rows(0, n).into_owned();
        let radius = sol.point[n];
        Ok((center, radius))
    }

    /// Drops every row whose removal does not change the set.
    ///
    /// Row `i` is redundant iff maximizing `A_i x` subject to the remaining
    /// rows (with row `i` relaxed by one unit to keep the LP bounded) does not
    /// exceed `b_i` by more than `1e-9`. Rows are examined sequentially so
    /// duplicated constraints keep exactly one representative.
    pub fn remove_redundant(&self) -> Result<Self, GeometryError> {
        let m = self.num_rows();
        let mut keep = vec![true; m];
        for i in 0..m {
            let rows: Vec<usize> = (0..m).filter(|&j| keep[j]).collect();
            if rows.len() <= 1 {
                break;
            }
            let mut g = DMatrix::zeros(rows.len(), self.dim());
            let mut h = DVector::zeros(rows.len());
            for (r, &j) in rows.iter().enumerate() {
                g.row_mut(r).copy_from(&self.a.row(j));
                h[r] = if j == i { self.b[j] + 1.0 } else { self.b[j] };
            }
            let c = -self.a.row(i).transpose();
            match simplex::solve_dense(&c, &g, &h) {
                Ok(sol) => {
                    let max_val = -sol.value;
                    if max_val <= self.b[i] + MEMBER_TOL {
                        keep[i] = false;
                    }
                }
                Err(SimplexError::Infeasible) => return Err(GeometryError::EmptyPolytope),
                Err(SimplexError::Unbounded) => {} // removal would unbound the set: keep
                Err(other) => return Err(GeometryError::Numerical(other)),
            }
        }
        let rows: Vec<_> = (0..m).filter(|&i| keep[i]).map(|i| self.a.row(i).into_owned()).collect();
        let offs: Vec<f64> = (0..m).filter(|&i| keep[i]).map(|i| self.b[i]).collect();
        HPolytope::new(DMatrix::from_rows(&rows), DVector::from_vec(offs))
    }

    /// Projects onto the coordinates in `keep_dims` (treated as a set) by
    /// Fourier-Motzkin elimination of the remaining coordinates, with
    /// redundancy removal after each elimination.
    ///
    /// The result's coordinate `k` is the `k`-th smallest member of
    /// `keep_dims`. Returns `x` in the projection iff some completion of the
    /// dropped coordinates lies in `self`.
    pub fn project(&self, keep_dims: &[usize]) -> Result<Self, GeometryError> {
        let n = self.dim();
        let mut keep = keep_dims.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.len() != keep_dims.len() {
            return Err(GeometryError::InvalidArgument("keep_dims contains duplicates".into()));
        }
        if keep.is_empty() || keep.len() >= n || keep.iter().any(|&d| d >= n) {
            return Err(GeometryError::InvalidArgument(
                "keep_dims must be a nonempty strict subset of the coordinate indices".into(),
            ));
        }
        let mut drop: Vec<usize> = (0..n).filter(|d| !keep.contains(d)).collect();
        drop.sort_unstable_by(|x, y| y.cmp(x)); // descending keeps earlier indices stable

        let mut current = self.clone();
        for d in drop {
            let (a, b) = fourier_motzkin(current.a(), current.b(), d)?;
            if a.nrows() == 0 {
                // Every constraint vanished: the projection is all of R^k.
                return Err(GeometryError::UnboundedPolytope);
            }
            current = HPolytope::new(a, b).map_err(|e| match e {
                GeometryError::InvalidPolytope(_) => GeometryError::EmptyPolytope,
                other => other,
            })?;
            current = current.remove_redundant()?;
        }
        Ok(current)
    }

    /// Enumerates the vertex set.
    ///
    /// Dimension 2 intersects all row pairs, dimension 3 all row triples;
    /// feasible intersection points are deduplicated at `1e-9` and (for
    /// dimension 2) ordered by polar angle around their centroid. Higher
    /// dimensions are rejected.
    pub fn enumerate_vertices(&self) -> Result<VPolytope, GeometryError> {
        let n = self.dim();
        if n > 3 {
            return Err(GeometryError::UnsupportedDimension(n));
        }
        // Bounding-box LPs double as the nonemptiness and boundedness checks.
        let (lo, hi) = self.bounding_box()?;

        let mut candidates: Vec<DVector<f64>> = Vec::new();
        let m = self.num_rows();
        match n {
            1 => {
                candidates.push(DVector::from_vec(vec![lo[0]]));
                candidates.push(DVector::from_vec(vec![hi[0]]));
            }
            2 => {
                for i in 0..m {
                    for j in (i + 1)..m {
                        if let Some(p) = self.intersection(&[i, j]) {
                            candidates.push(p);
                        }
                    }
                }
            }
            3 => {
                for i in 0..m {
                    for j in (i + 1)..m {
                        for k in (j + 1)..m {
                            if let Some(p) = self.intersection(&[i, j, k]) {
                                candidates.push(p);
                            }
                        }
                    }
                }
            }
            _ => unreachable!(),
        }

        let mut vertices: Vec<DVector<f64>> = Vec::new();
        for p in candidates {
            if !self.satisfies(&p, MEMBER_TOL) {
                continue;
            }
            let p = self.polish_vertex(p);
            if vertices.iter().all(|v| (v - &p).norm() > MEMBER_TOL) {
                vertices.push(p);
            }
        }
        if vertices.is_empty() {
            return Err(GeometryError::EmptyPolytope);
        }
        match n {
            1 => vertices.sort_by(|a, b| a[0].total_cmp(&b[0])),
            2 => {
                let cx = vertices.iter().map(|v| v[0]).sum::<f64>() / vertices.len() as f64;
                let cy = vertices.iter().map(|v| v[1]).sum::<f64>() / vertices.len() as f64;
                vertices.sort_by(|p, q| {
                    let ap = (p[1] - cy).atan2(p[0] - cx);
                    let aq = (q[1] - cy).atan2(q[0] - cx);
                    ap.total_cmp(&aq)
                });
            }
            _ => vertices.sort_by(|p, q| {
                p.iter().zip(q.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            }),
        }
        Ok(VPolytope::from_vertices_unchecked(vertices))
    }

    /// Re-solves a candidate vertex against all of its active rows by least
    /// squares. A pairwise intersection of nearly parallel rows can be off by
    /// far more than the membership tolerance; the full active set is usually
    /// much better conditioned.
    fn polish_vertex(&self, x: DVector<f64>) -> DVector<f64> {
        let slack = &self.a * &x - &self.b;
        let active: Vec<usize> = (0..self.num_rows())
            .filter(|&i| slack[i].abs() <= 1e-6 * (1.0 + self.b[i].abs()))
            .collect();
        if active.len() < self.dim() {
            return x;
        }
        let a_act = DMatrix::from_fn(active.len(), self.dim(), |i, j| self.a[(active[i], j)]);
        let b_act = DVector::from_fn(active.len(), |i, _| self.b[active[i]]);
        let scale = a_act.amax();
        match a_act.clone().svd(true, true).solve(&b_act, 1e-12 * scale.max(1.0)) {
            Ok(refined) => {
                let better = (&a_act * &refined - &b_act).norm() <= (&a_act * &x - &b_act).norm();
                if better && self.satisfies(&refined, MEMBER_TOL) {
                    refined
                } else {
                    x
                }
            }
            Err(_) => x,
        }
    }

    /// Solves the square system of the active rows; `None` when (near) singular
    /// or when the solve is numerically unreliable.
    fn intersection(&self, rows: &[usize]) -> Option<DVector<f64>> {
        let n = self.dim();
        let mut sys = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (r, &i) in rows.iter().enumerate() {
            sys.row_mut(r).copy_from(&self.a.row(i));
            rhs[r] = self.b[i];
        }
        let lu = sys.clone().full_piv_lu();
        let x = lu.solve(&rhs)?;
        let residual = (&sys * &x - &rhs).norm();
        if residual > 1e-7 * (1.0 + x.norm()) {
            return None;
        }
        Some(x)
    }

    /// Draws `count` points uniformly by rejection from the bounding box.
    ///
    /// Requires a full-dimensional polytope (Chebyshev radius above `1e-9`).
    /// Fails with `SamplingStalled` if fewer than one in a thousand of a
    /// million draws lands inside.
    pub fn sample_uniform<R: Rng>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>, GeometryError> {
        if count == 0 {
            return Err(GeometryError::InvalidArgument("count must be at least 1".into()));
        }
        let (_, radius) = self.chebyshev_center()?;
        if radius <= MEMBER_TOL {
            return Err(GeometryError::DegeneratePolytope { radius });
        }
        let (lo, hi) = self.bounding_box()?;
        let n = self.dim();
        let mut points = Vec::with_capacity(count);
        let mut drawn = 0usize;
        while points.len() < count {
            let x = DVector::from_fn(n, |j, _| rng.gen_range(lo[j]..=hi[j]));
            drawn += 1;
            if self.satisfies(&x, 0.0) {
                points.push(x);
            }
            if drawn >= 1_000_000 && (points.len() as f64) < 1e-3 * drawn as f64 {
                return Err(GeometryError::SamplingStalled { accepted: points.len(), drawn });
            }
        }
        Ok(points)
    }
}

fn clamp_to_simplex(lambda: &mut DVector<f64>) {
    for l in lambda.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    let sum: f64 = lambda.iter().sum();
    if sum > 0.0 {
        *lambda /= sum;
    }
}

/// Minimizes `||V_S l - point||^2` over `sum l = 1` restricted to the
/// support `S`. The sum constraint is eliminated by anchoring on the last
/// support vertex (`l_anchor = 1 - sum of the rest`), so the returned
/// coordinates satisfy it exactly and the remaining problem is a plain least
/// squares over edge vectors, solved by SVD pseudo-inverse. `None` on a
/// failed solve.
fn affine_least_squares(
    vmat: &DMatrix<f64>,
    point: &DVector<f64>,
    support: &[usize],
) -> Option<DVector<f64>> {
    let k = support.len();
    let anchor = vmat.column(support[k - 1]).into_owned();
    let edges = DMatrix::from_fn(vmat.nrows(), k - 1, |i, j| vmat[(i, support[j])] - anchor[i]);
    let rhs = point - &anchor;
    let scale = edges.amax();
    let mu = edges.svd(true, true).solve(&rhs, 1e-13 * scale.max(1.0)).ok()?;
    if mu.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = DVector::zeros(k);
    let mut rest = 0.0;
    for j in 0..k - 1 {
        out[j] = mu[j];
        rest += mu[j];
    }
    out[k - 1] = 1.0 - rest;
    Some(out)
}

/// Wolfe-style minor cycle: solve the affine-constrained least squares on
/// the current support; while the solution leaves the simplex, walk toward it
/// until a coordinate hits zero, shrink the support, and re-solve. Each round
/// drops at least one coordinate, and the objective never increases. Returns
/// whether the point moved.
fn minor_cycle(vmat: &DMatrix<f64>, point: &DVector<f64>, lambda: &mut DVector<f64>) -> bool {
    let mut moved = false;
    for _ in 0..lambda.len() + 1 {
        let support: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > 1e-14).collect();
        if support.len() < 2 {
            break;
        }
        let Some(sol) = affine_least_squares(vmat, point, &support) else {
            break;
        };
        let mut target = DVector::zeros(lambda.len());
        for (j, &i) in support.iter().enumerate() {
            target[i] = sol[j];
        }
        if target.iter().all(|&v| v >= -1e-12) {
            let changed = (&target - &*lambda).amax() > 1e-15;
            *lambda = target;
            clamp_to_simplex(lambda);
            moved = moved || changed;
            break;
        }
        // Largest step toward the affine solution staying on the simplex.
        let mut theta = 1.0f64;
        for &i in &support {
            if target[i] < 0.0 {
                theta = theta.min(lambda[i] / (lambda[i] - target[i]));
            }
        }
        if theta.is_nan() || theta <= 1e-15 {
            break;
        }
        *lambda += theta * (&target - &*lambda);
        for &i in &support {
            if lambda[i] < 1e-13 {
                lambda[i] = 0.0;
            }
        }
        clamp_to_simplex(lambda);
        moved = true;
    }
    moved
}

/// One Fourier-Motzkin elimination step; removes column `col`.
/// Output rows are rescaled to unit inf-norm.
fn fourier_motzkin(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    col: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), GeometryError> {
    let m = a.nrows();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut zero = Vec::new();
    for i in 0..m {
        let v = a[(i, col)];
        if v > ZERO_COEF {
            pos.push(i);
        } else if v < -ZERO_COEF {
            neg.push(i);
        } else {
            zero.push(i);
        }
    }

    let keep_cols: Vec<usize> = (0..a.ncols()).filter(|&j| j != col).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();

    let mut push_row = |coefs: Vec<f64>, off: f64| -> Result<(), GeometryError> {
        let max = coefs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if max <= ZERO_COEF {
            if off < -MEMBER_TOL {
                return Err(GeometryError::EmptyPolytope);
            }
            return Ok(()); // trivially satisfied
        }
        rows.push(coefs.iter().map(|v| v / max).collect());
        offsets.push(off / max);
        Ok(())
    };

    for &i in &zero {
        let coefs: Vec<f64> = keep_cols.iter().map(|&j| a[(i, j)]).collect();
        push_row(coefs, b[i])?;
    }
    for &p in &pos {
        for &q in &neg {
            let wp = -a[(q, col)]; // > 0
            let wq = a[(p, col)]; // > 0
            let coefs: Vec<f64> = keep_cols
                .iter()
                .map(|&j| wp * a[(p, j)] + wq * a[(q, j)])
                .collect();
            push_row(coefs, wp * b[p] + wq * b[q])?;
        }
    }

    let ncols = keep_cols.len();
    let a_out = if rows.is_empty() {
        DMatrix::zeros(0, ncols)
    } else {
        DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
    };
    Ok((a_out, DVector::from_vec(offsets)))
}

/// Polytope as the convex hull of a minimal vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    vertices: Vec<DVector<f64>>,
}

impl VPolytope {
    /// Builds a V-polytope, checking (by LP) that no vertex is a convex
    /// combination of the others.
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::InvalidPolytope("vertex set is empty".into()));
        }
        let n = vertices[0].len();
        if n == 0 || vertices.iter().any(|v| v.len() != n) {
            return Err(GeometryError::InvalidPolytope("inconsistent vertex dimensions".into()));
        }
        let candidate = Self { vertices };
        for i in 0..candidate.len() {
            if candidate.is_in_hull_of_others(i) {
                return Err(GeometryError::InvalidPolytope(format!(
                    "vertex {i} is a convex combination of the others"
                )));
            }
        }
        Ok(candidate)
    }

    pub(crate) fn from_vertices_unchecked(vertices: Vec<DVector<f64>>) -> Self {
        Self { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &DVector<f64> {
        &self.vertices[i]
    }

    /// Centroid of the vertex set.
    pub fn centroid(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim());
        for v in &self.vertices {
            c += v;
        }
        c / self.len() as f64
    }

    /// Feasibility LP: can vertex `i` be written as a convex combination of
    /// the remaining vertices (up to tolerance)?
    fn is_in_hull_of_others(&self, i: usize) -> bool {
        if self.len() == 1 {
            return false;
        }
        let others: Vec<&DVector<f64>> = self
            .vertices
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| v)
            .collect();
        let hull = Self {
            vertices: others.into_iter().cloned().collect(),
        };
        hull.barycentric_coords(&self.vertices[i]).is_ok()
    }

    /// Coordinates `lambda` on the probability simplex with
    /// `sum_i lambda_i v_i = point` up to the reconstruction tolerance.
    ///
    /// Solved as simplex-constrained least squares by a conditional-gradient
    /// method (the linear oracle over the simplex is a coordinate argmin)
    /// with away steps and a fully-corrective refinement on the current
    /// support, capped at 500 iterations. Away steps avoid the O(1/t) zigzag
    /// for targets on the hull boundary; the corrective solve handles
    /// ill-conditioned vertex configurations. The coordinates need not be
    /// unique; the contract is exact reconstruction.
    pub fn barycentric_coords(&self, point: &DVector<f64>) -> Result<BarycentricCoords, GeometryError> {
        if point.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), got: point.len() });
        }
        let nv = self.len();
        if nv == 1 {
            let residual = (&self.vertices[0] - point).norm();
            if residual <= RECON_TOL {
                return Ok(BarycentricCoords { lambda: DVector::from_element(1, 1.0) });
            }
            return Err(GeometryError::NotInHull { residual });
        }

        let vmat = DMatrix::from_fn(self.dim(), nv, |i, j| self.vertices[j][i]);
        let mut lambda = DVector::from_element(nv, 1.0 / nv as f64);
        let mut image = &vmat * &lambda;

        for _ in 0..500 {
            let diff = &image - point;
            if diff.norm_squared() <= 1e-22 {
                break;
            }
            let grad = 2.0 * (vmat.transpose() * &diff);
            let mut fw = 0;
            for j in 1..nv {
                if grad[j] < grad[fw] {
                    fw = j;
                }
            }
            let gap = grad.dot(&lambda) - grad[fw];
            if gap <= 1e-16 {
                break;
            }

            // Conditional-gradient step toward the oracle coordinate.
            let mut dir = -lambda.clone();
            dir[fw] += 1.0;
            let vd = &vmat * &dir;
            let denom = vd.norm_squared();
            if denom > 1e-30 {
                let gamma = (-diff.dot(&vd) / denom).clamp(0.0, 1.0);
                if gamma > 0.0 {
                    lambda += gamma * dir;
                    clamp_to_simplex(&mut lambda);
                }
            } else if lambda[fw] <= 0.0 {
                // New vertex with a degenerate chord: give it weight so the
                // corrective cycle can use it.
                lambda[fw] = 1e-6;
                clamp_to_simplex(&mut lambda);
            }

            // Fully-corrective minor cycle on the active support.
            let improved = minor_cycle(&vmat, point, &mut lambda);
            image = &vmat * &lambda;
            if !improved && (&image - point).norm_squared() >= diff.norm_squared() - 1e-30 {
                break; // no measurable progress from either step
            }
        }

        let residual = (&image - point).norm();
        if residual > RECON_TOL {
            return Err(GeometryError::NotInHull { residual });
        }
        BarycentricCoords::new(lambda)
    }

    /// Evaluates the convex combination `sum_i lambda_i v_i`.
    pub fn combine(&self, lambda: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        if lambda.len() != self.len() {
            return Err(GeometryError::DimensionMismatch { expected: self.len(), got: lambda.len() });
        }
        let mut out = DVector::zeros(self.dim());
        for (l, v) in lambda.iter().zip(&self.vertices) {
            out += *l * v;
        }
        Ok(out)
    }
}

/// Weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricCoords {
    lambda: DVector<f64>,
}

impl BarycentricCoords {
    /// Validates simplex membership: entries at least `-1e-10` (clamped to
    /// zero) and summing to one within `1e-10`.
    pub fn new(mut lambda: DVector<f64>) -> Result<Self, GeometryError> {
        for l in lambda.iter_mut() {
            if *l < 0.0 {
                if *l < -1e-10 {
                    return Err(GeometryError::InvalidArgument(format!(
                        "negative simplex weight {l}"
                    )));
                }
                *l = 0.0;
            }
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(GeometryError::InvalidArgument(format!(
                "simplex weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }
}

#[derive(Serialize, Deserialize)]
struct HPolytopeJson {
    #[serde(rename = "H")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    b: Vec<f64>,
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let a = (0..self.a.nrows())
            .map(|i| self.a.row(i).iter().copied().collect())
            .collect();
        HPolytopeJson { a, b: self.b.iter().copied().collect() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = HPolytopeJson::deserialize(deserializer)?;
        if raw.a.is_empty() {
            return Err(serde::de::Error::custom("polytope has no rows"));
        }
        let ncols = raw.a[0].len();
        if raw.a.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged constraint matrix"));
        }
        let a = DMatrix::from_fn(raw.a.len(), ncols, |i, j| raw.a[i][j]);
        HPolytope::new(a, DVector::from_vec(raw.b)).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct VPolytopeJson {
    #[serde(rename = "V")]
    vertices: Vec<Vec<f64>>,
}

impl Serialize for VPolytope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VPolytopeJson {
            vertices: self.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = VPolytopeJson::deserialize(deserializer)?;
        let vertices = raw.vertices.into_iter().map(DVector::from_vec).collect();
        VPolytope::new(vertices).map_err(serde::de::Error::custom)
    }
}
