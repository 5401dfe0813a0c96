//! Dense convex quadratic programs,
//!
//! ```text
//! minimize ½ xᵀHx + fᵀx   subject to   Aeq·x = beq,   Aieq·x ≥ bieq
//! ```
//!
//! solved with a primal active-set method. Problems are expected to be tiny
//! (a handful of variables, a few hundred rows), so everything is dense.
//!
//! The solver works on an internally rescaled copy: each variable is divided
//! by the magnitude of its Hessian diagonal or constraint column, and each
//! constraint row is normalised to unit length.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Tikhonov term added to the Hessian before every factorisation. With the
/// internal scaling this moves the solution by at most ~1e-10 relative.
const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
    pub aieq: DMatrix<f64>,
    pub bieq: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("hessian is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("hessian is not positive semidefinite on the feasible subspace (eigenvalue {0:e})")]
    NotConvex(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Inequality rows held with equality at the solution.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

/// Normalised first-order optimality residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

impl QpProblem {
    /// Unconstrained problem; add rows with [`Self::with_equalities`] and
    /// [`Self::with_inequalities`].
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            aeq: DMatrix::zeros(0, n),
            beq: DVector::zeros(0),
            aieq: DMatrix::zeros(0, n),
            bieq: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.aeq = a;
        self.beq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.aieq = a;
        self.bieq = b;
        self
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Checks dimensions, symmetry and convexity on the null space of the
    /// equality rows.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let dims = [
            ("H", self.h.nrows(), n),
            ("H columns", self.h.ncols(), n),
            ("Aeq columns", self.aeq.ncols(), n),
            ("beq", self.beq.len(), self.aeq.nrows()),
            ("Aieq columns", self.aieq.ncols(), n),
            ("bieq", self.bieq.len(), self.aieq.nrows()),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(QpError::Dimension(format!("{name} is {got}, expected {want}")));
            }
        }
        let scale = self.h.amax().max(1.0);
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(QpError::NotSymmetric(asym));
        }
        if n == 0 {
            return Ok(());
        }
        let z = null_space(&self.aeq, n);
        if z.ncols() > 0 {
            let reduced = z.transpose() * &self.h * &z;
            let reduced = 0.5 * (&reduced + reduced.transpose());
            let min = reduced.symmetric_eigenvalues().min();
            if min < -1e-9 * scale {
                return Err(QpError::NotConvex(min));
            }
        }
        Ok(())
    }
}

/// Orthonormal basis of `{x : A x = 0}`.
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to a square matrix so the SVD returns a full V.
    let mut padded = DMatrix::zeros(a.nrows().max(n), n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let tol = 1e-10 * svd.singular_values.max().max(1e-300);
    let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= tol).collect();
    DMatrix::from_fn(n, null.len(), |r, c| vt[(null[c], r)])
}

struct Scaled {
    h: DMatrix<f64>,
    f: DVector<f64>,
    ae: DMatrix<f64>,
    ai: DMatrix<f64>,
    bi: DVector<f64>,
    /// Original index of each kept inequality row.
    ai_index: Vec<usize>,
    d: DVector<f64>,
    /// Min-norm solution of the equalities.
    y_ls: DVector<f64>,
}

enum Prep {
    Ready(Scaled),
    Infeasible,
}

fn prepare(p: &QpProblem) -> Prep {
    let n = p.dim();
    let mut d = DVector::from_element(n, 1.0);
    for j in 0..n {
        let mut m = p.h[(j, j)].abs().sqrt();
        for i in 0..p.aeq.nrows() {
            m = m.max(p.aeq[(i, j)].abs());
        }
        for i in 0..p.aieq.nrows() {
            m = m.max(p.aieq[(i, j)].abs());
        }
        if m > 0.0 && m.is_finite() {
            d[j] = 1.0 / m;
        }
    }
    let dm = DMatrix::from_diagonal(&d);
    let h = &dm * &p.h * &dm;
    let h = 0.5 * (&h + h.transpose());
    let f = p.f.component_mul(&d);

    let mut eq_rows = Vec::new();
    let mut eq_rhs = Vec::new();
    for i in 0..p.aeq.nrows() {
        let row = p.aeq.row(i).component_mul(&d.transpose());
        let norm = row.norm();
        if norm == 0.0 {
            if p.beq[i].abs() > 1e-12 {
                return Prep::Infeasible;
            }
            continue;
        }
        eq_rows.push(row / norm);
        eq_rhs.push(p.beq[i] / norm);
    }
    let (ae, be) = independent_rows(eq_rows, eq_rhs, n);

    let scaled = &p.aieq * &dm;
    let mut ai_index = Vec::with_capacity(scaled.nrows());
    let mut norms = Vec::with_capacity(scaled.nrows());
    for i in 0..scaled.nrows() {
        let norm = scaled.row(i).norm();
        if norm == 0.0 {
            if p.bieq[i] > 1e-12 {
                return Prep::Infeasible;
            }
            continue;
        }
        ai_index.push(i);
        norms.push(norm);
    }
    let ai = DMatrix::from_fn(ai_index.len(), n, |r, c| scaled[(ai_index[r], c)] / norms[r]);
    let bi = DVector::from_fn(ai_index.len(), |r, _| p.bieq[ai_index[r]] / norms[r]);

    // Consistency of the equalities: min-norm least-squares residual.
    let y_ls = if ae.nrows() > 0 {
        let y = least_squares(&ae, &be);
        if (&ae * &y - &be).amax() > 1e-9 * (1.0 + be.amax()) {
            return Prep::Infeasible;
        }
        y
    } else {
        DVector::zeros(n)
    };
    Prep::Ready(Scaled { h, f, ae, ai, bi, ai_index, d, y_ls })
}

fn stack(rows: &[nalgebra::RowDVector<f64>], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(r);
    }
    m
}

/// Greedily keeps rows that increase the rank. Dropped rows are either
/// redundant or inconsistent; the caller checks consistency afterwards
/// against all rows, so only the kept ones need to be independent.
fn independent_rows(
    rows: Vec<nalgebra::RowDVector<f64>>,
    rhs: Vec<f64>,
    n: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let all = stack(&rows, n);
    let all_rhs = DVector::from_vec(rhs.clone());
    if rows.is_empty() {
        return (all, all_rhs);
    }
    if rows.len() <= n {
        let sv = all.singular_values();
        if sv.min() > 1e-10 * sv.max() {
            return (all, all_rhs);
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..rows.len() {
        let mut trial = kept.clone();
        trial.push(i);
        let m = all.select_rows(trial.iter());
        let sv = m.singular_values();
        if sv.min() > 1e-10 * sv.max() {
            kept = trial;
        }
    }
    let ae = all.select_rows(kept.iter());
    let be = DVector::from_iterator(kept.len(), kept.iter().map(|&i| rhs[i]));
    // Dropped rows must be implied by the kept ones.
    if kept.len() < rows.len() && !kept.is_empty() {
        let y = least_squares(&ae, &be);
        if (&all * &y - &all_rhs).amax() > 1e-9 * (1.0 + all_rhs.amax()) {
            // Inconsistent: keep everything so the caller's check fails.
            return (all, all_rhs);
        }
    }
    (ae, be)
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(b, eps).expect("U and V were computed")
}

struct ActiveSetResult {
    y: DVector<f64>,
    working: Vec<usize>,
    status: QpStatus,
    iterations: usize,
}

/// Primal active-set iterations from a feasible `y`. `working` lists
/// inequality rows initially treated as equalities.
#[allow(clippy::too_many_arguments)]
fn active_set(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    ae: &DMatrix<f64>,
    ai: &DMatrix<f64>,
    bi: &DVector<f64>,
    mut y: DVector<f64>,
    mut working: Vec<usize>,
    max_iter: usize,
) -> ActiveSetResult {
    let n = y.len();
    let me = ae.nrows();
    let mut hreg = h.clone();
    for i in 0..n {
        hreg[(i, i)] += REGULARIZATION;
    }
    // After an unblocked full step the iterate minimises over the working
    // set, so the next step is zero up to rounding.
    let mut at_minimum = false;
    for iter in 0..max_iter {
        if at_minimum && working.is_empty() {
            return ActiveSetResult { y, working, status: QpStatus::Optimal, iterations: iter };
        }
        let g = h * &y + f;
        let m = me + working.len();
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&hreg);
        for r in 0..m {
            let row = if r < me { ae.row(r) } else { ai.row(working[r - me]) };
            for c in 0..n {
                k[(n + r, c)] = row[c];
                k[(c, n + r)] = row[c];
            }
        }
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-&g));
        let Some(sol) = k.full_piv_lu().solve(&rhs) else {
            return ActiveSetResult { y, working, status: QpStatus::MaxIter, iterations: iter };
        };
        let step = sol.rows(0, n).into_owned();
        let ymag = 1.0 + y.amax();
        if at_minimum || step.amax() <= 1e-10 * ymag {
            at_minimum = false;
            // Multipliers of the working inequalities: g = Aᵀλ means the
            // solution's trailing block is -λ.
            let gscale = 1.0 + g.amax();
            let drop = working
                .iter()
                .enumerate()
                .filter(|&(slot, _)| -sol[n + me + slot] < -1e-10 * gscale)
                .min_by_key(|&(_, &row)| row)
                .map(|(slot, _)| slot);
            match drop {
                Some(slot) => {
                    working.remove(slot);
                }
                None => {
                    return ActiveSetResult { y, working, status: QpStatus::Optimal, iterations: iter };
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        let pnorm = step.norm();
        let ap = ai * &step;
        let slack = ai * &y - bi;
        for i in 0..ai.nrows() {
            if ap[i] < -1e-10 * pnorm && !working.contains(&i) {
                let t = slack[i].max(0.0) / -ap[i];
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        y += alpha * &step;
        match blocking {
            Some(i) => working.push(i),
            None => at_minimum = true,
        }
    }
    ActiveSetResult { y, working, status: QpStatus::MaxIter, iterations: max_iter }
}

/// Finds a point satisfying the scaled constraints, starting near `y0`.
/// Returns `None` when the feasible region is empty.
fn phase_one(s: &Scaled, y0: &DVector<f64>, max_iter: usize) -> Option<(DVector<f64>, usize)> {
    let n = y0.len();
    let violation = (&s.bi - &s.ai * y0).iter().copied().fold(0.0f64, f64::max);
    let mut ai = DMatrix::zeros(s.ai.nrows() + 1, n + 1);
    ai.view_mut((0, 0), (s.ai.nrows(), n)).copy_from(&s.ai);
    for i in 0..s.ai.nrows() {
        ai[(i, n)] = 1.0;
    }
    ai[(s.ai.nrows(), n)] = 1.0;
    let mut bi = s.bi.clone().resize_vertically(s.ai.nrows() + 1, 0.0);
    bi[s.ai.nrows()] = 0.0;
    let mut ae = DMatrix::zeros(s.ae.nrows(), n + 1);
    ae.view_mut((0, 0), (s.ae.nrows(), n)).copy_from(&s.ae);

    let mut total = 0;
    // Objective t + ½t² + ½ε‖y − y0‖²: the linear term makes the penalty
    // exact, the small proximal term keeps the Hessian definite.
    for eps in [1e-6, 1e-10] {
        let mut h = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            h[(i, i)] = eps;
        }
        h[(n, n)] = 1.0;
        let mut f = DVector::zeros(n + 1);
        f.rows_mut(0, n).copy_from(&(-eps * y0));
        f[n] = 1.0;
        let mut start = y0.clone().resize_vertically(n + 1, 0.0);
        start[n] = violation.max(0.0) + 1.0;
        let r = active_set(&h, &f, &ae, &ai, &bi, start, Vec::new(), max_iter);
        total += r.iterations;
        if r.y[n] <= 1e-9 {
            let y = r.y.rows(0, n).into_owned();
            return Some((y, total));
        }
    }
    None
}

pub fn solve(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.dim();
    let infeasible = |x: DVector<f64>| QpSolution {
        kkt_residual: kkt_check(p, &x).max(),
        x,
        status: QpStatus::Infeasible,
        active_set: Vec::new(),
        iterations: 0,
    };
    let s = match prepare(p) {
        Prep::Ready(s) => s,
        Prep::Infeasible => return Ok(infeasible(DVector::zeros(n))),
    };

    // The minimiser over the equality subspace is often already feasible;
    // otherwise run phase one from the min-norm equality solution.
    let y_ls = s.y_ls.clone();
    let none = (DMatrix::zeros(0, n), DVector::zeros(0));
    let y_eq = active_set(&s.h, &s.f, &s.ae, &none.0, &none.1, y_ls.clone(), Vec::new(), 4).y;
    let feasible = (&s.ai * &y_eq - &s.bi).iter().all(|&v| v >= 0.0);
    // A feasible equality minimiser is already optimal, provided it is
    // accurate enough to certify.
    if feasible {
        let x = s.d.component_mul(&y_eq);
        let kkt_residual = kkt_check(p, &x).max();
        if kkt_residual <= tol {
            return Ok(QpSolution { x, status: QpStatus::Optimal, kkt_residual, active_set: Vec::new(), iterations: 0 });
        }
    }
    let r = if feasible {
        active_set(&s.h, &s.f, &s.ae, &s.ai, &s.bi, y_eq, Vec::new(), max_iter)
    } else {
        let Some((start, iterations)) = phase_one(&s, &y_ls, max_iter) else {
            return Ok(infeasible(s.d.component_mul(&y_ls)));
        };
        let mut r = active_set(&s.h, &s.f, &s.ae, &s.ai, &s.bi, start, Vec::new(), max_iter);
        r.iterations += iterations;
        r
    };
    let iterations = r.iterations;
    let x = s.d.component_mul(&r.y);
    let kkt_residual = kkt_check(p, &x).max();
    let mut active_set: Vec<usize> = r.working.iter().map(|&i| s.ai_index[i]).collect();
    active_set.sort_unstable();
    let status = match r.status {
        QpStatus::Optimal if kkt_residual > tol => QpStatus::MaxIter,
        other => other,
    };
    Ok(QpSolution { x, status, kkt_residual, active_set, iterations })
}

/// Optimality certificate for `x`, independent of how it was obtained.
///
/// Rows are normalised to unit length. Multipliers are fitted by
/// non-negative least squares over the equality rows (both signs) and the
/// inequality rows within 1e-6 of being active. Stationarity and
/// complementarity are relative to `1 + |Hx| + |f|`, feasibility to
/// `1 + |x|`.
pub fn kkt_check(p: &QpProblem, x: &DVector<f64>) -> KktReport {
    let n = p.dim();
    let hx = &p.h * x;
    let g = &hx + &p.f;
    let gscale = 1.0 + hx.amax() + p.f.amax();
    let xscale = 1.0 + x.amax();

    let mut primal = 0.0f64;
    let mut eq_columns: Vec<DVector<f64>> = Vec::new();
    for i in 0..p.aeq.nrows() {
        let norm = p.aeq.row(i).norm();
        if norm == 0.0 {
            primal = primal.max(p.beq[i].abs());
            continue;
        }
        let r = (p.aeq.row(i).dot(&x.transpose()) - p.beq[i]) / norm;
        primal = primal.max(r.abs() / xscale);
        eq_columns.push(p.aeq.row(i).transpose() / norm);
    }
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut slacks: Vec<f64> = Vec::new();
    let ax = &p.aieq * x;
    for i in 0..p.aieq.nrows() {
        let norm = p.aieq.row(i).norm();
        if norm == 0.0 {
            primal = primal.max(p.bieq[i].max(0.0));
            continue;
        }
        let slack = (ax[i] - p.bieq[i]) / norm;
        primal = primal.max((-slack).max(0.0) / xscale);
        if slack <= 1e-6 * xscale {
            columns.push(p.aieq.row(i).transpose() / norm);
            slacks.push(slack.max(0.0));
        }
    }
    // Equality multipliers are free, so their span is projected out and
    // only the inequality multipliers go through NNLS.
    let basis = range_basis(&eq_columns, n);
    let project = |v: &DVector<f64>| v - &basis * (basis.transpose() * v);
    let a = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
    let pa = DMatrix::from_fn(n, columns.len(), |r, c| project(&a.column(c).into_owned())[r]);
    let pg = project(&g);
    let lambda = nnls(&pa, &pg);
    let stationarity = (&pg - &pa * &lambda).amax() / gscale;
    let complementarity =
        lambda.iter().zip(&slacks).map(|(l, s)| l * s).fold(0.0f64, f64::max) / (gscale * xscale);
    let dual = lambda.iter().map(|l| (-l).max(0.0)).fold(0.0f64, f64::max) / gscale;
    KktReport { stationarity, primal, dual, complementarity }
}

/// Orthonormal basis of the span of `columns`.
fn range_basis(columns: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    if columns.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let a = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested U");
    let tol = 1e-10 * svd.singular_values.max().max(1e-300);
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    u.select_columns(keep.iter())
}

/// Lawson–Hanson non-negative least squares, `min |A z − b|` over `z ≥ 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let m = a.ncols();
    let mut z = DVector::zeros(m);
    if m == 0 {
        return z;
    }
    let tol = 1e-13 * (1.0 + b.amax()) * (1.0 + a.amax());
    let mut passive: Vec<usize> = Vec::new();
    for _ in 0..3 * m + 10 {
        let w = a.transpose() * (b - a * &z);
        let next = (0..m)
            .filter(|j| !passive.contains(j))
            .filter(|&j| w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else { break };
        passive.push(j);
        loop {
            let sub = a.select_columns(passive.iter());
            let sol = least_squares(&sub, b);
            if sol.iter().all(|&v| v > 0.0) {
                for (k, &col) in passive.iter().enumerate() {
                    z[col] = sol[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &col) in passive.iter().enumerate() {
                if sol[k] <= 0.0 {
                    alpha = alpha.min(z[col] / (z[col] - sol[k]));
                }
            }
            for (k, &col) in passive.iter().enumerate() {
                z[col] += alpha * (sol[k] - z[col]);
            }
            passive.retain(|&col| z[col] > 1e-300);
            for col in 0..m {
                if !passive.contains(&col) {
                    z[col] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    z
}
