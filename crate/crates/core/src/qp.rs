//! Dense convex QP with piecewise-linear penalties.
//!
//! Solves
//!
//! ```text
//! min 1/2 x'Hx + g'x + c + sum_p w_p max(0, s_p (c_p'x - tau_p))
//! s.t. r_i'x <= u_i,  l <= x <= u
//! ```
//!
//! with a primal active-set method. `H` must be positive definite (see
//! [`psd_repair`]). Each penalty is the epigraph of a slack `t_p >= 0,
//! t_p >= s_p (c_p'x - tau_p)`; the slack is eliminated, leaving three states
//! per penalty: below its threshold, above it (the slope enters the
//! gradient) or pinned on the kink with a multiplier in `[0, w_p]`.
//!
//! Linear algebra runs in the scaled space `z = L'x` with `H = LL'`, so every
//! equality-constrained step is a projection. The working-set matrix is kept
//! as an incrementally updated QR factorization.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Primal and dual feasibility tolerance (rows are normalized internally).
pub const FEAS_TOL: f64 = 1e-9;
/// Shift floor for [`psd_repair`].
pub const PSD_DELTA: f64 = 1e-8;

/// Sparse row `coeffs . x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub upper: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<(usize, f64)>, upper: f64) -> Self {
        Self { coeffs, upper }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * x[i]).sum()
    }
}

/// Which side of the threshold is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltySide {
    /// `w max(0, c.x - tau)`
    Above,
    /// `w max(0, tau - c.x)`
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftPenalty {
    pub coeffs: Vec<(usize, f64)>,
    pub threshold: f64,
    pub slope: f64,
    pub side: PenaltySide,
}

impl SoftPenalty {
    pub fn value(&self, x: &[f64]) -> f64 {
        let cx: f64 = self.coeffs.iter().map(|&(i, c)| c * x[i]).sum();
        let viol = match self.side {
            PenaltySide::Above => cx - self.threshold,
            PenaltySide::Below => self.threshold - cx,
        };
        self.slope * viol.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constant: f64,
    pub constraints: Vec<LinearConstraint>,
    /// Variable bounds; use infinities for free variables.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub penalties: Vec<SoftPenalty>,
}

impl QuadraticProgram {
    pub fn new(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        Self {
            hessian,
            gradient,
            constant: 0.0,
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            penalties: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// Smooth part `1/2 x'Hx + g'x + c`.
    pub fn quadratic_value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.hessian * &xv)) + self.gradient.dot(&xv) + self.constant
    }

    pub fn penalty_value(&self, x: &[f64]) -> f64 {
        self.penalties.iter().map(|p| p.value(x)).sum()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.quadratic_value(x) + self.penalty_value(x)
    }

    /// Largest violation of the hard constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            worst = worst.max(c.dot(x) - c.upper);
        }
        for i in 0..x.len() {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        worst
    }
}

/// Identifies a hard constraint in a [`QuadraticProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRef {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpStatus {
    Optimal,
    /// No point satisfies the hard constraints; `worst` is the constraint
    /// left most violated by the phase-1 solution.
    Infeasible {
        worst: ConstraintRef,
        violation: f64,
    },
    /// Iteration cap reached; the iterate is feasible but not certified.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Hard constraints active at the solution.
    pub active: Vec<ConstraintRef>,
}

/// Shift `H` to `H + lambda I` with `lambda = max(0, delta - lambda_min(H))`.
/// Returns the shifted matrix and `lambda`.
pub fn psd_repair(h: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = h.nrows();
    let shifted = h - DMatrix::identity(n, n) * PSD_DELTA;
    if Cholesky::new(shifted).is_some() {
        return (h.clone(), 0.0);
    }
    let eig = SymmetricEigen::new(h.clone());
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda = (PSD_DELTA - lmin).max(0.0);
    (h + DMatrix::identity(n, n) * lambda, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Hard(ConstraintRef),
    /// Index into the penalty list (caller's or phase-1 elastic).
    Penalty(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Inactive,
    Working,
    /// Penalty with its linear slope added to the gradient.
    Above,
}

/// Normalized row `a.x <= b`. Penalty rows carry their weight; the penalty is
/// `weight * max(0, a.x - b)`.
struct Row {
    idx: Vec<usize>,
    val: Vec<f64>,
    b: f64,
    weight: f64,
    kind: Kind,
}

impl Row {
    fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }
}

fn build_rows(qp: &QuadraticProgram) -> Vec<Row> {
    let n = qp.dim();
    let mut rows = Vec::new();
    let mut push = |coeffs: &[(usize, f64)], b: f64, weight: f64, kind: Kind, sign: f64| {
        let mut dense = vec![0.0; n];
        for &(i, c) in coeffs {
            dense[i] += sign * c;
        }
        let norm = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let (idx, val): (Vec<_>, Vec<_>) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, v / norm))
            .unzip();
        rows.push(Row {
            idx,
            val,
            b: sign * b / norm,
            weight: weight * norm,
            kind,
        });
    };
    for i in 0..n {
        if qp.lower[i].is_finite() {
            push(&[(i, 1.0)], qp.lower[i], 0.0, Kind::Hard(ConstraintRef::Lower(i)), -1.0);
        }
        if qp.upper[i].is_finite() {
            push(&[(i, 1.0)], qp.upper[i], 0.0, Kind::Hard(ConstraintRef::Upper(i)), 1.0);
        }
    }
    for (r, c) in qp.constraints.iter().enumerate() {
        push(&c.coeffs, c.upper, 0.0, Kind::Hard(ConstraintRef::Row(r)), 1.0);
    }
    for (p, pen) in qp.penalties.iter().enumerate() {
        let sign = match pen.side {
            PenaltySide::Above => 1.0,
            PenaltySide::Below => -1.0,
        };
        push(&pen.coeffs, pen.threshold, pen.slope, Kind::Penalty(p), sign);
    }
    rows
}

/// Incremental thin QR of the working-set columns `Y_W = Q [R; 0]`.
struct WorkingQr {
    n: usize,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    cols: Vec<usize>,
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 {
        (1.0, 0.0)
    } else {
        (a / r, b / r)
    }
}

impl WorkingQr {
    fn new(n: usize) -> Self {
        Self {
            n,
            q: DMatrix::identity(n, n),
            r: DMatrix::zeros(n, n),
            cols: Vec::new(),
        }
    }

    fn rotate_q(&mut self, i: usize, j: usize, c: f64, s: f64) {
        for row in 0..self.n {
            let qi = self.q[(row, i)];
            let qj = self.q[(row, j)];
            self.q[(row, i)] = c * qi + s * qj;
            self.q[(row, j)] = -s * qi + c * qj;
        }
    }

    /// Append column `y` (row id `id`). Returns false when `y` is numerically
    /// dependent on the current columns.
    fn add(&mut self, id: usize, y: &[f64]) -> bool {
        let m = self.cols.len();
        if m >= self.n {
            return false;
        }
        let yv = DVector::from_column_slice(y);
        let mut d = self.q.tr_mul(&yv);
        for j in (m + 1..self.n).rev() {
            let (c, s) = givens(d[j - 1], d[j]);
            if s == 0.0 {
                continue;
            }
            d[j - 1] = c * d[j - 1] + s * d[j];
            d[j] = 0.0;
            self.rotate_q(j - 1, j, c, s);
        }
        let ynorm = yv.norm();
        if d[m].abs() <= 1e-11 * ynorm.max(1e-300) {
            return false;
        }
        for i in 0..=m {
            self.r[(i, m)] = d[i];
        }
        self.cols.push(id);
        true
    }

    fn remove(&mut self, pos: usize) {
        let m = self.cols.len();
        self.cols.remove(pos);
        for k in pos..m - 1 {
            for i in 0..=k + 1 {
                self.r[(i, k)] = self.r[(i, k + 1)];
            }
        }
        for i in 0..m {
            self.r[(i, m - 1)] = 0.0;
        }
        for k in pos..m - 1 {
            let (c, s) = givens(self.r[(k, k)], self.r[(k + 1, k)]);
            if s == 0.0 {
                continue;
            }
            for col in k..m - 1 {
                let a = self.r[(k, col)];
                let b = self.r[(k + 1, col)];
                self.r[(k, col)] = c * a + s * b;
                self.r[(k + 1, col)] = -s * a + c * b;
            }
            self.r[(k + 1, k)] = 0.0;
            self.rotate_q(k, k + 1, c, s);
        }
    }

    /// Equality-constrained minimizer of `1/2 |z|^2 + w0'z` subject to
    /// `Y_W'z = b_W`; returns `(z, lambda)`.
    fn solve(&self, w0: &DVector<f64>, b: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let m = self.cols.len();
        let n = self.n;
        let q1 = self.q.columns(0, m);
        let c = q1.tr_mul(w0);
        // beta = R^-T b
        let mut beta = vec![0.0; m];
        for i in 0..m {
            let mut s = b[i];
            for k in 0..i {
                s -= self.r[(k, i)] * beta[k];
            }
            beta[i] = s / self.r[(i, i)];
        }
        let mut coef = DVector::zeros(m);
        for i in 0..m {
            coef[i] = beta[i] + c[i];
        }
        let mut z = -w0.clone();
        if m > 0 {
            z += q1 * &coef;
        }
        // lambda = R^-1 (-c - beta)
        let mut lambda = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = -c[i] - beta[i];
            for k in i + 1..m {
                s -= self.r[(i, k)] * lambda[k];
            }
            lambda[i] = s / self.r[(i, i)];
        }
        debug_assert_eq!(z.len(), n);
        (z, lambda)
    }
}

struct ActiveSet<'a> {
    rows: &'a [Row],
    chol: Cholesky<f64, nalgebra::Dyn>,
    y: DMatrix<f64>,
    state: Vec<State>,
    qr: WorkingQr,
    /// `L^-1 (g + sum_above w a)`
    w0: DVector<f64>,
    x: Vec<f64>,
    iterations: usize,
}

enum Outcome {
    Optimal,
    IterationLimit,
}

impl<'a> ActiveSet<'a> {
    fn new(h: &DMatrix<f64>, g: &DVector<f64>, rows: &'a [Row], x0: Vec<f64>) -> Option<Self> {
        let n = g.len();
        let chol = Cholesky::new(h.clone())?;
        let l = chol.l();
        let mut a = DMatrix::zeros(n, rows.len());
        for (r, row) in rows.iter().enumerate() {
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                a[(i, r)] = v;
            }
        }
        let y = l.solve_lower_triangular(&a)?;
        let w0 = l.solve_lower_triangular(g)?;
        let mut s = Self {
            rows,
            chol,
            y,
            state: vec![State::Inactive; rows.len()],
            qr: WorkingQr::new(n),
            w0,
            x: x0,
            iterations: 0,
        };
        for r in 0..rows.len() {
            if rows[r].weight > 0.0 && rows[r].dot(&s.x) > rows[r].b + FEAS_TOL {
                s.set_above(r, true);
            }
        }
        // warm start: hard rows and kinks already tight at x0
        for r in 0..rows.len() {
            if s.state[r] == State::Inactive && (rows[r].dot(&s.x) - rows[r].b).abs() <= FEAS_TOL {
                s.add_working(r);
            }
        }
        Some(s)
    }

    fn set_above(&mut self, r: usize, on: bool) {
        let w = self.rows[r].weight;
        let col = self.y.column(r);
        if on {
            self.w0.axpy(w, &col, 1.0);
            self.state[r] = State::Above;
        } else {
            self.w0.axpy(-w, &col, 1.0);
            self.state[r] = State::Inactive;
        }
    }

    fn add_working(&mut self, r: usize) -> bool {
        let y: Vec<f64> = self.y.column(r).iter().cloned().collect();
        if self.qr.add(r, &y) {
            self.state[r] = State::Working;
            true
        } else {
            false
        }
    }

    fn run(&mut self, max_iter: usize) -> Outcome {
        let n = self.x.len();
        let mut stalled = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > max_iter {
                return Outcome::IterationLimit;
            }
            let b: Vec<f64> = self.qr.cols.iter().map(|&r| self.rows[r].b).collect();
            let (z, lambda) = self.qr.solve(&self.w0, &b);
            let x_eq = self.chol.l().tr_solve_lower_triangular(&z).expect("triangular solve");
            let p: Vec<f64> = (0..n).map(|i| x_eq[i] - self.x[i]).collect();
            let pnorm = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let xnorm = self.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));

            if self.qr.cols.len() < n && pnorm > 1e-12 * xnorm {
                // ratio test over rows outside the working set
                let mut alpha = 1.0;
                let mut block: Option<usize> = None;
                for (r, row) in self.rows.iter().enumerate() {
                    let sign = match self.state[r] {
                        State::Working => continue,
                        State::Inactive => 1.0,
                        State::Above => -1.0,
                    };
                    let slope = sign * row.dot(&p);
                    if slope <= 1e-14 * pnorm {
                        continue;
                    }
                    let gap = sign * (row.b - row.dot(&self.x));
                    let step = (gap / slope).max(0.0);
                    if step < alpha {
                        alpha = step;
                        block = Some(r);
                    }
                }
                for i in 0..n {
                    self.x[i] += alpha * p[i];
                }
                if let Some(r) = block {
                    if self.state[r] == State::Above {
                        self.set_above(r, false);
                    }
                    if self.add_working(r) {
                        continue;
                    }
                    // dependent on the working set: release a row instead
                    stalled += 1;
                    if stalled > 2 * n + self.rows.len() {
                        return Outcome::IterationLimit;
                    }
                } else {
                    continue;
                }
            }

            // stationary on the working set: inspect multipliers
            let lam_scale = lambda.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let dual_tol = FEAS_TOL * lam_scale;
            let mut worst: Option<(usize, f64, bool)> = None;
            for (pos, &r) in self.qr.cols.iter().enumerate() {
                let lam = lambda[pos];
                let w = self.rows[r].weight;
                let (viol, to_above) = if lam < -dual_tol {
                    (-lam, false)
                } else if w > 0.0 && lam > w + dual_tol {
                    (lam - w, true)
                } else {
                    continue;
                };
                let better = match worst {
                    None => true,
                    Some((wpos, wv, _)) => viol > wv || (viol == wv && r < self.qr.cols[wpos]),
                };
                if better {
                    worst = Some((pos, viol, to_above));
                }
            }
            match worst {
                None => return Outcome::Optimal,
                Some((pos, _, to_above)) => {
                    let r = self.qr.cols[pos];
                    self.qr.remove(pos);
                    self.state[r] = State::Inactive;
                    if to_above {
                        self.set_above(r, true);
                    }
                }
            }
        }
    }

    fn working_hard(&self) -> Vec<ConstraintRef> {
        let mut out: Vec<ConstraintRef> = self
            .qr
            .cols
            .iter()
            .filter_map(|&r| match self.rows[r].kind {
                Kind::Hard(c) => Some(c),
                Kind::Penalty(_) => None,
            })
            .collect();
        out.sort_by_key(|c| match *c {
            ConstraintRef::Lower(i) => (0, i),
            ConstraintRef::Upper(i) => (1, i),
            ConstraintRef::Row(i) => (2, i),
        });
        out
    }
}

fn iteration_cap(n: usize, m: usize) -> usize {
    20 * (n + m) + 100
}

/// Find a point satisfying the hard rows, starting from `x0`. Violated rows
/// become unit-slope penalties under a small proximal term.
fn phase_one(rows: &[Row], x0: &[f64]) -> Result<Vec<f64>, (usize, f64)> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut mu = 1e-6;
    for _ in 0..3 {
        let mut elastic: Vec<Row> = Vec::with_capacity(rows.len());
        for row in rows.iter().filter(|r| matches!(r.kind, Kind::Hard(_))) {
            let violated = row.dot(&x) > row.b + FEAS_TOL;
            elastic.push(Row {
                idx: row.idx.clone(),
                val: row.val.clone(),
                b: row.b,
                weight: if violated { 1.0 } else { 0.0 },
                kind: row.kind,
            });
        }
        if elastic.iter().all(|r| r.weight == 0.0) {
            return Ok(x);
        }
        let h = DMatrix::identity(n, n) * mu;
        let g = DVector::from_iterator(n, x.iter().map(|v| -mu * v));
        let mut solver = ActiveSet::new(&h, &g, &elastic, x.clone()).expect("identity factorizes");
        solver.run(iteration_cap(n, elastic.len()));
        x = solver.x;
        let (worst, viol) = elastic
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.dot(&x) - r.b))
            .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        if viol <= FEAS_TOL {
            return Ok(x);
        }
        if mu < 1e-11 {
            return Err((worst, viol));
        }
        mu *= 1e-3;
    }
    let hard: Vec<&Row> = rows.iter().filter(|r| matches!(r.kind, Kind::Hard(_))).collect();
    let (worst, viol) = hard
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.dot(&x) - r.b))
        .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    if viol <= FEAS_TOL {
        Ok(x)
    } else {
        Err((worst, viol))
    }
}

/// Solve from the origin projected onto the variable bounds.
pub fn solve_qp(qp: &QuadraticProgram) -> QpSolution {
    let x0: Vec<f64> = (0..qp.dim()).map(|i| 0.0f64.clamp(qp.lower[i], qp.upper[i])).collect();
    solve_qp_from(qp, &x0)
}

/// Solve starting from `x0`; when `x0` is feasible no phase 1 is needed.
///
/// # Panics
/// If the Hessian is not positive definite.
pub fn solve_qp_from(qp: &QuadraticProgram, x0: &[f64]) -> QpSolution {
    let rows = build_rows(qp);
    let n = qp.dim();
    let hard_rows: Vec<usize> = (0..rows.len())
        .filter(|&r| matches!(rows[r].kind, Kind::Hard(_)))
        .collect();
    let start = match phase_one(&rows, x0) {
        Ok(x) => x,
        Err((worst, violation)) => {
            let worst = match rows[hard_rows[worst]].kind {
                Kind::Hard(c) => c,
                Kind::Penalty(_) => unreachable!(),
            };
            return QpSolution {
                objective: qp.objective(x0),
                x: x0.to_vec(),
                status: QpStatus::Infeasible { worst, violation },
                iterations: 0,
                active: Vec::new(),
            };
        }
    };
    let mut solver = ActiveSet::new(&qp.hessian, &qp.gradient, &rows, start)
        .expect("Hessian must be positive definite; apply psd_repair first");
    let outcome = solver.run(iteration_cap(n, rows.len()));
    let status = match outcome {
        Outcome::Optimal => QpStatus::Optimal,
        Outcome::IterationLimit => QpStatus::IterationLimit,
    };
    let x = solver.x.clone();
    QpSolution {
        objective: qp.objective(&x),
        active: solver.working_hard(),
        iterations: solver.iterations,
        status,
        x,
    }
}

/// KKT residuals of a solution: `(stationarity, primal infeasibility)`.
/// Stationarity is measured against the best non-negative multipliers of the
/// tight constraints and penalty subgradients, via a small projected solve.
pub fn kkt_residuals(qp: &QuadraticProgram, x: &[f64]) -> (f64, f64) {
    let primal = qp.max_violation(x).max(0.0);
    let xv = DVector::from_column_slice(x);
    let grad = &qp.hessian * &xv + &qp.gradient;
    let rows = build_rows(qp);
    let n = x.len();
    let tight: Vec<&Row> = rows.iter().filter(|r| (r.dot(x) - r.b).abs() <= 1e-7).collect();
    // fixed part of the gradient from penalties strictly above threshold
    let mut base = grad.clone();
    for r in &rows {
        if r.weight > 0.0 && r.dot(x) - r.b > 1e-7 {
            for (&i, &v) in r.idx.iter().zip(&r.val) {
                base[i] += r.weight * v;
            }
        }
    }
    // min |base + sum mu_r a_r| over mu in [0, w_r] (hard: w = inf), by
    // projected coordinate descent
    let mut mu = vec![0.0; tight.len()];
    let mut res = base.clone();
    for _ in 0..2000 {
        let mut change: f64 = 0.0;
        for (k, r) in tight.iter().enumerate() {
            let dot: f64 = r.idx.iter().zip(&r.val).map(|(&i, &v)| v * res[i]).sum();
            let cap = if r.weight > 0.0 { r.weight } else { f64::INFINITY };
            let new = (mu[k] - dot).clamp(0.0, cap);
            let delta = new - mu[k];
            if delta != 0.0 {
                for (&i, &v) in r.idx.iter().zip(&r.val) {
                    res[i] += delta * v;
                }
                mu[k] = new;
                change = change.max(delta.abs());
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    debug_assert_eq!(res.len(), n);
    (res.amax(), primal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn qp1(h: f64, g: f64) -> QuadraticProgram {
        QuadraticProgram::new(DMatrix::from_element(1, 1, h), DVector::from_element(1, g))
    }

    #[test]
    fn unconstrained_minimum() {
        // (x - 1)^2 = x^2 - 2x + 1
        let mut qp = qp1(2.0, -2.0);
        qp.constant = 1.0;
        let s = solve_qp(&qp);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.objective, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn active_lower_bound() {
        let mut qp = qp1(2.0, 0.0);
        qp.lower[0] = 2.0;
        let s = solve_qp(&qp);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-12);
        assert_eq!(s.active, vec![ConstraintRef::Lower(0)]);
    }

    #[test]
    fn general_row_from_infeasible_start() {
        // min x^2 + y^2 s.t. x + y >= 2
        let mut qp = QuadraticProgram::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2));
        qp.constraints
            .push(LinearConstraint::new(vec![(0, -1.0), (1, -1.0)], -2.0));
        let s = solve_qp(&qp);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(2));
        qp.constraints
            .push(LinearConstraint::new(vec![(0, 1.0), (1, 1.0)], -1.0));
        qp.lower = vec![0.0, 0.0];
        let s = solve_qp(&qp);
        assert!(matches!(s.status, QpStatus::Infeasible { .. }), "{:?}", s.status);
    }

    #[test]
    fn soft_penalty_kink_and_slope() {
        // min (x - 3)^2 + w max(0, x - 1)
        for (w, expected) in [(1.0, 2.5), (3.0, 1.5), (10.0, 1.0)] {
            let mut qp = qp1(2.0, -6.0);
            qp.constant = 9.0;
            qp.penalties.push(SoftPenalty {
                coeffs: vec![(0, 1.0)],
                threshold: 1.0,
                slope: w,
                side: PenaltySide::Above,
            });
            let s = solve_qp(&qp);
            assert_relative_eq!(s.x[0], expected, epsilon = 1e-9);
            let direct = (s.x[0] - 3.0).powi(2) + w * (s.x[0] - 1.0).max(0.0);
            assert_relative_eq!(s.objective, direct, epsilon = 1e-9);
        }
        // below-side penalty: min (x + 2)^2 + 5 max(0, 0 - x)
        let mut qp = qp1(2.0, 4.0);
        qp.constant = 4.0;
        qp.penalties.push(SoftPenalty {
            coeffs: vec![(0, 1.0)],
            threshold: 0.0,
            slope: 5.0,
            side: PenaltySide::Below,
        });
        let s = solve_qp(&qp);
        assert_relative_eq!(s.x[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn psd_repair_cases() {
        let h = DMatrix::identity(3, 3) * 2.0;
        let (r, lam) = psd_repair(&h);
        assert_eq!(lam, 0.0);
        assert_eq!(r, h);
        let h = -DMatrix::<f64>::identity(2, 2);
        let (r, lam) = psd_repair(&h);
        assert_relative_eq!(lam, 1.0 + PSD_DELTA, epsilon = 1e-15);
        let e = SymmetricEigen::new(r).eigenvalues;
        assert!(e.iter().all(|&v| (v - PSD_DELTA).abs() < 1e-12));
    }

    #[test]
    fn psd_repair_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
            let h = (&b + b.transpose()) * 0.5;
            let (r, _) = psd_repair(&h);
            let lmin = SymmetricEigen::new(r).eigenvalues.min();
            assert!(lmin >= -1e-10, "{lmin}");
        }
    }

    #[test]
    fn deterministic() {
        let mut qp = QuadraticProgram::new(DMatrix::identity(3, 3) * 2.0, DVector::from_vec(vec![-1.0, 2.0, 0.5]));
        qp.constraints
            .push(LinearConstraint::new(vec![(0, 1.0), (2, 1.0)], 0.2));
        qp.lower = vec![-1.0; 3];
        let a = solve_qp(&qp);
        let b = solve_qp(&qp);
        assert_eq!(a, b);
    }
}
