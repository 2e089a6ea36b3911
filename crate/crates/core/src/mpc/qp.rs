//! Dense strictly convex QP solver (Goldfarb–Idnani dual active-set method).
//!
//! Solves
//!
//! ```text
//! minimize ½ zᵀHz + fᵀz   subject to  Gz ≤ h,  Ez = e
//! ```
//!
//! for positive-definite `H`. The method starts from the unconstrained
//! minimum and adds violated constraints one at a time while keeping dual
//! feasibility, so every iterate is optimal for the constraints in its
//! active set. Factorizations are updated with Givens rotations.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub ineq_a: DMatrix<f64>,
    pub ineq_b: DVector<f64>,
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
}

impl QpProblem {
    /// A problem with no constraints.
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            ineq_a: DMatrix::zeros(0, n),
            ineq_b: DVector::zeros(0),
            eq_a: DMatrix::zeros(0, n),
            eq_b: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Multipliers of `Gz ≤ h` (non-negative at optimum).
    pub lambda_ineq: DVector<f64>,
    /// Multipliers of `Ez = e`.
    pub lambda_eq: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Indices of active inequality rows at exit.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Scaled primal feasibility tolerance.
    pub feas_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 20_000, feas_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QpError {
    NotPositiveDefinite,
    Dimension,
}

impl std::fmt::Display for QpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpError::NotPositiveDefinite => write!(f, "Hessian is not positive definite"),
            QpError::Dimension => write!(f, "inconsistent QP dimensions"),
        }
    }
}

impl std::error::Error for QpError {}

/// KKT residuals in the infinity norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

pub fn kkt_residuals(qp: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let z = &sol.z;
    let grad = &qp.hessian * z + &qp.linear + qp.ineq_a.transpose() * &sol.lambda_ineq + qp.eq_a.transpose() * &sol.lambda_eq;
    let slack = &qp.ineq_b - &qp.ineq_a * z;
    let primal_ineq = slack.iter().map(|&s| (-s).max(0.0)).fold(0.0, f64::max);
    let primal_eq = (&qp.eq_a * z - &qp.eq_b).amax();
    let dual = sol.lambda_ineq.iter().map(|&l| (-l).max(0.0)).fold(0.0, f64::max);
    let comp = slack.iter().zip(sol.lambda_ineq.iter()).map(|(s, l)| (s * l).abs()).fold(0.0, f64::max);
    KktResiduals { stationarity: grad.amax(), primal: primal_ineq.max(primal_eq), dual, complementarity: comp }
}

/// Constraint in the solver's internal form `nᵀz ≥ b`.
struct Row {
    normal: DVector<f64>,
    rhs: f64,
    norm: f64,
}

struct Workspace {
    /// `J = L⁻ᵀQ`; its first `q` columns span the active normals.
    j: DMatrix<f64>,
    /// Upper-triangular factor, leading `q × q` block in use.
    r: DMatrix<f64>,
    q: usize,
}

impl Workspace {
    /// Append a constraint whose transformed normal is `d = Jᵀn`.
    fn add(&mut self, mut d: DVector<f64>) -> bool {
        let n = d.len();
        let q = self.q;
        for i in (q + 1..n).rev() {
            let (a, b) = (d[i - 1], d[i]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[i - 1] = h;
            d[i] = 0.0;
            rotate_columns(&mut self.j, i - 1, i, c, s);
        }
        if d[q].abs() <= f64::EPSILON * d.amax().max(1.0) {
            return false;
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.q += 1;
        true
    }

    /// Remove the active constraint at position `k`.
    fn drop(&mut self, k: usize) {
        let q = self.q;
        for col in k..q - 1 {
            for row in 0..=col + 1 {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        for col in k..q - 1 {
            let (a, b) = (self.r[(col, col)], self.r[(col + 1, col)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for cc in col..q - 1 {
                let (x, y) = (self.r[(col, cc)], self.r[(col + 1, cc)]);
                self.r[(col, cc)] = c * x + s * y;
                self.r[(col + 1, cc)] = -s * x + c * y;
            }
            self.r[(col + 1, col)] = 0.0;
            rotate_columns(&mut self.j, col, col + 1, c, s);
        }
        self.q -= 1;
    }

    /// Solve `R[..q, ..q]·r = d[..q]`.
    fn back_solve(&self, d: &DVector<f64>) -> DVector<f64> {
        let q = self.q;
        let mut r = DVector::zeros(q);
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, a)], m[(i, b)]);
        m[(i, a)] = c * x + s * y;
        m[(i, b)] = -s * x + c * y;
    }
}

/// Solve a strictly convex QP.
pub fn solve(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = qp.n();
    let mi = qp.ineq_b.len();
    let me = qp.eq_b.len();
    if qp.hessian.shape() != (n, n) || qp.ineq_a.shape() != (mi, n) || qp.eq_a.shape() != (me, n) {
        return Err(QpError::Dimension);
    }
    let chol = qp.hessian.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let l_inv = chol.l().solve_lower_triangular(&DMatrix::identity(n, n)).ok_or(QpError::NotPositiveDefinite)?;
    let mut ws = Workspace { j: l_inv.transpose(), r: DMatrix::zeros(n, n), q: 0 };

    let mut x = -chol.solve(&qp.linear);

    // Equalities first (indices 0..me), then inequalities (me..me+mi) as
    // −G_i·z ≥ −h_i.
    let mut rows: Vec<Row> = Vec::with_capacity(me + mi);
    for i in 0..me {
        let normal = qp.eq_a.row(i).transpose();
        let norm = normal.norm();
        rows.push(Row { normal, rhs: qp.eq_b[i], norm });
    }
    for i in 0..mi {
        let normal = -qp.ineq_a.row(i).transpose();
        let norm = normal.norm();
        rows.push(Row { normal, rhs: -qp.ineq_b[i], norm });
    }

    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    // Sign applied to an equality row when it was added.
    let mut eq_sign = vec![1.0; me];
    let mut iterations = 0usize;
    let mut status = QpStatus::Optimal;

    let finish = |x: DVector<f64>, active: &[usize], u: &[f64], eq_sign: &[f64], status: QpStatus, iterations: usize| {
        let mut lambda_ineq = DVector::zeros(mi);
        let mut lambda_eq = DVector::zeros(me);
        for (&a, &ua) in active.iter().zip(u) {
            if a < me {
                lambda_eq[a] = -eq_sign[a] * ua;
            } else {
                lambda_ineq[a - me] = ua;
            }
        }
        let objective = qp.objective(&x);
        let act = active.iter().filter(|&&a| a >= me).map(|&a| a - me).collect();
        QpSolution { z: x, lambda_ineq, lambda_eq, objective, status, iterations, active: act }
    };

    // Phase 1: equality constraints.
    for p in 0..me {
        let row = &rows[p];
        let s = row.normal.dot(&x) - row.rhs;
        let sign = if s > 0.0 { -1.0 } else { 1.0 };
        eq_sign[p] = sign;
        let np = &row.normal * sign;
        let d = ws.j.transpose() * &np;
        let zdir = ws.j.columns(ws.q, n - ws.q) * d.rows(ws.q, n - ws.q);
        let r = ws.back_solve(&d);
        let denom = zdir.dot(&np);
        if zdir.amax() <= 1e-14 * d.amax().max(1.0) || denom <= 0.0 {
            // Dependent on earlier equalities: consistent only if already satisfied.
            if (s / row.norm.max(f64::MIN_POSITIVE)).abs() > 1e-9 * (1.0 + row.rhs.abs() / row.norm.max(1e-300)) {
                return Ok(finish(x, &active, &u, &eq_sign, QpStatus::Infeasible, iterations));
            }
            continue;
        }
        let t = -(s * sign) / denom;
        x += &zdir * t;
        for (ua, ra) in u.iter_mut().zip(r.iter()) {
            *ua -= t * ra;
        }
        if !ws.add(d) {
            return Ok(finish(x, &active, &u, &eq_sign, QpStatus::Infeasible, iterations));
        }
        active.push(p);
        u.push(t);
        iterations += 1;
    }

    let mut is_active = vec![false; me + mi];
    for &a in &active {
        is_active[a] = true;
    }

    'outer: loop {
        // Most violated inequality, scaled by its normal length.
        let mut best = None;
        let mut best_v = 0.0;
        for p in me..me + mi {
            if is_active[p] || rows[p].norm == 0.0 {
                continue;
            }
            let s = rows[p].normal.dot(&x) - rows[p].rhs;
            let scaled = s / rows[p].norm;
            let tol = settings.feas_tol * (1.0 + rows[p].rhs.abs() / rows[p].norm);
            if scaled < -tol && scaled < best_v {
                best_v = scaled;
                best = Some(p);
            }
        }
        let Some(p) = best else { break };

        let np = rows[p].normal.clone();
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > settings.max_iter {
                status = QpStatus::MaxIter;
                break 'outer;
            }
            let d = ws.j.transpose() * &np;
            let zdir = ws.j.columns(ws.q, n - ws.q) * d.rows(ws.q, n - ws.q);
            let r = ws.back_solve(&d);

            // Largest dual step that keeps active inequality multipliers ≥ 0.
            let mut t1 = f64::INFINITY;
            let mut k_drop = None;
            for (k, (&a, &rk)) in active.iter().zip(r.iter()).enumerate() {
                if a >= me && rk > 0.0 {
                    let ratio = u[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        k_drop = Some(k);
                    }
                }
            }
            let s = np.dot(&x) - rows[p].rhs;
            let denom = zdir.dot(&np);
            let t2 = if zdir.amax() > 1e-14 * d.amax().max(1.0) && denom > 0.0 { -s / denom } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                status = QpStatus::Infeasible;
                break 'outer;
            }
            if t2.is_finite() {
                x += &zdir * t;
            }
            for (ua, ra) in u.iter_mut().zip(r.iter()) {
                *ua -= t * ra;
            }
            u_p += t;
            if t2 <= t1 {
                if !ws.add(d) {
                    status = QpStatus::Infeasible;
                    break 'outer;
                }
                active.push(p);
                u.push(u_p);
                is_active[p] = true;
                break;
            }
            let k = k_drop.expect("finite t1 has a blocking constraint");
            ws.drop(k);
            is_active[active[k]] = false;
            active.remove(k);
            u.remove(k);
        }
    }

    for v in u.iter_mut() {
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0;
        }
    }
    Ok(finish(x, &active, &u, &eq_sign, status, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_lower_bound() {
        // min x² s.t. x ≥ 1
        let mut qp = QpProblem::unconstrained(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1));
        qp.ineq_a = DMatrix::from_element(1, 1, -1.0);
        qp.ineq_b = DVector::from_element(1, -1.0);
        let s = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12);
        assert!((s.lambda_ineq[0] - 2.0).abs() < 1e-12);
        assert!(kkt_residuals(&qp, &s).max() < 1e-12);
    }

    #[test]
    fn symmetric_equality() {
        let mut qp = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2));
        qp.eq_a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        qp.eq_b = DVector::from_element(1, 2.0);
        let s = solve(&qp, &QpSettings::default()).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-12 && (s.z[1] - 1.0).abs() < 1e-12);
        assert!(kkt_residuals(&qp, &s).max() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let mut qp = QpProblem::unconstrained(DMatrix::identity(1, 1), DVector::zeros(1));
        qp.ineq_a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        qp.ineq_b = DVector::from_vec(vec![-1.0, -1.0]); // x ≤ −1 and x ≥ 1
        assert_eq!(solve(&qp, &QpSettings::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let qp = QpProblem::unconstrained(DMatrix::from_element(1, 1, -1.0), DVector::zeros(1));
        assert_eq!(solve(&qp, &QpSettings::default()), Err(QpError::NotPositiveDefinite));
    }

    #[test]
    fn box_constrained_projection() {
        // Project (3, −2, 0.5) onto [−1, 1]³.
        let target = DVector::from_vec(vec![3.0, -2.0, 0.5]);
        let mut qp = QpProblem::unconstrained(DMatrix::identity(3, 3), -target);
        let b = crate::polytope::Box::symmetric(&DVector::from_element(3, 1.0)).unwrap().to_hpolytope();
        qp.ineq_a = b.normals().clone();
        qp.ineq_b = b.offsets().clone();
        let s = solve(&qp, &QpSettings::default()).unwrap();
        assert!((&s.z - DVector::from_vec(vec![1.0, -1.0, 0.5])).amax() < 1e-12);
        assert!(kkt_residuals(&qp, &s).max() < 1e-12);
    }

    #[test]
    fn dependent_equalities_are_tolerated() {
        let mut qp = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2));
        qp.eq_a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        qp.eq_b = DVector::from_vec(vec![2.0, 4.0]);
        let s = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12);
    }
}
