//! Slow reference computations used to check the library. Nothing here
//! calls into the code under test except for plain data types.
#![allow(dead_code)]

use linetube::mpc::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// All `2^n` corners of `[lo, hi]`.
pub fn box_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect())
        .collect()
}

/// Bounding box of all pairwise vertex sums.
pub fn minkowski_by_vertices(a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> (Vec<f64>, Vec<f64>) {
    let n = a.0.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for va in box_vertices(a.0, a.1) {
        for vb in box_vertices(b.0, b.1) {
            for i in 0..n {
                let s = va[i] + vb[i];
                lo[i] = lo[i].min(s);
                hi[i] = hi[i].max(s);
            }
        }
    }
    (lo, hi)
}

/// `x ⊖ ω` from the definition: `y + v ∈ x` for every vertex `v` of ω.
/// Returns `None` when empty.
pub fn pontryagin_by_vertices(x: (&[f64], &[f64]), omega: (&[f64], &[f64])) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x.0.len();
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for v in box_vertices(omega.0, omega.1) {
        for i in 0..n {
            lo[i] = lo[i].max(x.0[i] - v[i]);
            hi[i] = hi[i].min(x.1[i] - v[i]);
        }
    }
    if (0..n).any(|i| lo[i] > hi[i]) {
        None
    } else {
        Some((lo, hi))
    }
}

/// `max_v d·v` over the vertices of `[lo, hi]`.
pub fn support_by_vertices(lo: &[f64], hi: &[f64], d: &[f64]) -> f64 {
    box_vertices(lo, hi)
        .iter()
        .map(|v| v.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Support of the truncated minimal RPI sum `⊕_{k<terms} A^k W` along `d`,
/// a lower bound on the support of any RPI set containing the origin.
pub fn mrpi_support(a: &DMatrix<f64>, w_bar: &DVector<f64>, d: &DVector<f64>, terms: usize) -> f64 {
    let mut dir = d.clone();
    let mut total = 0.0;
    for _ in 0..terms {
        total += dir.iter().zip(w_bar.iter()).map(|(x, w)| x.abs() * w).sum::<f64>();
        dir = a.transpose() * dir;
    }
    total
}

/// Result of the reference solver.
pub struct OracleSolution {
    pub z: DVector<f64>,
    /// Dual objective: a certified lower bound on the optimum.
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

/// Accelerated projected gradient on the dual of a strictly convex QP
/// `min ½zᵀHz + fᵀz, Gz <= h, Ez = e`, with adaptive restart.
pub fn dual_projected_gradient(qp: &QpProblem, tol: f64, max_iter: usize) -> OracleSolution {
    let n = qp.linear.len();
    let (mi, me) = (qp.ineq_b.len(), qp.eq_b.len());
    let p = mi + me;
    let h_inv = qp.hessian.clone().try_inverse().expect("Hessian invertible");
    let mut a = DMatrix::zeros(p, n);
    a.view_mut((0, 0), (mi, n)).copy_from(&qp.ineq_a);
    a.view_mut((mi, 0), (me, n)).copy_from(&qp.eq_a);
    let mut b = DVector::zeros(p);
    b.rows_mut(0, mi).copy_from(&qp.ineq_b);
    b.rows_mut(mi, me).copy_from(&qp.eq_b);
    // Dual: max_y −½yᵀMy − qᵀy − ½fᵀH⁻¹f with y_ineq >= 0.
    let m = &a * &h_inv * a.transpose();
    let hf = &h_inv * &qp.linear;
    let q = &b + &a * &hf;
    let c0 = -0.5 * qp.linear.dot(&hf);
    if p == 0 {
        let z = -hf;
        let obj = 0.5 * z.dot(&(&qp.hessian * &z)) + qp.linear.dot(&z);
        return OracleSolution { z, dual_objective: obj, primal_objective: obj, max_violation: 0.0, iterations: 0 };
    }
    let lip = m.clone().symmetric_eigenvalues().amax().max(1e-12);
    let dual_value = |y: &DVector<f64>| -0.5 * y.dot(&(&m * y)) - q.dot(y) + c0;
    let project = |y: &mut DVector<f64>| {
        for i in 0..mi {
            y[i] = y[i].max(0.0);
        }
    };
    let primal = |y: &DVector<f64>| -(&h_inv * (&qp.linear + a.transpose() * y));
    let violation = |z: &DVector<f64>| {
        let r = &a * z - &b;
        let mut v: f64 = 0.0;
        for i in 0..p {
            v = v.max(if i < mi { r[i] } else { r[i].abs() });
        }
        v
    };

    let mut y = DVector::zeros(p);
    let mut y_prev = y.clone();
    let mut t = 1.0f64;
    let mut best = dual_value(&y);
    let mut iterations = 0;
    let mut stalled = false;
    for it in 0..max_iter {
        iterations = it + 1;
        let beta = (t - 1.0) / (0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()));
        let yk = &y + (&y - &y_prev) * beta;
        let grad = -(&m * &yk) - &q;
        let mut y_new = &yk + grad / lip;
        project(&mut y_new);
        let val = dual_value(&y_new);
        if val < best {
            // Restart momentum when the dual value drops; two drops in a
            // row mean a plain gradient step no longer makes progress.
            if stalled {
                break;
            }
            stalled = true;
            t = 1.0;
            y_prev = y.clone();
            continue;
        }
        stalled = false;
        best = val;
        t = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y_prev = std::mem::replace(&mut y, y_new);
        if it % 50 == 0 {
            let z = primal(&y);
            let pobj = 0.5 * z.dot(&(&qp.hessian * &z)) + qp.linear.dot(&z);
            if violation(&z) <= tol.sqrt() * 1e-2 && (pobj - best).abs() <= tol * pobj.abs().max(1.0) {
                break;
            }
        }
    }
    let z = primal(&y);
    OracleSolution {
        primal_objective: 0.5 * z.dot(&(&qp.hessian * &z)) + qp.linear.dot(&z),
        max_violation: violation(&z),
        dual_objective: best,
        iterations,
        z,
    }
}

/// Random strictly convex QP with a known feasible point.
pub fn random_feasible_qp<R: Rng>(rng: &mut R, n: usize, mi: usize, me: usize) -> QpProblem {
    let g = |r: usize, c: usize, rng: &mut R| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let root = g(n, n, rng);
    let hessian = root.transpose() * &root + DMatrix::identity(n, n) * 0.5;
    let linear = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let ineq_a = g(mi, n, rng);
    let eq_a = g(me, n, rng);
    let feasible = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(mi, |_, _| rng.gen_range(0.0..1.0));
    let ineq_b = &ineq_a * &feasible + slack;
    let eq_b = &eq_a * &feasible;
    QpProblem { hessian, linear, ineq_a, ineq_b, eq_a, eq_b }
}
