//! Stabilizing feedback, robust positively invariant tube section, and
//! constraint tightening.
//!
//! The tube section is the Kofman set
//! `Ω = {x : |V⁻¹x| <= r}` with `r = |I−Δ|⁻¹·|V⁻¹B_w|·w̄ + θ`, where
//! `A_K = VΔV⁻¹` has a real spectrum. In the coordinates `ξ = V⁻¹x` it is a
//! box, so invariance checks and support functions are exact and cheap.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::mpc::qp::{self, QpProblem, QpSettings, QpStatus};
use crate::polytope::{HPolytope, SetError};

/// Requested poles are compared with computed eigenvalues at this tolerance.
pub const POLE_TOL: f64 = 1e-8;
/// Largest eigenvector-basis condition number accepted by the Kofman set.
pub const MAX_BASIS_CONDITION: f64 = 1e8;
/// Absolute tolerance of the invariance certificate.
pub const CERTIFICATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustError {
    #[error("pole {0} is not strictly inside the unit circle")]
    UnstablePole(f64),
    #[error("feedback group {group}: controllable subspace has dimension {expected}, but {got} poles were given")]
    PoleCount { group: usize, expected: usize, got: usize },
    #[error("feedback group {group}: uncontrollable mode {eigenvalue} is not stable (pair is not stabilizable)")]
    Unstabilizable { group: usize, eigenvalue: f64 },
    #[error("feedback group {group}: {message}")]
    BadGroup { group: usize, message: String },
    #[error("closed loop has eigenvalue {0} on or outside the unit circle")]
    ClosedLoopUnstable(f64),
    #[error("requested pole {0} missing from the closed-loop spectrum")]
    PoleNotPlaced(f64),
    #[error("closed-loop eigenvalue {re} + {im}i is not real")]
    ComplexClosedLoop { re: f64, im: f64 },
    #[error("closed-loop matrix is defective or its eigenbasis is ill-conditioned (condition {0:.3e}); choose different poles")]
    Defective(f64),
    #[error("pole placement failed: {0}")]
    Placement(String),
    #[error("disturbance set too large for constraints: {0} is empty")]
    EmptyTightenedSet(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Set(#[from] SetError),
}

impl From<LinalgError> for RobustError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::ComplexEigenvalue { re, im } => RobustError::ComplexClosedLoop { re, im },
            LinalgError::IllConditioned(c) => RobustError::Defective(c),
            LinalgError::Defective(_) => RobustError::Defective(f64::INFINITY),
            other => RobustError::Placement(other.to_string()),
        }
    }
}

/// One decoupled block of the feedback: `inputs` are driven only by
/// `states`, and `poles` are assigned on the block's controllable subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainGroup {
    pub inputs: Vec<usize>,
    pub states: Vec<usize>,
    pub poles: Vec<f64>,
}

impl GainGroup {
    /// A single group covering every state and input.
    pub fn full(n: usize, m: usize, poles: Vec<f64>) -> Self {
        Self { inputs: (0..m).collect(), states: (0..n).collect(), poles }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackGain {
    pub k: DMatrix<f64>,
    /// Eigenvalues of `A + BK`, ascending.
    pub closed_loop: Vec<f64>,
}

/// Perturb repeated poles by 1e-3 so every requested pole is distinct.
pub fn make_poles_distinct(groups: &mut [GainGroup]) {
    let mut seen: Vec<f64> = Vec::new();
    for g in groups.iter_mut() {
        for p in g.poles.iter_mut() {
            let original = *p;
            while seen.iter().any(|s| (s - *p).abs() < 1e-9) {
                *p += if *p + 1e-3 < 1.0 { 1e-3 } else { -1e-3 };
            }
            if *p != original {
                warn!("pole {original} repeated; using {p} instead");
            }
            seen.push(*p);
        }
    }
}

/// Eigenstructure assignment on a controllable pair `(A, B)`: returns `K`
/// with `eig(A + BK) = poles`. Multi-input pairs pick eigenvectors by a
/// few sweeps of orthogonalization within each admissible subspace.
pub fn place(a: &DMatrix<f64>, b: &DMatrix<f64>, poles: &[f64]) -> Result<DMatrix<f64>, RobustError> {
    let r = a.nrows();
    let m = b.ncols();
    if poles.len() != r {
        return Err(RobustError::Placement(format!("{} poles for a {r}-state pair", poles.len())));
    }
    if r == 0 {
        return Ok(DMatrix::zeros(m, 0));
    }
    // Admissible (v, g) pairs for each pole: null space of [A − pI, B].
    let mut subspaces = Vec::with_capacity(r);
    for &p in poles {
        let mut mat = DMatrix::zeros(r, r + m);
        mat.view_mut((0, 0), (r, r)).copy_from(&(a - DMatrix::identity(r, r) * p));
        mat.view_mut((0, r), (r, m)).copy_from(b);
        let (basis, worst) = linalg::smallest_right_vectors(&mat, m);
        if worst > 1e-8 * mat.amax().max(1.0) {
            return Err(RobustError::Placement(format!("pair is not controllable at pole {p}")));
        }
        subspaces.push(basis);
    }
    let mut coeffs: Vec<DVector<f64>> = (0..r).map(|i| DVector::from_fn(m, |j, _| if j == i % m { 1.0 } else { 0.0 })).collect();
    let vec_of = |i: usize, c: &DVector<f64>| subspaces[i].rows(0, r) * c;
    if m > 1 {
        for _sweep in 0..20 {
            for i in 0..r {
                let others = DMatrix::from_fn(r, r - 1, |row, col| {
                    let j = if col < i { col } else { col + 1 };
                    let v = vec_of(j, &coeffs[j]);
                    v[row] / v.norm()
                });
                let (y, _) = linalg::smallest_right_vectors(&others.transpose(), 1);
                let vi = subspaces[i].rows(0, r).into_owned();
                let c = vi
                    .clone()
                    .svd(true, true)
                    .solve(&y.column(0).into_owned(), 1e-14)
                    .map_err(|e| RobustError::Placement(e.to_string()))?;
                let nv = (&vi * &c).norm();
                if nv > 1e-12 {
                    coeffs[i] = c / nv;
                }
            }
        }
    }
    let mut v = DMatrix::zeros(r, r);
    let mut g = DMatrix::zeros(m, r);
    for i in 0..r {
        let full = &subspaces[i] * &coeffs[i];
        let scale = full.rows(0, r).norm();
        if scale < 1e-12 {
            return Err(RobustError::Placement("degenerate eigenvector".into()));
        }
        v.set_column(i, &(full.rows(0, r) / scale));
        g.set_column(i, &(full.rows(r, m) / scale));
    }
    let v_inv = v.clone().try_inverse().ok_or_else(|| RobustError::Placement("eigenvector matrix is singular; poles may repeat".into()))?;
    Ok(g * v_inv)
}

/// Gain built block by block, then verified on the full closed loop.
pub fn synthesize_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, groups: &[GainGroup]) -> Result<FeedbackGain, RobustError> {
    let n = a.nrows();
    let m = b.ncols();
    let mut k = DMatrix::zeros(m, n);
    let mut input_used = vec![false; m];
    for (gi, g) in groups.iter().enumerate() {
        for &p in &g.poles {
            if !(p.abs() < 1.0) {
                return Err(RobustError::UnstablePole(p));
            }
        }
        if g.states.iter().any(|&s| s >= n) || g.inputs.iter().any(|&i| i >= m) {
            return Err(RobustError::BadGroup { group: gi, message: "index out of range".into() });
        }
        for &i in &g.inputs {
            if input_used[i] {
                return Err(RobustError::BadGroup { group: gi, message: format!("input {i} appears in two groups") });
            }
            input_used[i] = true;
        }
        let ag = DMatrix::from_fn(g.states.len(), g.states.len(), |i, j| a[(g.states[i], g.states[j])]);
        let bg = DMatrix::from_fn(g.states.len(), g.inputs.len(), |i, j| b[(g.states[i], g.inputs[j])]);
        let (u1, u2) = if g.inputs.is_empty() {
            (DMatrix::zeros(g.states.len(), 0), DMatrix::identity(g.states.len(), g.states.len()))
        } else {
            linalg::controllable_subspace(&ag, &bg, 1e-9)
        };
        if u1.ncols() != g.poles.len() {
            return Err(RobustError::PoleCount { group: gi, expected: u1.ncols(), got: g.poles.len() });
        }
        if u2.ncols() > 0 {
            let held = u2.transpose() * &ag * &u2;
            for (re, im) in linalg::eigenvalues(&held)? {
                if re.hypot(im) >= 1.0 {
                    return Err(RobustError::Unstabilizable { group: gi, eigenvalue: re });
                }
            }
        }
        let ac = u1.transpose() * &ag * &u1;
        let bc = u1.transpose() * &bg;
        let kc = place(&ac, &bc, &g.poles)?;
        let kg = kc * u1.transpose();
        for (ii, &inp) in g.inputs.iter().enumerate() {
            for (si, &st) in g.states.iter().enumerate() {
                k[(inp, st)] = kg[(ii, si)];
            }
        }
    }
    let closed_loop = verify_gain(a, b, &k, &groups.iter().flat_map(|g| g.poles.iter().copied()).collect::<Vec<_>>())?;
    Ok(FeedbackGain { k, closed_loop })
}

/// Eigensolve of `A + BK`: every eigenvalue real and strictly stable, and
/// every requested pole present. Returns the spectrum.
pub fn verify_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>, poles: &[f64]) -> Result<Vec<f64>, RobustError> {
    let ak = a + b * k;
    let ev = linalg::eigenvalues(&ak)?;
    for &(re, im) in &ev {
        if im.abs() > linalg::IMAG_TOL {
            return Err(RobustError::ComplexClosedLoop { re, im });
        }
        if re.abs() >= 1.0 {
            return Err(RobustError::ClosedLoopUnstable(re));
        }
    }
    let mut remaining: Vec<f64> = ev.iter().map(|e| e.0).collect();
    for &p in poles {
        let pos = remaining
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - p).abs().total_cmp(&(y.1 - p).abs()))
            .map(|(i, _)| i)
            .filter(|&i| (remaining[i] - p).abs() <= POLE_TOL)
            .ok_or(RobustError::PoleNotPlaced(p))?;
        remaining.remove(pos);
    }
    Ok(ev.into_iter().map(|e| e.0).collect())
}

/// Tube cross-section `{x : |V⁻¹x| <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpiSet {
    pub v: DMatrix<f64>,
    pub v_inv: DMatrix<f64>,
    pub radius: DVector<f64>,
    pub theta: DVector<f64>,
    /// Eigenvalue associated with each column of `v`.
    pub eigenvalues: Vec<f64>,
}

impl RpiSet {
    pub fn dim(&self) -> usize {
        self.radius.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        let xi = &self.v_inv * x;
        (0..self.dim()).all(|i| xi[i].abs() <= self.radius[i] + crate::polytope::MEMBERSHIP_TOL)
    }

    /// Largest `|ξ_i| − r_i` with `ξ = V⁻¹x`; non-positive inside.
    pub fn excess(&self, x: &DVector<f64>) -> f64 {
        let xi = &self.v_inv * x;
        (0..self.dim()).map(|i| xi[i].abs() - self.radius[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// State-space H-representation with normals `±V⁻¹`.
    pub fn to_hpolytope(&self) -> Result<HPolytope, SetError> {
        let n = self.dim();
        let mut normals = DMatrix::zeros(2 * n, n);
        let mut offsets = DVector::zeros(2 * n);
        for i in 0..n {
            normals.set_row(2 * i, &self.v_inv.row(i));
            normals.set_row(2 * i + 1, &(-self.v_inv.row(i)));
            offsets[2 * i] = self.radius[i];
            offsets[2 * i + 1] = self.radius[i];
        }
        HPolytope::new(normals, offsets)
    }

    /// Support function `max_{x ∈ Ω} dᵀx = Σ |(Vᵀd)_i|·r_i`.
    pub fn support(&self, d: &DVector<f64>) -> f64 {
        let c = self.v.transpose() * d;
        c.iter().zip(self.radius.iter()).map(|(ci, ri)| ci.abs() * ri).sum()
    }

    /// Per-coordinate half-widths of the bounding box, `|V|·r`.
    pub fn bounding_half_widths(&self) -> DVector<f64> {
        self.v.abs() * &self.radius
    }

    /// A point of Ω with ξ-coordinates `xi` (caller keeps `|ξ| <= r`).
    pub fn point(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.v * xi
    }
}

/// Eigendecomposition of a stable closed loop with its disturbance gain in
/// modal coordinates.
struct Modal {
    eigenvalues: Vec<f64>,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    /// `|V⁻¹B_w|·w̄`, the per-mode disturbance bound.
    w_modal: DVector<f64>,
}

fn modal(a_k: &DMatrix<f64>, b_w: &DMatrix<f64>, w_bar: &DVector<f64>) -> Result<Modal, RobustError> {
    let n = a_k.nrows();
    if a_k.ncols() != n || b_w.nrows() != n || b_w.ncols() != w_bar.len() {
        return Err(RobustError::Dimension("A_K, B_w and w_bar do not agree".into()));
    }
    let (eigenvalues, v) = linalg::real_eigen_decomposition(a_k)?;
    if let Some(&l) = eigenvalues.iter().find(|l| l.abs() >= 1.0) {
        return Err(RobustError::ClosedLoopUnstable(l));
    }
    let cond = linalg::condition_number(&v);
    if !(cond <= MAX_BASIS_CONDITION) {
        return Err(RobustError::Defective(cond));
    }
    let v_inv = v.clone().try_inverse().ok_or(RobustError::Defective(f64::INFINITY))?;
    let w_modal = (&v_inv * b_w).abs() * w_bar;
    Ok(Modal { eigenvalues, v, v_inv, w_modal })
}

fn base_radius(m: &Modal) -> DVector<f64> {
    DVector::from_fn(m.eigenvalues.len(), |i, _| m.w_modal[i] / (1.0 - m.eigenvalues[i].abs()))
}

/// The Kofman set for `x⁺ = A_K x + B_w w`, `|w| <= w̄`, enlarged by `θ`.
pub fn kofman_rpi(a_k: &DMatrix<f64>, b_w: &DMatrix<f64>, w_bar: &DVector<f64>, theta: &DVector<f64>) -> Result<RpiSet, RobustError> {
    let m = modal(a_k, b_w, w_bar)?;
    if theta.len() != m.eigenvalues.len() {
        return Err(RobustError::Dimension("theta length".into()));
    }
    let radius = base_radius(&m) + theta;
    Ok(RpiSet { v: m.v, v_inv: m.v_inv, radius, theta: theta.clone(), eigenvalues: m.eigenvalues })
}

/// Kofman set with `θ` applied only to modes the disturbance reaches.
///
/// Modes with `|V⁻¹B_w|·w̄` below `1e-12` of the largest entry keep radius
/// zero, so exactly known states (battery power, curtailment registers)
/// are not blurred by θ. If no mode is reached, every mode gets θ.
pub fn kofman_rpi_reachable(a_k: &DMatrix<f64>, b_w: &DMatrix<f64>, w_bar: &DVector<f64>, theta: f64) -> Result<RpiSet, RobustError> {
    let m = modal(a_k, b_w, w_bar)?;
    let base = base_radius(&m);
    let top = base.amax();
    let theta_vec = DVector::from_fn(base.len(), |i, _| if top == 0.0 || base[i] > 1e-12 * top { theta } else { 0.0 });
    let base = base.map(|b| if b > 1e-12 * top { b } else { 0.0 });
    let radius = base + &theta_vec;
    Ok(RpiSet { v: m.v, v_inv: m.v_inv, radius, theta: theta_vec, eigenvalues: m.eigenvalues })
}

/// Shrink an invariant set by iterating the interval hull of
/// `A_K·Ω ⊕ W` in modal coordinates. Each iterate is intersected with the
/// previous one, so radii never grow; stops when the largest change is
/// below 1e-9 or after `iters` steps.
pub fn refine_rpi(a_k: &DMatrix<f64>, b_w: &DMatrix<f64>, w_bar: &DVector<f64>, omega0: &RpiSet, iters: usize) -> Result<RpiSet, RobustError> {
    let n = omega0.dim();
    if a_k.nrows() != n || b_w.nrows() != n {
        return Err(RobustError::Dimension("refine_rpi".into()));
    }
    let w_modal = (&omega0.v_inv * b_w).abs() * w_bar;
    // Mode-to-mode gain of A_K in the basis of omega0 (diagonal up to rounding).
    let gain = (&omega0.v_inv * a_k * &omega0.v).abs();
    let mut r = omega0.radius.clone();
    for _ in 0..iters {
        let next = (&gain * &r + &w_modal).zip_map(&r, f64::min);
        let change = (&r - &next).amax();
        r = next;
        if change < 1e-9 {
            break;
        }
    }
    let base = DVector::from_fn(n, |i, _| w_modal[i] / (1.0 - omega0.eigenvalues[i].abs()));
    let theta = (&r - base).map(|t| t.max(0.0));
    let out = RpiSet { v: omega0.v.clone(), v_inv: omega0.v_inv.clone(), radius: r, theta, eigenvalues: omega0.eigenvalues.clone() };
    Ok(if invariance_excess(a_k, b_w, w_bar, &out) <= CERTIFICATE_TOL { out } else { omega0.clone() })
}

/// Exact invariance margin for the modal-box representation:
/// `max_i ((|V⁻¹A_K V|·r + |V⁻¹B_w|·w̄)_i − r_i)`. Non-positive means
/// invariant.
pub fn invariance_excess(a_k: &DMatrix<f64>, b_w: &DMatrix<f64>, w_bar: &DVector<f64>, omega: &RpiSet) -> f64 {
    let gain = (&omega.v_inv * a_k * &omega.v).abs();
    let image = gain * &omega.radius + (&omega.v_inv * b_w).abs() * w_bar;
    (image - &omega.radius).max()
}

/// Outcome of the sampled invariance certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub checks: usize,
    pub violations: usize,
    /// Largest `|V⁻¹(A_K x + B_w w)| − r` seen.
    pub worst_excess: f64,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check `A_K x + B_w w ∈ Ω` for every vertex `w` of `W` and for
/// `samples` random boundary points `x` of Ω plus every modal-box vertex
/// (when there are at most 2¹² of them).
pub fn certify(a_k: &DMatrix<f64>, b_w: &DMatrix<f64>, w_bar: &DVector<f64>, omega: &RpiSet, samples: usize, seed: u64) -> Certificate {
    let n = omega.dim();
    let nz: Vec<usize> = (0..w_bar.len()).filter(|&i| w_bar[i] > 0.0).collect();
    let w_vertices: Vec<DVector<f64>> = (0..1usize << nz.len())
        .map(|mask| {
            let mut w = DVector::zeros(w_bar.len());
            for (bit, &i) in nz.iter().enumerate() {
                w[i] = if mask >> bit & 1 == 1 { w_bar[i] } else { -w_bar[i] };
            }
            b_w * w
        })
        .collect();
    let mut cert = Certificate { checks: 0, violations: 0, worst_excess: f64::NEG_INFINITY };
    let check = |x: &DVector<f64>, cert: &mut Certificate| {
        let ax = a_k * x;
        for w in &w_vertices {
            let e = omega.excess(&(&ax + w));
            cert.checks += 1;
            cert.worst_excess = cert.worst_excess.max(e);
            if e > CERTIFICATE_TOL {
                cert.violations += 1;
            }
        }
    };
    if n <= 12 {
        for mask in 0..1usize << n {
            let xi = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { omega.radius[i] } else { -omega.radius[i] });
            check(&omega.point(&xi), &mut cert);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut xi = DVector::from_fn(n, |i, _| omega.radius[i] * rng.gen_range(-1.0..=1.0));
        let face = rng.gen_range(0..n);
        xi[face] = if rng.gen_bool(0.5) { omega.radius[face] } else { -omega.radius[face] };
        check(&omega.point(&xi), &mut cert);
    }
    cert
}

/// Tightened state and input sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightenedSets {
    pub x: HPolytope,
    pub u: HPolytope,
}

/// `P ⊖ [I; K]Ω` for a mixed set over `(x, u)`.
pub fn tighten_constraints(p: &HPolytope, k: &DMatrix<f64>, omega: &RpiSet) -> Result<HPolytope, RobustError> {
    let n = omega.dim();
    let m = k.nrows();
    if p.dim() != n + m || k.ncols() != n {
        return Err(RobustError::Dimension(format!("P has dimension {}, expected {}", p.dim(), n + m)));
    }
    let mut map = DMatrix::zeros(n + m, n);
    map.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    map.view_mut((n, 0), (m, n)).copy_from(k);
    let out = shrink(p, &map, omega)?;
    if is_empty(&out) {
        return Err(RobustError::EmptyTightenedSet("P ⊖ [I; K]Ω".into()));
    }
    Ok(out)
}

/// `X ⊖ Ω` and `U ⊖ KΩ`, each checked for emptiness.
pub fn tighten_separated(x: &HPolytope, u: &HPolytope, k: &DMatrix<f64>, omega: &RpiSet) -> Result<TightenedSets, RobustError> {
    let n = omega.dim();
    if x.dim() != n || u.dim() != k.nrows() || k.ncols() != n {
        return Err(RobustError::Dimension("state/input sets do not match K and Ω".into()));
    }
    let xt = shrink(x, &DMatrix::identity(n, n), omega)?;
    if is_empty(&xt) {
        return Err(RobustError::EmptyTightenedSet("X ⊖ Ω".into()));
    }
    let ut = shrink(u, k, omega)?;
    if is_empty(&ut) {
        return Err(RobustError::EmptyTightenedSet("U ⊖ KΩ".into()));
    }
    Ok(TightenedSets { x: xt, u: ut })
}

/// Offsets reduced by the support of `map·Ω` along each normal.
fn shrink(p: &HPolytope, map: &DMatrix<f64>, omega: &RpiSet) -> Result<HPolytope, RobustError> {
    let mut offsets = p.offsets().clone();
    for r in 0..p.n_facets() {
        let d = map.transpose() * p.normals().row(r).transpose();
        offsets[r] -= omega.support(&d);
    }
    Ok(HPolytope::new(p.normals().clone(), offsets)?)
}

/// Emptiness test: per-axis bound comparison for axis-aligned polytopes,
/// otherwise a feasibility QP.
pub fn is_empty(p: &HPolytope) -> bool {
    if let Some((lo, hi)) = p.axis_bounds() {
        return lo.iter().zip(&hi).any(|(l, h)| l > h);
    }
    let n = p.dim();
    let mut prob = QpProblem::unconstrained(DMatrix::identity(n, n), DVector::zeros(n));
    prob.ineq_a = p.normals().clone();
    prob.ineq_b = p.offsets().clone();
    match qp::solve(&prob, &QpSettings::default()) {
        Ok(s) => s.status == QpStatus::Infeasible,
        Err(_) => true,
    }
}

/// Ratio of box volumes `vol(tight)/vol(orig)` when both are bounded boxes.
pub fn volume_ratio(tight: &HPolytope, orig: &HPolytope) -> Option<f64> {
    let t = tight.as_box()?;
    let o = orig.as_box()?;
    let vo = o.volume();
    if vo == 0.0 {
        return None;
    }
    Some(t.volume() / vo)
}
