//! Axis-aligned boxes and H-polytopes with the exact set operations the
//! controller needs: Minkowski sums of boxes, Pontryagin differences and
//! support functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used by every membership test.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("box bounds cross in dimension {dim}: lower {lower} > upper {upper}")]
    CrossedBounds { dim: usize, lower: f64, upper: f64 },
    #[error("facet {row} has an all-zero normal")]
    ZeroNormal { row: usize },
    #[error("non-finite value in set description")]
    NonFinite,
}

fn check_dim(expected: usize, got: usize) -> Result<(), SetError> {
    if expected == got {
        Ok(())
    } else {
        Err(SetError::DimensionMismatch { expected, got })
    }
}

/// Closed axis-aligned box `{x : lower <= x <= upper}`.
///
/// An empty box keeps its dimension and carries `empty = true`; its bounds
/// are not meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box {
    lower: DVector<f64>,
    upper: DVector<f64>,
    empty: bool,
}

impl Box {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, SetError> {
        check_dim(lower.len(), upper.len())?;
        for i in 0..lower.len() {
            if lower[i].is_nan() || upper[i].is_nan() {
                return Err(SetError::NonFinite);
            }
            if lower[i] > upper[i] {
                return Err(SetError::CrossedBounds { dim: i, lower: lower[i], upper: upper[i] });
            }
        }
        Ok(Self { lower, upper, empty: false })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self, SetError> {
        Self::new(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
    }

    /// `{x : |x_i| <= radius_i}`.
    pub fn symmetric(radius: &DVector<f64>) -> Result<Self, SetError> {
        Self::new(-radius, radius.clone())
    }

    /// The single point `{0}` in `dim` dimensions.
    pub fn origin(dim: usize) -> Self {
        Self { lower: DVector::zeros(dim), upper: DVector::zeros(dim), empty: false }
    }

    pub fn empty(dim: usize) -> Self {
        Self { lower: DVector::zeros(dim), upper: DVector::zeros(dim), empty: true }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    /// Product of the widths; zero for empty boxes.
    pub fn volume(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.widths().iter().product()
        }
    }

    /// All `2^dim` corners, ordered by the binary expansion of the corner index.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        if self.empty {
            return Vec::new();
        }
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                DVector::from_fn(n, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
            })
            .collect()
    }

    /// Same box as an H-polytope with `2·dim` axis-aligned facets
    /// (rows `+e_i` then `-e_i`).
    pub fn to_hpolytope(&self) -> HPolytope {
        let n = self.dim();
        let mut normals = DMatrix::zeros(2 * n, n);
        let mut offsets = DVector::zeros(2 * n);
        for i in 0..n {
            normals[(2 * i, i)] = 1.0;
            offsets[2 * i] = self.upper[i];
            normals[(2 * i + 1, i)] = -1.0;
            offsets[2 * i + 1] = -self.lower[i];
        }
        HPolytope { normals, offsets }
    }

    /// Is `self ⊆ other`? Empty boxes are subsets of everything.
    pub fn is_subset_of(&self, other: &Box, tol: f64) -> bool {
        if self.empty {
            return true;
        }
        if other.empty {
            return false;
        }
        (0..self.dim()).all(|i| self.lower[i] >= other.lower[i] - tol && self.upper[i] <= other.upper[i] + tol)
    }
}

/// `{x : normals·x <= offsets}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

impl HPolytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, SetError> {
        check_dim(normals.nrows(), offsets.len())?;
        for r in 0..normals.nrows() {
            if normals.row(r).iter().all(|&v| v == 0.0) {
                return Err(SetError::ZeroNormal { row: r });
            }
        }
        if normals.iter().any(|v| !v.is_finite()) || offsets.iter().any(|v| v.is_nan()) {
            return Err(SetError::NonFinite);
        }
        Ok(Self { normals, offsets })
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn n_facets(&self) -> usize {
        self.normals.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    /// Largest facet violation `max_i (a_i·x − b_i)`; non-positive inside.
    pub fn max_violation(&self, point: &DVector<f64>) -> f64 {
        let slack = &self.normals * point - &self.offsets;
        slack.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-axis bounds if every facet normal has exactly one nonzero entry.
    /// Missing bounds are infinite; crossed bounds mean the set is empty.
    pub fn axis_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for r in 0..self.n_facets() {
            let row = self.normals.row(r);
            let mut nz = (0..n).filter(|&j| row[j] != 0.0);
            let j = nz.next()?;
            if nz.next().is_some() {
                return None;
            }
            let a = row[j];
            let b = self.offsets[r] / a.abs();
            if a > 0.0 {
                hi[j] = hi[j].min(b);
            } else {
                lo[j] = lo[j].max(-b);
            }
        }
        Some((lo, hi))
    }

    /// Rebuild a box if every facet is a signed unit vector, one upper and
    /// one lower facet per axis. Returns `None` otherwise or when a bound is
    /// missing; returns an empty box when bounds cross.
    pub fn as_box(&self) -> Option<Box> {
        let (lo, hi) = self.axis_bounds()?;
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        if (0..self.dim()).any(|j| lo[j] > hi[j]) {
            return Some(Box::empty(self.dim()));
        }
        Box::from_slices(&lo, &hi).ok()
    }
}

/// Membership test shared by boxes and polytopes.
pub trait Contains {
    fn contains(&self, point: &DVector<f64>) -> bool;
}

impl Contains for Box {
    fn contains(&self, point: &DVector<f64>) -> bool {
        if self.empty || point.len() != self.dim() {
            return false;
        }
        (0..self.dim()).all(|i| {
            point[i] >= self.lower[i] - MEMBERSHIP_TOL && point[i] <= self.upper[i] + MEMBERSHIP_TOL
        })
    }
}

impl Contains for HPolytope {
    fn contains(&self, point: &DVector<f64>) -> bool {
        point.len() == self.dim() && self.max_violation(point) <= MEMBERSHIP_TOL
    }
}

/// Free-function form of [`Contains::contains`].
pub fn contains<S: Contains>(set: &S, point: &DVector<f64>) -> bool {
    set.contains(point)
}

/// `a ⊕ b` for boxes: bounds add component-wise.
pub fn minkowski_sum(a: &Box, b: &Box) -> Result<Box, SetError> {
    check_dim(a.dim(), b.dim())?;
    if a.empty || b.empty {
        return Ok(Box::empty(a.dim()));
    }
    Ok(Box { lower: &a.lower + &b.lower, upper: &a.upper + &b.upper, empty: false })
}

/// `x ⊖ omega = {y : y ⊕ omega ⊆ x}`; flagged empty if any interval crosses.
pub fn pontryagin_diff_box(x: &Box, omega: &Box) -> Result<Box, SetError> {
    check_dim(x.dim(), omega.dim())?;
    if x.empty {
        return Ok(Box::empty(x.dim()));
    }
    if omega.empty {
        // Every point satisfies the vacuous inclusion; keep x as the
        // conservative answer for a bounded representation.
        return Ok(x.clone());
    }
    let lower = &x.lower - &omega.lower;
    let upper = &x.upper - &omega.upper;
    if (0..x.dim()).any(|i| lower[i] > upper[i]) {
        return Ok(Box::empty(x.dim()));
    }
    Ok(Box { lower, upper, empty: false })
}

/// `h_Ω(d) = max_{w ∈ Ω} d·w`.
pub fn support(omega: &Box, direction: &DVector<f64>) -> Result<f64, SetError> {
    check_dim(omega.dim(), direction.len())?;
    if omega.empty {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((0..omega.dim())
        .map(|i| {
            let d = direction[i];
            if d == 0.0 {
                0.0
            } else {
                (d * omega.lower[i]).max(d * omega.upper[i])
            }
        })
        .sum())
}

/// `x ⊖ omega` for an H-polytope: each offset loses the support of `omega`
/// along its facet normal.
pub fn pontryagin_diff_hpoly(x: &HPolytope, omega: &Box) -> Result<HPolytope, SetError> {
    check_dim(x.dim(), omega.dim())?;
    let mut offsets = x.offsets.clone();
    for r in 0..x.n_facets() {
        let d = x.normals.row(r).transpose();
        offsets[r] -= support(omega, &d)?;
    }
    Ok(HPolytope { normals: x.normals.clone(), offsets })
}
