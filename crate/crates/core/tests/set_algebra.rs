mod oracles;

use linetube::polytope::{minkowski_sum, pontryagin_diff_box, pontryagin_diff_hpoly, support, Box, Contains, HPolytope};
use nalgebra::{DMatrix, DVector};
use oracles::{minkowski_by_vertices, pontryagin_by_vertices, support_by_vertices};
use proptest::prelude::*;

fn boxes(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-10.0..10.0f64, 0.0..5.0f64), dim).prop_map(|v| {
        let lo: Vec<f64> = v.iter().map(|p| p.0).collect();
        let hi: Vec<f64> = v.iter().map(|p| p.0 + p.1).collect();
        (lo, hi)
    })
}

fn pair() -> impl Strategy<Value = ((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
    (1usize..=4).prop_flat_map(|d| (boxes(d), boxes(d)))
}

proptest! {
    #[test]
    fn minkowski_matches_vertex_sums((a, b) in pair()) {
        let s = minkowski_sum(&Box::from_slices(&a.0, &a.1).unwrap(), &Box::from_slices(&b.0, &b.1).unwrap()).unwrap();
        let (lo, hi) = minkowski_by_vertices((&a.0, &a.1), (&b.0, &b.1));
        prop_assert_eq!(s.lower().as_slice(), &lo[..]);
        prop_assert_eq!(s.upper().as_slice(), &hi[..]);
    }

    #[test]
    fn pontryagin_matches_definition((x, w) in pair()) {
        let d = pontryagin_diff_box(&Box::from_slices(&x.0, &x.1).unwrap(), &Box::from_slices(&w.0, &w.1).unwrap()).unwrap();
        match pontryagin_by_vertices((&x.0, &x.1), (&w.0, &w.1)) {
            None => prop_assert!(d.is_empty()),
            Some((lo, hi)) => {
                prop_assert!(!d.is_empty());
                prop_assert_eq!(d.lower().as_slice(), &lo[..]);
                prop_assert_eq!(d.upper().as_slice(), &hi[..]);
            }
        }
    }

    #[test]
    fn difference_then_sum_stays_inside((x, w) in pair()) {
        let xb = Box::from_slices(&x.0, &x.1).unwrap();
        let wb = Box::from_slices(&w.0, &w.1).unwrap();
        let d = pontryagin_diff_box(&xb, &wb).unwrap();
        if !d.is_empty() {
            prop_assert!(minkowski_sum(&d, &wb).unwrap().is_subset_of(&xb, 1e-9));
        }
    }

    #[test]
    fn support_matches_vertices((w, d) in (1usize..=4).prop_flat_map(|n| (boxes(n), prop::collection::vec(-3.0..3.0f64, n)))) {
        let s = support(&Box::from_slices(&w.0, &w.1).unwrap(), &DVector::from_vec(d.clone())).unwrap();
        let o = support_by_vertices(&w.0, &w.1, &d);
        prop_assert!((s - o).abs() <= 1e-12 * (1.0 + o.abs()));
    }

    #[test]
    fn hpoly_difference_keeps_sums_inside(
        (rows, w, pts) in (1usize..=3).prop_flat_map(|n| (
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), 1..6),
            boxes(n),
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), 20),
        ))
    ) {
        let n = w.0.len();
        let normals = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        prop_assume!((0..rows.len()).all(|i| normals.row(i).amax() > 1e-3));
        let offsets = DVector::from_element(rows.len(), 5.0);
        let x = HPolytope::new(normals, offsets).unwrap();
        let wb = Box::from_slices(&w.0, &w.1).unwrap();
        let d = pontryagin_diff_hpoly(&x, &wb).unwrap();
        for p in &pts {
            let y = DVector::from_vec(p.clone());
            if d.contains(&y) {
                for v in wb.vertices() {
                    prop_assert!(x.max_violation(&(&y + v)) <= 1e-9);
                }
            }
        }
    }
}
