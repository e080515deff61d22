//! Randomized invariants of the linear-algebra and reduction layers.

use nalgebra::DVector;
use proptest::prelude::*;

use robinsync::linalg::{
    col_space, intersect, is_similar_to_symmetric, orth_complement, rank_of, right_kernel, Mat,
    Tolerances,
};
use robinsync::reachability::{classical_kalman, word_span};
use robinsync::syncalg::{build_cp, ker_cp_vectors, reduced_matrix, synthesize_d, GroupPartition};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn entries(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    proptest::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| Mat::from_row_slice(rows, cols, &v))
}

/// Matrix with a planted kernel: n x r factor times r x m factor, so the
/// rank never exceeds r.
fn low_rank_matrix(max: usize) -> impl Strategy<Value = Mat> {
    (1..=max, 1..=max, 1..=max)
        .prop_flat_map(|(n, m, r)| (entries(n, r.min(n).min(m)), entries(r.min(n).min(m), m)))
        .prop_map(|(l, r)| l * r)
}

fn partition_strategy(n: usize) -> impl Strategy<Value = GroupPartition> {
    proptest::collection::vec(proptest::bool::ANY, n - 1).prop_map(move |flags| {
        let mut cuts = vec![0];
        for (i, f) in flags.iter().enumerate() {
            if *f {
                cuts.push(i + 1);
            }
        }
        cuts.push(n);
        GroupPartition::new(cuts).unwrap()
    })
}

/// Matrix that maps every group indicator back into the indicator span.
fn compatible_matrix(part: &GroupPartition, raw: &Mat) -> Mat {
    let n = part.n();
    let ker = ker_cp_vectors(part);
    // keep the action on the orthogonal complement of the indicator span,
    // but confine the action on the indicators to the indicator span
    let mut span = Mat::zeros(n, part.p());
    for (j, e) in ker.indicators.iter().enumerate() {
        span.set_column(j, &(e / e.norm()));
    }
    let proj = &span * span.transpose();
    let u = orth_complement(&ker.orthonormal, &tol()).unwrap().as_matrix();
    let pu = &u * u.transpose();
    raw * &pu + &proj * raw * &proj
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_nullity_holds(m in low_rank_matrix(6)) {
        let t = tol();
        let rank = rank_of(&m, &t).unwrap();
        let ker = right_kernel(&m, &t).unwrap();
        prop_assert_eq!(rank + ker.dim(), m.ncols());
        for v in ker.vectors() {
            prop_assert!((&m * v).norm() <= 1e-8 * m.norm().max(1.0));
        }
    }

    #[test]
    fn complement_is_complementary(m in low_rank_matrix(6)) {
        let t = tol();
        let v = col_space(&m, &t).unwrap();
        let w = orth_complement(&v, &t).unwrap();
        prop_assert_eq!(v.dim() + w.dim(), v.ambient_dim());
        let both = intersect(&v, &w, &t).unwrap();
        prop_assert_eq!(both.dim(), 0);
        // mutual orthogonality
        for x in v.vectors() {
            for y in w.vectors() {
                prop_assert!(x.dot(y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn intersection_is_contained_in_both(a in low_rank_matrix(6), b in low_rank_matrix(6)) {
        let t = tol();
        let n = a.nrows().max(b.nrows());
        let grow = |m: &Mat| {
            let mut g = Mat::zeros(n, m.ncols());
            g.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
            g
        };
        let va = col_space(&grow(&a), &t).unwrap();
        let vb = col_space(&grow(&b), &t).unwrap();
        let both = intersect(&va, &vb, &t).unwrap();
        for v in both.vectors() {
            prop_assert!(va.residual_of(v) <= 1e-7);
            prop_assert!(vb.residual_of(v) <= 1e-7);
        }
    }

    #[test]
    fn conjugated_symmetric_is_detected(
        s_raw in entries(4, 4),
        p_raw in entries(4, 4),
    ) {
        let t = tol();
        let s = (&s_raw + s_raw.transpose()) * 0.5;
        // well-conditioned conjugator: identity plus a small perturbation
        let p = Mat::identity(4, 4) + p_raw * 0.2;
        prop_assume!(p.clone().try_inverse().is_some());
        let m = &p * &s * p.clone().try_inverse().unwrap();
        prop_assert!(is_similar_to_symmetric(&m, &t).unwrap());
    }

    #[test]
    fn kernel_of_rt_is_invariant_and_unobserved(
        a in entries(4, 4),
        b in entries(4, 4),
        d in entries(4, 2),
    ) {
        let t = tol();
        let report = word_span(&a, &b, &d, &t).unwrap();
        let ker = &report.ker_rt;
        prop_assert_eq!(report.rank_r + ker.dim(), 4);
        let dt = d.transpose();
        let at = a.transpose();
        let bt = b.transpose();
        let scale = a.norm().max(b.norm()).max(d.norm()).max(1.0);
        for v in ker.vectors() {
            prop_assert!((&dt * v).norm() <= 1e-8 * scale);
            prop_assert!(ker.residual_of(&(&at * v)) <= 1e-7 * scale);
            prop_assert!(ker.residual_of(&(&bt * v)) <= 1e-7 * scale);
        }
    }

    #[test]
    fn kalman_matches_word_span_when_b_is_identity(
        a in entries(4, 4),
        d in entries(4, 2),
    ) {
        let t = tol();
        let report = word_span(&a, &Mat::identity(4, 4), &d, &t).unwrap();
        let kalman = col_space(&classical_kalman(&a, &d).unwrap(), &t).unwrap();
        prop_assert_eq!(report.im_r.dim(), kalman.dim());
        if report.im_r.dim() > 0 {
            prop_assert!(report.im_r.max_principal_angle_sin(&kalman).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn reduction_commutes_with_the_group_difference_map(
        raw in entries(5, 5),
        part in partition_strategy(5),
    ) {
        prop_assume!(part.p() < 5);
        let t = tol();
        let m = compatible_matrix(&part, &raw);
        let reduced = reduced_matrix(&m, &part, &t).unwrap();
        let cp = build_cp(&part);
        let resid = (&cp * &m - &reduced * &cp).norm();
        prop_assert!(resid <= 1e-8 * m.norm().max(1.0));
    }

    #[test]
    fn reduced_enlarged_matrix_spans_match(
        raw_a in entries(4, 4),
        raw_b in entries(4, 4),
        d in entries(4, 2),
        part in partition_strategy(4),
    ) {
        prop_assume!(part.p() < 4);
        let t = tol();
        let a = compatible_matrix(&part, &raw_a);
        let b = compatible_matrix(&part, &raw_b);
        let cp = build_cp(&part);
        let a_bar = reduced_matrix(&a, &part, &t).unwrap();
        let b_bar = reduced_matrix(&b, &part, &t).unwrap();
        let d_bar = &cp * &d;
        // Im(R-bar) = C_p Im(R)
        let full = word_span(&a, &b, &d, &t).unwrap();
        let reduced = word_span(&a_bar, &b_bar, &d_bar, &t).unwrap();
        let projected = col_space(&(&cp * full.im_r.as_matrix()), &t).unwrap();
        prop_assert_eq!(reduced.im_r.dim(), projected.dim());
        if reduced.im_r.dim() > 0 {
            prop_assert!(
                reduced.im_r.max_principal_angle_sin(&projected).unwrap() <= 1e-7
            );
        }
    }

    #[test]
    fn synthesized_d_complements_the_subspace(m in low_rank_matrix(6)) {
        let t = tol();
        let v = col_space(&m, &t).unwrap();
        let n = v.ambient_dim();
        prop_assume!(v.dim() < n);
        let d = synthesize_d(&v, &t).unwrap();
        prop_assert_eq!(d.ncols(), n - v.dim());
        prop_assert_eq!(rank_of(&d, &t).unwrap(), n - v.dim());
        // columns orthonormal and orthogonal to V
        let gram = d.transpose() * &d;
        prop_assert!((gram - Mat::identity(d.ncols(), d.ncols())).norm() <= 1e-9);
        for j in 0..d.ncols() {
            let col = DVector::from_column_slice(d.column(j).as_slice());
            for x in v.vectors() {
                prop_assert!(col.dot(x).abs() <= 1e-9);
            }
        }
    }
}
