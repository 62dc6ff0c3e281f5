use nalgebra::DMatrix;
use num_rational::BigRational;
use proptest::prelude::*;

use meixner::chaos::{check_n_meixner, operators_from_moments};
use meixner::classify::{classify, Classification3, RejectReason};
use meixner::dist3::CanonicalGamma3;
use meixner::integrability::{
    commutator, flow_invariance, identity_polynomial, identity_value, necessary_conditions,
    uniform_grid,
};
use meixner::moments::{moment_bound, multi_indices_up_to};
use meixner::tensor::euler_rotation;
use meixner::verify::ClassifiedLaw;
use meixner::{MeixnerSpec, MomentTable, MultiIndex, PivotPolicy, SymmetricCubicTensor};

fn rotation() -> impl Strategy<Value = DMatrix<f64>> {
    (0.0..std::f64::consts::TAU, 0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU)
        .prop_map(|(phi, theta, psi)| euler_rotation(phi, theta, psi))
}

fn tensor(d: usize) -> impl Strategy<Value = SymmetricCubicTensor> {
    let slots = d * (d + 1) * (d + 2) / 6;
    prop::collection::vec(-1.0..1.0f64, slots).prop_map(move |values| {
        let mut entries = Vec::new();
        let mut it = values.into_iter();
        for k in 0..d {
            for j in 0..=k {
                for i in 0..=j {
                    entries.push((i, j, k, it.next().unwrap()));
                }
            }
        }
        SymmetricCubicTensor::from_entries(d, entries).unwrap()
    })
}

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d)
}

fn permutation3() -> impl Strategy<Value = [usize; 3]> {
    prop::sample::select(vec![
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ])
}

fn permutation_matrix(p: [usize; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| if p[r] == c { 1.0 } else { 0.0 })
}

fn table(t: SymmetricCubicTensor) -> MomentTable<f64> {
    MomentTable::new(&MeixnerSpec::normalized(t)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lookup_is_permutation_invariant(t in tensor(4), i in 0..4usize, j in 0..4usize, k in 0..4usize) {
        let v = t.get(i, j, k);
        for (a, b, c) in [(i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            prop_assert_eq!(t.get(a, b, c), v);
        }
    }

    #[test]
    fn rotation_round_trip(t in tensor(3), u in rotation()) {
        let back = t.rotate(&u).unwrap().rotate(&u.transpose()).unwrap();
        prop_assert!(back.max_abs_diff(&t) <= 1e-12, "{}", back.max_abs_diff(&t));
    }

    #[test]
    fn cubic_form_is_rotation_invariant(t in tensor(3), u in rotation(), v in vector(3)) {
        let rotated = t.rotate(&u).unwrap();
        let uv = &u * nalgebra::DVector::from_column_slice(&v);
        let lhs = rotated.cubic_form(uv.as_slice()).unwrap();
        let rhs = t.cubic_form(&v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-3), "{lhs} vs {rhs}");
    }

    #[test]
    fn cubic_form_is_cubic(t in tensor(3), v in vector(3), lambda in -3.0..3.0f64) {
        let scaled: Vec<f64> = v.iter().map(|x| lambda * x).collect();
        let lhs = t.cubic_form(&scaled).unwrap();
        let rhs = lambda.powi(3) * t.cubic_form(&v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()));
    }

    #[test]
    fn third_moment_doubles_entry(t in tensor(3), i in 0..3usize, j in 0..3usize, k in 0..3usize) {
        prop_assert_eq!(t.third_moment(i, j, k).unwrap(), 2.0 * t.get(i, j, k));
    }

    #[test]
    fn low_moments_are_normalized(t in tensor(3)) {
        let mut tbl = table(t.clone());
        for r in 0..3 {
            prop_assert_eq!(tbl.moment(&MultiIndex::unit(3, r)).unwrap(), 0.0);
            for s in 0..3 {
                let idx = MultiIndex::unit(3, r).plus(s);
                prop_assert_eq!(tbl.moment(&idx).unwrap(), if r == s { 1.0 } else { 0.0 });
            }
        }
        for k in 0..3 {
            for j in 0..=k {
                for i in 0..=j {
                    let idx = MultiIndex::unit(3, i).plus(j).plus(k);
                    let m = tbl.moment(&idx).unwrap();
                    prop_assert!((m - t.third_moment(i, j, k).unwrap()).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn commutators_are_skew(t in tensor(4), i in 0..4usize, j in 0..4usize) {
        let c = commutator(&t, i, j).unwrap();
        prop_assert_eq!(&c + commutator(&t, j, i).unwrap(), DMatrix::zeros(4, 4));
        for r in 0..4 {
            prop_assert_eq!(c[(r, r)], 0.0);
        }
    }

    #[test]
    fn zeroth_identity_vanishes_symbolically(t in tensor(3), i in 0..3usize, j in 0..3usize) {
        prop_assert_eq!(identity_polynomial(&t, i, j, 0).unwrap().max_abs_coefficient(), 0.0);
    }

    #[test]
    fn symbolic_matches_numeric(t in tensor(3), p in vector(3), i in 0..3usize, j in 0..3usize, n in 1..3usize) {
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        let point: Vec<f64> = p.iter().map(|x| x / norm.max(1.0)).collect();
        let poly = identity_polynomial(&t, i, j, n).unwrap();
        let direct = identity_value(&t, i, j, n, &point).unwrap();
        prop_assert!((poly.evaluate(&point) - direct).abs() <= 1e-10);
    }

    #[test]
    fn family_passes_only_on_diagonal(a in 0.05..1.0f64, delta in prop::sample::select(vec![-0.5, -0.1, -0.01, 0.0, 0.01, 0.1, 0.5])) {
        let report = necessary_conditions(&SymmetricCubicTensor::canonical_family(a, a + delta), 1e-9);
        prop_assert_eq!(report.passed, delta == 0.0);
    }

    #[test]
    fn integrable_flows_preserve_cubic_form(a in 0.05..1.0f64, u in rotation(), xi in vector(3), i in 0..3usize, j in 0..3usize) {
        let t = SymmetricCubicTensor::canonical(a).rotate(&u).unwrap();
        let dev = flow_invariance(&t, i, j, &xi, &uniform_grid(2.0, 9)).unwrap();
        prop_assert!(dev <= 1e-10, "{dev}");
    }

    #[test]
    fn classification_round_trip(a in 0.05..=1.0f64, q in rotation()) {
        let rotated = SymmetricCubicTensor::canonical(a).rotate(&q).unwrap();
        match classify(&rotated, 1e-9).unwrap() {
            Classification3::CaseI { a: found, u } => {
                prop_assert!((found - a).abs() < 1e-8, "{found} vs {a}");
                let back = rotated.rotate(&u).unwrap();
                prop_assert!(back.max_abs_diff(&SymmetricCubicTensor::canonical(a)) < 1e-8);
            }
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn commuting_tensors_diagonalize(b in prop::array::uniform3(-1.5..1.5f64), q in rotation()) {
        let rotated = SymmetricCubicTensor::diagonal(&b).rotate(&q).unwrap();
        match classify(&rotated, 1e-9).unwrap() {
            Classification3::CaseII { u, components } => {
                let back = rotated.rotate(&u).unwrap();
                let scale = rotated.max_abs().max(f64::MIN_POSITIVE);
                for (idx, v) in back.canonical_entries() {
                    if !(idx[0] == idx[1] && idx[1] == idx[2]) {
                        prop_assert!(v.abs() < 1e-9 * scale.max(1.0), "{idx:?} {v}");
                    }
                }
                let mut found: Vec<f64> = components.iter().map(|c| c.b.abs()).collect();
                let mut expected: Vec<f64> = b.iter().map(|x| x.abs()).collect();
                found.sort_by(f64::total_cmp);
                expected.sort_by(f64::total_cmp);
                for (x, y) in found.iter().zip(&expected) {
                    prop_assert!((x - y).abs() < 1e-8);
                }
            }
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn pattern_rejections_fail_integrability(a in 0.05..1.0f64, delta in prop::sample::select(vec![-0.3, -0.05, 0.02, 0.4]), q in rotation()) {
        let t = SymmetricCubicTensor::canonical_family(a, a + delta).rotate(&q).unwrap();
        let c = classify(&t, 1e-9).unwrap();
        prop_assert!(c.is_rejected());
        if let Classification3::Rejected { reason: RejectReason::CanonicalPatternViolated, .. } = c {
            prop_assert!(!necessary_conditions(&t, 1e-9).passed);
        }
    }

    #[test]
    fn positivity_gate(a in 0.01..2.0f64) {
        let c = classify(&SymmetricCubicTensor::canonical(a), 1e-9).unwrap();
        if a <= 1.0 {
            prop_assert!(matches!(c, Classification3::CaseI { .. }), "{a}");
        } else {
            prop_assert!(matches!(c, Classification3::Rejected { reason: RejectReason::Positivity, .. }), "{a}");
        }
    }

    #[test]
    fn laplace_domain_consistency(a in 0.05..=1.0f64, s in prop::array::uniform3(-4.0..4.0f64)) {
        let g = CanonicalGamma3::new(a).unwrap();
        let expected = 1.0 - a * s[2] > a * s[0].hypot(s[1]);
        prop_assert_eq!(g.in_domain(s), expected);
        match g.laplace(s) {
            Ok(v) => prop_assert!(expected && v.is_finite() && v > 0.0),
            Err(_) => prop_assert!(!expected),
        }
    }

    #[test]
    fn laplace_axis_section_is_gamma(a in 0.05..=1.0f64, s in -5.0..0.95f64) {
        prop_assume!(1.0 - a * s > 0.0);
        let g = CanonicalGamma3::new(a).unwrap();
        let expected = (-s / a).exp() * (1.0 - a * s).powf(-1.0 / (a * a));
        let v = g.laplace([0.0, 0.0, s]).unwrap();
        prop_assert!((v - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn interior_draws_stay_in_support(a in 0.05..0.8f64, seed in any::<u64>()) {
        let g = CanonicalGamma3::new(a).unwrap();
        let draws = g.sampler().sample(2000, seed);
        prop_assert!(draws.iter().all(|&x| g.in_support(x)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pivots_agree_on_integrable_tensors(a in 0.05..=1.0f64, q in rotation()) {
        let t = SymmetricCubicTensor::canonical(a).rotate(&q).unwrap();
        let spec = MeixnerSpec::normalized(t);
        let mut tbl = MomentTable::<f64>::with_policy(&spec, PivotPolicy::AllAndCompare).unwrap();
        prop_assert!(tbl.fill_to_degree(8).is_ok());
    }

    #[test]
    fn pivots_agree_exactly_in_rational_mode(num in 1..=8i32) {
        let a = f64::from(num) / 8.0;
        let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(a));
        let mut low = MomentTable::<BigRational>::with_policy(&spec, PivotPolicy::LowestIndex).unwrap();
        let mut high = MomentTable::<BigRational>::with_policy(&spec, PivotPolicy::HighestCount).unwrap();
        for idx in multi_indices_up_to(3, 7) {
            prop_assert_eq!(low.moment(&idx).unwrap(), high.moment(&idx).unwrap());
        }
    }

    #[test]
    fn moments_respect_bound(a in 0.05..=1.0f64) {
        let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(a));
        let mut tbl = MomentTable::<f64>::new(&spec).unwrap();
        tbl.fill_to_degree(10).unwrap();
        for idx in multi_indices_up_to(3, 10) {
            prop_assert!(tbl.moment(&idx).unwrap().abs() <= moment_bound(&spec, &idx));
        }
    }

    #[test]
    fn moments_are_permutation_equivariant(a in 0.05..=1.0f64, q in rotation(), p in permutation3()) {
        let t = SymmetricCubicTensor::canonical(a).rotate(&q).unwrap();
        let relabeled = t.rotate(&permutation_matrix(p)).unwrap();
        let mut original = table(t);
        let mut permuted = table(relabeled);
        for idx in multi_indices_up_to(3, 6) {
            let c = idx.counts();
            // coordinate r of the relabeled vector is coordinate p[r] of the original
            let mut moved = vec![0u32; 3];
            for r in 0..3 {
                moved[r] = c[p[r]];
            }
            let lhs = permuted.moment(&MultiIndex::new(moved)).unwrap();
            let rhs = original.moment(&idx).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{idx}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn chaos_operators_are_consistent(a in 0.05..=1.0f64, q in rotation()) {
        let t = SymmetricCubicTensor::canonical(a).rotate(&q).unwrap();
        let spec = MeixnerSpec::normalized(t);
        let mut tbl = MomentTable::<f64>::new(&spec).unwrap();
        let n = 4;
        let (_, ops) = operators_from_moments(&mut tbl, n).unwrap();
        let cols = ops.prefix_len(n - 1);
        for i in 0..3 {
            let parts = ops
                .annihilation(i)
                .add(ops.preservation(i))
                .add(ops.creation(i))
                .add(ops.off_band(i));
            prop_assert_eq!(&parts, ops.x(i));
            prop_assert!(ops.duality_defect(i) < 1e-8, "{}", ops.duality_defect(i));
            for j in 0..3 {
                let c = ops.x(i).commutator(ops.x(j)).leading_columns(cols).max_abs();
                prop_assert!(c < 1e-10, "{c}");
            }
        }
    }

    #[test]
    fn classified_law_solves_original_system(a in 0.05..=1.0f64, q in rotation()) {
        let t = SymmetricCubicTensor::canonical(a).rotate(&q).unwrap();
        let c = classify(&t, 1e-9).unwrap();
        prop_assert!(necessary_conditions(&t, 1e-9).passed);
        let law = ClassifiedLaw::from_classification(&c).unwrap().unwrap();
        let s = [0.03, -0.02, 0.04];
        let phi = law.laplace(s).unwrap();
        let grad = law.laplace_gradient(s).unwrap();
        let mut b = DMatrix::<f64>::identity(3, 3);
        for (k, &sk) in s.iter().enumerate() {
            b -= t.slice_matrix(k).unwrap().into_inner() * sk;
        }
        let rhs = b.lu().solve(&(nalgebra::DVector::from_column_slice(&s) * phi)).unwrap();
        for k in 0..3 {
            prop_assert!((grad[k] - rhs[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejected_tensors_fail_operator_fit(a in 0.1..1.0f64, delta in prop::sample::select(vec![-0.2, 0.05, 0.5]), q in rotation()) {
        let t = SymmetricCubicTensor::canonical_family(a, a + delta).rotate(&q).unwrap();
        prop_assert!(classify(&t, 1e-9).unwrap().is_rejected());
        let mut tbl = MomentTable::<f64>::new(&MeixnerSpec::normalized(t)).unwrap();
        let fit = operators_from_moments(&mut tbl, 3).and_then(|(_, ops)| check_n_meixner(&ops, 1, 2));
        if let Ok(report) = fit {
            prop_assert!(report.max_residual >= 1e-7, "{}", report.max_residual);
        }
    }
}
